//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::LossError;
use crate::losses::LossOutput;

pub const DEFAULT_EPS: f64 = 1e-6;
pub const MIN_SAMPLED_COORDS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdOptions {
    pub eps: f64,
    /// Coordinates checked when the parameter vector is longer than this;
    /// shorter vectors are checked in full. Values below
    /// [`MIN_SAMPLED_COORDS`] are raised to it.
    pub max_coords: usize,
    pub seed: u64,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS,
            max_coords: MIN_SAMPLED_COORDS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdReport {
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub analytic: f64,
    pub numeric: f64,
    pub coords_checked: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Compares the gradient `loss_fn` reports at `params` against central
/// differences of its value.
pub fn finite_difference_check<F>(mut loss_fn: F, params: &[f64], opts: &FdOptions) -> Result<FdReport, LossError>
where
    F: FnMut(&[f64]) -> Result<LossOutput, LossError>,
{
    if !(opts.eps > 0.0 && opts.eps.is_finite()) {
        return Err(LossError::Shape(format!("eps {} must be > 0", opts.eps)));
    }
    let base = loss_fn(params)?;
    if !base.value.is_finite() {
        return Err(LossError::NonFinite("base point".into()));
    }
    if base.gradient.len() != params.len() {
        return Err(LossError::Shape(format!(
            "gradient has {} entries for {} parameters",
            base.gradient.len(),
            params.len()
        )));
    }

    let budget = opts.max_coords.max(MIN_SAMPLED_COORDS);
    let mut coords: Vec<usize> = if params.len() <= budget {
        (0..params.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        sample(&mut rng, params.len(), budget).into_vec()
    };
    coords.sort_unstable();

    let mut work = params.to_vec();
    let mut report = FdReport {
        max_rel_error: 0.0,
        worst_index: None,
        analytic: 0.0,
        numeric: 0.0,
        coords_checked: coords.len(),
    };
    for &i in &coords {
        let x = params[i];
        let (xp, xm) = (x + opts.eps, x - opts.eps);
        work[i] = xp;
        let fp = loss_fn(&work)?.value;
        work[i] = xm;
        let fm = loss_fn(&work)?.value;
        work[i] = x;
        if !(fp.is_finite() && fm.is_finite()) {
            return Err(LossError::NonFinite(format!("coordinate {i}")));
        }
        // divide by the representable step, not 2 * eps
        let numeric = (fp - fm) / (xp - xm);
        let analytic = base.gradient[i];
        let err = relative_error(analytic, numeric);
        if report.worst_index.is_none() || err > report.max_rel_error {
            report = FdReport {
                max_rel_error: err,
                worst_index: Some(i),
                analytic,
                numeric,
                coords_checked: coords.len(),
            };
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(p: &[f64]) -> Result<LossOutput, LossError> {
        let value = p.iter().map(|x| x * x).sum();
        let gradient = p.iter().map(|x| 2.0 * x).collect();
        Ok(LossOutput { value, gradient })
    }

    #[test]
    fn quadratic_is_exact() {
        let params = [0.4, 0.45, -0.42, 0.47];
        let r = finite_difference_check(quadratic, &params, &FdOptions::default()).unwrap();
        assert_eq!(r.coords_checked, 4);
        assert!(r.max_rel_error < 1e-10, "{r:?}");
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        let params: Vec<f64> = (0..10).map(|i| 1.0 + i as f64).collect();
        let corrupt = |p: &[f64]| {
            let mut out = quadratic(p)?;
            out.gradient[7] += 1.0;
            Ok(out)
        };
        let r = finite_difference_check(corrupt, &params, &FdOptions::default()).unwrap();
        assert!(r.max_rel_error > 1e-2);
        assert_eq!(r.worst_index, Some(7));
    }

    #[test]
    fn samples_at_least_two_hundred_coordinates() {
        let params = vec![0.5; 1000];
        let opts = FdOptions {
            max_coords: 10,
            ..Default::default()
        };
        let r = finite_difference_check(quadratic, &params, &opts).unwrap();
        assert_eq!(r.coords_checked, MIN_SAMPLED_COORDS);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let bad = |_: &[f64]| {
            Ok(LossOutput {
                value: f64::NAN,
                gradient: vec![0.0],
            })
        };
        assert!(finite_difference_check(bad, &[1.0], &FdOptions::default()).is_err());
        let opts = FdOptions {
            eps: 0.0,
            ..Default::default()
        };
        assert!(finite_difference_check(quadratic, &[1.0], &opts).is_err());
    }
}
