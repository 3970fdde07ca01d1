//! Training losses for both branches, each returning its value together
//! with the analytic gradient with respect to every prediction parameter.
//!
//! Probabilities come from a sigmoid of the raw logits. Log-probabilities
//! are computed as `-softplus(∓x)`, which is finite for every finite logit.
//! Per-anchor terms are reduced sequentially in anchor order, so results are
//! bit-reproducible.

use serde::{Deserialize, Serialize};

use crate::anchors::{Anchor, AnchorAssignment, InstanceGroundTruth, UnionGroundTruth};
use crate::error::LossError;
use crate::geometry::{encode_box, BoxDelta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide every term by `max(1, #positive anchors)`.
    #[default]
    PerPositive,
    /// Plain sums.
    Sum,
}

impl Normalization {
    pub fn divisor(self, num_positive: usize) -> f64 {
        match self {
            Normalization::PerPositive => num_positive.max(1) as f64,
            Normalization::Sum => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub alpha: f64,
    pub gamma: f64,
    /// Mask the action focal term of positive anchors to positive labels.
    pub use_foreground_focal: bool,
    /// Add the target-object classification term.
    pub use_target_cls: bool,
    pub smooth_l1_beta: f64,
    pub normalization: Normalization,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            gamma: 2.0,
            use_foreground_focal: true,
            use_target_cls: true,
            smooth_l1_beta: 1.0,
            normalization: Normalization::PerPositive,
        }
    }
}

impl LossConfig {
    /// Action focal + box regression + background only.
    pub fn vanilla() -> Self {
        Self {
            use_foreground_focal: false,
            use_target_cls: false,
            ..Self::default()
        }
    }

    /// Vanilla plus the target-object classification term.
    pub fn with_target_cls() -> Self {
        Self {
            use_foreground_focal: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(LossError::Shape(format!("alpha {} not in (0, 1)", self.alpha)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(LossError::Shape(format!("gamma {} must be >= 0", self.gamma)));
        }
        if !(self.smooth_l1_beta > 0.0 && self.smooth_l1_beta.is_finite()) {
            return Err(LossError::Shape(format!(
                "smooth-L1 beta {} must be > 0",
                self.smooth_l1_beta
            )));
        }
        Ok(())
    }
}

/// Loss value and derivative for a single scalar input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarLoss {
    pub value: f64,
    pub grad: f64,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn pow_gamma(base: f64, gamma: f64) -> f64 {
    if gamma == 2.0 {
        base * base
    } else if gamma == 0.0 {
        1.0
    } else if gamma.fract() == 0.0 && gamma <= 32.0 {
        base.powi(gamma as i32)
    } else {
        base.powf(gamma)
    }
}

/// Sigmoid focal loss of one logit against a binary label.
///
/// `positive`: `-alpha (1-p)^gamma ln p`; negative:
/// `-(1-alpha) p^gamma ln(1-p)`.
pub fn focal_loss(logit: f64, positive: bool, alpha: f64, gamma: f64) -> ScalarLoss {
    let p = sigmoid(logit);
    let q = sigmoid(-logit);
    if positive {
        let neg_log_p = softplus(-logit);
        let w = alpha * pow_gamma(q, gamma);
        ScalarLoss {
            value: w * neg_log_p,
            grad: -w * (gamma * p * neg_log_p + q),
        }
    } else {
        let neg_log_q = softplus(logit);
        let w = (1.0 - alpha) * pow_gamma(p, gamma);
        ScalarLoss {
            value: w * neg_log_q,
            grad: w * (p + gamma * q * neg_log_q),
        }
    }
}

/// Sigmoid binary cross-entropy.
pub fn bce(logit: f64, positive: bool) -> ScalarLoss {
    let p = sigmoid(logit);
    if positive {
        ScalarLoss {
            value: softplus(-logit),
            grad: p - 1.0,
        }
    } else {
        ScalarLoss {
            value: softplus(logit),
            grad: p,
        }
    }
}

/// Huber-style smooth L1 on a scalar residual; gradient is with respect to
/// `pred`.
pub fn smooth_l1(pred: f64, target: f64, beta: f64) -> ScalarLoss {
    let d = pred - target;
    if d.abs() < beta {
        ScalarLoss {
            value: 0.5 * d * d / beta,
            grad: d / beta,
        }
    } else {
        ScalarLoss {
            value: d.abs() - 0.5 * beta,
            grad: d.signum(),
        }
    }
}

/// Smooth L1 summed over the four delta components.
pub fn smooth_l1_delta(pred: &BoxDelta, target: &BoxDelta, beta: f64) -> (f64, [f64; 4]) {
    let (p, t) = (pred.to_array(), target.to_array());
    let mut grad = [0.0; 4];
    let mut value = 0.0;
    for k in 0..4 {
        let s = smooth_l1(p[k], t[k], beta);
        value += s.value;
        grad[k] = s.grad;
    }
    (value, grad)
}

/// Per-anchor logits and box deltas of one branch, stored as one flat
/// parameter vector laid out as `[actions | classes | deltas]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTensor {
    num_anchors: usize,
    action_len: usize,
    class_len: usize,
    params: Vec<f64>,
}

impl PredictionTensor {
    pub fn param_count(num_anchors: usize, action_len: usize, class_len: usize) -> usize {
        num_anchors * (action_len + class_len + 4)
    }

    pub fn zeros(num_anchors: usize, action_len: usize, class_len: usize) -> Self {
        Self {
            num_anchors,
            action_len,
            class_len,
            params: vec![0.0; Self::param_count(num_anchors, action_len, class_len)],
        }
    }

    pub fn from_params(
        num_anchors: usize,
        action_len: usize,
        class_len: usize,
        params: Vec<f64>,
    ) -> Result<Self, LossError> {
        let expected = Self::param_count(num_anchors, action_len, class_len);
        if params.len() != expected {
            return Err(LossError::Shape(format!(
                "{} parameters given, {expected} expected",
                params.len()
            )));
        }
        if let Some(i) = params.iter().position(|v| !v.is_finite()) {
            return Err(LossError::NonFinite(format!("parameter {i}")));
        }
        Ok(Self {
            num_anchors,
            action_len,
            class_len,
            params,
        })
    }

    pub fn num_anchors(&self) -> usize {
        self.num_anchors
    }
    pub fn action_len(&self) -> usize {
        self.action_len
    }
    pub fn class_len(&self) -> usize {
        self.class_len
    }
    pub fn params(&self) -> &[f64] {
        &self.params
    }
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }
    pub fn into_params(self) -> Vec<f64> {
        self.params
    }

    pub fn action_offset(&self, anchor: usize) -> usize {
        anchor * self.action_len
    }

    pub fn class_offset(&self, anchor: usize) -> usize {
        self.num_anchors * self.action_len + anchor * self.class_len
    }

    pub fn delta_offset(&self, anchor: usize) -> usize {
        self.num_anchors * (self.action_len + self.class_len) + anchor * 4
    }

    pub fn action_logits(&self, anchor: usize) -> &[f64] {
        let o = self.action_offset(anchor);
        &self.params[o..o + self.action_len]
    }

    pub fn class_logits(&self, anchor: usize) -> &[f64] {
        let o = self.class_offset(anchor);
        &self.params[o..o + self.class_len]
    }

    pub fn delta(&self, anchor: usize) -> BoxDelta {
        let o = self.delta_offset(anchor);
        BoxDelta::from_array([
            self.params[o],
            self.params[o + 1],
            self.params[o + 2],
            self.params[o + 3],
        ])
    }

    pub fn fill_action_logits(&mut self, value: f64) {
        let n = self.num_anchors * self.action_len;
        self.params[..n].fill(value);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub gradient: Vec<f64>,
}

/// Sequential Neumaier-compensated sum. Loss values are reduced in anchor
/// order, then slot order, so results are deterministic; compensation keeps
/// the rounding error near one ulp of the total, which finite-difference
/// checks depend on.
#[derive(Debug, Clone, Copy, Default)]
struct Sum {
    sum: f64,
    carry: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn get(self) -> f64 {
        self.sum + self.carry
    }
}

/// Normalized contributions making up the union-branch loss.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UnionTerms {
    pub action: f64,
    pub localization: f64,
    pub target_class: f64,
    pub background: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnionLoss {
    pub output: LossOutput,
    pub terms: UnionTerms,
    pub num_positive: usize,
}

fn check_assignment(assignment: &AnchorAssignment, preds: &PredictionTensor, num_gts: usize) -> Result<(), LossError> {
    if assignment.len() != preds.num_anchors() {
        return Err(LossError::Shape(format!(
            "assignment covers {} anchors, predictions {}",
            assignment.len(),
            preds.num_anchors()
        )));
    }
    if let Some((j, m)) = assignment.positives().find(|(_, m)| m.gt_index >= num_gts) {
        return Err(LossError::Shape(format!(
            "anchor {j} matched to ground truth {} of {num_gts}",
            m.gt_index
        )));
    }
    Ok(())
}

/// Union-branch loss.
///
/// Positive anchors pay the action focal term (restricted to positive
/// labels when `use_foreground_focal`), smooth L1 on the encoded union box,
/// and BCE on the target class when `use_target_cls`. Negative anchors pay
/// the focal term against the all-zero action vector.
pub fn union_branch_loss(
    anchors: &[Anchor],
    assignment: &AnchorAssignment,
    preds: &PredictionTensor,
    gts: &[UnionGroundTruth],
    cfg: &LossConfig,
) -> Result<UnionLoss, LossError> {
    cfg.validate()?;
    check_assignment(assignment, preds, gts.len())?;
    if anchors.len() != preds.num_anchors() {
        return Err(LossError::Shape(format!(
            "{} anchors, predictions for {}",
            anchors.len(),
            preds.num_anchors()
        )));
    }
    for (i, g) in gts.iter().enumerate() {
        if g.action_labels.len() != preds.action_len() {
            return Err(LossError::Shape(format!(
                "ground truth {i} has {} action labels, predictions {}",
                g.action_labels.len(),
                preds.action_len()
            )));
        }
        if cfg.use_target_cls && g.target_class >= preds.class_len() {
            return Err(LossError::Shape(format!(
                "ground truth {i} target class {} outside {} class logits",
                g.target_class,
                preds.class_len()
            )));
        }
    }

    let num_positive = assignment.num_positive();
    let norm = cfg.normalization.divisor(num_positive);
    let (alpha, gamma) = (cfg.alpha, cfg.gamma);
    let mut grad = vec![0.0; preds.params().len()];
    let mut action = Sum::default();
    let mut localization = Sum::default();
    let mut target_class = Sum::default();
    let mut background = Sum::default();

    for (j, m) in assignment.matches.iter().enumerate() {
        let logits = preds.action_logits(j);
        let act_off = preds.action_offset(j);
        match m {
            None => {
                for (t, &x) in logits.iter().enumerate() {
                    let f = focal_loss(x, false, alpha, gamma);
                    background.add(f.value);
                    grad[act_off + t] = f.grad / norm;
                }
            }
            Some(m) => {
                let g = &gts[m.gt_index];
                for (t, (&x, &y)) in logits.iter().zip(&g.action_labels).enumerate() {
                    if cfg.use_foreground_focal && !y {
                        continue;
                    }
                    let f = focal_loss(x, y, alpha, gamma);
                    action.add(f.value);
                    grad[act_off + t] = f.grad / norm;
                }

                let target = encode_box(&anchors[j].bbox, &g.union_box);
                let (v, dg) = smooth_l1_delta(&preds.delta(j), &target, cfg.smooth_l1_beta);
                localization.add(v);
                let d_off = preds.delta_offset(j);
                for k in 0..4 {
                    grad[d_off + k] = dg[k] / norm;
                }

                if cfg.use_target_cls {
                    let c_off = preds.class_offset(j);
                    for (k, &x) in preds.class_logits(j).iter().enumerate() {
                        let b = bce(x, k == g.target_class);
                        target_class.add(b.value);
                        grad[c_off + k] = b.grad / norm;
                    }
                }
            }
        }
    }

    let terms = UnionTerms {
        action: action.get() / norm,
        localization: localization.get() / norm,
        target_class: target_class.get() / norm,
        background: background.get() / norm,
    };
    let mut total = Sum::default();
    for v in [terms.action, terms.localization, terms.target_class, terms.background] {
        total.add(v);
    }
    let value = total.get();
    if !value.is_finite() {
        return Err(LossError::NonFinite("union branch loss".into()));
    }
    Ok(UnionLoss {
        output: LossOutput { value, gradient: grad },
        terms,
        num_positive,
    })
}

/// Instance-branch action loss: BCE over every action slot of positive
/// anchors. Negative anchors, class logits and deltas contribute nothing.
pub fn instance_action_loss(
    assignment: &AnchorAssignment,
    preds: &PredictionTensor,
    gts: &[InstanceGroundTruth],
    normalization: Normalization,
) -> Result<LossOutput, LossError> {
    check_assignment(assignment, preds, gts.len())?;
    for (i, g) in gts.iter().enumerate() {
        if g.action_labels.len() != preds.action_len() {
            return Err(LossError::Shape(format!(
                "instance {i} has {} action labels, predictions {}",
                g.action_labels.len(),
                preds.action_len()
            )));
        }
    }
    let norm = normalization.divisor(assignment.num_positive());
    let mut grad = vec![0.0; preds.params().len()];
    let mut value = Sum::default();
    for (j, m) in assignment.positives() {
        let g = &gts[m.gt_index];
        let off = preds.action_offset(j);
        for (t, (&x, &y)) in preds.action_logits(j).iter().zip(&g.action_labels).enumerate() {
            let b = bce(x, y);
            value.add(b.value);
            grad[off + t] = b.grad / norm;
        }
    }
    let value = value.get() / norm;
    if !value.is_finite() {
        return Err(LossError::NonFinite("instance action loss".into()));
    }
    Ok(LossOutput { value, gradient: grad })
}

/// Joint loss over the concatenated `[union | instance]` parameter vector.
pub fn total_loss(union: &LossOutput, instance: &LossOutput) -> LossOutput {
    let mut gradient = Vec::with_capacity(union.gradient.len() + instance.gradient.len());
    gradient.extend_from_slice(&union.gradient);
    gradient.extend_from_slice(&instance.gradient);
    LossOutput {
        value: union.value + instance.value,
        gradient,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchors::AnchorMatch;
    use crate::geometry::BBox;

    const LN2: f64 = std::f64::consts::LN_2;

    fn naive_focal(x: f64, y: bool, alpha: f64, gamma: f64) -> f64 {
        let p = 1.0 / (1.0 + (-x).exp());
        if y {
            -alpha * (1.0 - p).powf(gamma) * p.ln()
        } else {
            -(1.0 - alpha) * p.powf(gamma) * (1.0 - p).ln()
        }
    }

    fn central(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn focal_at_half() {
        let f = focal_loss(0.0, true, 0.25, 2.0);
        assert!((f.value - 0.25 * 0.25 * LN2).abs() < 1e-15);
        assert!((f.value - 0.043_321_698_784_996_58).abs() < 1e-12);
    }

    #[test]
    fn focal_gamma_zero_is_scaled_bce() {
        for &x in &[-3.0, -0.2, 0.0, 1.7, 9.0] {
            for &y in &[true, false] {
                let f = focal_loss(x, y, 0.5, 0.0);
                let b = bce(x, y);
                assert!((f.value - 0.5 * b.value).abs() < 1e-15);
                assert!((f.grad - 0.5 * b.grad).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn focal_matches_naive_formula_and_derivative() {
        for i in 0..100 {
            let x = -8.0 + 16.0 * (i as f64 + 0.37) / 100.0;
            for &y in &[true, false] {
                for &gamma in &[0.0, 1.0, 2.0, 2.5] {
                    let f = focal_loss(x, y, 0.25, gamma);
                    let naive = naive_focal(x, y, 0.25, gamma);
                    assert!((f.value - naive).abs() <= 1e-12 * naive.abs().max(1e-3));
                    let n = central(|v| naive_focal(v, y, 0.25, gamma), x);
                    let rel = (f.grad - n).abs() / f.grad.abs().max(n.abs()).max(1e-12);
                    assert!(rel < 1e-6, "x={x} y={y} gamma={gamma} rel={rel}");
                }
            }
        }
    }

    #[test]
    fn focal_is_finite_at_extreme_logits() {
        for &x in &[-800.0, -40.0, 40.0, 800.0] {
            for &y in &[true, false] {
                let f = focal_loss(x, y, 0.25, 2.0);
                assert!(f.value.is_finite() && f.grad.is_finite());
                let b = bce(x, y);
                assert!(b.value.is_finite() && b.grad.is_finite());
            }
        }
    }

    #[test]
    fn bce_examples() {
        assert!((bce(0.0, true).value - LN2).abs() < 1e-15);
        assert!(bce(40.0, true).value < 1e-15);
        assert!((bce(0.3, true).grad - (sigmoid(0.3) - 1.0)).abs() < 1e-15);
        assert!((bce(0.3, false).grad - sigmoid(0.3)).abs() < 1e-15);
    }

    #[test]
    fn smooth_l1_examples() {
        assert_eq!(smooth_l1(0.5, 0.0, 1.0).value, 0.125);
        assert_eq!(smooth_l1(2.0, 0.0, 1.0).value, 1.5);
        assert_eq!(smooth_l1(2.0, 0.0, 1.0).grad, 1.0);
        let z = smooth_l1(0.3, 0.3, 1.0);
        assert_eq!((z.value, z.grad), (0.0, 0.0));
        assert_eq!(smooth_l1(-3.0, 0.0, 1.0).grad, -1.0);
    }

    #[test]
    fn losses_decrease_toward_label() {
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for i in 0..50 {
            let x = -6.0 + 0.25 * i as f64;
            let cur = (focal_loss(x, true, 0.25, 2.0).value, bce(x, true).value);
            assert!(cur.0 < prev.0 && cur.1 < prev.1);
            assert!(focal_loss(-x, false, 0.25, 2.0).value < f64::INFINITY);
            prev = cur;
        }
    }

    fn one_anchor_setup() -> (Vec<Anchor>, Vec<UnionGroundTruth>, AnchorAssignment) {
        let h = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let o = BBox::new(20.0, 0.0, 30.0, 10.0).unwrap();
        let gt = UnionGroundTruth::new(h, o, vec![true, false, true], 1, 0, 1).unwrap();
        let anchors = vec![
            Anchor {
                bbox: gt.union_box,
                level_index: 0,
                flat_index: 0,
            },
            Anchor {
                bbox: BBox::new(100.0, 100.0, 120.0, 120.0).unwrap(),
                level_index: 0,
                flat_index: 1,
            },
        ];
        let assignment = AnchorAssignment {
            matches: vec![Some(AnchorMatch { gt_index: 0, iou: 1.0 }), None],
        };
        (anchors, vec![gt], assignment)
    }

    #[test]
    fn perfect_background_has_vanishing_loss() {
        let (anchors, _, _) = one_anchor_setup();
        let mut p = PredictionTensor::zeros(2, 3, 2);
        p.fill_action_logits(-60.0);
        let loss = union_branch_loss(
            &anchors,
            &AnchorAssignment::negative(2),
            &p,
            &[],
            &LossConfig::default(),
        )
        .unwrap();
        assert!(loss.output.value < 1e-30);
    }

    #[test]
    fn saturated_positive_anchor_has_tiny_loss() {
        let (anchors, gts, assignment) = one_anchor_setup();
        let mut p = PredictionTensor::zeros(2, 3, 2);
        let labels = [true, false, true];
        for (t, &y) in labels.iter().enumerate() {
            p.params_mut()[t] = if y { 40.0 } else { -40.0 };
            p.params_mut()[3 + t] = -40.0;
        }
        let c = p.class_offset(0);
        p.params_mut()[c] = -40.0;
        p.params_mut()[c + 1] = 40.0;
        for cfg in [
            LossConfig::vanilla(),
            LossConfig::with_target_cls(),
            LossConfig::default(),
        ] {
            let loss = union_branch_loss(&anchors, &assignment, &p, &gts, &cfg).unwrap();
            assert!(loss.output.value < 1e-6, "{cfg:?} {}", loss.output.value);
        }
    }

    #[test]
    fn foreground_focal_skips_negative_labels_of_positive_anchors() {
        let (anchors, gts, assignment) = one_anchor_setup();
        let mut p = PredictionTensor::zeros(2, 3, 2);
        let base = union_branch_loss(&anchors, &assignment, &p, &gts, &LossConfig::default()).unwrap();
        p.params_mut()[1] = 3.7;
        let moved = union_branch_loss(&anchors, &assignment, &p, &gts, &LossConfig::default()).unwrap();
        assert_eq!(base.output.value, moved.output.value);
        assert_eq!(moved.output.gradient[1], 0.0);

        let cfg = LossConfig::with_target_cls();
        let p0 = PredictionTensor::zeros(2, 3, 2);
        let a = union_branch_loss(&anchors, &assignment, &p0, &gts, &cfg).unwrap();
        let b = union_branch_loss(&anchors, &assignment, &p, &gts, &cfg).unwrap();
        let expected = focal_loss(3.7, false, 0.25, 2.0).value - focal_loss(0.0, false, 0.25, 2.0).value;
        assert!(((b.output.value - a.output.value) - expected).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let (anchors, gts, assignment) = one_anchor_setup();
        let p = PredictionTensor::zeros(2, 4, 2);
        assert!(union_branch_loss(&anchors, &assignment, &p, &gts, &LossConfig::default()).is_err());
        let p = PredictionTensor::zeros(3, 3, 2);
        assert!(union_branch_loss(&anchors, &assignment, &p, &gts, &LossConfig::default()).is_err());
        let p = PredictionTensor::zeros(2, 3, 1);
        assert!(union_branch_loss(&anchors, &assignment, &p, &gts, &LossConfig::default()).is_err());
        assert!(PredictionTensor::from_params(1, 1, 0, vec![0.0; 4]).is_err());
        assert!(PredictionTensor::from_params(1, 1, 0, vec![0.0, 0.0, f64::NAN, 0.0, 0.0]).is_err());
    }

    fn instance_gt(labels: Vec<bool>) -> InstanceGroundTruth {
        InstanceGroundTruth {
            bbox: BBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
            class: 0,
            action_labels: labels,
            instance_id: 0,
        }
    }

    #[test]
    fn instance_loss_ignores_negative_anchors() {
        let mut p = PredictionTensor::zeros(3, 4, 0);
        for (i, v) in p.params_mut().iter_mut().enumerate() {
            *v = (i as f64).sin() * 5.0;
        }
        let gts = vec![instance_gt(vec![true, false, false, true])];
        let out = instance_action_loss(&AnchorAssignment::negative(3), &p, &gts, Normalization::PerPositive).unwrap();
        assert_eq!(out.value, 0.0);
        assert!(out.gradient.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn instance_loss_at_zero_logits() {
        let slots = 51;
        let p = PredictionTensor::zeros(2, slots, 0);
        let mut labels = vec![false; slots];
        labels[3] = true;
        labels[30] = true;
        let assignment = AnchorAssignment {
            matches: vec![None, Some(AnchorMatch { gt_index: 0, iou: 0.9 })],
        };
        let out = instance_action_loss(&assignment, &p, &[instance_gt(labels)], Normalization::PerPositive).unwrap();
        assert!((out.value - slots as f64 * LN2).abs() < 1e-12);
    }

    #[test]
    fn total_is_sum_and_concatenation() {
        let a = LossOutput {
            value: 1.25,
            gradient: vec![1.0, 2.0],
        };
        let b = LossOutput {
            value: 0.5,
            gradient: vec![3.0],
        };
        let t = total_loss(&a, &b);
        assert_eq!(t.value, 1.75);
        assert_eq!(t.gradient, vec![1.0, 2.0, 3.0]);
        let zero = LossOutput {
            value: 0.0,
            gradient: vec![],
        };
        assert_eq!(total_loss(&zero, &zero).value, 0.0);
    }
}
