//! Labeled training problems over raw prediction parameters, plain gradient
//! descent, and small randomized problems for gradient checks.
//!
//! The joint parameter vector is `[union tensor | instance tensor]`. The
//! union tensor holds `T` action logits, `K` target-class logits and four
//! box deltas per anchor; the instance tensor holds `T_s + T_o` action
//! logits and four (unused) deltas per anchor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::action_space::{ActionSpace, Preset};
use crate::anchors::{
    generate_anchors, label_instance_anchors, label_union_anchors, Anchor, AnchorAssignment, InstanceGroundTruth,
    PyramidConfig, PyramidLevel, Threshold, UnionGroundTruth, UnionThresholds,
};
use crate::error::{Error, LossError};
use crate::geometry::{decode_box, encode_box, iou, BBox};
use crate::losses::{
    instance_action_loss, sigmoid, total_loss, union_branch_loss, LossConfig, LossOutput, Normalization,
    PredictionTensor, UnionLoss,
};
use crate::synth::Scene;

/// Focal-loss prior logit: `-ln((1 - pi) / pi)` with `pi = 0.01`.
pub const PRIOR_LOGIT: f64 = -4.59511985013459;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LabelThresholds {
    pub union: UnionThresholds,
    pub instance: Threshold,
}

#[derive(Debug, Clone)]
pub struct TrainingProblem {
    pub anchors: Vec<Anchor>,
    pub union_gts: Vec<UnionGroundTruth>,
    pub instance_gts: Vec<InstanceGroundTruth>,
    pub union_assignment: AnchorAssignment,
    pub instance_assignment: AnchorAssignment,
    pub union_actions: usize,
    pub classes: usize,
    pub instance_slots: usize,
    pub loss: LossConfig,
}

impl TrainingProblem {
    pub fn new(
        anchors: Vec<Anchor>,
        union_gts: Vec<UnionGroundTruth>,
        instance_gts: Vec<InstanceGroundTruth>,
        space: &ActionSpace,
        classes: usize,
        thresholds: &LabelThresholds,
        loss: LossConfig,
    ) -> Self {
        let union_assignment = label_union_anchors(&anchors, &union_gts, &thresholds.union);
        let instance_assignment = label_instance_anchors(&anchors, &instance_gts, thresholds.instance);
        Self {
            anchors,
            union_gts,
            instance_gts,
            union_assignment,
            instance_assignment,
            union_actions: space.num_union(),
            classes,
            instance_slots: space.num_instance_slots(),
            loss,
        }
    }

    pub fn from_scene(
        scene: &Scene,
        pyramid: &PyramidConfig,
        thresholds: &LabelThresholds,
        loss: LossConfig,
    ) -> Result<Self, Error> {
        let space = scene.action_space()?;
        let anchors = generate_anchors(pyramid)?;
        Ok(Self::new(
            anchors,
            scene.unions.clone(),
            scene.instances.clone(),
            &space,
            scene.num_classes,
            thresholds,
            loss,
        ))
    }

    pub fn num_anchors(&self) -> usize {
        self.anchors.len()
    }

    pub fn union_param_count(&self) -> usize {
        PredictionTensor::param_count(self.num_anchors(), self.union_actions, self.classes)
    }

    pub fn instance_param_count(&self) -> usize {
        PredictionTensor::param_count(self.num_anchors(), self.instance_slots, 0)
    }

    pub fn param_count(&self) -> usize {
        self.union_param_count() + self.instance_param_count()
    }

    pub fn union_loss(&self, union_params: &[f64]) -> Result<UnionLoss, LossError> {
        let preds = PredictionTensor::from_params(
            self.num_anchors(),
            self.union_actions,
            self.classes,
            union_params.to_vec(),
        )?;
        union_branch_loss(
            &self.anchors,
            &self.union_assignment,
            &preds,
            &self.union_gts,
            &self.loss,
        )
    }

    pub fn instance_loss(&self, instance_params: &[f64]) -> Result<LossOutput, LossError> {
        let preds =
            PredictionTensor::from_params(self.num_anchors(), self.instance_slots, 0, instance_params.to_vec())?;
        instance_action_loss(
            &self.instance_assignment,
            &preds,
            &self.instance_gts,
            self.loss.normalization,
        )
    }

    /// Joint loss over the concatenated parameter vector.
    pub fn total(&self, params: &[f64]) -> Result<LossOutput, LossError> {
        if params.len() != self.param_count() {
            return Err(LossError::Shape(format!(
                "{} parameters given, {} expected",
                params.len(),
                self.param_count()
            )));
        }
        let (u, g) = params.split_at(self.union_param_count());
        Ok(total_loss(&self.union_loss(u)?.output, &self.instance_loss(g)?))
    }

    /// Union action logits at `action_logit`, everything else zero.
    pub fn initial_params(&self, action_logit: f64) -> Vec<f64> {
        let mut params = vec![0.0; self.param_count()];
        params[..self.num_anchors() * self.union_actions].fill(action_logit);
        params
    }

    /// For each union ground truth, the decoded box of its most confident
    /// positive anchor (mean sigmoid over the gt's positive actions) and its
    /// IoU with the gt union box. `None` when the gt has no positive anchor.
    pub fn decoded_unions(&self, params: &[f64]) -> Result<Vec<Option<(BBox, f64)>>, LossError> {
        let preds = PredictionTensor::from_params(
            self.num_anchors(),
            self.union_actions,
            self.classes,
            params[..self.union_param_count()].to_vec(),
        )?;
        let mut best: Vec<Option<(usize, f64)>> = vec![None; self.union_gts.len()];
        for (j, m) in self.union_assignment.positives() {
            let g = &self.union_gts[m.gt_index];
            let (sum, n) = preds
                .action_logits(j)
                .iter()
                .zip(&g.action_labels)
                .filter(|(_, &y)| y)
                .fold((0.0, 0), |(s, n), (&x, _)| (s + sigmoid(x), n + 1));
            let conf = sum / n.max(1) as f64;
            if best[m.gt_index].is_none_or(|(_, c)| conf > c) {
                best[m.gt_index] = Some((j, conf));
            }
        }
        best.iter()
            .zip(&self.union_gts)
            .map(|(b, g)| {
                b.map(|(j, _)| {
                    let decoded = decode_box(&self.anchors[j].bbox, &preds.delta(j))?;
                    Ok((decoded, iou(&decoded, &g.union_box)))
                })
                .transpose()
            })
            .collect()
    }
}

/// Runs `steps` plain gradient-descent updates. Returns the loss before each
/// update followed by the final loss, so the trajectory has `steps + 1`
/// entries.
pub fn gradient_descent(
    problem: &TrainingProblem,
    params: &mut [f64],
    steps: usize,
    lr: f64,
) -> Result<Vec<f64>, LossError> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(LossError::Shape(format!("learning rate {lr} must be > 0")));
    }
    let mut trajectory = Vec::with_capacity(steps + 1);
    for _ in 0..steps {
        let out = problem.total(params)?;
        trajectory.push(out.value);
        for (p, g) in params.iter_mut().zip(&out.gradient) {
            *p -= lr * g;
        }
    }
    trajectory.push(problem.total(params)?.value);
    Ok(trajectory)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmokeConfig {
    pub steps: usize,
    pub lr: f64,
    pub init_action_logit: f64,
}

impl Default for SmokeConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            lr: 1.0,
            init_action_logit: PRIOR_LOGIT,
        }
    }
}

/// Loss used for smoke training: the default terms with unnormalized sums,
/// so a unit learning rate is a unit step on every logit.
pub fn smoke_loss_config() -> LossConfig {
    LossConfig {
        normalization: Normalization::Sum,
        ..LossConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmokeReport {
    pub trajectory: Vec<f64>,
    pub params: Vec<f64>,
}

impl SmokeReport {
    /// `1 - final / initial`.
    pub fn reduction(&self) -> f64 {
        let first = self.trajectory[0];
        let last = *self.trajectory.last().expect("non-empty trajectory");
        1.0 - last / first
    }
}

pub fn smoke_train(problem: &TrainingProblem, cfg: &SmokeConfig) -> Result<SmokeReport, LossError> {
    let mut params = problem.initial_params(cfg.init_action_logit);
    let trajectory = gradient_descent(problem, &mut params, cfg.steps, cfg.lr)?;
    Ok(SmokeReport { trajectory, params })
}

/// Which loss a gradient check exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckedLoss {
    Union,
    Instance,
    Total,
}

/// Small randomized problem for gradient checks: a 64x64 image with two
/// pyramid levels, one or two interactions whose union boxes sit near an
/// anchor, random labels, and parameters drawn from a moderate range.
/// Box deltas stay clear of the smooth-L1 kink, where central differences
/// are not a valid reference.
pub fn random_problem(seed: u64, loss: LossConfig) -> (TrainingProblem, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = ActionSpace::from_preset(Preset::Compact).expect("compact preset");
    let classes = 4;
    let pyramid = PyramidConfig {
        image_width: 64.0,
        image_height: 64.0,
        levels: vec![
            PyramidLevel {
                stride: 16.0,
                base_size: 32.0,
            },
            PyramidLevel {
                stride: 32.0,
                base_size: 64.0,
            },
        ],
        scales: vec![1.0],
        aspect_ratios: vec![0.5, 1.0, 2.0],
    };
    let anchors = generate_anchors(&pyramid).expect("fixed pyramid");
    let object_actions: Vec<usize> = (0..space.num_union()).filter(|&a| space.requires_object(a)).collect();

    let n_pairs = rng.random_range(1..=2);
    let mut union_gts = Vec::new();
    let mut instance_gts = Vec::new();
    for k in 0..n_pairs {
        // keep pairs apart so each one owns its anchors
        let free: Vec<&Anchor> = anchors
            .iter()
            .filter(|a| {
                union_gts
                    .iter()
                    .all(|g: &UnionGroundTruth| iou(&a.bbox, &g.union_box) < 0.3)
            })
            .collect();
        let a = free[rng.random_range(0..free.len())].bbox;
        let j = |rng: &mut ChaCha8Rng| rng.random_range(-1.5..1.5);
        let u = BBox::new(
            (a.x_min() + j(&mut rng)).max(0.0),
            (a.y_min() + j(&mut rng)).max(0.0),
            (a.x_max() + j(&mut rng)).min(64.0),
            (a.y_max() + j(&mut rng)).min(64.0),
        )
        .expect("jittered anchor");
        let (w, h) = (u.width(), u.height());
        let (human, object) = if rng.random_bool(0.5) {
            (
                BBox::new(u.x_min(), u.y_min(), u.x_min() + 0.6 * w, u.y_max()),
                BBox::new(
                    u.x_min() + 0.45 * w,
                    u.y_min() + 0.25 * h,
                    u.x_max(),
                    u.y_min() + 0.75 * h,
                ),
            )
        } else {
            (
                BBox::new(u.x_max() - 0.6 * w, u.y_min(), u.x_max(), u.y_max()),
                BBox::new(
                    u.x_min(),
                    u.y_min() + 0.25 * h,
                    u.x_min() + 0.55 * w,
                    u.y_min() + 0.75 * h,
                ),
            )
        };
        let (human, object) = (human.expect("human box"), object.expect("object box"));
        let mut labels = vec![false; space.num_union()];
        labels[object_actions[rng.random_range(0..object_actions.len())]] = true;
        for &a in &object_actions {
            if rng.random_bool(0.3) {
                labels[a] = true;
            }
        }
        let target = rng.random_range(1..classes);
        let (hid, oid) = (2 * k, 2 * k + 1);
        union_gts.push(UnionGroundTruth::new(human, object, labels, target, hid, oid).expect("labeled pair"));
        for (id, bbox, class) in [(hid, human, 0), (oid, object, target)] {
            instance_gts.push(InstanceGroundTruth {
                bbox,
                class,
                action_labels: (0..space.num_instance_slots()).map(|_| rng.random_bool(0.3)).collect(),
                instance_id: id,
            });
        }
    }

    let problem = TrainingProblem::new(
        anchors,
        union_gts,
        instance_gts,
        &space,
        classes,
        &LabelThresholds::default(),
        loss,
    );

    let mut params: Vec<f64> = (0..problem.param_count())
        .map(|_| rng.random_range(-2.0..2.0))
        .collect();
    let n = problem.num_anchors();
    let delta_base = n * (problem.union_actions + problem.classes);
    for (j, m) in problem.union_assignment.positives() {
        let target = encode_box(&problem.anchors[j].bbox, &problem.union_gts[m.gt_index].union_box).to_array();
        for (c, t) in target.iter().enumerate() {
            let mag = if rng.random_bool(0.5) {
                rng.random_range(0.05..0.9)
            } else {
                rng.random_range(1.1..2.0)
            };
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            params[delta_base + 4 * j + c] = t + sign * mag * problem.loss.smooth_l1_beta;
        }
    }
    (problem, params)
}

/// The loss function a gradient check differentiates.
pub fn checked_loss<'a>(
    problem: &'a TrainingProblem,
    which: CheckedLoss,
) -> impl Fn(&[f64]) -> Result<LossOutput, LossError> + 'a {
    move |params: &[f64]| match which {
        CheckedLoss::Union => Ok(problem.union_loss(params)?.output),
        CheckedLoss::Instance => problem.instance_loss(params),
        CheckedLoss::Total => problem.total(params),
    }
}

/// Parameters matching `which`, cut from the joint vector.
pub fn checked_params(problem: &TrainingProblem, params: &[f64], which: CheckedLoss) -> Vec<f64> {
    let split = problem.union_param_count();
    match which {
        CheckedLoss::Union => params[..split].to_vec(),
        CheckedLoss::Instance => params[split..].to_vec(),
        CheckedLoss::Total => params.to_vec(),
    }
}
