//! Pyramid anchor generation and ground-truth assignment for both branches.
//!
//! Union anchors must pass three tests against a union ground truth: IoU
//! with the union box, and inclusion of both the human and the object box.
//! A plain IoU test is not enough because a box can overlap a wide union
//! region heavily while cutting off a small, remote object.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::geometry::{area, enclose, intersection_area, BBox};

/// A threshold in the open interval (0, 1). Comparisons against it are
/// strict.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Threshold(f64);

impl Threshold {
    pub const HALF: Threshold = Threshold(0.5);

    pub fn new(value: f64) -> Result<Self, ConfigError> {
        if value > 0.0 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(ConfigError::Invalid(format!("threshold {value} must lie in (0, 1)")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for Threshold {
    fn default() -> Self {
        Self::HALF
    }
}

impl TryFrom<f64> for Threshold {
    type Error = ConfigError;
    fn try_from(v: f64) -> Result<Self, ConfigError> {
        Threshold::new(v)
    }
}

impl From<Threshold> for f64 {
    fn from(t: Threshold) -> f64 {
        t.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PyramidLevel {
    pub stride: f64,
    pub base_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PyramidConfig {
    pub image_width: f64,
    pub image_height: f64,
    pub levels: Vec<PyramidLevel>,
    pub scales: Vec<f64>,
    /// Height over width.
    pub aspect_ratios: Vec<f64>,
}

impl PyramidConfig {
    /// Five levels with strides 8..128, base sizes 32..512, three octave
    /// scales and aspect ratios {0.5, 1, 2}.
    pub fn retinanet(image_width: f64, image_height: f64) -> Self {
        let levels = [(8.0, 32.0), (16.0, 64.0), (32.0, 128.0), (64.0, 256.0), (128.0, 512.0)]
            .into_iter()
            .map(|(stride, base_size)| PyramidLevel { stride, base_size })
            .collect();
        Self {
            image_width,
            image_height,
            levels,
            scales: vec![1.0, 2f64.powf(1.0 / 3.0), 2f64.powf(2.0 / 3.0)],
            aspect_ratios: vec![0.5, 1.0, 2.0],
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.image_width) || !positive(self.image_height) {
            return Err(ConfigError::Invalid("image size must be positive".into()));
        }
        if self.levels.is_empty() || self.scales.is_empty() || self.aspect_ratios.is_empty() {
            return Err(ConfigError::Invalid(
                "pyramid needs at least one level, scale and aspect ratio".into(),
            ));
        }
        if self
            .levels
            .iter()
            .any(|l| !positive(l.stride) || !positive(l.base_size))
        {
            return Err(ConfigError::Invalid("strides and base sizes must be positive".into()));
        }
        if self.levels.windows(2).any(|w| w[1].stride <= w[0].stride) {
            return Err(ConfigError::Invalid("strides must be strictly increasing".into()));
        }
        if !self.scales.iter().chain(&self.aspect_ratios).all(|&v| positive(v)) {
            return Err(ConfigError::Invalid("scales and aspect ratios must be positive".into()));
        }
        Ok(())
    }

    /// Number of anchors before clipping drops any.
    pub fn unclipped_count(&self) -> usize {
        let per_cell = self.scales.len() * self.aspect_ratios.len();
        self.levels
            .iter()
            .map(|l| {
                let cols = (self.image_width / l.stride).ceil() as usize;
                let rows = (self.image_height / l.stride).ceil() as usize;
                cols * rows * per_cell
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub bbox: BBox,
    pub level_index: usize,
    pub flat_index: usize,
}

/// Enumerates anchors level by level, row-major over grid cells, then
/// scales, then aspect ratios. Anchors are clipped to the image and those
/// left without area are dropped; `flat_index` counts survivors.
pub fn generate_anchors(cfg: &PyramidConfig) -> Result<Vec<Anchor>, ConfigError> {
    cfg.validate()?;
    let mut anchors = Vec::with_capacity(cfg.unclipped_count());
    for (level_index, level) in cfg.levels.iter().enumerate() {
        let cols = (cfg.image_width / level.stride).ceil() as usize;
        let rows = (cfg.image_height / level.stride).ceil() as usize;
        for row in 0..rows {
            let cy = (row as f64 + 0.5) * level.stride;
            for col in 0..cols {
                let cx = (col as f64 + 0.5) * level.stride;
                for &scale in &cfg.scales {
                    let size = level.base_size * scale;
                    for &ratio in &cfg.aspect_ratios {
                        let w = size / ratio.sqrt();
                        let h = size * ratio.sqrt();
                        let Ok(raw) = BBox::from_center(cx, cy, w, h) else {
                            continue;
                        };
                        if let Some(bbox) = raw.clip(cfg.image_width, cfg.image_height) {
                            anchors.push(Anchor {
                                bbox,
                                level_index,
                                flat_index: anchors.len(),
                            });
                        }
                    }
                }
            }
        }
    }
    if anchors.is_empty() {
        return Err(ConfigError::NoAnchors);
    }
    Ok(anchors)
}

/// One annotated interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct UnionGroundTruth {
    pub human_box: BBox,
    pub object_box: BBox,
    pub union_box: BBox,
    /// One flag per union action.
    pub action_labels: Vec<bool>,
    pub target_class: usize,
    pub human_id: usize,
    pub object_id: usize,
}

impl UnionGroundTruth {
    pub fn new(
        human_box: BBox,
        object_box: BBox,
        action_labels: Vec<bool>,
        target_class: usize,
        human_id: usize,
        object_id: usize,
    ) -> Result<Self, ConfigError> {
        if !action_labels.iter().any(|&a| a) {
            return Err(ConfigError::Invalid(format!(
                "interaction ({human_id}, {object_id}) has no action label"
            )));
        }
        Ok(Self {
            human_box,
            object_box,
            union_box: enclose(&human_box, &object_box),
            action_labels,
            target_class,
            human_id,
            object_id,
        })
    }
}

/// One annotated instance (human or object).
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceGroundTruth {
    pub bbox: BBox,
    pub class: usize,
    /// Subject slots followed by object slots.
    pub action_labels: Vec<bool>,
    pub instance_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorMatch {
    pub gt_index: usize,
    pub iou: f64,
}

/// Per-anchor ground-truth match for one branch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnchorAssignment {
    pub matches: Vec<Option<AnchorMatch>>,
}

impl AnchorAssignment {
    pub fn negative(num_anchors: usize) -> Self {
        Self {
            matches: vec![None; num_anchors],
        }
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn get(&self, anchor: usize) -> Option<&AnchorMatch> {
        self.matches.get(anchor).and_then(Option::as_ref)
    }

    pub fn positives(&self) -> impl Iterator<Item = (usize, &AnchorMatch)> + '_ {
        self.matches
            .iter()
            .enumerate()
            .filter_map(|(j, m)| m.as_ref().map(|m| (j, m)))
    }

    pub fn num_positive(&self) -> usize {
        self.matches.iter().filter(|m| m.is_some()).count()
    }

    /// Positive anchor count per ground truth.
    pub fn positives_per_gt(&self, num_gts: usize) -> Vec<usize> {
        let mut counts = vec![0; num_gts];
        for (_, m) in self.positives() {
            counts[m.gt_index] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct UnionThresholds {
    pub union_iou: Threshold,
    pub human_inclusion: Threshold,
    pub object_inclusion: Threshold,
}

// IoU(a, b) <= min(|a|, |b|) / max(|a|, |b|). The slack keeps the prune
// from rejecting a pair whose rounded IoU lands just above the threshold.
const PRUNE_SLACK: f64 = 1e-9;

#[inline]
fn area_ratio_rejects(anchor_area: f64, gt_area: f64, t: f64) -> bool {
    anchor_area.min(gt_area) < t * (1.0 - PRUNE_SLACK) * anchor_area.max(gt_area)
}

/// Assigns each anchor to at most one union ground truth. A pair qualifies
/// when union IoU, human inclusion and object inclusion all strictly
/// exceed their thresholds; among qualifying ground truths the largest
/// union IoU wins, then the lowest index.
pub fn label_union_anchors(
    anchors: &[Anchor],
    gts: &[UnionGroundTruth],
    thresholds: &UnionThresholds,
) -> AnchorAssignment {
    let t_u = thresholds.union_iou.get();
    let t_h = thresholds.human_inclusion.get();
    let t_o = thresholds.object_inclusion.get();
    let gt_areas: Vec<(f64, f64, f64)> = gts
        .iter()
        .map(|g| (area(&g.union_box), area(&g.human_box), area(&g.object_box)))
        .collect();

    let matches = anchors
        .iter()
        .map(|anchor| {
            let a = &anchor.bbox;
            let a_area = area(a);
            let mut best: Option<AnchorMatch> = None;
            for (i, (g, &(u_area, h_area, o_area))) in gts.iter().zip(&gt_areas).enumerate() {
                if area_ratio_rejects(a_area, u_area, t_u) {
                    continue;
                }
                let inter = intersection_area(a, &g.union_box);
                if inter == 0.0 {
                    continue;
                }
                let iou = inter / (a_area + u_area - inter);
                if iou <= t_u {
                    continue;
                }
                if intersection_area(a, &g.human_box) / h_area <= t_h {
                    continue;
                }
                if intersection_area(a, &g.object_box) / o_area <= t_o {
                    continue;
                }
                if best.is_none_or(|b| iou > b.iou) {
                    best = Some(AnchorMatch { gt_index: i, iou });
                }
            }
            best
        })
        .collect();
    AnchorAssignment { matches }
}

/// Assigns each anchor to the instance with the largest IoU above `t`,
/// ties going to the lowest index.
pub fn label_instance_anchors(anchors: &[Anchor], gts: &[InstanceGroundTruth], t: Threshold) -> AnchorAssignment {
    let t = t.get();
    let gt_areas: Vec<f64> = gts.iter().map(|g| area(&g.bbox)).collect();
    let matches = anchors
        .iter()
        .map(|anchor| {
            let a = &anchor.bbox;
            let a_area = area(a);
            let mut best: Option<AnchorMatch> = None;
            for (i, (g, &g_area)) in gts.iter().zip(&gt_areas).enumerate() {
                if area_ratio_rejects(a_area, g_area, t) {
                    continue;
                }
                let inter = intersection_area(a, &g.bbox);
                if inter == 0.0 {
                    continue;
                }
                let iou = inter / (a_area + g_area - inter);
                if iou > t && best.is_none_or(|b| iou > b.iou) {
                    best = Some(AnchorMatch { gt_index: i, iou });
                }
            }
            best
        })
        .collect();
    AnchorAssignment { matches }
}
