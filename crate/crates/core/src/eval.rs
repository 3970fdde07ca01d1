//! Per-action average precision over scored triplets.
//!
//! A prediction is correct when it is in the same scene, has the same
//! action, and both its human and object boxes overlap an unmatched ground
//! truth by more than the IoU threshold (or neither has an object).
//! Predictions are matched greedily by score; AP is the area under the
//! all-point interpolated precision/recall curve.

use std::cmp::Ordering;

use serde::Serialize;

use crate::fusion::HoiTriplet;
use crate::geometry::iou;
use crate::synth::GtTriplet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ActionAp {
    pub action: usize,
    pub num_gt: usize,
    pub num_pred: usize,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// Actions with at least one ground truth, ascending.
    pub per_action: Vec<ActionAp>,
    pub mean_ap: f64,
}

impl EvalReport {
    pub fn ap(&self, action: usize) -> Option<f64> {
        self.per_action.iter().find(|a| a.action == action).map(|a| a.ap)
    }
}

/// Overlap of a prediction with a ground truth, or `None` if they do not
/// match at threshold `t`.
fn overlap(p: &HoiTriplet, g: &GtTriplet, t: f64) -> Option<f64> {
    let h = iou(&p.human_box, &g.human_box);
    if h <= t {
        return None;
    }
    match (&p.object_box, &g.object_box) {
        (None, None) => Some(h),
        (Some(po), Some(go)) => {
            let o = iou(po, go);
            (o > t).then_some(h.min(o))
        }
        _ => None,
    }
}

/// All-point interpolated AP from a ranked TP/FP list.
pub fn average_precision(hits: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(hits.len());
    for (k, &hit) in hits.iter().enumerate() {
        if hit {
            tp += 1;
        }
        points.push((tp as f64 / num_gt as f64, tp as f64 / (k + 1) as f64));
    }
    // precision envelope, right to left
    for k in (0..points.len().saturating_sub(1)).rev() {
        points[k].1 = points[k].1.max(points[k + 1].1);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (recall, precision) in points {
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

fn rank(a: &(usize, &HoiTriplet), b: &(usize, &HoiTriplet)) -> Ordering {
    b.1.score
        .total_cmp(&a.1.score)
        .then(a.0.cmp(&b.0))
        .then(a.1.human_id.cmp(&b.1.human_id))
        .then(a.1.object_id.cmp(&b.1.object_id))
}

/// Evaluates `(scene, triplet)` predictions against `(scene, gt)` pairs.
pub fn evaluate(preds: &[(usize, HoiTriplet)], gts: &[(usize, GtTriplet)], iou_threshold: f64) -> EvalReport {
    let mut actions: Vec<usize> = gts.iter().map(|(_, g)| g.action).collect();
    actions.sort_unstable();
    actions.dedup();

    let mut per_action = Vec::with_capacity(actions.len());
    for action in actions {
        let gt_idx: Vec<usize> = (0..gts.len()).filter(|&i| gts[i].1.action == action).collect();
        let mut ranked: Vec<(usize, &HoiTriplet)> = preds
            .iter()
            .filter(|(_, p)| p.action == action)
            .map(|(s, p)| (*s, p))
            .collect();
        ranked.sort_by(rank);

        let mut used = vec![false; gt_idx.len()];
        let hits: Vec<bool> = ranked
            .iter()
            .map(|(scene, p)| {
                let mut best: Option<(usize, f64)> = None;
                for (k, &gi) in gt_idx.iter().enumerate() {
                    let (gs, g) = &gts[gi];
                    if used[k] || gs != scene {
                        continue;
                    }
                    if let Some(v) = overlap(p, g, iou_threshold) {
                        if best.is_none_or(|(_, b)| v > b) {
                            best = Some((k, v));
                        }
                    }
                }
                match best {
                    Some((k, _)) => {
                        used[k] = true;
                        true
                    }
                    None => false,
                }
            })
            .collect();
        per_action.push(ActionAp {
            action,
            num_gt: gt_idx.len(),
            num_pred: ranked.len(),
            ap: average_precision(&hits, gt_idx.len()),
        });
    }
    let mean_ap = if per_action.is_empty() {
        0.0
    } else {
        per_action.iter().map(|a| a.ap).sum::<f64>() / per_action.len() as f64
    };
    EvalReport { per_action, mean_ap }
}
