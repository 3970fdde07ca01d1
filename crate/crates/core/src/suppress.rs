//! Greedy non-maximum suppression for both branches.
//!
//! Instance detections are suppressed class-wise using each detection's top
//! class. Union detections are suppressed class-agnostically, ranked by their
//! largest action score, so a union region carrying several actions survives
//! as a single multi-label detection.

use std::cmp::Ordering;

use crate::anchors::Threshold;
use crate::fusion::{InstanceDetection, UnionDetection};
use crate::geometry::{area, intersection_area, BBox};

fn overlaps(a: &BBox, a_area: f64, b: &BBox, b_area: f64, t: f64) -> bool {
    let inter = intersection_area(a, b);
    inter > 0.0 && inter / (a_area + b_area - inter) > t
}

fn greedy(boxes: &[BBox], order: &[usize], t: f64) -> Vec<usize> {
    let areas: Vec<f64> = boxes.iter().map(area).collect();
    let mut kept: Vec<usize> = Vec::new();
    for &i in order {
        if kept
            .iter()
            .all(|&k| !overlaps(&boxes[k], areas[k], &boxes[i], areas[i], t))
        {
            kept.push(i);
        }
    }
    kept
}

fn corner_order(a: &BBox, b: &BBox) -> Ordering {
    a.corners()
        .iter()
        .zip(b.corners().iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Class-wise greedy NMS. Within a class, detections are visited by that
/// class score descending, then detection id ascending. Survivors are
/// returned in the same global order.
pub fn nms_instance(detections: &[InstanceDetection], iou_threshold: Threshold) -> Vec<InstanceDetection> {
    let t = iou_threshold.get();
    let mut order: Vec<usize> = (0..detections.len()).collect();
    let top: Vec<(usize, f64)> = detections.iter().map(|d| d.top_class()).collect();
    order.sort_by(|&a, &b| {
        top[b]
            .1
            .total_cmp(&top[a].1)
            .then(detections[a].detection_id.cmp(&detections[b].detection_id))
    });

    let boxes: Vec<BBox> = detections.iter().map(|d| d.bbox).collect();
    let mut classes: Vec<usize> = top.iter().map(|&(k, _)| k).collect();
    classes.sort_unstable();
    classes.dedup();

    let mut survive = vec![false; detections.len()];
    for class in classes {
        let members: Vec<usize> = order.iter().copied().filter(|&i| top[i].0 == class).collect();
        for i in greedy(&boxes, &members, t) {
            survive[i] = true;
        }
    }
    order
        .into_iter()
        .filter(|&i| survive[i])
        .map(|i| detections[i].clone())
        .collect()
}

/// Class-agnostic greedy NMS keyed by the largest action score. Ties are
/// broken by box corners, then detection id.
pub fn nms_union(unions: &[UnionDetection], iou_threshold: Threshold) -> Vec<UnionDetection> {
    let keys: Vec<f64> = unions.iter().map(UnionDetection::key).collect();
    let mut order: Vec<usize> = (0..unions.len()).collect();
    order.sort_by(|&a, &b| {
        keys[b]
            .total_cmp(&keys[a])
            .then_with(|| corner_order(&unions[a].bbox, &unions[b].bbox))
            .then(unions[a].detection_id.cmp(&unions[b].detection_id))
    });
    let boxes: Vec<BBox> = unions.iter().map(|u| u.bbox).collect();
    greedy(&boxes, &order, iou_threshold.get())
        .into_iter()
        .map(|i| unions[i].clone())
        .collect()
}
