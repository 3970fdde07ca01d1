//! Brute-force reference implementations used to cross-check the fast
//! paths. Only `BBox` is shared with the code under test; overlap
//! arithmetic is restated inline with the same operation order so results
//! agree bit for bit.

use std::cmp::Ordering;

use crate::action_space::ActionSpace;
use crate::anchors::{Anchor, AnchorAssignment, AnchorMatch, InstanceGroundTruth, UnionGroundTruth};
use crate::fusion::{FusionOptions, HoiTriplet, InstanceDetection, MatchMode, UnionDetection};
use crate::geometry::BBox;

fn box_area(b: &BBox) -> f64 {
    (b.x_max() - b.x_min()) * (b.y_max() - b.y_min())
}

fn overlap(a: &BBox, b: &BBox) -> f64 {
    let w = a.x_max().min(b.x_max()) - a.x_min().max(b.x_min());
    let h = a.y_max().min(b.y_max()) - a.y_min().max(b.y_min());
    if w > 0.0 && h > 0.0 {
        w * h
    } else {
        0.0
    }
}

fn ratio(a: &BBox, b: &BBox) -> f64 {
    let i = overlap(a, b);
    if i == 0.0 {
        0.0
    } else {
        i / (box_area(a) + box_area(b) - i)
    }
}

fn hull(a: &BBox, b: &BBox) -> BBox {
    BBox::new(
        a.x_min().min(b.x_min()),
        a.y_min().min(b.y_min()),
        a.x_max().max(b.x_max()),
        a.y_max().max(b.y_max()),
    )
    .expect("hull of valid boxes")
}

/// Full anchor x ground-truth table, then a per-anchor pick.
pub fn oracle_label_union(
    anchors: &[Anchor],
    gts: &[UnionGroundTruth],
    t_u: f64,
    t_h: f64,
    t_o: f64,
) -> AnchorAssignment {
    let table: Vec<Vec<Option<f64>>> = anchors
        .iter()
        .map(|a| {
            gts.iter()
                .map(|g| {
                    let u = ratio(&a.bbox, &g.union_box);
                    let h = overlap(&a.bbox, &g.human_box) / box_area(&g.human_box);
                    let o = overlap(&a.bbox, &g.object_box) / box_area(&g.object_box);
                    (u > t_u && h > t_h && o > t_o).then_some(u)
                })
                .collect()
        })
        .collect();
    pick(table)
}

pub fn oracle_label_instance(anchors: &[Anchor], gts: &[InstanceGroundTruth], t: f64) -> AnchorAssignment {
    let table = anchors
        .iter()
        .map(|a| {
            gts.iter()
                .map(|g| {
                    let v = ratio(&a.bbox, &g.bbox);
                    (v > t).then_some(v)
                })
                .collect()
        })
        .collect();
    pick(table)
}

fn pick(table: Vec<Vec<Option<f64>>>) -> AnchorAssignment {
    let matches = table
        .into_iter()
        .map(|row| {
            let best = row.iter().filter_map(|v| *v).fold(f64::NEG_INFINITY, f64::max);
            row.iter()
                .position(|v| *v == Some(best))
                .map(|gt_index| AnchorMatch { gt_index, iou: best })
        })
        .collect();
    AnchorAssignment { matches }
}

/// Repeatedly takes the best remaining candidate and removes everything it
/// overlaps by more than `t`. `better(a, b)` says whether `a` ranks above
/// `b`; `same_group` restricts suppression.
fn select<F, G>(boxes: &[BBox], t: f64, better: F, same_group: G) -> Vec<usize>
where
    F: Fn(usize, usize) -> bool,
    G: Fn(usize, usize) -> bool,
{
    let mut alive: Vec<usize> = (0..boxes.len()).collect();
    let mut kept = Vec::new();
    while !alive.is_empty() {
        let mut top = alive[0];
        for &i in &alive[1..] {
            if better(i, top) {
                top = i;
            }
        }
        kept.push(top);
        alive.retain(|&i| i != top && !(same_group(i, top) && ratio(&boxes[top], &boxes[i]) > t));
    }
    kept
}

fn top_class(scores: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, &s) in scores.iter().enumerate() {
        if s > best.1 {
            best = (k, s);
        }
    }
    best
}

/// Survivors of class-wise suppression, ordered by score then id.
pub fn oracle_nms_instance(dets: &[InstanceDetection], t: f64) -> Vec<InstanceDetection> {
    let boxes: Vec<BBox> = dets.iter().map(|d| d.bbox).collect();
    let top: Vec<(usize, f64)> = dets.iter().map(|d| top_class(&d.class_scores)).collect();
    let better = |a: usize, b: usize| {
        top[a].1 > top[b].1 || (top[a].1 == top[b].1 && dets[a].detection_id < dets[b].detection_id)
    };
    let mut kept = select(&boxes, t, better, |a, b| top[a].0 == top[b].0);
    kept.sort_by(|&a, &b| {
        if better(a, b) {
            Ordering::Less
        } else if better(b, a) {
            Ordering::Greater
        } else {
            Ordering::Equal
        }
    });
    kept.into_iter().map(|i| dets[i].clone()).collect()
}

/// Survivors of class-agnostic suppression keyed by the top action score.
pub fn oracle_nms_union(dets: &[UnionDetection], t: f64) -> Vec<UnionDetection> {
    let boxes: Vec<BBox> = dets.iter().map(|d| d.bbox).collect();
    let key: Vec<f64> = dets
        .iter()
        .map(|d| d.action_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let better = |a: usize, b: usize| {
        if key[a] != key[b] {
            return key[a] > key[b];
        }
        let (ca, cb) = (boxes[a].corners(), boxes[b].corners());
        for k in 0..4 {
            if ca[k] != cb[k] {
                return ca[k] < cb[k];
            }
        }
        dets[a].detection_id < dets[b].detection_id
    };
    select(&boxes, t, better, |_, _| true)
        .into_iter()
        .map(|i| dets[i].clone())
        .collect()
}

fn match_value(mode: MatchMode, h: &BBox, o: &BBox, u: &BBox) -> f64 {
    let pair = hull(h, o);
    let plain = ratio(&pair, u);
    match mode {
        MatchMode::PlainIou => plain,
        MatchMode::UnionInstance => {
            let ih = overlap(u, h) / box_area(h);
            let io = overlap(u, o) / box_area(o);
            0.5 * plain + 0.5 * (ih * io).sqrt()
        }
    }
}

/// Exhaustive triplet scoring: for every human, object and action the
/// whole union list is rescanned. Output is sorted by score descending,
/// then human id, object id (none first) and action.
pub fn oracle_triplets(
    humans: &[InstanceDetection],
    objects: &[InstanceDetection],
    unions: &[UnionDetection],
    space: &ActionSpace,
    opts: &FusionOptions,
) -> Vec<HoiTriplet> {
    let (mode, use_union, person_class, threshold) =
        (opts.match_mode, opts.use_union, opts.person_class, opts.score_threshold);
    let mut out = Vec::new();
    for h in humans {
        let s_h = h.class_scores.get(person_class).copied().unwrap_or(0.0);
        for a in 0..space.num_union() {
            if space.is_excluded(a) {
                continue;
            }
            let m = space.action(a).expect("in range");
            let human_part = s_h * h.action_scores[m.subject];
            let Some(obj_slot) = m.object.map(|o| space.num_subject() + o) else {
                if human_part > threshold {
                    out.push(HoiTriplet {
                        human_id: h.detection_id,
                        object_id: None,
                        action: a,
                        score: human_part,
                        human_box: h.bbox,
                        object_box: None,
                        union_box: None,
                        mu: None,
                    });
                }
                continue;
            };
            for o in objects {
                if o.detection_id == h.detection_id {
                    continue;
                }
                let s_o = top_class(&o.class_scores).1;
                let base = human_part + s_o * o.action_scores[obj_slot];
                let mut best: Option<(usize, f64)> = None;
                if use_union {
                    for (i, u) in unions.iter().enumerate() {
                        let v = match_value(mode, &h.bbox, &o.bbox, &u.bbox);
                        if v > 0.0 && best.is_none_or(|(_, b)| v > b) {
                            best = Some((i, v));
                        }
                    }
                }
                let score = match best {
                    Some((i, mu)) => base * (1.0 + mu * unions[i].action_scores[a]),
                    None => base,
                };
                if score > threshold {
                    out.push(HoiTriplet {
                        human_id: h.detection_id,
                        object_id: Some(o.detection_id),
                        action: a,
                        score,
                        human_box: h.bbox,
                        object_box: Some(o.bbox),
                        union_box: best.map(|(i, _)| unions[i].bbox),
                        mu: best.map(|(_, mu)| mu),
                    });
                }
            }
        }
    }
    out.sort_by(|x, y| {
        y.score
            .partial_cmp(&x.score)
            .expect("finite scores")
            .then(x.human_id.cmp(&y.human_id))
            .then(x.object_id.cmp(&y.object_id))
            .then(x.action.cmp(&y.action))
    });
    out
}

/// Checks that two triplet lists hold the same triplets in the same order,
/// with scores and matching values within `tol`.
pub fn compare_triplets(got: &[HoiTriplet], want: &[HoiTriplet], tol: f64) -> Result<(), String> {
    if got.len() != want.len() {
        return Err(format!("{} triplets, oracle has {}", got.len(), want.len()));
    }
    for (k, (g, w)) in got.iter().zip(want).enumerate() {
        let same_key = g.human_id == w.human_id && g.object_id == w.object_id && g.action == w.action;
        let close = |a: f64, b: f64| (a - b).abs() <= tol;
        let mu_ok = match (g.mu, w.mu) {
            (None, None) => true,
            (Some(a), Some(b)) => close(a, b),
            _ => false,
        };
        if !same_key || !close(g.score, w.score) || !mu_ok || g.union_box != w.union_box {
            return Err(format!("rank {k}: {g:?} differs from oracle {w:?}"));
        }
    }
    Ok(())
}
