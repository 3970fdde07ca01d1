//! Inference-time association of union detections with (human, object)
//! pairs, and HOI triplet scoring.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::action_space::ActionSpace;
use crate::error::FusionError;
use crate::geometry::{enclose, inclusion_ratio, iou, BBox};

/// Class index treated as "person" unless configured otherwise.
pub const DEFAULT_PERSON_CLASS: usize = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceDetection {
    pub detection_id: usize,
    pub bbox: BBox,
    /// Post-sigmoid class scores, length `K`.
    pub class_scores: Vec<f64>,
    /// Post-sigmoid action scores, length `T_s + T_o`.
    pub action_scores: Vec<f64>,
}

impl InstanceDetection {
    /// Highest-scoring class, lowest index on ties.
    pub fn top_class(&self) -> (usize, f64) {
        self.class_scores
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |best, (k, s)| {
                    if s > best.1 {
                        (k, s)
                    } else {
                        best
                    }
                },
            )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnionDetection {
    pub detection_id: usize,
    pub bbox: BBox,
    /// Post-sigmoid union action scores, length `T`.
    pub action_scores: Vec<f64>,
    /// Carried through but not used for scoring.
    pub target_class_scores: Vec<f64>,
}

impl UnionDetection {
    /// Scalar ranking key used by suppression: the largest action score.
    pub fn key(&self) -> f64 {
        self.action_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoiTriplet {
    pub human_id: usize,
    pub object_id: Option<usize>,
    pub action: usize,
    pub score: f64,
    pub human_box: BBox,
    pub object_box: Option<BBox>,
    pub union_box: Option<BBox>,
    /// Matching score of the union that contributed, if any.
    pub mu: Option<f64>,
}

/// How a union detection is associated with a (human, object) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Enclosing-box IoU blended with the geometric mean of the two
    /// inclusion ratios.
    #[default]
    UnionInstance,
    /// Plain IoU between the enclosing box and the union.
    PlainIou,
}

/// `IoU(enclose(h, o), u) / 2 + sqrt(incl(u, h) * incl(u, o)) / 2`, in
/// `[0, 1]` and equal to 1 exactly when `u` is the enclosing box of the
/// pair.
pub fn matching_score(human: &BBox, object: &BBox, union: &BBox) -> f64 {
    let pair = enclose(human, object);
    0.5 * iou(&pair, union) + 0.5 * (inclusion_ratio(union, human) * inclusion_ratio(union, object)).sqrt()
}

pub fn pair_score(mode: MatchMode, human: &BBox, object: &BBox, union: &BBox) -> f64 {
    match mode {
        MatchMode::UnionInstance => matching_score(human, object, union),
        MatchMode::PlainIou => iou(&enclose(human, object), union),
    }
}

/// Index and score of the union that best matches the pair; the lowest
/// index wins ties. Selection depends on geometry only.
pub fn best_union(human: &BBox, object: &BBox, unions: &[UnionDetection], mode: MatchMode) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, u) in unions.iter().enumerate() {
        let s = pair_score(mode, human, object, &u.bbox);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best
}

fn check_len(got: usize, expected: usize) -> Result<(), FusionError> {
    if got == expected {
        Ok(())
    } else {
        Err(FusionError::ScoreLength { got, expected })
    }
}

/// HOI score of one triplet.
///
/// * action without a target object: `s_h * s_h^a`
/// * no union matched: `s_h * s_h^a + s_o * s_o^a`
/// * otherwise: `(s_h * s_h^a + s_o * s_o^a) * (1 + mu * s_u^a)`
///
/// `s_h` is the human's person-class score and `s_o` the object's top class
/// score; action scores are read through the action space mapping.
pub fn hoi_score(
    human: &InstanceDetection,
    object: Option<&InstanceDetection>,
    union: Option<(&UnionDetection, f64)>,
    action: usize,
    space: &ActionSpace,
    person_class: usize,
) -> Result<f64, FusionError> {
    let mapping = space.action(action).ok_or(FusionError::ActionOutOfRange {
        index: action,
        len: space.num_union(),
    })?;
    check_len(human.action_scores.len(), space.num_instance_slots())?;
    let s_h = human.class_scores.get(person_class).copied().unwrap_or(0.0);
    let human_term = s_h * human.action_scores[mapping.subject];
    let Some(object_slot) = space.object_slot(action) else {
        return Ok(human_term);
    };
    let object = object.ok_or(FusionError::MissingObject(action))?;
    check_len(object.action_scores.len(), space.num_instance_slots())?;
    let (_, s_o) = object.top_class();
    let base = human_term + s_o * object.action_scores[object_slot];
    match union {
        Some((u, mu)) => {
            check_len(u.action_scores.len(), space.num_union())?;
            Ok(base * (1.0 + mu * u.action_scores[action]))
        }
        None => Ok(base),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionOptions {
    /// Triplets must score strictly above this.
    pub score_threshold: f64,
    pub match_mode: MatchMode,
    /// When false, union detections are ignored and every pair takes the
    /// additive score.
    pub use_union: bool,
    pub person_class: usize,
}

impl Default for FusionOptions {
    fn default() -> Self {
        Self {
            score_threshold: 0.0,
            match_mode: MatchMode::UnionInstance,
            use_union: true,
            person_class: DEFAULT_PERSON_CLASS,
        }
    }
}

/// Splits instance detections by top class into humans and objects.
pub fn split_instances(
    detections: &[InstanceDetection],
    person_class: usize,
) -> (Vec<InstanceDetection>, Vec<InstanceDetection>) {
    detections
        .iter()
        .cloned()
        .partition(|d| d.top_class().0 == person_class)
}

/// Canonical output order: score descending, then human id, object id
/// (no object first) and action index ascending.
pub fn triplet_order(a: &HoiTriplet, b: &HoiTriplet) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.human_id.cmp(&b.human_id))
        .then(a.object_id.cmp(&b.object_id))
        .then(a.action.cmp(&b.action))
}

/// Scores every (human, object, action) combination and every
/// (human, no-object action) and returns the triplets above the threshold
/// in canonical order.
///
/// The best union is chosen once per pair and shared by all actions. A best
/// match of zero counts as no union.
pub fn enumerate_triplets(
    humans: &[InstanceDetection],
    objects: &[InstanceDetection],
    unions: &[UnionDetection],
    space: &ActionSpace,
    opts: &FusionOptions,
) -> Result<Vec<HoiTriplet>, FusionError> {
    for u in unions {
        check_len(u.action_scores.len(), space.num_union())?;
    }
    let with_object: Vec<usize> = (0..space.num_union())
        .filter(|&a| space.requires_object(a) && !space.is_excluded(a))
        .collect();
    let without_object: Vec<usize> = (0..space.num_union())
        .filter(|&a| !space.requires_object(a) && !space.is_excluded(a))
        .collect();

    let mut out = Vec::new();
    for h in humans {
        for &a in &without_object {
            let score = hoi_score(h, None, None, a, space, opts.person_class)?;
            if score > opts.score_threshold {
                out.push(HoiTriplet {
                    human_id: h.detection_id,
                    object_id: None,
                    action: a,
                    score,
                    human_box: h.bbox,
                    object_box: None,
                    union_box: None,
                    mu: None,
                });
            }
        }
        for o in objects {
            if o.detection_id == h.detection_id {
                continue;
            }
            let matched = if opts.use_union {
                best_union(&h.bbox, &o.bbox, unions, opts.match_mode)
                    .filter(|&(_, mu)| mu > 0.0)
                    .map(|(i, mu)| (&unions[i], mu))
            } else {
                None
            };
            for &a in &with_object {
                let score = hoi_score(h, Some(o), matched, a, space, opts.person_class)?;
                if score > opts.score_threshold {
                    out.push(HoiTriplet {
                        human_id: h.detection_id,
                        object_id: Some(o.detection_id),
                        action: a,
                        score,
                        human_box: h.bbox,
                        object_box: Some(o.bbox),
                        union_box: matched.map(|(u, _)| u.bbox),
                        mu: matched.map(|(_, mu)| mu),
                    });
                }
            }
        }
    }
    out.sort_by(triplet_order);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    fn union(id: usize, bbox: BBox, scores: Vec<f64>) -> UnionDetection {
        UnionDetection {
            detection_id: id,
            bbox,
            action_scores: scores,
            target_class_scores: vec![],
        }
    }

    fn inst(id: usize, bbox: BBox, class: usize, k: usize, actions: Vec<f64>) -> InstanceDetection {
        let mut class_scores = vec![0.0; k];
        class_scores[class] = 1.0;
        InstanceDetection {
            detection_id: id,
            bbox,
            class_scores,
            action_scores: actions,
        }
    }

    #[test]
    fn matching_score_examples() {
        let h = b(0.0, 0.0, 10.0, 10.0);
        let o = b(20.0, 0.0, 30.0, 10.0);
        assert_eq!(matching_score(&h, &o, &enclose(&h, &o)), 1.0);
        assert_eq!(matching_score(&h, &o, &b(100.0, 100.0, 110.0, 110.0)), 0.0);
        let mu = matching_score(&h, &o, &b(0.0, 0.0, 24.0, 10.0));
        let expected = 0.4 + 0.5 * 0.4f64.sqrt();
        assert!((mu - expected).abs() < 1e-15);
        assert!((mu - 0.716_23).abs() < 5e-6);
    }

    #[test]
    fn best_union_basics() {
        let h = b(0.0, 0.0, 10.0, 10.0);
        let o = b(20.0, 0.0, 30.0, 10.0);
        assert_eq!(best_union(&h, &o, &[], MatchMode::UnionInstance), None);
        let one = [union(0, b(1.0, 1.0, 5.0, 5.0), vec![0.1])];
        assert_eq!(best_union(&h, &o, &one, MatchMode::UnionInstance).unwrap().0, 0);
        let twins = [
            union(0, enclose(&h, &o), vec![0.1]),
            union(1, enclose(&h, &o), vec![0.9]),
        ];
        assert_eq!(best_union(&h, &o, &twins, MatchMode::UnionInstance).unwrap().0, 0);
    }

    #[test]
    fn matching_score_prefers_covering_union_over_high_iou() {
        // Large human, small remote object. A human-biased box gets the
        // higher plain IoU but cuts off the object.
        let h = b(100.0, 100.0, 200.0, 300.0);
        let o = b(400.0, 180.0, 420.0, 200.0);
        let biased = union(0, b(100.0, 100.0, 360.0, 300.0), vec![0.9]);
        let covering = union(1, b(60.0, 60.0, 440.0, 340.0), vec![0.9]);
        let unions = [biased, covering];
        assert_eq!(best_union(&h, &o, &unions, MatchMode::PlainIou).unwrap().0, 0);
        assert_eq!(best_union(&h, &o, &unions, MatchMode::UnionInstance).unwrap().0, 1);
    }

    #[test]
    fn hoi_score_cases() {
        let space = ActionSpace::compact();
        let k = 3;
        let slots = space.num_instance_slots();
        let mut ha = vec![0.0; slots];
        ha[0] = 0.5;
        ha[5] = 0.5;
        let human = inst(0, b(0.0, 0.0, 10.0, 10.0), 0, k, ha);
        let mut oa = vec![0.0; slots];
        oa[space.object_slot(0).unwrap()] = 0.5;
        let object = inst(1, b(20.0, 0.0, 30.0, 10.0), 2, k, oa);
        let mut us = vec![0.0; space.num_union()];
        us[0] = 1.0;
        let u = union(0, enclose(&human.bbox, &object.bbox), us);

        let full = hoi_score(&human, Some(&object), Some((&u, 1.0)), 0, &space, 0).unwrap();
        assert_eq!(full, 2.0);
        let additive = hoi_score(&human, Some(&object), None, 0, &space, 0).unwrap();
        assert_eq!(additive, 1.0);

        let mut tired = human.clone();
        tired.class_scores[0] = 0.8;
        let idle = space.index_of("idle").unwrap();
        let solo = hoi_score(&tired, None, None, idle, &space, 0).unwrap();
        assert!((solo - 0.4).abs() < 1e-15);

        assert_eq!(
            hoi_score(&human, None, None, 0, &space, 0),
            Err(FusionError::MissingObject(0))
        );
        assert!(matches!(
            hoi_score(&human, None, None, 99, &space, 0),
            Err(FusionError::ActionOutOfRange { .. })
        ));
    }

    #[test]
    fn enumerate_without_unions_or_objects_yields_no_object_actions() {
        let space = ActionSpace::compact();
        let mut ha = vec![0.3; space.num_instance_slots()];
        ha[5] = 0.9;
        let human = inst(4, b(0.0, 0.0, 10.0, 10.0), 0, 2, ha);
        let out = enumerate_triplets(&[human], &[], &[], &space, &FusionOptions::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].object_id, None);
        assert_eq!(out[0].action, space.index_of("idle").unwrap());
    }

    #[test]
    fn single_pair_exact_union() {
        let space = ActionSpace::new(
            vec![crate::action_space::ActionMapping {
                name: "hold".into(),
                subject: 0,
                object: Some(0),
            }],
            1,
            1,
        )
        .unwrap();
        let mut human = inst(0, b(0.0, 0.0, 10.0, 20.0), 0, 2, vec![0.7, 0.0]);
        human.class_scores[0] = 0.9;
        let mut object = inst(1, b(12.0, 5.0, 16.0, 9.0), 1, 2, vec![0.0, 0.6]);
        object.class_scores[1] = 0.8;
        let u = union(0, enclose(&human.bbox, &object.bbox), vec![0.5]);
        let out = enumerate_triplets(&[human], &[object], &[u], &space, &FusionOptions::default()).unwrap();
        assert_eq!(out.len(), 1);
        let expected = (0.9 * 0.7 + 0.8 * 0.6) * (1.0 + 0.5);
        assert!((out[0].score - expected).abs() < 1e-15);
        assert_eq!(out[0].mu, Some(1.0));
    }

    #[test]
    fn disjoint_union_takes_additive_fallback() {
        let space = ActionSpace::compact();
        let mut ha = vec![0.0; space.num_instance_slots()];
        ha[0] = 1.0;
        let human = inst(0, b(0.0, 0.0, 10.0, 10.0), 0, 2, ha);
        let mut oa = vec![0.0; space.num_instance_slots()];
        oa[space.object_slot(0).unwrap()] = 1.0;
        let object = inst(1, b(20.0, 0.0, 30.0, 10.0), 1, 2, oa);
        let far = union(0, b(500.0, 500.0, 510.0, 510.0), vec![1.0; space.num_union()]);
        let out = enumerate_triplets(&[human], &[object], &[far], &space, &FusionOptions::default()).unwrap();
        let t = out.iter().find(|t| t.action == 0).unwrap();
        assert_eq!(t.score, 2.0);
        assert_eq!(t.union_box, None);
    }
}
