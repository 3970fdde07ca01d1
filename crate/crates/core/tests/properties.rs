use hoi_core::action_space::{ActionSpace, Preset};
use hoi_core::anchors::{generate_anchors, label_instance_anchors, label_union_anchors, Anchor, PyramidConfig};
use hoi_core::fusion::{
    best_union, enumerate_triplets, hoi_score, matching_score, split_instances, FusionOptions, InstanceDetection,
    MatchMode, UnionDetection,
};
use hoi_core::geometry::{decode_box, enclose, encode_box, inclusion_ratio, intersection_area, iou, BBox};
use hoi_core::losses::{bce, focal_loss, smooth_l1};
use hoi_core::suppress::{nms_instance, nms_union};
use hoi_core::synth::random_detections;
use hoi_core::train::random_problem;
use hoi_core::{InstanceGroundTruth, Threshold, UnionGroundTruth, UnionThresholds};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bbox() -> impl Strategy<Value = BBox> {
    (-500.0..500.0f64, -500.0..500.0f64, 0.5..300.0f64, 0.5..300.0f64)
        .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
}

fn image_box(size: f64) -> impl Strategy<Value = BBox> {
    (0.0..size * 0.8, 0.0..size * 0.8, 8.0..size * 0.6, 8.0..size * 0.6)
        .prop_map(move |(x, y, w, h)| BBox::new(x, y, (x + w).min(size), (y + h).min(size)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn iou_is_symmetric_and_bounded(a in bbox(), b in bbox()) {
        let v = iou(&a, &b);
        prop_assert_eq!(v, iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(iou(&a, &a), 1.0);
        if v == 1.0 {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn intersection_is_at_most_the_smaller_area(a in bbox(), b in bbox()) {
        prop_assert!(intersection_area(&a, &b) <= a.area().min(b.area()));
    }

    #[test]
    fn enclosure_includes_both_boxes(a in bbox(), b in bbox()) {
        let e = enclose(&a, &b);
        prop_assert_eq!(inclusion_ratio(&e, &a), 1.0);
        prop_assert_eq!(inclusion_ratio(&e, &b), 1.0);
    }

    #[test]
    fn encode_then_decode_is_identity(anchor in bbox(), cx in -2.0..2.0f64, cy in -2.0..2.0f64,
                                      sw in -3.9..3.9f64, sh in -3.9..3.9f64) {
        let (acx, acy) = anchor.center();
        let gt = BBox::from_center(
            acx + cx * anchor.width(),
            acy + cy * anchor.height(),
            anchor.width() * sw.exp(),
            anchor.height() * sh.exp(),
        ).unwrap();
        let back = decode_box(&anchor, &encode_box(&anchor, &gt)).unwrap();
        let scale = gt.width().max(gt.height()).max(1.0);
        for (x, y) in back.corners().iter().zip(gt.corners()) {
            prop_assert!((x - y).abs() <= 1e-9 * scale.max(y.abs()), "{back:?} vs {gt:?}");
        }
    }

    #[test]
    fn matching_score_is_bounded_and_invariant(h in bbox(), o in bbox(), u in bbox(),
                                               s in 0.05..20.0f64, dx in -1e3..1e3f64, dy in -1e3..1e3f64) {
        let mu = matching_score(&h, &o, &u);
        prop_assert!((0.0..=1.0).contains(&mu));
        prop_assert!((matching_score(&h, &o, &enclose(&h, &o)) - 1.0).abs() <= 1e-12);
        let m = |b: &BBox| b.affine(s, dx, dy).unwrap();
        prop_assert!((matching_score(&m(&h), &m(&o), &m(&u)) - mu).abs() <= 1e-12);
    }

    #[test]
    fn losses_are_nonnegative_and_improve_toward_the_label(x in -30.0..30.0f64, step in 0.01..5.0f64) {
        for positive in [false, true] {
            let toward = if positive { x + step } else { x - step };
            let f = focal_loss(x, positive, 0.25, 2.0);
            prop_assert!(f.value >= 0.0);
            prop_assert!(focal_loss(toward, positive, 0.25, 2.0).value <= f.value);
            let b = bce(x, positive);
            prop_assert!(b.value >= 0.0);
            prop_assert!(bce(toward, positive).value <= b.value);
        }
        let s = smooth_l1(x, 0.0, 1.0);
        prop_assert!(s.value >= 0.0);
        prop_assert!(smooth_l1(x - x.signum() * step.min(x.abs()), 0.0, 1.0).value <= s.value);
    }
}

fn union_gt(h: BBox, o: BBox, index: usize) -> UnionGroundTruth {
    UnionGroundTruth::new(h, o, vec![true, false], 1, 2 * index, 2 * index + 1).unwrap()
}

fn anchors_128() -> Vec<Anchor> {
    generate_anchors(&PyramidConfig::retinanet(128.0, 128.0)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn union_labels_satisfy_the_rule(pairs in prop::collection::vec((image_box(128.0), image_box(128.0)), 0..4)) {
        let anchors = anchors_128();
        let gts: Vec<_> = pairs.iter().enumerate().map(|(i, &(h, o))| union_gt(h, o, i)).collect();
        let t = UnionThresholds::default();
        let qualifies = |a: &BBox, g: &UnionGroundTruth| {
            iou(a, &g.union_box) > 0.5 && inclusion_ratio(a, &g.human_box) > 0.5 && inclusion_ratio(a, &g.object_box) > 0.5
        };
        let labels = label_union_anchors(&anchors, &gts, &t);
        prop_assert_eq!(labels.len(), anchors.len());
        for (a, m) in anchors.iter().zip(&labels.matches) {
            match m {
                Some(m) => {
                    prop_assert!(qualifies(&a.bbox, &gts[m.gt_index]));
                    for g in gts.iter().filter(|g| qualifies(&a.bbox, g)) {
                        prop_assert!(iou(&a.bbox, &g.union_box) <= m.iou);
                    }
                }
                None => prop_assert!(!gts.iter().any(|g| qualifies(&a.bbox, g))),
            }
        }
    }

    #[test]
    fn union_labels_follow_gt_permutations(pairs in prop::collection::vec((image_box(128.0), image_box(128.0)), 1..4),
                                           seed in any::<u64>()) {
        let anchors = anchors_128();
        let gts: Vec<_> = pairs.iter().enumerate().map(|(i, &(h, o))| union_gt(h, o, i)).collect();
        let mut order: Vec<usize> = (0..gts.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled: Vec<_> = order.iter().map(|&i| gts[i].clone()).collect();
        let t = UnionThresholds::default();
        let a = label_union_anchors(&anchors, &gts, &t);
        let b = label_union_anchors(&anchors, &shuffled, &t);
        for (x, y) in a.matches.iter().zip(&b.matches) {
            match (x, y) {
                (None, None) => {}
                (Some(x), Some(y)) => {
                    // same winner unless two gts tie on IoU
                    prop_assert_eq!(x.iou, y.iou);
                    prop_assert!(order[y.gt_index] == x.gt_index
                        || iou(&gts[x.gt_index].union_box, &shuffled[y.gt_index].union_box) > 0.0);
                }
                _ => prop_assert!(false, "assignment changed under permutation"),
            }
        }
    }

    #[test]
    fn an_anchor_equal_to_a_union_box_is_assigned(h in image_box(128.0), o in image_box(128.0)) {
        let g = union_gt(h, o, 0);
        let anchors = vec![Anchor { bbox: g.union_box, level_index: 0, flat_index: 0 }];
        let labels = label_union_anchors(&anchors, &[g], &UnionThresholds::default());
        prop_assert!(labels.matches[0].is_some());
    }

    #[test]
    fn instance_labels_pick_the_best_overlap(boxes in prop::collection::vec(image_box(128.0), 0..5)) {
        let anchors = anchors_128();
        let gts: Vec<_> = boxes.iter().enumerate().map(|(i, &b)| InstanceGroundTruth {
            bbox: b, class: 0, action_labels: vec![true], instance_id: i,
        }).collect();
        let labels = label_instance_anchors(&anchors, &gts, Threshold::HALF);
        for (a, m) in anchors.iter().zip(&labels.matches) {
            let best = gts.iter().map(|g| iou(&a.bbox, &g.bbox)).fold(0.0, f64::max);
            match m {
                Some(m) => prop_assert_eq!(m.iou, best),
                None => prop_assert!(best <= 0.5),
            }
        }
    }

    #[test]
    fn suppression_is_idempotent_and_order_free(seed in any::<u64>(), t in 0.2..0.8f64) {
        let space = ActionSpace::from_preset(Preset::Compact).unwrap();
        let det = random_detections(seed, 10, 10, 20, &space, 4, 120.0);
        let thr = Threshold::new(t).unwrap();
        let kept = nms_instance(&det.instances, thr);
        let kept_u = nms_union(&det.unions, thr);
        prop_assert_eq!(&nms_instance(&kept, thr), &kept);
        prop_assert_eq!(&nms_union(&kept_u, thr), &kept_u);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut inst = det.instances.clone();
        let mut unions = det.unions.clone();
        inst.shuffle(&mut rng);
        unions.shuffle(&mut rng);
        prop_assert_eq!(nms_instance(&inst, thr), kept);
        prop_assert_eq!(nms_union(&unions, thr), kept_u);
    }

    #[test]
    fn triplets_do_not_depend_on_input_order(seed in any::<u64>(), plain in any::<bool>()) {
        let space = ActionSpace::from_preset(Preset::Vcoco).unwrap();
        let det = random_detections(seed, 4, 5, 8, &space, 6, 200.0);
        let opts = FusionOptions {
            match_mode: if plain { MatchMode::PlainIou } else { MatchMode::UnionInstance },
            ..FusionOptions::default()
        };
        let (mut humans, mut objects) = split_instances(&det.instances, 0);
        let mut unions = det.unions.clone();
        let a = enumerate_triplets(&humans, &objects, &unions, &space, &opts).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        humans.shuffle(&mut rng);
        objects.shuffle(&mut rng);
        unions.shuffle(&mut rng);
        let b = enumerate_triplets(&humans, &objects, &unions, &space, &opts).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn best_union_ignores_action_score_scale(seed in any::<u64>(), k in 0.01..100.0f64) {
        let space = ActionSpace::from_preset(Preset::Compact).unwrap();
        let det = random_detections(seed, 1, 1, 10, &space, 3, 200.0);
        let (h, o) = (det.instances[0].bbox, det.instances[1].bbox);
        let scaled: Vec<UnionDetection> = det.unions.iter().map(|u| UnionDetection {
            action_scores: u.action_scores.iter().map(|s| s * k).collect(),
            ..u.clone()
        }).collect();
        for mode in [MatchMode::PlainIou, MatchMode::UnionInstance] {
            prop_assert_eq!(best_union(&h, &o, &det.unions, mode), best_union(&h, &o, &scaled, mode));
        }
    }

    #[test]
    fn score_is_monotone_in_each_input(vals in prop::array::uniform6(0.0..1.0f64), which in 0usize..6, bump in 0.0..0.5f64) {
        let space = ActionSpace::from_preset(Preset::Compact).unwrap();
        let build = |v: [f64; 6]| {
            let human = InstanceDetection {
                detection_id: 0, bbox: BBox::new(0.0, 0.0, 10.0, 20.0).unwrap(),
                class_scores: vec![v[0], 0.0], action_scores: { let mut s = vec![0.0; 11]; s[0] = v[1]; s },
            };
            let object = InstanceDetection {
                detection_id: 1, bbox: BBox::new(12.0, 5.0, 18.0, 11.0).unwrap(),
                class_scores: vec![0.0, v[2]], action_scores: { let mut s = vec![0.0; 11]; s[6] = v[3]; s },
            };
            let union = UnionDetection {
                detection_id: 0, bbox: BBox::new(0.0, 0.0, 18.0, 20.0).unwrap(),
                action_scores: { let mut s = vec![0.0; 6]; s[0] = v[4]; s }, target_class_scores: vec![0.0, 1.0],
            };
            hoi_score(&human, Some(&object), Some((&union, v[5])), 0, &space, 0).unwrap()
        };
        let mut up = vals;
        up[which] += bump;
        prop_assert!(build(up) >= build(vals));
    }

    #[test]
    fn target_class_term_is_the_only_difference(seed in 0u64..500) {
        let (problem, params) = random_problem(seed, hoi_core::losses::LossConfig::vanilla());
        let union = &params[..problem.union_param_count()];
        let without = problem.union_loss(union).unwrap();
        let mut with = problem.clone();
        with.loss = hoi_core::losses::LossConfig::with_target_cls();
        let with = with.union_loss(union).unwrap();
        prop_assert_eq!(with.terms.action, without.terms.action);
        prop_assert_eq!(with.terms.localization, without.terms.localization);
        prop_assert_eq!(with.terms.background, without.terms.background);
        prop_assert_eq!(without.terms.target_class, 0.0);
        let diff = with.output.value - without.output.value;
        prop_assert!((diff - with.terms.target_class).abs() <= 1e-12 * with.output.value.max(1.0));
    }
}
