//! Post-processing from raw detections to ranked triplets.

use crate::action_space::ActionSpace;
use crate::anchors::Threshold;
use crate::error::FusionError;
use crate::fusion::{enumerate_triplets, split_instances, FusionOptions, HoiTriplet};
use crate::suppress::{nms_instance, nms_union};
use crate::synth::Detections;

/// Suppresses both detection sets, splits instances into humans and
/// objects, and scores every triplet.
pub fn score_detections(
    detections: &Detections,
    space: &ActionSpace,
    opts: &FusionOptions,
    nms_iou: Threshold,
) -> Result<Vec<HoiTriplet>, FusionError> {
    let instances = nms_instance(&detections.instances, nms_iou);
    let unions = nms_union(&detections.unions, nms_iou);
    let (humans, objects) = split_instances(&instances, opts.person_class);
    enumerate_triplets(&humans, &objects, &unions, space, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{perturb_to_detections, smoke_scene, NoiseConfig};

    #[test]
    fn clean_detections_rank_ground_truth_first() {
        let scene = smoke_scene();
        let space = scene.action_space().unwrap();
        let det = perturb_to_detections(&scene, &NoiseConfig::zero()).unwrap();
        let t = score_detections(&det, &space, &FusionOptions::default(), Threshold::HALF).unwrap();
        let gts = scene.gt_triplets(&space, 0);
        // every ground-truth pair scores 2 * (1 + 1) = 4, solo actions 1
        let top: Vec<_> = t.iter().take_while(|t| t.score == 4.0).collect();
        assert_eq!(top.len(), gts.iter().filter(|g| g.object_box.is_some()).count());
    }
}
