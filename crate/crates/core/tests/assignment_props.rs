use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roigrasp::anchor_codec::{build_anchor_grid, decode, AnchorSpec};
use roigrasp::assignment::{
    anchor_targets, baseline_assign, match_rois, roi_ground_truth, select_execution_grasp, AnchorLabel,
    AnchorTargetOptions,
};
use roigrasp::dataset_io::{GraspAnnotation, SceneAnnotation};
use roigrasp::geometry::{AxisAlignedBox, OrientedRect};
use roigrasp::metrics::DetectionRecord;
use roigrasp::suppression::ScoredGrasp;
use roigrasp::synth::oracle::{anchor_targets_reference, match_rois_reference};
use roigrasp::synth::{generate_scenes, SynthConfig};

fn scene(seed: u64) -> SceneAnnotation {
    let cfg = SynthConfig {
        seed,
        n_scenes: 1,
        objects_per_scene: [1, 6],
        overlap_bias: 0.6,
        ..Default::default()
    };
    generate_scenes(&cfg).unwrap().remove(0)
}

fn rois_near(s: &SceneAnnotation, rng: &mut ChaCha8Rng) -> Vec<AxisAlignedBox> {
    (0..8)
        .map(|_| {
            let o = &s.objects[rng.random_range(0..s.objects.len())].bbox;
            let mut j = |v: f64| v + rng.random_range(-20.0..20.0);
            let (x0, y0) = (j(o.x_min()), j(o.y_min()));
            AxisAlignedBox::new(x0, y0, j(o.x_max()).max(x0 + 1.0), j(o.y_max()).max(y0 + 1.0)).unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn roi_matching(seed in any::<u64>()) {
        let s = scene(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rois = rois_near(&s, &mut rng);
        let got = match_rois(&rois, &s.objects);
        let want = match_rois_reference(&rois, &s.objects);
        for (m, w) in got.iter().zip(&want) {
            prop_assert_eq!(m.matched, *w);
            if m.matched.is_some() {
                prop_assert!(m.iou > 0.5);
            }
            let gt = roi_ground_truth(m, &s);
            for g in &gt {
                prop_assert!(s.grasps.contains(g));
                prop_assert_eq!(Some(g.owner_index), m.matched.map(|n| s.objects[n].index));
            }
        }
    }

    #[test]
    fn anchor_labels(seed in any::<u64>(), w in 1usize..8, k in prop::sample::select(vec![1usize, 2, 4, 6]), exclude_hard: bool) {
        let s = scene(seed);
        let obj = &s.objects[0];
        let gt: Vec<GraspAnnotation> = s.grasps_of(obj.index).cloned().collect();
        let grid = build_anchor_grid(obj.bbox, AnchorSpec::new(w, w, k, 12.0).unwrap()).unwrap();
        let opts = AnchorTargetOptions { exclude_hard };
        let got = anchor_targets(&grid, &gt, k, opts).unwrap();
        prop_assert_eq!(&got, &anchor_targets_reference(&grid, &gt, k, exclude_hard));
        let positives: Vec<_> = got.iter().filter(|t| t.label == AnchorLabel::Graspable).collect();
        prop_assert!(positives.len() <= gt.len());
        for t in positives {
            let back = decode(&t.offsets.unwrap(), &grid.anchors()[t.anchor], k).unwrap();
            prop_assert!(back.approx_eq(&gt[t.gt.unwrap()].rect, 1e-6));
        }
    }

    #[test]
    fn nearest_center_threshold_monotone(seed in any::<u64>(), lo in 0.0..1.0f64, hi in 0.0..1.0f64) {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let s = scene(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        let grasps: Vec<ScoredGrasp> = s
            .grasps
            .iter()
            .map(|g| ScoredGrasp { rect: g.rect, score: rng.random_range(0.0..1.0) })
            .collect();
        let boxes: Vec<AxisAlignedBox> = s.objects.iter().map(|o| o.bbox).collect();
        let a = baseline_assign(&boxes, &grasps, lo);
        let b = baseline_assign(&boxes, &grasps, hi);
        // A choice that still clears the higher threshold stays chosen.
        for (x, y) in a.iter().zip(&b) {
            if let Some(n) = x {
                if grasps[*n].score > hi {
                    prop_assert_eq!(y, x);
                }
            }
        }
        let det = DetectionRecord {
            image_id: s.image_id.clone(),
            category: s.objects[0].category.clone(),
            score: 1.0,
            bbox: boxes[0],
            grasps,
        };
        let x: Option<OrientedRect> = select_execution_grasp(&det, lo);
        let y = select_execution_grasp(&det, hi);
        if let Some(x) = x {
            if det.grasps.iter().any(|g| g.rect == x && g.score > hi) {
                prop_assert_eq!(y, Some(x));
            }
        }
    }
}
