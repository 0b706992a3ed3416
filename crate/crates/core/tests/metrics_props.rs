use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roigrasp::metrics::{evaluate, mr_at, ApMode, DetectionRecord, EvalConfig, LAMR_REFERENCE_FPPI};
use roigrasp::synth::oracle::evaluate_reference;
use roigrasp::synth::{generate_detections, generate_scenes, DetectionModel, SynthConfig};

fn config() -> impl Strategy<Value = SynthConfig> {
    (any::<u64>(), 0.0..1.0f64, 0.0..12.0f64, 0.0..25.0f64, 0.0..1.0f64, 0.0..0.5f64)
        .prop_map(|(seed, overlap_bias, jitter, angle, fp_rate, dup)| SynthConfig {
            seed,
            n_scenes: 6,
            objects_per_scene: [1, 6],
            overlap_bias,
            detection: DetectionModel {
                box_jitter: jitter,
                grasp_jitter: jitter / 2.0,
                angle_jitter: angle,
                fp_rate,
                duplicate_rate: dup,
                ..Default::default()
            },
            ..Default::default()
        })
}

fn eval_config() -> impl Strategy<Value = EvalConfig> {
    (any::<bool>(), prop::option::of(0.0..0.6f64), any::<bool>()).prop_map(|(ignore_hard, score_floor, eleven)| EvalConfig {
        ignore_hard,
        score_floor,
        ap_mode: if eleven { ApMode::ElevenPoint } else { ApMode::AllPoint },
        ..Default::default()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_exhaustive_reference(cfg in config(), ecfg in eval_config()) {
        let scenes = generate_scenes(&cfg).unwrap();
        let dets: Vec<DetectionRecord> = generate_detections(&scenes, &cfg).unwrap().into_iter().map(|d| d.record).collect();
        let got = evaluate(&dets, &scenes, &ecfg).unwrap();
        prop_assert_eq!(&got, &evaluate_reference(&dets, &scenes, &ecfg));

        let c = &got.curve;
        for w in c.points.windows(2) {
            prop_assert!(w[0].threshold < w[1].threshold);
            prop_assert!(w[0].fppi >= w[1].fppi);
            prop_assert!(w[0].tp >= w[1].tp);
        }
        prop_assert!(c.points.iter().all(|p| p.tp <= c.n_gt));
        let sampled: Vec<f64> = LAMR_REFERENCE_FPPI.iter().map(|&r| mr_at(c, r).unwrap().max(1e-10)).collect();
        let lo = sampled.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = sampled.iter().copied().fold(0.0, f64::max);
        prop_assert!(got.lamr >= lo * (1.0 - 1e-12) && got.lamr <= hi * (1.0 + 1e-12));
        prop_assert!(got.per_class_ap.values().all(|ap| (0.0..=1.0).contains(ap)));
    }

    // Reordering detections while keeping the relative order of equal scores
    // leaves every metric unchanged.
    #[test]
    fn order_independent_up_to_ties(cfg in config(), shuffle_seed in any::<u64>()) {
        let scenes = generate_scenes(&cfg).unwrap();
        let dets: Vec<DetectionRecord> = generate_detections(&scenes, &cfg).unwrap().into_iter().map(|d| d.record).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
        let keys: Vec<u64> = dets.iter().map(|_| rng.random()).collect();
        let mut order: Vec<usize> = (0..dets.len()).collect();
        order.sort_by_key(|&i| keys[i]);
        // Restore input order inside each equal-score group.
        let mut shuffled: Vec<usize> = order.clone();
        for score_group in dets.iter().map(|d| d.score.to_bits()).collect::<std::collections::BTreeSet<_>>() {
            let slots: Vec<usize> = (0..order.len()).filter(|&p| dets[order[p]].score.to_bits() == score_group).collect();
            let mut members: Vec<usize> = slots.iter().map(|&p| order[p]).collect();
            members.sort_unstable();
            for (p, m) in slots.into_iter().zip(members) {
                shuffled[p] = m;
            }
        }
        let permuted: Vec<DetectionRecord> = shuffled.iter().map(|&i| dets[i].clone()).collect();
        let cfg = EvalConfig::default();
        prop_assert_eq!(evaluate(&dets, &scenes, &cfg).unwrap(), evaluate(&permuted, &scenes, &cfg).unwrap());
    }
}
