//! Cross-module flows: simulator statistics, pseudo-label target rebuilds,
//! and synthetic data passing through the dataset schema into evaluation.

use mono3d::codec::{decode_detections, encode_frame, encoded_box2d, CodecConfig};
use mono3d::loss::ClassMask;
use mono3d::metrics::{kitti_eval, EvalConfig};
use mono3d::pseudo::{generate_pseudo_labels, pseudo_loss, rebuild_targets, PseudoConfig};
use mono3d::synth::{generate_scene, scene_to_frame, simulate_detector, NoiseConfig, SceneConfig};
use mono3d::Box2D;
use std::collections::BTreeMap;

#[test]
fn decoded_false_positive_count_within_poisson_band() {
    // 3 per frame over 100 frames: the decoded count must fall inside the
    // central 99% band of Poisson(300), [256, 346]. A handful of injected
    // boxes can be shadowed by a real object's splat, which the band absorbs.
    let scene_cfg = SceneConfig {
        seed: 31337,
        ..SceneConfig::default()
    };
    let codec = CodecConfig::default();
    let noise = NoiseConfig {
        fp_rate: 3.0,
        ..NoiseConfig::zero()
    };
    let low = CodecConfig {
        score_threshold: 0.04,
        ..codec
    };
    let mut decoded_fps = 0usize;
    let mut injected = 0usize;
    for frame in 0..100u64 {
        let scene = generate_scene(&scene_cfg, frame).unwrap();
        let sim = simulate_detector(&scene, &scene_cfg, &noise, &codec, frame);
        injected += sim.false_positives.len();
        decoded_fps += decode_detections(&sim.maps, &scene.camera, &low)
            .iter()
            .filter(|d| d.score < 0.5)
            .count();
    }
    assert!(
        (256..=346).contains(&decoded_fps),
        "decoded {decoded_fps} false positives (injected {injected}), outside the 99% band"
    );
}

#[test]
fn noisy_pipeline_end_to_end_stays_consistent() {
    let scene_cfg = SceneConfig {
        seed: 99,
        ..SceneConfig::default()
    };
    let codec = CodecConfig::default();
    let pseudo_cfg = PseudoConfig::default();
    let class_names = scene_cfg.class_names();

    for frame in 0..50u64 {
        let scene = generate_scene(&scene_cfg, frame).unwrap();
        let sim = simulate_detector(&scene, &scene_cfg, &NoiseConfig::default(), &codec, frame);
        let gts: Vec<(usize, Box2D)> = scene
            .objects
            .iter()
            .map(|&(c, b)| (c, encoded_box2d(&scene.camera, &b).unwrap()))
            .collect();
        let (labels, report) =
            generate_pseudo_labels(&sim.maps, &gts, &scene.camera, &codec, &pseudo_cfg);

        // The report partitions both sides.
        let low = CodecConfig {
            score_threshold: pseudo_cfg.low_score_threshold,
            ..codec
        };
        let n_pred = decode_detections(&sim.maps, &scene.camera, &low).len();
        let pred_accounted = report.matched.len() + report.unmatched_pred.len();
        assert_eq!(pred_accounted, n_pred, "frame {frame}");
        let gt_accounted =
            report.matched.len() + report.removed_mis_detections.len() + report.unmatched_gt.len();
        assert_eq!(gt_accounted, gts.len(), "frame {frame}");
        assert_eq!(labels.len(), report.matched.len(), "frame {frame}");

        // Rebuilt targets supervise only planar heads and score a finite
        // restricted loss against the prediction maps.
        let (targets, _) =
            rebuild_targets(&labels, &class_names, scene_cfg.image_size, &codec);
        let mask = ClassMask::all_true(class_names.len());
        let (total, breakdown) = pseudo_loss(&sim.maps, &targets, &mask).unwrap();
        assert!(total.is_finite() && total >= 0.0);
        assert_eq!(breakdown.depth, 0.0);
        assert_eq!(breakdown.orient, 0.0);
        assert_eq!(breakdown.dims3d, 0.0);
    }
}

#[test]
fn rebuilt_targets_match_ground_truth_render_noiselessly() {
    let scene_cfg = SceneConfig {
        seed: 2024,
        ..SceneConfig::default()
    };
    let codec = CodecConfig::default();
    let class_names = scene_cfg.class_names();
    for frame in 0..20u64 {
        let scene = generate_scene(&scene_cfg, frame).unwrap();
        let (gt_maps, _) = encode_frame(&scene.objects, &scene.camera, &class_names, &codec);
        let gts: Vec<(usize, Box2D)> = scene
            .objects
            .iter()
            .map(|&(c, b)| (c, encoded_box2d(&scene.camera, &b).unwrap()))
            .collect();
        let (labels, _) =
            generate_pseudo_labels(&gt_maps, &gts, &scene.camera, &codec, &PseudoConfig::default());
        let (targets, skipped) =
            rebuild_targets(&labels, &class_names, scene_cfg.image_size, &codec);
        assert_eq!(skipped, 0);
        for (i, (a, b)) in targets.heatmap.iter().zip(gt_maps.heatmap.iter()).enumerate() {
            assert!(
                (a - b).abs() < 1e-12,
                "frame {frame}: heatmap cell {i}: {a} vs {b}"
            );
        }
    }
}

#[test]
fn synthetic_frames_evaluate_perfectly_as_their_own_predictions() {
    let scene_cfg = SceneConfig {
        seed: 555,
        ..SceneConfig::default()
    };
    let frames: Vec<_> = (0..10u64)
        .map(|i| {
            let scene = generate_scene(&scene_cfg, i).unwrap();
            scene_to_frame(&scene, &scene_cfg, &format!("{i:06}"), "synthetic")
        })
        .collect();
    let mut preds = BTreeMap::new();
    for f in &frames {
        preds.insert(
            f.frame_id.clone(),
            f.annotations
                .iter()
                .map(|a| {
                    let mut p = a.clone();
                    p.score = Some(1.0);
                    p
                })
                .collect::<Vec<_>>(),
        );
    }
    let report = kitti_eval(
        &preds,
        &frames,
        &scene_cfg.class_names(),
        &EvalConfig::default(),
    )
    .unwrap();
    for class in &report.classes {
        for cell in &class.cells {
            if cell.no_gt {
                continue;
            }
            assert!(
                (cell.ap - 100.0).abs() < 1e-9,
                "{} {} {}: {}",
                class.class_name,
                cell.mode.label(),
                cell.band.label(),
                cell.ap
            );
        }
    }
}
