mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use savnce::acoustics::{
    binaural_rir, stft_features, synth_source, BinauralFrame, RenderState, SoundBank,
};
use savnce::dataset::{gen_scene, SizeClass};
use savnce::descriptor::estimate::SpectrumAccumulator;
use savnce::descriptor::tracker::make_record;
use savnce::descriptor::{
    estimate_azimuth, oracle_accddoa, synthetic_episodes, Accddoa, CategoryTemplates,
    DistanceCalibration, EpisodicBuffer, GdnConfig, GdnWeights, Measurement, OracleMode,
    StepRecord, Tracker,
};
use savnce::env::{normalize_pose, NormalizationConfig};
use savnce::geometry::{
    angle_diff, relative_goal, step_pose, ActionKind, Point, Pose, ScenePlan, AGENT_RADIUS,
};

use common::{open_room, random_free_point};

fn render(plan: &ScenePlan, src: Point, pose: &Pose, chunk: &[f64], order: u32) -> BinauralFrame {
    let rir = binaural_rir(plan, src, pose, order).unwrap();
    RenderState::new().render_step(chunk, &rir).unwrap()
}

fn check_invariants(a: &Accddoa) {
    a.validate().unwrap();
    assert!(a.tracks.iter().filter(|t| t.active).count() <= 1);
    for t in &a.tracks {
        if t.active {
            let norm = t.doa.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6 && t.distance > 0.0);
        } else {
            assert_eq!((t.doa, t.distance), ([0.0; 3], 0.0));
        }
    }
}

#[test]
fn unheard_variants_rank_their_category_in_the_top_two() {
    let bank = SoundBank::default();
    let templates = CategoryTemplates::build(&bank, 0..6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let plan = open_room(12.0, 10.0);
    let trials = 500;
    let mut hits = 0;
    for _ in 0..trials {
        let category = rng.gen_range(0..bank.goal_categories);
        let variant = rng.gen_range(8..12);
        let sound = synth_source(&bank, category, variant, 2.0, rng.gen()).unwrap();
        let pose = Pose::new(
            rng.gen_range(1.0..11.0),
            rng.gen_range(1.0..9.0),
            rng.gen_range(-PI..PI),
        );
        let src = random_free_point(&mut rng, &plan, 0.3);
        let rir = binaural_rir(&plan, src, &pose, 3).unwrap();
        let mut state = RenderState::new();
        let mut acc = SpectrumAccumulator::default();
        for k in 0..8 {
            let frame = state.render_step(&sound.chunk(k), &rir).unwrap();
            if frame.energy() > 1e-6 {
                acc.add(&stft_features(&frame).unwrap().mean_magnitude_spectrum());
            }
        }
        let scores = templates.classify(&acc.mean());
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        if order[..2].contains(&(category as usize)) {
            hits += 1;
        }
    }
    let rate = hits as f64 / trials as f64;
    println!("top-2 rate {rate:.3}");
    assert!(rate >= 0.8, "top-2 rate {rate}");
}

#[test]
fn lateral_and_oblique_sources_are_localized() {
    let plan = open_room(20.0, 20.0);
    let bank = SoundBank::default();
    let sound = synth_source(&bank, 0, 0, 1.0, 3).unwrap();
    let pose = Pose::new(10.0, 10.0, 0.4);
    for (deg, tol) in [(30.0f64, 10.0), (90.0, 10.0), (-60.0, 10.0), (0.0, 3.0)] {
        let src = pose.to_parent(Point::new(
            3.0 * deg.to_radians().cos(),
            3.0 * deg.to_radians().sin(),
        ));
        let frame = render(&plan, src, &pose, &sound.chunk(0), 0);
        let (az, conf) = estimate_azimuth(&frame);
        assert!(
            (az.to_degrees() - deg).abs() <= tol,
            "{deg}: got {}",
            az.to_degrees()
        );
        assert!(conf > 0.0 && conf <= 1.0);
    }
    assert_eq!(estimate_azimuth(&BinauralFrame::silent()), (0.0, 0.0));
}

#[test]
fn thirty_degree_sources_localize_across_random_geometries() {
    let plan = open_room(40.0, 40.0);
    let bank = SoundBank::default();
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let pose = Pose::new(
            rng.gen_range(12.0..28.0),
            rng.gen_range(12.0..28.0),
            rng.gen_range(-PI..PI),
        );
        let d = rng.gen_range(1.0..10.0);
        let az = 30f64.to_radians();
        let src = pose.to_parent(Point::new(d * az.cos(), d * az.sin()));
        let sound = synth_source(
            &bank,
            rng.gen_range(0..8),
            rng.gen_range(0..12),
            1.0,
            rng.gen(),
        )
        .unwrap();
        let frame = render(&plan, src, &pose, &sound.chunk(0), 0);
        let (est, _) = estimate_azimuth(&frame);
        worst = worst.max((est - az).abs().to_degrees());
    }
    println!("worst error {worst:.2} deg");
    assert!(worst <= 10.0, "worst error {worst}");
}

#[test]
fn noiseless_measurements_reproduce_ground_truth_labels() {
    let plan = gen_scene("trk", 9, SizeClass::Large).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let c = 8;
    for _ in 0..20 {
        let p = random_free_point(&mut rng, &plan, AGENT_RADIUS);
        let mut pose = Pose::new(p.x, p.y, rng.gen_range(-PI..PI));
        let start = pose;
        let goal = random_free_point(&mut rng, &plan, 0.3);
        let category = rng.gen_range(0..c);
        let mut tracker = Tracker::new(c, DistanceCalibration { ref_energy: 1.0 }, None);
        let mut prev = None;
        let mut moved = 0.0;
        for t in 0..80 {
            let (az, d) = relative_goal(&pose, goal);
            if d < 0.05 {
                break;
            }
            let mut scores = vec![0.0; c];
            scores[category] = 1.0;
            let m = Measurement {
                azimuth: az,
                back_azimuth: None,
                distance: d,
                confidence: 1.0,
                scores: Some(scores),
            };
            let norm = normalize_pose(
                &pose.relative_to(&start),
                t,
                &NormalizationConfig::default(),
            );
            let out = tracker
                .update_with_measurement(Some(m), prev, moved, norm)
                .unwrap();
            let want = oracle_accddoa(&pose, goal, category, c, true, OracleMode::Oracle2);
            for (x, y) in out.to_flat().iter().zip(want.to_flat()) {
                assert!((x - y).abs() < 1e-9);
            }
            check_invariants(&out);
            let action = ActionKind::ALL[rng.gen_range(1..4)];
            let (next, m) = step_pose(&plan, &pose, action).unwrap();
            pose = next;
            prev = Some(action);
            moved = m;
        }
    }
}

#[test]
fn silent_turns_shift_the_estimate_exactly() {
    let mut tracker = Tracker::new(3, DistanceCalibration { ref_energy: 1.0 }, None);
    let m = Measurement {
        azimuth: 0.6,
        back_azimuth: None,
        distance: 4.0,
        confidence: 0.8,
        scores: None,
    };
    tracker
        .update_with_measurement(Some(m), None, 0.0, [0.0; 5])
        .unwrap();
    let (before, d) = tracker.estimate().unwrap();
    for _ in 0..2 {
        let out = tracker
            .update_with_measurement(None, Some(ActionKind::TurnLeft), 0.0, [0.0; 5])
            .unwrap();
        assert!(out.is_inactive());
    }
    let (after, d2) = tracker.estimate().unwrap();
    assert!((angle_diff(after, before) + 30f64.to_radians()).abs() < 1e-12);
    assert_eq!(d, d2);
}

#[test]
fn tracker_ignores_global_translation() {
    let plan = open_room(60.0, 60.0);
    let bank = SoundBank::default();
    let templates = Arc::new(CategoryTemplates::build(&bank, 0..6).unwrap());
    let calibration = DistanceCalibration::for_scene(&plan).unwrap();
    let sound = synth_source(&bank, 4, 9, 10.0, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let offset = Point::new(17.3, 21.9);
    let base = Pose::new(15.0, 12.0, 0.3);
    let src = Point::new(19.0, 16.0);
    let mut poses = [
        base,
        Pose::new(base.x + offset.x, base.y + offset.y, base.theta()),
    ];
    let starts = poses;
    let srcs = [src, src + offset];
    let mut trackers = [0, 1].map(|_| Tracker::new(8, calibration, Some(templates.clone())));
    let mut states = [RenderState::new(), RenderState::new()];
    let (mut prev, mut moved) = (None, 0.0);
    for t in 0..30 {
        let outs: Vec<Accddoa> = (0..2)
            .map(|k| {
                let rir = binaural_rir(&plan, srcs[k], &poses[k], 0).unwrap();
                let frame = states[k].render_step(&sound.chunk(t), &rir).unwrap();
                let feats = stft_features(&frame).unwrap();
                let norm = normalize_pose(
                    &poses[k].relative_to(&starts[k]),
                    t,
                    &NormalizationConfig::default(),
                );
                trackers[k]
                    .update(&frame, &feats, prev, moved, norm)
                    .unwrap()
            })
            .collect();
        for (x, y) in outs[0].to_flat().iter().zip(outs[1].to_flat()) {
            assert!((x - y).abs() < 1e-9, "step {t}");
        }
        check_invariants(&outs[0]);
        let action = ActionKind::ALL[rng.gen_range(1..4)];
        for p in &mut poses {
            let (next, m) = step_pose(&plan, p, action).unwrap();
            *p = next;
            moved = m;
        }
        prev = Some(action);
    }
}

proptest! {
    #[test]
    fn oracle_labels_respect_descriptor_invariants(
        x in 0.0..20.0f64, y in 0.0..20.0f64, th in -PI..PI,
        gx in 0.0..20.0f64, gy in 0.0..20.0f64,
        category in 0usize..8, active in any::<bool>(),
    ) {
        let pose = Pose::new(x, y, th);
        let goal = Point::new(gx, gy);
        prop_assume!(pose.position().dist(goal) > 1e-6);
        for mode in [OracleMode::Oracle1, OracleMode::Oracle2] {
            let label = oracle_accddoa(&pose, goal, category, 8, active, mode);
            check_invariants(&label);
            let expect_active = active || mode == OracleMode::Oracle2;
            prop_assert_eq!(label.is_inactive(), !expect_active);
            if let Some((k, t)) = label.active() {
                let (az, d) = relative_goal(&pose, goal);
                prop_assert_eq!(k, category);
                prop_assert!(angle_diff(t.azimuth(), az).abs() < 1e-12);
                prop_assert!((t.distance - d / 20.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn episodic_buffer_keeps_the_latest_records_in_order(cap in 1usize..40, n in 0usize..120) {
        let mut buf = EpisodicBuffer::new(cap);
        for t in 0..n {
            buf.push(StepRecord { t, values: vec![t as f64, 1.0] });
            prop_assert!(buf.len() <= cap);
        }
        let ts: Vec<usize> = buf.iter().map(|r| r.t).collect();
        let want: Vec<usize> = (n.saturating_sub(cap)..n).collect();
        prop_assert_eq!(ts, want);
        let w = buf.window(cap + 2, 2);
        prop_assert_eq!(w.len(), 2 * (cap + 2));
        let pad = cap + 2 - buf.len();
        prop_assert!(w[..2 * pad].iter().all(|v| *v == 0.0));
    }
}

#[test]
fn adam_descends_on_a_fixed_batch() {
    let c = 4;
    let config = GdnConfig::new(c);
    let episodes = synthetic_episodes(6, c, 10);
    let windows: Vec<(Vec<f64>, Vec<f64>)> = episodes
        .iter()
        .flat_map(|e| e.windows(config.window).into_iter().zip(e.targets.clone()))
        .take(64)
        .collect();
    let batch: Vec<(&[f64], &[f64])> = windows
        .iter()
        .map(|(x, y)| (x.as_slice(), y.as_slice()))
        .collect();
    let trials = 100;
    let mut monotone = 0;
    for seed in 0..trials {
        let mut w = GdnWeights::init(config, seed);
        let mut last = w.loss(&batch).unwrap();
        let mut ok = true;
        for _ in 0..5 {
            let (_, grad) = w.loss_and_grad(&batch).unwrap();
            w.adam_step(&grad, 1e-3);
            let l = w.loss(&batch).unwrap();
            ok &= l <= last;
            last = l;
        }
        monotone += usize::from(ok);
    }
    assert!(
        monotone * 100 >= 95 * trials as usize,
        "{monotone}/{trials} monotone"
    );
}

#[test]
fn zero_gradient_leaves_weights_unchanged() {
    let config = GdnConfig::new(3);
    let mut w = GdnWeights::init(config, 2);
    let before = w.params.clone();
    w.adam_step(&vec![0.0; before.len()], 1e-3);
    assert_eq!(w.params, before);
    assert_eq!(w.adam_t, 1);
}

#[test]
fn records_carry_pose_and_previous_action() {
    let r = make_record(
        Some((0.5, 10.0)),
        true,
        &[0.25; 4],
        [0.1, 0.2, 0.3, 0.4, 0.5],
        Some(ActionKind::TurnLeft),
    );
    assert_eq!(r.len(), savnce::descriptor::tracker::record_dim(4));
    assert!((r[0] - 0.5f64.sin()).abs() < 1e-15 && (r[1] - 0.5f64.cos()).abs() < 1e-15);
    assert_eq!(r[2], 0.5);
    assert_eq!(r[3], 1.0);
    assert_eq!(&r[8..13], &[0.1, 0.2, 0.3, 0.4, 0.5]);
    assert_eq!(&r[13..], &ActionKind::one_hot(Some(ActionKind::TurnLeft)));
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let c = 3;
    let config = GdnConfig::new(c);
    let episodes = synthetic_episodes(2, c, 4);
    let windows: Vec<(Vec<f64>, Vec<f64>)> = episodes
        .iter()
        .flat_map(|e| e.windows(config.window).into_iter().zip(e.targets.clone()))
        .take(10)
        .collect();
    let batch: Vec<(&[f64], &[f64])> = windows
        .iter()
        .map(|(x, y)| (x.as_slice(), y.as_slice()))
        .collect();
    let w = GdnWeights::init(config, 6);
    let (_, grad) = w.loss_and_grad(&batch).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = 1e-5;
    for _ in 0..20 {
        let i = rng.gen_range(0..w.params.len());
        let (mut up, mut down) = (w.clone(), w.clone());
        up.params[i] += h;
        down.params[i] -= h;
        let numeric = (up.loss(&batch).unwrap() - down.loss(&batch).unwrap()) / (2.0 * h);
        assert!(
            (numeric - grad[i]).abs() <= 1e-6 + 1e-4 * numeric.abs().max(grad[i].abs()),
            "param {i}: {numeric} vs {}",
            grad[i]
        );
    }
}
