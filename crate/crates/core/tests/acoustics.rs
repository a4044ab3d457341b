mod common;

use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};
use savnce::acoustics::features::{FFT_SIZE, HOP, NUM_BINS, NUM_FRAMES};
use savnce::acoustics::source::steps_for_duration;
use savnce::acoustics::{
    binaural_rir, mix_sources, stft_features, synth_source, BinauralFrame, BinauralRir,
    RenderState, SoundBank, Stft, SAMPLES_PER_STEP,
};
use savnce::geometry::{Point, Pose};

use common::{convolve, open_room};

const SR: f64 = 16_000.0;
const C: f64 = 343.0;

fn noise(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn stream(chunks: usize, signal: &[f64], rir: &BinauralRir) -> (Vec<f64>, Vec<f64>) {
    let mut state = RenderState::new();
    let (mut l, mut r) = (Vec::new(), Vec::new());
    for k in 0..chunks {
        let mut chunk = vec![0.0; SAMPLES_PER_STEP];
        let lo = (k * SAMPLES_PER_STEP).min(signal.len());
        let hi = ((k + 1) * SAMPLES_PER_STEP).min(signal.len());
        chunk[..hi - lo].copy_from_slice(&signal[lo..hi]);
        let f = state.render_step(&chunk, rir).unwrap();
        l.extend(f.left);
        r.extend(f.right);
    }
    (l, r)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn streaming_matches_offline_convolution(
        seed in any::<u64>(),
        steps in 1usize..5,
        len in 1usize..9000,
        taps in 1usize..200,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let signal = noise(&mut rng, steps * SAMPLES_PER_STEP);
        let mut rir = BinauralRir { left: vec![0.0; len], right: vec![0.0; len], order: 3 };
        for _ in 0..taps {
            rir.left[rng.gen_range(0..len)] += rng.gen_range(-1.0..1.0);
            rir.right[rng.gen_range(0..len)] += rng.gen_range(-1.0..1.0);
        }
        let flush = len.div_ceil(SAMPLES_PER_STEP);
        let (l, r) = stream(steps + flush, &signal, &rir);
        let (ol, or) = (convolve(&signal, &rir.left), convolve(&signal, &rir.right));
        let peak = ol.iter().chain(&or).fold(1e-30f64, |m, v| m.max(v.abs()));
        for (got, want) in [(&l, &ol), (&r, &or)] {
            for (i, w) in want.iter().enumerate() {
                prop_assert!((got[i] - w).abs() < 1e-6 * peak, "sample {i}");
            }
            prop_assert!(got[want.len()..].iter().all(|v| v.abs() < 1e-6 * peak));
        }
    }

    #[test]
    fn tail_energy_decays_after_source_stops(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plan = open_room(rng.gen_range(8.0..20.0), rng.gen_range(8.0..20.0));
        let src = Point::new(rng.gen_range(0.5..plan.width - 0.5), rng.gen_range(0.5..plan.height - 0.5));
        let pose = Pose::new(rng.gen_range(0.5..plan.width - 0.5), rng.gen_range(0.5..plan.height - 0.5), rng.gen_range(-PI..PI));
        let rir = binaural_rir(&plan, src, &pose, 3).unwrap();
        let mut state = RenderState::new();
        state.render_step(&noise(&mut rng, SAMPLES_PER_STEP), &rir).unwrap();
        let mut last = state.tail_energy();
        let silence = vec![0.0; SAMPLES_PER_STEP];
        for _ in 0..4 {
            state.render_step(&silence, &rir).unwrap();
            let e = state.tail_energy();
            prop_assert!(e <= last);
            last = e;
        }
        prop_assert_eq!(last, 0.0);
    }
}

#[test]
fn render_step_rejects_wrong_chunk_length() {
    let rir = BinauralRir {
        left: vec![1.0],
        right: vec![1.0],
        order: 0,
    };
    assert!(RenderState::new().render_step(&[0.0; 3999], &rir).is_err());
}

fn first_tap(x: &[f64]) -> usize {
    x.iter().position(|v| *v != 0.0).unwrap()
}

#[test]
fn direct_tap_delay_matches_ear_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..1000 {
        let plan = open_room(rng.gen_range(6.0..20.0), rng.gen_range(6.0..20.0));
        let pose = Pose::new(
            rng.gen_range(0.2..plan.width - 0.2),
            rng.gen_range(0.2..plan.height - 0.2),
            rng.gen_range(-PI..PI),
        );
        let src = Point::new(
            rng.gen_range(0.0..plan.width),
            rng.gen_range(0.0..plan.height),
        );
        let rir = binaural_rir(&plan, src, &pose, rng.gen_range(0..4)).unwrap();
        let th = pose.theta();
        for (side, taps) in [(1.0, &rir.left), (-1.0, &rir.right)] {
            let ear = Point::new(
                pose.x - side * 0.09 * th.sin(),
                pose.y + side * 0.09 * th.cos(),
            );
            let delay = ear.dist(src) / C * SR;
            let first = first_tap(taps) as f64;
            assert!((first - delay).abs() <= 1.0, "tap {first} vs delay {delay}");
        }
        assert!(rir.energy().is_finite());
    }
}

/// Fractional arrival time of the first tap pair written by linear interpolation.
fn arrival(x: &[f64]) -> f64 {
    let n = first_tap(x);
    let (a, b) = (x[n], x.get(n + 1).copied().unwrap_or(0.0));
    n as f64 + b / (a + b)
}

#[test]
fn left_source_leads_by_the_ear_spacing() {
    let plan = open_room(10.0, 10.0);
    let pose = Pose::new(5.0, 5.0, 0.0);
    let rir = binaural_rir(&plan, Point::new(5.0, 7.0), &pose, 0).unwrap();
    let itd = arrival(&rir.right) - arrival(&rir.left);
    assert!((itd - 0.18 / C * SR).abs() < 0.05, "itd {itd} samples");
    assert!((itd - 8.4).abs() < 0.1);
    let peak = |x: &[f64]| x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(peak(&rir.left) > peak(&rir.right));
}

#[test]
fn mirrored_source_swaps_the_ears() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // In a square room seen from its centre, the heading axis is a symmetry axis.
    let plan = open_room(10.0, 10.0);
    for heading in [0.0, PI / 2.0, PI] {
        let pose = Pose::new(5.0, 5.0, heading);
        for _ in 0..20 {
            let (u, v) = (rng.gen_range(-4.5..4.5), rng.gen_range(0.1..4.5));
            let at = |side: f64| pose.to_parent(Point::new(u, side * v));
            let a = binaural_rir(&plan, at(1.0), &pose, 3).unwrap();
            let b = binaural_rir(&plan, at(-1.0), &pose, 3).unwrap();
            for (x, y) in a
                .left
                .iter()
                .zip(&b.right)
                .chain(a.right.iter().zip(&b.left))
            {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }
    // Anechoic renders are symmetric for any pose.
    let plan = open_room(20.0, 20.0);
    for _ in 0..50 {
        let pose = Pose::new(
            rng.gen_range(6.0..14.0),
            rng.gen_range(6.0..14.0),
            rng.gen_range(-PI..PI),
        );
        let (u, v) = (rng.gen_range(-4.0..4.0), rng.gen_range(0.1..4.0));
        let a = binaural_rir(&plan, pose.to_parent(Point::new(u, v)), &pose, 0).unwrap();
        let b = binaural_rir(&plan, pose.to_parent(Point::new(u, -v)), &pose, 0).unwrap();
        for (x, y) in a
            .left
            .iter()
            .zip(&b.right)
            .chain(a.right.iter().zip(&b.left))
        {
            assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn spectrogram_energy_matches_windowed_signal_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let window = Stft::new().window().to_vec();
    for _ in 0..20 {
        let x = noise(&mut rng, SAMPLES_PER_STEP);
        let frame = BinauralFrame {
            left: x.clone(),
            right: x.clone(),
        };
        let feats = stft_features(&frame).unwrap();
        let (mut spec, mut time) = (0.0, 0.0);
        for f in 0..NUM_FRAMES {
            for k in 0..NUM_BINS {
                let m = feats.get(0, f, k);
                let fold = if k == 0 || k == NUM_BINS - 1 {
                    1.0
                } else {
                    2.0
                };
                spec += fold * m * m / FFT_SIZE as f64;
            }
            time += (0..FFT_SIZE)
                .map(|n| (x[f * HOP + n] * window[n]).powi(2))
                .sum::<f64>();
        }
        assert!((spec / time - 1.0).abs() < 0.05, "ratio {}", spec / time);
    }
}

#[test]
fn one_kilohertz_tone_peaks_at_bin_32() {
    let tone: Vec<f64> = (0..SAMPLES_PER_STEP)
        .map(|n| (2.0 * PI * 1000.0 * n as f64 / SR).sin())
        .collect();
    let frame = BinauralFrame {
        left: tone.clone(),
        right: vec![0.0; SAMPLES_PER_STEP],
    };
    let feats = stft_features(&frame).unwrap();
    let window = Stft::new().window().to_vec();
    // Direct DFT of the first frame.
    let dft: Vec<f64> = (0..NUM_BINS)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, w) in window.iter().enumerate() {
                let ph = -2.0 * PI * (k * n) as f64 / FFT_SIZE as f64;
                re += tone[n] * w * ph.cos();
                im += tone[n] * w * ph.sin();
            }
            re.hypot(im)
        })
        .collect();
    let argmax = |v: &[f64]| (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
    assert_eq!(argmax(&dft), 32);
    let mags: Vec<f64> = (0..NUM_BINS).map(|k| feats.get(0, 0, k)).collect();
    assert_eq!(argmax(&mags), 32);
    for k in 0..NUM_BINS {
        // The right channel is silent, so the mean magnitude is half of |L|.
        assert!((2.0 * mags[k] - dft[k]).abs() < 1e-6 * dft[32]);
    }
}

#[test]
fn feature_phase_channels_are_unit_circle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let frame = BinauralFrame {
        left: noise(&mut rng, SAMPLES_PER_STEP),
        right: noise(&mut rng, SAMPLES_PER_STEP),
    };
    let feats = stft_features(&frame).unwrap();
    for f in 0..NUM_FRAMES {
        for k in 0..NUM_BINS {
            let (s, c) = (feats.get(1, f, k), feats.get(2, f, k));
            assert!((s * s + c * c - 1.0).abs() < 1e-6);
            assert!(feats.get(0, f, k) >= 0.0);
        }
    }
}

#[test]
fn mix_energy_includes_the_cross_term() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let bank = SoundBank::default();
    let plan = open_room(12.0, 9.0);
    let pose = Pose::new(6.0, 4.0, 0.3);
    let render = |cat: u32, at: Point, rng: &mut ChaCha8Rng| {
        let s = synth_source(&bank, cat, 1, 1.0, rng.gen()).unwrap();
        let rir = binaural_rir(&plan, at, &pose, 2).unwrap();
        RenderState::new().render_step(&s.chunk(1), &rir).unwrap()
    };
    let goal = render(2, Point::new(9.0, 7.0), &mut rng);
    let distractor = render(11, Point::new(2.0, 2.5), &mut rng);
    let mix = mix_sources(&[goal.clone(), distractor.clone()]).unwrap();
    let cross: f64 = goal
        .left
        .iter()
        .zip(&distractor.left)
        .chain(goal.right.iter().zip(&distractor.right))
        .map(|(a, b)| a * b)
        .sum();
    let want = goal.energy() + distractor.energy() + 2.0 * cross;
    assert!((mix.energy() - want).abs() < 1e-9 * want);
    assert!(mix_sources(&[goal]).is_ok());
    let short = BinauralFrame {
        left: vec![0.0; 10],
        right: vec![0.0; 10],
    };
    assert!(mix_sources(&[mix, short]).is_err());
}

/// Welch-averaged magnitude spectrum of a signal.
fn average_spectrum(x: &[f64]) -> Vec<f64> {
    let n = 1024;
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut acc = vec![0.0; n / 2 + 1];
    for start in (0..x.len().saturating_sub(n)).step_by(n / 2) {
        let mut buf: Vec<Complex<f64>> = x[start..start + n]
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos();
                Complex::new(v * w, 0.0)
            })
            .collect();
        fft.process(&mut buf);
        acc.iter_mut().zip(&buf).for_each(|(a, z)| *a += z.norm());
    }
    acc
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[test]
fn categories_have_distinct_spectra() {
    let bank = SoundBank::default();
    let spectra: Vec<Vec<f64>> = (0..bank.total())
        .map(|c| average_spectrum(&synth_source(&bank, c, 0, 4.0, 1).unwrap().waveform))
        .collect();
    let mut worst = 0.0f64;
    for a in 0..spectra.len() {
        for b in a + 1..spectra.len() {
            let s = cosine(&spectra[a], &spectra[b]);
            worst = worst.max(s);
            assert!(s < 0.9, "categories {a} and {b}: cosine {s}");
        }
    }
    println!("largest cross-category cosine {worst:.3}");
}

#[test]
fn synthesis_is_deterministic_and_sized() {
    let bank = SoundBank::default();
    let a = synth_source(&bank, 3, 2, 15.0, 77).unwrap();
    let b = synth_source(&bank, 3, 2, 15.0, 77).unwrap();
    assert_eq!(a.waveform.len(), 240_000);
    assert_eq!(steps_for_duration(15.0), 60);
    assert!(a
        .waveform
        .iter()
        .zip(&b.waveform)
        .all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(a.activity_mask, b.activity_mask);
    let peak = a.waveform.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!((peak - 1.0).abs() < 1e-12);
    assert!(synth_source(&bank, bank.total(), 0, 1.0, 0).is_err());
}
