//! Procedural sound bank: deterministic harmonic sources with gaps.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SAMPLES_PER_STEP, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Names of the goal categories, in category-id order.
pub const GOAL_CATEGORY_NAMES: [&str; 21] = [
    "chair",
    "table",
    "picture",
    "cabinet",
    "cushion",
    "sofa",
    "bed",
    "chest_of_drawers",
    "plant",
    "sink",
    "toilet",
    "stool",
    "towel",
    "tv_monitor",
    "shower",
    "bathtub",
    "counter",
    "fireplace",
    "gym_equipment",
    "seating",
    "clothes",
];

/// Category layout: ids `0..goal_categories` are goals, the next
/// `distractor_categories` ids form the disjoint distractor bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoundBank {
    pub goal_categories: u32,
    pub distractor_categories: u32,
}

impl Default for SoundBank {
    fn default() -> Self {
        Self {
            goal_categories: 8,
            distractor_categories: 16,
        }
    }
}

impl SoundBank {
    pub fn total(&self) -> u32 {
        self.goal_categories + self.distractor_categories
    }

    pub fn is_goal(&self, category: u32) -> bool {
        category < self.goal_categories
    }

    pub fn is_distractor(&self, category: u32) -> bool {
        category >= self.goal_categories && category < self.total()
    }

    pub fn distractor_ids(&self) -> std::ops::Range<u32> {
        self.goal_categories..self.total()
    }

    pub fn name(&self, category: u32) -> String {
        if self.is_goal(category) {
            GOAL_CATEGORY_NAMES
                .get(category as usize)
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("goal_{category}"))
        } else {
            format!("periodic_{}", category - self.goal_categories)
        }
    }
}

#[derive(Debug, Clone)]
pub struct SourceSound {
    pub category_id: u32,
    pub variant_id: u32,
    pub waveform: Vec<f64>,
    pub activity_mask: Vec<u8>,
}

impl SourceSound {
    pub fn len(&self) -> usize {
        self.waveform.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waveform.is_empty()
    }

    /// Samples for step `k` of the sound (zero-padded past the end).
    pub fn chunk(&self, k: usize) -> Vec<f64> {
        let start = k * SAMPLES_PER_STEP;
        let mut out = vec![0.0; SAMPLES_PER_STEP];
        if start < self.waveform.len() {
            let end = (start + SAMPLES_PER_STEP).min(self.waveform.len());
            out[..end - start].copy_from_slice(&self.waveform[start..end]);
        }
        out
    }
}

/// Timbre shared by every variant of a category.
#[derive(Debug, Clone)]
struct CategoryProfile {
    f0: f64,
    formant: f64,
    formant_width: f64,
    rolloff: f64,
    noise_level: f64,
    noise_pole: f64,
    on_range: (f64, f64),
    off_range: (f64, f64),
}

impl CategoryProfile {
    fn for_category(category: u32, total: u32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(0x50_u64, "category", category as u64));
        // Fundamentals on a log ladder over ~3.3 octaves.
        let slots = total.max(1) as f64;
        let slot = category as f64;
        let f0 = 95.0 * 2f64.powf(3.3 * (slot + rng.gen_range(0.15..0.35)) / slots);
        // Formant centres on a second, interleaved ladder so categories close
        // in pitch differ in spectral envelope.
        let fslot = ((category as u64 * 5) % total.max(1) as u64) as f64;
        let formant = 500.0 * 2f64.powf(3.2 * (fslot + rng.gen_range(0.3..0.7)) / slots);
        let intermittent = rng.gen_bool(0.75);
        Self {
            f0,
            formant,
            formant_width: rng.gen_range(0.3..0.6),
            rolloff: rng.gen_range(0.6..1.4),
            noise_level: rng.gen_range(0.01..0.04),
            noise_pole: rng.gen_range(-0.6..0.8),
            on_range: if intermittent {
                (rng.gen_range(0.8..1.5), rng.gen_range(2.0..4.0))
            } else {
                (1e9, 1e9)
            },
            off_range: (rng.gen_range(0.2..0.4), rng.gen_range(0.5..1.0)),
        }
    }

    fn harmonic_gain(&self, f: f64, k: usize) -> f64 {
        let octaves = (f / self.formant).log2();
        let formant = (-(octaves / self.formant_width).powi(2)).exp();
        formant * (k as f64).powf(-self.rolloff) + 0.05 * (k as f64).powf(-2.0)
    }
}

/// Synthesizes a deterministic source sound.
///
/// The result is a harmonic stack whose pitch and spectral envelope are fixed
/// by the category, with a per-variant detune and amplitude-modulation rate
/// and a category-dependent on/off gap pattern. Peak amplitude is 1.
pub fn synth_source(
    bank: &SoundBank,
    category: u32,
    variant: u32,
    duration_s: f64,
    seed: u64,
) -> Result<SourceSound> {
    if category >= bank.total() {
        return Err(Error::UnknownCategory(category));
    }
    if duration_s.is_nan() || duration_s <= 0.0 {
        return Err(Error::Precondition(format!(
            "duration must be positive, got {duration_s}"
        )));
    }
    let n = (duration_s * SAMPLE_RATE).round() as usize;
    let profile = CategoryProfile::for_category(category, bank.total());
    let mut vrng =
        ChaCha8Rng::seed_from_u64(derive_seed(category as u64, "variant", variant as u64));
    let detune = 1.0 + vrng.gen_range(-0.02..0.02);
    let am_rate = vrng.gen_range(0.5..6.0);
    let am_depth = vrng.gen_range(0.1..0.4);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        seed,
        "source",
        ((category as u64) << 32) | variant as u64,
    ));

    let f0 = profile.f0 * detune;
    let nyquist_guard = 7000.0;
    let harmonics: Vec<(f64, f64, f64)> = (1..)
        .map(|k| (k, k as f64 * f0))
        .take_while(|&(_, f)| f < nyquist_guard)
        .map(|(k, f)| {
            (
                TAU * f / SAMPLE_RATE,
                profile.harmonic_gain(f, k),
                rng.gen_range(0.0..TAU),
            )
        })
        .collect();
    let am_phase = rng.gen_range(0.0..TAU);

    // Rotating phasors: (re, im) per harmonic, advanced by a fixed rotation.
    let rotation: Vec<(f64, f64)> = harmonics
        .iter()
        .map(|&(omega, _, _)| omega.sin_cos())
        .collect();
    let mut phasor: Vec<(f64, f64)> = harmonics.iter().map(|&(_, _, ph)| ph.sin_cos()).collect();
    let gains: Vec<f64> = harmonics.iter().map(|&(_, g, _)| g).collect();

    let mut waveform = vec![0.0; n];
    let mut noise_state = 0.0;
    for (i, w) in waveform.iter_mut().enumerate() {
        let t = i as f64;
        let mut tonal = 0.0;
        for ((z, r), g) in phasor.iter_mut().zip(&rotation).zip(&gains) {
            tonal += g * z.0;
            // (sin a, cos a) -> (sin(a + w), cos(a + w))
            *z = (z.0 * r.1 + z.1 * r.0, z.1 * r.1 - z.0 * r.0);
        }
        if i % 4096 == 4095 {
            for z in phasor.iter_mut() {
                let norm = z.0.hypot(z.1);
                *z = (z.0 / norm, z.1 / norm);
            }
        }
        let white: f64 = rng.gen_range(-1.0..1.0);
        noise_state = profile.noise_pole * noise_state + (1.0 - profile.noise_pole.abs()) * white;
        let env = 1.0 - am_depth
            + am_depth * (0.5 + 0.5 * (TAU * am_rate * t / SAMPLE_RATE + am_phase).sin());
        *w = env * (tonal + profile.noise_level * 4.0 * noise_state);
    }

    let mut activity_mask = vec![1u8; n];
    let mut i = 0usize;
    let mut on = true;
    while i < n {
        let (lo, hi) = if on {
            profile.on_range
        } else {
            profile.off_range
        };
        let len_s = if lo >= 1e8 {
            f64::INFINITY
        } else {
            rng.gen_range(lo..hi)
        };
        let len = if len_s.is_finite() {
            (len_s * SAMPLE_RATE) as usize
        } else {
            n
        };
        let end = (i + len.max(1)).min(n);
        if !on {
            activity_mask[i..end].fill(0);
        }
        i = end;
        on = !on;
    }
    for (w, &m) in waveform.iter_mut().zip(&activity_mask) {
        if m == 0 {
            *w = 0.0;
        }
    }
    let peak = waveform.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    if peak > 0.0 {
        waveform.iter_mut().for_each(|x| *x /= peak);
    }
    Ok(SourceSound {
        category_id: category,
        variant_id: variant,
        waveform,
        activity_mask,
    })
}

/// Number of whole steps covered by a sound of `duration_s` seconds.
pub fn steps_for_duration(duration_s: f64) -> usize {
    ((duration_s * SAMPLE_RATE / SAMPLES_PER_STEP as f64).round() as usize).max(1)
}
