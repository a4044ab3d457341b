//! Classical acoustic measurements: GCC-PHAT azimuth, energy distance and
//! template-based category scores.

use std::f64::consts::PI;
use std::ops::Range;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::acoustics::features::{NUM_BINS, NUM_FRAMES};
use crate::acoustics::rir::{binaural_rir_with_len, EAR_OFFSET};
use crate::acoustics::{
    synth_source, BinauralFrame, RenderState, SoundBank, Stft, SAMPLES_PER_STEP, SAMPLE_RATE,
    SPEED_OF_SOUND,
};
use crate::error::Result;
use crate::geometry::{wrap_angle, Point, Pose, ScenePlan};

/// Largest lag searched, in samples (the physical maximum is about 8.4).
pub const MAX_LAG: usize = 12;
const GCC_SIZE: usize = 8192;
/// Highest bin kept in the whitened spectrum (about 3 kHz). The renderer's
/// linear-interpolated fractional delays keep their nominal phase only in
/// the lower band.
const GCC_MAX_BIN: usize = GCC_SIZE * 3 / 16;

pub const MIN_DISTANCE_ESTIMATE: f64 = 0.25;
pub const MAX_DISTANCE_ESTIMATE: f64 = 40.0;

/// RMS of the calibration probe; close to the typical active RMS of the
/// synthesized bank.
pub const PROBE_RMS: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AzimuthEstimate {
    /// Front-hemisphere solution, counterclockwise-positive.
    pub azimuth: f64,
    pub confidence: f64,
    /// Interaural lead of the left ear, in samples.
    pub itd_samples: f64,
}

impl AzimuthEstimate {
    /// Mirror solution behind the interaural axis.
    pub fn back(&self) -> f64 {
        wrap_angle(PI - self.azimuth)
    }
}

/// GCC-PHAT interaural delay estimator.
pub struct GccPhat {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Default for GccPhat {
    fn default() -> Self {
        Self::new()
    }
}

impl GccPhat {
    pub fn new() -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(GCC_SIZE),
            inverse: planner.plan_fft_inverse(GCC_SIZE),
        }
    }

    fn spectrum(&self, x: &[f64]) -> Vec<Complex<f64>> {
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        buf.resize(GCC_SIZE, Complex::default());
        self.forward.process(&mut buf);
        buf
    }

    /// Whitened cross-spectrum `R * conj(L)`, normalized by the number of
    /// bins that carried energy.
    fn phat_spectrum(&self, frame: &BinauralFrame) -> Vec<Complex<f64>> {
        let l = self.spectrum(&frame.left);
        let r = self.spectrum(&frame.right);
        let mut g: Vec<Complex<f64>> = l.iter().zip(&r).map(|(a, b)| b * a.conj()).collect();
        let peak_mag = g.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        let floor = 1e-9 * peak_mag;
        let mut used = 0usize;
        for (k, z) in g.iter_mut().enumerate() {
            let m = z.norm();
            let bin = k.min(GCC_SIZE - k);
            if m > floor && m > 0.0 && bin <= GCC_MAX_BIN {
                *z /= m;
                used += 1;
            } else {
                *z = Complex::default();
            }
        }
        let scale = if used > 0 { 1.0 / used as f64 } else { 0.0 };
        g.iter_mut().for_each(|z| *z *= scale);
        g
    }

    /// Phase-transform cross-correlation at lags `-MAX_LAG..=MAX_LAG`, where
    /// lag `k` means the left channel leads by `k` samples.
    pub fn correlate(&self, frame: &BinauralFrame) -> Vec<f64> {
        let mut g = self.phat_spectrum(frame);
        self.inverse.process(&mut g);
        // c[k] = sum_n R[n + k] L[n]: positive k means R lags, i.e. L leads.
        (-(MAX_LAG as i64)..=MAX_LAG as i64)
            .map(|k| g[k.rem_euclid(GCC_SIZE as i64) as usize].re)
            .collect()
    }

    pub fn estimate(&self, frame: &BinauralFrame) -> AzimuthEstimate {
        let none = AzimuthEstimate {
            azimuth: 0.0,
            confidence: 0.0,
            itd_samples: 0.0,
        };
        if frame.energy() <= 0.0 {
            return none;
        }
        let g = self.phat_spectrum(frame);
        let mut full = g.clone();
        self.inverse.process(&mut full);
        let c: Vec<f64> = (-(MAX_LAG as i64)..=MAX_LAG as i64)
            .map(|k| full[k.rem_euclid(GCC_SIZE as i64) as usize].re)
            .collect();
        let (imax, &peak) = c
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty lag window");
        let mean = c.iter().sum::<f64>() / c.len() as f64;
        let mut lag = imax as f64 - MAX_LAG as f64;
        if imax > 0 && imax + 1 < c.len() {
            let (y0, y1, y2) = (c[imax - 1], peak, c[imax + 1]);
            let denom = y0 - 2.0 * y1 + y2;
            if denom.abs() > 1e-15 {
                lag += (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5);
            }
        }
        let s = (lag / SAMPLE_RATE * SPEED_OF_SOUND / (2.0 * EAR_OFFSET)).clamp(-1.0, 1.0);
        AzimuthEstimate {
            azimuth: s.asin(),
            confidence: (peak - mean).clamp(0.0, 1.0),
            itd_samples: lag,
        }
    }
}

pub fn estimate_azimuth(frame: &BinauralFrame) -> (f64, f64) {
    let e = GccPhat::new().estimate(frame);
    (e.azimuth, e.confidence)
}

/// Energy reference for inverse-square ranging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceCalibration {
    /// Frame energy of the probe rendered 1 m dead ahead without reflections.
    pub ref_energy: f64,
}

impl DistanceCalibration {
    /// Renders the reference probe at 1 m in an anechoic copy of the scene.
    pub fn for_scene(scene: &ScenePlan) -> Result<Self> {
        let probe = probe_signal();
        let mut free = scene.clone();
        free.obstacles.clear();
        let listener = Pose::new(scene.width / 2.0 - 0.5, scene.height / 2.0, 0.0);
        let src = Point::new(listener.x + 1.0, listener.y);
        let rir = binaural_rir_with_len(&free, src, &listener, 0, 64)?;
        let mut state = RenderState::new();
        let mut frame = state.render_step(&probe, &rir)?;
        // Fold the tail back so the whole probe response counts.
        for (f, t) in frame.left.iter_mut().zip(&state.tail_left) {
            *f += t;
        }
        for (f, t) in frame.right.iter_mut().zip(&state.tail_right) {
            *f += t;
        }
        Ok(Self {
            ref_energy: frame.energy(),
        })
    }
}

/// Deterministic white probe with RMS [`PROBE_RMS`].
pub fn probe_signal() -> Vec<f64> {
    let mut state: u64 = 0x2545_F491_4F6C_DD1D;
    let raw: Vec<f64> = (0..SAMPLES_PER_STEP)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect();
    let rms = (raw.iter().map(|x| x * x).sum::<f64>() / raw.len() as f64).sqrt();
    raw.iter().map(|x| x * PROBE_RMS / rms).collect()
}

/// Inverse-square range estimate; `None` for a silent frame.
pub fn estimate_distance(frame: &BinauralFrame, calibration: &DistanceCalibration) -> Option<f64> {
    let e = frame.energy();
    if e <= 0.0 {
        return None;
    }
    Some(
        (calibration.ref_energy / e)
            .sqrt()
            .clamp(MIN_DISTANCE_ESTIMATE, MAX_DISTANCE_ESTIMATE),
    )
}

const BAND_WIDTH: usize = 2;
const SOFTMAX_TEMPERATURE: f64 = 0.05;

fn pool_bands(spectrum: &[f64]) -> Vec<f64> {
    spectrum
        .chunks(BAND_WIDTH)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Mean STFT magnitude over the frames of `signal` that carry energy.
pub fn long_term_spectrum(stft: &Stft, signal: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; NUM_BINS];
    let mut n = 0usize;
    for frame in stft.transform(signal) {
        let mags: Vec<f64> = frame.iter().map(|z| z.norm()).collect();
        if mags.iter().any(|&m| m > 1e-9) {
            acc.iter_mut().zip(&mags).for_each(|(a, m)| *a += m);
            n += 1;
        }
    }
    if n > 0 {
        acc.iter_mut().for_each(|a| *a /= n as f64);
    }
    acc
}

pub fn spectral_similarity(a: &[f64], b: &[f64]) -> f64 {
    cosine(&pool_bands(a), &pool_bands(b))
}

/// Per-category reference spectra built from training variants.
#[derive(Debug, Clone)]
pub struct CategoryTemplates {
    templates: Vec<Vec<f64>>,
}

impl CategoryTemplates {
    pub fn build(bank: &SoundBank, variants: Range<u32>) -> Result<Self> {
        let stft = Stft::new();
        let mut templates = Vec::with_capacity(bank.goal_categories as usize);
        for c in 0..bank.goal_categories {
            let mut acc = vec![0.0; NUM_BINS];
            for v in variants.clone() {
                let s = synth_source(bank, c, v, 3.0, 0x7E4D)?;
                let lts = long_term_spectrum(&stft, &s.waveform);
                acc.iter_mut().zip(&lts).for_each(|(a, x)| *a += x);
            }
            templates.push(pool_bands(&acc));
        }
        Ok(Self { templates })
    }

    pub fn num_categories(&self) -> usize {
        self.templates.len()
    }

    /// Softmax over cosine similarities; uniform for an empty spectrum.
    pub fn classify(&self, spectrum: &[f64]) -> Vec<f64> {
        let n = self.templates.len();
        let pooled = pool_bands(spectrum);
        if pooled.iter().all(|&v| v <= 0.0) {
            return vec![1.0 / n as f64; n];
        }
        let sims: Vec<f64> = self.templates.iter().map(|t| cosine(&pooled, t)).collect();
        let max = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = sims
            .iter()
            .map(|s| ((s - max) / SOFTMAX_TEMPERATURE).exp())
            .collect();
        let z: f64 = exps.iter().sum();
        exps.iter().map(|e| e / z).collect()
    }
}

/// Accumulates the frame-averaged magnitude spectrum over active steps.
#[derive(Debug, Clone)]
pub struct SpectrumAccumulator {
    sum: Vec<f64>,
    frames: usize,
}

impl Default for SpectrumAccumulator {
    fn default() -> Self {
        Self {
            sum: vec![0.0; NUM_BINS],
            frames: 0,
        }
    }
}

impl SpectrumAccumulator {
    pub fn add(&mut self, mean_magnitude: &[f64]) {
        self.sum
            .iter_mut()
            .zip(mean_magnitude)
            .for_each(|(s, m)| *s += m);
        self.frames += NUM_FRAMES;
    }

    pub fn is_empty(&self) -> bool {
        self.frames == 0
    }

    pub fn mean(&self) -> Vec<f64> {
        let steps = (self.frames / NUM_FRAMES).max(1) as f64;
        self.sum.iter().map(|s| s / steps).collect()
    }
}
