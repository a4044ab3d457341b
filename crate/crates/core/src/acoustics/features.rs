//! STFT front end: magnitude, phase-difference and level-difference maps.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::render::BinauralFrame;
use super::SAMPLES_PER_STEP;
use crate::error::{Error, Result};

pub const FFT_SIZE: usize = 512;
pub const HOP: usize = 160;
pub const NUM_BINS: usize = FFT_SIZE / 2 + 1;
pub const NUM_FRAMES: usize = 1 + (SAMPLES_PER_STEP - FFT_SIZE) / HOP;
pub const NUM_CHANNELS: usize = 4;
/// Guards the logarithm in the level difference.
pub const ILD_EPS: f64 = 1e-8;

/// Feature tensor laid out as `[channel][frame][bin]`, flattened.
///
/// Channels: mean magnitude, sin(IPD), cos(IPD), ILD (natural log ratio).
#[derive(Debug, Clone, PartialEq)]
pub struct AudioFeatures {
    pub data: Vec<f64>,
}

impl AudioFeatures {
    pub const SHAPE: [usize; 3] = [NUM_CHANNELS, NUM_FRAMES, NUM_BINS];

    pub fn get(&self, channel: usize, frame: usize, bin: usize) -> f64 {
        self.data[(channel * NUM_FRAMES + frame) * NUM_BINS + bin]
    }

    fn set(&mut self, channel: usize, frame: usize, bin: usize, v: f64) {
        self.data[(channel * NUM_FRAMES + frame) * NUM_BINS + bin] = v;
    }

    /// Magnitude channel averaged over frames.
    pub fn mean_magnitude_spectrum(&self) -> Vec<f64> {
        let mut out = vec![0.0; NUM_BINS];
        for f in 0..NUM_FRAMES {
            for (b, o) in out.iter_mut().enumerate() {
                *o += self.get(0, f, b);
            }
        }
        out.iter_mut().for_each(|v| *v /= NUM_FRAMES as f64);
        out
    }
}

/// Short-time Fourier transform with a periodic Hann window and no padding.
pub struct Stft {
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl Default for Stft {
    fn default() -> Self {
        Self::new()
    }
}

impl Stft {
    pub fn new() -> Self {
        let window = (0..FFT_SIZE)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / FFT_SIZE as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(FFT_SIZE);
        Self { window, fft }
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// One-sided spectra, `frames x NUM_BINS`.
    pub fn transform(&self, x: &[f64]) -> Vec<Vec<Complex<f64>>> {
        if x.len() < FFT_SIZE {
            return Vec::new();
        }
        let frames = 1 + (x.len() - FFT_SIZE) / HOP;
        (0..frames)
            .map(|f| {
                let seg = &x[f * HOP..f * HOP + FFT_SIZE];
                let mut buf: Vec<Complex<f64>> = seg
                    .iter()
                    .zip(&self.window)
                    .map(|(s, w)| Complex::new(s * w, 0.0))
                    .collect();
                self.fft.process(&mut buf);
                buf.truncate(NUM_BINS);
                buf
            })
            .collect()
    }

    pub fn features(&self, frame: &BinauralFrame) -> Result<AudioFeatures> {
        frame.check_shape().map_err(|_| {
            Error::Shape(format!(
                "stft_features expects 2x{SAMPLES_PER_STEP} samples, got {}/{}",
                frame.left.len(),
                frame.right.len()
            ))
        })?;
        let l = self.transform(&frame.left);
        let r = self.transform(&frame.right);
        let mut out = AudioFeatures {
            data: vec![0.0; NUM_CHANNELS * NUM_FRAMES * NUM_BINS],
        };
        for f in 0..NUM_FRAMES {
            for b in 0..NUM_BINS {
                let (zl, zr) = (l[f][b], r[f][b]);
                let (ml, mr) = (zl.norm(), zr.norm());
                // arg(L * conj(R)) is the phase difference; atan2(0, 0) = 0.
                let ipd = (zl * zr.conj()).arg();
                out.set(0, f, b, 0.5 * (ml + mr));
                out.set(1, f, b, ipd.sin());
                out.set(2, f, b, ipd.cos());
                out.set(3, f, b, (ml + ILD_EPS).ln() - (mr + ILD_EPS).ln());
            }
        }
        Ok(out)
    }
}

/// Convenience wrapper building a fresh transform.
pub fn stft_features(frame: &BinauralFrame) -> Result<AudioFeatures> {
    Stft::new().features(frame)
}
