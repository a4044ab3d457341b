//! Per-step binaural rendering with accumulated reverberation tails.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::rir::BinauralRir;
use super::SAMPLES_PER_STEP;
use crate::error::{Error, Result};

/// One step of two-channel audio.
#[derive(Debug, Clone, PartialEq)]
pub struct BinauralFrame {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl BinauralFrame {
    pub fn silent() -> Self {
        Self {
            left: vec![0.0; SAMPLES_PER_STEP],
            right: vec![0.0; SAMPLES_PER_STEP],
        }
    }

    pub fn energy(&self) -> f64 {
        self.left.iter().chain(&self.right).map(|x| x * x).sum()
    }

    pub fn peak(&self) -> f64 {
        self.left
            .iter()
            .chain(&self.right)
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn check_shape(&self) -> Result<()> {
        if self.left.len() != SAMPLES_PER_STEP || self.right.len() != SAMPLES_PER_STEP {
            return Err(Error::Shape(format!(
                "binaural frame must be 2x{SAMPLES_PER_STEP}, got {}/{}",
                self.left.len(),
                self.right.len()
            )));
        }
        Ok(())
    }
}

struct Plan {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Linear convolution through a cached FFT plan.
#[derive(Default)]
pub struct FftConvolver {
    plan: Option<Plan>,
}

impl std::fmt::Debug for FftConvolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftConvolver")
            .field("size", &self.plan.as_ref().map(|p| p.size))
            .finish()
    }
}

impl Clone for FftConvolver {
    fn clone(&self) -> Self {
        Self::default()
    }
}

impl FftConvolver {
    fn plan(&mut self, size: usize) -> &Plan {
        if self.plan.as_ref().is_none_or(|p| p.size != size) {
            let mut planner = FftPlanner::new();
            self.plan = Some(Plan {
                size,
                forward: planner.plan_fft_forward(size),
                inverse: planner.plan_fft_inverse(size),
            });
        }
        self.plan.as_ref().expect("plan just created")
    }

    /// Full linear convolution of one signal with two filters.
    pub fn convolve_pair(&mut self, x: &[f64], h: [&[f64]; 2]) -> [Vec<f64>; 2] {
        let hl = h[0].len().max(h[1].len());
        let out_len = x.len() + hl - 1;
        let size = out_len.next_power_of_two();
        let plan = self.plan(size);
        let mut xs: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        xs.resize(size, Complex::default());
        plan.forward.process(&mut xs);
        let scale = 1.0 / size as f64;
        h.map(|filter| {
            let mut hs: Vec<Complex<f64>> = filter.iter().map(|&v| Complex::new(v, 0.0)).collect();
            hs.resize(size, Complex::default());
            plan.forward.process(&mut hs);
            for (a, b) in hs.iter_mut().zip(&xs) {
                *a *= *b;
            }
            plan.inverse.process(&mut hs);
            hs[..out_len].iter().map(|c| c.re * scale).collect()
        })
    }
}

/// Residual reverberation carried into later steps.
#[derive(Debug, Clone, Default)]
pub struct RenderState {
    pub tail_left: Vec<f64>,
    pub tail_right: Vec<f64>,
    conv: FftConvolver,
}

impl RenderState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tail_energy(&self) -> f64 {
        self.tail_left
            .iter()
            .chain(&self.tail_right)
            .map(|x| x * x)
            .sum()
    }

    /// Convolves one step of source audio with the current RIR and adds the
    /// stored tail; whatever extends beyond the step becomes the new tail.
    pub fn render_step(&mut self, chunk: &[f64], rir: &BinauralRir) -> Result<BinauralFrame> {
        if chunk.len() != SAMPLES_PER_STEP {
            return Err(Error::Shape(format!(
                "render chunk must be {SAMPLES_PER_STEP} samples, got {}",
                chunk.len()
            )));
        }
        let [yl, yr] = if chunk.iter().all(|&v| v == 0.0) || rir.is_empty() {
            [Vec::new(), Vec::new()]
        } else {
            self.conv.convolve_pair(chunk, [&rir.left, &rir.right])
        };
        let (left, tail_left) = overlap_add(&yl, &self.tail_left);
        let (right, tail_right) = overlap_add(&yr, &self.tail_right);
        self.tail_left = tail_left;
        self.tail_right = tail_right;
        Ok(BinauralFrame { left, right })
    }
}

fn overlap_add(y: &[f64], tail: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = SAMPLES_PER_STEP;
    let total = y.len().max(tail.len()).max(n);
    let mut sum = vec![0.0; total];
    for (s, v) in sum.iter_mut().zip(y) {
        *s += v;
    }
    for (s, v) in sum.iter_mut().zip(tail) {
        *s += v;
    }
    let mut new_tail = sum.split_off(n);
    // Trailing zeros carry no information.
    while new_tail.last() == Some(&0.0) {
        new_tail.pop();
    }
    (sum, new_tail)
}

/// Sample-wise sum of equally shaped frames.
pub fn mix_sources(frames: &[BinauralFrame]) -> Result<BinauralFrame> {
    let mut out = BinauralFrame::silent();
    for f in frames {
        f.check_shape()?;
        for (o, v) in out.left.iter_mut().zip(&f.left) {
            *o += v;
        }
        for (o, v) in out.right.iter_mut().zip(&f.right) {
            *o += v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rir(len: usize) -> BinauralRir {
        BinauralRir {
            left: (0..len)
                .map(|i| ((i * 7) % 11) as f64 / 10.0 - 0.5)
                .collect(),
            right: (0..len).map(|i| ((i * 3) % 5) as f64 / 4.0 - 0.3).collect(),
            order: 1,
        }
    }

    #[test]
    fn silent_chunk_gives_silence() {
        let mut st = RenderState::new();
        let f = st
            .render_step(&vec![0.0; SAMPLES_PER_STEP], &rir(900))
            .unwrap();
        assert_eq!(f, BinauralFrame::silent());
        assert!(st.tail_left.is_empty());
    }

    #[test]
    fn impulse_reproduces_rir_head() {
        let h = rir(6000);
        let mut chunk = vec![0.0; SAMPLES_PER_STEP];
        chunk[0] = 1.0;
        let mut st = RenderState::new();
        let f = st.render_step(&chunk, &h).unwrap();
        for i in 0..SAMPLES_PER_STEP {
            assert!((f.left[i] - h.left[i]).abs() < 1e-12);
            assert!((f.right[i] - h.right[i]).abs() < 1e-12);
        }
        // the rest of the RIR is in the tail
        assert!(st.tail_left.len() < h.len());
        let f2 = st.render_step(&vec![0.0; SAMPLES_PER_STEP], &h).unwrap();
        assert!((f2.left[0] - h.left[SAMPLES_PER_STEP]).abs() < 1e-12);
    }

    #[test]
    fn wrong_chunk_length() {
        let mut st = RenderState::new();
        assert!(matches!(
            st.render_step(&[0.0; 10], &rir(10)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn mix_identity_and_cancellation() {
        let mut a = BinauralFrame::silent();
        a.left[3] = 0.5;
        a.right[9] = -0.25;
        assert_eq!(mix_sources(&[a.clone()]).unwrap(), a);
        let neg = BinauralFrame {
            left: a.left.iter().map(|x| -x).collect(),
            right: a.right.iter().map(|x| -x).collect(),
        };
        assert_eq!(mix_sources(&[a, neg]).unwrap(), BinauralFrame::silent());
        let short = BinauralFrame {
            left: vec![0.0; 5],
            right: vec![0.0; 5],
        };
        assert!(mix_sources(&[short]).is_err());
    }
}
