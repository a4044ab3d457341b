//! Small dense regressor from episodic memory windows to goal descriptors,
//! trained with MSE and Adam.

use std::f64::consts::PI;
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::accddoa::{Accddoa, VALUES_PER_CATEGORY};
use super::tracker::{make_record, propagate_estimate, record_dim, EpisodicBuffer, StepRecord};
use crate::error::{Error, Result};
use crate::geometry::{relative_goal, ActionKind, Point, Pose, FORWARD_STEP};

pub const WEIGHTS_VERSION: u32 = 1;
pub const DEFAULT_WINDOW: usize = 8;
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];
/// Episodes shorter than this are dropped from training.
pub const MIN_EPISODE_STEPS: usize = 30;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GdnConfig {
    pub num_categories: usize,
    pub window: usize,
    pub hidden: [usize; 2],
}

impl GdnConfig {
    pub fn new(num_categories: usize) -> Self {
        Self {
            num_categories,
            window: DEFAULT_WINDOW,
            hidden: DEFAULT_HIDDEN,
        }
    }

    pub fn record_dim(&self) -> usize {
        record_dim(self.num_categories)
    }

    pub fn input_dim(&self) -> usize {
        self.window * self.record_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.num_categories * VALUES_PER_CATEGORY
    }

    /// `[rows, cols]` of the three weight matrices.
    pub fn shapes(&self) -> [[usize; 2]; 3] {
        [
            [self.hidden[0], self.input_dim()],
            [self.hidden[1], self.hidden[0]],
            [self.output_dim(), self.hidden[1]],
        ]
    }

    pub fn num_params(&self) -> usize {
        self.shapes().iter().map(|[r, c]| r * c + r).sum()
    }
}

/// Network parameters in one flat vector (per layer: weights row-major, then
/// biases) together with the Adam moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdnWeights {
    pub version: u32,
    pub config: GdnConfig,
    pub shapes: Vec<[usize; 2]>,
    pub params: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub adam_t: u64,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    pub output: Vec<f64>,
}

fn dense(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    b.iter()
        .enumerate()
        .map(|(r, &bias)| {
            let row = &w[r * cols..(r + 1) * cols];
            bias + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
        })
        .collect()
}

impl GdnWeights {
    pub fn zeros(config: GdnConfig) -> Self {
        let n = config.num_params();
        Self {
            version: WEIGHTS_VERSION,
            config,
            shapes: config.shapes().to_vec(),
            params: vec![0.0; n],
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            adam_t: 0,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(config: GdnConfig, seed: u64) -> Self {
        let mut out = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut off = 0;
        for [r, c] in config.shapes() {
            let lim = (6.0 / (r + c) as f64).sqrt();
            for p in &mut out.params[off..off + r * c] {
                *p = rng.gen_range(-lim..lim);
            }
            off += r * c + r;
        }
        out
    }

    /// Offsets of (weights, biases) for layer `l`.
    fn layer(&self, l: usize) -> (usize, usize, [usize; 2]) {
        let mut off = 0;
        for s in &self.shapes[..l] {
            off += s[0] * s[1] + s[0];
        }
        let s = self.shapes[l];
        (off, off + s[0] * s[1], s)
    }

    fn wb(&self, l: usize) -> (&[f64], &[f64]) {
        let (w, b, [r, _]) = self.layer(l);
        (&self.params[w..b], &self.params[b..b + r])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Shape(m));
        if self.version != WEIGHTS_VERSION {
            return bad(format!("unsupported weights version {}", self.version));
        }
        if self.shapes != self.config.shapes().to_vec() {
            return bad(format!(
                "layer shapes {:?} do not match the config",
                self.shapes
            ));
        }
        let n = self.config.num_params();
        if self.params.len() != n || self.adam_m.len() != n || self.adam_v.len() != n {
            return bad(format!(
                "expected {n} parameters, got {}/{}/{}",
                self.params.len(),
                self.adam_m.len(),
                self.adam_v.len()
            ));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return bad("non-finite parameter".into());
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<ForwardCache> {
        if input.len() != self.config.input_dim() {
            return Err(Error::Shape(format!(
                "network input must have {} values, got {}",
                self.config.input_dim(),
                input.len()
            )));
        }
        let (w, b) = self.wb(0);
        let h1: Vec<f64> = dense(w, b, input).into_iter().map(f64::tanh).collect();
        let (w, b) = self.wb(1);
        let h2: Vec<f64> = dense(w, b, &h1).into_iter().map(f64::tanh).collect();
        let (w, b) = self.wb(2);
        let output = dense(w, b, &h2);
        Ok(ForwardCache {
            input: input.to_vec(),
            h1,
            h2,
            output,
        })
    }

    /// Adds the parameter gradient for one sample to `grad`, given the loss
    /// gradient with respect to the output.
    pub fn backward(&self, cache: &ForwardCache, d_out: &[f64], grad: &mut [f64]) {
        let mut delta = d_out.to_vec();
        let acts: [&[f64]; 3] = [&cache.input, &cache.h1, &cache.h2];
        for l in (0..3).rev() {
            let (w_off, b_off, [rows, cols]) = self.layer(l);
            let x = acts[l];
            for r in 0..rows {
                let d = delta[r];
                grad[b_off + r] += d;
                if d != 0.0 {
                    let g = &mut grad[w_off + r * cols..w_off + (r + 1) * cols];
                    g.iter_mut().zip(x).for_each(|(gi, xi)| *gi += d * xi);
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.params[w_off..b_off];
            let mut prev = vec![0.0; cols];
            for r in 0..rows {
                let d = delta[r];
                if d != 0.0 {
                    prev.iter_mut()
                        .zip(&w[r * cols..(r + 1) * cols])
                        .for_each(|(p, wi)| *p += d * wi);
                }
            }
            // tanh'(z) = 1 - tanh(z)^2, with the activation as the input of layer l.
            delta = prev.iter().zip(x).map(|(p, a)| p * (1.0 - a * a)).collect();
        }
    }

    /// One Adam update with the standard bias correction.
    pub fn adam_step(&mut self, grad: &[f64], lr: f64) {
        self.adam_t += 1;
        let t = self.adam_t as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        for (((p, m), v), &g) in self
            .params
            .iter_mut()
            .zip(&mut self.adam_m)
            .zip(&mut self.adam_v)
            .zip(grad)
        {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }

    /// Mean squared error over a batch and its gradient.
    pub fn loss_and_grad(&self, batch: &[(&[f64], &[f64])]) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let denom = (batch.len() * self.config.output_dim()).max(1) as f64;
        for (x, y) in batch {
            let cache = self.forward(x)?;
            let d_out: Vec<f64> = cache
                .output
                .iter()
                .zip(y.iter())
                .map(|(o, t)| {
                    loss += (o - t) * (o - t);
                    2.0 * (o - t) / denom
                })
                .collect();
            self.backward(&cache, &d_out, &mut grad);
        }
        Ok((loss / denom, grad))
    }

    pub fn loss(&self, batch: &[(&[f64], &[f64])]) -> Result<f64> {
        let denom = (batch.len() * self.config.output_dim()).max(1) as f64;
        let mut loss = 0.0;
        for (x, y) in batch {
            let out = self.forward(x)?.output;
            loss += out
                .iter()
                .zip(y.iter())
                .map(|(o, t)| (o - t) * (o - t))
                .sum::<f64>();
        }
        Ok(loss / denom)
    }

    /// Decoded descriptor for the current memory window.
    pub fn predict(&self, buffer: &EpisodicBuffer) -> Result<Accddoa> {
        let x = buffer.window(self.config.window, self.config.record_dim());
        Ok(Accddoa::from_regression(&self.forward(&x)?.output))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let w: Self = serde_json::from_str(&text)?;
        w.validate()?;
        Ok(w)
    }
}

/// Per-step memory records with their supervision targets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingEpisode {
    pub records: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl TrainingEpisode {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Memory windows ending at every step.
    pub fn windows(&self, window: usize) -> Vec<Vec<f64>> {
        let dim = self.records.first().map_or(0, Vec::len);
        let mut buf = EpisodicBuffer::new(window);
        self.records
            .iter()
            .enumerate()
            .map(|(t, r)| {
                buf.push(StepRecord {
                    t,
                    values: r.clone(),
                });
                buf.window(window, dim)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub initial_mse: f64,
    pub final_mse: f64,
    pub epoch_mse: Vec<f64>,
    pub episodes_used: usize,
    pub episodes_filtered: usize,
    pub samples: usize,
}

pub fn train_gdn(
    episodes: &[TrainingEpisode],
    config: GdnConfig,
    train: &TrainConfig,
) -> Result<(GdnWeights, TrainReport)> {
    let kept: Vec<&TrainingEpisode> = episodes
        .iter()
        .filter(|e| e.len() >= MIN_EPISODE_STEPS)
        .collect();
    let filtered = episodes.len() - kept.len();
    if filtered > 0 {
        warn!("dropped {filtered} training episodes shorter than {MIN_EPISODE_STEPS} steps");
    }
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for e in &kept {
        if e.records.len() != e.targets.len() {
            return Err(Error::Shape("records and targets differ in length".into()));
        }
        inputs.extend(e.windows(config.window));
        targets.extend(e.targets.iter().cloned());
    }
    if inputs.is_empty() {
        return Err(Error::Precondition(
            "no training episode survives the length filter".into(),
        ));
    }
    let all: Vec<(&[f64], &[f64])> = inputs
        .iter()
        .zip(&targets)
        .map(|(x, y)| (x.as_slice(), y.as_slice()))
        .collect();

    let mut weights = GdnWeights::init(config, train.seed);
    let initial_mse = weights.loss(&all)?;
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed ^ 0x5EED);
    let mut order: Vec<usize> = (0..all.len()).collect();
    let mut epoch_mse = Vec::with_capacity(train.epochs);
    for _ in 0..train.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(train.batch_size.max(1)) {
            let batch: Vec<(&[f64], &[f64])> = chunk.iter().map(|&i| all[i]).collect();
            let (_, grad) = weights.loss_and_grad(&batch)?;
            weights.adam_step(&grad, train.learning_rate);
        }
        epoch_mse.push(weights.loss(&all)?);
    }
    let final_mse = epoch_mse.last().copied().unwrap_or(initial_mse);
    Ok((
        weights,
        TrainReport {
            initial_mse,
            final_mse,
            epoch_mse,
            episodes_used: kept.len(),
            episodes_filtered: filtered,
            samples: all.len(),
        },
    ))
}

/// Goal-only label: ground truth while the goal sounds, all-inactive otherwise.
pub fn training_target(
    pose: &Pose,
    goal: Point,
    category: usize,
    num_categories: usize,
    goal_active: bool,
) -> Vec<f64> {
    if !goal_active {
        return Accddoa::inactive(num_categories).to_flat();
    }
    let (az, d) = relative_goal(pose, goal);
    Accddoa::single(num_categories, category, az, d.max(1e-9)).to_flat()
}

/// Random-walk episodes in open space with noisy goal measurements.
pub fn synthetic_episodes(n: usize, num_categories: usize, seed: u64) -> Vec<TrainingEpisode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let az_noise = Normal::new(0.0, 0.15).expect("valid sigma");
    let d_noise = Normal::new(0.0, 0.1).expect("valid sigma");
    (0..n)
        .map(|_| {
            let len = rng.gen_range(20..=90usize);
            let category = rng.gen_range(0..num_categories);
            let onset = rng.gen_range(0..=20usize);
            let active_len = rng.gen_range(4..=60usize);
            let ang = rng.gen_range(-PI..PI);
            let dist = rng.gen_range(4.0..20.0);
            let goal = Point::new(dist * ang.cos(), dist * ang.sin());
            let mut pose = Pose::identity();
            let mut estimate: Option<(f64, f64)> = None;
            let mut prev: Option<ActionKind> = None;
            let mut records = Vec::with_capacity(len);
            let mut targets = Vec::with_capacity(len);
            for t in 0..len {
                let active = t >= onset && t < onset + active_len;
                if let (Some((a, d)), Some(act)) = (estimate, prev) {
                    let moved = if act == ActionKind::MoveForward {
                        FORWARD_STEP
                    } else {
                        0.0
                    };
                    estimate = propagate_estimate(a, d, act, moved).ok();
                }
                let mut scores = vec![0.02; num_categories];
                if active {
                    let (az, d) = relative_goal(&pose, goal);
                    let meas = (
                        az + az_noise.sample(&mut rng),
                        (d * (1.0 + d_noise.sample(&mut rng))).max(0.25),
                    );
                    estimate = Some(match estimate {
                        None => meas,
                        Some((pa, pd)) => {
                            let s = 0.5 * pa.sin() + 0.5 * meas.0.sin();
                            let c = 0.5 * pa.cos() + 0.5 * meas.0.cos();
                            (s.atan2(c), 0.5 * pd + 0.5 * meas.1)
                        }
                    });
                    scores[category] = 1.0;
                }
                let z: f64 = scores.iter().sum();
                scores.iter_mut().for_each(|s| *s /= z);
                let norm_pose = [
                    pose.x / 20.0,
                    pose.y / 20.0,
                    pose.theta().sin(),
                    pose.theta().cos(),
                    t as f64 / 500.0,
                ];
                records.push(make_record(estimate, active, &scores, norm_pose, prev));
                targets.push(training_target(
                    &pose,
                    goal,
                    category,
                    num_categories,
                    active,
                ));

                let action = match rng.gen_range(0..10) {
                    0..=5 => ActionKind::MoveForward,
                    6 | 7 => ActionKind::TurnLeft,
                    _ => ActionKind::TurnRight,
                };
                pose = match action {
                    ActionKind::MoveForward => Pose {
                        x: pose.x + FORWARD_STEP * pose.theta().cos(),
                        y: pose.y + FORWARD_STEP * pose.theta().sin(),
                        heading: pose.heading,
                    },
                    ActionKind::TurnLeft => Pose {
                        heading: pose.heading.turned(1),
                        ..pose
                    },
                    ActionKind::TurnRight => Pose {
                        heading: pose.heading.turned(-1),
                        ..pose
                    },
                    ActionKind::Stop => pose,
                };
                prev = Some(action);
            }
            TrainingEpisode { records, targets }
        })
        .collect()
}
