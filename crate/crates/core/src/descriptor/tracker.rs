//! Dead-reckoning goal tracker with an episodic memory of fused step records.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::sync::Arc;

use super::accddoa::{Accddoa, DISTANCE_SCALE};
use super::estimate::{
    estimate_distance, CategoryTemplates, DistanceCalibration, GccPhat, SpectrumAccumulator,
};
use crate::acoustics::{AudioFeatures, BinauralFrame};
use crate::error::{Error, Result};
use crate::geometry::{angle_diff, wrap_angle, ActionKind, TURN_ANGLE};

pub const BUFFER_CAPACITY: usize = 128;
/// Frames louder than this multiple of the running noise floor count as active.
pub const VAD_RATIO: f64 = 10.0;
/// Absolute frame-energy floor for activity.
pub const VAD_MIN_ENERGY: f64 = 1e-3;
/// Upper bound on the weight given to a single measurement.
pub const MAX_BLEND: f64 = 0.5;
/// Distances are kept strictly positive after propagation.
const MIN_TRACK_DISTANCE: f64 = 1e-6;

/// Moves a relative goal estimate through one executed action.
///
/// `moved` is the actual forward displacement in meters (zero when blocked).
pub fn propagate_estimate(
    az: f64,
    dist: f64,
    action: ActionKind,
    moved: f64,
) -> Result<(f64, f64)> {
    if dist.is_nan() || dist <= 0.0 {
        return Err(Error::Precondition(format!(
            "distance must be positive, got {dist}"
        )));
    }
    Ok(match action {
        ActionKind::Stop => (az, dist),
        ActionKind::TurnLeft => (wrap_angle(az - TURN_ANGLE), dist),
        ActionKind::TurnRight => (wrap_angle(az + TURN_ANGLE), dist),
        ActionKind::MoveForward => {
            let gx = dist * az.cos() - moved;
            let gy = dist * az.sin();
            (gy.atan2(gx), gx.hypot(gy))
        }
    })
}

/// Width of one fused step record for `num_categories` categories.
pub fn record_dim(num_categories: usize) -> usize {
    4 + num_categories + 5 + 4
}

/// Builds a fused record:
/// `[sin az, cos az, d / 20, active, scores.., pose(5), prev action one-hot(4)]`.
pub fn make_record(
    estimate: Option<(f64, f64)>,
    active: bool,
    scores: &[f64],
    pose: [f64; 5],
    prev_action: Option<ActionKind>,
) -> Vec<f64> {
    let mut r = Vec::with_capacity(record_dim(scores.len()));
    match estimate {
        Some((az, d)) => r.extend([az.sin(), az.cos(), d / DISTANCE_SCALE]),
        None => r.extend([0.0; 3]),
    }
    r.push(if active { 1.0 } else { 0.0 });
    r.extend_from_slice(scores);
    r.extend_from_slice(&pose);
    r.extend(ActionKind::one_hot(prev_action));
    r
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub values: Vec<f64>,
}

/// Bounded chronological memory of the most recent step records.
#[derive(Debug, Clone)]
pub struct EpisodicBuffer {
    capacity: usize,
    records: VecDeque<StepRecord>,
}

impl Default for EpisodicBuffer {
    fn default() -> Self {
        Self::new(BUFFER_CAPACITY)
    }
}

impl EpisodicBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            records: VecDeque::with_capacity(capacity.max(1)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: StepRecord) {
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(record);
    }

    pub fn iter(&self) -> impl Iterator<Item = &StepRecord> {
        self.records.iter()
    }

    pub fn clear(&mut self) {
        self.records.clear();
    }

    /// The last `k` records flattened oldest-first, zero-padded at the front.
    pub fn window(&self, k: usize, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; k * dim];
        let take = k.min(self.records.len());
        let start = self.records.len() - take;
        for (slot, rec) in (k - take..k).zip(self.records.range(start..)) {
            let n = dim.min(rec.values.len());
            out[slot * dim..slot * dim + n].copy_from_slice(&rec.values[..n]);
        }
        out
    }
}

/// One acoustic (or injected) observation of the goal.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub azimuth: f64,
    /// Alternative direction when the measurement is front/back ambiguous.
    pub back_azimuth: Option<f64>,
    pub distance: f64,
    pub confidence: f64,
    /// Category distribution, if the measurement carries one.
    pub scores: Option<Vec<f64>>,
}

#[derive(Clone)]
pub struct Tracker {
    num_categories: usize,
    gcc: Arc<GccPhat>,
    calibration: DistanceCalibration,
    templates: Option<Arc<CategoryTemplates>>,
    noise_floor: f64,
    estimate: Option<(f64, f64)>,
    spectrum: SpectrumAccumulator,
    scores: Vec<f64>,
    buffer: EpisodicBuffer,
    t: usize,
    last_active: bool,
}

impl std::fmt::Debug for Tracker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tracker")
            .field("estimate", &self.estimate)
            .field("t", &self.t)
            .field("last_active", &self.last_active)
            .finish()
    }
}

impl Tracker {
    pub fn new(
        num_categories: usize,
        calibration: DistanceCalibration,
        templates: Option<Arc<CategoryTemplates>>,
    ) -> Self {
        Self {
            num_categories,
            gcc: Arc::new(GccPhat::new()),
            calibration,
            templates,
            noise_floor: 0.0,
            estimate: None,
            spectrum: SpectrumAccumulator::default(),
            scores: vec![1.0 / num_categories.max(1) as f64; num_categories],
            buffer: EpisodicBuffer::default(),
            t: 0,
            last_active: false,
        }
    }

    /// Internal relative estimate (azimuth, meters), kept through silence.
    pub fn estimate(&self) -> Option<(f64, f64)> {
        self.estimate
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn category(&self) -> usize {
        self.scores
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map_or(0, |(c, _)| c)
    }

    pub fn is_active(&self) -> bool {
        self.last_active
    }

    pub fn buffer(&self) -> &EpisodicBuffer {
        &self.buffer
    }

    /// Descriptor for the current step; active only while the goal is heard.
    pub fn output(&self) -> Accddoa {
        match (self.last_active, self.estimate) {
            (true, Some((az, d))) => Accddoa::single(self.num_categories, self.category(), az, d),
            _ => Accddoa::inactive(self.num_categories),
        }
    }

    /// Consumes one rendered step. `prev_action` and `moved` describe the
    /// action that led to this observation; `pose` is the normalized pose.
    pub fn update(
        &mut self,
        frame: &BinauralFrame,
        features: &AudioFeatures,
        prev_action: Option<ActionKind>,
        moved: f64,
        pose: [f64; 5],
    ) -> Result<Accddoa> {
        let energy = frame.energy();
        let threshold = (self.noise_floor * VAD_RATIO).max(VAD_MIN_ENERGY);
        let measurement = if energy > threshold {
            self.spectrum.add(&features.mean_magnitude_spectrum());
            let scores = self
                .templates
                .as_ref()
                .map(|t| t.classify(&self.spectrum.mean()));
            let az = self.gcc.estimate(frame);
            estimate_distance(frame, &self.calibration).map(|distance| Measurement {
                azimuth: az.azimuth,
                back_azimuth: Some(az.back()),
                distance,
                confidence: az.confidence,
                scores,
            })
        } else {
            self.noise_floor = 0.9 * self.noise_floor + 0.1 * energy;
            None
        };
        self.update_with_measurement(measurement, prev_action, moved, pose)
    }

    /// Propagates the prior through the last action and fuses `measurement`
    /// (if any). Used directly to bypass the acoustic front end.
    pub fn update_with_measurement(
        &mut self,
        measurement: Option<Measurement>,
        prev_action: Option<ActionKind>,
        moved: f64,
        pose: [f64; 5],
    ) -> Result<Accddoa> {
        if let (Some((az, d)), Some(action)) = (self.estimate, prev_action) {
            let (az, d) = propagate_estimate(az, d, action, moved)?;
            self.estimate = Some((az, d.max(MIN_TRACK_DISTANCE)));
        }
        self.last_active = measurement.is_some();
        if let Some(m) = measurement {
            if let Some(s) = &m.scores {
                if s.len() == self.num_categories {
                    self.scores.clone_from(s);
                }
            }
            let distance = m.distance.max(MIN_TRACK_DISTANCE);
            self.estimate = Some(match self.estimate {
                None => (m.azimuth, distance),
                Some((prior_az, prior_d)) => {
                    let meas_az = match m.back_azimuth {
                        Some(back)
                            if angle_diff(back, prior_az).abs()
                                < angle_diff(m.azimuth, prior_az).abs() =>
                        {
                            back
                        }
                        _ => m.azimuth,
                    };
                    let beta = m.confidence.clamp(0.0, 1.0) * MAX_BLEND;
                    let s = (1.0 - beta) * prior_az.sin() + beta * meas_az.sin();
                    let c = (1.0 - beta) * prior_az.cos() + beta * meas_az.cos();
                    let az = if s == 0.0 && c == 0.0 {
                        prior_az
                    } else {
                        s.atan2(c)
                    };
                    (az, (1.0 - beta) * prior_d + beta * distance)
                }
            });
        }
        let record = make_record(
            self.estimate,
            self.last_active,
            &self.scores,
            pose,
            prev_action,
        );
        self.buffer.push(StepRecord {
            t: self.t,
            values: record,
        });
        self.t += 1;
        Ok(self.output())
    }
}

/// Convenience for tests and tools: the azimuth half-turn ambiguity partner.
pub fn mirror_azimuth(az: f64) -> f64 {
    wrap_angle(PI - az)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tracker() -> Tracker {
        Tracker::new(3, DistanceCalibration { ref_energy: 1.0 }, None)
    }

    #[test]
    fn collinear_forward() {
        let (az, d) = propagate_estimate(0.0, 1.0, ActionKind::MoveForward, 0.25).unwrap();
        assert_eq!((az, d), (0.0, 0.75));
    }

    #[test]
    fn turn_left_decreases_azimuth() {
        let (az, _) =
            propagate_estimate(30f64.to_radians(), 2.0, ActionKind::TurnLeft, 0.0).unwrap();
        assert!((az - 15f64.to_radians()).abs() < 1e-12);
    }

    #[test]
    fn lateral_forward() {
        let (az, d) = propagate_estimate(PI / 2.0, 1.0, ActionKind::MoveForward, 0.25).unwrap();
        assert!((d - 1.0625f64.sqrt()).abs() < 1e-12);
        assert!((az.to_degrees() - 104.036).abs() < 1e-3);
    }

    #[test]
    fn nonpositive_distance_rejected() {
        assert!(propagate_estimate(0.0, 0.0, ActionKind::Stop, 0.0).is_err());
    }

    #[test]
    fn buffer_window_law() {
        let mut b = EpisodicBuffer::new(4);
        for t in 0..10 {
            b.push(StepRecord {
                t,
                values: vec![t as f64; 2],
            });
            assert_eq!(b.len(), (t + 1).min(4));
            let ts: Vec<usize> = b.iter().map(|r| r.t).collect();
            assert_eq!(ts, ((t + 1).saturating_sub(4)..=t).collect::<Vec<_>>());
        }
        let w = b.window(6, 2);
        assert_eq!(w, vec![0., 0., 0., 0., 6., 6., 7., 7., 8., 8., 9., 9.]);
    }

    #[test]
    fn never_sounding_is_inactive() {
        let mut t = tracker();
        let feats = crate::acoustics::stft_features(&BinauralFrame::silent()).unwrap();
        for _ in 0..5 {
            let out = t
                .update(
                    &BinauralFrame::silent(),
                    &feats,
                    Some(ActionKind::MoveForward),
                    0.25,
                    [0.0; 5],
                )
                .unwrap();
            assert!(out.is_inactive());
        }
        assert!(t.estimate().is_none());
    }

    #[test]
    fn silence_then_two_left_turns() {
        let mut t = tracker();
        let m = Measurement {
            azimuth: 0.4,
            back_azimuth: None,
            distance: 3.0,
            confidence: 1.0,
            scores: None,
        };
        t.update_with_measurement(Some(m), None, 0.0, [0.0; 5])
            .unwrap();
        let (before, d0) = t.estimate().unwrap();
        t.update_with_measurement(None, Some(ActionKind::TurnLeft), 0.0, [0.0; 5])
            .unwrap();
        let out = t
            .update_with_measurement(None, Some(ActionKind::TurnLeft), 0.0, [0.0; 5])
            .unwrap();
        let (after, d1) = t.estimate().unwrap();
        assert!((before - after - 30f64.to_radians()).abs() < 1e-12);
        assert_eq!(d0, d1);
        assert!(out.is_inactive());
    }

    #[test]
    fn back_hypothesis_follows_prior() {
        let mut t = tracker();
        let first = Measurement {
            azimuth: 2.5,
            back_azimuth: None,
            distance: 2.0,
            confidence: 1.0,
            scores: None,
        };
        t.update_with_measurement(Some(first), None, 0.0, [0.0; 5])
            .unwrap();
        let m = Measurement {
            azimuth: mirror_azimuth(2.5),
            back_azimuth: Some(2.5),
            distance: 2.0,
            confidence: 1.0,
            scores: None,
        };
        t.update_with_measurement(Some(m), Some(ActionKind::Stop), 0.0, [0.0; 5])
            .unwrap();
        assert!((t.estimate().unwrap().0 - 2.5).abs() < 1e-12);
    }
}
