//! Episode lifecycle: stepping, observations, sound scheduling, termination
//! and rewards.

pub mod trace;

use std::f64::consts::FRAC_PI_4;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::acoustics::rir::binaural_rir_with_len;
use crate::acoustics::{
    mix_sources, rir_length, synth_source, BinauralFrame, BinauralRir, RenderState, SoundBank,
    SourceSound, DEFAULT_MAX_ORDER, STEP_SECONDS,
};
use crate::dataset::{EpisodeSpec, SoundPlacement};
use crate::descriptor::{oracle_accddoa, Accddoa, OracleMode};
use crate::error::{Error, Result};
use crate::geometry::{
    cast_ray, step_pose, ActionKind, DistanceField, Point, Pose, Scene, ScenePlan,
};
use crate::seed::derive_seed;

pub use trace::{read_traces, write_traces, EpisodeTrace, TraceStep, TraceSummary};

pub const SUCCESS_DISTANCE: f64 = 1.0;
pub const MAX_ACTIONS: usize = 500;
pub const SUCCESS_REWARD: f64 = 10.0;
pub const TIME_PENALTY: f64 = 0.01;
pub const SCAN_RAYS: usize = 32;
pub const SCAN_RANGE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Clean,
    Distracted,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Clean => "clean",
            Condition::Distracted => "distracted",
        })
    }
}

impl FromStr for Condition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(Condition::Clean),
            "distracted" => Ok(Condition::Distracted),
            other => Err(Error::Config(format!(
                "unknown condition '{other}' (expected clean or distracted)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Termination {
    Running,
    Success,
    StoppedWrongPlace,
    StoppedAtDistractor,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationConfig {
    /// Distance scale in meters.
    pub distance_scale: f64,
    /// Step horizon.
    pub max_steps: usize,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        Self {
            distance_scale: 20.0,
            max_steps: MAX_ACTIONS,
        }
    }
}

impl NormalizationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.distance_scale.is_nan() || self.distance_scale <= 0.0 || self.max_steps == 0 {
            return Err(Error::Config(format!(
                "normalization needs d > 0 and t_max > 0, got {} and {}",
                self.distance_scale, self.max_steps
            )));
        }
        Ok(())
    }
}

/// `[x / d, y / d, sin θ, cos θ, t / t_max]`.
pub fn normalize_pose(pose: &Pose, t: usize, cfg: &NormalizationConfig) -> [f64; 5] {
    let (s, c) = pose.theta().sin_cos();
    [
        pose.x / cfg.distance_scale,
        pose.y / cfg.distance_scale,
        s,
        c,
        t as f64 / cfg.max_steps as f64,
    ]
}

/// Ranges along 32 rays spread evenly over ±45° about the heading.
pub fn range_scan(scene: &ScenePlan, pose: &Pose) -> Vec<f64> {
    let o = pose.position();
    (0..SCAN_RAYS)
        .map(|i| {
            let rel = -FRAC_PI_4 + 2.0 * FRAC_PI_4 * i as f64 / (SCAN_RAYS - 1) as f64;
            cast_ray(scene, o, pose.theta() + rel, SCAN_RANGE)
        })
        .collect()
}

/// Step-granular activity window of a sound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoundSchedule {
    pub onset_step: usize,
    pub steps: usize,
}

impl SoundSchedule {
    /// Onset is rounded down to a step boundary; the window lasts at least
    /// one step.
    pub fn new(onset_s: f64, duration_s: f64) -> Self {
        Self {
            onset_step: (onset_s / STEP_SECONDS + 1e-9).floor() as usize,
            steps: ((duration_s / STEP_SECONDS).round() as usize).max(1),
        }
    }

    pub fn end_step(&self) -> usize {
        self.onset_step + self.steps
    }

    pub fn is_active(&self, t: usize) -> bool {
        t >= self.onset_step && t < self.end_step()
    }

    /// Which chunk of the source plays during step `t`.
    pub fn chunk_index(&self, t: usize) -> Option<usize> {
        self.is_active(t).then(|| t - self.onset_step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvConfig {
    pub max_order: u32,
    /// When false the binaural stream is all zeros and nothing is rendered.
    pub render_audio: bool,
    pub max_actions: usize,
    pub normalization: NormalizationConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            max_order: DEFAULT_MAX_ORDER,
            render_audio: true,
            max_actions: MAX_ACTIONS,
            normalization: NormalizationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBundle {
    pub binaural: BinauralFrame,
    pub range_scan: Vec<f64>,
    /// Pose relative to the episode start.
    pub pose: Pose,
    pub t: usize,
    pub prev_action: Option<ActionKind>,
    /// Forward displacement produced by `prev_action`.
    pub moved: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    pub termination: Termination,
    pub dtg: f64,
}

#[derive(Debug, Clone)]
struct SourceTrack {
    placement: SoundPlacement,
    sound: Option<SourceSound>,
    state: RenderState,
}

/// One running episode.
#[derive(Debug, Clone)]
pub struct Environment {
    scene: Arc<Scene>,
    spec: EpisodeSpec,
    cfg: EnvConfig,
    condition: Condition,
    bank: SoundBank,
    seed: u64,
    schedule: SoundSchedule,
    field: DistanceField,
    rir_len: usize,
    start: Pose,
    pose: Pose,
    t: usize,
    prev_action: Option<ActionKind>,
    moved: f64,
    geodesic: f64,
    path_length: f64,
    termination: Termination,
    sources: Vec<SourceTrack>,
}

impl Environment {
    /// Builds the episode and returns the first observation.
    pub fn reset(
        scene: Arc<Scene>,
        spec: &EpisodeSpec,
        bank: SoundBank,
        condition: Condition,
        cfg: EnvConfig,
        seed: u64,
    ) -> Result<(Self, ObservationBundle)> {
        cfg.normalization.validate()?;
        spec.validate(&bank, &scene)?;
        let schedule = SoundSchedule::new(spec.onset_s, spec.duration_s);
        let field = scene.distance_field_to(spec.goal.point)?;
        let geodesic = scene.geodesic_with(&field, spec.start.position())?;
        let mut placements = vec![spec.goal];
        if condition == Condition::Distracted {
            placements.extend(spec.distractor);
        }
        let mut sources = Vec::with_capacity(placements.len());
        for (k, p) in placements.into_iter().enumerate() {
            let sound = if cfg.render_audio {
                Some(synth_source(
                    &bank,
                    p.category_id,
                    p.sound_variant,
                    spec.duration_s,
                    derive_seed(seed, "source", k as u64),
                )?)
            } else {
                None
            };
            sources.push(SourceTrack {
                placement: p,
                sound,
                state: RenderState::new(),
            });
        }
        let mut env = Self {
            rir_len: rir_length(&scene.plan, cfg.max_order),
            scene,
            spec: spec.clone(),
            cfg,
            condition,
            bank,
            seed,
            schedule,
            field,
            start: spec.start,
            pose: spec.start,
            t: 0,
            prev_action: None,
            moved: 0.0,
            geodesic,
            path_length: 0.0,
            termination: Termination::Running,
            sources,
        };
        let obs = env.observe()?;
        Ok((env, obs))
    }

    fn render(&mut self) -> Result<BinauralFrame> {
        if !self.cfg.render_audio {
            return Ok(BinauralFrame::silent());
        }
        let empty = BinauralRir {
            left: Vec::new(),
            right: Vec::new(),
            order: self.cfg.max_order,
        };
        let mut frames = Vec::with_capacity(self.sources.len());
        for src in &mut self.sources {
            let sound = src.sound.as_ref().expect("audio sources are synthesized");
            let chunk = self.schedule.chunk_index(self.t).map(|k| sound.chunk(k));
            let frame = match chunk {
                Some(c) if c.iter().any(|&v| v != 0.0) => {
                    let rir = binaural_rir_with_len(
                        &self.scene.plan,
                        src.placement.point,
                        &self.pose,
                        self.cfg.max_order,
                        self.rir_len,
                    )?;
                    src.state.render_step(&c, &rir)?
                }
                _ => src
                    .state
                    .render_step(&vec![0.0; crate::acoustics::SAMPLES_PER_STEP], &empty)?,
            };
            frames.push(frame);
        }
        mix_sources(&frames)
    }

    fn observe(&mut self) -> Result<ObservationBundle> {
        Ok(ObservationBundle {
            binaural: self.render()?,
            range_scan: range_scan(&self.scene.plan, &self.pose),
            pose: self.pose.relative_to(&self.start),
            t: self.t,
            prev_action: self.prev_action,
            moved: self.moved,
        })
    }

    pub fn step(&mut self, action: ActionKind) -> Result<(ObservationBundle, StepOutcome)> {
        if self.is_done() {
            return Err(Error::EpisodeDone);
        }
        let (pose, moved) = step_pose(&self.scene.plan, &self.pose, action)?;
        self.pose = pose;
        self.moved = moved;
        self.path_length += moved;
        self.prev_action = Some(action);
        self.t += 1;
        let prev_geo = self.geodesic;
        self.geodesic = self.scene.geodesic_with(&self.field, pose.position())?;

        let here = pose.position();
        if action == ActionKind::Stop {
            self.termination = if here.dist(self.spec.goal.point) <= SUCCESS_DISTANCE {
                Termination::Success
            } else if self
                .spec
                .distractor
                .filter(|_| self.condition == Condition::Distracted)
                .is_some_and(|d| here.dist(d.point) <= SUCCESS_DISTANCE)
            {
                Termination::StoppedAtDistractor
            } else {
                Termination::StoppedWrongPlace
            };
        } else if self.t >= self.cfg.max_actions {
            self.termination = Termination::Timeout;
        }
        let success = self.termination == Termination::Success;
        let reward =
            if success { SUCCESS_REWARD } else { 0.0 } + (prev_geo - self.geodesic) - TIME_PENALTY;
        let obs = self.observe()?;
        Ok((
            obs,
            StepOutcome {
                reward,
                done: self.is_done(),
                termination: self.termination,
                dtg: self.geodesic,
            },
        ))
    }

    pub fn is_done(&self) -> bool {
        self.termination != Termination::Running
    }

    pub fn termination(&self) -> Termination {
        self.termination
    }

    /// World-frame pose.
    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn start(&self) -> Pose {
        self.start
    }

    /// Index of the current observation, equal to the number of actions taken.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn num_actions(&self) -> usize {
        self.t
    }

    pub fn path_length(&self) -> f64 {
        self.path_length
    }

    /// Geodesic distance from the agent to the goal.
    pub fn geodesic(&self) -> f64 {
        self.geodesic
    }

    pub fn spec(&self) -> &EpisodeSpec {
        &self.spec
    }

    pub fn scene(&self) -> &Arc<Scene> {
        &self.scene
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn schedule(&self) -> SoundSchedule {
        self.schedule
    }

    pub fn goal_active(&self) -> bool {
        self.schedule.is_active(self.t)
    }

    /// Ground-truth descriptor for the current observation.
    pub fn label(&self, mode: OracleMode) -> Accddoa {
        oracle_accddoa(
            &self.pose,
            self.spec.goal.point,
            self.spec.goal.category_id as usize,
            self.bank.goal_categories as usize,
            self.goal_active(),
            mode,
        )
    }

    pub fn normalized_pose(&self) -> [f64; 5] {
        normalize_pose(
            &self.pose.relative_to(&self.start),
            self.t,
            &self.cfg.normalization,
        )
    }

    pub fn goal_point(&self) -> Point {
        self.spec.goal.point
    }
}
