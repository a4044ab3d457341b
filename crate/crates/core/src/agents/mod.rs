//! Scripted navigation policies: Random, Oracle1, Oracle2 and Tracker.

mod nav;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use nav::{aligned, EgoMap, NavController};

use crate::acoustics::Stft;
use crate::descriptor::{
    propagate_estimate, Accddoa, CategoryTemplates, DistanceCalibration, Tracker,
};
use crate::env::ObservationBundle;
use crate::error::{Error, Result};
use crate::geometry::ActionKind;

pub const DEFAULT_STOP_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Random,
    Oracle1,
    Oracle2,
    Tracker,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [
        AgentKind::Random,
        AgentKind::Oracle1,
        AgentKind::Oracle2,
        AgentKind::Tracker,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Random => "random",
            AgentKind::Oracle1 => "oracle1",
            AgentKind::Oracle2 => "oracle2",
            AgentKind::Tracker => "tracker",
        }
    }

    /// Whether the agent listens to the rendered audio.
    pub fn needs_audio(self) -> bool {
        self == AgentKind::Tracker
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown agent kind {s:?}")))
    }
}

/// Agent selection and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub kind: AgentKind,
    #[serde(default = "default_stop_threshold")]
    pub stop_threshold: f64,
    #[serde(default)]
    pub seed: u64,
    /// Action probabilities for the random agent, indexed like `ActionKind`.
    #[serde(default = "default_distribution")]
    pub random_distribution: [f64; 4],
}

fn default_stop_threshold() -> f64 {
    DEFAULT_STOP_THRESHOLD
}

fn default_distribution() -> [f64; 4] {
    [0.25; 4]
}

impl AgentConfig {
    pub fn new(kind: AgentKind) -> Self {
        Self {
            kind,
            stop_threshold: DEFAULT_STOP_THRESHOLD,
            seed: 0,
            random_distribution: default_distribution(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stop_threshold.is_finite() && self.stop_threshold >= 0.0) {
            return Err(Error::Config(format!(
                "stop threshold must be a non-negative number, got {}",
                self.stop_threshold
            )));
        }
        let d = &self.random_distribution;
        if d.iter().any(|p| !(p.is_finite() && *p >= 0.0))
            || (d.iter().sum::<f64>() - 1.0).abs() > 1e-6
        {
            return Err(Error::Config(format!(
                "random action distribution must be non-negative and sum to 1, got {d:?}"
            )));
        }
        Ok(())
    }
}

/// Listening components for the tracker agent.
#[derive(Debug, Clone)]
pub struct ListeningKit {
    pub num_categories: usize,
    pub calibration: DistanceCalibration,
    pub templates: Option<Arc<CategoryTemplates>>,
}

enum Brain {
    Random(WeightedIndex<f64>),
    Oracle {
        memory: Option<(f64, f64)>,
    },
    Tracker {
        tracker: Box<Tracker>,
        stft: Stft,
        output: Accddoa,
    },
}

/// One agent instance, living for one episode.
pub struct Agent {
    kind: AgentKind,
    rng: ChaCha8Rng,
    nav: NavController,
    brain: Brain,
}

impl fmt::Debug for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Agent").field("kind", &self.kind).finish()
    }
}

impl Agent {
    /// `seed` should be derived from the agent seed and the episode.
    pub fn new(cfg: &AgentConfig, seed: u64, kit: Option<ListeningKit>) -> Result<Self> {
        cfg.validate()?;
        let brain = match cfg.kind {
            AgentKind::Random => Brain::Random(
                WeightedIndex::new(cfg.random_distribution)
                    .map_err(|e| Error::Config(format!("random action distribution: {e}")))?,
            ),
            AgentKind::Oracle1 | AgentKind::Oracle2 => Brain::Oracle { memory: None },
            AgentKind::Tracker => {
                let kit = kit.ok_or_else(|| {
                    Error::Config("the tracker agent needs a distance calibration".into())
                })?;
                Brain::Tracker {
                    tracker: Box::new(Tracker::new(
                        kit.num_categories,
                        kit.calibration,
                        kit.templates,
                    )),
                    stft: Stft::new(),
                    output: Accddoa::inactive(kit.num_categories),
                }
            }
        };
        Ok(Self {
            kind: cfg.kind,
            rng: ChaCha8Rng::seed_from_u64(seed),
            nav: NavController::new(cfg.stop_threshold),
            brain,
        })
    }

    pub fn kind(&self) -> AgentKind {
        self.kind
    }

    /// The tracker's descriptor for the last observation.
    pub fn estimate(&self) -> Option<&Accddoa> {
        match &self.brain {
            Brain::Tracker { output, .. } => Some(output),
            _ => None,
        }
    }

    /// The tracker's memory record for the last observation.
    pub fn last_record(&self) -> Option<&[f64]> {
        match &self.brain {
            Brain::Tracker { tracker, .. } => {
                tracker.buffer().iter().last().map(|r| r.values.as_slice())
            }
            _ => None,
        }
    }

    /// Current relative goal belief (azimuth, meters), if any.
    pub fn belief(&self) -> Option<(f64, f64)> {
        match &self.brain {
            Brain::Oracle { memory } => *memory,
            Brain::Tracker { tracker, .. } => tracker.estimate(),
            Brain::Random(_) => None,
        }
    }

    /// Chooses the next action. Oracle agents read `label`; the tracker
    /// ignores it and listens to `obs.binaural`; `pose` is the normalized
    /// pose fed to the tracker's memory.
    pub fn act(
        &mut self,
        obs: &ObservationBundle,
        label: &Accddoa,
        pose: [f64; 5],
    ) -> Result<ActionKind> {
        self.nav.observe(obs);
        let belief = match &mut self.brain {
            Brain::Random(dist) => {
                let i = dist.sample(&mut self.rng);
                return Ok(ActionKind::ALL[i]);
            }
            Brain::Oracle { memory } => {
                *memory = match (label.active(), *memory, obs.prev_action) {
                    (Some((_, track)), _, _) => Some((track.azimuth(), track.distance_m())),
                    (None, Some((az, d)), Some(action)) => {
                        let (az, d) = propagate_estimate(az, d, action, obs.moved)?;
                        Some((az, d.max(1e-6)))
                    }
                    (None, m, _) => m,
                };
                *memory
            }
            Brain::Tracker {
                tracker,
                stft,
                output,
            } => {
                let features = stft.features(&obs.binaural)?;
                *output =
                    tracker.update(&obs.binaural, &features, obs.prev_action, obs.moved, pose)?;
                tracker.estimate()
            }
        };
        Ok(match belief {
            Some((az, d)) => self.nav.steer(obs, az, d),
            None => self.nav.explore(obs, &mut self.rng),
        })
    }
}
