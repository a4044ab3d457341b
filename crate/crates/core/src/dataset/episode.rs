use serde::{Deserialize, Serialize};

use crate::acoustics::SoundBank;
use crate::error::{Error, Result};
use crate::geometry::{Point, Pose, Scene};

pub const MAX_ONSET_S: f64 = 5.0;
pub const MIN_DURATION_S: f64 = 1.0;
pub const MAX_DURATION_S: f64 = 45.0;
pub const MIN_DISTRACTOR_GAP: f64 = 2.0;

/// A sounding object placed in a scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoundPlacement {
    pub point: Point,
    pub category_id: u32,
    pub sound_variant: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub id: String,
    pub scene_id: String,
    pub start: Pose,
    pub goal: SoundPlacement,
    #[serde(default)]
    pub distractor: Option<SoundPlacement>,
    pub onset_s: f64,
    pub duration_s: f64,
    pub oracle_actions: usize,
    pub geodesic_start_goal: f64,
}

impl EpisodeSpec {
    fn invalid(&self, reason: impl Into<String>) -> Error {
        Error::InvalidEpisode {
            id: self.id.clone(),
            reason: reason.into(),
        }
    }

    /// Checks the invariants that need only the sound bank.
    pub fn validate_fields(&self, bank: &SoundBank) -> Result<()> {
        if !(0.0..=MAX_ONSET_S).contains(&self.onset_s) {
            return Err(self.invalid(format!("onset_s {} outside [0, 5]", self.onset_s)));
        }
        if !(MIN_DURATION_S..=MAX_DURATION_S).contains(&self.duration_s) {
            return Err(self.invalid(format!("duration_s {} outside [1, 45]", self.duration_s)));
        }
        if !bank.is_goal(self.goal.category_id) {
            return Err(self.invalid(format!(
                "goal category {} is not a goal category",
                self.goal.category_id
            )));
        }
        if let Some(d) = &self.distractor {
            if !bank.is_distractor(d.category_id) {
                return Err(self.invalid(format!(
                    "distractor category {} is not in the distractor bank",
                    d.category_id
                )));
            }
            let gap = d.point.dist(self.goal.point);
            if gap < MIN_DISTRACTOR_GAP {
                return Err(self.invalid(format!("distractor {gap:.3} m from the goal (< 2 m)")));
            }
        }
        if self.oracle_actions == 0 {
            return Err(self.invalid("oracle_actions must be positive"));
        }
        if !(self.geodesic_start_goal.is_finite() && self.geodesic_start_goal >= 0.0) {
            return Err(self.invalid(format!(
                "geodesic_start_goal {} is not a finite distance",
                self.geodesic_start_goal
            )));
        }
        Ok(())
    }

    /// Full validation against the scene the episode refers to.
    pub fn validate(&self, bank: &SoundBank, scene: &Scene) -> Result<()> {
        self.validate_fields(bank)?;
        if scene.plan.id != self.scene_id {
            return Err(self.invalid(format!(
                "scene id {} does not match {}",
                self.scene_id, scene.plan.id
            )));
        }
        let mut points = vec![("start", self.start.position()), ("goal", self.goal.point)];
        if let Some(d) = &self.distractor {
            points.push(("distractor", d.point));
        }
        for (what, p) in points {
            if !scene.plan.is_free(p) {
                return Err(self.invalid(format!(
                    "{what} ({:.3}, {:.3}) is not in free space",
                    p.x, p.y
                )));
            }
        }
        Ok(())
    }
}
