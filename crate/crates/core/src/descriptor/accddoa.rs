//! Activity-coupled Cartesian distance and direction-of-arrival descriptors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{relative_goal, Point, Pose};

/// Distances inside descriptors are divided by this many meters.
pub const DISTANCE_SCALE: f64 = 20.0;
/// Values per category in flattened form: activity, x, y, z, distance.
pub const VALUES_PER_CATEGORY: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CategoryTrack {
    pub active: bool,
    pub doa: [f64; 3],
    /// Normalized distance.
    pub distance: f64,
}

impl CategoryTrack {
    pub fn from_polar(azimuth: f64, distance_m: f64) -> Self {
        Self {
            active: true,
            doa: [azimuth.cos(), azimuth.sin(), 0.0],
            distance: distance_m / DISTANCE_SCALE,
        }
    }

    pub fn azimuth(&self) -> f64 {
        self.doa[1].atan2(self.doa[0])
    }

    pub fn distance_m(&self) -> f64 {
        self.distance * DISTANCE_SCALE
    }
}

/// One descriptor per category. Serialized as `[[a, x, y, z, d], ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<[f64; 5]>", into = "Vec<[f64; 5]>")]
pub struct Accddoa {
    pub tracks: Vec<CategoryTrack>,
}

impl From<Vec<[f64; 5]>> for Accddoa {
    fn from(rows: Vec<[f64; 5]>) -> Self {
        Self {
            tracks: rows
                .into_iter()
                .map(|r| CategoryTrack {
                    active: r[0] > 0.5,
                    doa: [r[1], r[2], r[3]],
                    distance: r[4],
                })
                .collect(),
        }
    }
}

impl From<Accddoa> for Vec<[f64; 5]> {
    fn from(a: Accddoa) -> Self {
        a.tracks
            .iter()
            .map(|t| {
                [
                    if t.active { 1.0 } else { 0.0 },
                    t.doa[0],
                    t.doa[1],
                    t.doa[2],
                    t.distance,
                ]
            })
            .collect()
    }
}

impl Accddoa {
    pub fn inactive(num_categories: usize) -> Self {
        Self {
            tracks: vec![CategoryTrack::default(); num_categories],
        }
    }

    pub fn single(num_categories: usize, category: usize, azimuth: f64, distance_m: f64) -> Self {
        let mut out = Self::inactive(num_categories);
        out.tracks[category] = CategoryTrack::from_polar(azimuth, distance_m);
        out
    }

    pub fn num_categories(&self) -> usize {
        self.tracks.len()
    }

    /// First active category, if any.
    pub fn active(&self) -> Option<(usize, &CategoryTrack)> {
        self.tracks.iter().enumerate().find(|(_, t)| t.active)
    }

    pub fn is_inactive(&self) -> bool {
        self.tracks.iter().all(|t| !t.active)
    }

    /// `[a, a*Rx, a*Ry, a*Rz, d]` per category.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tracks
            .iter()
            .flat_map(|t| {
                let a = if t.active { 1.0 } else { 0.0 };
                [a, a * t.doa[0], a * t.doa[1], a * t.doa[2], a * t.distance]
            })
            .collect()
    }

    /// Decodes a regressor output: activity thresholded at 0.5, direction
    /// renormalized, distance kept positive.
    pub fn from_regression(values: &[f64]) -> Self {
        let tracks = values
            .chunks(VALUES_PER_CATEGORY)
            .map(|v| {
                let norm = (v[1] * v[1] + v[2] * v[2] + v[3] * v[3]).sqrt();
                if v[0] > 0.5 && norm > 1e-12 && v[4] > 0.0 {
                    CategoryTrack {
                        active: true,
                        doa: [v[1] / norm, v[2] / norm, v[3] / norm],
                        distance: v[4],
                    }
                } else {
                    CategoryTrack::default()
                }
            })
            .collect();
        Self { tracks }
    }

    /// Active tracks carry unit directions and positive distance; inactive
    /// tracks are all zero.
    pub fn validate(&self) -> Result<()> {
        for (c, t) in self.tracks.iter().enumerate() {
            if t.active {
                let n = (t.doa[0].powi(2) + t.doa[1].powi(2) + t.doa[2].powi(2)).sqrt();
                if (n - 1.0).abs() > 1e-6 || t.distance.is_nan() || t.distance <= 0.0 {
                    return Err(Error::Precondition(format!(
                        "active category {c} has |R| = {n} and d = {}",
                        t.distance
                    )));
                }
            } else if t.doa != [0.0; 3] || t.distance != 0.0 {
                return Err(Error::Precondition(format!(
                    "inactive category {c} carries nonzero values"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleMode {
    /// Labels only while the goal sound is emitting.
    Oracle1,
    /// Labels at every step.
    Oracle2,
}

/// Ground-truth descriptor of the goal as seen from `pose`.
pub fn oracle_accddoa(
    pose: &Pose,
    goal: Point,
    category: usize,
    num_categories: usize,
    goal_active: bool,
    mode: OracleMode,
) -> Accddoa {
    if mode == OracleMode::Oracle1 && !goal_active {
        return Accddoa::inactive(num_categories);
    }
    let (az, dist) = relative_goal(pose, goal);
    // A goal exactly at the agent centre has no direction; keep the
    // descriptor valid with a tiny positive distance.
    Accddoa::single(num_categories, category, az, dist.max(1e-9))
}
