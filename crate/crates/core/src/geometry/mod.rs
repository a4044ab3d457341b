//! Continuous 2-D floorplans, agent poses and the discrete action model.
//!
//! World frame: x to the right, y up, angles counterclockwise-positive from
//! the +x axis. A goal with positive relative azimuth lies to the agent's
//! left, so a left turn decreases that azimuth.

mod collision;
mod grid;

use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use collision::{cast_ray, segment_blocked, segment_clear};
pub use grid::{path_length, DistanceField, OccupancyGrid, Scene};

pub const AGENT_RADIUS: f64 = 0.1;
pub const FORWARD_STEP: f64 = 0.25;
pub const TURN_ANGLE: f64 = PI / 12.0;
pub const DEFAULT_GRID_RESOLUTION: f64 = 0.05;

/// Headings are kept as a whole number of turn ticks plus a sub-tick offset
/// so that left/right turns are exact inverses.
const HEADING_TICKS: u8 = 24;

/// Slack allowed when checking clearance against the agent radius.
pub(crate) const CLEARANCE_TOLERANCE: f64 = 1e-9;

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Smallest signed difference `a - b` on the circle.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl std::ops::Add for Point {
    type Output = Point;

    fn add(self, other: Point) -> Point {
        Point::new(self.x + other.x, self.y + other.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;

    fn sub(self, other: Point) -> Point {
        Point::new(self.x - other.x, self.y - other.y)
    }
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn scale(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }

    pub fn unit(angle: f64) -> Point {
        Point::new(angle.cos(), angle.sin())
    }
}

/// Axis-aligned rectangle; `(x, y)` is the lower-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn x1(&self) -> f64 {
        self.x + self.w
    }

    pub fn y1(&self) -> f64 {
        self.y + self.h
    }

    pub fn closest_point(&self, p: Point) -> Point {
        Point::new(p.x.clamp(self.x, self.x1()), p.y.clamp(self.y, self.y1()))
    }

    /// Euclidean distance from `p` to the rectangle (zero inside).
    pub fn distance(&self, p: Point) -> f64 {
        p.dist(self.closest_point(p))
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x && p.x <= self.x1() && p.y >= self.y && p.y <= self.y1()
    }

    /// Gap between two rectangles (zero when they touch or overlap).
    pub fn gap(&self, other: &Rect) -> f64 {
        let dx = (other.x - self.x1()).max(self.x - other.x1()).max(0.0);
        let dy = (other.y - self.y1()).max(self.y - other.y1()).max(0.0);
        dx.hypot(dy)
    }
}

/// A rectangular room with rectangular furniture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePlan {
    pub id: String,
    pub width: f64,
    pub height: f64,
    pub obstacles: Vec<Rect>,
    pub wall_absorption: f64,
    #[serde(default = "default_grid_resolution")]
    pub grid_resolution: f64,
}

fn default_grid_resolution() -> f64 {
    DEFAULT_GRID_RESOLUTION
}

impl ScenePlan {
    pub fn in_bounds(&self, p: Point) -> bool {
        p.x >= 0.0 && p.x <= self.width && p.y >= 0.0 && p.y <= self.height
    }

    /// Distance from `p` to the nearest obstacle or boundary wall.
    pub fn clearance(&self, p: Point) -> f64 {
        let walls = p.x.min(self.width - p.x).min(p.y).min(self.height - p.y);
        self.obstacles
            .iter()
            .map(|o| o.distance(p))
            .fold(walls, f64::min)
    }

    /// Whether the agent disk centred at `p` fits without touching anything.
    pub fn is_free(&self, p: Point) -> bool {
        self.in_bounds(p) && self.clearance(p) >= AGENT_RADIUS - CLEARANCE_TOLERANCE
    }

    pub fn diagonal(&self) -> f64 {
        self.width.hypot(self.height)
    }

    /// Checks the static invariants that do not need the occupancy grid.
    pub(crate) fn validate_shape(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidScene {
            id: self.id.clone(),
            reason,
        };
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(bad(format!(
                "non-positive extent {}x{}",
                self.width, self.height
            )));
        }
        if !(self.wall_absorption > 0.0 && self.wall_absorption < 1.0) {
            return Err(bad(format!(
                "wall_absorption {} not in (0, 1)",
                self.wall_absorption
            )));
        }
        if !(self.grid_resolution > 0.0 && self.grid_resolution <= 0.5) {
            return Err(bad(format!(
                "grid_resolution {} not in (0, 0.5]",
                self.grid_resolution
            )));
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            let inside = o.w > 0.0
                && o.h > 0.0
                && o.x > 0.0
                && o.y > 0.0
                && o.x1() < self.width
                && o.y1() < self.height;
            if !inside {
                return Err(bad(format!(
                    "obstacle {i} {o:?} not strictly inside the boundary"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionKind {
    Stop,
    MoveForward,
    TurnLeft,
    TurnRight,
}

impl ActionKind {
    pub const ALL: [ActionKind; 4] = [
        ActionKind::Stop,
        ActionKind::MoveForward,
        ActionKind::TurnLeft,
        ActionKind::TurnRight,
    ];

    pub fn index(self) -> usize {
        match self {
            ActionKind::Stop => 0,
            ActionKind::MoveForward => 1,
            ActionKind::TurnLeft => 2,
            ActionKind::TurnRight => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn one_hot(action: Option<ActionKind>) -> [f64; 4] {
        let mut v = [0.0; 4];
        if let Some(a) = action {
            v[a.index()] = 1.0;
        }
        v
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ActionKind::Stop => "Stop",
            ActionKind::MoveForward => "MoveForward",
            ActionKind::TurnLeft => "TurnLeft",
            ActionKind::TurnRight => "TurnRight",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Heading {
    ticks: u8,
    offset: f64,
}

impl Heading {
    pub fn from_radians(theta: f64) -> Self {
        let a = theta.rem_euclid(TAU);
        let whole = (a / TURN_ANGLE).floor();
        let mut ticks = whole as i64;
        let mut offset = a - whole * TURN_ANGLE;
        // Snap values that are a whole number of ticks up to rounding so that
        // tick-aligned headings survive a radians round trip.
        if offset < 1e-12 {
            offset = 0.0;
        } else if TURN_ANGLE - offset < 1e-12 {
            offset = 0.0;
            ticks += 1;
        }
        Self {
            ticks: ticks.rem_euclid(HEADING_TICKS as i64) as u8,
            offset,
        }
    }

    pub fn from_ticks(ticks: i64) -> Self {
        Self {
            ticks: ticks.rem_euclid(HEADING_TICKS as i64) as u8,
            offset: 0.0,
        }
    }

    pub fn radians(&self) -> f64 {
        wrap_angle(self.ticks as f64 * TURN_ANGLE + self.offset)
    }

    /// Rotates by `steps` turn ticks (positive = counterclockwise).
    pub fn turned(self, steps: i64) -> Self {
        Self {
            ticks: (self.ticks as i64 + steps).rem_euclid(HEADING_TICKS as i64) as u8,
            offset: self.offset,
        }
    }
}

/// Agent pose in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: Heading,
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    x: f64,
    y: f64,
    heading: f64,
}

impl From<PoseRepr> for Pose {
    fn from(r: PoseRepr) -> Self {
        Pose::new(r.x, r.y, r.heading)
    }
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        PoseRepr {
            x: p.x,
            y: p.y,
            heading: p.theta(),
        }
    }
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            heading: Heading::from_radians(theta),
        }
    }

    pub fn identity() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn theta(&self) -> f64 {
        self.heading.radians()
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    /// Expresses `self` in the frame of `origin`.
    pub fn relative_to(&self, origin: &Pose) -> Pose {
        let th0 = origin.theta();
        let (s, c) = th0.sin_cos();
        let dx = self.x - origin.x;
        let dy = self.y - origin.y;
        Pose::new(c * dx + s * dy, -s * dx + c * dy, self.theta() - th0)
    }

    /// Maps a point given in this pose's body frame to the parent frame.
    pub fn to_parent(&self, p: Point) -> Point {
        let (s, c) = self.theta().sin_cos();
        Point::new(self.x + c * p.x - s * p.y, self.y + s * p.x + c * p.y)
    }
}

/// Applies one action. Forward motion stops at first contact with any
/// obstacle inflated by the agent radius; there is no sliding.
pub fn step_pose(scene: &ScenePlan, pose: &Pose, action: ActionKind) -> Result<(Pose, f64)> {
    let here = pose.position();
    if !scene.is_free(here) {
        return Err(Error::Precondition(format!(
            "pose ({:.3}, {:.3}) is not in free space of scene {}",
            pose.x, pose.y, scene.id
        )));
    }
    let out = match action {
        ActionKind::Stop => (*pose, 0.0),
        ActionKind::TurnLeft => (
            Pose {
                heading: pose.heading.turned(1),
                ..*pose
            },
            0.0,
        ),
        ActionKind::TurnRight => (
            Pose {
                heading: pose.heading.turned(-1),
                ..*pose
            },
            0.0,
        ),
        ActionKind::MoveForward => {
            let dir = Point::unit(pose.theta());
            let hit = collision::inflated_hit(scene, here, dir, AGENT_RADIUS);
            let moved = match hit {
                // Residual sub-tolerance moves at contact count as blocked.
                Some(t) if t < FORWARD_STEP => match t - collision::CONTACT_BACKOFF {
                    m if m < collision::CONTACT_EPS => 0.0,
                    m => m,
                },
                _ => FORWARD_STEP,
            };
            let p = here + dir.scale(moved);
            (
                Pose {
                    x: p.x,
                    y: p.y,
                    heading: pose.heading,
                },
                moved,
            )
        }
    };
    Ok(out)
}

/// Goal azimuth (counterclockwise-positive, agent frame) and range.
pub fn relative_goal(pose: &Pose, goal: Point) -> (f64, f64) {
    let d = goal - pose.position();
    let bearing = d.y.atan2(d.x);
    (wrap_angle(bearing - pose.theta()), d.norm())
}
