//! Egocentric mapping and the shared goal-seeking controller.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{FRAC_PI_4, SQRT_2};

use rand::Rng;

use crate::env::{ObservationBundle, SCAN_RANGE, SCAN_RAYS};
use crate::geometry::{ActionKind, Point, Pose, AGENT_RADIUS, FORWARD_STEP, TURN_ANGLE};

const CELL: f64 = 0.1;
/// Half-extent of the map in cells; covers any room diagonal from the start.
const HALF: i64 = 320;
const SIDE: usize = (2 * HALF) as usize;
/// Cells this close to a hit are impassable.
const CORE_RADIUS: f64 = 0.15;
/// Cells this close to a hit are passable at a penalty.
const SOFT_RADIUS: f64 = 0.3;
const SOFT_COST: f64 = 0.5;
/// Extra margin around the bounding box of agent and goal for planning.
const PLAN_MARGIN: f64 = 4.0;

const FREE: u8 = 0;
const SOFT: u8 = 1;
const CORE: u8 = 2;

/// Heading error within which the controller moves forward.
pub fn aligned(az: f64) -> bool {
    az.abs() <= TURN_ANGLE / 2.0 + 1e-9
}

fn turn_towards(az: f64) -> ActionKind {
    if az >= 0.0 {
        ActionKind::TurnLeft
    } else {
        ActionKind::TurnRight
    }
}

/// Occupancy evidence in the start frame, built from range scans and
/// contacts. Unknown space counts as free.
#[derive(Clone)]
pub struct EgoMap {
    cells: Vec<u8>,
}

impl std::fmt::Debug for EgoMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let core = self.cells.iter().filter(|c| **c == CORE).count();
        f.debug_struct("EgoMap").field("core_cells", &core).finish()
    }
}

impl Default for EgoMap {
    fn default() -> Self {
        Self {
            cells: vec![FREE; SIDE * SIDE],
        }
    }
}

impl EgoMap {
    fn key(p: Point) -> (i64, i64) {
        ((p.x / CELL).floor() as i64, (p.y / CELL).floor() as i64)
    }

    fn index(i: i64, j: i64) -> Option<usize> {
        let (a, b) = (i + HALF, j + HALF);
        (a >= 0 && b >= 0 && a < SIDE as i64 && b < SIDE as i64)
            .then(|| b as usize * SIDE + a as usize)
    }

    fn center(i: i64, j: i64) -> Point {
        Point::new((i as f64 + 0.5) * CELL, (j as f64 + 0.5) * CELL)
    }

    fn state(&self, i: i64, j: i64) -> u8 {
        Self::index(i, j).map_or(CORE, |k| self.cells[k])
    }

    /// Records an obstacle surface point.
    pub fn mark(&mut self, p: Point) {
        let (ci, cj) = Self::key(p);
        let reach = (SOFT_RADIUS / CELL).ceil() as i64 + 1;
        let hit = Self::center(ci, cj);
        for dj in -reach..=reach {
            for di in -reach..=reach {
                let (i, j) = (ci + di, cj + dj);
                let Some(k) = Self::index(i, j) else { continue };
                let d = Self::center(i, j).dist(hit);
                let s = if d <= CORE_RADIUS {
                    CORE
                } else if d <= SOFT_RADIUS {
                    SOFT
                } else {
                    continue;
                };
                self.cells[k] = self.cells[k].max(s);
            }
        }
    }

    pub fn is_blocked(&self, p: Point) -> bool {
        let (i, j) = Self::key(p);
        self.state(i, j) == CORE
    }

    /// Whether a straight move from `a` to `b` stays off known obstacles;
    /// soft cells are tolerated near `a`.
    pub fn line_clear(&self, a: Point, b: Point) -> bool {
        let len = a.dist(b);
        let n = (len / (CELL / 2.0)).ceil().max(1.0) as usize;
        (0..=n).all(|k| {
            let p = a + (b - a).scale(k as f64 / n as f64);
            let (i, j) = Self::key(p);
            match self.state(i, j) {
                CORE => p.dist(a) < 0.05,
                SOFT => p.dist(a) < SOFT_RADIUS,
                _ => true,
            }
        })
    }

    /// A* over the map inside a box around both endpoints.
    pub fn plan(&self, from: Point, to: Point) -> Option<Vec<Point>> {
        let (si, sj) = Self::key(from);
        let (gi, gj) = Self::key(to);
        let m = (PLAN_MARGIN / CELL) as i64;
        let (i0, i1) = (si.min(gi) - m, si.max(gi) + m);
        let (j0, j1) = (sj.min(gj) - m, sj.max(gj) + m);
        let w = (i1 - i0 + 1) as usize;
        let h = (j1 - j0 + 1) as usize;
        let local = |i: i64, j: i64| (j - j0) as usize * w + (i - i0) as usize;
        let heuristic = |i: i64, j: i64| {
            let dx = (i - gi).abs() as f64;
            let dy = (j - gj).abs() as f64;
            CELL * (dx.max(dy) + (SQRT_2 - 1.0) * dx.min(dy))
        };
        let mut g = vec![f64::INFINITY; w * h];
        let mut parent = vec![usize::MAX; w * h];
        let mut heap = BinaryHeap::new();
        g[local(si, sj)] = 0.0;
        heap.push(Node {
            f: heuristic(si, sj),
            i: si,
            j: sj,
        });
        let passable =
            |i: i64, j: i64| (i, j) == (gi, gj) || (i, j) == (si, sj) || self.state(i, j) != CORE;
        while let Some(Node { f, i, j }) = heap.pop() {
            let here = local(i, j);
            if f > g[here] + heuristic(i, j) + 1e-12 {
                continue;
            }
            if (i, j) == (gi, gj) {
                let mut cells = vec![here];
                let mut cur = here;
                while parent[cur] != usize::MAX {
                    cur = parent[cur];
                    cells.push(cur);
                }
                cells.reverse();
                let mut pts: Vec<Point> = cells
                    .iter()
                    .map(|&c| Self::center(i0 + (c % w) as i64, j0 + (c / w) as i64))
                    .collect();
                pts[0] = from;
                *pts.last_mut().expect("non-empty") = to;
                return Some(pts);
            }
            for (di, dj) in [
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ] {
                let (ni, nj) = (i + di, j + dj);
                if ni < i0 || ni > i1 || nj < j0 || nj > j1 || !passable(ni, nj) {
                    continue;
                }
                let diagonal = di != 0 && dj != 0;
                if diagonal && (!passable(i + di, j) || !passable(i, j + dj)) {
                    continue;
                }
                let step = if diagonal { SQRT_2 * CELL } else { CELL };
                let penalty = if self.state(ni, nj) == SOFT {
                    SOFT_COST
                } else {
                    0.0
                };
                let cost = g[here] + step + penalty;
                let k = local(ni, nj);
                if cost < g[k] {
                    g[k] = cost;
                    parent[k] = here;
                    heap.push(Node {
                        f: cost + heuristic(ni, nj),
                        i: ni,
                        j: nj,
                    });
                }
            }
        }
        None
    }
}

#[derive(PartialEq)]
struct Node {
    f: f64,
    i: i64,
    j: i64,
}

impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| (other.j, other.i).cmp(&(self.j, self.i)))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn side_ranges(scan: &[f64]) -> (f64, f64) {
    let half = scan.len() / 2;
    let right: f64 = scan[..half].iter().sum::<f64>() / half.max(1) as f64;
    let left: f64 = scan[scan.len() - half..].iter().sum::<f64>() / half.max(1) as f64;
    (left, right)
}

/// Turns toward the more open side.
fn open_side_turn(scan: &[f64]) -> ActionKind {
    let (left, right) = side_ranges(scan);
    if left >= right {
        ActionKind::TurnLeft
    } else {
        ActionKind::TurnRight
    }
}

/// Greedy goal seeking with map-based detours and a contact escape rule.
#[derive(Debug, Clone)]
pub struct NavController {
    pub stop_threshold: f64,
    map: EgoMap,
    stalled: usize,
}

impl NavController {
    pub fn new(stop_threshold: f64) -> Self {
        Self {
            stop_threshold,
            map: EgoMap::default(),
            stalled: 0,
        }
    }

    pub fn map(&self) -> &EgoMap {
        &self.map
    }

    /// Folds the scan and any contact from the last action into the map.
    pub fn observe(&mut self, obs: &ObservationBundle) {
        let pose = obs.pose;
        let o = pose.position();
        for (k, &r) in obs.range_scan.iter().enumerate() {
            if r < SCAN_RANGE - 1e-9 {
                let rel = -FRAC_PI_4 + 2.0 * FRAC_PI_4 * k as f64 / (SCAN_RAYS - 1) as f64;
                let a = pose.theta() + rel;
                self.map.mark(o + Point::unit(a).scale(r + 0.02));
            }
        }
        if obs.prev_action == Some(ActionKind::MoveForward) && obs.moved < FORWARD_STEP - 1e-9 {
            self.map
                .mark(o + Point::unit(pose.theta()).scale(AGENT_RADIUS + 0.03));
            if obs.moved < 1e-9 {
                self.stalled += 1;
            } else {
                self.stalled = 0;
            }
        } else if obs.prev_action == Some(ActionKind::MoveForward) {
            self.stalled = 0;
        }
    }

    /// Action toward a goal at relative azimuth `az` and range `dist`.
    pub fn steer(&mut self, obs: &ObservationBundle, az: f64, dist: f64) -> ActionKind {
        if dist <= self.stop_threshold {
            return ActionKind::Stop;
        }
        if self.stalled >= 2 {
            self.stalled = 0;
            return open_side_turn(&obs.range_scan);
        }
        let pose = obs.pose;
        let here = pose.position();
        let goal = pose.to_parent(Point::new(dist * az.cos(), dist * az.sin()));
        let target = if self.map.line_clear(here, goal) {
            goal
        } else {
            match self.map.plan(here, goal) {
                Some(path) => farthest_visible(&self.map, here, &path),
                None => goal,
            }
        };
        let (taz, _) = crate::geometry::relative_goal(&pose, target);
        self.toward(obs, &pose, taz)
    }

    fn toward(&self, obs: &ObservationBundle, pose: &Pose, az: f64) -> ActionKind {
        if !aligned(az) {
            return turn_towards(az);
        }
        let ahead = pose.position() + Point::unit(pose.theta()).scale(FORWARD_STEP);
        let centre = obs.range_scan[obs.range_scan.len() / 2];
        if self.map.is_blocked(ahead) && centre < AGENT_RADIUS + FORWARD_STEP {
            return open_side_turn(&obs.range_scan);
        }
        ActionKind::MoveForward
    }

    /// Forward-biased random walk that turns away from nearby obstacles.
    pub fn explore(&mut self, obs: &ObservationBundle, rng: &mut impl Rng) -> ActionKind {
        let centre = obs.range_scan[obs.range_scan.len() / 2];
        if centre < 0.5 || self.stalled >= 1 {
            self.stalled = 0;
            return open_side_turn(&obs.range_scan);
        }
        match rng.gen_range(0..100) {
            0..=69 => ActionKind::MoveForward,
            70..=84 => ActionKind::TurnLeft,
            _ => ActionKind::TurnRight,
        }
    }
}

fn farthest_visible(map: &EgoMap, here: Point, path: &[Point]) -> Point {
    path.iter()
        .rev()
        .find(|p| map.line_clear(here, **p))
        .copied()
        .unwrap_or(path[1.min(path.len() - 1)])
}
