//! Occupancy rasterization, grid Dijkstra and path shortcutting.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::f64::consts::SQRT_2;

use super::{segment_clear, Point, ScenePlan, AGENT_RADIUS};
use crate::error::{Error, Result};

/// 8-neighbourhood offsets; the first four are the orthogonal moves.
pub(crate) const NEIGHBOURS: [(i64, i64); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

/// Free-space raster of a scene. A cell is free when its centre has
/// clearance of at least the agent radius minus half a cell diagonal, which
/// guarantees that every free continuous point lies in a free cell.
#[derive(Debug, Clone)]
pub struct OccupancyGrid {
    pub nx: usize,
    pub ny: usize,
    pub resolution: f64,
    free: Vec<bool>,
}

impl OccupancyGrid {
    pub fn build(plan: &ScenePlan) -> Self {
        Self::build_with_clearance(plan, Self::effective_radius(plan.grid_resolution))
    }

    /// Raster whose free cells have centre clearance of at least `need`.
    pub fn build_with_clearance(plan: &ScenePlan, need: f64) -> Self {
        let res = plan.grid_resolution;
        let nx = (plan.width / res).ceil() as usize;
        let ny = (plan.height / res).ceil() as usize;
        let mut free = vec![false; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let c = Point::new((i as f64 + 0.5) * res, (j as f64 + 0.5) * res);
                free[j * nx + i] = plan.in_bounds(c) && plan.clearance(c) >= need;
            }
        }
        Self {
            nx,
            ny,
            resolution: res,
            free,
        }
    }

    pub fn effective_radius(res: f64) -> f64 {
        AGENT_RADIUS - res * SQRT_2 / 2.0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    pub fn is_free_cell(&self, i: i64, j: i64) -> bool {
        i >= 0
            && j >= 0
            && (i as usize) < self.nx
            && (j as usize) < self.ny
            && self.free[j as usize * self.nx + i as usize]
    }

    pub fn free_count(&self) -> usize {
        self.free.iter().filter(|f| **f).count()
    }

    pub fn cell_of(&self, p: Point) -> (i64, i64) {
        let i = ((p.x / self.resolution).floor() as i64).clamp(0, self.nx as i64 - 1);
        let j = ((p.y / self.resolution).floor() as i64).clamp(0, self.ny as i64 - 1);
        (i, j)
    }

    pub fn center(&self, idx: usize) -> Point {
        let (i, j) = self.coords(idx);
        Point::new(
            (i as f64 + 0.5) * self.resolution,
            (j as f64 + 0.5) * self.resolution,
        )
    }

    /// Neighbours reachable from cell `(i, j)` with their step costs.
    /// Diagonal moves require both adjacent orthogonal cells to be free.
    pub fn neighbours(&self, i: i64, j: i64) -> impl Iterator<Item = (usize, f64)> + '_ {
        let res = self.resolution;
        NEIGHBOURS.iter().filter_map(move |&(di, dj)| {
            let (ni, nj) = (i + di, j + dj);
            if !self.is_free_cell(ni, nj) {
                return None;
            }
            if di != 0 && dj != 0 {
                if !self.is_free_cell(i + di, j) || !self.is_free_cell(i, j + dj) {
                    return None;
                }
                Some((self.index(ni as usize, nj as usize), SQRT_2 * res))
            } else {
                Some((self.index(ni as usize, nj as usize), res))
            }
        })
    }

    /// Nearest free cell to `p` by Euclidean distance to its centre.
    pub fn snap(&self, p: Point) -> Option<usize> {
        let (ci, cj) = self.cell_of(p);
        if self.is_free_cell(ci, cj) {
            return Some(self.index(ci as usize, cj as usize));
        }
        let max_ring = self.nx.max(self.ny) as i64;
        let mut best: Option<(f64, usize)> = None;
        for ring in 1..=max_ring {
            for dj in -ring..=ring {
                for di in -ring..=ring {
                    if di.abs() != ring && dj.abs() != ring {
                        continue;
                    }
                    let (i, j) = (ci + di, cj + dj);
                    if self.is_free_cell(i, j) {
                        let idx = self.index(i as usize, j as usize);
                        let d = self.center(idx).dist(p);
                        if best.is_none_or(|(bd, _)| d < bd) {
                            best = Some((d, idx));
                        }
                    }
                }
            }
            // Any cell on a later ring is at least (ring) cells away.
            if let Some((bd, idx)) = best {
                if bd <= ring as f64 * self.resolution {
                    return Some(idx);
                }
            }
        }
        best.map(|(_, idx)| idx)
    }

    /// Number of 8-connected components of free cells.
    pub fn component_count(&self) -> usize {
        let mut label = vec![false; self.free.len()];
        let mut count = 0;
        for start in 0..self.free.len() {
            if !self.free[start] || label[start] {
                continue;
            }
            count += 1;
            label[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(c) = queue.pop_front() {
                let (i, j) = self.coords(c);
                for (n, _) in self.neighbours(i as i64, j as i64) {
                    if !label[n] {
                        label[n] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        count
    }
}

/// Single-source grid distances (Dijkstra over the 8-connected grid).
#[derive(Debug, Clone)]
pub struct DistanceField {
    pub source: usize,
    dist: Vec<f64>,
}

impl DistanceField {
    pub fn compute(grid: &OccupancyGrid, source: usize) -> Self {
        let (nx, ny) = (grid.nx as i64, grid.ny as i64);
        let res = grid.resolution;
        let free = |i: i64, j: i64| {
            i >= 0 && j >= 0 && i < nx && j < ny && grid.free[(j * nx + i) as usize]
        };
        let mut dist = vec![f64::INFINITY; grid.free.len()];
        // Non-negative floats order like their bit patterns.
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Reverse((0u64, source)));
        while let Some(Reverse((bits, idx))) = heap.pop() {
            let cost = f64::from_bits(bits);
            if cost > dist[idx] {
                continue;
            }
            let (i, j) = ((idx as i64) % nx, (idx as i64) / nx);
            for &(di, dj) in &NEIGHBOURS {
                let (ni, nj) = (i + di, j + dj);
                if !free(ni, nj) {
                    continue;
                }
                let w = if di != 0 && dj != 0 {
                    if !free(ni, j) || !free(i, nj) {
                        continue;
                    }
                    SQRT_2 * res
                } else {
                    res
                };
                let n = (nj * nx + ni) as usize;
                let nc = cost + w;
                if nc < dist[n] {
                    dist[n] = nc;
                    heap.push(Reverse((nc.to_bits(), n)));
                }
            }
        }
        Self { source, dist }
    }

    pub fn at(&self, idx: usize) -> f64 {
        self.dist[idx]
    }

    /// Cell sequence from `from` down to the field's source.
    pub fn descend(&self, grid: &OccupancyGrid, from: usize) -> Option<Vec<usize>> {
        if !self.dist[from].is_finite() {
            return None;
        }
        let mut path = vec![from];
        let mut cur = from;
        while cur != self.source {
            let (i, j) = grid.coords(cur);
            let mut best: Option<(f64, usize)> = None;
            for (n, w) in grid.neighbours(i as i64, j as i64) {
                let via = self.dist[n] + w;
                if self.dist[n] < self.dist[cur] && best.is_none_or(|(b, _)| via < b) {
                    best = Some((via, n));
                }
            }
            cur = best?.1;
            path.push(cur);
        }
        Some(path)
    }
}

/// A validated scene together with its occupancy grid.
#[derive(Debug, Clone)]
pub struct Scene {
    pub plan: ScenePlan,
    pub grid: OccupancyGrid,
}

impl Scene {
    /// Validates every scene invariant, including single-component free space.
    pub fn new(plan: ScenePlan) -> Result<Self> {
        plan.validate_shape()?;
        let grid = OccupancyGrid::build(&plan);
        let components = grid.component_count();
        if components != 1 {
            return Err(Error::InvalidScene {
                id: plan.id.clone(),
                reason: format!("free space has {components} connected components"),
            });
        }
        Ok(Self { plan, grid })
    }

    fn snap_checked(&self, p: Point) -> Result<usize> {
        if !self.plan.in_bounds(p) {
            return Err(Error::OutOfBounds { x: p.x, y: p.y });
        }
        self.grid.snap(p).ok_or_else(|| Error::InvalidScene {
            id: self.plan.id.clone(),
            reason: "no free cell".into(),
        })
    }

    pub fn distance_field_to(&self, target: Point) -> Result<DistanceField> {
        Ok(DistanceField::compute(
            &self.grid,
            self.snap_checked(target)?,
        ))
    }

    /// Geodesic distance from `p` to the field's source; `+inf` if disconnected.
    pub fn geodesic_with(&self, field: &DistanceField, p: Point) -> Result<f64> {
        Ok(field.at(self.snap_checked(p)?))
    }

    pub fn geodesic_distance(&self, a: Point, b: Point) -> Result<f64> {
        let ia = self.snap_checked(a)?;
        let ib = self.snap_checked(b)?;
        if ia == ib {
            return Ok(0.0);
        }
        let field = DistanceField::compute(&self.grid, ib);
        Ok(field.at(ia))
    }

    /// Grid path from `a` to `b`, reduced by greedy line-of-sight shortcuts.
    pub fn shortest_path(&self, a: Point, b: Point) -> Result<Vec<Point>> {
        let field = self.distance_field_to(b)?;
        self.shortest_path_with(&field, a, b)
    }

    pub fn shortest_path_with(
        &self,
        field: &DistanceField,
        a: Point,
        b: Point,
    ) -> Result<Vec<Point>> {
        let ia = self.snap_checked(a)?;
        if ia == field.source || a.dist(b) < 1e-12 {
            return Ok(if a.dist(b) < 1e-12 {
                vec![a]
            } else {
                vec![a, b]
            });
        }
        let cells = field
            .descend(&self.grid, ia)
            .ok_or_else(|| Error::InvalidScene {
                id: self.plan.id.clone(),
                reason: "endpoints are disconnected".into(),
            })?;
        let mut raw: Vec<Point> = cells.iter().map(|&c| self.grid.center(c)).collect();
        raw[0] = a;
        *raw.last_mut().expect("non-empty path") = b;
        Ok(self.shortcut(&raw))
    }

    fn shortcut(&self, raw: &[Point]) -> Vec<Point> {
        let r = OccupancyGrid::effective_radius(self.grid.resolution) - 1e-6;
        let mut out = vec![raw[0]];
        let mut i = 0;
        while i + 1 < raw.len() {
            let mut j = raw.len() - 1;
            while j > i + 1 && !segment_clear(&self.plan, raw[i], raw[j], r) {
                j -= 1;
            }
            out.push(raw[j]);
            i = j;
        }
        out
    }
}

pub fn path_length(path: &[Point]) -> f64 {
    path.windows(2).map(|w| w[0].dist(w[1])).sum()
}
