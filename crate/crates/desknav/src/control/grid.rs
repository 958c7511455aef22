//! Grid rasterization of a world plus shortest-path machinery: A* for
//! point-to-point plans and a goal-rooted Dijkstra field that serves as the
//! shortest-path oracle for episode specs, expert stubs, and calibration
//! labels.

use crate::common::Pose2D;
use crate::sim::World;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    /// Meters per cell.
    pub resolution: f64,
    /// Obstacle inflation: cells with clearance at or below this are blocked.
    pub inflation_radius: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            resolution: 0.05,
            // Agent radius 0.18 plus one cell of margin.
            inflation_radius: 0.23,
        }
    }
}

/// Boolean occupancy over a world, inflated by the configured radius.
#[derive(Debug, Clone)]
pub struct WorldGrid {
    pub nx: usize,
    pub ny: usize,
    pub resolution: f64,
    free: Vec<bool>,
}

impl WorldGrid {
    pub fn build(world: &World, params: &GridParams) -> Self {
        let nx = (world.bounds.0 / params.resolution).ceil() as usize;
        let ny = (world.bounds.1 / params.resolution).ceil() as usize;
        let mut free = vec![false; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let c = (
                    (i as f64 + 0.5) * params.resolution,
                    (j as f64 + 0.5) * params.resolution,
                );
                free[j * nx + i] =
                    world.contains(c) && world.clearance(c) > params.inflation_radius;
            }
        }
        Self {
            nx,
            ny,
            resolution: params.resolution,
            free,
        }
    }

    pub fn index(&self, cell: (usize, usize)) -> usize {
        cell.1 * self.nx + cell.0
    }

    pub fn cell_of(&self, p: (f64, f64)) -> Option<(usize, usize)> {
        if p.0 < 0.0 || p.1 < 0.0 {
            return None;
        }
        let i = (p.0 / self.resolution).floor() as usize;
        let j = (p.1 / self.resolution).floor() as usize;
        if i >= self.nx || j >= self.ny {
            None
        } else {
            Some((i.min(self.nx - 1), j.min(self.ny - 1)))
        }
    }

    pub fn center(&self, cell: (usize, usize)) -> (f64, f64) {
        (
            (cell.0 as f64 + 0.5) * self.resolution,
            (cell.1 as f64 + 0.5) * self.resolution,
        )
    }

    pub fn is_free(&self, cell: (usize, usize)) -> bool {
        self.free[self.index(cell)]
    }

    /// 8-connected free neighbors with their step cost in meters.
    fn neighbors<'a>(
        &'a self,
        cell: (usize, usize),
    ) -> impl Iterator<Item = ((usize, usize), f64)> + 'a {
        const OFFSETS: [(i64, i64); 8] = [
            (1, 0),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ];
        OFFSETS.iter().filter_map(move |&(dx, dy)| {
            let ni = cell.0 as i64 + dx;
            let nj = cell.1 as i64 + dy;
            if ni < 0 || nj < 0 || ni >= self.nx as i64 || nj >= self.ny as i64 {
                return None;
            }
            let n = (ni as usize, nj as usize);
            if !self.is_free(n) {
                return None;
            }
            let cost = if dx != 0 && dy != 0 {
                self.resolution * SQRT_2
            } else {
                self.resolution
            };
            Some((n, cost))
        })
    }
}

#[derive(PartialEq)]
struct HeapEntry {
    priority: f64,
    order: usize,
    cell: (usize, usize),
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (priority, insertion order) for deterministic pops.
        other
            .priority
            .total_cmp(&self.priority)
            .then(other.order.cmp(&self.order))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A* over the grid with the octile-distance heuristic. Returns the cell
/// path start..=goal and its length in meters.
pub fn shortest_path(
    grid: &WorldGrid,
    start: (usize, usize),
    goal: (usize, usize),
) -> Option<(Vec<(usize, usize)>, f64)> {
    if !grid.is_free(start) || !grid.is_free(goal) {
        return None;
    }
    let octile = |a: (usize, usize), b: (usize, usize)| {
        let dx = (a.0 as f64 - b.0 as f64).abs();
        let dy = (a.1 as f64 - b.1 as f64).abs();
        grid.resolution * (dx.max(dy) + (SQRT_2 - 1.0) * dx.min(dy))
    };
    let n = grid.nx * grid.ny;
    let mut dist = vec![f64::INFINITY; n];
    let mut prev: Vec<u32> = vec![u32::MAX; n];
    let mut heap = BinaryHeap::new();
    let mut order = 0usize;
    dist[grid.index(start)] = 0.0;
    heap.push(HeapEntry {
        priority: octile(start, goal),
        order,
        cell: start,
    });
    while let Some(HeapEntry { cell, .. }) = heap.pop() {
        let ci = grid.index(cell);
        if cell == goal {
            let mut path = vec![goal];
            let mut at = ci;
            while prev[at] != u32::MAX {
                at = prev[at] as usize;
                path.push((at % grid.nx, at / grid.nx));
            }
            path.reverse();
            return Some((path, dist[ci]));
        }
        for (nb, cost) in grid.neighbors(cell) {
            let ni = grid.index(nb);
            let cand = dist[ci] + cost;
            if cand < dist[ni] - 1e-12 {
                dist[ni] = cand;
                prev[ni] = ci as u32;
                order += 1;
                heap.push(HeapEntry {
                    priority: cand + octile(nb, goal),
                    order,
                    cell: nb,
                });
            }
        }
    }
    None
}

/// Grid distances from every free cell to a goal point, rooted with one
/// Dijkstra pass. Built once per (world, goal) pair.
#[derive(Debug, Clone)]
pub struct DistanceField {
    grid: WorldGrid,
    dist: Vec<f64>,
    goal: (f64, f64),
}

impl DistanceField {
    pub fn build(world: &World, goal: (f64, f64), params: &GridParams) -> Self {
        let grid = WorldGrid::build(world, params);
        let n = grid.nx * grid.ny;
        let mut dist = vec![f64::INFINITY; n];
        let mut heap = BinaryHeap::new();
        if let Some(goal_cell) = grid.cell_of(goal) {
            if grid.is_free(goal_cell) {
                dist[grid.index(goal_cell)] = 0.0;
                heap.push(HeapEntry {
                    priority: 0.0,
                    order: 0,
                    cell: goal_cell,
                });
            }
        }
        let mut order = 0usize;
        while let Some(HeapEntry { cell, priority, .. }) = heap.pop() {
            let ci = grid.index(cell);
            if priority > dist[ci] + 1e-12 {
                continue;
            }
            for (nb, cost) in grid.neighbors(cell) {
                let ni = grid.index(nb);
                let cand = dist[ci] + cost;
                if cand < dist[ni] - 1e-12 {
                    dist[ni] = cand;
                    order += 1;
                    heap.push(HeapEntry {
                        priority: cand,
                        order,
                        cell: nb,
                    });
                }
            }
        }
        Self { grid, dist, goal }
    }

    pub fn grid(&self) -> &WorldGrid {
        &self.grid
    }

    /// Grid shortest-path distance from a point to the goal, or `None` when
    /// the point's cell is blocked or disconnected.
    pub fn distance(&self, p: (f64, f64)) -> Option<f64> {
        let cell = self.grid.cell_of(p)?;
        if !self.grid.is_free(cell) {
            return None;
        }
        let d = self.dist[self.grid.index(cell)];
        if d.is_finite() {
            Some(d)
        } else {
            None
        }
    }

    /// Grid distance with a straight-line fallback for blocked or
    /// disconnected query points, so expert stubs always get a number.
    pub fn distance_or_euclid(&self, p: (f64, f64)) -> f64 {
        self.distance(p)
            .unwrap_or_else(|| (p.0 - self.goal.0).hypot(p.1 - self.goal.1))
    }

    /// Shortest-path length estimate from a start pose: never below the
    /// straight line, which is itself a lower bound on the true path.
    pub fn path_length_from(&self, start: &Pose2D) -> Option<f64> {
        let grid_len = self.distance(start.position())?;
        Some(grid_len.max(start.distance_to(self.goal)))
    }
}
