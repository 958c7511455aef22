//! Waypoint generation: LiDAR clustering and heatmap non-maximum suppression.
//!
//! The clustering pipeline runs in five steps over one scan: build a 2D
//! occupancy cost map, extract the navigable cells reachable from the robot,
//! K-means them into cluster centers, filter centers that sit too close to
//! obstacles or to each other, and transform the survivors into robot- and
//! world-frame waypoints. It is training free; defaults are K = 10 clusters
//! on a 120 × 120 grid at 0.05 m resolution.
//!
//! The heatmap route stands in for a learned predictor's output layer: a
//! polar grid of 120 angles (3° apart) × 12 distances (0.25 m to 3.0 m in
//! 0.25 m steps) reduced to the top-P peaks by greedy non-maximum
//! suppression with a wrapping angle axis.
//!
//! Cost maps live in the scan frame: the robot sits at the center cell and
//! +x points along its heading, so a cluster center's polar coordinates are
//! directly a candidate bearing and distance.

use crate::common::{normalize_heading, relative_to_world, Pose2D, Waypoint, WaypointKind};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WaypointError {
    #[error("cost map must have positive size and resolution")]
    ZeroSizeMap,
    #[error("scan has {angles} angles but {ranges} ranges")]
    ScanShapeMismatch { angles: usize, ranges: usize },
    #[error("scan range {0} outside (0, max_range]")]
    BadRange(f64),
    #[error("scan angles must be evenly spaced over [0, 2π) starting at 0")]
    UnevenAngles,
    #[error("scan must contain at least one beam")]
    EmptyScan,
    #[error("robot cell is not free; cannot extract navigable space")]
    DegeneratePose,
    #[error("cannot cluster an empty point set")]
    EmptyPoints,
    #[error("cluster count k must be ≥ 1")]
    InvalidK,
    #[error("heatmap must be {expected} values, got {got}")]
    HeatmapShape { expected: usize, got: usize },
    #[error("heatmap values must be finite and ≥ 0, got {0}")]
    BadHeatmapValue(f64),
    #[error("cell grid length {got} does not match size² = {expected}")]
    CellShapeMismatch { expected: usize, got: usize },
}

/// One full-circle range scan. Angles are bearings relative to the robot
/// heading, evenly spaced over `[0, 2π)` starting at 0; a range equal to
/// `max_range` encodes "no return".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarScan {
    pub angles: Vec<f64>,
    pub ranges: Vec<f64>,
    pub max_range: f64,
}

impl LidarScan {
    pub fn new(angles: Vec<f64>, ranges: Vec<f64>, max_range: f64) -> Result<Self, WaypointError> {
        if angles.is_empty() {
            return Err(WaypointError::EmptyScan);
        }
        if angles.len() != ranges.len() {
            return Err(WaypointError::ScanShapeMismatch {
                angles: angles.len(),
                ranges: ranges.len(),
            });
        }
        let step = TAU / angles.len() as f64;
        for (k, &a) in angles.iter().enumerate() {
            if (a - k as f64 * step).abs() > 1e-9 {
                return Err(WaypointError::UnevenAngles);
            }
        }
        for &r in &ranges {
            if !(r > 0.0 && r <= max_range) || !r.is_finite() {
                return Err(WaypointError::BadRange(r));
            }
        }
        Ok(Self {
            angles,
            ranges,
            max_range,
        })
    }

    /// Build from ranges alone, synthesizing the evenly spaced angles.
    pub fn from_ranges(ranges: Vec<f64>, max_range: f64) -> Result<Self, WaypointError> {
        let n = ranges.len();
        let angles = (0..n).map(|k| k as f64 * TAU / n as f64).collect();
        Self::new(angles, ranges, max_range)
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

/// Traversal cost of one grid cell. `Inflated` carries the Euclidean
/// distance in meters to the nearest occupied cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CellCost {
    Free,
    Inflated(f64),
    Occupied,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostMapParams {
    /// Meters per cell.
    pub resolution: f64,
    /// Cells per side.
    pub size: usize,
    /// Cells closer than this to an obstacle are marked inflated.
    pub clearance_radius: f64,
}

impl Default for CostMapParams {
    fn default() -> Self {
        Self {
            resolution: 0.05,
            size: 120,
            clearance_radius: 0.25,
        }
    }
}

/// Occupancy cost map in the scan frame; the robot sits at the center cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyCostMap {
    cells: Vec<CellCost>,
    pub resolution: f64,
    pub size: usize,
    /// Scan-frame pose of cell (0, 0)'s center.
    pub origin: Pose2D,
    /// Distance in meters from each cell center to the nearest occupied
    /// cell center; infinite when the map holds no obstacles.
    obstacle_dist: Vec<f64>,
}

impl OccupancyCostMap {
    /// Assemble a map from raw cells, computing distances and inflation.
    pub fn from_cells(
        cells: Vec<CellCost>,
        params: &CostMapParams,
    ) -> Result<Self, WaypointError> {
        if params.size == 0 || params.resolution <= 0.0 {
            return Err(WaypointError::ZeroSizeMap);
        }
        let expected = params.size * params.size;
        if cells.len() != expected {
            return Err(WaypointError::CellShapeMismatch {
                expected,
                got: cells.len(),
            });
        }
        let half = (params.size / 2) as f64;
        let origin = Pose2D::new(
            -half * params.resolution,
            -half * params.resolution,
            0.0,
        )
        .expect("finite origin");
        let mut map = Self {
            cells,
            resolution: params.resolution,
            size: params.size,
            origin,
            obstacle_dist: Vec::new(),
        };
        map.recompute_distances(params.clearance_radius);
        Ok(map)
    }

    fn recompute_distances(&mut self, clearance_radius: f64) {
        self.obstacle_dist = distance_transform(
            self.size,
            self.resolution,
            |i| self.cells[i] == CellCost::Occupied,
        );
        for i in 0..self.cells.len() {
            let d = self.obstacle_dist[i];
            if self.cells[i] != CellCost::Occupied && d <= clearance_radius {
                self.cells[i] = CellCost::Inflated(d);
            }
        }
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.size + ix
    }

    pub fn cell(&self, ix: usize, iy: usize) -> CellCost {
        self.cells[self.index(ix, iy)]
    }

    /// Cell containing a scan-frame point, or `None` outside the map.
    pub fn cell_of(&self, point: (f64, f64)) -> Option<(usize, usize)> {
        let fx = (point.0 - self.origin.x) / self.resolution;
        let fy = (point.1 - self.origin.y) / self.resolution;
        let ix = fx.round();
        let iy = fy.round();
        if ix < 0.0 || iy < 0.0 || ix >= self.size as f64 || iy >= self.size as f64 {
            return None;
        }
        Some((ix as usize, iy as usize))
    }

    /// Scan-frame center of a cell.
    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.origin.x + ix as f64 * self.resolution,
            self.origin.y + iy as f64 * self.resolution,
        )
    }

    /// The robot's cell: the map center.
    pub fn robot_cell(&self) -> (usize, usize) {
        (self.size / 2, self.size / 2)
    }

    /// Euclidean distance from a cell center to the nearest occupied cell.
    pub fn obstacle_distance(&self, ix: usize, iy: usize) -> f64 {
        self.obstacle_dist[self.index(ix, iy)]
    }

    /// Export as an ASCII portable greymap for eyeball inspection:
    /// occupied 0, inflated 1–127 scaled by clearance, unknown 205, free 255.
    pub fn to_pgm(&self) -> String {
        let mut out = format!("P2\n{} {}\n255\n", self.size, self.size);
        let max_inflated = self
            .cells
            .iter()
            .filter_map(|c| match c {
                CellCost::Inflated(d) => Some(*d),
                _ => None,
            })
            .fold(0.0_f64, f64::max);
        for iy in (0..self.size).rev() {
            let row: Vec<String> = (0..self.size)
                .map(|ix| {
                    let v: u32 = match self.cell(ix, iy) {
                        CellCost::Occupied => 0,
                        CellCost::Inflated(d) => {
                            1 + (126.0 * d / max_inflated.max(1e-9)).round() as u32
                        }
                        CellCost::Unknown => 205,
                        CellCost::Free => 255,
                    };
                    v.to_string()
                })
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Exact squared Euclidean distance transform (two-pass lower-envelope
/// method), returned in meters between cell centers.
fn distance_transform(
    size: usize,
    resolution: f64,
    is_obstacle: impl Fn(usize) -> bool,
) -> Vec<f64> {
    const INF: f64 = 1e20;
    let mut grid = vec![INF; size * size];
    let mut any = false;
    for (i, g) in grid.iter_mut().enumerate() {
        if is_obstacle(i) {
            *g = 0.0;
            any = true;
        }
    }
    if !any {
        return vec![f64::INFINITY; size * size];
    }

    // 1D transform along each column, then each row.
    let mut f = vec![0.0; size];
    let mut d = vec![0.0; size];
    for x in 0..size {
        for y in 0..size {
            f[y] = grid[y * size + x];
        }
        edt_1d(&f, &mut d);
        for y in 0..size {
            grid[y * size + x] = d[y];
        }
    }
    for y in 0..size {
        f.copy_from_slice(&grid[y * size..(y + 1) * size]);
        edt_1d(&f, &mut d);
        for x in 0..size {
            grid[y * size + x] = d[x];
        }
    }
    grid.iter().map(|&d2| d2.sqrt() * resolution).collect()
}

/// One pass of the lower-envelope squared distance transform.
fn edt_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        loop {
            let p = v[k] as f64;
            let s = ((f[q] + qf * qf) - (f[v[k]] + p * p)) / (2.0 * qf - 2.0 * p);
            if s <= z[k] {
                if k == 0 {
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        *out = (qf - p) * (qf - p) + f[v[k]];
    }
}

/// Rasterize one scan into an occupancy cost map: each beam sweeps free
/// cells up to its return, returns mark occupied cells, and everything
/// within `clearance_radius` of an occupied cell is inflated with its
/// obstacle distance. Unswept cells stay unknown.
pub fn build_cost_map(
    scan: &LidarScan,
    params: &CostMapParams,
) -> Result<OccupancyCostMap, WaypointError> {
    if params.size == 0 || params.resolution <= 0.0 {
        return Err(WaypointError::ZeroSizeMap);
    }
    let size = params.size;
    let res = params.resolution;
    let mut cells = vec![CellCost::Unknown; size * size];
    let half = (size / 2) as f64;
    let origin = (-half * res, -half * res);
    let cell_of = |p: (f64, f64)| -> Option<usize> {
        let ix = ((p.0 - origin.0) / res).round();
        let iy = ((p.1 - origin.1) / res).round();
        if ix < 0.0 || iy < 0.0 || ix >= size as f64 || iy >= size as f64 {
            None
        } else {
            Some(iy as usize * size + ix as usize)
        }
    };

    // Free space first, beam by beam; returns overwrite afterwards so one
    // beam's sweep can never erase another's hit.
    let march_step = res / 3.0;
    for (k, &range) in scan.ranges.iter().enumerate() {
        let dir = scan.angles[k];
        let (c, s) = (dir.cos(), dir.sin());
        let limit = range - res * 0.5;
        let mut t = 0.0;
        while t < limit {
            if let Some(i) = cell_of((t * c, t * s)) {
                cells[i] = CellCost::Free;
            }
            t += march_step;
        }
    }
    for (k, &range) in scan.ranges.iter().enumerate() {
        if range < scan.max_range {
            let dir = scan.angles[k];
            if let Some(i) = cell_of((range * dir.cos(), range * dir.sin())) {
                cells[i] = CellCost::Occupied;
            }
        }
    }

    OccupancyCostMap::from_cells(cells, params)
}

/// All free cells 8-connected-reachable from the robot cell. Free pockets
/// sealed behind obstacles are excluded: a waypoint the robot cannot reach
/// is not navigable.
pub fn extract_navigable(
    map: &OccupancyCostMap,
) -> Result<Vec<(usize, usize)>, WaypointError> {
    let (rx, ry) = map.robot_cell();
    if map.cell(rx, ry) != CellCost::Free {
        return Err(WaypointError::DegeneratePose);
    }
    let size = map.size;
    let mut visited = vec![false; size * size];
    let mut stack = vec![(rx, ry)];
    visited[map.index(rx, ry)] = true;
    let mut out = Vec::new();
    while let Some((x, y)) = stack.pop() {
        out.push((x, y));
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let nx = x as i64 + dx;
                let ny = y as i64 + dy;
                if nx < 0 || ny < 0 || nx >= size as i64 || ny >= size as i64 {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                let i = map.index(nx, ny);
                if !visited[i] && map.cell(nx, ny) == CellCost::Free {
                    visited[i] = true;
                    stack.push((nx, ny));
                }
            }
        }
    }
    // Deterministic output order regardless of stack traversal order.
    out.sort_unstable();
    Ok(out)
}

/// Lloyd's algorithm with k-means++ seeding, deterministic under `seed`.
///
/// Runs at most 50 iterations or until the relative inertia change drops
/// below 1e-4. When the input has no more than `k` distinct points those
/// points are returned directly.
pub fn kmeans(
    points: &[(f64, f64)],
    k: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>, WaypointError> {
    Ok(kmeans_detailed(points, k, seed)?.centers)
}

/// K-means output plus the per-iteration inertia trace for invariant checks.
#[derive(Debug, Clone)]
pub struct KmeansResult {
    pub centers: Vec<(f64, f64)>,
    pub inertia: f64,
    pub inertia_trace: Vec<f64>,
}

pub fn kmeans_detailed(
    points: &[(f64, f64)],
    k: usize,
    seed: u64,
) -> Result<KmeansResult, WaypointError> {
    use rand::{Rng, SeedableRng};
    if points.is_empty() {
        return Err(WaypointError::EmptyPoints);
    }
    if k == 0 {
        return Err(WaypointError::InvalidK);
    }

    let mut unique_keys = std::collections::HashSet::new();
    let mut unique: Vec<(f64, f64)> = Vec::new();
    for &p in points {
        if unique_keys.insert((p.0.to_bits(), p.1.to_bits())) {
            unique.push(p);
        }
    }
    if unique.len() <= k {
        let inertia = 0.0;
        return Ok(KmeansResult {
            centers: unique,
            inertia,
            inertia_trace: vec![inertia],
        });
    }

    let d2 = |a: (f64, f64), b: (f64, f64)| {
        let dx = a.0 - b.0;
        let dy = a.1 - b.1;
        dx * dx + dy * dy
    };

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = points.len();

    // k-means++ seeding: first center uniform, then proportional to the
    // squared distance to the nearest chosen center.
    let mut centers: Vec<(f64, f64)> = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..n)]);
    let mut nearest_d2: Vec<f64> = points.iter().map(|&p| d2(p, centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest_d2.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, &w) in nearest_d2.iter().enumerate() {
            target -= w;
            if target <= 0.0 {
                pick = i;
                break;
            }
        }
        let c = points[pick];
        centers.push(c);
        for (i, &p) in points.iter().enumerate() {
            let nd = d2(p, c);
            if nd < nearest_d2[i] {
                nearest_d2[i] = nd;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    let mut inertia_trace = Vec::new();
    let mut prev_inertia = f64::INFINITY;
    for _iter in 0..50 {
        // Assignment step; ties go to the lower cluster index.
        let mut inertia = 0.0;
        for (i, &p) in points.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = d2(p, centers[0]);
            for (c, &center) in centers.iter().enumerate().skip(1) {
                let dd = d2(p, center);
                if dd < best_d {
                    best_d = dd;
                    best = c;
                }
            }
            assignment[i] = best;
            inertia += best_d;
        }
        inertia_trace.push(inertia);

        // Update step.
        let mut sums = vec![(0.0f64, 0.0f64, 0usize); k];
        for (i, &p) in points.iter().enumerate() {
            let s = &mut sums[assignment[i]];
            s.0 += p.0;
            s.1 += p.1;
            s.2 += 1;
        }
        for (c, s) in sums.iter().enumerate() {
            if s.2 > 0 {
                centers[c] = (s.0 / s.2 as f64, s.1 / s.2 as f64);
            } else {
                // Re-seed an emptied cluster at the point farthest from its
                // current center.
                let mut far = 0usize;
                let mut far_d = -1.0;
                for (i, &p) in points.iter().enumerate() {
                    let dd = d2(p, centers[assignment[i]]);
                    if dd > far_d {
                        far_d = dd;
                        far = i;
                    }
                }
                centers[c] = points[far];
            }
        }

        if prev_inertia.is_finite() {
            let change = (prev_inertia - inertia).abs() / prev_inertia.max(1e-12);
            if change < 1e-4 {
                break;
            }
        }
        prev_inertia = inertia;
    }

    let inertia = *inertia_trace.last().expect("at least one iteration");
    Ok(KmeansResult {
        centers,
        inertia,
        inertia_trace,
    })
}

/// Drop cluster centers that sit too close to obstacles or to each other.
///
/// A surviving center lies in a free cell with obstacle distance at least
/// `min_clearance`; when two centers violate `min_separation` the one with
/// the larger clearance survives (ties keep the lower index). Output
/// preserves input order.
pub fn filter_centers(
    centers: &[(f64, f64)],
    map: &OccupancyCostMap,
    min_clearance: f64,
    min_separation: f64,
) -> Vec<(f64, f64)> {
    struct Entry {
        index: usize,
        point: (f64, f64),
        clearance: f64,
    }
    let mut eligible: Vec<Entry> = Vec::new();
    for (index, &point) in centers.iter().enumerate() {
        let Some((ix, iy)) = map.cell_of(point) else {
            continue;
        };
        if map.cell(ix, iy) != CellCost::Free {
            continue;
        }
        let clearance = map.obstacle_distance(ix, iy);
        if clearance >= min_clearance {
            eligible.push(Entry {
                index,
                point,
                clearance,
            });
        }
    }
    eligible.sort_by(|a, b| {
        b.clearance
            .partial_cmp(&a.clearance)
            .expect("finite clearances")
            .then(a.index.cmp(&b.index))
    });
    let mut kept: Vec<&Entry> = Vec::new();
    for e in &eligible {
        let ok = kept.iter().all(|other| {
            let dx = e.point.0 - other.point.0;
            let dy = e.point.1 - other.point.1;
            dx.hypot(dy) >= min_separation
        });
        if ok {
            kept.push(e);
        }
    }
    kept.sort_by_key(|e| e.index);
    kept.iter().map(|e| e.point).collect()
}

/// Full parameter set for the clustering pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaypointParams {
    pub cost_map: CostMapParams,
    pub k: usize,
    pub min_clearance: f64,
    pub min_separation: f64,
}

impl Default for WaypointParams {
    fn default() -> Self {
        Self {
            cost_map: CostMapParams::default(),
            k: 10,
            min_clearance: 0.25,
            min_separation: 0.5,
        }
    }
}

/// The five-step clustering pipeline over one scan. Waypoint ids are
/// assigned 1.. in output order; any count ≥ 0 can come back after
/// filtering and it is the caller's job to cope.
pub fn predict_waypoints_lidar(
    scan: &LidarScan,
    pose: &Pose2D,
    params: &WaypointParams,
    seed: u64,
) -> Result<Vec<Waypoint>, WaypointError> {
    let map = build_cost_map(scan, &params.cost_map)?;
    let cells = extract_navigable(&map)?;
    let points: Vec<(f64, f64)> = cells
        .iter()
        .map(|&(ix, iy)| map.cell_center(ix, iy))
        .collect();
    let centers = kmeans(&points, params.k, seed)?;
    let kept = filter_centers(&centers, &map, params.min_clearance, params.min_separation);
    let mut waypoints = Vec::with_capacity(kept.len());
    for (i, &(cx, cy)) in kept.iter().enumerate() {
        let distance = cx.hypot(cy);
        let bearing = if distance == 0.0 {
            0.0
        } else {
            normalize_heading(cy.atan2(cx)).expect("finite bearing")
        };
        let world_xy = relative_to_world(pose, bearing, distance).expect("finite transform");
        waypoints.push(Waypoint {
            id: (i + 1) as u32,
            bearing,
            distance,
            world_xy,
            kind: WaypointKind::Ghost,
        });
    }
    Ok(waypoints)
}

// ---------------------------------------------------------------------------
// Heatmap non-maximum suppression
// ---------------------------------------------------------------------------

/// Angle bins of the polar waypoint heatmap (3° each).
pub const HEATMAP_ANGLE_BINS: usize = 120;
/// Distance bins of the heatmap (0.25 m to 3.0 m in 0.25 m steps).
pub const HEATMAP_DIST_BINS: usize = 12;
const HEATMAP_MIN_DIST: f64 = 0.25;
const HEATMAP_DIST_STEP: f64 = 0.25;

/// Polar heatmap over waypoint space, row-major `[angle][distance]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointHeatmap {
    values: Vec<f64>,
}

impl WaypointHeatmap {
    pub fn new(values: Vec<f64>) -> Result<Self, WaypointError> {
        let expected = HEATMAP_ANGLE_BINS * HEATMAP_DIST_BINS;
        if values.len() != expected {
            return Err(WaypointError::HeatmapShape {
                expected,
                got: values.len(),
            });
        }
        for &v in &values {
            if !v.is_finite() || v < 0.0 {
                return Err(WaypointError::BadHeatmapValue(v));
            }
        }
        Ok(Self { values })
    }

    pub fn zeros() -> Self {
        Self {
            values: vec![0.0; HEATMAP_ANGLE_BINS * HEATMAP_DIST_BINS],
        }
    }

    pub fn get(&self, angle_bin: usize, dist_bin: usize) -> f64 {
        self.values[angle_bin * HEATMAP_DIST_BINS + dist_bin]
    }

    pub fn set(&mut self, angle_bin: usize, dist_bin: usize, value: f64) {
        self.values[angle_bin * HEATMAP_DIST_BINS + dist_bin] = value;
    }

    /// Bearing of an angle bin, in `(-π, π]`; bin 0 is straight ahead.
    pub fn bearing_of(angle_bin: usize) -> f64 {
        normalize_heading(angle_bin as f64 * TAU / HEATMAP_ANGLE_BINS as f64)
            .expect("finite bearing")
    }

    /// Range of a distance bin in meters.
    pub fn distance_of(dist_bin: usize) -> f64 {
        HEATMAP_MIN_DIST + dist_bin as f64 * HEATMAP_DIST_STEP
    }
}

/// Suppression neighborhood radius in bins; the angle axis wraps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NmsSuppression {
    pub angle_bins: usize,
    pub distance_bins: usize,
}

impl Default for NmsSuppression {
    fn default() -> Self {
        Self {
            angle_bins: 4,
            distance_bins: 2,
        }
    }
}

/// Greedy non-maximum suppression: pick up to `p` cells in descending value
/// (zero-valued cells are never picked), suppressing each pick's polar
/// neighborhood. Exact ties resolve to the lower linear index.
pub fn nms_heatmap(
    hm: &WaypointHeatmap,
    pose: &Pose2D,
    p: usize,
    sup: &NmsSuppression,
) -> Vec<Waypoint> {
    let n = HEATMAP_ANGLE_BINS * HEATMAP_DIST_BINS;
    let mut suppressed = vec![false; n];
    let mut picks: Vec<usize> = Vec::new();
    while picks.len() < p {
        let mut best: Option<usize> = None;
        for (i, (&sup, &value)) in suppressed.iter().zip(&hm.values).enumerate() {
            if sup || value <= 0.0 {
                continue;
            }
            match best {
                Some(b) if value <= hm.values[b] => {}
                _ => best = Some(i),
            }
        }
        let Some(pick) = best else { break };
        picks.push(pick);
        let pa = pick / HEATMAP_DIST_BINS;
        let pd = pick % HEATMAP_DIST_BINS;
        for a in 0..HEATMAP_ANGLE_BINS {
            let da = {
                let raw = (a as i64 - pa as i64).unsigned_abs() as usize;
                raw.min(HEATMAP_ANGLE_BINS - raw)
            };
            if da > sup.angle_bins {
                continue;
            }
            for d in 0..HEATMAP_DIST_BINS {
                let dd = (d as i64 - pd as i64).unsigned_abs() as usize;
                if dd <= sup.distance_bins {
                    suppressed[a * HEATMAP_DIST_BINS + d] = true;
                }
            }
        }
    }

    picks
        .iter()
        .enumerate()
        .map(|(i, &pick)| {
            let bearing = WaypointHeatmap::bearing_of(pick / HEATMAP_DIST_BINS);
            let distance = WaypointHeatmap::distance_of(pick % HEATMAP_DIST_BINS);
            let world_xy =
                relative_to_world(pose, bearing, distance).expect("finite transform");
            Waypoint {
                id: (i + 1) as u32,
                bearing,
                distance,
                world_xy,
                kind: WaypointKind::Ghost,
            }
        })
        .collect()
}
