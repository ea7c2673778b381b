//! Room shape optimization: corner polygons as minimum-cost containing cycles
//! on a grid graph, refined coarse-to-fine.
//!
//! A finalized room arrives as evidence: its occupancy density `H`, the
//! validated wall points, and the likely wall directions. The room mask and a
//! wall-evidence density are resampled onto a square solver grid; nodes near
//! the mask boundary become graph vertices; edge weights mix orientation
//! deviation, missing wall evidence along the segment, mask interior crossing
//! and a constant complexity charge. A containment cut around an interior
//! anchor forces the shortest cycle to wind once around the room, so the
//! optimal path's vertices are the room corners.
//!
//! The first round runs on a coarse grid with a maximum edge length, which
//! keeps the edge count linear in the node count but leaves redundant
//! corners; later rounds rebuild the graph only around the previous corners
//! at finer resolution without the length cap, deleting redundant corners by
//! letting the path skip whole corner neighborhoods.

use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;

use crate::geometry::{DensityGrid, RoomPolygon, Vec2};
use crate::planes::direction_distance;

#[derive(Debug, thiserror::Error)]
pub enum ShapeError {
    #[error("room mask is empty (no occupancy cell reaches the threshold)")]
    EmptyMask,
    #[error("no containing cycle exists in the shape graph")]
    NoContainingCycle,
    #[error("oracle refuses grids larger than {max}, got {got}")]
    OracleGridTooLarge { got: usize, max: usize },
    #[error("schedule must contain at least one round")]
    EmptySchedule,
    #[error("grid size {0} too small for the boundary band")]
    GridTooSmall(usize),
    #[error("weights invalid: complexity weight must be positive")]
    BadWeights,
    #[error("solved loop degenerated to fewer than 3 corners")]
    DegenerateLoop,
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

/// Edge weight coefficients.
#[derive(Debug, Clone, Copy)]
pub struct SpaWeights {
    pub ori: f64,
    pub plane: f64,
    pub mask: f64,
    /// Constant per-edge charge; on a closed loop edges and corners are
    /// equinumerous, so this prices model complexity.
    pub complex: f64,
}

impl Default for SpaWeights {
    /// Tuned on clean synthetic rooms: with the mask eroded to strictly
    /// interior cells, riding wall evidence is nearly free, open space pays
    /// `plane` per pixel and interior crossings pay `plane + mask`, so both
    /// shortcuts across concave notches and small anchor-hugging cycles are
    /// decisively beaten. The complexity charge removes redundant collinear
    /// corners (they change no data term) and stops the path from
    /// stair-stepping along rasterized walls.
    fn default() -> Self {
        Self {
            ori: 1.0,
            plane: 4.0,
            mask: 2.0,
            complex: 2.0,
        }
    }
}

impl SpaWeights {
    pub fn validate(&self) -> Result<(), ShapeError> {
        if self.complex <= 0.0 || self.ori < 0.0 || self.plane < 0.0 || self.mask < 0.0 {
            return Err(ShapeError::BadWeights);
        }
        Ok(())
    }
}

/// One solver round.
#[derive(Debug, Clone, Copy)]
pub struct RoundSpec {
    pub grid_size: usize,
    /// Chebyshev edge-length cap; `None` allows all node pairs.
    pub max_edge_length: Option<usize>,
    /// Radius of the node neighborhoods around previous corners, used when
    /// this round refines an earlier one.
    pub corner_neighborhood_radius: usize,
}

/// Coarse-to-fine round list.
#[derive(Debug, Clone)]
pub struct IspaSchedule {
    pub rounds: Vec<RoundSpec>,
}

impl Default for IspaSchedule {
    /// Three rounds on grids {64, 96, 96}: the first limited to 8-cell edges,
    /// the refinements unrestricted over 5-cell corner neighborhoods.
    fn default() -> Self {
        Self {
            rounds: vec![
                RoundSpec {
                    grid_size: 64,
                    max_edge_length: Some(8),
                    corner_neighborhood_radius: 5,
                },
                RoundSpec {
                    grid_size: 96,
                    max_edge_length: None,
                    corner_neighborhood_radius: 5,
                },
                RoundSpec {
                    grid_size: 96,
                    max_edge_length: None,
                    corner_neighborhood_radius: 5,
                },
            ],
        }
    }
}

impl IspaSchedule {
    /// Single round at `grid_size` with no edge-length cap.
    pub fn single_unrestricted(grid_size: usize) -> Self {
        Self {
            rounds: vec![RoundSpec {
                grid_size,
                max_edge_length: None,
                corner_neighborhood_radius: 5,
            }],
        }
    }
}

/// Everything the solver needs about one finalized room.
#[derive(Debug, Clone)]
pub struct RoomEvidence {
    /// Per-room occupancy density `H` on its world-anchored grid.
    pub occupancy: DensityGrid,
    /// World `(x, z)` points of all validated plane-wall features.
    pub wall_points: Vec<Vec2>,
    /// Likely wall directions, each in `[0, pi)`.
    pub orientations: Vec<f64>,
}

/// Occupancy value at which a cell belongs to the room mask.
pub const MASK_THRESHOLD: f64 = 0.5;

/// Largest grid the exhaustive oracle accepts.
pub const ORACLE_MAX_GRID: usize = 24;

const BAND_HALF_WIDTH: i64 = 4;
const COLLINEAR_MERGE_DEG: f64 = 1.0;
const MAX_REFINE_CORNERS: usize = 24;

// ── Solver grid frame and resampled maps ──────────────────────────────────────

/// Square solver grid over a world window.
#[derive(Debug, Clone, Copy)]
pub struct GridFrame {
    pub origin: Vec2,
    pub cell: f64,
    pub size: usize,
}

impl GridFrame {
    pub fn cell_center(&self, row: usize, col: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + (col as f64 + 0.5) * self.cell,
            self.origin.y + (row as f64 + 0.5) * self.cell,
        )
    }

    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let col = ((p.x - self.origin.x) / self.cell).floor();
        let row = ((p.y - self.origin.y) / self.cell).floor();
        if col < 0.0 || row < 0.0 || col >= self.size as f64 || row >= self.size as f64 {
            None
        } else {
            Some((row as usize, col as usize))
        }
    }
}

/// Wall-evidence density `M_P` and room mask `M_H` on a solver grid.
#[derive(Debug, Clone)]
pub struct ShapeMaps {
    pub frame: GridFrame,
    wall_density: Vec<f64>,
    mask: Vec<bool>,
}

impl ShapeMaps {
    /// Assemble maps from raw per-cell data (row-major, `size * size` each).
    pub fn from_parts(frame: GridFrame, wall_density: Vec<f64>, mask: Vec<bool>) -> Self {
        assert_eq!(wall_density.len(), frame.size * frame.size);
        assert_eq!(mask.len(), frame.size * frame.size);
        Self {
            frame,
            wall_density,
            mask,
        }
    }

    #[inline]
    pub fn wall_density(&self, row: usize, col: usize) -> f64 {
        self.wall_density[row * self.frame.size + col]
    }

    #[inline]
    pub fn mask(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.frame.size + col]
    }

    pub fn mask_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let size = self.frame.size;
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(move |(i, _)| (i / size, i % size))
    }
}

/// Room mask at the occupancy grid's native resolution: threshold at 0.5,
/// keep only the largest 4-connected component to kill speckle, then erode
/// by one cell so the mask means "strictly interior". Without the erosion
/// the binarized boundary rides the wall line itself and the mask term taxes
/// every wall pixel, which distorts all the edge-cost economics.
fn native_mask(occupancy: &DensityGrid) -> Result<Vec<bool>, ShapeError> {
    let spec = occupancy.spec();
    let (rows, cols) = (spec.rows, spec.cols);
    let mut mask = vec![false; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            if occupancy.get(r, c) >= MASK_THRESHOLD {
                mask[r * cols + c] = true;
            }
        }
    }
    if !mask.iter().any(|&m| m) {
        return Err(ShapeError::EmptyMask);
    }
    // Largest component by cell count, ties toward the first seed in
    // row-major order.
    let mut label = vec![u32::MAX; rows * cols];
    let mut best: (usize, u32) = (0, u32::MAX);
    let mut next_label = 0u32;
    let mut queue = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || label[start] != u32::MAX {
            continue;
        }
        let this = next_label;
        next_label += 1;
        let mut count = 0usize;
        queue.push(start);
        label[start] = this;
        while let Some(idx) = queue.pop() {
            count += 1;
            let (r, c) = (idx / cols, idx % cols);
            let mut push = |rr: usize, cc: usize| {
                let j = rr * cols + cc;
                if mask[j] && label[j] == u32::MAX {
                    label[j] = this;
                    queue.push(j);
                }
            };
            if r > 0 {
                push(r - 1, c);
            }
            if r + 1 < rows {
                push(r + 1, c);
            }
            if c > 0 {
                push(r, c - 1);
            }
            if c + 1 < cols {
                push(r, c + 1);
            }
        }
        if count > best.0 {
            best = (count, this);
        }
    }
    for i in 0..mask.len() {
        mask[i] = mask[i] && label[i] == best.1;
    }
    let mut eroded = vec![false; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            if !mask[r * cols + c] {
                continue;
            }
            let interior = r > 0
                && c > 0
                && r + 1 < rows
                && c + 1 < cols
                && mask[(r - 1) * cols + c]
                && mask[(r + 1) * cols + c]
                && mask[r * cols + c - 1]
                && mask[r * cols + c + 1];
            eroded[r * cols + c] = interior;
        }
    }
    if !eroded.iter().any(|&m| m) {
        // A sliver of a room; fall back to the unreoded component.
        return Ok(mask);
    }
    Ok(eroded)
}

/// Resample the evidence onto a square `grid_size` frame covering the mask.
///
/// The window is the mask bounding box padded so the boundary band fits
/// inside the frame; the same window (recomputed per grid size) serves every
/// round, keeping costs comparable across rounds of equal size.
pub fn build_maps(evidence: &RoomEvidence, grid_size: usize) -> Result<ShapeMaps, ShapeError> {
    if grid_size <= 8 {
        return Err(ShapeError::GridTooSmall(grid_size));
    }
    let native = native_mask(&evidence.occupancy)?;
    let spec = evidence.occupancy.spec();
    let cols = spec.cols;
    let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (i, &m) in native.iter().enumerate() {
        if m {
            let (r, c) = (i / cols, i % cols);
            let x0 = spec.origin.x + c as f64 * spec.cell_size;
            let y0 = spec.origin.y + r as f64 * spec.cell_size;
            min.x = min.x.min(x0);
            min.y = min.y.min(y0);
            max.x = max.x.max(x0 + spec.cell_size);
            max.y = max.y.max(y0 + spec.cell_size);
        }
    }
    let span = (max.x - min.x).max(max.y - min.y);
    // Leave (band + 1) cells of slack around the mask on each side.
    let slack = (BAND_HALF_WIDTH as f64 + 1.5) * 2.0;
    let side = span / (1.0 - slack / grid_size as f64);
    let center = (min + max) / 2.0;
    let frame = GridFrame {
        origin: center - Vec2::new(side / 2.0, side / 2.0),
        cell: side / grid_size as f64,
        size: grid_size,
    };
    let mut mask = vec![false; grid_size * grid_size];
    for row in 0..grid_size {
        for col in 0..grid_size {
            let p = frame.cell_center(row, col);
            if let Some((nr, nc)) = spec.cell_of(p) {
                mask[row * grid_size + col] = native[nr * cols + nc];
            }
        }
    }
    let mut counts = vec![0.0f64; grid_size * grid_size];
    for wp in &evidence.wall_points {
        if let Some((r, c)) = frame.cell_of(*wp) {
            counts[r * grid_size + c] += 1.0;
        }
    }
    // Normalize by the 25th-percentile occupied-cell count and clip. Counts
    // vary by an order of magnitude with camera proximity and dwell time;
    // a low percentile saturates every consistently observed wall cell to
    // 1.0 while sparse speckle stays fractional.
    let mut occupied: Vec<f64> = counts.iter().copied().filter(|&v| v > 0.0).collect();
    if !occupied.is_empty() {
        occupied.sort_by(|a, b| a.total_cmp(b));
        let idx = ((occupied.len() as f64 * 0.25).ceil() as usize).clamp(1, occupied.len()) - 1;
        let divisor = occupied[idx].max(1.0);
        for v in &mut counts {
            *v = (*v / divisor).min(1.0);
        }
    }
    Ok(ShapeMaps::from_parts(frame, counts, mask))
}

// ── Edge costs ────────────────────────────────────────────────────────────────

/// Cells of the segment between two cell centers, inclusive of both ends.
///
/// The traversal is canonicalized (computed from the lexicographically
/// smaller endpoint) so the cell set does not depend on direction; reversing
/// an edge therefore changes only which endpoint the half-open cost skips.
pub fn segment_cells(p: (usize, usize), q: (usize, usize)) -> Vec<(usize, usize)> {
    let mut cells = Vec::new();
    walk_segment(p, q, |cell| cells.push(cell));
    if p > q {
        cells.reverse();
    }
    cells
}

/// Canonical Bresenham walk from the lexicographically smaller endpoint,
/// visiting every cell of the segment including both ends.
#[inline]
fn walk_segment(p: (usize, usize), q: (usize, usize), mut visit: impl FnMut((usize, usize))) {
    let (a, b) = if p <= q { (p, q) } else { (q, p) };
    let (mut r, mut c) = (a.0 as i64, a.1 as i64);
    let (r1, c1) = (b.0 as i64, b.1 as i64);
    let dr = (r1 - r).abs();
    let dc = (c1 - c).abs();
    let sr = if r1 > r { 1 } else { -1 };
    let sc = if c1 > c { 1 } else { -1 };
    let mut err = dc - dr;
    loop {
        visit((r as usize, c as usize));
        if r == r1 && c == c1 {
            break;
        }
        let e2 = 2 * err;
        if e2 > -dr {
            err -= dr;
            c += sc;
        }
        if e2 < dc {
            err += dc;
            r += sr;
        }
    }
}

/// Weight of the directed edge `p -> q`.
///
/// `L_ori` is the angular deviation of the edge direction from the nearest
/// likely wall direction, folded to `[0, pi/2]` (zero when no orientations
/// are known). `L_plane` charges `1 - M_P` and `L_mask` charges `M_H` over
/// the rasterized segment, excluding `p` and including `q` so concatenated
/// edges never double-count a node.
pub fn edge_cost(
    p: (usize, usize),
    q: (usize, usize),
    maps: &ShapeMaps,
    orientations: &[f64],
    weights: &SpaWeights,
) -> f64 {
    debug_assert_ne!(p, q);
    let l_ori = if orientations.is_empty() {
        0.0
    } else {
        let angle = ((q.0 as f64) - (p.0 as f64)).atan2((q.1 as f64) - (p.1 as f64));
        orientations
            .iter()
            .map(|&t| direction_distance(angle, t))
            .fold(f64::INFINITY, f64::min)
    };
    let mut l_plane = 0.0;
    let mut l_mask = 0.0;
    let size = maps.frame.size;
    walk_segment(p, q, |cell| {
        if cell != p {
            let idx = cell.0 * size + cell.1;
            l_plane += 1.0 - maps.wall_density[idx];
            if maps.mask[idx] {
                l_mask += 1.0;
            }
        }
    });
    weights.ori * l_ori + weights.plane * l_plane + weights.mask * l_mask + weights.complex
}

// ── Containment cut ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Crossing {
    /// Does not touch the anchor ray.
    None,
    /// Crosses the ray with increasing row; the cycle must contain exactly
    /// one such edge.
    Down,
    /// Crosses with decreasing row; forbidden, which restricts the search to
    /// cycles winding exactly once.
    Up,
}

/// Classify the segment `p -> q` against the horizontal ray that starts at
/// `anchor` and runs toward increasing columns. Half-open row counting keeps
/// every geometric crossing attributed to exactly one edge of a path.
fn classify_crossing(p: (usize, usize), q: (usize, usize), anchor: (usize, usize)) -> Crossing {
    let (ar, ac) = (anchor.0 as f64, anchor.1 as f64);
    let above1 = (p.0 as f64) > ar;
    let above2 = (q.0 as f64) > ar;
    if above1 == above2 {
        return Crossing::None;
    }
    let t = (ar - p.0 as f64) / (q.0 as f64 - p.0 as f64);
    let x = p.1 as f64 + t * (q.1 as f64 - p.1 as f64);
    if x > ac {
        if above2 { Crossing::Down } else { Crossing::Up }
    } else {
        Crossing::None
    }
}

/// Interior mask cell farthest from the mask boundary (multi-source BFS over
/// 8-neighborhoods from all non-mask cells); ties go to the lexicographically
/// smallest `(row, col)`.
pub fn containment_anchor(maps: &ShapeMaps) -> Result<(usize, usize), ShapeError> {
    let size = maps.frame.size;
    let mut dist = vec![u32::MAX; size * size];
    let mut queue = std::collections::VecDeque::new();
    for r in 0..size {
        for c in 0..size {
            let outside = !maps.mask(r, c);
            let border = r == 0 || c == 0 || r == size - 1 || c == size - 1;
            if outside || border {
                dist[r * size + c] = 0;
                queue.push_back((r, c));
            }
        }
    }
    if queue.len() == size * size {
        return Err(ShapeError::EmptyMask);
    }
    while let Some((r, c)) = queue.pop_front() {
        let d = dist[r * size + c];
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                if rr < 0 || cc < 0 || rr >= size as i64 || cc >= size as i64 {
                    continue;
                }
                let j = rr as usize * size + cc as usize;
                if dist[j] == u32::MAX {
                    dist[j] = d + 1;
                    queue.push_back((rr as usize, cc as usize));
                }
            }
        }
    }
    let mut best = (0u32, (0usize, 0usize));
    for r in 0..size {
        for c in 0..size {
            let d = dist[r * size + c];
            if maps.mask(r, c) && d != u32::MAX && d > best.0 {
                best = (d, (r, c));
            }
        }
    }
    if best.0 == 0 {
        return Err(ShapeError::EmptyMask);
    }
    Ok(best.1)
}

// ── Round-1 band graph ────────────────────────────────────────────────────────

/// Shortest-path graph over the boundary band of the room mask, with the
/// containment cut installed.
///
/// Edges that do not touch the anchor ray live in a CSR adjacency; edges
/// crossing the ray downward are kept aside as candidate cycle closers and
/// upward crossings are dropped. The duplicated start/end roles of a
/// down-edge head realize the cut seam: the cycle is a shortest path from a
/// head back to the matching tail plus the closing edge.
pub struct ShapeGraph<'a> {
    maps: &'a ShapeMaps,
    nodes: Vec<(usize, usize)>,
    csr_offsets: Vec<u32>,
    csr_edges: Vec<(u32, f64)>,
    down_edges: Vec<(u32, u32, f64)>,
    anchor: (usize, usize),
}

/// Collect the node band: every cell within Chebyshev distance
/// `BAND_HALF_WIDTH` of a mask-boundary cell.
fn boundary_band(maps: &ShapeMaps) -> Vec<(usize, usize)> {
    let size = maps.frame.size;
    let mut in_band = vec![false; size * size];
    for r in 0..size {
        for c in 0..size {
            if !maps.mask(r, c) {
                continue;
            }
            let mut boundary = false;
            'scan: for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    if rr < 0 || cc < 0 || rr >= size as i64 || cc >= size as i64 {
                        boundary = true;
                        break 'scan;
                    }
                    if !maps.mask(rr as usize, cc as usize) {
                        boundary = true;
                        break 'scan;
                    }
                }
            }
            if !boundary {
                continue;
            }
            for dr in -BAND_HALF_WIDTH..=BAND_HALF_WIDTH {
                for dc in -BAND_HALF_WIDTH..=BAND_HALF_WIDTH {
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    if rr >= 0 && cc >= 0 && (rr as usize) < size && (cc as usize) < size {
                        in_band[rr as usize * size + cc as usize] = true;
                    }
                }
            }
        }
    }
    (0..size * size)
        .filter(|&i| in_band[i])
        .map(|i| (i / size, i % size))
        .collect()
}

/// Build the band graph for one round and install the containment cut.
pub fn build_graph<'a>(
    maps: &'a ShapeMaps,
    orientations: &[f64],
    weights: SpaWeights,
    round: &RoundSpec,
) -> Result<ShapeGraph<'a>, ShapeError> {
    weights.validate()?;
    let nodes = boundary_band(maps);
    if nodes.is_empty() {
        return Err(ShapeError::EmptyMask);
    }
    let anchor = containment_anchor(maps)?;
    let node_index: HashMap<(usize, usize), u32> = nodes
        .iter()
        .enumerate()
        .map(|(i, &cell)| (cell, i as u32))
        .collect();
    let size = maps.frame.size as i64;
    let reach = round.max_edge_length.map(|l| l as i64).unwrap_or(size);
    let mut csr_offsets = Vec::with_capacity(nodes.len() + 1);
    let mut csr_edges = Vec::new();
    let mut down_edges = Vec::new();
    csr_offsets.push(0u32);
    for (pi, &p) in nodes.iter().enumerate() {
        let (pr, pc) = (p.0 as i64, p.1 as i64);
        let r_lo = (pr - reach).max(0);
        let r_hi = (pr + reach).min(size - 1);
        let c_lo = (pc - reach).max(0);
        let c_hi = (pc + reach).min(size - 1);
        for rr in r_lo..=r_hi {
            for cc in c_lo..=c_hi {
                let q = (rr as usize, cc as usize);
                if q == p {
                    continue;
                }
                let Some(&qi) = node_index.get(&q) else {
                    continue;
                };
                match classify_crossing(p, q, anchor) {
                    Crossing::None => {
                        let w = edge_cost(p, q, maps, orientations, &weights);
                        csr_edges.push((qi, w));
                    }
                    Crossing::Down => {
                        let w = edge_cost(p, q, maps, orientations, &weights);
                        down_edges.push((pi as u32, qi, w));
                    }
                    Crossing::Up => {}
                }
            }
        }
        csr_offsets.push(csr_edges.len() as u32);
    }
    Ok(ShapeGraph {
        maps,
        nodes,
        csr_offsets,
        csr_edges,
        down_edges,
        anchor,
    })
}

struct HeapEntry {
    cost: f64,
    hops: u32,
    node: u32,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cost == other.cost && self.hops == other.hops && self.node == other.node
    }
}
impl Eq for HeapEntry {}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed for a min-heap on (cost, hops, node).
        other
            .cost
            .total_cmp(&self.cost)
            .then(other.hops.cmp(&self.hops))
            .then(other.node.cmp(&self.node))
    }
}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

struct SearchState {
    dist: Vec<f64>,
    hops: Vec<u32>,
    parent: Vec<u32>,
}

fn dijkstra(graph: &ShapeGraph<'_>, source: u32) -> SearchState {
    let n = graph.nodes.len();
    let mut state = SearchState {
        dist: vec![f64::INFINITY; n],
        hops: vec![u32::MAX; n],
        parent: vec![u32::MAX; n],
    };
    let mut heap = std::collections::BinaryHeap::new();
    state.dist[source as usize] = 0.0;
    state.hops[source as usize] = 0;
    heap.push(HeapEntry {
        cost: 0.0,
        hops: 0,
        node: source,
    });
    while let Some(entry) = heap.pop() {
        let u = entry.node as usize;
        if entry.cost > state.dist[u] || (entry.cost == state.dist[u] && entry.hops > state.hops[u])
        {
            continue;
        }
        let lo = graph.csr_offsets[u] as usize;
        let hi = graph.csr_offsets[u + 1] as usize;
        for &(v, w) in &graph.csr_edges[lo..hi] {
            let vi = v as usize;
            let cand = entry.cost + w;
            let cand_hops = entry.hops + 1;
            // Tie-break: lower cost, then fewer edges, then smaller parent.
            let better = cand < state.dist[vi]
                || (cand == state.dist[vi]
                    && (cand_hops < state.hops[vi]
                        || (cand_hops == state.hops[vi] && (entry.node) < state.parent[vi])));
            if better {
                state.dist[vi] = cand;
                state.hops[vi] = cand_hops;
                state.parent[vi] = entry.node;
                heap.push(HeapEntry {
                    cost: cand,
                    hops: cand_hops,
                    node: v,
                });
            }
        }
    }
    state
}

/// Minimum-cost containing cycle: node cells in cycle order plus total cost.
#[derive(Debug, Clone)]
pub struct CycleSolution {
    pub cells: Vec<(usize, usize)>,
    pub cost: f64,
}

impl<'a> ShapeGraph<'a> {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Directed edges kept in the graph (non-crossing plus cycle closers).
    pub fn edge_count(&self) -> usize {
        self.csr_edges.len() + self.down_edges.len()
    }

    pub fn anchor_cell(&self) -> (usize, usize) {
        self.anchor
    }

    pub fn anchor_world(&self) -> Vec2 {
        self.maps.frame.cell_center(self.anchor.0, self.anchor.1)
    }

    /// Solve the single-source shortest containing cycle.
    ///
    /// The optimal cycle uses exactly one down-crossing edge `(p, q)`, so the
    /// search runs one label-setting pass from every distinct down-edge head
    /// `q` over the cut graph and closes through the cheapest `(p, q)`.
    /// Ties break by cost, then cycle edge count, then node order.
    pub fn solve_cycle(&self) -> Result<CycleSolution, ShapeError> {
        let mut heads: Vec<u32> = self.down_edges.iter().map(|&(_, q, _)| q).collect();
        heads.sort_unstable();
        heads.dedup();
        if heads.is_empty() {
            return Err(ShapeError::NoContainingCycle);
        }
        #[derive(Clone, Copy)]
        struct Best {
            cost: f64,
            edges: u32,
            head: u32,
            tail: u32,
        }
        let better = |a: &Best, b: &Best| {
            a.cost < b.cost
                || (a.cost == b.cost
                    && (a.edges < b.edges
                        || (a.edges == b.edges
                            && (a.head, a.tail) < (b.head, b.tail))))
        };
        let best = heads
            .par_iter()
            .map(|&q| {
                let state = dijkstra(self, q);
                let mut local: Option<Best> = None;
                for &(p, qq, w) in &self.down_edges {
                    if qq != q || state.dist[p as usize].is_infinite() {
                        continue;
                    }
                    let cand = Best {
                        cost: state.dist[p as usize] + w,
                        edges: state.hops[p as usize] + 1,
                        head: q,
                        tail: p,
                    };
                    if local.as_ref().is_none_or(|cur| better(&cand, cur)) {
                        local = Some(cand);
                    }
                }
                local
            })
            .reduce(
                || None,
                |a, b| match (a, b) {
                    (None, x) => x,
                    (x, None) => x,
                    (Some(x), Some(y)) => Some(if better(&x, &y) { x } else { y }),
                },
            )
            .ok_or(ShapeError::NoContainingCycle)?;
        // Re-run the winning head to reconstruct the path q ... p.
        let state = dijkstra(self, best.head);
        let mut rev = vec![best.tail];
        let mut cur = best.tail;
        while cur != best.head {
            cur = state.parent[cur as usize];
            rev.push(cur);
        }
        rev.reverse();
        let cells = rev
            .into_iter()
            .map(|i| self.nodes[i as usize])
            .collect();
        Ok(CycleSolution {
            cells,
            cost: best.cost,
        })
    }
}

// ── Refinement rounds ─────────────────────────────────────────────────────────

const CLASS_NONE: u8 = 0;
const CLASS_DOWN: u8 = 1;
const CLASS_UP: u8 = 2;

/// Pairwise edge table between two neighborhoods: weights plus crossing
/// class, both row-major over (cell of first, cell of second). Weights are
/// kept even for up-crossings because the reversed edge (used when closing
/// the cycle back to its start) mirrors the class and only shifts the weight
/// by the endpoint terms.
struct PairTable {
    weight: Vec<f64>,
    class: Vec<u8>,
}

fn pair_table(
    from: &[(usize, usize)],
    to: &[(usize, usize)],
    maps: &ShapeMaps,
    orientations: &[f64],
    weights: &SpaWeights,
    anchor: (usize, usize),
) -> PairTable {
    let mut weight = Vec::with_capacity(from.len() * to.len());
    let mut class = Vec::with_capacity(from.len() * to.len());
    for &a in from {
        for &b in to {
            if a == b {
                weight.push(f64::INFINITY);
                class.push(CLASS_UP);
                continue;
            }
            weight.push(edge_cost(a, b, maps, orientations, weights));
            class.push(match classify_crossing(a, b, anchor) {
                Crossing::None => CLASS_NONE,
                Crossing::Down => CLASS_DOWN,
                Crossing::Up => CLASS_UP,
            });
        }
    }
    PairTable { weight, class }
}

/// Per-node data term: what the half-open segment cost charges at one cell.
#[inline]
fn node_cost(cell: (usize, usize), maps: &ShapeMaps, weights: &SpaWeights) -> f64 {
    let idx = cell.0 * maps.frame.size + cell.1;
    weights.plane * (1.0 - maps.wall_density[idx])
        + weights.mask * f64::from(u8::from(maps.mask[idx]))
}

/// Refine a corner loop: nodes are the cells around each previous corner, the
/// path walks the neighborhoods in cyclic order (skipping allowed, which is
/// what deletes redundant corners), and the containment cut still applies.
fn solve_refinement(
    maps: &ShapeMaps,
    orientations: &[f64],
    weights: &SpaWeights,
    prev_corners_world: &[Vec2],
    radius: usize,
) -> Result<(CycleSolution, usize), ShapeError> {
    let size = maps.frame.size;
    let anchor = containment_anchor(maps)?;
    let mut neighborhoods: Vec<Vec<(usize, usize)>> = Vec::new();
    for corner in prev_corners_world {
        let Some((cr, cc)) = maps.frame.cell_of(*corner) else {
            continue;
        };
        let mut cells = Vec::new();
        let rad = radius as i64;
        for dr in -rad..=rad {
            for dc in -rad..=rad {
                let (rr, cv) = (cr as i64 + dr, cc as i64 + dc);
                if rr >= 0 && cv >= 0 && (rr as usize) < size && (cv as usize) < size {
                    cells.push((rr as usize, cv as usize));
                }
            }
        }
        if !cells.is_empty() {
            neighborhoods.push(cells);
        }
    }
    let m = neighborhoods.len();
    if m < 3 {
        return Err(ShapeError::DegenerateLoop);
    }
    // Forward tables for all i < j, shared by every start enumeration.
    let forward: Vec<Option<PairTable>> = (0..m * m)
        .into_par_iter()
        .map(|ij| {
            let (i, j) = (ij / m, ij % m);
            if i >= j {
                return None;
            }
            Some(pair_table(
                &neighborhoods[i],
                &neighborhoods[j],
                maps,
                orientations,
                weights,
                anchor,
            ))
        })
        .collect();

    #[derive(Clone)]
    struct StartBest {
        cost: f64,
        edges: u32,
        start_nb: usize,
        start_cell: usize,
        /// (neighborhood, cell) chain including the start.
        chain: Vec<(usize, usize)>,
    }
    let better = |a: &StartBest, b: &StartBest| {
        a.cost < b.cost
            || (a.cost == b.cost
                && (a.edges < b.edges
                    || (a.edges == b.edges
                        && (a.start_nb, a.start_cell) < (b.start_nb, b.start_cell))))
    };

    // Shared upper bound on the optimal cycle cost. Prefix costs strictly
    // above it cannot lead to a better cycle (all terms nonnegative), so the
    // DPs prune on it; strictness keeps equal-cost candidates alive for the
    // deterministic tie-break.
    let upper_bound = std::sync::atomic::AtomicU64::new(f64::INFINITY.to_bits());
    let prune_at = |ub: &std::sync::atomic::AtomicU64| {
        f64::from_bits(ub.load(std::sync::atomic::Ordering::Relaxed))
    };
    let lower_ub = |ub: &std::sync::atomic::AtomicU64, value: f64| {
        let _ = ub.fetch_update(
            std::sync::atomic::Ordering::Relaxed,
            std::sync::atomic::Ordering::Relaxed,
            |bits| {
                if value < f64::from_bits(bits) {
                    Some(value.to_bits())
                } else {
                    None
                }
            },
        );
    };

    // The cycle's lowest-index visited neighborhood k anchors the DP: paths
    // start at one cell of N_k, move through strictly increasing neighborhood
    // indices, and close back to the start with exactly one down-crossing
    // overall (up-crossings are forbidden outright).
    let mut overall: Option<StartBest> = None;
    let mut seeded = false;
    for k in 0..m {
        let later: Vec<usize> = (k + 1..m).collect();
        let offsets: Vec<usize> = {
            let mut acc = 0;
            let mut out = Vec::with_capacity(later.len() + 1);
            out.push(0);
            for &j in &later {
                acc += neighborhoods[j].len();
                out.push(acc);
            }
            out
        };
        let states = 2 * offsets[later.len()];
        let nk = neighborhoods[k].len();
        let solve_start = |va: usize| {
                let mut dist = vec![f64::INFINITY; states];
                let mut hops = vec![u32::MAX; states];
                let mut parent = vec![u32::MAX; states];
                let start_cost = node_cost(neighborhoods[k][va], maps, weights);
                // State packing: (offset(j) + u) * 2 + layer.
                for (jj, &j) in later.iter().enumerate() {
                    let ub = prune_at(&upper_bound);
                    let nj = neighborhoods[j].len();
                    let base_j = offsets[jj];
                    // Edges from the start cell.
                    let table = forward[k * m + j].as_ref().expect("k < j");
                    let row = &table.weight[va * nj..(va + 1) * nj];
                    let crow = &table.class[va * nj..(va + 1) * nj];
                    for u in 0..nj {
                        if crow[u] != CLASS_UP && row[u].is_finite() && row[u] <= ub {
                            let layer = usize::from(crow[u] == CLASS_DOWN);
                            let s = (base_j + u) * 2 + layer;
                            if row[u] < dist[s] {
                                dist[s] = row[u];
                                hops[s] = 1;
                                parent[s] = u32::MAX - 1; // direct-from-start sentinel
                            }
                        }
                    }
                    // Edges from every earlier non-start neighborhood.
                    for (ii, &i) in later[..jj].iter().enumerate() {
                        let table = forward[i * m + j].as_ref().expect("i < j");
                        let base_i = offsets[ii];
                        for t in 0..neighborhoods[i].len() {
                            let row = &table.weight[t * nj..(t + 1) * nj];
                            let crow = &table.class[t * nj..(t + 1) * nj];
                            for l0 in 0..2usize {
                                let s0 = (base_i + t) * 2 + l0;
                                let d0 = dist[s0];
                                if !d0.is_finite() || d0 > ub {
                                    continue;
                                }
                                let h0 = hops[s0];
                                for u in 0..nj {
                                    if crow[u] == CLASS_UP {
                                        continue;
                                    }
                                    let l1 = l0 + usize::from(crow[u] == CLASS_DOWN);
                                    if l1 > 1 {
                                        continue;
                                    }
                                    let s1 = (base_j + u) * 2 + l1;
                                    let cand = d0 + row[u];
                                    if cand > ub {
                                        continue;
                                    }
                                    if cand < dist[s1]
                                        || (cand == dist[s1] && h0 + 1 < hops[s1])
                                    {
                                        dist[s1] = cand;
                                        hops[s1] = h0 + 1;
                                        parent[s1] = s0 as u32;
                                    }
                                }
                            }
                        }
                    }
                }
                // Close back to the start cell. The closing edge u -> start
                // is the reverse of the tabulated start -> u edge: crossing
                // class mirrors and the weight shifts by the endpoint terms.
                let mut best: Option<(StartBest, usize)> = None;
                for (jj, &j) in later.iter().enumerate() {
                    let nj = neighborhoods[j].len();
                    let table = forward[k * m + j].as_ref().expect("k < j");
                    let row = &table.weight[va * nj..(va + 1) * nj];
                    let crow = &table.class[va * nj..(va + 1) * nj];
                    for u in 0..nj {
                        // Mirrored class: forward Down means the reversed
                        // closing edge crosses upward, which is forbidden.
                        if crow[u] == CLASS_DOWN || !row[u].is_finite() {
                            continue;
                        }
                        let closing_down = crow[u] == CLASS_UP;
                        let w = row[u] + start_cost
                            - node_cost(neighborhoods[j][u], maps, weights);
                        let need_layer = 1 - usize::from(closing_down);
                        let s = (offsets[jj] + u) * 2 + need_layer;
                        if !dist[s].is_finite() {
                            continue;
                        }
                        let cand = StartBest {
                            cost: dist[s] + w,
                            edges: hops[s] + 1,
                            start_nb: k,
                            start_cell: va,
                            chain: Vec::new(),
                        };
                        if best.as_ref().is_none_or(|(cur, _)| better(&cand, cur)) {
                            lower_ub(&upper_bound, cand.cost);
                            best = Some((cand, s));
                        }
                    }
                }
                best.map(|(mut cycle, end)| {
                    // Recover the (neighborhood, cell) chain from the packed states.
                    let mut chain = Vec::new();
                    let mut s = end;
                    loop {
                        let flat = s / 2;
                        let jj = offsets.partition_point(|&o| o <= flat) - 1;
                        chain.push((later[jj], flat - offsets[jj]));
                        let p = parent[s];
                        if p == u32::MAX - 1 {
                            break;
                        }
                        s = p as usize;
                    }
                    chain.push((k, va));
                    chain.reverse();
                    cycle.chain = chain;
                    cycle
                })
            };
        if !seeded && nk > 0 {
            // One sequential start from the neighborhood center seeds the
            // shared bound so the parallel wave prunes from the outset.
            let _ = solve_start(nk / 2);
            seeded = true;
        }
        let round_best = (0..nk)
            .into_par_iter()
            .map(solve_start)
            .reduce(
                || None,
                |a, b| match (a, b) {
                    (None, x) => x,
                    (x, None) => x,
                    (Some(x), Some(y)) => Some(if better(&x, &y) { x } else { y }),
                },
            );
        if let Some(cand) = round_best {
            if overall.as_ref().is_none_or(|cur| better(&cand, cur)) {
                overall = Some(cand);
            }
        }
    }
    let best = overall.ok_or(ShapeError::NoContainingCycle)?;
    let cells: Vec<(usize, usize)> = best
        .chain
        .iter()
        .map(|&(j, u)| neighborhoods[j][u])
        .collect();
    let node_count: usize = neighborhoods.iter().map(|n| n.len()).sum();
    Ok((
        CycleSolution {
            cells,
            cost: best.cost,
        },
        node_count,
    ))
}


// ── The iterative solver ──────────────────────────────────────────────────────

/// Per-round solve statistics.
#[derive(Debug, Clone)]
pub struct RoundStats {
    pub grid_size: usize,
    pub node_count: usize,
    pub edge_count: usize,
    /// Raw path corner count before any collinear merging.
    pub corner_count: usize,
    /// Raw corner positions in world coordinates, cycle order.
    pub corner_positions: Vec<Vec2>,
    pub cycle_cost: f64,
    pub elapsed: std::time::Duration,
}

/// Result of [`solve_room`].
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub polygon: RoomPolygon,
    pub rounds: Vec<RoundStats>,
    /// Set when the final polygon area is below 4 solver cells.
    pub degenerate: bool,
}

fn merge_collinear(corners: &mut Vec<Vec2>, max_deviation_rad: f64) {
    loop {
        let n = corners.len();
        if n <= 3 {
            return;
        }
        let mut removed = false;
        let mut i = 0;
        while i < corners.len() && corners.len() > 3 {
            let n = corners.len();
            let prev = corners[(i + n - 1) % n];
            let cur = corners[i];
            let next = corners[(i + 1) % n];
            let a = cur - prev;
            let b = next - cur;
            if a.norm() < 1e-12 {
                corners.remove(i);
                removed = true;
                continue;
            }
            let dev = (a.x * b.y - a.y * b.x).atan2(a.dot(&b)).abs();
            if dev < max_deviation_rad {
                corners.remove(i);
                removed = true;
            } else {
                i += 1;
            }
        }
        if !removed {
            return;
        }
    }
}

/// Drop the most collinear corners until at most `cap` remain. Guard rail for
/// very noisy coarse rounds where huge neighborhood counts would make the
/// refinement tables expensive; mid-wall waypoints go first, so genuine
/// turning corners keep their refinement neighborhoods.
fn cap_corners(corners: &mut Vec<Vec2>, cap: usize) {
    while corners.len() > cap {
        let n = corners.len();
        let mut best = (f64::INFINITY, 0usize);
        for i in 0..n {
            let prev = corners[(i + n - 1) % n];
            let cur = corners[i];
            let next = corners[(i + 1) % n];
            let a = cur - prev;
            let b = next - cur;
            let dev = (a.x * b.y - a.y * b.x).atan2(a.dot(&b)).abs();
            if dev < best.0 {
                best = (dev, i);
            }
        }
        corners.remove(best.1);
    }
}

/// Run the full coarse-to-fine solve on one room's evidence.
///
/// Round 1 solves the limited-edge band graph; each later round rebuilds the
/// graph around the previous corners at its grid size and re-solves.
/// Consecutive corners within 1 degree of collinear are merged after the last
/// round, and the polygon is emitted in world coordinates (counterclockwise).
pub fn solve_room(
    evidence: &RoomEvidence,
    weights: &SpaWeights,
    schedule: &IspaSchedule,
) -> Result<SolveReport, ShapeError> {
    weights.validate()?;
    if schedule.rounds.is_empty() {
        return Err(ShapeError::EmptySchedule);
    }
    let mut rounds = Vec::with_capacity(schedule.rounds.len());
    let mut corners_world: Vec<Vec2> = Vec::new();
    let mut last_cell = 0.0f64;
    for (round_idx, spec) in schedule.rounds.iter().enumerate() {
        let started = Instant::now();
        let maps = build_maps(evidence, spec.grid_size)?;
        last_cell = maps.frame.cell;
        let (solution, node_count, edge_count) = if round_idx == 0 {
            let graph = build_graph(&maps, &evidence.orientations, *weights, spec)?;
            let solution = graph.solve_cycle()?;
            (solution, graph.node_count(), graph.edge_count())
        } else {
            let (solution, node_count) = solve_refinement(
                &maps,
                &evidence.orientations,
                weights,
                &corners_world,
                spec.corner_neighborhood_radius,
            )?;
            (solution, node_count, 0)
        };
        corners_world = solution
            .cells
            .iter()
            .map(|&(r, c)| maps.frame.cell_center(r, c))
            .collect();
        rounds.push(RoundStats {
            grid_size: spec.grid_size,
            node_count,
            edge_count,
            corner_count: corners_world.len(),
            corner_positions: corners_world.clone(),
            cycle_cost: solution.cost,
            elapsed: started.elapsed(),
        });
        if corners_world.len() > MAX_REFINE_CORNERS && round_idx + 1 < schedule.rounds.len() {
            log::warn!(
                "round {} produced {} corners; capping at {MAX_REFINE_CORNERS} before refinement",
                round_idx + 1,
                corners_world.len()
            );
            cap_corners(&mut corners_world, MAX_REFINE_CORNERS);
        }
    }
    merge_collinear(&mut corners_world, COLLINEAR_MERGE_DEG.to_radians());
    if corners_world.len() < 3 {
        return Err(ShapeError::DegenerateLoop);
    }
    let polygon = RoomPolygon::new(corners_world, 0)?;
    let degenerate = polygon.area() < 4.0 * last_cell * last_cell;
    if degenerate {
        log::warn!("solved room polygon is degenerate (area below 4 cells)");
    }
    Ok(SolveReport {
        polygon,
        rounds,
        degenerate,
    })
}

// ── Exhaustive oracle ─────────────────────────────────────────────────────────

/// Reference solve on the full unrestricted graph of a small grid.
///
/// Same problem definition as [`solve_room`] (same maps, band, anchor ray and
/// edge costs) but an independent search: dense adjacency matrices and an
/// array-based label-setting loop with no heap, enumerating every candidate
/// closing edge. Only intended for verification; refuses grids above
/// [`ORACLE_MAX_GRID`].
pub fn oracle_shortest_cycle(
    evidence: &RoomEvidence,
    weights: &SpaWeights,
    grid_size: usize,
) -> Result<CycleSolution, ShapeError> {
    if grid_size > ORACLE_MAX_GRID {
        return Err(ShapeError::OracleGridTooLarge {
            got: grid_size,
            max: ORACLE_MAX_GRID,
        });
    }
    weights.validate()?;
    let maps = build_maps(evidence, grid_size)?;
    let nodes = boundary_band(&maps);
    if nodes.is_empty() {
        return Err(ShapeError::EmptyMask);
    }
    let anchor = containment_anchor(&maps)?;
    let n = nodes.len();
    // Dense weight matrix; f64::INFINITY marks absent/forbidden edges.
    let mut w = vec![f64::INFINITY; n * n];
    let mut down = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            match classify_crossing(nodes[i], nodes[j], anchor) {
                Crossing::None => {
                    w[i * n + j] = edge_cost(nodes[i], nodes[j], &maps, &evidence.orientations, weights);
                }
                Crossing::Down => {
                    down.push((i, j, edge_cost(nodes[i], nodes[j], &maps, &evidence.orientations, weights)));
                }
                Crossing::Up => {}
            }
        }
    }
    if down.is_empty() {
        return Err(ShapeError::NoContainingCycle);
    }
    let mut heads: Vec<usize> = down.iter().map(|&(_, q, _)| q).collect();
    heads.sort_unstable();
    heads.dedup();
    let mut best: Option<(f64, usize, usize, Vec<usize>)> = None;
    for &q in &heads {
        // O(V^2) Dijkstra with linear min selection.
        let mut dist = vec![f64::INFINITY; n];
        let mut parent = vec![usize::MAX; n];
        let mut done = vec![false; n];
        dist[q] = 0.0;
        for _ in 0..n {
            let mut u = usize::MAX;
            let mut du = f64::INFINITY;
            for i in 0..n {
                if !done[i] && dist[i] < du {
                    du = dist[i];
                    u = i;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            for v in 0..n {
                let wv = w[u * n + v];
                if wv.is_finite() && du + wv < dist[v] {
                    dist[v] = du + wv;
                    parent[v] = u;
                }
            }
        }
        for &(p, qq, wc) in &down {
            if qq != q || !dist[p].is_finite() {
                continue;
            }
            let total = dist[p] + wc;
            let take = match &best {
                Some((c, bq, bp, _)) => {
                    total < *c || (total == *c && (q, p) < (*bq, *bp))
                }
                None => true,
            };
            if take {
                let mut rev = vec![p];
                let mut cur = p;
                while cur != q {
                    cur = parent[cur];
                    rev.push(cur);
                }
                rev.reverse();
                best = Some((total, q, p, rev));
            }
        }
    }
    let (cost, _, _, path) = best.ok_or(ShapeError::NoContainingCycle)?;
    Ok(CycleSolution {
        cells: path.into_iter().map(|i| nodes[i]).collect(),
        cost,
    })
}
