//! Shared geometric primitives: camera poses, layout boundaries, world-anchored
//! density grids and room polygons.
//!
//! Conventions used throughout the crate:
//! - The world frame is fixed by the first camera: the floor is the plane
//!   `y = -1` and all top-down maps live on the `(x, z)` axes.
//! - Grids are anchored to the world origin with a fixed cell size, so cell
//!   area is constant and densities from different frames are comparable.

use nalgebra::{Matrix3, Vector2, Vector3};

/// 2D point or vector on the floor plane, components `(x, z)`.
pub type Vec2 = Vector2<f64>;
/// 3D point or vector, `y` up.
pub type Vec3 = Vector3<f64>;
/// 3x3 matrix (rotations).
pub type Mat3 = Matrix3<f64>;

/// Camera height above the floor that fixes the layout projection scale.
pub const CAMERA_HEIGHT: f64 = 1.0;

/// Default cell size, in world units, for all world-anchored grids.
pub const DEFAULT_CELL_SIZE: f64 = 0.1;

const ORTHONORMAL_TOL: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("rotation matrix is not orthonormal within 1e-6")]
    NotOrthonormal,
    #[error("polygon needs at least 3 corners, got {0}")]
    TooFewCorners(usize),
    #[error("polygon has (near-)zero area")]
    ZeroArea,
    #[error("polygon edges self-intersect")]
    SelfIntersecting,
    #[error("normalized projection of an empty point set is undefined")]
    EmptyPointSet,
    #[error("grid dimensions and cell size must be positive")]
    BadGridSpec,
}

// ── Pose ──────────────────────────────────────────────────────────────────────

/// World-from-camera rigid transform plus a stream timestamp.
///
/// The translation is expressed in odometry units; it only becomes metric in
/// the shared world frame after multiplication by the recovered scale.
#[derive(Debug, Clone)]
pub struct Pose {
    pub rotation: Mat3,
    pub translation: Vec3,
    pub timestamp: u64,
}

impl Pose {
    /// Build a pose, verifying that `rotation` is a proper rotation
    /// (`R^T R = I`, `det R = +1`) within `1e-6`.
    pub fn new(rotation: Mat3, translation: Vec3, timestamp: u64) -> Result<Self, GeometryError> {
        let gram = rotation.transpose() * rotation;
        let dev = (gram - Mat3::identity()).norm();
        if dev > ORTHONORMAL_TOL || (rotation.determinant() - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(GeometryError::NotOrthonormal);
        }
        Ok(Self {
            rotation,
            translation,
            timestamp,
        })
    }

    /// Identity pose at the world origin.
    pub fn identity(timestamp: u64) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
            timestamp,
        }
    }

    /// Pose with a yaw rotation about the `y` axis.
    pub fn with_yaw(yaw: f64, translation: Vec3, timestamp: u64) -> Self {
        Self {
            rotation: yaw_matrix(yaw),
            translation,
            timestamp,
        }
    }

    /// Camera position on the floor map once the odometry scale is known.
    pub fn camera_xz(&self, scale: f64) -> Vec2 {
        Vec2::new(scale * self.translation.x, scale * self.translation.z)
    }
}

/// Rotation about `+y` by `yaw` radians: maps camera forward `(0,0,1)` to
/// `(sin yaw, 0, cos yaw)`.
pub fn yaw_matrix(yaw: f64) -> Mat3 {
    let (s, c) = yaw.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

// ── Layout boundaries ─────────────────────────────────────────────────────────

/// Coordinate frame a boundary currently lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    Camera,
    World,
}

/// One projected floor-boundary sample.
///
/// In the camera frame every point satisfies `y = -h` by construction; after
/// world registration the full 3D position is kept but consumers read `(x, z)`.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryPoint {
    pub position: Vec3,
    pub source_column: usize,
}

impl BoundaryPoint {
    pub fn xz(&self) -> Vec2 {
        Vec2::new(self.position.x, self.position.z)
    }
}

/// Ordered ring of `W` boundary points with the column indices at which
/// adjacent walls meet.
#[derive(Debug, Clone)]
pub struct LayoutBoundary {
    pub points: Vec<BoundaryPoint>,
    pub wall_splits: Vec<usize>,
    pub frame: Frame,
}

impl LayoutBoundary {
    pub fn width(&self) -> usize {
        self.points.len()
    }

    /// Partition the boundary into per-wall subsets.
    ///
    /// Splits are cyclic: subset `k` spans columns `[split_k, split_{k+1})`
    /// wrapping past `W`, so every point lands in exactly one subset. Without
    /// splits the whole ring is a single subset.
    pub fn wall_subsets(&self) -> Vec<Vec<&BoundaryPoint>> {
        let w = self.points.len();
        if self.wall_splits.is_empty() || w == 0 {
            return vec![self.points.iter().collect()];
        }
        let mut subsets = Vec::with_capacity(self.wall_splits.len());
        for (k, &start) in self.wall_splits.iter().enumerate() {
            let end = self.wall_splits[(k + 1) % self.wall_splits.len()];
            let mut subset = Vec::new();
            let mut col = start;
            loop {
                subset.push(&self.points[col]);
                col = (col + 1) % w;
                if col == end {
                    break;
                }
            }
            subsets.push(subset);
        }
        subsets
    }

    /// Top-down view of all points.
    pub fn xz_points(&self) -> Vec<Vec2> {
        self.points.iter().map(|p| p.xz()).collect()
    }
}

// ── Density grids ─────────────────────────────────────────────────────────────

/// Placement of a grid in the world: origin corner, cell size and dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// World `(x, z)` of the corner of cell `(0, 0)`.
    pub origin: Vec2,
    /// World units per cell.
    pub cell_size: f64,
    pub rows: usize,
    pub cols: usize,
}

impl GridSpec {
    /// Smallest grid covering all `points` with `margin_cells` of slack on
    /// every side. Empty input yields a single-cell grid at the origin.
    pub fn covering(points: &[Vec2], cell_size: f64, margin_cells: usize) -> Self {
        if points.is_empty() {
            return Self {
                origin: Vec2::zeros(),
                cell_size,
                rows: 1,
                cols: 1,
            };
        }
        let mut min = points[0];
        let mut max = points[0];
        for p in points {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        let m = margin_cells as f64 * cell_size;
        let origin = Vec2::new(min.x - m, min.y - m);
        let cols = (((max.x - origin.x) / cell_size).floor() as usize + 1) + margin_cells;
        let rows = (((max.y - origin.y) / cell_size).floor() as usize + 1) + margin_cells;
        Self {
            origin,
            cell_size,
            rows,
            cols,
        }
    }

    /// Cell containing a world point, or `None` outside the grid.
    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let col = ((p.x - self.origin.x) / self.cell_size).floor();
        let row = ((p.y - self.origin.y) / self.cell_size).floor();
        if col < 0.0 || row < 0.0 || col >= self.cols as f64 || row >= self.rows as f64 {
            None
        } else {
            Some((row as usize, col as usize))
        }
    }

    /// World coordinates of a cell center.
    pub fn cell_center(&self, row: usize, col: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + (col as f64 + 0.5) * self.cell_size,
            self.origin.y + (row as f64 + 0.5) * self.cell_size,
        )
    }
}

/// Histogram projection mode for [`grid_project`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionMode {
    /// Per-cell point counts.
    Count,
    /// Counts divided by the total number of input points (cells sum to 1
    /// when every point falls inside the grid).
    Normalized,
}

/// 2D scalar field anchored in world coordinates.
///
/// The same container backs the normalized alignment histogram, per-room
/// occupancy, wall-evidence densities and binary masks; which invariant the
/// values obey (`sum = 1`, `[0, 1]`, `{0, 1}`) depends on the producing stage.
#[derive(Debug, Clone)]
pub struct DensityGrid {
    spec: GridSpec,
    values: Vec<f64>,
}

impl DensityGrid {
    pub fn zeros(spec: GridSpec) -> Result<Self, GeometryError> {
        if spec.rows == 0 || spec.cols == 0 || spec.cell_size <= 0.0 {
            return Err(GeometryError::BadGridSpec);
        }
        Ok(Self {
            values: vec![0.0; spec.rows * spec.cols],
            spec,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn rows(&self) -> usize {
        self.spec.rows
    }

    pub fn cols(&self) -> usize {
        self.spec.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.spec.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.spec.cols + col] = value;
    }

    /// Value at the cell containing `p`; 0 outside the grid extent.
    pub fn value_at(&self, p: Vec2) -> f64 {
        match self.spec.cell_of(p) {
            Some((r, c)) => self.get(r, c),
            None => 0.0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Shannon entropy `sum(-v log v)` over the cells, with `0 log 0 = 0`.
    pub fn entropy(&self) -> f64 {
        self.values
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| -v * v.ln())
            .sum()
    }

    /// Grow the grid so it contains `(min, max)`, preserving cell alignment
    /// to the world origin: the origin only moves by whole cells.
    pub fn extend_to_contain(&mut self, min: Vec2, max: Vec2) {
        let c = self.spec.cell_size;
        let grow_left = ((self.spec.origin.x - min.x) / c).ceil().max(0.0) as usize;
        let grow_top = ((self.spec.origin.y - min.y) / c).ceil().max(0.0) as usize;
        let right = self.spec.origin.x + self.spec.cols as f64 * c;
        let bottom = self.spec.origin.y + self.spec.rows as f64 * c;
        let grow_right = ((max.x - right) / c).ceil().max(0.0) as usize + 1;
        let grow_bottom = ((max.y - bottom) / c).ceil().max(0.0) as usize + 1;
        // +1 on the far side keeps points on the exact edge inside.
        if grow_left == 0 && grow_top == 0 && max.x < right && max.y < bottom {
            return;
        }
        let new_cols = self.spec.cols + grow_left + grow_right;
        let new_rows = self.spec.rows + grow_top + grow_bottom;
        let mut values = vec![0.0; new_rows * new_cols];
        for r in 0..self.spec.rows {
            for col in 0..self.spec.cols {
                values[(r + grow_top) * new_cols + col + grow_left] = self.get(r, col);
            }
        }
        self.spec.origin.x -= grow_left as f64 * c;
        self.spec.origin.y -= grow_top as f64 * c;
        self.spec.cols = new_cols;
        self.spec.rows = new_rows;
        self.values = values;
    }
}

/// Top-down histogram of 2D points over a fixed grid.
///
/// Points outside the grid are dropped. In [`ProjectionMode::Normalized`]
/// every count is divided by the total number of input points, so the cells
/// sum to 1 whenever all points land inside; an empty input is rejected
/// because no density can be formed.
pub fn grid_project(
    points: &[Vec2],
    spec: GridSpec,
    mode: ProjectionMode,
) -> Result<DensityGrid, GeometryError> {
    if points.is_empty() && mode == ProjectionMode::Normalized {
        return Err(GeometryError::EmptyPointSet);
    }
    let mut grid = DensityGrid::zeros(spec)?;
    for p in points {
        if let Some((r, c)) = spec.cell_of(*p) {
            let v = grid.get(r, c);
            grid.set(r, c, v + 1.0);
        }
    }
    if mode == ProjectionMode::Normalized {
        let n = points.len() as f64;
        for v in &mut grid.values {
            *v /= n;
        }
    }
    Ok(grid)
}

// ── Room polygons ─────────────────────────────────────────────────────────────

/// Vectorized room shape: a simple counterclockwise corner loop in world
/// `(x, z)` coordinates.
#[derive(Debug, Clone)]
pub struct RoomPolygon {
    corners: Vec<Vec2>,
    pub room_id: usize,
}

impl RoomPolygon {
    /// Validate and build a polygon. Clockwise input is reversed so the
    /// stored loop always has positive signed area; degenerate or
    /// self-intersecting loops are rejected.
    pub fn new(corners: Vec<Vec2>, room_id: usize) -> Result<Self, GeometryError> {
        if corners.len() < 3 {
            return Err(GeometryError::TooFewCorners(corners.len()));
        }
        let area = signed_area(&corners);
        if area.abs() < 1e-12 {
            return Err(GeometryError::ZeroArea);
        }
        let corners = if area < 0.0 {
            corners.into_iter().rev().collect()
        } else {
            corners
        };
        if !is_simple(&corners) {
            return Err(GeometryError::SelfIntersecting);
        }
        Ok(Self { corners, room_id })
    }

    pub fn corners(&self) -> &[Vec2] {
        &self.corners
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.corners)
    }

    pub fn with_room_id(mut self, room_id: usize) -> Self {
        self.room_id = room_id;
        self
    }

    /// Axis-aligned bounds as `(min, max)`.
    pub fn bounds(&self) -> (Vec2, Vec2) {
        let mut min = self.corners[0];
        let mut max = self.corners[0];
        for c in &self.corners {
            min.x = min.x.min(c.x);
            min.y = min.y.min(c.y);
            max.x = max.x.max(c.x);
            max.y = max.y.max(c.y);
        }
        (min, max)
    }

    /// Convenience constructor for an axis-aligned rectangle.
    pub fn rectangle(room_id: usize, center: Vec2, half_w: f64, half_d: f64) -> Self {
        Self::new(
            vec![
                Vec2::new(center.x - half_w, center.y - half_d),
                Vec2::new(center.x + half_w, center.y - half_d),
                Vec2::new(center.x + half_w, center.y + half_d),
                Vec2::new(center.x - half_w, center.y + half_d),
            ],
            room_id,
        )
        .expect("rectangle is a valid polygon")
    }
}

/// Shoelace signed area; positive for counterclockwise loops in `(x, z)`.
pub fn signed_area(corners: &[Vec2]) -> f64 {
    let n = corners.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = corners[i];
        let b = corners[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    0.5 * acc
}

fn is_simple(corners: &[Vec2]) -> bool {
    let n = corners.len();
    for i in 0..n {
        let a0 = corners[i];
        let a1 = corners[(i + 1) % n];
        for j in (i + 1)..n {
            // Adjacent edges share an endpoint by construction.
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            let b0 = corners[j];
            let b1 = corners[(j + 1) % n];
            if segments_properly_intersect(a0, a1, b0, b1) {
                return false;
            }
        }
    }
    true
}

fn segments_properly_intersect(a0: Vec2, a1: Vec2, b0: Vec2, b1: Vec2) -> bool {
    let d1 = cross(b1 - b0, a0 - b0);
    let d2 = cross(b1 - b0, a1 - b0);
    let d3 = cross(a1 - a0, b0 - a0);
    let d4 = cross(a1 - a0, b1 - a0);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

#[inline]
fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Even-odd containment test; points on the boundary count as inside.
pub fn point_in_polygon(p: Vec2, poly: &RoomPolygon) -> bool {
    point_in_loop(p, poly.corners())
}

/// [`point_in_polygon`] over a raw corner loop.
pub fn point_in_loop(p: Vec2, corners: &[Vec2]) -> bool {
    let n = corners.len();
    const EPS: f64 = 1e-9;
    for i in 0..n {
        if point_on_segment(p, corners[i], corners[(i + 1) % n], EPS) {
            return true;
        }
    }
    let mut inside = false;
    for i in 0..n {
        let a = corners[i];
        let b = corners[(i + 1) % n];
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn point_on_segment(p: Vec2, a: Vec2, b: Vec2, eps: f64) -> bool {
    let ab = b - a;
    let ap = p - a;
    if cross(ab, ap).abs() > eps * ab.norm().max(1.0) {
        return false;
    }
    let t = ap.dot(&ab);
    t >= -eps && t <= ab.norm_squared() + eps
}

/// Intersection-over-union of two polygons, computed by rasterizing both onto
/// a shared grid at `resolution` world units per cell with cell-center
/// sampling. Symmetric in its arguments by construction.
pub fn polygon_iou(a: &RoomPolygon, b: &RoomPolygon, resolution: f64) -> f64 {
    let (amin, amax) = a.bounds();
    let (bmin, bmax) = b.bounds();
    let all = [amin, amax, bmin, bmax];
    let spec = GridSpec::covering(&all, resolution, 1);
    let mut inter = 0usize;
    let mut union = 0usize;
    for row in 0..spec.rows {
        for col in 0..spec.cols {
            let p = spec.cell_center(row, col);
            let ia = point_in_polygon(p, a);
            let ib = point_in_polygon(p, b);
            if ia && ib {
                inter += 1;
            }
            if ia || ib {
                union += 1;
            }
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

// ── Tests ─────────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_square() -> RoomPolygon {
        RoomPolygon::rectangle(0, Vec2::new(0.5, 0.5), 0.5, 0.5)
    }

    #[test]
    fn pose_rejects_non_orthonormal_rotation() {
        let mut bad = Mat3::identity();
        bad[(0, 0)] = 1.1;
        assert!(Pose::new(bad, Vec3::zeros(), 0).is_err());
        assert!(Pose::new(Mat3::identity(), Vec3::zeros(), 0).is_ok());
    }

    #[test]
    fn grid_project_single_cell_normalized() {
        let spec = GridSpec {
            origin: Vec2::zeros(),
            cell_size: 1.0,
            rows: 3,
            cols: 3,
        };
        let points = vec![Vec2::new(1.2, 1.2); 4];
        let grid = grid_project(&points, spec, ProjectionMode::Normalized).unwrap();
        assert_relative_eq!(grid.get(1, 1), 1.0);
        assert_relative_eq!(grid.sum(), 1.0);
    }

    #[test]
    fn grid_project_two_cells_split_evenly() {
        let spec = GridSpec {
            origin: Vec2::zeros(),
            cell_size: 1.0,
            rows: 1,
            cols: 2,
        };
        let points = vec![
            Vec2::new(0.5, 0.5),
            Vec2::new(0.4, 0.5),
            Vec2::new(1.5, 0.5),
            Vec2::new(1.6, 0.5),
        ];
        let grid = grid_project(&points, spec, ProjectionMode::Normalized).unwrap();
        assert_relative_eq!(grid.get(0, 0), 0.5);
        assert_relative_eq!(grid.get(0, 1), 0.5);
    }

    #[test]
    fn grid_project_count_matches_independent_recount() {
        // 100 deterministic pseudo-random points, some outside the grid.
        let mut points = Vec::new();
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            points.push(Vec2::new(next() * 12.0 - 1.0, next() * 12.0 - 1.0));
        }
        let spec = GridSpec {
            origin: Vec2::zeros(),
            cell_size: 1.0,
            rows: 10,
            cols: 10,
        };
        let grid = grid_project(&points, spec, ProjectionMode::Count).unwrap();
        // Independent point-in-cell check.
        let inside = points
            .iter()
            .filter(|p| p.x >= 0.0 && p.x < 10.0 && p.y >= 0.0 && p.y < 10.0)
            .count();
        assert_relative_eq!(grid.sum(), inside as f64);
    }

    #[test]
    fn grid_project_rejects_empty_normalized() {
        let spec = GridSpec {
            origin: Vec2::zeros(),
            cell_size: 1.0,
            rows: 2,
            cols: 2,
        };
        assert!(matches!(
            grid_project(&[], spec, ProjectionMode::Normalized),
            Err(GeometryError::EmptyPointSet)
        ));
        assert!(grid_project(&[], spec, ProjectionMode::Count).is_ok());
    }

    #[test]
    fn point_in_polygon_basics() {
        let sq = unit_square();
        assert!(point_in_polygon(Vec2::new(0.5, 0.5), &sq));
        assert!(!point_in_polygon(Vec2::new(2.0, 2.0), &sq));
        // Boundary counts as inside.
        assert!(point_in_polygon(Vec2::new(0.0, 0.5), &sq));
        assert!(point_in_polygon(Vec2::new(1.0, 1.0), &sq));
    }

    #[test]
    fn point_in_polygon_agrees_with_raycast_oracle() {
        // Oracle: plain even-odd ray cast with no boundary handling. Compare
        // away from edges where the two definitions coincide.
        fn oracle(p: Vec2, corners: &[Vec2]) -> bool {
            let mut inside = false;
            let n = corners.len();
            let mut j = n - 1;
            for i in 0..n {
                let (a, b) = (corners[i], corners[j]);
                if (a.y > p.y) != (b.y > p.y)
                    && p.x < a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y)
                {
                    inside = !inside;
                }
                j = i;
            }
            inside
        }
        let hept: Vec<Vec2> = (0..7)
            .map(|i| {
                let ang = i as f64 / 7.0 * std::f64::consts::TAU;
                Vec2::new(2.0 * ang.cos() + 0.1 * (i as f64), 2.0 * ang.sin())
            })
            .collect();
        let poly = RoomPolygon::new(hept.clone(), 0).unwrap();
        let mut state = 42u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..1000 {
            let p = Vec2::new(next() * 6.0 - 3.0, next() * 6.0 - 3.0);
            let near_edge = (0..7).any(|i| {
                point_on_segment(p, hept[i], hept[(i + 1) % 7], 1e-6)
            });
            if !near_edge {
                assert_eq!(point_in_polygon(p, &poly), oracle(p, poly.corners()));
            }
        }
    }

    #[test]
    fn iou_identical_and_disjoint() {
        let a = unit_square();
        let b = unit_square();
        assert_relative_eq!(polygon_iou(&a, &b, 0.05), 1.0);
        let c = RoomPolygon::rectangle(1, Vec2::new(5.0, 5.0), 0.5, 0.5);
        assert_relative_eq!(polygon_iou(&a, &c, 0.05), 0.0);
    }

    #[test]
    fn iou_half_shifted_square_is_one_third() {
        let a = unit_square();
        let b = RoomPolygon::rectangle(1, Vec2::new(1.0, 0.5), 0.5, 0.5);
        // Overlap 0.5, union 1.5.
        let iou = polygon_iou(&a, &b, 0.01);
        assert!((iou - 1.0 / 3.0).abs() < 0.02, "iou = {iou}");
    }

    #[test]
    fn polygon_rejects_degenerate_input() {
        assert!(matches!(
            RoomPolygon::new(vec![Vec2::zeros(), Vec2::new(1.0, 0.0)], 0),
            Err(GeometryError::TooFewCorners(2))
        ));
        let line = vec![Vec2::zeros(), Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.0)];
        assert!(matches!(
            RoomPolygon::new(line, 0),
            Err(GeometryError::ZeroArea)
        ));
        // Self-crossing quad with nonzero signed area.
        let crossed = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(4.0, 0.0),
            Vec2::new(1.0, 2.0),
            Vec2::new(3.0, 2.0),
        ];
        assert!(matches!(
            RoomPolygon::new(crossed, 0),
            Err(GeometryError::SelfIntersecting)
        ));
    }

    #[test]
    fn polygon_normalizes_orientation() {
        let cw = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
        ];
        let poly = RoomPolygon::new(cw, 0).unwrap();
        assert!(poly.area() > 0.0);
    }

    #[test]
    fn density_grid_extension_preserves_alignment_and_values() {
        let spec = GridSpec {
            origin: Vec2::new(0.0, 0.0),
            cell_size: 0.5,
            rows: 4,
            cols: 4,
        };
        let mut grid = DensityGrid::zeros(spec).unwrap();
        grid.set(1, 2, 0.7);
        grid.extend_to_contain(Vec2::new(-1.3, -0.2), Vec2::new(3.0, 2.4));
        // Origin moved by whole cells only.
        let ox = grid.spec().origin.x / 0.5;
        let oy = grid.spec().origin.y / 0.5;
        assert_relative_eq!(ox, ox.round(), epsilon = 1e-12);
        assert_relative_eq!(oy, oy.round(), epsilon = 1e-12);
        // The old value is still addressed by the same world position.
        let center = Vec2::new(2.0 * 0.5 + 0.25, 1.0 * 0.5 + 0.25);
        assert_relative_eq!(grid.value_at(center), 0.7);
        assert!(grid.spec().cell_of(Vec2::new(-1.3, -0.2)).is_some());
        assert!(grid.spec().cell_of(Vec2::new(3.0, 2.4)).is_some());
    }

    proptest! {
        #[test]
        fn normalized_projection_sums_to_one(
            xs in proptest::collection::vec((-4.0f64..4.0, -4.0f64..4.0), 1..200)
        ) {
            let points: Vec<Vec2> = xs.iter().map(|&(x, z)| Vec2::new(x, z)).collect();
            let spec = GridSpec::covering(&points, 0.25, 1);
            let grid = grid_project(&points, spec, ProjectionMode::Normalized).unwrap();
            prop_assert!((grid.sum() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn iou_self_is_one(
            cx in -3.0f64..3.0,
            cz in -3.0f64..3.0,
            hw in 0.3f64..2.0,
            hd in 0.3f64..2.0,
        ) {
            let poly = RoomPolygon::rectangle(0, Vec2::new(cx, cz), hw, hd);
            prop_assert!((polygon_iou(&poly, &poly, 0.1) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn containment_invariant_under_corner_rotation(
            shift in 0usize..7,
            px in -3.0f64..3.0,
            pz in -3.0f64..3.0,
        ) {
            let hept: Vec<Vec2> = (0..7)
                .map(|i| {
                    let ang = i as f64 / 7.0 * std::f64::consts::TAU;
                    Vec2::new(2.0 * ang.cos(), 2.0 * ang.sin())
                })
                .collect();
            let mut rotated = hept.clone();
            rotated.rotate_left(shift);
            let a = RoomPolygon::new(hept, 0).unwrap();
            let b = RoomPolygon::new(rotated, 0).unwrap();
            let p = Vec2::new(px, pz);
            prop_assert_eq!(point_in_polygon(p, &a), point_in_polygon(p, &b));
        }
    }
}
