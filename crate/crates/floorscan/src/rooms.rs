//! Sequential room identification.
//!
//! Every room keeps a 2D density function `H` over the world grid: the
//! running mean, across the keyframes assigned to the room, of the indicator
//! of the area enclosed by the radius-clipped layout boundary. A keyframe
//! stays in the current room while `H` at the camera cell is at least the
//! membership threshold; otherwise previously seen rooms are checked for
//! re-entry before a new room is created.

use crate::geometry::{
    DensityGrid, GridSpec, LayoutBoundary, Pose, Vec2, DEFAULT_CELL_SIZE,
};
use crate::layout::register_boundary;

#[derive(Debug, thiserror::Error)]
pub enum RoomError {
    #[error("clipped boundary must be a closed loop (>= 3 points), got {0}")]
    OpenLoop(usize),
    #[error("room {0} is not active")]
    NotActive(usize),
    #[error(transparent)]
    Layout(#[from] crate::layout::LayoutError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

/// Clipping and membership parameters.
#[derive(Debug, Clone)]
pub struct ClipConfig {
    /// Clip radius `r` in world units; boundary points farther than this from
    /// the camera are pulled back onto the sphere of radius `r`.
    pub radius: f64,
    /// `H` value above which a cell counts as belonging to the room.
    pub membership_threshold: f64,
    /// Keyframes a dormant room may go unvisited before it is finalized.
    pub dormancy_patience: usize,
    /// Cell size of the per-room `H` grids.
    pub cell_size: f64,
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self {
            radius: 4.0,
            membership_threshold: 0.5,
            dormancy_patience: 10,
            cell_size: DEFAULT_CELL_SIZE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoomStatus {
    Active,
    Dormant,
    Finalized,
}

/// Per-room accumulator: density function, archived boundaries, bookkeeping.
#[derive(Debug, Clone)]
pub struct RoomState {
    pub room_id: usize,
    /// Occupancy density in `[0, 1]`; running mean of the clipped-boundary
    /// interior indicator.
    pub density: DensityGrid,
    pub frame_count: usize,
    /// World-frame boundaries of every keyframe assigned to this room.
    pub boundary_archive: Vec<LayoutBoundary>,
    pub status: RoomStatus,
    /// Stream position of the most recent keyframe assigned to this room.
    pub last_assigned_frame: usize,
}

impl RoomState {
    fn new(room_id: usize, seed_point: Vec2, cell_size: f64, frame_index: usize) -> Self {
        let spec = GridSpec {
            origin: Vec2::new(
                (seed_point.x / cell_size).floor() * cell_size,
                (seed_point.y / cell_size).floor() * cell_size,
            ),
            cell_size,
            rows: 1,
            cols: 1,
        };
        Self {
            room_id,
            density: DensityGrid::zeros(spec).expect("valid 1x1 spec"),
            frame_count: 0,
            boundary_archive: Vec::new(),
            status: RoomStatus::Active,
            last_assigned_frame: frame_index,
        }
    }

    /// `H` at the cell containing `p`; cells outside the grid score 0.
    pub fn density_at(&self, p: Vec2) -> f64 {
        self.density.value_at(p)
    }
}

/// Camera-centered radial clip: `x` stays put within radius `r`, otherwise it
/// is shortened to `r x / |x|`. Applied to the full 3D point before world
/// registration; the returned loop is the top-down `(x, z)` trace.
pub fn clip_boundary(
    boundary: &LayoutBoundary,
    pose: &Pose,
    scale: f64,
    radius: f64,
) -> Result<Vec<Vec2>, RoomError> {
    let clipped = LayoutBoundary {
        points: boundary
            .points
            .iter()
            .map(|p| {
                let norm = p.position.norm();
                let position = if norm <= radius {
                    p.position
                } else {
                    p.position * (radius / norm)
                };
                crate::geometry::BoundaryPoint {
                    position,
                    source_column: p.source_column,
                }
            })
            .collect(),
        wall_splits: boundary.wall_splits.clone(),
        frame: boundary.frame,
    };
    let world = register_boundary(&clipped, pose, scale)?;
    Ok(world.points.iter().map(|p| p.xz()).collect())
}

/// Fold the area enclosed by the clipped loop into the room's density.
///
/// `H` becomes the running mean of the inside-indicator over all keyframes
/// assigned so far; the grid grows lazily (cell-aligned to the world origin)
/// when a loop exceeds the current extent, and newly revealed cells correctly
/// behave as if they had been outside every earlier loop.
pub fn update_density(room: &mut RoomState, loop_xz: &[Vec2]) -> Result<(), RoomError> {
    if room.status != RoomStatus::Active {
        return Err(RoomError::NotActive(room.room_id));
    }
    if loop_xz.len() < 3 {
        return Err(RoomError::OpenLoop(loop_xz.len()));
    }
    let mut min = loop_xz[0];
    let mut max = loop_xz[0];
    for p in loop_xz {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
    }
    room.density.extend_to_contain(min, max);
    let inside = rasterize_loop_interior(room.density.spec(), loop_xz);
    let n = room.frame_count as f64;
    let spec = *room.density.spec();
    for row in 0..spec.rows {
        for col in 0..spec.cols {
            let old = room.density.get(row, col);
            let ind = if inside[row * spec.cols + col] { 1.0 } else { 0.0 };
            room.density.set(row, col, (old * n + ind) / (n + 1.0));
        }
    }
    room.frame_count += 1;
    Ok(())
}

/// Even-odd scanline fill of a closed loop, sampling cell centers.
fn rasterize_loop_interior(spec: &GridSpec, loop_xz: &[Vec2]) -> Vec<bool> {
    let mut inside = vec![false; spec.rows * spec.cols];
    let n = loop_xz.len();
    let mut crossings: Vec<f64> = Vec::new();
    for row in 0..spec.rows {
        let y = spec.origin.y + (row as f64 + 0.5) * spec.cell_size;
        crossings.clear();
        for i in 0..n {
            let a = loop_xz[i];
            let b = loop_xz[(i + 1) % n];
            if (a.y > y) != (b.y > y) {
                crossings.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        crossings.sort_by(|p, q| p.total_cmp(q));
        for pair in crossings.chunks_exact(2) {
            let (x0, x1) = (pair[0], pair[1]);
            // Columns whose center lies in (x0, x1).
            let c0 = ((x0 - spec.origin.x) / spec.cell_size - 0.5).ceil().max(0.0) as usize;
            let c1f = (x1 - spec.origin.x) / spec.cell_size - 0.5;
            if c1f < 0.0 {
                continue;
            }
            let c1 = (c1f.floor() as usize).min(spec.cols.saturating_sub(1));
            for col in c0..=c1.min(spec.cols.saturating_sub(1)) {
                let center_x = spec.origin.x + (col as f64 + 0.5) * spec.cell_size;
                if center_x > x0 && center_x < x1 {
                    inside[row * spec.cols + col] = true;
                }
            }
        }
    }
    inside
}

/// Where an incoming keyframe belongs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// Camera is still inside the active room.
    Stay,
    /// Camera re-entered a previously visited room.
    Reenter(usize),
    /// No room claims the camera position.
    CreateNew,
}

/// Classify the camera position against the room registry.
///
/// The active room is checked first; failing its threshold, every other
/// room's density is evaluated at the camera cell and the best one above the
/// threshold wins (ties break toward the lowest room id).
pub fn identify(
    pose: &Pose,
    scale: f64,
    rooms: &[RoomState],
    config: &ClipConfig,
) -> Decision {
    let camera = pose.camera_xz(scale);
    let threshold = config.membership_threshold;
    if let Some(active) = rooms.iter().find(|r| r.status == RoomStatus::Active) {
        if active.density_at(camera) >= threshold {
            return Decision::Stay;
        }
    }
    let mut best: Option<(f64, usize)> = None;
    for room in rooms.iter().filter(|r| r.status != RoomStatus::Active) {
        let h = room.density_at(camera);
        if h >= threshold {
            let better = match best {
                Some((bh, bid)) => h > bh || (h == bh && room.room_id < bid),
                None => true,
            };
            if better {
                best = Some((h, room.room_id));
            }
        }
    }
    match best {
        Some((_, id)) => Decision::Reenter(id),
        None => Decision::CreateNew,
    }
}

/// Finalize dormant rooms whose patience has run out.
///
/// A room flips dormant -> finalized once `patience` consecutive keyframes
/// have gone elsewhere; returns the ids finalized by this call.
pub fn finalize_rooms(
    rooms: &mut [RoomState],
    current_frame: usize,
    patience: usize,
) -> Vec<usize> {
    let mut finalized = Vec::new();
    for room in rooms.iter_mut() {
        if room.status == RoomStatus::Dormant
            && current_frame.saturating_sub(room.last_assigned_frame) >= patience
        {
            room.status = RoomStatus::Finalized;
            finalized.push(room.room_id);
        }
    }
    finalized
}

/// Outcome of feeding one keyframe to the tracker.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub room_id: usize,
    pub decision: Decision,
    /// Rooms finalized while processing this keyframe.
    pub finalized: Vec<usize>,
}

/// The sequential room registry: a single-writer state machine over the
/// keyframe stream. Exactly one room is active at any time once streaming
/// has begun.
#[derive(Debug)]
pub struct RoomTracker {
    rooms: Vec<RoomState>,
    config: ClipConfig,
    history: Vec<usize>,
}

impl RoomTracker {
    pub fn new(config: ClipConfig) -> Self {
        Self {
            rooms: Vec::new(),
            config,
            history: Vec::new(),
        }
    }

    pub fn rooms(&self) -> &[RoomState] {
        &self.rooms
    }

    pub fn config(&self) -> &ClipConfig {
        &self.config
    }

    /// Per-keyframe room assignment so far.
    pub fn history(&self) -> &[usize] {
        &self.history
    }

    fn activate(&mut self, room_id: usize) {
        for room in &mut self.rooms {
            if room.room_id == room_id {
                room.status = RoomStatus::Active;
            } else if room.status == RoomStatus::Active {
                room.status = RoomStatus::Dormant;
            }
        }
    }

    /// Assign one keyframe: identify the room, update its density with the
    /// clipped boundary, and archive the registered boundary.
    ///
    /// Re-entry also reopens rooms that were already finalized; their shape
    /// is simply solved again later with the extra evidence.
    pub fn observe(
        &mut self,
        pose: &Pose,
        boundary: &LayoutBoundary,
        scale: f64,
    ) -> Result<StepResult, RoomError> {
        let frame_index = self.history.len();
        let camera = pose.camera_xz(scale);
        let decision = if self.rooms.is_empty() {
            Decision::CreateNew
        } else {
            identify(pose, scale, &self.rooms, &self.config)
        };
        let room_id = match decision {
            Decision::Stay => {
                self.rooms
                    .iter()
                    .find(|r| r.status == RoomStatus::Active)
                    .expect("stay implies an active room")
                    .room_id
            }
            Decision::Reenter(id) => {
                self.activate(id);
                id
            }
            Decision::CreateNew => {
                let id = self.rooms.len();
                let room = RoomState::new(id, camera, self.config.cell_size, frame_index);
                self.activate(usize::MAX); // demote current active
                self.rooms.push(room);
                id
            }
        };
        let clipped = clip_boundary(boundary, pose, scale, self.config.radius)?;
        let world = register_boundary(boundary, pose, scale)?;
        let room = self
            .rooms
            .iter_mut()
            .find(|r| r.room_id == room_id)
            .expect("room just selected");
        room.status = RoomStatus::Active;
        room.last_assigned_frame = frame_index;
        update_density(room, &clipped)?;
        room.boundary_archive.push(world);
        self.history.push(room_id);
        let finalized = finalize_rooms(
            &mut self.rooms,
            frame_index,
            self.config.dormancy_patience,
        );
        Ok(StepResult {
            room_id,
            decision,
            finalized,
        })
    }

    /// End-of-stream flush: every room not yet finalized becomes finalized.
    pub fn finish(&mut self) -> Vec<usize> {
        let mut flushed = Vec::new();
        for room in &mut self.rooms {
            if room.status != RoomStatus::Finalized {
                room.status = RoomStatus::Finalized;
                flushed.push(room.room_id);
            }
        }
        flushed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundaryPoint, Frame, Vec3};
    use approx::assert_relative_eq;

    fn ring_boundary(center_range: f64, count: usize) -> LayoutBoundary {
        LayoutBoundary {
            points: (0..count)
                .map(|j| {
                    let ang = j as f64 / count as f64 * std::f64::consts::TAU;
                    BoundaryPoint {
                        position: Vec3::new(
                            center_range * ang.sin(),
                            -1.0,
                            center_range * ang.cos(),
                        ),
                        source_column: j,
                    }
                })
                .collect(),
            wall_splits: vec![],
            frame: Frame::Camera,
        }
    }

    #[test]
    fn clip_keeps_near_points_and_shortens_far_ones() {
        let near = LayoutBoundary {
            points: vec![
                BoundaryPoint {
                    position: Vec3::new(0.0, -1.0, 0.5),
                    source_column: 0,
                },
                BoundaryPoint {
                    position: Vec3::new(0.0, -1.0, 4.0),
                    source_column: 1,
                },
                BoundaryPoint {
                    position: Vec3::new(0.3, -1.0, -0.5),
                    source_column: 2,
                },
            ],
            wall_splits: vec![],
            frame: Frame::Camera,
        };
        let loop_xz = clip_boundary(&near, &Pose::identity(0), 1.0, 2.0).unwrap();
        // Norm of (0,-1,0.5) is ~1.118 <= 2: untouched.
        assert_relative_eq!(loop_xz[0].x, 0.0);
        assert_relative_eq!(loop_xz[0].y, 0.5);
        // Norm of (0,-1,4) is sqrt(17) > 2: rescaled to norm exactly 2.
        let scaled = Vec3::new(0.0, -1.0, 4.0) * (2.0 / 17.0f64.sqrt());
        assert_relative_eq!(loop_xz[1].x, scaled.x);
        assert_relative_eq!(loop_xz[1].y, scaled.z);
    }

    #[test]
    fn clip_of_large_square_room_is_nearly_circular() {
        // Camera at the center of a half-width-5 square: every wall point is
        // beyond r = 2, so the clipped loop collapses to ~radius-2 circle
        // (exactly 2 r rho / sqrt(rho^2 + 1) in the top-down view).
        let square: Vec<(f64, f64)> = (0..64)
            .map(|j| {
                let ang = j as f64 / 64.0 * std::f64::consts::TAU;
                let (s, c) = (ang.sin(), ang.cos());
                let scale = 5.0 / s.abs().max(c.abs());
                (scale * s, scale * c)
            })
            .collect();
        let boundary = LayoutBoundary {
            points: square
                .iter()
                .enumerate()
                .map(|(j, &(x, z))| BoundaryPoint {
                    position: Vec3::new(x, -1.0, z),
                    source_column: j,
                })
                .collect(),
            wall_splits: vec![],
            frame: Frame::Camera,
        };
        let loop_xz = clip_boundary(&boundary, &Pose::identity(0), 1.0, 2.0).unwrap();
        for p in &loop_xz {
            let radius = p.norm();
            assert!(radius <= 2.0 + 1e-12);
            assert!(radius > 2.0 * 0.97, "radius = {radius}");
        }
    }

    #[test]
    fn first_update_is_an_indicator() {
        let mut room = RoomState::new(0, Vec2::zeros(), 0.25, 0);
        let square = vec![
            Vec2::new(-1.0, -1.0),
            Vec2::new(1.0, -1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(-1.0, 1.0),
        ];
        update_density(&mut room, &square).unwrap();
        for v in room.density.values() {
            assert!(*v == 0.0 || *v == 1.0);
        }
        assert_relative_eq!(room.density_at(Vec2::zeros()), 1.0);
        assert_relative_eq!(room.density_at(Vec2::new(3.0, 0.0)), 0.0);
    }

    #[test]
    fn identical_updates_leave_density_unchanged() {
        let mut room = RoomState::new(0, Vec2::zeros(), 0.25, 0);
        let square = vec![
            Vec2::new(-1.0, -1.0),
            Vec2::new(1.0, -1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(-1.0, 1.0),
        ];
        update_density(&mut room, &square).unwrap();
        let before = room.density.values().to_vec();
        update_density(&mut room, &square).unwrap();
        // Same extent, so direct comparison is valid.
        assert_eq!(room.density.values(), &before[..]);
    }

    #[test]
    fn disjoint_updates_average_to_half() {
        let mut room = RoomState::new(0, Vec2::zeros(), 0.25, 0);
        let left = vec![
            Vec2::new(-2.0, -1.0),
            Vec2::new(-0.5, -1.0),
            Vec2::new(-0.5, 1.0),
            Vec2::new(-2.0, 1.0),
        ];
        let right = vec![
            Vec2::new(0.5, -1.0),
            Vec2::new(2.0, -1.0),
            Vec2::new(2.0, 1.0),
            Vec2::new(0.5, 1.0),
        ];
        update_density(&mut room, &left).unwrap();
        update_density(&mut room, &right).unwrap();
        for v in room.density.values() {
            assert!(*v == 0.0 || (*v - 0.5).abs() < 1e-12, "v = {v}");
        }
        assert_relative_eq!(room.density_at(Vec2::new(-1.0, 0.0)), 0.5);
        assert_relative_eq!(room.density_at(Vec2::new(1.0, 0.0)), 0.5);
    }

    #[test]
    fn open_loop_is_rejected() {
        let mut room = RoomState::new(0, Vec2::zeros(), 0.25, 0);
        assert!(matches!(
            update_density(&mut room, &[Vec2::zeros(), Vec2::new(1.0, 0.0)]),
            Err(RoomError::OpenLoop(2))
        ));
    }

    fn room_with_uniform_density(id: usize, value: f64) -> RoomState {
        let mut room = RoomState::new(id, Vec2::zeros(), 0.5, 0);
        let square = vec![
            Vec2::new(-1.0, -1.0),
            Vec2::new(1.0, -1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(-1.0, 1.0),
        ];
        update_density(&mut room, &square).unwrap();
        let spec = *room.density.spec();
        for r in 0..spec.rows {
            for c in 0..spec.cols {
                if room.density.get(r, c) > 0.0 {
                    room.density.set(r, c, value);
                }
            }
        }
        room.status = RoomStatus::Dormant;
        room
    }

    #[test]
    fn identify_stays_above_threshold() {
        let mut active = room_with_uniform_density(0, 0.9);
        active.status = RoomStatus::Active;
        let rooms = vec![active];
        let decision = identify(&Pose::identity(0), 1.0, &rooms, &ClipConfig::default());
        assert_eq!(decision, Decision::Stay);
    }

    #[test]
    fn identify_creates_when_nothing_claims_camera() {
        let mut active = room_with_uniform_density(0, 0.2);
        active.status = RoomStatus::Active;
        let dormant = room_with_uniform_density(1, 0.0);
        let rooms = vec![active, dormant];
        let decision = identify(&Pose::identity(0), 1.0, &rooms, &ClipConfig::default());
        assert_eq!(decision, Decision::CreateNew);
    }

    #[test]
    fn identify_reenters_highest_density_room() {
        let mut active = room_with_uniform_density(0, 0.2);
        active.status = RoomStatus::Active;
        let r3 = room_with_uniform_density(3, 0.7);
        let r5 = room_with_uniform_density(5, 0.6);
        let rooms = vec![active, r3, r5];
        let decision = identify(&Pose::identity(0), 1.0, &rooms, &ClipConfig::default());
        assert_eq!(decision, Decision::Reenter(3));
    }

    #[test]
    fn identify_breaks_ties_toward_lowest_id() {
        let mut active = room_with_uniform_density(0, 0.2);
        active.status = RoomStatus::Active;
        let r7 = room_with_uniform_density(7, 0.8);
        let r2 = room_with_uniform_density(2, 0.8);
        let rooms = vec![active, r7, r2];
        let decision = identify(&Pose::identity(0), 1.0, &rooms, &ClipConfig::default());
        assert_eq!(decision, Decision::Reenter(2));
    }

    #[test]
    fn patience_finalizes_dormant_rooms() {
        let mut rooms = vec![room_with_uniform_density(0, 0.9)];
        rooms[0].last_assigned_frame = 3;
        assert!(finalize_rooms(&mut rooms, 3 + 9, 10).is_empty());
        let done = finalize_rooms(&mut rooms, 3 + 10, 10);
        assert_eq!(done, vec![0]);
        assert_eq!(rooms[0].status, RoomStatus::Finalized);
    }

    #[test]
    fn tracker_keeps_one_room_in_a_convex_scene() {
        // Camera circles inside a room small enough that the clip radius
        // always covers it; identify must say Stay after the first frame.
        let boundary = ring_boundary(2.0, 64);
        let mut tracker = RoomTracker::new(ClipConfig::default());
        for i in 0..30 {
            let ang = i as f64 * 0.2;
            let pose = Pose::with_yaw(
                0.0,
                Vec3::new(0.4 * ang.cos(), 0.0, 0.4 * ang.sin()),
                i as u64,
            );
            let step = tracker.observe(&pose, &boundary, 1.0).unwrap();
            if i == 0 {
                assert_eq!(step.decision, Decision::CreateNew);
            } else {
                assert_eq!(step.decision, Decision::Stay, "frame {i}");
            }
        }
        assert_eq!(tracker.rooms().len(), 1);
        for v in tracker.rooms()[0].density.values() {
            assert!(*v >= 0.0 && *v <= 1.0);
        }
    }

    #[test]
    fn tracker_reentry_does_not_duplicate_rooms() {
        // Two dwell spots far apart: the camera moves A -> B -> A. The far
        // hop empties the density at the new spot, forcing creation, and the
        // return must re-enter room 0 even after it was finalized.
        let boundary = ring_boundary(2.0, 64);
        let config = ClipConfig {
            dormancy_patience: 4,
            ..Default::default()
        };
        let mut tracker = RoomTracker::new(config);
        let spots = [Vec3::zeros(), Vec3::new(20.0, 0.0, 0.0), Vec3::zeros()];
        let mut t = 0u64;
        for (leg, spot) in spots.iter().enumerate() {
            for _ in 0..8 {
                let pose = Pose::with_yaw(0.0, *spot, t);
                let step = tracker.observe(&pose, &boundary, 1.0).unwrap();
                t += 1;
                if leg == 2 && step.decision != Decision::Stay {
                    assert_eq!(step.decision, Decision::Reenter(0));
                }
            }
        }
        assert_eq!(tracker.rooms().len(), 2);
        tracker.finish();
        assert!(tracker
            .rooms()
            .iter()
            .all(|r| r.status == RoomStatus::Finalized));
    }

    #[test]
    fn assignment_depends_only_on_the_prefix() {
        let boundary = ring_boundary(2.0, 64);
        let poses: Vec<Pose> = (0..20)
            .map(|i| {
                let x = if i < 10 { 0.0 } else { 20.0 };
                Pose::with_yaw(0.0, Vec3::new(x, 0.0, 0.1 * i as f64), i as u64)
            })
            .collect();
        let run = |n: usize| {
            let mut tracker = RoomTracker::new(ClipConfig::default());
            for pose in &poses[..n] {
                tracker.observe(pose, &boundary, 1.0).unwrap();
            }
            tracker.history().to_vec()
        };
        let full = run(20);
        for n in [5, 10, 15] {
            assert_eq!(&full[..n], &run(n)[..]);
        }
    }
}
