//! Sequential floor plan estimation from keyframe streams.
//!
//! The input is a stream of keyframes, each carrying a scale-ambiguous camera
//! pose and a single-frame 360 layout boundary (one floor-boundary elevation
//! per image column). The pipeline recovers the odometry scale by entropy
//! minimization, tracks which room each keyframe belongs to with per-room
//! density functions, validates walls by RANSAC line fitting with Bayesian
//! orientation filtering, and converts each finalized room into a corner
//! polygon with an iterative coarse-to-fine shortest-path solver.
//!
//! See the crate examples for a runnable tour of each stage, and the
//! `floorscan` binary for the batch pipeline (`run`, `synth`, `eval`,
//! `debug-maps`).

pub mod config;
pub mod geometry;
pub mod layout;
pub mod metrics;
pub mod pipeline;
pub mod planes;
pub mod rooms;
pub mod scale;
pub mod shape;
pub mod stream;
pub mod synth;

pub use geometry::{
    grid_project, point_in_polygon, polygon_iou, DensityGrid, Frame, GridSpec, LayoutBoundary,
    Pose, ProjectionMode, RoomPolygon, Vec2, Vec3,
};
pub use layout::{project_boundary, register_boundary, RawLayout};
pub use planes::{
    fit_wall, likely_orientations, update_orientation, OrientationConfig, OrientationPosterior,
    PlaneWallFeature, RansacConfig,
};
pub use rooms::{clip_boundary, identify, ClipConfig, Decision, RoomState, RoomStatus, RoomTracker};
pub use config::PipelineConfig;
pub use metrics::{align_to_ground_truth, corner_metric, room_metric, EvalReport, SceneBounds};
pub use pipeline::{evaluate, run_pipeline, FloorPlanOutput, PipelineRun};
pub use scale::{recover_scale, window_entropy, ScaleEstimate, ScaleSearchConfig};
pub use shape::{
    oracle_shortest_cycle, solve_room, IspaSchedule, RoomEvidence, SolveReport, SpaWeights,
};
pub use stream::{read_stream, write_stream, KeyframeRecord};
pub use synth::{generate, GroundTruth, NoiseSpec, SceneSpec, Waypoint};
