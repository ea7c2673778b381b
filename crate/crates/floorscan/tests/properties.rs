//! Cross-module property tests: invariants that span more than one stage.

use proptest::prelude::*;

use floorscan::config::PipelineConfig;
use floorscan::geometry::{polygon_iou, Pose, RoomPolygon, Vec2, Vec3, CAMERA_HEIGHT};
use floorscan::layout::project_boundary;
use floorscan::metrics::align_to_ground_truth;
use floorscan::pipeline::run_pipeline;
use floorscan::rooms::{update_density, RoomState, RoomStatus};
use floorscan::scale::{mean_window_entropy, ScaleSearchConfig};
use floorscan::stream::record_to_inputs;
use floorscan::synth::{chain_scene, generate, walk_scene, NoiseSpec};

fn fresh_room() -> RoomState {
    RoomState {
        room_id: 0,
        density: floorscan::geometry::DensityGrid::zeros(floorscan::geometry::GridSpec {
            origin: Vec2::zeros(),
            cell_size: 0.25,
            rows: 1,
            cols: 1,
        })
        .unwrap(),
        frame_count: 0,
        boundary_archive: Vec::new(),
        status: RoomStatus::Active,
        last_assigned_frame: 0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Entropy of the joint histogram moves by at most rasterization jitter
    /// (2%) when the whole world is rigidly transformed.
    #[test]
    fn window_entropy_is_rigid_invariant(
        yaw in -3.0f64..3.0,
        tx in -5.0f64..5.0,
        tz in -5.0f64..5.0,
        scale in 0.7f64..2.0,
    ) {
        let spec = walk_scene(scale, NoiseSpec::default(), 7);
        let (records, _) = generate(&spec).unwrap();
        let mut boundaries = Vec::new();
        let mut poses = Vec::new();
        for record in &records[..30] {
            let (pose, raw) = record_to_inputs(record).unwrap();
            boundaries.push(project_boundary(&raw, CAMERA_HEIGHT).unwrap());
            poses.push(pose);
        }
        // Two jitter sources bound the tolerance: single windows see up to
        // one cell reassignment per point, and a rotated thin wall occupies
        // up to 1.4x the cells of an axis-aligned one. The sliding-window
        // mean cancels the former; fine cells make the latter small relative
        // to the total entropy.
        let config = ScaleSearchConfig {
            grid_cell_size: 0.02,
            ..Default::default()
        };
        let base = mean_window_entropy(&boundaries, &poses, scale, &config).unwrap();
        // Apply the world transform (R0, u): rotations compose, and the
        // odometry translation becomes R0 t + u / s.
        let rot = floorscan::geometry::yaw_matrix(yaw);
        let shift = Vec3::new(tx, 0.0, tz);
        let moved: Vec<Pose> = poses
            .iter()
            .map(|p| Pose {
                rotation: rot * p.rotation,
                translation: rot * p.translation + shift / scale,
                timestamp: p.timestamp,
            })
            .collect();
        let transformed = mean_window_entropy(&boundaries, &moved, scale, &config).unwrap();
        prop_assert!(
            (transformed - base).abs() <= 0.02 * base.abs().max(1e-9),
            "entropy {base} vs {transformed} after rigid move"
        );
    }

    /// Density stays a probability after any sequence of loop updates.
    #[test]
    fn room_density_stays_in_unit_interval(
        loops in proptest::collection::vec(
            (proptest::collection::vec((-4.0f64..4.0, -4.0f64..4.0), 3..12), 0u8..2),
            1..12,
        )
    ) {
        let mut room = fresh_room();
        for (points, flip) in loops {
            let mut loop_xz: Vec<Vec2> =
                points.iter().map(|&(x, z)| Vec2::new(x, z)).collect();
            if flip == 1 {
                loop_xz.reverse();
            }
            update_density(&mut room, &loop_xz).unwrap();
            for v in room.density.values() {
                prop_assert!(*v >= 0.0 && *v <= 1.0, "H value {v} out of range");
            }
        }
    }

    /// Scoring after alignment is invariant to a similarity transform
    /// pre-applied to the predictions: the alignment undoes it exactly.
    #[test]
    fn alignment_undoes_preapplied_similarity(
        angle in -3.0f64..3.0,
        scale in 0.3f64..3.0,
        tx in -10.0f64..10.0,
        tz in -10.0f64..10.0,
    ) {
        let gt: Vec<(u64, Vec2)> = (0..12)
            .map(|i| {
                let t = i as f64;
                (i, Vec2::new((t * 0.8).sin() * 4.0 + 0.3 * t, (t * 0.5).cos() * 3.0))
            })
            .collect();
        let rot = nalgebra::Matrix2::new(angle.cos(), -angle.sin(), angle.sin(), angle.cos());
        let pred: Vec<(u64, Vec2)> = gt
            .iter()
            .map(|&(t, p)| (t, scale * (rot * p) + Vec2::new(tx, tz)))
            .collect();
        let sim = align_to_ground_truth(&pred, &gt).unwrap();
        for &(t, p) in &pred {
            let truth = gt.iter().find(|&&(tt, _)| tt == t).unwrap().1;
            prop_assert!((sim.apply(p) - truth).norm() < 1e-6);
        }
    }

    /// Rasterized IoU is symmetric in its arguments.
    #[test]
    fn polygon_iou_is_symmetric(
        ax in -3.0f64..3.0,
        az in -3.0f64..3.0,
        aw in 0.4f64..2.5,
        ad in 0.4f64..2.5,
        bx in -3.0f64..3.0,
        bz in -3.0f64..3.0,
        bw in 0.4f64..2.5,
        bd in 0.4f64..2.5,
    ) {
        let a = RoomPolygon::rectangle(0, Vec2::new(ax, az), aw, ad);
        let b = RoomPolygon::rectangle(1, Vec2::new(bx, bz), bw, bd);
        prop_assert_eq!(polygon_iou(&a, &b, 0.1), polygon_iou(&b, &a, 0.1));
    }
}

/// Changing the warm-up fraction changes the recovered scale and downstream
/// geometry but never which keyframes get processed.
#[test]
fn warmup_fraction_never_changes_the_processed_record_set() {
    let spec = chain_scene(2, 1.4, NoiseSpec::default(), 33, false);
    let (records, _) = generate(&spec).unwrap();
    let run_with = |fraction: f64| {
        let mut config = PipelineConfig::default();
        config.scale.warmup_fraction = fraction;
        run_pipeline(&records, &config).unwrap()
    };
    let short = run_with(0.2);
    let full = run_with(1.0);
    assert_eq!(short.processed_indices, full.processed_indices);
    assert_eq!(short.history.len(), full.history.len());
}
