//! The sequential batch pipeline: scale warm-up, per-keyframe room tracking
//! and wall filtering, per-room shape solves, and the floor plan output file.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::geometry::{LayoutBoundary, Pose, RoomPolygon, Vec2, CAMERA_HEIGHT};
use crate::layout::project_boundary;
use crate::metrics::{
    align_to_ground_truth, corner_metric, room_metric_with_pairs, EvalReport, MetricsError,
    SceneBounds, IOU_THRESHOLDS,
};
use crate::planes::{fit_wall, likely_orientations, update_orientation, OrientationPosterior};
use crate::rooms::RoomTracker;
use crate::scale::{recover_scale, ScaleEstimate};
use crate::shape::{solve_room, RoomEvidence, SolveReport};
use crate::stream::{record_to_inputs, write_stream, KeyframeRecord};
use crate::synth::GroundTruth;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("empty stream")]
    EmptyStream,
    #[error("no keyframe could be processed")]
    NothingUsable,
    #[error("scale recovery failed: {0}")]
    Scale(#[from] crate::scale::ScaleError),
    #[error("room tracking failed at keyframe {index}: {source}")]
    Rooms {
        index: u64,
        source: crate::rooms::RoomError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("output serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// One room of the emitted floor plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoomOutput {
    pub room_id: usize,
    /// Counterclockwise corner loop, world `(x, z)`.
    pub corners: Vec<[f64; 2]>,
    pub solve_seconds: f64,
}

/// Hashes tying an output file to its exact inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub input_hash: String,
}

/// The floor plan file: per-room corner polygons plus run metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FloorPlanOutput {
    pub scale_used: f64,
    pub scale_observable: bool,
    pub rooms: Vec<RoomOutput>,
    pub corner_counts: Vec<usize>,
    pub provenance: Provenance,
}

impl FloorPlanOutput {
    pub fn room_polygons(&self) -> Vec<RoomPolygon> {
        self.rooms
            .iter()
            .map(|room| {
                RoomPolygon::new(
                    room.corners.iter().map(|&[x, z]| Vec2::new(x, z)).collect(),
                    room.room_id,
                )
                .expect("emitted polygons are valid")
            })
            .collect()
    }
}

/// Everything a run produces, including in-memory evidence for debugging and
/// evaluation on top of the serializable output.
pub struct PipelineRun {
    pub output: FloorPlanOutput,
    pub scale: ScaleEstimate,
    /// Room assignment per processed keyframe.
    pub history: Vec<usize>,
    /// Stream indices of the keyframes that were actually processed.
    pub processed_indices: Vec<u64>,
    /// Per-room solver reports, aligned with `output.rooms`.
    pub reports: Vec<(usize, SolveReport)>,
    /// Per-room evidence handed to the solver, for debug dumps.
    pub evidence: Vec<(usize, RoomEvidence)>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Run the full pipeline over a parsed stream.
///
/// Phase 1 recovers the odometry scale from the initial warm-up fraction of
/// keyframes; phase 2 re-processes every keyframe (warm-up included) with the
/// fixed scale: register, identify the room, update its density, validate
/// walls and update the room's orientation posteriors. Rooms are solved from
/// their final evidence once the stream ends; keyframes that fail to process
/// are skipped and logged rather than aborting the run.
pub fn run_pipeline(
    records: &[KeyframeRecord],
    config: &PipelineConfig,
) -> Result<PipelineRun, PipelineError> {
    if records.is_empty() {
        return Err(PipelineError::EmptyStream);
    }
    // Parse and project once; a keyframe that fails here is dropped with a log.
    let mut usable: Vec<(u64, Pose, LayoutBoundary)> = Vec::with_capacity(records.len());
    for record in records {
        let parsed = record_to_inputs(record).map(|(pose, raw)| {
            project_boundary(&raw, CAMERA_HEIGHT).map(|boundary| (pose, boundary))
        });
        match parsed {
            Ok(Ok((pose, boundary))) => usable.push((record.index, pose, boundary)),
            Ok(Err(e)) => log::warn!("keyframe {}: skipped ({e})", record.index),
            Err(e) => log::warn!("keyframe {}: skipped ({e})", record.index),
        }
    }
    if usable.is_empty() {
        return Err(PipelineError::NothingUsable);
    }

    // Phase 1: scale warm-up.
    let warmup_len = ((usable.len() as f64 * config.scale.warmup_fraction).ceil() as usize)
        .max(config.scale.window_size)
        .min(usable.len());
    let warm_boundaries: Vec<LayoutBoundary> =
        usable[..warmup_len].iter().map(|(_, _, b)| b.clone()).collect();
    let warm_poses: Vec<Pose> = usable[..warmup_len].iter().map(|(_, p, _)| p.clone()).collect();
    let scale = recover_scale(&warm_boundaries, &warm_poses, &config.scale)?;
    if !scale.observable {
        log::warn!("odometry scale unobservable; continuing with s = {}", scale.scale);
    }
    let s = scale.scale;

    // Phase 2: sequential tracking with the fixed scale.
    let mut tracker = RoomTracker::new(config.room.clone());
    let mut posteriors: HashMap<usize, Vec<OrientationPosterior>> = HashMap::new();
    let mut wall_points: HashMap<usize, Vec<Vec2>> = HashMap::new();
    let mut processed_indices = Vec::with_capacity(usable.len());
    for (index, pose, boundary) in &usable {
        let step = tracker
            .observe(pose, boundary, s)
            .map_err(|source| PipelineError::Rooms {
                index: *index,
                source,
            })?;
        let world = tracker.rooms()[step.room_id]
            .boundary_archive
            .last()
            .expect("observe archives the boundary")
            .clone();
        let camera = pose.camera_xz(s);
        let room_posteriors = posteriors.entry(step.room_id).or_default();
        let room_walls = wall_points.entry(step.room_id).or_default();
        for subset in world.wall_subsets() {
            let points: Vec<Vec2> = subset.iter().map(|p| p.xz()).collect();
            let feature = fit_wall(&points, camera, &config.ransac);
            if feature.valid {
                update_orientation(
                    room_posteriors,
                    feature.orientation(),
                    feature.distance,
                    &config.orient,
                );
                room_walls.extend_from_slice(&feature.inliers);
                // Close the small corner gaps the column sampling leaves
                // between adjacent walls.
                room_walls.extend(feature.endpoint_extensions(0.12, 0.03));
            }
        }
        processed_indices.push(*index);
    }
    tracker.finish();

    // Solve every room from its final evidence; rooms parallelize.
    let mut evidence: Vec<(usize, RoomEvidence)> = tracker
        .rooms()
        .iter()
        .map(|room| {
            let orientations = posteriors
                .get(&room.room_id)
                .map(|p| likely_orientations(p, &config.orient))
                .unwrap_or_default();
            (
                room.room_id,
                RoomEvidence {
                    occupancy: room.density.clone(),
                    wall_points: wall_points.remove(&room.room_id).unwrap_or_default(),
                    orientations,
                },
            )
        })
        .collect();
    evidence.sort_by_key(|(id, _)| *id);
    let solved: Vec<(usize, Result<(SolveReport, f64), crate::shape::ShapeError>)> = evidence
        .par_iter()
        .map(|(room_id, room_evidence)| {
            let started = Instant::now();
            let result = solve_room(room_evidence, &config.weights, &config.schedule)
                .map(|report| (report, started.elapsed().as_secs_f64()));
            (*room_id, result)
        })
        .collect();

    let mut rooms = Vec::new();
    let mut corner_counts = Vec::new();
    let mut reports = Vec::new();
    for (room_id, result) in solved {
        match result {
            Ok((report, seconds)) => {
                if report.degenerate {
                    log::warn!("room {room_id}: degenerate polygon (area under 4 cells)");
                }
                let polygon = report.polygon.clone().with_room_id(room_id);
                corner_counts.push(polygon.corners().len());
                rooms.push(RoomOutput {
                    room_id,
                    corners: polygon.corners().iter().map(|c| [c.x, c.y]).collect(),
                    solve_seconds: seconds,
                });
                reports.push((room_id, report));
            }
            Err(e) => log::warn!("room {room_id}: shape solve failed ({e})"),
        }
    }

    let mut stream_bytes = Vec::new();
    write_stream(&mut stream_bytes, records).expect("in-memory serialization");
    let output = FloorPlanOutput {
        scale_used: s,
        scale_observable: scale.observable,
        rooms,
        corner_counts,
        provenance: Provenance {
            config_hash: sha256_hex(config.canonical_text().as_bytes()),
            input_hash: sha256_hex(&stream_bytes),
        },
    };
    Ok(PipelineRun {
        output,
        scale,
        history: tracker.history().to_vec(),
        processed_indices,
        reports,
        evidence,
    })
}

/// Score a floor plan against the ground truth of the scene it was run on.
///
/// The estimated camera track (odometry times the scale the run used) is
/// aligned to the true positions with a least-squares similarity, the
/// transform is applied to the predicted polygons, and corners and rooms are
/// scored in the ground-truth frame.
pub fn evaluate(output: &FloorPlanOutput, gt: &GroundTruth) -> Result<EvalReport, MetricsError> {
    let pred_track: Vec<(u64, Vec2)> = gt
        .odometry_translations
        .iter()
        .enumerate()
        .map(|(i, t)| {
            (
                i as u64,
                Vec2::new(t[0] * output.scale_used, t[2] * output.scale_used),
            )
        })
        .collect();
    let gt_track: Vec<(u64, Vec2)> = gt
        .true_positions
        .iter()
        .enumerate()
        .map(|(i, p)| (i as u64, Vec2::new(p[0], p[1])))
        .collect();
    let alignment = align_to_ground_truth(&pred_track, &gt_track)?;

    let pred_polygons: Vec<RoomPolygon> = output
        .room_polygons()
        .iter()
        .map(|p| alignment.apply_polygon(p))
        .collect();
    let gt_polygons = gt.room_polygons();
    let pred_corners: Vec<Vec2> = pred_polygons
        .iter()
        .flat_map(|p| p.corners().iter().copied())
        .collect();
    let gt_corners: Vec<Vec2> = gt.corners.iter().map(|&[x, z]| Vec2::new(x, z)).collect();
    let bounds = SceneBounds::around(&pred_corners, &gt_corners);
    let corner = corner_metric(&pred_corners, &gt_corners, &bounds);

    let span = (bounds.max - bounds.min).amax();
    let resolution = span / 256.0;
    let mut rooms = Vec::new();
    let mut room_pairs = Vec::new();
    for &threshold in &IOU_THRESHOLDS {
        let (pr, pairs) = room_metric_with_pairs(&pred_polygons, &gt_polygons, threshold, resolution);
        if room_pairs.is_empty() {
            room_pairs = pairs
                .into_iter()
                .map(|(pi, gi, iou)| (output.rooms[pi].room_id, gi, iou))
                .collect();
        }
        rooms.push((threshold, pr));
    }
    let runtime = if output.rooms.is_empty() {
        None
    } else {
        Some(
            output.rooms.iter().map(|r| r.solve_seconds).sum::<f64>()
                / output.rooms.len() as f64,
        )
    };
    Ok(EvalReport {
        corner,
        rooms,
        room_pairs,
        alignment,
        runtime_per_room_seconds: runtime,
    })
}

// ── File helpers ──────────────────────────────────────────────────────────────

pub fn write_output(path: &Path, output: &FloorPlanOutput) -> Result<(), PipelineError> {
    let json = serde_json::to_string_pretty(output)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn read_output(path: &Path) -> Result<FloorPlanOutput, PipelineError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_ground_truth(path: &Path, gt: &GroundTruth) -> Result<(), PipelineError> {
    let json = serde_json::to_string_pretty(gt)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth, PipelineError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Binary PGM (P5) writer used for the debug map dumps.
fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> std::io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    write!(file, "P5\n{width} {height}\n255\n")?;
    file.write_all(pixels)?;
    Ok(())
}

/// Dump each room's density `H`, wall evidence `M_P`, mask `M_H` and the
/// per-round polygons as grayscale images under `dir`.
pub fn write_debug_maps(run: &PipelineRun, dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir)?;
    for (room_id, evidence) in &run.evidence {
        let grid = &evidence.occupancy;
        let (rows, cols) = (grid.rows(), grid.cols());
        let pixels: Vec<u8> = (0..rows * cols)
            .map(|i| (grid.values()[i].clamp(0.0, 1.0) * 255.0) as u8)
            .collect();
        write_pgm(&dir.join(format!("room_{room_id}_H.pgm")), cols, rows, &pixels)?;

        if let Ok(maps) = crate::shape::build_maps(evidence, 96) {
            let size = maps.frame.size;
            let mut wall_pixels = vec![0u8; size * size];
            let mut mask_pixels = vec![0u8; size * size];
            for r in 0..size {
                for c in 0..size {
                    wall_pixels[r * size + c] =
                        (maps.wall_density(r, c).clamp(0.0, 1.0) * 255.0) as u8;
                    mask_pixels[r * size + c] = if maps.mask(r, c) { 255 } else { 0 };
                }
            }
            write_pgm(
                &dir.join(format!("room_{room_id}_MP.pgm")),
                size,
                size,
                &wall_pixels,
            )?;
            write_pgm(
                &dir.join(format!("room_{room_id}_MH.pgm")),
                size,
                size,
                &mask_pixels,
            )?;
            if let Some((_, report)) = run.reports.iter().find(|(id, _)| id == room_id) {
                // One overlay per round: the mask at 128, the polygon at 255.
                for (round_idx, stats) in report.rounds.iter().enumerate() {
                    let mut overlay: Vec<u8> =
                        mask_pixels.iter().map(|&m| if m > 0 { 128 } else { 0 }).collect();
                    let corners = &stats.corner_positions;
                    for (i, &a) in corners.iter().enumerate() {
                        let b = corners[(i + 1) % corners.len()];
                        if let (Some(ca), Some(cb)) =
                            (maps.frame.cell_of(a), maps.frame.cell_of(b))
                        {
                            for cell in crate::shape::segment_cells(ca, cb) {
                                overlay[cell.0 * size + cell.1] = 255;
                            }
                        }
                    }
                    write_pgm(
                        &dir.join(format!("room_{room_id}_round_{}.pgm", round_idx + 1)),
                        size,
                        size,
                        &overlay,
                    )?;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{chain_scene, generate, NoiseSpec};

    #[test]
    fn single_room_scene_yields_one_rectangle() {
        let mut spec = chain_scene(1, 1.0, NoiseSpec::default(), 7, false);
        spec.trajectory.push(crate::synth::Waypoint {
            position: [1.0, 0.07],
            dwell: 8,
        });
        let (records, _) = generate(&spec).unwrap();
        let run = run_pipeline(&records, &PipelineConfig::default()).unwrap();
        assert_eq!(run.output.rooms.len(), 1);
        assert_eq!(run.output.rooms[0].corners.len(), 4);
    }

    #[test]
    fn empty_stream_is_rejected() {
        assert!(matches!(
            run_pipeline(&[], &PipelineConfig::default()),
            Err(PipelineError::EmptyStream)
        ));
    }

    #[test]
    fn pipeline_is_deterministic() {
        let spec = chain_scene(
            2,
            1.3,
            NoiseSpec {
                sigma_phi: 0.005,
                sigma_t: 0.002,
                furniture_occlusion_prob: 0.0,
            },
            21,
            false,
        );
        let (records, _) = generate(&spec).unwrap();
        let config = PipelineConfig::default();
        let a = run_pipeline(&records, &config).unwrap();
        let b = run_pipeline(&records, &config).unwrap();
        // Wall-clock timings are measurement metadata, not output.
        let normalize = |mut out: FloorPlanOutput| {
            for room in &mut out.rooms {
                room.solve_seconds = 0.0;
            }
            serde_json::to_string(&out).unwrap()
        };
        assert_eq!(normalize(a.output), normalize(b.output));
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn output_round_trips_through_json() {
        let output = FloorPlanOutput {
            scale_used: 1.25,
            scale_observable: true,
            rooms: vec![RoomOutput {
                room_id: 0,
                corners: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
                solve_seconds: 0.5,
            }],
            corner_counts: vec![4],
            provenance: Provenance {
                config_hash: "aa".into(),
                input_hash: "bb".into(),
            },
        };
        let json = serde_json::to_string(&output).unwrap();
        let back: FloorPlanOutput = serde_json::from_str(&json).unwrap();
        assert_eq!(back.rooms[0].corners.len(), 4);
        assert_eq!(back.scale_used, 1.25);
    }
}
