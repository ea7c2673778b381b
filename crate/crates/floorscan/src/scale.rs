//! Odometry scale recovery.
//!
//! Consecutive layout boundaries, registered at the correct scale, stack onto
//! the same walls in the top-down view; at a wrong scale they smear. We score
//! a candidate scale by the entropy of the normalized joint histogram of the
//! registered points and search the predefined range coarse-to-fine.

use rayon::prelude::*;

use crate::geometry::{grid_project, GridSpec, LayoutBoundary, Pose, ProjectionMode, Vec2};
use crate::layout::register_boundary;

#[derive(Debug, thiserror::Error)]
pub enum ScaleError {
    #[error("window needs at least 2 registered points")]
    DegenerateWindow,
    #[error("warm-up stream has {got} keyframes, window size is {window}")]
    WarmupTooShort { got: usize, window: usize },
    #[error("boundaries and poses must pair up: {boundaries} vs {poses}")]
    LengthMismatch { boundaries: usize, poses: usize },
    #[error("invalid search config: {0}")]
    BadConfig(&'static str),
    #[error(transparent)]
    Layout(#[from] crate::layout::LayoutError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

/// Coarse-to-fine linear search parameters.
#[derive(Debug, Clone)]
pub struct ScaleSearchConfig {
    /// Inclusive search bracket `[s_min, s_max]`.
    pub search_range: (f64, f64),
    /// Step size per refinement level, strictly decreasing.
    pub step_schedule: Vec<f64>,
    /// Sliding-window length `N` in keyframes.
    pub window_size: usize,
    /// Fraction of the stream used as warm-up (1.0 = all keyframes).
    pub warmup_fraction: f64,
    /// Histogram cell size in world units.
    pub grid_cell_size: f64,
}

impl Default for ScaleSearchConfig {
    fn default() -> Self {
        Self {
            search_range: (0.1, 10.0),
            step_schedule: vec![0.5, 0.1, 0.01],
            window_size: 10,
            warmup_fraction: 0.2,
            grid_cell_size: 0.1,
        }
    }
}

impl ScaleSearchConfig {
    pub fn validate(&self) -> Result<(), ScaleError> {
        let (lo, hi) = self.search_range;
        if !(lo > 0.0 && lo < hi) {
            return Err(ScaleError::BadConfig("need 0 < s_min < s_max"));
        }
        if self.step_schedule.is_empty() {
            return Err(ScaleError::BadConfig("step schedule is empty"));
        }
        if !self.step_schedule.windows(2).all(|w| w[1] < w[0]) {
            return Err(ScaleError::BadConfig("steps must be strictly decreasing"));
        }
        if self.window_size < 2 {
            return Err(ScaleError::BadConfig("window size must be >= 2"));
        }
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction <= 1.0) {
            return Err(ScaleError::BadConfig("warmup fraction must be in (0, 1]"));
        }
        if self.grid_cell_size <= 0.0 {
            return Err(ScaleError::BadConfig("cell size must be positive"));
        }
        Ok(())
    }

    /// Smallest step in the schedule, i.e. the resolution of the estimate.
    pub fn final_step(&self) -> f64 {
        *self.step_schedule.last().expect("validated non-empty")
    }
}

/// Result of the warm-up search.
#[derive(Debug, Clone, Copy)]
pub struct ScaleEstimate {
    pub scale: f64,
    /// False when the objective was flat over the whole range (for example
    /// all-zero translations), in which case `scale` is just `s_min`.
    pub observable: bool,
}

/// Entropy of the joint top-down histogram of `N` camera-frame boundaries
/// registered at `scale`.
///
/// The grid extent is recomputed per call (bounding box plus a one-cell
/// margin) while the cell size stays fixed, so entropies are comparable
/// across candidate scales.
pub fn window_entropy(
    boundaries: &[LayoutBoundary],
    poses: &[Pose],
    scale: f64,
    cell_size: f64,
) -> Result<f64, ScaleError> {
    if boundaries.len() != poses.len() {
        return Err(ScaleError::LengthMismatch {
            boundaries: boundaries.len(),
            poses: poses.len(),
        });
    }
    let mut points: Vec<Vec2> = Vec::new();
    for (boundary, pose) in boundaries.iter().zip(poses) {
        let world = register_boundary(boundary, pose, scale)?;
        points.extend(world.points.iter().map(|p| p.xz()));
    }
    if points.len() < 2 {
        return Err(ScaleError::DegenerateWindow);
    }
    let spec = GridSpec::covering(&points, cell_size, 1);
    let grid = grid_project(&points, spec, ProjectionMode::Normalized)?;
    Ok(grid.entropy())
}

/// Mean of [`window_entropy`] over all length-`N` sliding windows (stride 1).
pub fn mean_window_entropy(
    boundaries: &[LayoutBoundary],
    poses: &[Pose],
    scale: f64,
    config: &ScaleSearchConfig,
) -> Result<f64, ScaleError> {
    let n = config.window_size;
    if boundaries.len() < n {
        return Err(ScaleError::WarmupTooShort {
            got: boundaries.len(),
            window: n,
        });
    }
    let windows = boundaries.len() - n + 1;
    let mut acc = 0.0;
    for w in 0..windows {
        acc += window_entropy(
            &boundaries[w..w + n],
            &poses[w..w + n],
            scale,
            config.grid_cell_size,
        )?;
    }
    Ok(acc / windows as f64)
}

fn candidates(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut s = lo;
    while s <= hi + step * 1e-9 {
        out.push(s.min(hi));
        s += step;
    }
    out
}

/// Recover the odometry scale from a warm-up stream of camera-frame
/// boundaries and their poses.
///
/// Each level evaluates the mean sliding-window entropy on a linear grid of
/// candidates, then re-brackets around the best one with the next (smaller)
/// step. If the objective is constant over the first level the scale is not
/// observable from this stream and `s_min` is returned flagged.
pub fn recover_scale(
    boundaries: &[LayoutBoundary],
    poses: &[Pose],
    config: &ScaleSearchConfig,
) -> Result<ScaleEstimate, ScaleError> {
    config.validate()?;
    if boundaries.len() < config.window_size {
        return Err(ScaleError::WarmupTooShort {
            got: boundaries.len(),
            window: config.window_size,
        });
    }
    let (s_min, s_max) = config.search_range;
    let mut lo = s_min;
    let mut hi = s_max;
    let mut best = s_min;
    for (level, &step) in config.step_schedule.iter().enumerate() {
        let grid = candidates(lo, hi, step);
        let scored: Vec<(f64, f64)> = grid
            .par_iter()
            .map(|&s| {
                mean_window_entropy(boundaries, poses, s, config).map(|obj| (s, obj))
            })
            .collect::<Result<_, _>>()?;
        if level == 0 {
            let min_obj = scored.iter().map(|&(_, o)| o).fold(f64::INFINITY, f64::min);
            let max_obj = scored.iter().map(|&(_, o)| o).fold(f64::NEG_INFINITY, f64::max);
            if max_obj - min_obj <= 1e-12 * max_obj.abs().max(1.0) {
                log::warn!(
                    "scale is not observable from the warm-up stream \
                     (entropy constant over [{s_min}, {s_max}]); using s_min"
                );
                return Ok(ScaleEstimate {
                    scale: s_min,
                    observable: false,
                });
            }
        }
        // Argmin with deterministic tie-break toward the smaller scale.
        best = scored
            .iter()
            .fold((f64::INFINITY, f64::INFINITY), |acc, &(s, o)| {
                if o < acc.1 || (o == acc.1 && s < acc.0) {
                    (s, o)
                } else {
                    acc
                }
            })
            .0;
        lo = (best - step).max(s_min);
        hi = (best + step).min(s_max);
    }
    Ok(ScaleEstimate {
        scale: best,
        observable: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundaryPoint, Frame, Vec3};

    fn boundary_from_xz(points: &[(f64, f64)]) -> LayoutBoundary {
        LayoutBoundary {
            points: points
                .iter()
                .enumerate()
                .map(|(j, &(x, z))| BoundaryPoint {
                    position: Vec3::new(x, -1.0, z),
                    source_column: j,
                })
                .collect(),
            wall_splits: vec![],
            frame: Frame::Camera,
        }
    }

    #[test]
    fn single_cell_window_has_zero_entropy() {
        let b = boundary_from_xz(&[(0.01, 0.01), (0.02, 0.02)]);
        let poses = [Pose::identity(0), Pose::identity(1)];
        let e = window_entropy(&[b.clone(), b], &poses, 1.0, 1.0).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn uniform_four_cells_gives_ln4() {
        // One point per cell of a 2x2 block, two frames at the same pose.
        let b = boundary_from_xz(&[(0.5, 0.5), (1.5, 0.5), (0.5, 1.5), (1.5, 1.5)]);
        let poses = [Pose::identity(0), Pose::identity(1)];
        let e = window_entropy(&[b.clone(), b], &poses, 1.0, 1.0).unwrap();
        assert!((e - 4.0f64.ln()).abs() < 1e-12, "e = {e}");
    }

    #[test]
    fn degenerate_window_is_reported() {
        let b = boundary_from_xz(&[]);
        let poses = [Pose::identity(0), Pose::identity(1)];
        assert!(matches!(
            window_entropy(&[b.clone(), b], &poses, 1.0, 1.0),
            Err(ScaleError::DegenerateWindow)
        ));
    }

    #[test]
    fn zero_translation_stream_is_unobservable() {
        let b = boundary_from_xz(&[(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)]);
        let boundaries: Vec<_> = (0..12).map(|_| b.clone()).collect();
        let poses: Vec<_> = (0..12).map(|i| Pose::identity(i)).collect();
        let cfg = ScaleSearchConfig {
            step_schedule: vec![0.5, 0.1],
            ..Default::default()
        };
        let est = recover_scale(&boundaries, &poses, &cfg).unwrap();
        assert!(!est.observable);
        assert_eq!(est.scale, cfg.search_range.0);
    }

    #[test]
    fn warmup_shorter_than_window_is_an_error() {
        let b = boundary_from_xz(&[(1.0, 0.0)]);
        let poses = [Pose::identity(0)];
        let cfg = ScaleSearchConfig::default();
        assert!(matches!(
            recover_scale(&[b], &poses, &cfg),
            Err(ScaleError::WarmupTooShort { .. })
        ));
    }

    #[test]
    fn config_validation_catches_bad_schedules() {
        let mut cfg = ScaleSearchConfig::default();
        cfg.step_schedule = vec![0.1, 0.5];
        assert!(cfg.validate().is_err());
        cfg.step_schedule = vec![0.5];
        assert!(cfg.validate().is_ok());
        cfg.search_range = (2.0, 1.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn candidate_grid_covers_bracket_inclusively() {
        let c = candidates(0.1, 1.1, 0.5);
        assert_eq!(c.len(), 3);
        assert!((c[2] - 1.1).abs() < 1e-12);
    }
}
