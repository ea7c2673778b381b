//! Projection of raw equirectangular boundary samples to camera-frame 3D
//! points, and their registration into the world under a candidate odometry
//! scale.

use crate::geometry::{BoundaryPoint, Frame, LayoutBoundary, Pose, Vec3};

#[derive(Debug, thiserror::Error)]
pub enum LayoutError {
    #[error("column {column}: elevation {phi} outside (0, pi/2)")]
    PhiOutOfRange { column: usize, phi: f64 },
    #[error("camera height must be positive, got {0}")]
    BadCameraHeight(f64),
    #[error("wall corner column {0} out of range for width {1}")]
    SplitOutOfRange(usize, usize),
    #[error("wall corner columns must be strictly increasing")]
    SplitsNotIncreasing,
    #[error("scale must be positive, got {0}")]
    BadScale(f64),
    #[error("register_boundary expects a camera-frame boundary")]
    WrongFrame,
}

/// Raw single-frame 360 layout: one floor-boundary elevation per image column.
///
/// `phi` is the angle *below* the horizon, strictly inside `(0, pi/2)`; column
/// `j` looks along azimuth `theta_j = 2*pi*j/W - pi`.
#[derive(Debug, Clone)]
pub struct RawLayout {
    pub phi: Vec<f64>,
    pub wall_corner_columns: Vec<usize>,
    pub image_width: usize,
}

impl RawLayout {
    /// Azimuth of column `j`, uniform over `[-pi, pi)`.
    pub fn azimuth(&self, column: usize) -> f64 {
        std::f64::consts::TAU * column as f64 / self.image_width as f64 - std::f64::consts::PI
    }

    fn validate(&self) -> Result<(), LayoutError> {
        for (j, &phi) in self.phi.iter().enumerate() {
            if !(phi > 0.0 && phi < std::f64::consts::FRAC_PI_2) {
                return Err(LayoutError::PhiOutOfRange { column: j, phi });
            }
        }
        let mut prev: Option<usize> = None;
        for &c in &self.wall_corner_columns {
            if c >= self.image_width {
                return Err(LayoutError::SplitOutOfRange(c, self.image_width));
            }
            if let Some(p) = prev {
                if c <= p {
                    return Err(LayoutError::SplitsNotIncreasing);
                }
            }
            prev = Some(c);
        }
        Ok(())
    }
}

/// Project a raw layout to camera-frame floor points at camera height `h`.
///
/// Column `j` with azimuth `theta` and elevation `phi` maps to
/// `((h/sin phi) cos phi sin theta, -h, (h/sin phi) cos phi cos theta)`:
/// every output point lies on the floor plane `y = -h`, at top-down range
/// `h * cot(phi)` from the camera.
pub fn project_boundary(raw: &RawLayout, h: f64) -> Result<LayoutBoundary, LayoutError> {
    if h <= 0.0 {
        return Err(LayoutError::BadCameraHeight(h));
    }
    raw.validate()?;
    let mut points = Vec::with_capacity(raw.image_width);
    for (j, &phi) in raw.phi.iter().enumerate() {
        let theta = raw.azimuth(j);
        let range = h * phi.cos() / phi.sin();
        points.push(BoundaryPoint {
            position: Vec3::new(range * theta.sin(), -h, range * theta.cos()),
            source_column: j,
        });
    }
    Ok(LayoutBoundary {
        points,
        wall_splits: raw.wall_corner_columns.clone(),
        frame: Frame::Camera,
    })
}

/// Register a camera-frame boundary into the world: each point `x` maps to
/// `R x + s t` for pose `(R, t)` and odometry scale `s`. Wall splits carry
/// over unchanged.
pub fn register_boundary(
    boundary: &LayoutBoundary,
    pose: &Pose,
    scale: f64,
) -> Result<LayoutBoundary, LayoutError> {
    if scale <= 0.0 {
        return Err(LayoutError::BadScale(scale));
    }
    if boundary.frame != Frame::Camera {
        return Err(LayoutError::WrongFrame);
    }
    let shift = scale * pose.translation;
    let points = boundary
        .points
        .iter()
        .map(|p| BoundaryPoint {
            position: pose.rotation * p.position + shift,
            source_column: p.source_column,
        })
        .collect();
    Ok(LayoutBoundary {
        points,
        wall_splits: boundary.wall_splits.clone(),
        frame: Frame::World,
    })
}
