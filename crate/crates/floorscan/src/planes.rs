//! Wall validation and orientation filtering.
//!
//! Each wall subset of a registered boundary is checked for planarity with a
//! 2-point RANSAC line fit in the floor plane; subsets that fail the inlier
//! gate are dropped. Validated wall normals feed per-room Gaussian posteriors
//! over wall orientation, with measurement spread growing linearly in the
//! camera-to-wall distance.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::Vec2;

/// RANSAC parameters for the per-wall line fit.
#[derive(Debug, Clone)]
pub struct RansacConfig {
    /// Maximum perpendicular residual for a point to count as an inlier.
    pub max_residual: f64,
    /// Minimum inlier ratio for a wall to be kept.
    pub inlier_ratio_min: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            max_residual: 3e-2,
            inlier_ratio_min: 0.9,
            iterations: 100,
            seed: 7,
        }
    }
}

/// A wall candidate: fitted line geometry plus the validity verdict.
#[derive(Debug, Clone)]
pub struct PlaneWallFeature {
    /// Unit normal of the wall line in the `(x, z)` plane, oriented toward
    /// the camera.
    pub normal: Vec2,
    /// Line offset: the wall is `{p : normal . p = offset}`.
    pub offset: f64,
    /// Distance from the camera to the wall line at observation time.
    pub distance: f64,
    pub inlier_ratio: f64,
    pub valid: bool,
    /// Points of the subset that fit the line within the residual gate.
    pub inliers: Vec<Vec2>,
}

impl PlaneWallFeature {
    fn invalid() -> Self {
        Self {
            normal: Vec2::new(1.0, 0.0),
            offset: 0.0,
            distance: 0.0,
            inlier_ratio: 0.0,
            valid: false,
            inliers: Vec::new(),
        }
    }

    /// Angular orientation of the normal, in `[-pi, pi)`.
    pub fn orientation(&self) -> f64 {
        self.normal.y.atan2(self.normal.x)
    }

    /// Samples along the fitted line just beyond both ends of the observed
    /// span. Boundary columns rarely hit a corner exactly, so adjacent walls
    /// leave a small evidence gap at their junction; walls physically run to
    /// the junction, and these samples close the gap.
    pub fn endpoint_extensions(&self, margin: f64, spacing: f64) -> Vec<Vec2> {
        if self.inliers.is_empty() || margin <= 0.0 || spacing <= 0.0 {
            return Vec::new();
        }
        let tangent = Vec2::new(-self.normal.y, self.normal.x);
        let base = self.normal * self.offset;
        let mut t_min = f64::INFINITY;
        let mut t_max = f64::NEG_INFINITY;
        for p in &self.inliers {
            let t = tangent.dot(p);
            t_min = t_min.min(t);
            t_max = t_max.max(t);
        }
        let mut out = Vec::new();
        let steps = (margin / spacing).ceil() as usize;
        for k in 1..=steps {
            let d = k as f64 * spacing;
            out.push(base + tangent * (t_min - d));
            out.push(base + tangent * (t_max + d));
        }
        out
    }
}

fn line_through(a: Vec2, b: Vec2) -> Option<(Vec2, f64)> {
    let dir = b - a;
    let len = dir.norm();
    if len < 1e-12 {
        return None;
    }
    let normal = Vec2::new(-dir.y, dir.x) / len;
    Some((normal, normal.dot(&a)))
}

/// Total-least-squares line through `points` (smallest covariance direction).
fn refit_line(points: &[Vec2]) -> Option<(Vec2, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mut mean = Vec2::zeros();
    for p in points {
        mean += p;
    }
    mean /= n;
    let (mut sxx, mut sxz, mut szz) = (0.0, 0.0, 0.0);
    for p in points {
        let d = p - mean;
        sxx += d.x * d.x;
        sxz += d.x * d.y;
        szz += d.y * d.y;
    }
    // Eigenvector of the smaller eigenvalue of [[sxx, sxz], [sxz, szz]].
    let tr = sxx + szz;
    let det = sxx * szz - sxz * sxz;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let lambda_min = tr / 2.0 - disc;
    let normal = if sxz.abs() > 1e-15 {
        Vec2::new(lambda_min - szz, sxz)
    } else if sxx <= szz {
        Vec2::new(1.0, 0.0)
    } else {
        Vec2::new(0.0, 1.0)
    };
    let norm = normal.norm();
    if norm < 1e-15 {
        return None;
    }
    let normal = normal / norm;
    Some((normal, normal.dot(&mean)))
}

/// Validate one wall subset as a planar wall.
///
/// RANSAC over 2-point samples, inliers within `max_residual` of the line,
/// best model refit by least squares on its inliers. `camera` is the camera's
/// top-down position in the same frame as the points and fixes the normal
/// sign and the reported distance. Deterministic for a fixed seed.
pub fn fit_wall(points: &[Vec2], camera: Vec2, config: &RansacConfig) -> PlaneWallFeature {
    if points.len() < 2 {
        return PlaneWallFeature::invalid();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best_count = 0usize;
    let mut best_model: Option<(Vec2, f64)> = None;
    for _ in 0..config.iterations {
        let i = rng.random_range(0..points.len());
        let j = rng.random_range(0..points.len());
        if i == j {
            continue;
        }
        let Some((normal, offset)) = line_through(points[i], points[j]) else {
            continue;
        };
        let count = points
            .iter()
            .filter(|p| (normal.dot(p) - offset).abs() <= config.max_residual)
            .count();
        if count > best_count {
            best_count = count;
            best_model = Some((normal, offset));
        }
    }
    let Some((normal, offset)) = best_model else {
        return PlaneWallFeature::invalid();
    };
    let inliers: Vec<Vec2> = points
        .iter()
        .filter(|p| (normal.dot(p) - offset).abs() <= config.max_residual)
        .copied()
        .collect();
    let (mut normal, mut offset) = refit_line(&inliers).unwrap_or((normal, offset));
    let final_inliers: Vec<Vec2> = points
        .iter()
        .filter(|p| (normal.dot(p) - offset).abs() <= config.max_residual)
        .copied()
        .collect();
    let inlier_ratio = final_inliers.len() as f64 / points.len() as f64;
    // Orient the normal toward the camera side of the line.
    if normal.dot(&camera) - offset < 0.0 {
        normal = -normal;
        offset = -offset;
    }
    let distance = (normal.dot(&camera) - offset).abs();
    PlaneWallFeature {
        normal,
        offset,
        distance,
        inlier_ratio,
        valid: inlier_ratio >= config.inlier_ratio_min,
        inliers: final_inliers,
    }
}

// ── Orientation posteriors ────────────────────────────────────────────────────

/// Bayesian filter parameters for wall orientations.
#[derive(Debug, Clone)]
pub struct OrientationConfig {
    /// Inherent measurement noise (radians).
    pub sigma0: f64,
    /// Distance-dependent noise growth (radians per world unit).
    pub lambda: f64,
    /// Association gate: a measurement fuses with a posterior within this
    /// angular distance (directions compared modulo pi).
    pub gate: f64,
    /// Spread below which a posterior counts as a likely room orientation.
    pub accept: f64,
}

impl Default for OrientationConfig {
    fn default() -> Self {
        Self {
            sigma0: 0.05,
            lambda: 0.02,
            gate: std::f64::consts::FRAC_PI_3,
            accept: std::f64::consts::PI / 10.0,
        }
    }
}

/// Gaussian belief over one wall-orientation family.
#[derive(Debug, Clone, Copy)]
pub struct OrientationPosterior {
    /// Mean orientation in `[-pi, pi)`.
    pub mean: f64,
    /// Spread parameter; fused in precision form.
    pub spread: f64,
    pub observation_count: usize,
}

/// Initial spread of a freshly created posterior.
pub const INITIAL_SPREAD: f64 = std::f64::consts::TAU;

fn wrap_pi(a: f64) -> f64 {
    let mut a = (a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU);
    a -= std::f64::consts::PI;
    if a >= std::f64::consts::PI { -std::f64::consts::PI } else { a }
}

/// Angular distance between two directions modulo pi (opposite normals are
/// the same wall family), in `[0, pi/2]`.
pub fn direction_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::PI);
    d.min(std::f64::consts::PI - d)
}

/// Fuse one orientation measurement into the posterior list.
///
/// The measurement spread is `sigma0 + lambda * distance`. The nearest
/// posterior within the gate (modulo pi) is updated as a 1D Gaussian product
/// in precision form, with the measurement unwrapped to the representative
/// closest to the posterior mean; with no posterior in the gate a new one is
/// appended at the measurement with the wide initial spread.
pub fn update_orientation(
    posteriors: &mut Vec<OrientationPosterior>,
    measurement: f64,
    distance: f64,
    config: &OrientationConfig,
) {
    let sigma = config.sigma0 + config.lambda * distance;
    let mut nearest: Option<(usize, f64)> = None;
    for (idx, p) in posteriors.iter().enumerate() {
        let d = direction_distance(p.mean, measurement);
        if d <= config.gate {
            let better = match nearest {
                Some((_, nd)) => d < nd,
                None => true,
            };
            if better {
                nearest = Some((idx, d));
            }
        }
    }
    match nearest {
        Some((idx, _)) => {
            let p = &mut posteriors[idx];
            // Unwrap the measured direction to the pi-representative nearest
            // the posterior mean so the linear fusion formula applies.
            let mut theta = measurement;
            while theta - p.mean > std::f64::consts::FRAC_PI_2 {
                theta -= std::f64::consts::PI;
            }
            while p.mean - theta > std::f64::consts::FRAC_PI_2 {
                theta += std::f64::consts::PI;
            }
            let fused_spread = 1.0 / (1.0 / p.spread + 1.0 / sigma);
            let fused_mean = fused_spread * (p.mean / p.spread + theta / sigma);
            p.mean = wrap_pi(fused_mean);
            p.spread = fused_spread;
            p.observation_count += 1;
        }
        None => posteriors.push(OrientationPosterior {
            mean: wrap_pi(measurement),
            spread: INITIAL_SPREAD,
            observation_count: 1,
        }),
    }
}

/// Export the likely wall directions: posteriors whose spread is below the
/// acceptance gate, reduced modulo pi to `[0, pi)`.
pub fn likely_orientations(
    posteriors: &[OrientationPosterior],
    config: &OrientationConfig,
) -> Vec<f64> {
    posteriors
        .iter()
        .filter(|p| p.spread < config.accept)
        .map(|p| p.mean.rem_euclid(std::f64::consts::PI))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    fn collinear(n: usize, normal: Vec2, offset: f64) -> Vec<Vec2> {
        let tangent = Vec2::new(-normal.y, normal.x);
        let base = normal * offset;
        (0..n)
            .map(|i| base + tangent * (i as f64 * 0.1 - n as f64 * 0.05))
            .collect()
    }

    #[test]
    fn noiseless_line_is_fully_inlying() {
        let normal = Vec2::new(0.0, 1.0);
        let points = collinear(50, normal, 2.0);
        let feature = fit_wall(&points, Vec2::zeros(), &RansacConfig::default());
        assert!(feature.valid);
        assert_relative_eq!(feature.inlier_ratio, 1.0);
        assert_relative_eq!(feature.normal.norm(), 1.0, epsilon = 1e-9);
        for p in &points {
            assert!((feature.normal.dot(p) - feature.offset).abs() < 1e-9);
        }
        assert_relative_eq!(feature.distance, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn outlier_block_fails_the_ratio_gate() {
        let normal = Vec2::new(0.0, 1.0);
        let mut points = collinear(50, normal, 2.0);
        // 20 points offset well beyond the residual gate.
        points.extend(collinear(20, normal, 2.5));
        let feature = fit_wall(&points, Vec2::zeros(), &RansacConfig::default());
        assert!(!feature.valid);
        assert!((feature.inlier_ratio - 50.0 / 70.0).abs() < 0.05);
    }

    #[test]
    fn quarter_circle_arc_is_not_a_wall() {
        let points: Vec<Vec2> = (0..50)
            .map(|i| {
                let ang = i as f64 / 49.0 * FRAC_PI_2;
                Vec2::new(ang.cos(), ang.sin())
            })
            .collect();
        // Brute-force upper bound on the achievable inlier count over all
        // 2-point models, independent of the RANSAC path.
        let mut best = 0usize;
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                if let Some((n, c)) = line_through(points[i], points[j]) {
                    let count = points
                        .iter()
                        .filter(|p| (n.dot(p) - c).abs() <= 0.03)
                        .count();
                    best = best.max(count);
                }
            }
        }
        assert!(best < 45, "brute force found {best}/50 inliers");
        let feature = fit_wall(&points, Vec2::zeros(), &RansacConfig::default());
        assert!(!feature.valid);
    }

    #[test]
    fn tiny_subsets_are_invalid_without_fitting() {
        let feature = fit_wall(&[Vec2::zeros()], Vec2::zeros(), &RansacConfig::default());
        assert!(!feature.valid);
    }

    #[test]
    fn fit_is_reproducible_under_a_fixed_seed() {
        let mut points = collinear(40, Vec2::new(1.0, 0.0), 1.0);
        points.extend(collinear(10, Vec2::new(1.0, 0.0), 1.4));
        let cfg = RansacConfig::default();
        let a = fit_wall(&points, Vec2::zeros(), &cfg);
        let b = fit_wall(&points, Vec2::zeros(), &cfg);
        assert_eq!(a.inlier_ratio, b.inlier_ratio);
        assert_eq!(a.normal, b.normal);
        assert_eq!(a.offset, b.offset);
    }

    #[test]
    fn empty_posteriors_initialize_wide() {
        let mut posteriors = Vec::new();
        update_orientation(&mut posteriors, 0.3, 1.0, &OrientationConfig::default());
        assert_eq!(posteriors.len(), 1);
        assert_relative_eq!(posteriors[0].mean, 0.3);
        assert_relative_eq!(posteriors[0].spread, TAU);
    }

    #[test]
    fn equal_precision_fusion_halves_spread() {
        let mut posteriors = vec![OrientationPosterior {
            mean: 0.0,
            spread: 0.1,
            observation_count: 1,
        }];
        // sigma0 + lambda * d = 0.1 with these settings.
        let cfg = OrientationConfig {
            sigma0: 0.1,
            lambda: 0.0,
            ..Default::default()
        };
        update_orientation(&mut posteriors, 0.0, 5.0, &cfg);
        assert_eq!(posteriors.len(), 1);
        assert_relative_eq!(posteriors[0].mean, 0.0);
        assert_relative_eq!(posteriors[0].spread, 0.05);
    }

    #[test]
    fn gate_rejection_spawns_a_new_posterior() {
        let mut posteriors = vec![OrientationPosterior {
            mean: 0.0,
            spread: 0.1,
            observation_count: 1,
        }];
        update_orientation(&mut posteriors, 1.5, 0.0, &OrientationConfig::default());
        assert_eq!(posteriors.len(), 2);
        assert_relative_eq!(posteriors[0].spread, 0.1);
        assert_relative_eq!(posteriors[1].mean, 1.5);
        assert_relative_eq!(posteriors[1].spread, TAU);
    }

    #[test]
    fn opposite_normals_fuse_as_one_wall_family() {
        let mut posteriors = vec![OrientationPosterior {
            mean: 0.05,
            spread: 0.2,
            observation_count: 1,
        }];
        // An opposing wall normal, pi away, is the same direction family.
        update_orientation(&mut posteriors, 0.05 - PI, 0.0, &OrientationConfig::default());
        assert_eq!(posteriors.len(), 1);
        assert_relative_eq!(posteriors[0].mean, 0.05, epsilon = 1e-9);
    }

    #[test]
    fn fusion_never_increases_spread() {
        let mut posteriors = vec![OrientationPosterior {
            mean: 0.4,
            spread: 0.3,
            observation_count: 1,
        }];
        let cfg = OrientationConfig::default();
        for i in 0..20 {
            let before = posteriors[0].spread;
            update_orientation(&mut posteriors, 0.4 + 0.01 * (i % 3) as f64, 2.0, &cfg);
            assert!(posteriors[0].spread <= before);
        }
    }

    #[test]
    fn farther_walls_update_more_weakly() {
        let cfg = OrientationConfig::default();
        let run = |d: f64| {
            let mut posteriors = vec![OrientationPosterior {
                mean: 0.0,
                spread: 0.5,
                observation_count: 1,
            }];
            update_orientation(&mut posteriors, 0.0, d, &cfg);
            posteriors[0].spread
        };
        assert!(run(5.0) > run(1.0));
    }

    #[test]
    fn likely_orientations_apply_the_acceptance_gate() {
        let posteriors = vec![
            OrientationPosterior {
                mean: 0.0,
                spread: 0.05,
                observation_count: 5,
            },
            OrientationPosterior {
                mean: 1.57,
                spread: 0.4,
                observation_count: 2,
            },
        ];
        let likely = likely_orientations(&posteriors, &OrientationConfig::default());
        assert_eq!(likely, vec![0.0]);
        assert!(likely_orientations(&[], &OrientationConfig::default()).is_empty());
    }

    #[test]
    fn likely_orientations_reduce_modulo_pi() {
        let posteriors = vec![OrientationPosterior {
            mean: -FRAC_PI_2,
            spread: 0.05,
            observation_count: 5,
        }];
        let likely = likely_orientations(&posteriors, &OrientationConfig::default());
        assert_relative_eq!(likely[0], FRAC_PI_2);
    }
}
