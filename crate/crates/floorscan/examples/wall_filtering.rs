//! Validate walls with RANSAC and filter their orientations.
//!
//! Fits a clean wall, a contaminated wall and a curved blob, then streams
//! noisy orientation measurements from two wall families into the Bayesian
//! filter and prints which directions become likely.
//!
//!     cargo run --release --example wall_filtering

use floorscan::geometry::Vec2;
use floorscan::planes::{
    fit_wall, likely_orientations, update_orientation, OrientationConfig, RansacConfig,
};

fn line_points(n: usize, angle: f64, offset: f64, wobble: f64) -> Vec<Vec2> {
    let normal = Vec2::new(angle.cos(), angle.sin());
    let tangent = Vec2::new(-normal.y, normal.x);
    (0..n)
        .map(|i| {
            let t = i as f64 * 0.08 - n as f64 * 0.04;
            let w = wobble * ((i * 7919) % 13 as usize) as f64 / 13.0 - wobble / 2.0;
            normal * (offset + w) + tangent * t
        })
        .collect()
}

fn main() {
    let camera = Vec2::zeros();
    let config = RansacConfig::default();

    println!("wall candidates (residual gate {}, ratio gate {}):", config.max_residual, config.inlier_ratio_min);
    let clean = line_points(60, 0.0, 2.0, 0.01);
    let feature = fit_wall(&clean, camera, &config);
    println!(
        "  clean wall:        ratio {:.2}  valid {}  orientation {:+.3} rad  distance {:.2}",
        feature.inlier_ratio, feature.valid, feature.orientation(), feature.distance
    );

    let mut contaminated = line_points(50, 0.0, 2.0, 0.01);
    contaminated.extend(line_points(20, 0.0, 2.5, 0.01));
    let feature = fit_wall(&contaminated, camera, &config);
    println!(
        "  with outlier block: ratio {:.2}  valid {}",
        feature.inlier_ratio, feature.valid
    );

    let arc: Vec<Vec2> = (0..50)
        .map(|i| {
            let a = i as f64 / 49.0 * std::f64::consts::FRAC_PI_2;
            Vec2::new(2.0 * a.cos(), 2.0 * a.sin())
        })
        .collect();
    let feature = fit_wall(&arc, camera, &config);
    println!(
        "  curved blob:        ratio {:.2}  valid {}",
        feature.inlier_ratio, feature.valid
    );

    // Orientation filtering: two wall families observed repeatedly, one of
    // them from farther away (weaker updates), plus a one-off outlier.
    let orient = OrientationConfig::default();
    let mut posteriors = Vec::new();
    let measurements = [
        (0.02, 2.0),
        (1.58, 2.5),
        (-0.01, 2.2),
        (1.56, 2.4),
        (0.01, 1.9),
        (1.57, 2.6),
        (0.78, 9.0), // lone diagonal seen once, far away
        (0.00, 2.0),
        (1.57, 2.3),
        (-0.02, 2.1),
    ];
    for &(angle, distance) in &measurements {
        update_orientation(&mut posteriors, angle, distance, &orient);
    }
    println!("\nposteriors after {} measurements:", measurements.len());
    for p in &posteriors {
        println!(
            "  mean {:+.3} rad  spread {:.3}  observations {}",
            p.mean, p.spread, p.observation_count
        );
    }
    let likely = likely_orientations(&posteriors, &orient);
    println!(
        "likely wall directions (spread < {:.3}): {:?}",
        orient.accept, likely
    );
}
