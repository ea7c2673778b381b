//! The whole pipeline on a noisy five-room scene: synthesize a stream,
//! estimate the floor plan, and score it against ground truth.
//!
//!     cargo run --release --example full_pipeline

use floorscan::config::PipelineConfig;
use floorscan::pipeline::{evaluate, run_pipeline};
use floorscan::synth::{chain_scene, generate, NoiseSpec};

fn main() {
    let noise = NoiseSpec {
        sigma_phi: 0.5f64.to_radians(),
        sigma_t: 0.01,
        furniture_occlusion_prob: 0.0,
    };
    let spec = chain_scene(5, 1.3, noise, 2024, true);
    let (records, gt) = generate(&spec).unwrap();
    println!(
        "scene: {} rooms, {} keyframes, hidden scale {}",
        gt.rooms.len(),
        records.len(),
        gt.true_scale
    );

    let mut config = PipelineConfig::default();
    // Admit the wall bending this noise level induces (see the RANSAC docs).
    config.ransac.max_residual = 0.08;
    let started = std::time::Instant::now();
    let run = run_pipeline(&records, &config).unwrap();
    println!(
        "\npipeline: recovered scale {:.3} in {:?}",
        run.output.scale_used,
        started.elapsed()
    );
    for room in &run.output.rooms {
        println!(
            "  room {}: {} corners, solved in {:.2}s",
            room.room_id,
            room.corners.len(),
            room.solve_seconds
        );
    }

    let report = evaluate(&run.output, &gt).unwrap();
    println!("\nevaluation:\n{}", report.to_text());
}
