//! Solve a room polygon from evidence maps with the iterative coarse-to-fine
//! shortest-path solver.
//!
//! Builds ideal evidence for an L-shaped room, runs the default three-round
//! schedule, and contrasts the per-round corner counts with a single
//! unrestricted round and with the exhaustive oracle on a small grid.
//!
//!     cargo run --release --example room_shape

use floorscan::geometry::{RoomPolygon, Vec2};
use floorscan::shape::{oracle_shortest_cycle, solve_room, IspaSchedule, SpaWeights};
use floorscan::synth::ideal_evidence;

fn main() {
    let l_room = RoomPolygon::new(
        vec![
            Vec2::new(0.03, 0.02),
            Vec2::new(4.03, 0.02),
            Vec2::new(4.03, 2.02),
            Vec2::new(2.03, 2.02),
            Vec2::new(2.03, 4.02),
            Vec2::new(0.03, 4.02),
        ],
        0,
    )
    .unwrap();
    let evidence = ideal_evidence(&l_room, 0.1, 120);
    let weights = SpaWeights::default();

    println!("iterative schedule (grids 64 / 96 / 96):");
    let report = solve_room(&evidence, &weights, &IspaSchedule::default()).unwrap();
    for (i, round) in report.rounds.iter().enumerate() {
        println!(
            "  round {}: grid {:3}  {:5} nodes  {:7} edges  {:2} corners  cost {:8.2}  {:?}",
            i + 1,
            round.grid_size,
            round.node_count,
            round.edge_count,
            round.corner_count,
            round.cycle_cost,
            round.elapsed
        );
    }
    println!("  final polygon ({} corners):", report.polygon.corners().len());
    for c in report.polygon.corners() {
        println!("    ({:+.3}, {:+.3})", c.x, c.y);
    }

    // The same room on a small grid, solved exhaustively and by a single
    // unrestricted round: the cycle costs must agree.
    let oracle = oracle_shortest_cycle(&evidence, &weights, 20).unwrap();
    let single = solve_room(&evidence, &weights, &IspaSchedule::single_unrestricted(20)).unwrap();
    println!(
        "\noracle at grid 20: cost {:.6} with {} corners; unrestricted single round: cost {:.6}",
        oracle.cost,
        oracle.cells.len(),
        single.rounds[0].cycle_cost
    );
}
