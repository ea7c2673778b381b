//! Track rooms along a camera walk with a revisit.
//!
//! Feeds a four-room chain (the camera doubles back into the third room at
//! the end) through the room tracker and prints the assignment timeline plus
//! every create / re-enter / finalize event.
//!
//!     cargo run --release --example room_tracking

use floorscan::geometry::CAMERA_HEIGHT;
use floorscan::layout::project_boundary;
use floorscan::rooms::{ClipConfig, Decision, RoomTracker};
use floorscan::stream::record_to_inputs;
use floorscan::synth::{chain_scene, generate, NoiseSpec};

fn main() {
    let spec = chain_scene(4, 1.0, NoiseSpec::default(), 9, true);
    let (records, gt) = generate(&spec).unwrap();

    let mut tracker = RoomTracker::new(ClipConfig::default());
    for record in &records {
        let (pose, raw) = record_to_inputs(record).unwrap();
        let boundary = project_boundary(&raw, CAMERA_HEIGHT).unwrap();
        let step = tracker.observe(&pose, &boundary, gt.true_scale).unwrap();
        match step.decision {
            Decision::CreateNew => {
                println!("keyframe {:4}: created room {}", record.index, step.room_id)
            }
            Decision::Reenter(id) => {
                println!("keyframe {:4}: re-entered room {id}", record.index)
            }
            Decision::Stay => {}
        }
        for id in step.finalized {
            println!("keyframe {:4}: finalized room {id}", record.index);
        }
    }
    let flushed = tracker.finish();
    println!("end of stream: finalized {flushed:?}");

    // Compressed timeline: one segment per run of equal assignment.
    let history = tracker.history();
    print!("\ntimeline: ");
    let mut start = 0;
    for i in 1..=history.len() {
        if i == history.len() || history[i] != history[start] {
            print!("[{}..{}: room {}] ", start, i - 1, history[start]);
            start = i;
        }
    }
    println!();

    let correct = history
        .iter()
        .zip(&gt.room_labels)
        .filter(|(a, b)| a == b)
        .count();
    println!(
        "\n{} rooms tracked ({} in ground truth); assignment agreement {}/{} keyframes",
        tracker.rooms().len(),
        gt.rooms.len(),
        correct,
        history.len()
    );
}
