//! The terminal feedback loop, fed from a canned transcript.
//!
//! Swap the `Cursor` for `InteractiveFeedback::stdio()` to answer yourself.
//!
//! ```text
//! cargo run --example interactive_feedback
//! ```

use std::io::Cursor;

use competence_core::harness::{replay, InteractiveFeedback, ReplaySession};
use competence_core::prelude::*;
use competence_core::store::EpisodeFrame;

fn main() -> Result<()> {
    let frames: Vec<EpisodeFrame> = [[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 4.9], [0.0, 0.2]]
        .iter()
        .enumerate()
        .map(|(i, v)| {
            Ok(EpisodeFrame {
                frame_index: i as u64,
                descriptor: EnvironmentDescriptor::new(format!("frame-{i}"), v.to_vec())?
                    .with_image_ref(format!("frames/{i:04}.jpg")),
                ground_truth_competence: None,
            })
        })
        .collect::<Result<_>>()?;

    // "maybe" is rejected and re-prompted; answers are case-insensitive.
    let transcript = Cursor::new("C\nmaybe\ni\n");
    let mut operator = InteractiveFeedback::new(transcript, std::io::stdout());
    let calib = CalibrationModel::from_kernel_width(1.0, 2)?;
    let mut session = ReplaySession::new(calib, CompetenceMemory::new(), 0.5)?;
    let report = replay(&mut session, &frames, &mut operator)?;
    println!();
    print!("{}", report.render_table());
    Ok(())
}
