//! The corridor-then-lab drive, replayed twice.
//!
//! First pass: the robot starts with an empty memory, asks once in the
//! corridor and once at the lab entry, then proceeds through the corridor
//! and flags the lab. Second pass, with the memory persisted by the first:
//! it never asks.
//!
//! ```text
//! cargo run --example corridor_lab_replay
//! ```

use competence_core::embedding::calibrate;
use competence_core::harness::{run_episode, Mode, OracleFeedback, RunConfig};
use competence_core::memory::CompetenceLabel;
use competence_core::store::{save_calibration, save_episode};
use competence_core::synth::{
    generate_synthetic_episode, ClusterSpec, ReferenceSpec, SyntheticSpec,
};

fn main() -> competence_core::Result<()> {
    let spec = SyntheticSpec {
        clusters: vec![
            ClusterSpec {
                name: "corridor".into(),
                center: vec![0.0; 8],
                frames: 6,
                label: CompetenceLabel::Competent,
            },
            ClusterSpec {
                name: "lab".into(),
                center: [vec![10.0], vec![0.0; 7]].concat(),
                frames: 6,
                label: CompetenceLabel::Incompetent,
            },
        ],
        noise_radius: 0.1,
        reference: ReferenceSpec::default(),
    };
    let episode = generate_synthetic_episode(&spec, 42)?;
    let calib = calibrate(&episode.reference, 0.5, 1e-9)?;

    let dir = tempfile::tempdir()?;
    let episode_path = dir.path().join("episode.jsonl");
    let calib_path = dir.path().join("calibration.json");
    save_episode(&episode_path, &episode.frames)?;
    save_calibration(&calib, &calib_path)?;

    let mut config = RunConfig::new(Mode::Oracle, &episode_path, &calib_path);
    config.run_state_path = Some(dir.path().join("state.json"));

    for pass in 1..=2 {
        let report = run_episode(&config, &mut OracleFeedback)?;
        println!("pass {pass}: asked {} times", report.ask_count());
        print!("{}", report.render_table());
        println!();
    }
    Ok(())
}
