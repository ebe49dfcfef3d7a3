//! Generating a seeded two-cluster episode and its calibration reference.
//!
//! ```text
//! cargo run --example synthetic_episode -- [output-dir]
//! ```
//!
//! With an output directory, writes `episode.jsonl` and `reference.jsonl`
//! there, ready for `competence calibrate` and `competence run`.

use competence_core::embedding::distance;
use competence_core::memory::CompetenceLabel;
use competence_core::store::{save_embeddings, save_episode};
use competence_core::synth::{
    generate_synthetic_episode, ClusterSpec, ReferenceSpec, SyntheticSpec,
};

fn main() -> competence_core::Result<()> {
    let spec = SyntheticSpec {
        clusters: vec![
            ClusterSpec {
                name: "corridor".into(),
                center: vec![0.0; 8],
                frames: 10,
                label: CompetenceLabel::Competent,
            },
            ClusterSpec {
                name: "lab".into(),
                center: [vec![10.0], vec![0.0; 7]].concat(),
                frames: 10,
                label: CompetenceLabel::Incompetent,
            },
        ],
        noise_radius: 0.1,
        reference: ReferenceSpec {
            per_cluster: 16,
            radius: 1.0,
        },
    };
    let episode = generate_synthetic_episode(&spec, 42)?;

    let (mut intra, mut inter) = (0.0_f64, f64::INFINITY);
    for a in &episode.frames {
        for b in &episode.frames {
            let d = distance(&a.descriptor, &b.descriptor)?;
            if a.ground_truth_competence == b.ground_truth_competence {
                intra = intra.max(d);
            } else {
                inter = inter.min(d);
            }
        }
    }
    println!(
        "{} frames, {} reference entries",
        episode.frames.len(),
        episode.reference.len()
    );
    println!(
        "largest intra-cluster distance {intra:.4}, smallest inter-cluster distance {inter:.4}"
    );
    for f in episode.frames.iter().step_by(5) {
        println!(
            "  frame {:>2} {:<13} {:?}",
            f.frame_index,
            f.descriptor.id(),
            f.ground_truth_competence.unwrap()
        );
    }

    if let Some(dir) = std::env::args().nth(1) {
        let dir = std::path::Path::new(&dir);
        std::fs::create_dir_all(dir)?;
        save_episode(dir.join("episode.jsonl"), &episode.frames)?;
        save_embeddings(dir.join("reference.jsonl"), &episode.reference)?;
        println!("wrote {}/episode.jsonl and reference.jsonl", dir.display());
    }
    Ok(())
}
