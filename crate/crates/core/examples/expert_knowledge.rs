//! Reasoning from prior knowledge instead of experience.
//!
//! A statement such as `incompetent:nature` is matched against a labeled
//! atlas of scenes: each atlas scene contributes visual similarity to the
//! query times word-vector similarity between its label and the concept.
//!
//! ```text
//! cargo run --example expert_knowledge
//! ```

use competence_core::prelude::*;

fn main() -> Result<()> {
    let lexicon: SemanticLexicon = [
        ("nature", vec![1.0, 0.0, 0.1]),
        ("forest", vec![0.9, 0.1, 0.0]),
        ("park", vec![0.8, 0.3, 0.1]),
        ("office", vec![0.0, 1.0, 0.2]),
        ("desk", vec![0.1, 0.9, 0.3]),
    ]
    .into_iter()
    .collect();

    let place = |id: &str, label: &str, v: [f64; 2]| {
        EnvironmentDescriptor::new(id, v.to_vec())
            .unwrap()
            .with_label(label)
    };
    let atlas = ReferenceAtlas::new(vec![
        place("forest-trail", "forest", [0.0, 0.0]),
        place("city-park", "park", [1.0, 0.5]),
        place("open-office", "office", [6.0, 6.0]),
        place("computer-desk", "desk", [6.5, 5.5]),
    ])?;
    let calib = CalibrationModel::from_kernel_width(1.2, 2)?;
    let statements: Vec<KnowledgeStatement> = ["incompetent:nature", "competent:office"]
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_>>()?;

    for (name, v) in [
        ("near the park", [1.2, 0.8]),
        ("at a desk", [6.3, 5.8]),
        ("in between", [3.5, 3.0]),
    ] {
        let query = EnvironmentDescriptor::new(name, v.to_vec())?;
        let e = assess_expert(&query, &atlas, &statements, &lexicon, &calib)?;
        println!(
            "{name}: p_incompetent {:.3}, p_competent {:.3}",
            e.p_incompetent, e.p_competent
        );
        for s in &e.per_statement {
            println!(
                "    {:<20} {:.3} via {}",
                s.statement.to_string(),
                s.score,
                s.witness
            );
        }
    }
    Ok(())
}
