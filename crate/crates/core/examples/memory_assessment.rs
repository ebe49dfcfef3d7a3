//! Knowing where you are: assessment against a memory of labeled places.
//!
//! p_known is the kernel value of the nearest remembered environment. Once
//! it reaches the threshold, the nearest entry's label signs the score.
//!
//! ```text
//! cargo run --example memory_assessment
//! ```

use competence_core::prelude::*;

fn at(id: &str, x: f64, y: f64) -> EnvironmentDescriptor {
    EnvironmentDescriptor::new(id, vec![x, y]).unwrap()
}

fn show(name: &str, a: &Assessment) {
    let score = a
        .competence_score
        .map_or("-".to_string(), |s| format!("{s:+.4}"));
    println!(
        "{name:<18} p_known {:.4}  {:<8} score {score}",
        a.p_known,
        format!("{:?}", a.verdict)
    );
}

fn main() -> Result<()> {
    let calib = CalibrationModel::from_kernel_width(1.5, 2)?;
    let threshold = 0.5;

    let memory = CompetenceMemory::new();
    let corridor = at("corridor-start", 0.0, 0.0);
    show(
        "empty memory",
        &assess(&corridor, &memory, &calib, threshold)?,
    );

    // The operator says the corridor is fine and the lab is not.
    let memory = incorporate_feedback(
        &memory,
        &corridor,
        CompetenceLabel::Competent,
        FeedbackSource::Human,
    )?;
    let memory = incorporate_feedback(
        &memory,
        &at("lab-entry", 6.0, 0.0),
        CompetenceLabel::Incompetent,
        FeedbackSource::Human,
    )?;
    println!("memory now holds {} labeled places\n", memory.len());

    for (name, x, y) in [
        ("corridor-start", 0.0, 0.0),
        ("corridor-middle", 0.6, 0.2),
        ("lab-bench", 5.5, 0.4),
        ("stairwell", 3.0, 2.5),
    ] {
        show(name, &assess(&at(name, x, y), &memory, &calib, threshold)?);
    }

    // Half a width away, p_known is exp(-1/4).
    let half = assess(&at("half-width", 0.0, 0.75), &memory, &calib, threshold)?;
    println!(
        "\nat 0.5·S: p_known = {:.12} (e^-0.25 = {:.12})",
        half.p_known,
        (-0.25f64).exp()
    );
    Ok(())
}
