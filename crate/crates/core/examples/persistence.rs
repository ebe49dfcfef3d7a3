//! Saving and restoring a run: calibration plus the labeled memory.
//!
//! Reals are written with 17 significant digits, so a restored run assesses
//! every query bit-for-bit like the original.
//!
//! ```text
//! cargo run --example persistence
//! ```

use competence_core::prelude::*;
use competence_core::store::{load_run, save_run};

fn main() -> Result<()> {
    let reference: Vec<_> = (0..10)
        .map(|i| {
            let x = i as f64;
            EnvironmentDescriptor::new(format!("r{i}"), vec![x.sin(), (x / 3.0).cos(), x / 7.0])
        })
        .collect::<Result<_>>()?;
    let calib = calibrate(&reference, 0.5, 1e-9)?.with_provenance("reference", "example");

    let mut memory = CompetenceMemory::new();
    for (i, label) in [CompetenceLabel::Competent, CompetenceLabel::Incompetent]
        .into_iter()
        .enumerate()
    {
        let seen =
            EnvironmentDescriptor::new(format!("seen-{i}"), vec![0.1 * i as f64, 1.0 / 3.0, 0.7])?;
        memory = incorporate_feedback(&memory, &seen, label, FeedbackSource::Human)?;
    }
    let run = StoredRun::new(calib, memory)?;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("state.json");
    save_run(&run, &path)?;
    let restored = load_run(&path)?;

    let query = EnvironmentDescriptor::new("q", vec![0.05, 0.3, 0.69])?;
    let before = assess(&query, &run.memory, &run.calibration, 0.5)?;
    let after = assess(&query, &restored.memory, &restored.calibration, 0.5)?;
    println!("{}", std::fs::read_to_string(&path)?);
    println!("identical run: {}", restored == run);
    println!(
        "p_known {:e} before, {:e} after, same bits: {}",
        before.p_known,
        after.p_known,
        before.p_known.to_bits() == after.p_known.to_bits()
    );
    Ok(())
}
