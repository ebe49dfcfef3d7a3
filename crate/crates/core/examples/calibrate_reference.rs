//! Calibrating the kernel width on a reference collection.
//!
//! The width S is chosen so that, on average, an environment's nearest
//! neighbor in the reference is "half known": mean exp(-d²/S²) = 0.5.
//!
//! ```text
//! cargo run --example calibrate_reference
//! ```

use competence_core::embedding::{calibrate, mean_kernel, nn_distances, EnvironmentDescriptor};
use competence_core::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn line(points: &[f64]) -> Vec<EnvironmentDescriptor> {
    points
        .iter()
        .enumerate()
        .map(|(i, &x)| EnvironmentDescriptor::new(format!("p{i}"), vec![x]).unwrap())
        .collect()
}

fn main() -> Result<()> {
    // Three points on a line: nearest-neighbor distances 1, 1 and 2.
    let three = line(&[0.0, 1.0, 3.0]);
    let model = calibrate(&three, 0.5, 1e-9)?;
    println!("{{0, 1, 3}}      S* = {:.10}", model.kernel_width());

    // Two points: the width is d / sqrt(ln 2).
    let pair = line(&[0.0, 2.0]);
    let model = calibrate(&pair, 0.5, 1e-9)?;
    println!(
        "{{0, 2}}         S* = {:.10}  (2/sqrt(ln 2) = {:.10})",
        model.kernel_width(),
        2.0 / std::f64::consts::LN_2.sqrt()
    );

    // A random 32-d reference, and how the width moves with the target.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let reference: Vec<_> = (0..150)
        .map(|i| {
            let v = (0..32).map(|_| StandardNormal.sample(&mut rng)).collect();
            EnvironmentDescriptor::new(format!("r{i}"), v).unwrap()
        })
        .collect();
    let nn = nn_distances(&reference)?;
    for target in [0.25, 0.5, 0.75] {
        let model = calibrate(&reference, target, 1e-9)?;
        println!(
            "random 32-d, target {target:.2}: S* = {:.6}, achieved mean {:.12}",
            model.kernel_width(),
            mean_kernel(&nn, model.kernel_width())?
        );
    }

    // Duplicates make most nearest-neighbor distances zero; that reference is refused.
    let dupes = line(&[1.0, 1.0, 1.0, 5.0]);
    match calibrate(&dupes, 0.5, 1e-9) {
        Ok(m) => println!("unexpected width {}", m.kernel_width()),
        Err(e) => println!("duplicates: {e}"),
    }
    Ok(())
}
