//! Seeded synthetic drives: clustered episodes standing in for a robot
//! passing through a few environment types, plus a reference collection for
//! calibration drawn from the same clusters.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embedding::EnvironmentDescriptor;
use crate::error::{Error, Result};
use crate::memory::CompetenceLabel;
use crate::store::EpisodeFrame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub name: String,
    pub center: Vec<f64>,
    pub frames: usize,
    pub label: CompetenceLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    /// Reference points drawn around each cluster center.
    pub per_cluster: usize,
    /// Radius of the ball the reference points are drawn from.
    pub radius: f64,
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        Self {
            per_cluster: 16,
            radius: 1.0,
        }
    }
}

/// Input to [`generate_synthetic_episode`]. Clusters are visited in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub clusters: Vec<ClusterSpec>,
    pub noise_radius: f64,
    #[serde(default)]
    pub reference: ReferenceSpec,
}

impl SyntheticSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidSpec(e.to_string()).in_file(path))
    }

    fn validate(&self) -> Result<usize> {
        let invalid = |msg: String| Err(Error::InvalidSpec(msg));
        let Some(first) = self.clusters.first() else {
            return invalid("no clusters".into());
        };
        let dim = first.center.len();
        if dim == 0 {
            return invalid("empty cluster center".into());
        }
        for c in &self.clusters {
            if c.center.len() != dim {
                return invalid(format!(
                    "cluster {:?} has dimension {}, expected {dim}",
                    c.name,
                    c.center.len()
                ));
            }
            if c.center.iter().any(|x| !x.is_finite()) {
                return invalid(format!("cluster {:?} has a non-finite center", c.name));
            }
            if c.frames == 0 {
                return invalid(format!("cluster {:?} has no frames", c.name));
            }
        }
        if !(self.noise_radius >= 0.0 && self.noise_radius.is_finite()) {
            return invalid(format!("noise radius {} out of range", self.noise_radius));
        }
        if !(self.reference.radius >= 0.0 && self.reference.radius.is_finite()) {
            return invalid(format!(
                "reference radius {} out of range",
                self.reference.radius
            ));
        }
        Ok(dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEpisode {
    pub frames: Vec<EpisodeFrame>,
    /// Labeled with the cluster name, so it also serves as an atlas.
    pub reference: Vec<EnvironmentDescriptor>,
}

/// Uniform sample from the closed ball of `radius` around `center`.
fn sample_ball(rng: &mut ChaCha8Rng, center: &[f64], radius: f64) -> Vec<f64> {
    if radius == 0.0 {
        return center.to_vec();
    }
    let dir: Vec<f64> = center.iter().map(|_| rng.sample(StandardNormal)).collect();
    let norm = dir.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / center.len() as f64);
    if norm == 0.0 {
        return center.to_vec();
    }
    center
        .iter()
        .zip(&dir)
        .map(|(c, d)| c + r * d / norm)
        .collect()
}

/// Generates the episode and the calibration reference for a fixed seed.
///
/// Frames are cluster centers plus uniform noise within `noise_radius`, each
/// carrying its cluster's ground-truth label. Output is identical for
/// identical `(spec, seed)`.
pub fn generate_synthetic_episode(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticEpisode> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut frames = Vec::new();
    for cluster in &spec.clusters {
        for k in 0..cluster.frames {
            let vector = sample_ball(&mut rng, &cluster.center, spec.noise_radius);
            frames.push(EpisodeFrame {
                frame_index: frames.len() as u64,
                descriptor: EnvironmentDescriptor::new(format!("{}-{k:03}", cluster.name), vector)?,
                ground_truth_competence: Some(cluster.label),
            });
        }
    }

    let mut reference = Vec::new();
    for cluster in &spec.clusters {
        for k in 0..spec.reference.per_cluster {
            let vector = sample_ball(&mut rng, &cluster.center, spec.reference.radius);
            reference.push(
                EnvironmentDescriptor::new(format!("ref-{}-{k:03}", cluster.name), vector)?
                    .with_label(cluster.name.clone()),
            );
        }
    }

    Ok(SyntheticEpisode { frames, reference })
}
