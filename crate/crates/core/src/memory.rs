//! Competence assessment without prior knowledge.
//!
//! The agent keeps a memory of environments a human (or oracle) has labeled
//! competent or incompetent. A new view is "known" when its nearest memory
//! entry is close under the calibrated kernel; the signed competence score
//! then takes the magnitude of `p_known` and the sign of that entry's label.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::{nearest_in, CalibrationModel, EnvironmentDescriptor};
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompetenceLabel {
    Competent,
    Incompetent,
}

impl CompetenceLabel {
    /// +1 for competent, -1 for incompetent.
    pub fn sign(self) -> f64 {
        match self {
            CompetenceLabel::Competent => 1.0,
            CompetenceLabel::Incompetent => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CompetenceLabel::Competent => "competent",
            CompetenceLabel::Incompetent => "incompetent",
        }
    }
}

impl fmt::Display for CompetenceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CompetenceLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "competent" => Ok(CompetenceLabel::Competent),
            "incompetent" => Ok(CompetenceLabel::Incompetent),
            other => Err(format!(
                "expected \"competent\" or \"incompetent\", got {other:?}"
            )),
        }
    }
}

/// Who supplied a competence label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackSource {
    Human,
    Oracle,
}

impl fmt::Display for FeedbackSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeedbackSource::Human => "human",
            FeedbackSource::Oracle => "oracle",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry {
    descriptor: EnvironmentDescriptor,
    label: CompetenceLabel,
    source: FeedbackSource,
    sequence: u64,
}

impl MemoryEntry {
    pub fn descriptor(&self) -> &EnvironmentDescriptor {
        &self.descriptor
    }

    pub fn label(&self) -> CompetenceLabel {
        self.label
    }

    pub fn source(&self) -> FeedbackSource {
        self.source
    }

    pub fn sequence(&self) -> u64 {
        self.sequence
    }
}

/// Labeled environments seen so far, in insertion order.
///
/// Updates go through [`incorporate_feedback`], which returns a new memory
/// and leaves the old one untouched.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompetenceMemory {
    entries: Vec<MemoryEntry>,
    dimension: Option<usize>,
}

impl CompetenceMemory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a memory from stored entries, checking dimension and sequence order.
    pub fn from_entries(
        entries: impl IntoIterator<Item = (EnvironmentDescriptor, CompetenceLabel, FeedbackSource, u64)>,
    ) -> Result<Self> {
        let mut memory = Self::new();
        for (descriptor, label, source, sequence) in entries {
            memory.check_dimension(descriptor.dimension())?;
            if let Some(last) = memory.entries.last() {
                if sequence <= last.sequence {
                    return Err(Error::MalformedDocument(format!(
                        "memory sequence {sequence} does not follow {}",
                        last.sequence
                    )));
                }
            }
            memory.dimension = Some(descriptor.dimension());
            memory.entries.push(MemoryEntry {
                descriptor,
                label,
                source,
                sequence,
            });
        }
        Ok(memory)
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Fixed by the first insertion; `None` while empty.
    pub fn dimension(&self) -> Option<usize> {
        self.dimension
    }

    fn next_sequence(&self) -> u64 {
        self.entries.last().map_or(0, |e| e.sequence + 1)
    }

    fn check_dimension(&self, found: usize) -> Result<()> {
        match self.dimension {
            Some(expected) if expected != found => {
                Err(Error::DimensionMismatch { expected, found })
            }
            _ => Ok(()),
        }
    }

    /// Nearest entry to `query`; equidistant entries resolve to the lowest sequence.
    pub fn nearest(&self, query: &EnvironmentDescriptor) -> Result<Option<(&MemoryEntry, f64)>> {
        self.check_dimension(query.dimension())?;
        let found = nearest_in(
            query.vector(),
            self.entries
                .iter()
                .enumerate()
                .map(|(i, e)| (i, e.descriptor.vector())),
        )?;
        Ok(found.map(|(i, d)| (&self.entries[i], d)))
    }
}

/// Probability that `query` resembles a remembered environment.
///
/// Zero for an empty memory, otherwise the kernel of the distance to the
/// nearest entry.
pub fn p_known(
    query: &EnvironmentDescriptor,
    memory: &CompetenceMemory,
    calib: &CalibrationModel,
) -> Result<f64> {
    calib.check_dimension(query.dimension())?;
    Ok(memory
        .nearest(query)?
        .map_or(0.0, |(_, d)| calib.similarity(d)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Unknown,
    Known,
}

/// Which memory entry an assessment was based on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NearestEntry {
    pub sequence: u64,
    pub distance: f64,
    pub label: CompetenceLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub p_known: f64,
    pub threshold: f64,
    pub verdict: Verdict,
    /// Signed competence in [-1, 1]; absent when the environment is unknown.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub competence_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub nearest: Option<NearestEntry>,
}

impl Assessment {
    pub fn is_known(&self) -> bool {
        self.verdict == Verdict::Known
    }
}

pub(crate) fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidThreshold(threshold))
    }
}

/// Decides known/unknown at `threshold` and, when known, scores competence.
pub fn assess(
    query: &EnvironmentDescriptor,
    memory: &CompetenceMemory,
    calib: &CalibrationModel,
    threshold: f64,
) -> Result<Assessment> {
    check_threshold(threshold)?;
    calib.check_dimension(query.dimension())?;
    let nearest = memory.nearest(query)?;
    let p_known = nearest.map_or(0.0, |(_, d)| calib.similarity(d));
    let verdict = if p_known >= threshold {
        Verdict::Known
    } else {
        Verdict::Unknown
    };
    let competence_score = match (verdict, nearest) {
        (Verdict::Known, Some((entry, _))) => Some(entry.label.sign() * p_known),
        _ => None,
    };
    Ok(Assessment {
        p_known,
        threshold,
        verdict,
        competence_score,
        nearest: nearest.map(|(entry, distance)| NearestEntry {
            sequence: entry.sequence,
            distance,
            label: entry.label,
        }),
    })
}

/// Returns a copy of `memory` with one labeled entry appended.
pub fn incorporate_feedback(
    memory: &CompetenceMemory,
    query: &EnvironmentDescriptor,
    label: CompetenceLabel,
    source: FeedbackSource,
) -> Result<CompetenceMemory> {
    memory.check_dimension(query.dimension())?;
    let mut next = memory.clone();
    next.entries.push(MemoryEntry {
        descriptor: query.clone(),
        label,
        source,
        sequence: memory.next_sequence(),
    });
    next.dimension = Some(query.dimension());
    Ok(next)
}
