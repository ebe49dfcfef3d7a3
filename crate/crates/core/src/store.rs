//! Loading and saving embedding collections, word vectors, episodes,
//! calibrations and run state.
//!
//! Formats:
//!
//! * embedding collections and episodes: JSON Lines, one record per line
//!   (`{"id", "vector", "label"?, "image_ref"?}`; episodes add
//!   `"frame_index"` and `"ground_truth_competence"?`);
//! * word vectors: word2vec text, with an optional `"<count> <dim>"` header;
//! * calibration and run state: one JSON document with a `format_version`.
//!
//! Loaders reject malformed input with the 1-based line number instead of
//! repairing it. Blank lines are skipped. Reals are written with 17
//! significant digits so they parse back to the same bits.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use serde_json::Value;

use crate::embedding::{CalibrationModel, EnvironmentDescriptor, Provenance};
use crate::error::{Error, Result};
use crate::knowledge::SemanticLexicon;
use crate::memory::{CompetenceLabel, CompetenceMemory, FeedbackSource};

pub const FORMAT_VERSION: u32 = 1;

/// Formats a real with 17 significant digits.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) mod real17 {
    use super::*;
    use serde::Serializer;

    fn raw(x: f64) -> Box<RawValue> {
        RawValue::from_string(format_real(x)).expect("formatted real is valid JSON")
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        raw(*x).serialize(s)
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(xs.iter().map(|&x| raw(x)))
        }
    }
}

/// One camera moment of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeFrame {
    pub frame_index: u64,
    pub descriptor: EnvironmentDescriptor,
    /// Only consulted by the oracle feedback provider.
    pub ground_truth_competence: Option<CompetenceLabel>,
}

/// Calibration plus memory, persisted between runs.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredRun {
    pub calibration: CalibrationModel,
    pub memory: CompetenceMemory,
    pub format_version: u32,
}

impl StoredRun {
    pub fn new(calibration: CalibrationModel, memory: CompetenceMemory) -> Result<Self> {
        if let Some(dim) = memory.dimension() {
            calibration.check_dimension(dim)?;
        }
        Ok(Self {
            calibration,
            memory,
            format_version: FORMAT_VERSION,
        })
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::from(e).in_file(path))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::from(e).in_file(path))
}

/// Calls `f` with (1-based line number, line) for every non-blank line.
fn for_each_line(reader: impl BufRead, mut f: impl FnMut(usize, &str) -> Result<()>) -> Result<()> {
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        f(i + 1, &line)?;
    }
    Ok(())
}

fn malformed(line: usize, reason: impl ToString) -> Error {
    Error::MalformedRecord {
        line,
        reason: reason.to_string(),
    }
}

/// Whether a line that failed JSON parsing contains a non-finite numeric
/// literal such as `NaN` or `Infinity`.
fn mentions_non_finite(line: &str) -> bool {
    line.split(|c: char| !c.is_ascii_alphanumeric())
        .any(|t| matches!(t.to_ascii_lowercase().as_str(), "nan" | "inf" | "infinity"))
}

fn parse_record<T: for<'de> Deserialize<'de>>(line_no: usize, line: &str) -> Result<T> {
    serde_json::from_str(line).map_err(|e| {
        if mentions_non_finite(line) || e.to_string().contains("number out of range") {
            Error::NonFiniteValue { line: line_no }
        } else {
            malformed(line_no, e)
        }
    })
}

fn parse_vector(line: usize, raw: &[Value]) -> Result<Vec<f64>> {
    raw.iter()
        .map(|v| match v {
            Value::Number(n) => n.as_f64().ok_or_else(|| malformed(line, "bad number")),
            Value::String(s) => match s.trim().parse::<f64>() {
                Ok(x) if !x.is_finite() => Err(Error::NonFiniteValue { line }),
                _ => Err(malformed(
                    line,
                    format!("vector element {s:?} is not a number"),
                )),
            },
            other => Err(malformed(
                line,
                format!("vector element {other} is not a number"),
            )),
        })
        .collect()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbeddingRecordIn {
    id: String,
    vector: Vec<Value>,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    image_ref: Option<String>,
}

#[derive(Serialize)]
struct EmbeddingRecordOut<'a> {
    id: &'a str,
    #[serde(with = "real17::vec")]
    vector: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_ref: Option<&'a str>,
}

impl<'a> From<&'a EnvironmentDescriptor> for EmbeddingRecordOut<'a> {
    fn from(d: &'a EnvironmentDescriptor) -> Self {
        Self {
            id: d.id(),
            vector: d.vector(),
            label: d.label(),
            image_ref: d.image_ref(),
        }
    }
}

fn build_descriptor(
    line: usize,
    id: String,
    raw: &[Value],
    label: Option<String>,
    image_ref: Option<String>,
) -> Result<EnvironmentDescriptor> {
    let vector = parse_vector(line, raw)?;
    if vector.is_empty() {
        return Err(malformed(line, "empty vector"));
    }
    let mut d = EnvironmentDescriptor::new(id, vector).map_err(|e| malformed(line, e))?;
    if let Some(label) = label {
        d = d.with_label(label);
    }
    if let Some(image_ref) = image_ref {
        d = d.with_image_ref(image_ref);
    }
    Ok(d)
}

/// Tracks uniform dimension across records.
#[derive(Default)]
struct DimensionGuard(Option<usize>);

impl DimensionGuard {
    fn check(&mut self, line: usize, found: usize) -> Result<()> {
        match self.0 {
            Some(expected) if expected != found => Err(Error::DimensionMismatchAt {
                line,
                expected,
                found,
            }),
            _ => {
                self.0 = Some(found);
                Ok(())
            }
        }
    }
}

pub fn read_embeddings(reader: impl BufRead) -> Result<Vec<EnvironmentDescriptor>> {
    let mut out = Vec::new();
    let mut dims = DimensionGuard::default();
    let mut seen = HashSet::new();
    for_each_line(reader, |line, text| {
        let rec: EmbeddingRecordIn = parse_record(line, text)?;
        dims.check(line, rec.vector.len())?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId { line, id: rec.id });
        }
        out.push(build_descriptor(
            line,
            rec.id,
            &rec.vector,
            rec.label,
            rec.image_ref,
        )?);
        Ok(())
    })?;
    Ok(out)
}

/// Loads a JSON Lines embedding collection.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Vec<EnvironmentDescriptor>> {
    let path = path.as_ref();
    read_embeddings(open(path)?).map_err(|e| e.in_file(path))
}

pub fn write_embeddings(mut w: impl Write, items: &[EnvironmentDescriptor]) -> Result<()> {
    for d in items {
        serde_json::to_writer(&mut w, &EmbeddingRecordOut::from(d))
            .map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_embeddings(path: impl AsRef<Path>, items: &[EnvironmentDescriptor]) -> Result<()> {
    let path = path.as_ref();
    write_embeddings(create(path)?, items).map_err(|e| e.in_file(path))
}

fn is_integer(token: &str) -> bool {
    !token.is_empty() && token.parse::<u64>().is_ok()
}

/// Parses word2vec text vectors. A first line of exactly two integer tokens
/// is taken as the `count dim` header. Later duplicates overwrite earlier ones.
pub fn read_word_vectors(reader: impl BufRead) -> Result<SemanticLexicon> {
    let mut lexicon: Option<SemanticLexicon> = None;
    let mut first = true;
    let mut declared_dim: Option<usize> = None;
    for_each_line(reader, |line, text| {
        let fields: Vec<&str> = text.split_whitespace().collect();
        if std::mem::take(&mut first) && fields.len() == 2 && fields.iter().all(|t| is_integer(t)) {
            declared_dim = Some(fields[1].parse().map_err(|e| malformed(line, e))?);
            return Ok(());
        }
        let (token, coords) = fields
            .split_first()
            .ok_or_else(|| malformed(line, "empty record"))?;
        if coords.is_empty() {
            return Err(malformed(line, "token without vector"));
        }
        let vector = coords
            .iter()
            .map(|c| {
                c.parse::<f64>()
                    .map_err(|_| malformed(line, format!("{c:?} is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let lex = lexicon
            .get_or_insert_with(|| SemanticLexicon::new(declared_dim.unwrap_or(vector.len())));
        if vector.len() != lex.dimension() {
            return Err(Error::DimensionMismatchAt {
                line,
                expected: lex.dimension(),
                found: vector.len(),
            });
        }
        lex.insert(token, vector).map_err(|e| malformed(line, e))
    })?;
    match lexicon {
        Some(l) if !l.is_empty() => Ok(l),
        _ => Err(Error::EmptyLexicon),
    }
}

pub fn load_word_vectors(path: impl AsRef<Path>) -> Result<SemanticLexicon> {
    let path = path.as_ref();
    read_word_vectors(open(path)?).map_err(|e| e.in_file(path))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecordIn {
    frame_index: u64,
    id: String,
    vector: Vec<Value>,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    image_ref: Option<String>,
    #[serde(default)]
    ground_truth_competence: Option<CompetenceLabel>,
}

#[derive(Serialize)]
struct FrameRecordOut<'a> {
    frame_index: u64,
    id: &'a str,
    #[serde(with = "real17::vec")]
    vector: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_ref: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ground_truth_competence: Option<CompetenceLabel>,
}

pub fn read_episode(reader: impl BufRead) -> Result<Vec<EpisodeFrame>> {
    let mut out: Vec<EpisodeFrame> = Vec::new();
    let mut dims = DimensionGuard::default();
    for_each_line(reader, |line, text| {
        let rec: FrameRecordIn = parse_record(line, text)?;
        if let Some(prev) = out.last() {
            if rec.frame_index <= prev.frame_index {
                return Err(Error::NonMonotoneFrameIndex {
                    line,
                    previous: prev.frame_index,
                    found: rec.frame_index,
                });
            }
        }
        dims.check(line, rec.vector.len())?;
        let descriptor = build_descriptor(line, rec.id, &rec.vector, rec.label, rec.image_ref)?;
        out.push(EpisodeFrame {
            frame_index: rec.frame_index,
            descriptor,
            ground_truth_competence: rec.ground_truth_competence,
        });
        Ok(())
    })?;
    Ok(out)
}

/// Loads a JSON Lines episode; frame indices must strictly increase.
pub fn load_episode(path: impl AsRef<Path>) -> Result<Vec<EpisodeFrame>> {
    let path = path.as_ref();
    read_episode(open(path)?).map_err(|e| e.in_file(path))
}

pub fn write_episode(mut w: impl Write, frames: &[EpisodeFrame]) -> Result<()> {
    for f in frames {
        let d = &f.descriptor;
        let rec = FrameRecordOut {
            frame_index: f.frame_index,
            id: d.id(),
            vector: d.vector(),
            label: d.label(),
            image_ref: d.image_ref(),
            ground_truth_competence: f.ground_truth_competence,
        };
        serde_json::to_writer(&mut w, &rec).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_episode(path: impl AsRef<Path>, frames: &[EpisodeFrame]) -> Result<()> {
    let path = path.as_ref();
    write_episode(create(path)?, frames).map_err(|e| e.in_file(path))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationDoc {
    #[serde(serialize_with = "real17::serialize")]
    kernel_width: f64,
    dimension: usize,
    reference_count: usize,
    #[serde(serialize_with = "real17::serialize")]
    mean_target: f64,
    #[serde(serialize_with = "real17::serialize")]
    solver_tolerance: f64,
    #[serde(default)]
    provenance: Provenance,
}

impl From<&CalibrationModel> for CalibrationDoc {
    fn from(c: &CalibrationModel) -> Self {
        Self {
            kernel_width: c.kernel_width(),
            dimension: c.dimension(),
            reference_count: c.reference_count(),
            mean_target: c.mean_target(),
            solver_tolerance: c.solver_tolerance(),
            provenance: c.provenance().clone(),
        }
    }
}

impl CalibrationDoc {
    fn into_model(self) -> Result<CalibrationModel> {
        CalibrationModel::from_parts(
            self.kernel_width,
            self.dimension,
            self.reference_count,
            self.mean_target,
            self.solver_tolerance,
            self.provenance,
        )
        .map_err(|e| Error::MalformedDocument(format!("calibration: {e}")))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MemoryEntryDoc {
    id: String,
    #[serde(serialize_with = "real17::vec::serialize")]
    vector: Vec<f64>,
    label: CompetenceLabel,
    source: FeedbackSource,
    sequence: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scene_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image_ref: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MemoryDoc {
    dimension: Option<usize>,
    entries: Vec<MemoryEntryDoc>,
}

#[derive(Serialize, Deserialize)]
struct RunDoc {
    format_version: u32,
    calibration: CalibrationDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    memory: Option<MemoryDoc>,
}

fn memory_doc(memory: &CompetenceMemory) -> MemoryDoc {
    MemoryDoc {
        dimension: memory.dimension(),
        entries: memory
            .entries()
            .iter()
            .map(|e| MemoryEntryDoc {
                id: e.descriptor().id().to_string(),
                vector: e.descriptor().vector().to_vec(),
                label: e.label(),
                source: e.source(),
                sequence: e.sequence(),
                scene_label: e.descriptor().label().map(str::to_string),
                image_ref: e.descriptor().image_ref().map(str::to_string),
            })
            .collect(),
    }
}

fn memory_from_doc(doc: MemoryDoc) -> Result<CompetenceMemory> {
    let entries = doc
        .entries
        .into_iter()
        .map(|e| {
            let mut d = EnvironmentDescriptor::new(e.id, e.vector)
                .map_err(|err| Error::MalformedDocument(err.to_string()))?;
            if let Some(l) = e.scene_label {
                d = d.with_label(l);
            }
            if let Some(r) = e.image_ref {
                d = d.with_image_ref(r);
            }
            Ok((d, e.label, e.source, e.sequence))
        })
        .collect::<Result<Vec<_>>>()?;
    let memory = CompetenceMemory::from_entries(entries)
        .map_err(|e| Error::MalformedDocument(format!("memory: {e}")))?;
    if memory.dimension().is_some() && memory.dimension() != doc.dimension {
        return Err(Error::MalformedDocument(format!(
            "memory dimension {:?} does not match its entries ({:?})",
            doc.dimension,
            memory.dimension()
        )));
    }
    Ok(memory)
}

fn read_run_doc(reader: impl std::io::Read) -> Result<RunDoc> {
    let value: Value =
        serde_json::from_reader(reader).map_err(|e| Error::MalformedDocument(e.to_string()))?;
    let version = value
        .get("format_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::MalformedDocument("missing format_version".into()))?;
    if version != u64::from(FORMAT_VERSION) {
        return Err(Error::UnsupportedVersion(
            version.try_into().unwrap_or(u32::MAX),
        ));
    }
    serde_json::from_value(value).map_err(|e| Error::MalformedDocument(e.to_string()))
}

fn write_doc(mut w: impl Write, doc: &RunDoc) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, doc).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_run(w: impl Write, run: &StoredRun) -> Result<()> {
    write_doc(
        w,
        &RunDoc {
            format_version: run.format_version,
            calibration: CalibrationDoc::from(&run.calibration),
            memory: Some(memory_doc(&run.memory)),
        },
    )
}

pub fn read_run(reader: impl std::io::Read) -> Result<StoredRun> {
    let doc = read_run_doc(reader)?;
    let calibration = doc.calibration.into_model()?;
    let memory = memory_from_doc(
        doc.memory
            .ok_or_else(|| Error::MalformedDocument("missing memory".into()))?,
    )?;
    StoredRun::new(calibration, memory).map_err(|e| Error::MalformedDocument(e.to_string()))
}

pub fn save_run(run: &StoredRun, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_run(create(path)?, run).map_err(|e| e.in_file(path))
}

pub fn load_run(path: impl AsRef<Path>) -> Result<StoredRun> {
    let path = path.as_ref();
    read_run(open(path)?).map_err(|e| e.in_file(path))
}

/// Writes a calibration-only document (a run document without memory).
pub fn save_calibration(calibration: &CalibrationModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let doc = RunDoc {
        format_version: FORMAT_VERSION,
        calibration: CalibrationDoc::from(calibration),
        memory: None,
    };
    write_doc(create(path)?, &doc).map_err(|e| e.in_file(path))
}

/// Reads the calibration from a calibration or run document.
pub fn load_calibration(path: impl AsRef<Path>) -> Result<CalibrationModel> {
    let path = path.as_ref();
    read_run_doc(open(path)?)
        .and_then(|doc| doc.calibration.into_model())
        .map_err(|e| e.in_file(path))
}
