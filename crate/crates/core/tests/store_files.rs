use std::fs;
use std::path::Path;

use proptest::prelude::*;
use tempfile::TempDir;

use competence_core::embedding::{calibrate, CalibrationModel, EnvironmentDescriptor};
use competence_core::memory::{
    incorporate_feedback, CompetenceLabel, CompetenceMemory, FeedbackSource,
};
use competence_core::store::{
    load_calibration, load_embeddings, load_episode, load_run, load_word_vectors, read_embeddings,
    read_run, save_calibration, save_embeddings, save_episode, save_run, write_embeddings,
    write_run, EpisodeFrame, StoredRun,
};
use competence_core::Error;

fn write(dir: &TempDir, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn d(id: &str, v: &[f64]) -> EnvironmentDescriptor {
    EnvironmentDescriptor::new(id, v.to_vec()).unwrap()
}

fn sample_run() -> StoredRun {
    let reference = [
        d("a", &[0.0, 0.0]),
        d("b", &[1.0, 0.0]),
        d("c", &[0.0, 3.0]),
    ];
    let calib = calibrate(&reference, 0.5, 1e-9)
        .unwrap()
        .with_provenance("reference", "three points");
    let memory = incorporate_feedback(
        &CompetenceMemory::new(),
        &d("corridor-000", &[0.1, 1.0 / 3.0]).with_image_ref("frames/0.png"),
        CompetenceLabel::Competent,
        FeedbackSource::Human,
    )
    .and_then(|m| {
        incorporate_feedback(
            &m,
            &d("lab-000", &[10.0, -2.5e-300]).with_label("lab"),
            CompetenceLabel::Incompetent,
            FeedbackSource::Oracle,
        )
    })
    .unwrap();
    StoredRun::new(calib, memory).unwrap()
}

#[test]
fn run_file_round_trips_every_field() {
    let dir = TempDir::new().unwrap();
    let run = sample_run();
    let path = dir.path().join("state.json");
    save_run(&run, &path).unwrap();
    let back = load_run(&path).unwrap();
    assert_eq!(back, run);
    assert_eq!(back.format_version, 1);
    assert_eq!(back.calibration.provenance()["reference"], "three points");
    let entries = back.memory.entries();
    assert_eq!(entries[0].descriptor().image_ref(), Some("frames/0.png"));
    assert_eq!(entries[1].descriptor().label(), Some("lab"));
    assert_eq!(entries[1].source(), FeedbackSource::Oracle);
    assert_eq!(entries[1].descriptor().vector()[1], -2.5e-300);
}

#[test]
fn run_document_shape() {
    let mut buf = Vec::new();
    write_run(&mut buf, &sample_run()).unwrap();
    let doc: serde_json::Value = serde_json::from_slice(&buf).unwrap();
    assert_eq!(doc["format_version"], 1);
    assert_eq!(doc["memory"]["dimension"], 2);
    assert_eq!(doc["memory"]["entries"][1]["label"], "incompetent");
    assert_eq!(doc["memory"]["entries"][0]["source"], "human");
    assert!(doc["calibration"]["kernel_width"].is_number());
}

#[test]
fn run_from_newer_version_is_refused() {
    let mut buf = Vec::new();
    write_run(&mut buf, &sample_run()).unwrap();
    let text = String::from_utf8(buf)
        .unwrap()
        .replace("\"format_version\": 1", "\"format_version\": 2");
    assert!(matches!(
        read_run(text.as_bytes()),
        Err(Error::UnsupportedVersion(2))
    ));
}

#[test]
fn calibration_loads_from_either_document() {
    let dir = TempDir::new().unwrap();
    let run = sample_run();
    let calib_path = dir.path().join("calib.json");
    let run_path = dir.path().join("run.json");
    save_calibration(&run.calibration, &calib_path).unwrap();
    save_run(&run, &run_path).unwrap();
    assert_eq!(load_calibration(&calib_path).unwrap(), run.calibration);
    assert_eq!(load_calibration(&run_path).unwrap(), run.calibration);
}

#[test]
fn embeddings_file_round_trip() {
    let dir = TempDir::new().unwrap();
    let items = vec![
        d("a", &[0.1, 0.2, 0.3]).with_label("forest"),
        d("b", &[f64::MAX, f64::MIN_POSITIVE, -0.0]).with_image_ref("b.jpg"),
    ];
    let path = dir.path().join("ref.jsonl");
    save_embeddings(&path, &items).unwrap();
    assert_eq!(load_embeddings(&path).unwrap(), items);
}

#[test]
fn loader_errors_name_file_and_line() {
    let dir = TempDir::new().unwrap();
    let cases = [
        (
            "mismatch.jsonl",
            "{\"id\":\"a\",\"vector\":[1,2,3]}\n{\"id\":\"b\",\"vector\":[1,2]}\n",
            "line 2: dimension mismatch: expected 3, found 2",
        ),
        (
            "dup.jsonl",
            "{\"id\":\"a\",\"vector\":[1]}\n\n{\"id\":\"a\",\"vector\":[2]}\n",
            "line 3: duplicate id",
        ),
        (
            "nan.jsonl",
            "{\"id\":\"a\",\"vector\":[1, NaN]}\n",
            "line 1: non-finite",
        ),
        ("garbage.jsonl", "not json\n", "line 1: malformed record"),
    ];
    for (name, text, expected) in cases {
        let path = write(&dir, name, text);
        let err = load_embeddings(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(name), "{msg}");
        assert!(msg.contains(expected), "{msg}");
    }
}

#[test]
fn episode_file_round_trip_and_ordering() {
    let dir = TempDir::new().unwrap();
    let frames = vec![
        EpisodeFrame {
            frame_index: 0,
            descriptor: d("f0", &[0.5, 0.25]).with_image_ref("img/0.png"),
            ground_truth_competence: Some(CompetenceLabel::Competent),
        },
        EpisodeFrame {
            frame_index: 3,
            descriptor: d("f3", &[1.0 / 7.0, 2.0]),
            ground_truth_competence: None,
        },
    ];
    let path = dir.path().join("ep.jsonl");
    save_episode(&path, &frames).unwrap();
    assert_eq!(load_episode(&path).unwrap(), frames);

    let bad = write(
        &dir,
        "order.jsonl",
        "{\"frame_index\":5,\"id\":\"a\",\"vector\":[1]}\n{\"frame_index\":5,\"id\":\"b\",\"vector\":[1]}\n",
    );
    assert!(matches!(
        load_episode(&bad).unwrap_err().root(),
        Error::NonMonotoneFrameIndex {
            line: 2,
            previous: 5,
            found: 5
        }
    ));
}

#[test]
fn word_vectors_with_and_without_header() {
    let dir = TempDir::new().unwrap();
    let with = write(
        &dir,
        "with.txt",
        "3 2\nForest 1 0\npark 0.9 0.1\noffice 0 1\n",
    );
    let without = write(&dir, "without.txt", "forest 1 0\noffice 0 1\n");
    let a = load_word_vectors(&with).unwrap();
    let b = load_word_vectors(&without).unwrap();
    assert_eq!(a.len(), 3);
    assert_eq!(a.get("forest"), Some(&[1.0, 0.0][..]));
    assert_eq!(b.dimension(), 2);

    let ragged = write(&dir, "ragged.txt", "forest 1 0\noffice 0 1 2\n");
    assert!(matches!(
        load_word_vectors(&ragged).unwrap_err().root(),
        Error::DimensionMismatchAt {
            line: 2,
            expected: 2,
            found: 3
        }
    ));
    let empty = write(&dir, "empty.txt", "\n");
    assert!(matches!(
        load_word_vectors(&empty).unwrap_err().root(),
        Error::EmptyLexicon
    ));
}

#[test]
fn missing_file_reports_its_path() {
    let err = load_run(Path::new("/nonexistent/state.json")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/state.json"));
    assert!(matches!(err.root(), Error::Io(_)));
}

proptest! {
    #[test]
    fn embedding_vectors_survive_text_bit_for_bit(
        rows in prop::collection::vec(prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 4), 1..20)
    ) {
        let items: Vec<_> = rows
            .iter()
            .enumerate()
            .map(|(i, v)| EnvironmentDescriptor::new(format!("e{i}"), v.clone()).unwrap())
            .collect();
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &items).unwrap();
        let back = read_embeddings(buf.as_slice()).unwrap();
        for (a, b) in items.iter().zip(&back) {
            for (x, y) in a.vector().iter().zip(b.vector()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn kernel_width_survives_run_file(w in 1e-12..1e12f64) {
        let run = StoredRun::new(CalibrationModel::from_kernel_width(w, 3).unwrap(), CompetenceMemory::new()).unwrap();
        let mut buf = Vec::new();
        write_run(&mut buf, &run).unwrap();
        let back = read_run(buf.as_slice()).unwrap();
        prop_assert_eq!(back.calibration.kernel_width().to_bits(), w.to_bits());
    }
}
