//! Frame-by-frame replay of an episode with the ask-when-unknown policy.
//!
//! Every frame is assessed against the competence memory. Unknown frames
//! trigger a feedback request, and the answer is appended to memory. Known
//! frames either proceed or are flagged when the nearest labeled environment
//! was incompetent.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::embedding::CalibrationModel;
use crate::error::{Error, Result};
use crate::knowledge::{
    assess_expert, ExpertAssessment, KnowledgeStatement, ReferenceAtlas, SemanticLexicon,
};
use crate::memory::{
    assess, check_threshold, incorporate_feedback, Assessment, CompetenceLabel, CompetenceMemory,
    FeedbackSource, Verdict, DEFAULT_THRESHOLD,
};
use crate::store::{
    load_calibration, load_embeddings, load_episode, load_run, load_word_vectors, save_run,
    EpisodeFrame, StoredRun,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    AskHuman,
    Proceed,
    FlagIncompetent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub label: CompetenceLabel,
    pub source: FeedbackSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentEvent {
    pub frame_index: u64,
    pub frame_id: String,
    pub p_known: f64,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub competence_score: Option<f64>,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<Feedback>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert: Option<ExpertAssessment>,
    /// Milliseconds since the Unix epoch. Not part of the replay's
    /// deterministic content.
    pub wall_time: u64,
}

impl AssessmentEvent {
    /// Copy with the timestamp zeroed, for determinism comparisons.
    pub fn timeless(&self) -> Self {
        Self {
            wall_time: 0,
            ..self.clone()
        }
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// Maps an assessment to the action taken for its frame.
pub fn action_for(assessment: &Assessment) -> Action {
    match (assessment.verdict, assessment.competence_score) {
        (Verdict::Unknown, _) => Action::AskHuman,
        (Verdict::Known, Some(score)) if score < 0.0 => Action::FlagIncompetent,
        (Verdict::Known, _) => Action::Proceed,
    }
}

/// Answers competence questions for frames the engine does not know.
pub trait FeedbackProvider {
    fn request(&mut self, frame: &EpisodeFrame, assessment: &Assessment) -> Result<Feedback>;
}

/// The ground-truth label of a frame, standing in for a human answer.
pub fn oracle_feedback(frame: &EpisodeFrame) -> Result<CompetenceLabel> {
    frame.ground_truth_competence.ok_or_else(|| {
        Error::FeedbackUnavailable(format!(
            "frame {} ({}) has no ground-truth competence",
            frame.frame_index,
            frame.descriptor.id()
        ))
    })
}

/// Answers from ground truth, only when asked.
#[derive(Debug, Default, Clone, Copy)]
pub struct OracleFeedback;

impl FeedbackProvider for OracleFeedback {
    fn request(&mut self, frame: &EpisodeFrame, _: &Assessment) -> Result<Feedback> {
        Ok(Feedback {
            label: oracle_feedback(frame)?,
            source: FeedbackSource::Oracle,
        })
    }
}

fn parse_answer(answer: &str) -> Option<CompetenceLabel> {
    match answer.trim().to_lowercase().as_str() {
        "c" | "competent" => Some(CompetenceLabel::Competent),
        "i" | "incompetent" => Some(CompetenceLabel::Incompetent),
        _ => None,
    }
}

/// Prompts on `output` and reads answers from `input` until one parses.
pub fn interactive_feedback(
    frame: &EpisodeFrame,
    p_known: f64,
    input: &mut impl BufRead,
    output: &mut impl Write,
) -> Result<CompetenceLabel> {
    writeln!(
        output,
        "I do not know this environment: frame {} ({}), P(known) = {p_known:.4}",
        frame.frame_index,
        frame.descriptor.id()
    )?;
    if let Some(image) = frame.descriptor.image_ref() {
        writeln!(output, "  image: {image}")?;
    }
    loop {
        write!(output, "Am I competent here? [c]ompetent / [i]ncompetent: ")?;
        output.flush()?;
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            return Err(Error::FeedbackUnavailable("input closed".into()));
        }
        match parse_answer(&line) {
            Some(label) => return Ok(label),
            None => writeln!(output, "Please answer \"c\" or \"i\".")?,
        }
    }
}

/// Terminal feedback over any reader/writer pair.
pub struct InteractiveFeedback<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> InteractiveFeedback<R, W> {
    pub fn new(input: R, output: W) -> Self {
        Self { input, output }
    }
}

impl InteractiveFeedback<std::io::StdinLock<'static>, std::io::Stdout> {
    pub fn stdio() -> Self {
        Self::new(std::io::stdin().lock(), std::io::stdout())
    }
}

impl<R: BufRead, W: Write> FeedbackProvider for InteractiveFeedback<R, W> {
    fn request(&mut self, frame: &EpisodeFrame, assessment: &Assessment) -> Result<Feedback> {
        let label =
            interactive_feedback(frame, assessment.p_known, &mut self.input, &mut self.output)?;
        Ok(Feedback {
            label,
            source: FeedbackSource::Human,
        })
    }
}

/// Everything the knowledge-based assessment needs.
#[derive(Debug, Clone)]
pub struct ExpertContext {
    pub atlas: ReferenceAtlas,
    pub statements: Vec<KnowledgeStatement>,
    pub lexicon: SemanticLexicon,
}

/// Replay state: calibration, the evolving memory, and the event log.
#[derive(Debug, Clone)]
pub struct ReplaySession {
    calibration: CalibrationModel,
    memory: CompetenceMemory,
    threshold: f64,
    expert: Option<ExpertContext>,
    events: Vec<AssessmentEvent>,
    initial_memory_size: usize,
}

impl ReplaySession {
    pub fn new(
        calibration: CalibrationModel,
        memory: CompetenceMemory,
        threshold: f64,
    ) -> Result<Self> {
        check_threshold(threshold)?;
        if let Some(dim) = memory.dimension() {
            calibration.check_dimension(dim)?;
        }
        Ok(Self {
            calibration,
            initial_memory_size: memory.len(),
            memory,
            threshold,
            expert: None,
            events: Vec::new(),
        })
    }

    pub fn with_expert(mut self, expert: ExpertContext) -> Self {
        self.expert = Some(expert);
        self
    }

    pub fn calibration(&self) -> &CalibrationModel {
        &self.calibration
    }

    pub fn memory(&self) -> &CompetenceMemory {
        &self.memory
    }

    pub fn events(&self) -> &[AssessmentEvent] {
        &self.events
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Assesses a frame against the current memory without changing anything.
    pub fn preview(&self, frame: &EpisodeFrame) -> Result<(Assessment, Option<ExpertAssessment>)> {
        let assessment = assess(
            &frame.descriptor,
            &self.memory,
            &self.calibration,
            self.threshold,
        )?;
        let expert = self
            .expert
            .as_ref()
            .map(|ctx| {
                assess_expert(
                    &frame.descriptor,
                    &ctx.atlas,
                    &ctx.statements,
                    &ctx.lexicon,
                    &self.calibration,
                )
            })
            .transpose()?;
        Ok((assessment, expert))
    }

    /// Assesses one frame, asks for feedback when unknown, and logs the event.
    pub fn step(
        &mut self,
        frame: &EpisodeFrame,
        provider: &mut dyn FeedbackProvider,
    ) -> Result<&AssessmentEvent> {
        let (assessment, expert) = self.preview(frame)?;
        let action = action_for(&assessment);
        let feedback = if action == Action::AskHuman {
            let answer = provider.request(frame, &assessment)?;
            self.memory =
                incorporate_feedback(&self.memory, &frame.descriptor, answer.label, answer.source)?;
            Some(answer)
        } else {
            None
        };
        self.events.push(AssessmentEvent {
            frame_index: frame.frame_index,
            frame_id: frame.descriptor.id().to_string(),
            p_known: assessment.p_known,
            verdict: assessment.verdict,
            competence_score: assessment.competence_score,
            action,
            feedback,
            expert,
            wall_time: now_ms(),
        });
        Ok(self.events.last().expect("event just pushed"))
    }

    pub fn report(&self) -> RunReport {
        RunReport::new(self.events.clone(), self.memory.len())
    }

    pub fn stored_run(&self) -> Result<StoredRun> {
        StoredRun::new(self.calibration.clone(), self.memory.clone())
    }

    pub fn initial_memory_size(&self) -> usize {
        self.initial_memory_size
    }
}

/// Replays every frame in order.
pub fn replay(
    session: &mut ReplaySession,
    frames: &[EpisodeFrame],
    provider: &mut dyn FeedbackProvider,
) -> Result<RunReport> {
    for frame in frames {
        session.step(frame, provider)?;
    }
    Ok(session.report())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub frames_total: usize,
    pub ask_count: usize,
    pub proceed_count: usize,
    pub flag_count: usize,
    pub memory_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub events: Vec<AssessmentEvent>,
    pub summary: RunSummary,
}

impl RunReport {
    pub fn new(events: Vec<AssessmentEvent>, memory_size: usize) -> Self {
        let count = |a| events.iter().filter(|e| e.action == a).count();
        let summary = RunSummary {
            frames_total: events.len(),
            ask_count: count(Action::AskHuman),
            proceed_count: count(Action::Proceed),
            flag_count: count(Action::FlagIncompetent),
            memory_size,
        };
        Self { events, summary }
    }

    pub fn ask_count(&self) -> usize {
        self.summary.ask_count
    }

    pub fn flag_count(&self) -> usize {
        self.summary.flag_count
    }

    /// Events as JSON Lines followed by a `{"summary": ...}` line.
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for event in &self.events {
            serde_json::to_writer(&mut w, event).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut w, &serde_json::json!({ "summary": self.summary }))
            .map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::from(e).in_file(path))?;
        self.write_jsonl(BufWriter::new(file))
            .map_err(|e| e.in_file(path))
    }

    /// Human-readable table of the run.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>6}  {:<16} {:>8}  {:<7} {:>7}  {:<16} {:<20} {:>7}",
            "frame", "id", "p_known", "verdict", "score", "action", "feedback", "p_inc"
        );
        for e in &self.events {
            let verdict = match e.verdict {
                Verdict::Known => "known",
                Verdict::Unknown => "unknown",
            };
            let score = e
                .competence_score
                .map_or_else(|| "-".to_string(), |s| format!("{s:+.3}"));
            let action = match e.action {
                Action::AskHuman => "ASK_HUMAN",
                Action::Proceed => "PROCEED",
                Action::FlagIncompetent => "FLAG_INCOMPETENT",
            };
            let feedback = e.feedback.map_or_else(
                || "-".to_string(),
                |f| format!("{} ({})", f.label, f.source),
            );
            let p_inc = e
                .expert
                .as_ref()
                .map_or_else(|| "-".to_string(), |x| format!("{:.3}", x.p_incompetent));
            let _ = writeln!(
                out,
                "{:>6}  {:<16} {:>8.4}  {:<7} {:>7}  {:<16} {:<20} {:>7}",
                e.frame_index, e.frame_id, e.p_known, verdict, score, action, feedback, p_inc
            );
        }
        let s = &self.summary;
        let _ = writeln!(
            out,
            "frames {}  asked {}  proceeded {}  flagged {}  memory {}",
            s.frames_total, s.ask_count, s.proceed_count, s.flag_count, s.memory_size
        );
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Interactive,
    Oracle,
    Serve,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub threshold: f64,
    pub episode_path: PathBuf,
    pub calibration_path: PathBuf,
    /// Memory is read from here when the file exists and written back after the run.
    pub run_state_path: Option<PathBuf>,
    pub knowledge: Vec<KnowledgeStatement>,
    pub atlas_path: Option<PathBuf>,
    pub lexicon_path: Option<PathBuf>,
    pub port: u16,
    pub pace_ms: u64,
    pub manual_step: bool,
    pub report_path: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn new(
        mode: Mode,
        episode_path: impl Into<PathBuf>,
        calibration_path: impl Into<PathBuf>,
    ) -> Self {
        Self {
            mode,
            threshold: DEFAULT_THRESHOLD,
            episode_path: episode_path.into(),
            calibration_path: calibration_path.into(),
            run_state_path: None,
            knowledge: Vec::new(),
            atlas_path: None,
            lexicon_path: None,
            port: 8080,
            pace_ms: 500,
            manual_step: false,
            report_path: None,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_threshold(self.threshold)?;
        if !self.knowledge.is_empty() && (self.atlas_path.is_none() || self.lexicon_path.is_none())
        {
            return Err(Error::InvalidConfig(
                "knowledge statements need both an atlas and word vectors".into(),
            ));
        }
        Ok(())
    }
}

/// Loads calibration, episode, prior memory and optional knowledge for a run.
pub fn prepare(config: &RunConfig) -> Result<(ReplaySession, Vec<EpisodeFrame>)> {
    config.validate()?;
    let calibration = load_calibration(&config.calibration_path)?;
    let frames = load_episode(&config.episode_path)?;
    if let Some(first) = frames.first() {
        calibration
            .check_dimension(first.descriptor.dimension())
            .map_err(|e| e.in_file(&config.episode_path))?;
    }
    let memory = match &config.run_state_path {
        Some(path) if path.exists() => load_run(path)?.memory,
        _ => CompetenceMemory::new(),
    };
    let mut session = ReplaySession::new(calibration, memory, config.threshold)?;
    if !config.knowledge.is_empty() {
        let (Some(atlas_path), Some(lexicon_path)) = (&config.atlas_path, &config.lexicon_path)
        else {
            unreachable!("validated above");
        };
        let atlas =
            ReferenceAtlas::new(load_embeddings(atlas_path)?).map_err(|e| e.in_file(atlas_path))?;
        let lexicon = load_word_vectors(lexicon_path)?;
        session = session.with_expert(ExpertContext {
            atlas,
            statements: config.knowledge.clone(),
            lexicon,
        });
    }
    Ok((session, frames))
}

/// Persists the memory and writes the report, as configured.
pub fn finish(config: &RunConfig, session: &ReplaySession) -> Result<RunReport> {
    if let Some(path) = &config.run_state_path {
        save_run(&session.stored_run()?, path)?;
    }
    let report = session.report();
    if let Some(path) = &config.report_path {
        report.save(path)?;
    }
    Ok(report)
}

/// Runs a whole episode: load, replay, persist.
pub fn run_episode(config: &RunConfig, human: &mut dyn FeedbackProvider) -> Result<RunReport> {
    let (mut session, frames) = prepare(config)?;
    replay(&mut session, &frames, human)?;
    finish(config, &session)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EnvironmentDescriptor;

    fn frame(i: u64, v: &[f64], gt: Option<CompetenceLabel>) -> EpisodeFrame {
        EpisodeFrame {
            frame_index: i,
            descriptor: EnvironmentDescriptor::new(format!("f{i}"), v.to_vec()).unwrap(),
            ground_truth_competence: gt,
        }
    }

    #[test]
    fn oracle_cases() {
        use CompetenceLabel::*;
        assert_eq!(
            oracle_feedback(&frame(0, &[0.0], Some(Competent))).unwrap(),
            Competent
        );
        assert_eq!(
            oracle_feedback(&frame(0, &[0.0], Some(Incompetent))).unwrap(),
            Incompetent
        );
        assert!(matches!(
            oracle_feedback(&frame(0, &[0.0], None)),
            Err(Error::FeedbackUnavailable(_))
        ));
    }

    fn ask(input: &str) -> (Result<CompetenceLabel>, String) {
        let mut out = Vec::new();
        let f = frame(3, &[0.0], None);
        let r = interactive_feedback(&f, 0.25, &mut input.as_bytes(), &mut out);
        (r, String::from_utf8(out).unwrap())
    }

    #[test]
    fn interactive_cases() {
        assert_eq!(ask("c\n").0.unwrap(), CompetenceLabel::Competent);
        assert_eq!(ask("I\n").0.unwrap(), CompetenceLabel::Incompetent);
        assert_eq!(ask("  Competent \n").0.unwrap(), CompetenceLabel::Competent);
        let (r, out) = ask("x\nc\n");
        assert_eq!(r.unwrap(), CompetenceLabel::Competent);
        assert_eq!(out.matches("Am I competent here?").count(), 2);
        assert!(out.contains("frame 3 (f3)"));
        assert!(out.contains("0.2500"));
        assert!(matches!(ask("").0, Err(Error::FeedbackUnavailable(_))));
        assert!(matches!(
            ask("what\n").0,
            Err(Error::FeedbackUnavailable(_))
        ));
    }

    #[test]
    fn interactive_prints_image_ref() {
        let mut f = frame(0, &[0.0], None);
        f.descriptor = f.descriptor.with_image_ref("cam/0001.png");
        let mut out = Vec::new();
        interactive_feedback(&f, 0.0, &mut "c\n".as_bytes(), &mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().contains("cam/0001.png"));
    }

    #[test]
    fn single_unknown_frame_asks_once() {
        let calib = CalibrationModel::from_kernel_width(1.0, 1).unwrap();
        let mut session = ReplaySession::new(calib, CompetenceMemory::new(), 0.5).unwrap();
        let frames = [frame(0, &[0.0], Some(CompetenceLabel::Competent))];
        let report = replay(&mut session, &frames, &mut OracleFeedback).unwrap();
        assert_eq!(report.ask_count(), 1);
        assert_eq!(session.memory().len(), 1);
        assert_eq!(
            report.events[0].feedback,
            Some(Feedback {
                label: CompetenceLabel::Competent,
                source: FeedbackSource::Oracle
            })
        );

        // same episode against the updated memory
        let mut again =
            ReplaySession::new(session.calibration().clone(), session.memory().clone(), 0.5)
                .unwrap();
        let report = replay(&mut again, &frames, &mut OracleFeedback).unwrap();
        assert_eq!(report.ask_count(), 0);
        assert_eq!(report.events[0].action, Action::Proceed);
    }

    #[test]
    fn missing_ground_truth_fails_only_when_asked() {
        let calib = CalibrationModel::from_kernel_width(1.0, 1).unwrap();
        let mut session = ReplaySession::new(calib, CompetenceMemory::new(), 0.5).unwrap();
        let frames = [
            frame(0, &[0.0], Some(CompetenceLabel::Incompetent)),
            frame(1, &[0.1], None),
            frame(2, &[50.0], None),
        ];
        let err = replay(&mut session, &frames, &mut OracleFeedback).unwrap_err();
        assert!(matches!(err, Error::FeedbackUnavailable(_)));
        assert_eq!(session.events().len(), 2);
        assert_eq!(session.events()[1].action, Action::FlagIncompetent);
    }

    #[test]
    fn config_validation() {
        let mut c = RunConfig::new(Mode::Oracle, "e", "c");
        assert!(c.validate().is_ok());
        c.threshold = 1.0;
        assert!(matches!(c.validate(), Err(Error::InvalidThreshold(_))));
        c.threshold = 0.5;
        c.knowledge.push("incompetent:nature".parse().unwrap());
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        c.atlas_path = Some("a".into());
        c.lexicon_path = Some("l".into());
        assert!(c.validate().is_ok());
    }

    #[test]
    fn report_jsonl_shape() {
        let calib = CalibrationModel::from_kernel_width(1.0, 1).unwrap();
        let mut session = ReplaySession::new(calib, CompetenceMemory::new(), 0.5).unwrap();
        let frames = [
            frame(0, &[0.0], Some(CompetenceLabel::Competent)),
            frame(1, &[0.2], None),
        ];
        let report = replay(&mut session, &frames, &mut OracleFeedback).unwrap();
        let mut buf = Vec::new();
        report.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<serde_json::Value> = text
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0]["action"], "ASK_HUMAN");
        assert_eq!(lines[0]["feedback"]["source"], "oracle");
        assert_eq!(lines[1]["action"], "PROCEED");
        assert!(lines[1].get("feedback").is_none());
        assert_eq!(lines[2]["summary"]["ask_count"], 1);
        assert_eq!(lines[2]["summary"]["memory_size"], 1);
        let table = report.render_table();
        assert!(table.contains("ASK_HUMAN") && table.contains("asked 1"));
    }
}
