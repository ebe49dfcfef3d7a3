use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use competence_core::embedding::{calibrate, DEFAULT_MEAN_TARGET, DEFAULT_TOLERANCE};
use competence_core::harness::{run_episode, InteractiveFeedback, Mode, OracleFeedback, RunConfig};
use competence_core::knowledge::KnowledgeStatement;
use competence_core::memory::DEFAULT_THRESHOLD;
use competence_core::store::{load_embeddings, save_calibration, save_embeddings, save_episode};
use competence_core::synth::{generate_synthetic_episode, SyntheticSpec};

#[derive(Parser)]
#[command(
    name = "competence",
    version,
    about = "Competence self-assessment over scene embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate the kernel width on a reference embedding collection.
    Calibrate {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MEAN_TARGET)]
        mean_target: f64,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: f64,
    },
    /// Replay an episode, asking for feedback on unknown frames.
    Run {
        #[command(flatten)]
        common: RunArgs,
        #[arg(long, value_enum)]
        mode: FeedbackMode,
    },
    /// Replay an episode behind the HTTP feedback API.
    Serve {
        #[command(flatten)]
        common: RunArgs,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = 500)]
        pace_ms: u64,
        /// Advance only on POST /api/step.
        #[arg(long)]
        manual_step: bool,
    },
    /// Generate a seeded clustered episode and a calibration reference.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out_episode: PathBuf,
        #[arg(long)]
        out_reference: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FeedbackMode {
    Interactive,
    Oracle,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    episode: PathBuf,
    #[arg(long)]
    calibration: PathBuf,
    /// Run state (memory) read before and written after the replay.
    #[arg(long)]
    state: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// e.g. "incompetent:nature"; repeatable.
    #[arg(long)]
    knowledge: Vec<KnowledgeStatement>,
    #[arg(long)]
    atlas: Option<PathBuf>,
    #[arg(long)]
    wordvecs: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

impl RunArgs {
    fn into_config(self, mode: Mode) -> RunConfig {
        let mut config = RunConfig::new(mode, self.episode, self.calibration);
        config.run_state_path = self.state;
        config.threshold = self.threshold;
        config.knowledge = self.knowledge;
        config.atlas_path = self.atlas;
        config.lexicon_path = self.wordvecs;
        config.report_path = self.report;
        config
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Calibrate {
            reference,
            out,
            mean_target,
            tolerance,
        } => {
            let entries = load_embeddings(&reference)?;
            let model = calibrate(&entries, mean_target, tolerance)
                .with_context(|| format!("calibrating on {}", reference.display()))?
                .with_provenance("reference", reference.display().to_string());
            save_calibration(&model, &out)?;
            println!(
                "kernel width {} from {} entries -> {}",
                model.kernel_width(),
                model.reference_count(),
                out.display()
            );
        }
        Command::Run { common, mode } => {
            let report = match mode {
                FeedbackMode::Oracle => {
                    run_episode(&common.into_config(Mode::Oracle), &mut OracleFeedback)?
                }
                FeedbackMode::Interactive => {
                    let config = common.into_config(Mode::Interactive);
                    let report = run_episode(&config, &mut InteractiveFeedback::stdio())?;
                    println!();
                    report
                }
            };
            print!("{}", report.render_table());
        }
        Command::Serve {
            common,
            port,
            pace_ms,
            manual_step,
        } => {
            let mut config = common.into_config(Mode::Serve);
            config.port = port;
            config.pace_ms = pace_ms;
            config.manual_step = manual_step;
            serve(&config)?;
        }
        Command::Synth {
            spec,
            seed,
            out_episode,
            out_reference,
        } => {
            let generated = generate_synthetic_episode(&SyntheticSpec::load(&spec)?, seed)?;
            save_episode(&out_episode, &generated.frames)?;
            save_embeddings(&out_reference, &generated.reference)?;
            println!(
                "{} frames -> {}, {} reference entries -> {}",
                generated.frames.len(),
                out_episode.display(),
                generated.reference.len(),
                out_reference.display()
            );
        }
    }
    Ok(())
}

#[cfg(feature = "serve")]
fn serve(config: &RunConfig) -> Result<()> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(competence_core::service::serve(config))?;
    Ok(())
}

#[cfg(not(feature = "serve"))]
fn serve(_: &RunConfig) -> Result<()> {
    anyhow::bail!("this build has no HTTP service; rebuild with the `serve` feature")
}
