//! Online competence self-assessment for a mobile agent.
//!
//! Given precomputed scene embeddings, the engine answers two questions for
//! every camera frame: do I know this environment, and am I competent here?
//!
//! * [`embedding`]: L2 distances, the Gaussian kernel and kernel-width
//!   calibration on a reference collection.
//! * [`memory`]: assessment against a memory of human-labeled environments,
//!   with the ask-when-unknown update.
//! * [`knowledge`]: assessment from prior statements such as
//!   `incompetent:nature`, combining visual and word-vector similarity.
//! * [`store`]: file formats for embeddings, word vectors, episodes,
//!   calibrations and run state.
//! * [`harness`]: episode replay with oracle or terminal feedback, event
//!   logs and reports.
//! * [`synth`]: seeded clustered episodes for desk-scale experiments.
//! * `service` (feature `serve`): HTTP API for a remote feedback panel.
//!
//! ```
//! use competence_core::prelude::*;
//!
//! let reference: Vec<_> = [0.0, 1.0, 3.0]
//!     .iter()
//!     .enumerate()
//!     .map(|(i, &x)| EnvironmentDescriptor::new(format!("r{i}"), vec![x]).unwrap())
//!     .collect();
//! let calib = calibrate(&reference, 0.5, 1e-9).unwrap();
//!
//! let corridor = EnvironmentDescriptor::new("corridor", vec![0.2]).unwrap();
//! let memory = incorporate_feedback(
//!     &CompetenceMemory::new(),
//!     &corridor,
//!     CompetenceLabel::Competent,
//!     FeedbackSource::Human,
//! )
//! .unwrap();
//!
//! let next = EnvironmentDescriptor::new("next", vec![0.4]).unwrap();
//! let a = assess(&next, &memory, &calib, 0.5).unwrap();
//! assert_eq!(a.verdict, Verdict::Known);
//! assert!(a.competence_score.unwrap() > 0.9);
//! ```

pub mod embedding;
pub mod error;
pub mod harness;
pub mod knowledge;
pub mod memory;
#[cfg(feature = "serve")]
pub mod service;
pub mod store;
pub mod synth;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::embedding::{
        calibrate, distance, kernel, nearest_neighbor, nn_distances, CalibrationModel,
        EnvironmentDescriptor,
    };
    pub use crate::error::{Error, Result};
    pub use crate::harness::{
        replay, run_episode, Action, AssessmentEvent, FeedbackProvider, OracleFeedback,
        ReplaySession, RunConfig, RunReport,
    };
    pub use crate::knowledge::{
        assess_expert, ExpertAssessment, KnowledgeStatement, ReferenceAtlas, SemanticLexicon,
    };
    pub use crate::memory::{
        assess, incorporate_feedback, p_known, Assessment, CompetenceLabel, CompetenceMemory,
        FeedbackSource, Verdict,
    };
    pub use crate::store::{EpisodeFrame, StoredRun};
}
