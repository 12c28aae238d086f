//! Criterion-level patient to clinical-trial matching.
//!
//! This crate holds everything that does not touch the outside world:
//!
//! * [`model`]: patients, trials, eligibility labels, assessments and gold annotations.
//! * [`schema`]: fenced-payload extraction and strict validation of model output.
//! * [`prompt`]: the system/user/assistant messages sent to a chat model.
//! * [`gateway`]: the [`gateway::ChatBackend`] port and the bounded retry loop.
//! * [`scoring`] and [`matching`]: rank score / exclusion score and per-patient rankings.
//! * [`rouge`] and [`selection`]: ROUGE-L and novelty-based criterion selection.
//! * [`metrics`]: NDCG, precision, AUROC, criterion accuracy, evidence P/R/F1, head-to-head.
//! * [`corpus`]: corpus validation, relevance mapping, patient-axis split and statistics.
//! * [`distill`]: pair sampling and system/user/assistant training records.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the HTTP service and
//! the command line live in the `trialmatch` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod corpus;
pub mod distill;
pub mod gateway;
pub mod matching;
pub mod metrics;
pub mod model;
pub mod prompt;
pub mod rouge;
pub mod schema;
pub mod scoring;
pub mod selection;

pub use model::{
    ClinicalTrial, CriterionAssessment, CriterionKind, EligibilityLabel, ErrorType,
    GoldCriterionAnnotation, PatientNote, ReasoningMode, Relevance, RelevanceJudgment,
    TrialAssessment,
};
