//! Batch matching and the run directory it produces.
//!
//! ```text
//! <run>/assessments.jsonl   one PairResult per pair, sorted by (patient, trial)
//! <run>/ranked/<patient>.json
//! <run>/transcripts.jsonl   prompts and raw responses for every attempt
//! <run>/warnings.jsonl      evidence ids dropped for pointing outside the note
//! <run>/manifest.json
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use trialmatch_core::corpus::Corpus;
use trialmatch_core::distill::PairId;
use trialmatch_core::gateway::{ChatBackend, GenerationConfig};
use trialmatch_core::matching::{
    assess_pair, rank_trials, EvidenceWarning, PairResult, RankedList, Transcript,
};

use crate::io::{self, file_stem, IoError};
use crate::manifest::RunManifest;

pub const ASSESSMENTS_FILE: &str = "assessments.jsonl";
pub const TRANSCRIPTS_FILE: &str = "transcripts.jsonl";
pub const WARNINGS_FILE: &str = "warnings.jsonl";
pub const RANKED_DIR: &str = "ranked";

/// An evidence warning with the pair it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairWarning {
    pub patient_id: String,
    pub trial_id: String,
    #[serde(flatten)]
    pub warning: EvidenceWarning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutput {
    pub results: Vec<PairResult>,
    pub ranked: Vec<RankedList>,
    pub transcripts: Vec<Transcript>,
    pub warnings: Vec<PairWarning>,
}

impl MatchOutput {
    pub fn failures(&self) -> impl Iterator<Item = &PairResult> {
        self.results.iter().filter(|r| r.assessment().is_none())
    }
}

/// Pairs to assess: the judged pairs when the corpus has judgments,
/// otherwise every patient against every trial. Sorted.
pub fn pairs_to_assess(corpus: &Corpus) -> Vec<PairId> {
    let mut pairs: Vec<PairId> = if corpus.judgments().is_empty() {
        corpus
            .patients()
            .iter()
            .flat_map(|p| {
                corpus.trials().iter().map(move |t| PairId {
                    patient_id: p.patient_id().into(),
                    trial_id: t.trial_id.clone(),
                })
            })
            .collect()
    } else {
        corpus
            .judgments()
            .iter()
            .map(|j| PairId {
                patient_id: j.patient_id.clone(),
                trial_id: j.trial_id.clone(),
            })
            .collect()
    };
    pairs.sort();
    pairs.dedup();
    pairs
}

/// Assesses `pairs` on up to `workers` threads. The output does not depend
/// on scheduling: results come back in pair order.
pub fn run_match<B: ChatBackend + ?Sized>(
    corpus: &Corpus,
    pairs: &[PairId],
    backend: &B,
    config: &GenerationConfig,
    workers: usize,
) -> Result<MatchOutput, rayon::ThreadPoolBuildError> {
    let patients = corpus.patient_index();
    let trials = corpus.trial_index();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()?;
    let reports: Vec<_> = pool.install(|| {
        pairs
            .par_iter()
            .filter_map(|pair| {
                let note = patients.get(pair.patient_id.as_str())?;
                let trial = trials.get(pair.trial_id.as_str())?;
                Some(assess_pair(note, trial, backend, config))
            })
            .collect()
    });

    let mut out = MatchOutput {
        results: Vec::with_capacity(reports.len()),
        ranked: Vec::new(),
        transcripts: Vec::new(),
        warnings: Vec::new(),
    };
    for report in reports {
        let (patient_id, trial_id) = (
            report.result.patient_id().to_string(),
            report.result.trial_id().to_string(),
        );
        out.warnings
            .extend(report.warnings.into_iter().map(|warning| PairWarning {
                patient_id: patient_id.clone(),
                trial_id: trial_id.clone(),
                warning,
            }));
        out.transcripts.extend(report.transcripts);
        out.results.push(report.result);
    }
    out.ranked = rank_all(&out.results);
    Ok(out)
}

/// One ranked list per patient, in patient id order.
pub fn rank_all(results: &[PairResult]) -> Vec<RankedList> {
    let mut by_patient: BTreeMap<&str, Vec<PairResult>> = BTreeMap::new();
    for r in results {
        by_patient
            .entry(r.patient_id())
            .or_default()
            .push(r.clone());
    }
    by_patient
        .into_iter()
        .map(|(p, rs)| rank_trials(p, &rs).expect("grouped by patient"))
        .collect()
}

pub fn ranked_file(patient_id: &str) -> String {
    format!("{RANKED_DIR}/{}.json", file_stem(patient_id))
}

/// Writes every run file except the manifest and returns their relative
/// paths, ready for [`RunManifest::finish`].
pub fn write_run(dir: &Path, output: &MatchOutput) -> Result<Vec<String>, IoError> {
    let mut files = vec![
        ASSESSMENTS_FILE.to_string(),
        TRANSCRIPTS_FILE.to_string(),
        WARNINGS_FILE.to_string(),
    ];
    io::write_jsonl(&dir.join(ASSESSMENTS_FILE), &output.results)?;
    io::write_jsonl(&dir.join(TRANSCRIPTS_FILE), &output.transcripts)?;
    io::write_jsonl(&dir.join(WARNINGS_FILE), &output.warnings)?;
    for list in &output.ranked {
        let name = ranked_file(&list.patient_id);
        io::write_json(&dir.join(&name), list)?;
        files.push(name);
    }
    Ok(files)
}

/// A run directory read back for evaluation or selection.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedRun {
    pub label: String,
    pub results: Vec<PairResult>,
    pub ranked: Vec<RankedList>,
    pub manifest: RunManifest,
}

impl LoadedRun {
    pub fn load(dir: &Path) -> Result<Self, IoError> {
        let manifest = RunManifest::load(dir)?;
        let results: Vec<PairResult> = io::read_jsonl(&dir.join(ASSESSMENTS_FILE))?;
        let mut ranked = Vec::new();
        let patients: BTreeSet<&str> = results.iter().map(|r| r.patient_id()).collect();
        for p in patients {
            ranked.push(io::read_json(&dir.join(ranked_file(p)))?);
        }
        let label = manifest
            .config
            .get("label")
            .and_then(|v| v.as_str())
            .map(str::to_owned)
            .or_else(|| manifest.backend.clone())
            .unwrap_or_else(|| dir.display().to_string());
        Ok(LoadedRun {
            label,
            results,
            ranked,
            manifest,
        })
    }

    pub fn pair_set(&self) -> BTreeSet<(&str, &str)> {
        self.results
            .iter()
            .map(|r| (r.patient_id(), r.trial_id()))
            .collect()
    }
}
