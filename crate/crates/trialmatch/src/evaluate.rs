//! The evaluation report over one or more run directories.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use trialmatch_core::metrics::{
    criterion_eval, head_to_head, rank_eval, CriterionEval, HeadToHead, HumanVerdict, MetricError,
    PredictionIndex, RankingEval, RankingOptions,
};
use trialmatch_core::{GoldCriterionAnnotation, RelevanceJudgment};

use crate::manifest::RunManifest;
use crate::run::LoadedRun;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranking: Option<RankingEval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criterion: Option<CriterionEval>,
    pub pairs: usize,
    pub failed_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub models: Vec<ModelReport>,
    pub head_to_head: Vec<HeadToHead>,
    pub ranking_options: RankingOptions,
    pub align_threshold: f64,
    pub manifests: Vec<RunManifest>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvaluateError {
    #[error("no run directories given")]
    NoRuns,
    #[error("run {other} covers different patient/trial pairs than run {first}")]
    DifferentPairs { first: String, other: String },
    #[error("two runs share the label {0}; relabel one with --label when matching")]
    DuplicateLabel(String),
    #[error("ranking metrics for {label}: {source}")]
    Ranking { label: String, source: MetricError },
}

pub struct EvaluateInputs<'a> {
    pub runs: &'a [LoadedRun],
    pub judgments: Option<&'a [RelevanceJudgment]>,
    pub annotations: Option<&'a [GoldCriterionAnnotation]>,
    pub verdicts: &'a [HumanVerdict],
    pub ranking: RankingOptions,
    pub align_threshold: f64,
}

/// Runs must cover the same pairs and carry distinct labels so that
/// their numbers are comparable.
pub fn check_comparable(runs: &[LoadedRun]) -> Result<(), EvaluateError> {
    let first = runs.first().ok_or(EvaluateError::NoRuns)?;
    let pairs = first.pair_set();
    let mut labels = BTreeSet::new();
    for r in runs {
        if !labels.insert(r.label.as_str()) {
            return Err(EvaluateError::DuplicateLabel(r.label.clone()));
        }
        if r.pair_set() != pairs {
            return Err(EvaluateError::DifferentPairs {
                first: first.label.clone(),
                other: r.label.clone(),
            });
        }
    }
    Ok(())
}

pub fn evaluate(inputs: &EvaluateInputs<'_>) -> Result<EvaluationReport, EvaluateError> {
    check_comparable(inputs.runs)?;
    let indexes: Vec<PredictionIndex<'_>> = inputs
        .runs
        .iter()
        .map(|r| PredictionIndex::new(r.results.iter().filter_map(|p| p.assessment())))
        .collect();

    let mut models = Vec::new();
    for (run, index) in inputs.runs.iter().zip(&indexes) {
        let ranking = inputs
            .judgments
            .map(|j| rank_eval(&run.ranked, j, inputs.ranking))
            .transpose()
            .map_err(|source| EvaluateError::Ranking {
                label: run.label.clone(),
                source,
            })?;
        let criterion = inputs
            .annotations
            .map(|gold| criterion_eval(index, gold, inputs.align_threshold));
        models.push(ModelReport {
            label: run.label.clone(),
            ranking,
            criterion,
            pairs: run.results.len(),
            failed_pairs: run
                .results
                .iter()
                .filter(|r| r.assessment().is_none())
                .count(),
        });
    }

    let mut matrices = Vec::new();
    if let Some(gold) = inputs.annotations {
        for a in 0..inputs.runs.len() {
            for b in a + 1..inputs.runs.len() {
                matrices.push(head_to_head(
                    (&inputs.runs[a].label, &indexes[a]),
                    (&inputs.runs[b].label, &indexes[b]),
                    gold,
                    inputs.verdicts,
                    inputs.align_threshold,
                ));
            }
        }
    }

    Ok(EvaluationReport {
        models,
        head_to_head: matrices,
        ranking_options: inputs.ranking,
        align_threshold: inputs.align_threshold,
        manifests: inputs.runs.iter().map(|r| r.manifest.clone()).collect(),
    })
}

pub const SUMMARY_COLUMNS: [&str; 12] = [
    "model",
    "ndcg_at_10",
    "precision_at_10",
    "auroc",
    "explicit_cla",
    "implicit_cla",
    "overall_cla",
    "evidence_precision",
    "evidence_recall",
    "evidence_f1",
    "pairs",
    "failed_pairs",
];

/// One tab-separated row per model under a header; missing values are empty.
pub fn summary_tsv(report: &EvaluationReport) -> String {
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = SUMMARY_COLUMNS.join("\t");
    out.push('\n');
    for m in &report.models {
        let r = m.ranking.as_ref();
        let c = m.criterion.as_ref();
        let cells = [
            m.label.replace(['\t', '\n'], " "),
            cell(r.map(|r| r.ndcg_at_10)),
            cell(r.map(|r| r.precision_at_10)),
            cell(r.map(|r| r.auroc)),
            cell(c.and_then(|c| c.explicit_cla)),
            cell(c.and_then(|c| c.implicit_cla)),
            cell(c.and_then(|c| c.overall_cla)),
            cell(c.map(|c| c.evidence_precision)),
            cell(c.map(|c| c.evidence_recall)),
            cell(c.map(|c| c.evidence_f1)),
            m.pairs.to_string(),
            m.failed_pairs.to_string(),
        ];
        let _ = writeln!(out, "{}", cells.join("\t"));
    }
    out
}
