//! Ranking and criterion-level evaluation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::matching::RankedList;
use crate::model::{
    CriterionAssessment, CriterionKind, EligibilityLabel, GoldCriterionAnnotation, ReasoningMode,
    Relevance, RelevanceJudgment, TrialAssessment,
};
use crate::rouge::align_criterion;

pub const RANKING_CUTOFF: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error(
        "AUROC needs at least one positive and one negative (got {positives} and {negatives})"
    )]
    DegenerateClasses { positives: usize, negatives: usize },
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("no patient has both eligible and excluded trials")]
    NoPatientAuroc,
    #[error("no gold annotation was matched to a prediction")]
    NothingMatched,
    #[error("patient {0} has no relevance judgments")]
    MissingJudgments(String),
}

fn gain(grade: u8) -> f64 {
    f64::from((1u32 << grade) - 1)
}

fn dcg(grades: &[u8], k: usize) -> f64 {
    grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain(g) / libm::log2(i as f64 + 2.0))
        .sum()
}

/// NDCG@k with gain `2^rel - 1` and a `log2(i + 1)` discount. The ideal
/// ordering is the same grades sorted descending; 0 when every grade is 0.
pub fn ndcg_at_k(ranked_grades: &[u8], k: usize) -> f64 {
    let mut ideal = ranked_grades.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(&ideal, k);
    if idcg == 0.0 {
        0.0
    } else {
        dcg(ranked_grades, k) / idcg
    }
}

/// Fraction of the top `min(k, n)` entries that are eligible (grade 2).
pub fn precision_at_k(ranked_grades: &[u8], k: usize) -> f64 {
    let depth = k.min(ranked_grades.len());
    if depth == 0 {
        return 0.0;
    }
    let hits = ranked_grades[..depth]
        .iter()
        .filter(|&&g| g == Relevance::Eligible.grade())
        .count();
    hits as f64 / depth as f64
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed from average ranks in `O(n log n)`.
pub fn auroc(scores: &[f64], positive: &[bool]) -> Result<f64, MetricError> {
    if scores.len() != positive.len() {
        return Err(MetricError::LengthMismatch {
            scores: scores.len(),
            labels: positive.len(),
        });
    }
    let positives = positive.iter().filter(|&&p| p).count();
    let negatives = positive.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricError::DegenerateClasses {
            positives,
            negatives,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut positive_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1 ..= end share their mean
        let mean_rank = (start + end + 1) as f64 / 2.0;
        let tied_positives = order[start..end].iter().filter(|&&i| positive[i]).count();
        positive_rank_sum += mean_rank * tied_positives as f64;
        start = end;
    }
    let p = positives as f64;
    let n = negatives as f64;
    Ok((positive_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Which score ranks trials for AUROC.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AurocScore {
    #[default]
    RankScore,
    NegatedExclusionScore,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AurocMode {
    #[default]
    Pooled,
    PerPatientMean,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingOptions {
    pub score: AurocScore,
    pub mode: AurocMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRankingEval {
    pub ndcg_at_10: f64,
    pub precision_at_10: f64,
    /// `None` when the patient lacks eligible or excluded trials.
    pub auroc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingEval {
    pub ndcg_at_10: f64,
    pub precision_at_10: f64,
    pub auroc: f64,
    pub per_patient: BTreeMap<String, PatientRankingEval>,
}

/// NDCG@10 and P@10 averaged over patients; AUROC separates eligible from
/// excluded trials (irrelevant ones are left out). Unjudged trials get
/// grade 0 and failed pairs score negative infinity.
pub fn rank_eval(
    ranked_lists: &[RankedList],
    judgments: &[RelevanceJudgment],
    options: RankingOptions,
) -> Result<RankingEval, MetricError> {
    let mut qrels: BTreeMap<&str, BTreeMap<&str, Relevance>> = BTreeMap::new();
    for j in judgments {
        qrels
            .entry(j.patient_id.as_str())
            .or_default()
            .insert(j.trial_id.as_str(), j.relevance);
    }

    let mut per_patient = BTreeMap::new();
    let mut pooled_scores = Vec::new();
    let mut pooled_labels = Vec::new();
    for list in ranked_lists {
        let patient_qrels = qrels
            .get(list.patient_id.as_str())
            .ok_or_else(|| MetricError::MissingJudgments(list.patient_id.clone()))?;
        let mut grades = Vec::with_capacity(list.entries.len());
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for entry in &list.entries {
            let relevance = patient_qrels
                .get(entry.trial_id.as_str())
                .copied()
                .unwrap_or(Relevance::Irrelevant);
            grades.push(relevance.grade());
            if relevance != Relevance::Irrelevant {
                let score = match options.score {
                    AurocScore::RankScore => entry.rank_score.unwrap_or(f64::NEG_INFINITY),
                    AurocScore::NegatedExclusionScore => {
                        entry.exclusion_score.map_or(f64::NEG_INFINITY, |e| -e)
                    }
                };
                scores.push(score);
                labels.push(relevance == Relevance::Eligible);
            }
        }
        per_patient.insert(
            list.patient_id.clone(),
            PatientRankingEval {
                ndcg_at_10: ndcg_at_k(&grades, RANKING_CUTOFF),
                precision_at_10: precision_at_k(&grades, RANKING_CUTOFF),
                auroc: auroc(&scores, &labels).ok(),
            },
        );
        pooled_scores.extend(scores);
        pooled_labels.extend(labels);
    }

    let n = per_patient.len().max(1) as f64;
    let ndcg = per_patient.values().map(|p| p.ndcg_at_10).sum::<f64>() / n;
    let precision = per_patient.values().map(|p| p.precision_at_10).sum::<f64>() / n;
    let auroc_value = match options.mode {
        AurocMode::Pooled => auroc(&pooled_scores, &pooled_labels)?,
        AurocMode::PerPatientMean => {
            let defined: Vec<f64> = per_patient.values().filter_map(|p| p.auroc).collect();
            if defined.is_empty() {
                return Err(MetricError::NoPatientAuroc);
            }
            defined.iter().sum::<f64>() / defined.len() as f64
        }
    };
    Ok(RankingEval {
        ndcg_at_10: ndcg,
        precision_at_10: precision,
        auroc: auroc_value,
        per_patient,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeFilter {
    Explicit,
    Implicit,
    All,
}

impl ModeFilter {
    fn admits(self, mode: ReasoningMode) -> bool {
        match self {
            ModeFilter::All => true,
            ModeFilter::Explicit => mode == ReasoningMode::Explicit,
            ModeFilter::Implicit => mode == ReasoningMode::Implicit,
        }
    }
}

type PairKey<'a> = (&'a str, &'a str, CriterionKind);

/// Predictions indexed by (patient, trial, kind), ready for alignment.
pub struct PredictionIndex<'a> {
    by_pair: BTreeMap<PairKey<'a>, Vec<&'a CriterionAssessment>>,
}

impl<'a> PredictionIndex<'a> {
    pub fn new<I>(assessments: I) -> Self
    where
        I: IntoIterator<Item = &'a TrialAssessment>,
    {
        let mut by_pair: BTreeMap<PairKey<'a>, Vec<&'a CriterionAssessment>> = BTreeMap::new();
        for t in assessments {
            for c in t.all_criteria() {
                by_pair
                    .entry((t.patient_id(), t.trial_id(), c.kind))
                    .or_default()
                    .push(c);
            }
        }
        PredictionIndex { by_pair }
    }

    /// The prediction for the same pair and kind whose text best matches the
    /// gold criterion, if it reaches `threshold`.
    pub fn align(
        &self,
        gold: &GoldCriterionAnnotation,
        threshold: f64,
    ) -> Option<&'a CriterionAssessment> {
        let candidates =
            self.by_pair
                .get(&(gold.patient_id.as_str(), gold.trial_id.as_str(), gold.kind))?;
        let texts: Vec<&str> = candidates
            .iter()
            .map(|c| c.criterion_text.as_str())
            .collect();
        align_criterion(&gold.criterion_text, &texts, threshold).map(|i| candidates[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClaScore {
    pub accuracy: f64,
    pub n_correct: usize,
    pub n_matched: usize,
    pub n_unmatched_gold: usize,
}

/// Criterion-level accuracy over gold annotations admitted by `filter`.
/// Gold criteria that align to no prediction are counted but left out of
/// the accuracy.
pub fn criterion_cla(
    predictions: &PredictionIndex<'_>,
    gold: &[GoldCriterionAnnotation],
    filter: ModeFilter,
    threshold: f64,
) -> Result<ClaScore, MetricError> {
    let mut n_correct = 0;
    let mut n_matched = 0;
    let mut n_unmatched_gold = 0;
    for g in gold.iter().filter(|g| filter.admits(g.reasoning_mode)) {
        match predictions.align(g, threshold) {
            Some(p) => {
                n_matched += 1;
                if p.label == g.gold_label {
                    n_correct += 1;
                }
            }
            None => n_unmatched_gold += 1,
        }
    }
    if n_matched == 0 {
        return Err(MetricError::NothingMatched);
    }
    Ok(ClaScore {
        accuracy: n_correct as f64 / n_matched as f64,
        n_correct,
        n_matched,
        n_unmatched_gold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Micro-averaged precision, recall and F1 over (predicted, gold) id sets.
pub fn evidence_prf(pairs: &[(BTreeSet<usize>, BTreeSet<usize>)]) -> Prf {
    let mut overlap = 0usize;
    let mut predicted = 0usize;
    let mut gold = 0usize;
    for (p, g) in pairs {
        overlap += p.intersection(g).count();
        predicted += p.len();
        gold += g.len();
    }
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(overlap, predicted);
    let recall = ratio(overlap, gold);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf {
        precision,
        recall,
        f1,
    }
}

fn evidence_set(ids: &[i64]) -> BTreeSet<usize> {
    ids.iter()
        .filter_map(|&i| usize::try_from(i).ok())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionEval {
    pub explicit_cla: Option<f64>,
    pub implicit_cla: Option<f64>,
    pub overall_cla: Option<f64>,
    pub evidence_precision: f64,
    pub evidence_recall: f64,
    pub evidence_f1: f64,
    pub n_matched: usize,
    pub n_unmatched_gold: usize,
}

pub fn criterion_eval(
    predictions: &PredictionIndex<'_>,
    gold: &[GoldCriterionAnnotation],
    threshold: f64,
) -> CriterionEval {
    let cla = |filter| criterion_cla(predictions, gold, filter, threshold).ok();
    let overall = cla(ModeFilter::All);
    let pairs: Vec<_> = gold
        .iter()
        .filter_map(|g| {
            predictions.align(g, threshold).map(|p| {
                (
                    evidence_set(&p.evidence_ids),
                    g.gold_evidence_ids.iter().copied().collect(),
                )
            })
        })
        .collect();
    let prf = evidence_prf(&pairs);
    let n_matched = pairs.len();
    CriterionEval {
        explicit_cla: cla(ModeFilter::Explicit).map(|c| c.accuracy),
        implicit_cla: cla(ModeFilter::Implicit).map(|c| c.accuracy),
        overall_cla: overall.map(|c| c.accuracy),
        evidence_precision: prf.precision,
        evidence_recall: prf.recall,
        evidence_f1: prf.f1,
        n_matched,
        n_unmatched_gold: gold.len() - n_matched,
    }
}

/// A human call on which of two models answered a criterion better.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanVerdict {
    pub patient_id: String,
    pub trial_id: String,
    pub kind: CriterionKind,
    pub criterion_text: String,
    pub model_a: String,
    pub model_b: String,
    /// Name of the winning model, or `None` for a tie.
    pub winner: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadToHead {
    pub model_a: String,
    pub model_b: String,
    pub a_wins: usize,
    pub b_wins: usize,
    pub ties: usize,
    pub both_wrong: usize,
}

impl HeadToHead {
    pub fn disagreements(&self) -> usize {
        self.a_wins + self.b_wins + self.ties + self.both_wrong
    }
}

enum Outcome {
    A,
    B,
    Tie,
    BothWrong,
}

fn verdict_outcome(v: &HumanVerdict, model_a: &str, model_b: &str) -> Option<Outcome> {
    let same_models = (v.model_a == model_a && v.model_b == model_b)
        || (v.model_a == model_b && v.model_b == model_a);
    if !same_models {
        return None;
    }
    match v.winner.as_deref() {
        None => Some(Outcome::Tie),
        Some(w) if w == model_a => Some(Outcome::A),
        Some(w) if w == model_b => Some(Outcome::B),
        Some(_) => None,
    }
}

/// Win counts over gold criteria where both models produced a label and
/// the labels differ. A matching human verdict replaces the gold arbiter.
pub fn head_to_head(
    (model_a, preds_a): (&str, &PredictionIndex<'_>),
    (model_b, preds_b): (&str, &PredictionIndex<'_>),
    gold: &[GoldCriterionAnnotation],
    verdicts: &[HumanVerdict],
    threshold: f64,
) -> HeadToHead {
    let mut h = HeadToHead {
        model_a: model_a.into(),
        model_b: model_b.into(),
        a_wins: 0,
        b_wins: 0,
        ties: 0,
        both_wrong: 0,
    };
    for g in gold {
        let (Some(a), Some(b)) = (preds_a.align(g, threshold), preds_b.align(g, threshold)) else {
            continue;
        };
        if a.label == b.label {
            continue;
        }
        let human = verdicts
            .iter()
            .filter(|v| {
                v.patient_id == g.patient_id
                    && v.trial_id == g.trial_id
                    && v.kind == g.kind
                    && v.criterion_text.trim() == g.criterion_text.trim()
            })
            .find_map(|v| verdict_outcome(v, model_a, model_b));
        let outcome = human.unwrap_or_else(|| gold_outcome(a.label, b.label, g.gold_label));
        match outcome {
            Outcome::A => h.a_wins += 1,
            Outcome::B => h.b_wins += 1,
            Outcome::Tie => h.ties += 1,
            Outcome::BothWrong => h.both_wrong += 1,
        }
    }
    h
}

fn gold_outcome(a: EligibilityLabel, b: EligibilityLabel, gold: EligibilityLabel) -> Outcome {
    if a == gold {
        Outcome::A
    } else if b == gold {
        Outcome::B
    } else {
        Outcome::BothWrong
    }
}
