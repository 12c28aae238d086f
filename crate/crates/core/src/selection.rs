//! Building a diverse annotation set from model predictions.
//!
//! The pool moves through five stages: all predicted criteria, those left
//! after dropping demographic criteria, a per-label sample, the novel subset
//! whose ROUGE-L similarity to everything accepted before stays under `tau`,
//! and a final per-label sample of that.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{CriterionKind, EligibilityLabel, TrialAssessment};
use crate::rouge::{rouge_against_tokenized, tokenize, SetAggregation};

pub const DEFAULT_TAU: f64 = 0.7;
pub const DEFAULT_SELECTED_PER_LABEL: usize = 500;
pub const DEFAULT_FINAL_PER_LABEL: usize = 100;

/// Criteria mentioning any of these words are dropped before selection.
pub const DEMOGRAPHIC_TOKENS: [&str; 2] = ["age", "gender"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CriterionRow {
    pub criterion_text: String,
    pub predicted_label: EligibilityLabel,
    pub patient_id: String,
    pub trial_id: String,
    pub kind: CriterionKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Predicted,
    Reduced,
    Selected,
    Novel,
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("tau must be in (0, 1], got {0}")]
pub struct InvalidTau(pub f64);

/// Flattens assessments into one row per criterion.
pub fn rows_from_assessments<'a, I>(assessments: I) -> Vec<CriterionRow>
where
    I: IntoIterator<Item = &'a TrialAssessment>,
{
    assessments
        .into_iter()
        .flat_map(|t| {
            t.all_criteria().map(move |c| CriterionRow {
                criterion_text: c.criterion_text.clone(),
                predicted_label: c.label,
                patient_id: t.patient_id().into(),
                trial_id: t.trial_id().into(),
                kind: c.kind,
            })
        })
        .collect()
}

/// True when `text` contains a demographic word as a whole token
/// (so "triage" and "agent" do not count).
pub fn mentions_demographics(text: &str) -> bool {
    text.split(|c: char| !c.is_alphanumeric())
        .any(|w| DEMOGRAPHIC_TOKENS.iter().any(|d| w.eq_ignore_ascii_case(d)))
}

pub fn filter_demographics(rows: &[CriterionRow]) -> Vec<CriterionRow> {
    rows.iter()
        .filter(|r| !mentions_demographics(&r.criterion_text))
        .cloned()
        .collect()
}

/// Labels in lexicographic order of their string forms.
pub fn label_order() -> [EligibilityLabel; 5] {
    let mut labels = EligibilityLabel::ALL;
    labels.sort_by_key(|l| l.as_str());
    labels
}

fn group_by_label(rows: &[CriterionRow]) -> BTreeMap<&'static str, Vec<usize>> {
    let mut groups: BTreeMap<&'static str, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        groups
            .entry(r.predicted_label.as_str())
            .or_default()
            .push(i);
    }
    groups
}

/// Novelty filter. Labels are visited in lexicographic order and rows in
/// input order; a row is kept when `1 - score / tau > 0`, where `score` is
/// its similarity to every row kept so far (across all labels).
pub fn select_novel(
    rows: &[CriterionRow],
    tau: f64,
    aggregation: SetAggregation,
) -> Result<Vec<CriterionRow>, InvalidTau> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(InvalidTau(tau));
    }
    let mut accepted_tokens: Vec<Vec<String>> = Vec::new();
    let mut novel = Vec::new();
    for indices in group_by_label(rows).values() {
        for &i in indices {
            let tokens = tokenize(&rows[i].criterion_text);
            let score = rouge_against_tokenized(&tokens, &accepted_tokens, aggregation);
            let novelty = 1.0 - score / tau;
            if novelty > 0.0 {
                accepted_tokens.push(tokens);
                novel.push(rows[i].clone());
            }
        }
    }
    Ok(novel)
}

/// Uniform sample without replacement of up to `per_label` rows for each
/// predicted label. Output is grouped by label in lexicographic order and
/// keeps input order within a label.
pub fn sample_per_label(rows: &[CriterionRow], per_label: usize, seed: u64) -> Vec<CriterionRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for indices in group_by_label(rows).values() {
        let amount = per_label.min(indices.len());
        let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, indices.len(), amount)
            .into_iter()
            .map(|k| indices[k])
            .collect();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| rows[i].clone()));
    }
    out
}

pub fn sample_final(novel: &[CriterionRow], per_label: usize, seed: u64) -> Vec<CriterionRow> {
    sample_per_label(novel, per_label, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub tau: f64,
    pub selected_per_label: usize,
    pub final_per_label: usize,
    pub seed: u64,
    pub aggregation: SetAggregation,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            tau: DEFAULT_TAU,
            selected_per_label: DEFAULT_SELECTED_PER_LABEL,
            final_per_label: DEFAULT_FINAL_PER_LABEL,
            seed: 0,
            aggregation: SetAggregation::Max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPool {
    pub predicted: Vec<CriterionRow>,
    pub reduced: Vec<CriterionRow>,
    pub selected: Vec<CriterionRow>,
    pub novel: Vec<CriterionRow>,
    pub final_rows: Vec<CriterionRow>,
    pub tau: f64,
}

impl SelectionPool {
    /// Runs every stage. The selected and final samples use different
    /// streams derived from `config.seed`.
    pub fn build(
        predicted: Vec<CriterionRow>,
        config: &SelectionConfig,
    ) -> Result<Self, InvalidTau> {
        let reduced = filter_demographics(&predicted);
        let selected = sample_per_label(&reduced, config.selected_per_label, config.seed);
        let novel = select_novel(&selected, config.tau, config.aggregation)?;
        let final_rows = sample_final(&novel, config.final_per_label, config.seed.wrapping_add(1));
        Ok(SelectionPool {
            predicted,
            reduced,
            selected,
            novel,
            final_rows,
            tau: config.tau,
        })
    }

    pub fn stage(&self, stage: Stage) -> &[CriterionRow] {
        match stage {
            Stage::Predicted => &self.predicted,
            Stage::Reduced => &self.reduced,
            Stage::Selected => &self.selected,
            Stage::Novel => &self.novel,
            Stage::Final => &self.final_rows,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rouge::rouge_against_set;
    use alloc::vec;
    use proptest::prelude::*;

    fn row(text: &str, label: EligibilityLabel) -> CriterionRow {
        CriterionRow {
            criterion_text: text.into(),
            predicted_label: label,
            patient_id: "p".into(),
            trial_id: "t".into(),
            kind: CriterionKind::Exclusion,
        }
    }

    #[test]
    fn demographic_filter_uses_whole_words() {
        let rows = vec![
            row("Age > 18 years", EligibilityLabel::Excluded),
            row("history of diabetes", EligibilityLabel::Excluded),
            row("triage within 24h", EligibilityLabel::Excluded),
            row("Gender-specific cancers", EligibilityLabel::Excluded),
            row("agent orange exposure", EligibilityLabel::Excluded),
        ];
        let filtered = filter_demographics(&rows);
        let kept: Vec<&str> = filtered.iter().map(|r| r.criterion_text.as_str()).collect();
        assert_eq!(
            kept,
            vec![
                "history of diabetes",
                "triage within 24h",
                "agent orange exposure"
            ]
        );
    }

    #[test]
    fn duplicates_are_not_novel() {
        let rows = vec![
            row("no prior chemotherapy", EligibilityLabel::Excluded),
            row("no prior chemotherapy", EligibilityLabel::Excluded),
            row("pregnant or nursing", EligibilityLabel::Excluded),
        ];
        let novel = select_novel(&rows, 0.7, SetAggregation::Max).unwrap();
        assert_eq!(novel, vec![rows[0].clone(), rows[2].clone()]);
        assert!(select_novel(&[], 0.7, SetAggregation::Max)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn accepted_set_is_shared_across_labels() {
        let rows = vec![
            row("pregnant or nursing", EligibilityLabel::NotExcluded),
            row("pregnant or nursing", EligibilityLabel::Excluded),
        ];
        let novel = select_novel(&rows, 0.7, SetAggregation::Max).unwrap();
        // "excluded" sorts before "not excluded"
        assert_eq!(novel, vec![rows[1].clone()]);
    }

    #[test]
    fn tau_out_of_range() {
        assert_eq!(
            select_novel(&[], 0.0, SetAggregation::Max),
            Err(InvalidTau(0.0))
        );
        assert_eq!(
            select_novel(&[], 1.5, SetAggregation::Max),
            Err(InvalidTau(1.5))
        );
        assert!(select_novel(&[], 1.0, SetAggregation::Max).is_ok());
    }

    #[test]
    fn label_order_is_lexicographic() {
        let names: Vec<&str> = label_order().iter().map(|l| l.as_str()).collect();
        assert_eq!(
            names,
            vec![
                "excluded",
                "included",
                "no relevant information",
                "not excluded",
                "not included"
            ]
        );
    }

    #[test]
    fn sampling_caps_and_is_deterministic() {
        let mut rows = Vec::new();
        for i in 0..500 {
            rows.push(row(&alloc::format!("inc {i}"), EligibilityLabel::Included));
            rows.push(row(&alloc::format!("exc {i}"), EligibilityLabel::Excluded));
        }
        for i in 0..3 {
            rows.push(row(
                &alloc::format!("nri {i}"),
                EligibilityLabel::NoRelevantInformation,
            ));
        }
        let a = sample_final(&rows, 100, 42);
        let count = |l: EligibilityLabel| a.iter().filter(|r| r.predicted_label == l).count();
        assert_eq!(count(EligibilityLabel::Included), 100);
        assert_eq!(count(EligibilityLabel::Excluded), 100);
        assert_eq!(count(EligibilityLabel::NoRelevantInformation), 3);
        assert_eq!(a, sample_final(&rows, 100, 42));
        assert_ne!(a, sample_final(&rows, 100, 43));
    }

    fn arb_rows() -> impl Strategy<Value = Vec<CriterionRow>> {
        let word = proptest::sample::select(vec![
            "prior",
            "chemotherapy",
            "pregnant",
            "nursing",
            "diabetes",
            "no",
            "history",
            "of",
            "cancer",
            "renal",
        ]);
        let text = proptest::collection::vec(word, 1..6).prop_map(|w| w.join(" "));
        let label = proptest::sample::select(EligibilityLabel::ALL.to_vec());
        proptest::collection::vec((text, label), 0..40)
            .prop_map(|v| v.into_iter().map(|(t, l)| row(&t, l)).collect())
    }

    fn is_submultiset(small: &[CriterionRow], big: &[CriterionRow]) -> bool {
        let mut counts: BTreeMap<(String, &'static str, String), i64> = BTreeMap::new();
        for r in big {
            *counts
                .entry((
                    r.criterion_text.clone(),
                    r.predicted_label.as_str(),
                    r.trial_id.clone(),
                ))
                .or_default() += 1;
        }
        small.iter().all(|r| {
            let c = counts
                .entry((
                    r.criterion_text.clone(),
                    r.predicted_label.as_str(),
                    r.trial_id.clone(),
                ))
                .or_default();
            *c -= 1;
            *c >= 0
        })
    }

    proptest! {
        #[test]
        fn novel_rows_are_dissimilar_to_earlier_ones(rows in arb_rows(), tau in proptest::sample::select(vec![0.5, 0.7, 0.9])) {
            let novel = select_novel(&rows, tau, SetAggregation::Max).unwrap();
            for (i, r) in novel.iter().enumerate() {
                let earlier: Vec<&str> = novel[..i].iter().map(|e| e.criterion_text.as_str()).collect();
                prop_assert!(rouge_against_set(&r.criterion_text, &earlier, SetAggregation::Max) < tau);
            }
            prop_assert_eq!(select_novel(&novel, tau, SetAggregation::Max).unwrap(), novel);
        }

        #[test]
        fn demographic_filter_is_idempotent(rows in arb_rows()) {
            let once = filter_demographics(&rows);
            prop_assert_eq!(filter_demographics(&once), once);
        }

        #[test]
        fn pool_stages_nest(rows in arb_rows(), seed in 0u64..1000) {
            let pool = SelectionPool::build(rows, &SelectionConfig {
                selected_per_label: 6,
                final_per_label: 3,
                seed,
                ..SelectionConfig::default()
            }).unwrap();
            prop_assert!(is_submultiset(&pool.reduced, &pool.predicted));
            prop_assert!(is_submultiset(&pool.selected, &pool.reduced));
            prop_assert!(is_submultiset(&pool.novel, &pool.selected));
            prop_assert!(is_submultiset(&pool.final_rows, &pool.novel));
        }
    }
}
