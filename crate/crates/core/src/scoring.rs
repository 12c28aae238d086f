//! Trial-level scores derived from criterion labels.
//!
//! All percentages are fractions in `[0, 1]`. "no relevant information"
//! counts towards the denominator of its list but is neither met nor unmet,
//! and an empty list contributes 0 to every fraction.

use serde::{Deserialize, Serialize};

use crate::model::{CriterionAssessment, EligibilityLabel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    /// `met_incl - met_excl`, in `[-1, 1]`.
    pub rank_score: f64,
    /// `[unmet_incl > 0] + [met_excl > 0] - met_incl`, in `[-1, 2]`.
    pub exclusion_score: f64,
}

/// Per-list label tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelCounts {
    pub total: usize,
    pub met: usize,
    pub unmet: usize,
}

impl LabelCounts {
    pub fn tally<I: IntoIterator<Item = EligibilityLabel>>(labels: I) -> Self {
        let mut counts = LabelCounts::default();
        for label in labels {
            counts.total += 1;
            match label {
                EligibilityLabel::Included | EligibilityLabel::Excluded => counts.met += 1,
                EligibilityLabel::NotIncluded | EligibilityLabel::NotExcluded => counts.unmet += 1,
                EligibilityLabel::NoRelevantInformation => {}
            }
        }
        counts
    }

    fn fraction(part: usize, total: usize) -> f64 {
        if total == 0 {
            0.0
        } else {
            part as f64 / total as f64
        }
    }

    pub fn met_fraction(&self) -> f64 {
        Self::fraction(self.met, self.total)
    }

    pub fn unmet_fraction(&self) -> f64 {
        Self::fraction(self.unmet, self.total)
    }
}

fn indicator(condition: bool) -> f64 {
    if condition {
        1.0
    } else {
        0.0
    }
}

pub fn scores_from_counts(inclusion: LabelCounts, exclusion: LabelCounts) -> Scores {
    let met_incl = inclusion.met_fraction();
    let unmet_incl = inclusion.unmet_fraction();
    let met_excl = exclusion.met_fraction();
    Scores {
        rank_score: met_incl - met_excl,
        exclusion_score: indicator(unmet_incl > 0.0) + indicator(met_excl > 0.0) - met_incl,
    }
}

pub fn scores_from_labels<I, E>(inclusion: I, exclusion: E) -> Scores
where
    I: IntoIterator<Item = EligibilityLabel>,
    E: IntoIterator<Item = EligibilityLabel>,
{
    scores_from_counts(LabelCounts::tally(inclusion), LabelCounts::tally(exclusion))
}

/// Rank score and exclusion score for one patient/trial pair.
///
/// Lists are assumed to respect the kind restriction on labels; an
/// inclusion-only label in the exclusion list would still count as met.
pub fn compute_scores(
    inclusion: &[CriterionAssessment],
    exclusion: &[CriterionAssessment],
) -> Scores {
    scores_from_labels(
        inclusion.iter().map(|a| a.label),
        exclusion.iter().map(|a| a.label),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CriterionKind;
    use alloc::string::String;
    use alloc::vec::Vec;
    use EligibilityLabel::*;

    fn list(kind: CriterionKind, labels: &[EligibilityLabel]) -> Vec<CriterionAssessment> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &label)| CriterionAssessment {
                criterion_text: alloc::format!("c{i}"),
                kind,
                explanation: String::new(),
                evidence_ids: Vec::new(),
                label,
            })
            .collect()
    }

    #[test]
    fn mixed_labels() {
        let s = compute_scores(
            &list(
                CriterionKind::Inclusion,
                &[Included, Included, Included, NoRelevantInformation],
            ),
            &list(CriterionKind::Exclusion, &[Excluded, NotExcluded]),
        );
        assert_eq!(s.rank_score, 0.25);
        assert_eq!(s.exclusion_score, 0.25);
    }

    #[test]
    fn all_met_no_exclusions() {
        let s = compute_scores(&list(CriterionKind::Inclusion, &[Included, Included]), &[]);
        assert_eq!(s.rank_score, 1.0);
        assert_eq!(s.exclusion_score, -1.0);
    }

    #[test]
    fn unmet_inclusion_fires_indicator() {
        let s = compute_scores(
            &list(CriterionKind::Inclusion, &[Included, NotIncluded]),
            &list(
                CriterionKind::Exclusion,
                &[NotExcluded, NotExcluded, NoRelevantInformation],
            ),
        );
        assert_eq!(s.rank_score, 0.5);
        assert_eq!(s.exclusion_score, 0.5);
    }

    #[test]
    fn empty_lists_score_zero() {
        let s = compute_scores(&[], &[]);
        assert_eq!(s.rank_score, 0.0);
        assert_eq!(s.exclusion_score, 0.0);
    }

    #[test]
    fn no_relevant_information_is_neither_met_nor_unmet() {
        let s = scores_from_labels([NoRelevantInformation], [NoRelevantInformation]);
        assert_eq!(s.rank_score, 0.0);
        assert_eq!(s.exclusion_score, 0.0);
    }
}
