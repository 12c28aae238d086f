//! Patient/trial corpora: validation, relevance mapping, the patient-axis
//! train/test split and summary statistics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{ClinicalTrial, PatientNote, Relevance, RelevanceJudgment};

pub const DEFAULT_TEST_RATIO: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("duplicate patient id {0}")]
    DuplicatePatient(String),
    #[error("trial id must not be empty")]
    EmptyTrialId,
    #[error("duplicate trial id {0}")]
    DuplicateTrial(String),
    #[error("judgment references unknown patient {0}")]
    UnknownPatient(String),
    #[error("judgment references unknown trial {0}")]
    UnknownTrial(String),
    #[error("more than one judgment for patient {patient_id} and trial {trial_id}")]
    DuplicateJudgment {
        patient_id: String,
        trial_id: String,
    },
    #[error("relevance code {0} is not one of 0, 1, 2")]
    BadRelevanceCode(i64),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    patients: Vec<PatientNote>,
    trials: Vec<ClinicalTrial>,
    judgments: Vec<RelevanceJudgment>,
}

impl Corpus {
    pub fn new(
        patients: Vec<PatientNote>,
        trials: Vec<ClinicalTrial>,
        judgments: Vec<RelevanceJudgment>,
    ) -> Result<Self, CorpusError> {
        let mut patient_ids = BTreeSet::new();
        for p in &patients {
            if !patient_ids.insert(p.patient_id()) {
                return Err(CorpusError::DuplicatePatient(p.patient_id().into()));
            }
        }
        let mut trial_ids = BTreeSet::new();
        for t in &trials {
            if t.trial_id.is_empty() {
                return Err(CorpusError::EmptyTrialId);
            }
            if !trial_ids.insert(t.trial_id.as_str()) {
                return Err(CorpusError::DuplicateTrial(t.trial_id.clone()));
            }
        }
        let mut pairs = BTreeSet::new();
        for j in &judgments {
            if !patient_ids.contains(j.patient_id.as_str()) {
                return Err(CorpusError::UnknownPatient(j.patient_id.clone()));
            }
            if !trial_ids.contains(j.trial_id.as_str()) {
                return Err(CorpusError::UnknownTrial(j.trial_id.clone()));
            }
            if !pairs.insert((j.patient_id.as_str(), j.trial_id.as_str())) {
                return Err(CorpusError::DuplicateJudgment {
                    patient_id: j.patient_id.clone(),
                    trial_id: j.trial_id.clone(),
                });
            }
        }
        Ok(Corpus {
            patients,
            trials,
            judgments,
        })
    }

    pub fn patients(&self) -> &[PatientNote] {
        &self.patients
    }

    pub fn trials(&self) -> &[ClinicalTrial] {
        &self.trials
    }

    pub fn judgments(&self) -> &[RelevanceJudgment] {
        &self.judgments
    }

    pub fn patient(&self, id: &str) -> Option<&PatientNote> {
        self.patients.iter().find(|p| p.patient_id() == id)
    }

    pub fn trial(&self, id: &str) -> Option<&ClinicalTrial> {
        self.trials.iter().find(|t| t.trial_id == id)
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    /// Map from patient id to note, for repeated lookups.
    pub fn patient_index(&self) -> BTreeMap<&str, &PatientNote> {
        self.patients.iter().map(|p| (p.patient_id(), p)).collect()
    }

    pub fn trial_index(&self) -> BTreeMap<&str, &ClinicalTrial> {
        self.trials
            .iter()
            .map(|t| (t.trial_id.as_str(), t))
            .collect()
    }
}

/// Graded qrels code: 0 irrelevant, 1 excluded, 2 eligible.
pub fn map_qrels_grade(code: i64) -> Result<Relevance, CorpusError> {
    u8::try_from(code)
        .ok()
        .and_then(Relevance::from_grade)
        .ok_or(CorpusError::BadRelevanceCode(code))
}

/// SIGIR referral classes: 0 "will not refer" is irrelevant, 2 "will refer"
/// is eligible, and 1 "may refer" has no counterpart so the pair is dropped
/// (`None`).
pub fn map_sigir_label(code: i64) -> Result<Option<Relevance>, CorpusError> {
    match code {
        0 => Ok(Some(Relevance::Irrelevant)),
        1 => Ok(None),
        2 => Ok(Some(Relevance::Eligible)),
        other => Err(CorpusError::BadRelevanceCode(other)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub train: Corpus,
    pub test: Corpus,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SplitError {
    #[error("test ratio must be strictly between 0 and 1, got {0}")]
    Ratio(f64),
    #[error("cannot split an empty corpus")]
    Empty,
}

/// Number of test patients for `n` patients: the ratio rounded up, kept
/// within `1..n` whenever there are at least two patients.
pub fn test_patient_count(n: usize, ratio: f64) -> usize {
    let raw = libm::ceil(n as f64 * ratio - 1e-9) as usize;
    if n < 2 {
        return n;
    }
    raw.clamp(1, n - 1)
}

/// Shuffles the lexicographically sorted patient ids with a seeded ChaCha8
/// stream and puts the first `test_patient_count` of them in the test set.
/// Judgments follow their patient; both sides keep the full trial list.
pub fn split_by_patient(
    corpus: &Corpus,
    test_ratio: f64,
    seed: u64,
) -> Result<SplitResult, SplitError> {
    if !(test_ratio > 0.0 && test_ratio < 1.0) {
        return Err(SplitError::Ratio(test_ratio));
    }
    if corpus.is_empty() {
        return Err(SplitError::Empty);
    }
    let mut ids: Vec<&str> = corpus.patients.iter().map(|p| p.patient_id()).collect();
    ids.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n_test = test_patient_count(ids.len(), test_ratio);
    let test_ids: BTreeSet<&str> = ids[..n_test].iter().copied().collect();

    let side = |in_test: bool| Corpus {
        patients: corpus
            .patients
            .iter()
            .filter(|p| test_ids.contains(p.patient_id()) == in_test)
            .cloned()
            .collect(),
        trials: corpus.trials.clone(),
        judgments: corpus
            .judgments
            .iter()
            .filter(|j| test_ids.contains(j.patient_id.as_str()) == in_test)
            .cloned()
            .collect(),
    };
    Ok(SplitResult {
        train: side(false),
        test: side(true),
        seed,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return MeanStd::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MeanStd {
            mean,
            std: libm::sqrt(var),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub pairs: usize,
    pub patients: usize,
    /// Distinct trials that appear in at least one judgment.
    pub trials: usize,
    pub trials_per_patient: MeanStd,
    pub irrelevant_per_patient: MeanStd,
    pub excluded_per_patient: MeanStd,
    pub eligible_per_patient: MeanStd,
    pub words_per_patient: MeanStd,
    pub sentences_per_patient: MeanStd,
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut per_patient: BTreeMap<&str, [usize; 3]> = corpus
        .patients
        .iter()
        .map(|p| (p.patient_id(), [0; 3]))
        .collect();
    let mut trials = BTreeSet::new();
    for j in &corpus.judgments {
        trials.insert(j.trial_id.as_str());
        if let Some(counts) = per_patient.get_mut(j.patient_id.as_str()) {
            counts[usize::from(j.relevance.grade())] += 1;
        }
    }
    let column = |f: &dyn Fn(&[usize; 3]) -> usize| -> MeanStd {
        let v: Vec<f64> = per_patient.values().map(|c| f(c) as f64).collect();
        MeanStd::of(&v)
    };
    let words: Vec<f64> = corpus
        .patients
        .iter()
        .map(|p| p.word_count() as f64)
        .collect();
    let sentences: Vec<f64> = corpus.patients.iter().map(|p| p.len() as f64).collect();
    CorpusStats {
        pairs: corpus.judgments.len(),
        patients: corpus.patients.len(),
        trials: trials.len(),
        trials_per_patient: column(&|c| c.iter().sum()),
        irrelevant_per_patient: column(&|c| c[0]),
        excluded_per_patient: column(&|c| c[1]),
        eligible_per_patient: column(&|c| c[2]),
        words_per_patient: MeanStd::of(&words),
        sentences_per_patient: MeanStd::of(&sentences),
    }
}
