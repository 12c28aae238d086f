//! ROUGE-L over lowercase whitespace tokens.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Default threshold for aligning a predicted criterion with a gold one.
pub const DEFAULT_ALIGN_THRESHOLD: f64 = 0.9;

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(|t| t.to_lowercase()).collect()
}

/// Length of the longest common subsequence, with a single rolling row.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// ROUGE-L F1 between two token sequences. Equals `2 * lcs / (m + n)`, so it
/// is symmetric in its arguments.
pub fn rouge_l_tokens<T: PartialEq>(candidate: &[T], reference: &[T]) -> f64 {
    let lcs = lcs_len(candidate, reference);
    if lcs == 0 {
        return 0.0;
    }
    let precision = lcs as f64 / candidate.len() as f64;
    let recall = lcs as f64 / reference.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn rouge_l_f1(candidate: &str, reference: &str) -> f64 {
    rouge_l_tokens(&tokenize(candidate), &tokenize(reference))
}

/// How a candidate's scores against a set are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetAggregation {
    #[default]
    Max,
    Mean,
}

/// Similarity of `candidate` to a set of strings; 0 for an empty set.
pub fn rouge_against_set<S: AsRef<str>>(
    candidate: &str,
    set: &[S],
    aggregation: SetAggregation,
) -> f64 {
    let tokens = tokenize(candidate);
    rouge_against_tokenized(
        &tokens,
        set.iter().map(|s| tokenize(s.as_ref())),
        aggregation,
    )
}

pub(crate) fn rouge_against_tokenized<I>(
    candidate: &[String],
    set: I,
    aggregation: SetAggregation,
) -> f64
where
    I: IntoIterator,
    I::Item: AsRef<[String]>,
{
    let mut count = 0usize;
    let mut acc = 0.0f64;
    for member in set {
        let s = rouge_l_tokens(candidate, member.as_ref());
        count += 1;
        match aggregation {
            SetAggregation::Max => acc = acc.max(s),
            SetAggregation::Mean => acc += s,
        }
    }
    match (aggregation, count) {
        (_, 0) => 0.0,
        (SetAggregation::Max, _) => acc,
        (SetAggregation::Mean, n) => acc / n as f64,
    }
}

/// Index of the best-scoring entry in `candidates` if it reaches
/// `threshold`; ties go to the lowest index.
pub fn align_criterion<S: AsRef<str>>(
    text: &str,
    candidates: &[S],
    threshold: f64,
) -> Option<usize> {
    let tokens = tokenize(text);
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let s = rouge_l_tokens(&tokens, &tokenize(c.as_ref()));
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.filter(|&(_, s)| s >= threshold).map(|(i, _)| i)
}
