//! Parallel teacher collection with a deterministic export order.

use rayon::prelude::*;

use trialmatch_core::corpus::Corpus;
use trialmatch_core::distill::{build_pair_records, DistillOutcome, PairId};
use trialmatch_core::gateway::{ChatBackend, GenerationConfig};

pub const EXPORT_FILE: &str = "distill.jsonl";
pub const FAILURES_FILE: &str = "failures.jsonl";

/// Same result as the sequential builder regardless of `workers`.
pub fn collect<B: ChatBackend + ?Sized>(
    pairs: &[PairId],
    corpus: &Corpus,
    backend: &B,
    config: &GenerationConfig,
    workers: usize,
) -> Result<DistillOutcome, rayon::ThreadPoolBuildError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()?;
    let parts: Vec<DistillOutcome> = pool.install(|| {
        pairs
            .par_iter()
            .map(|p| build_pair_records(p, corpus, backend, config))
            .collect()
    });
    let mut out = DistillOutcome::default();
    for part in parts {
        out.merge(part);
    }
    Ok(out)
}
