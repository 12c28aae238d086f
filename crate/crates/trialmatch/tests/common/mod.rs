#![allow(dead_code)]

use std::path::{Path, PathBuf};

use trialmatch::backend::ScriptedBackend;
use trialmatch::io::{CorpusFiles, RelevanceCodes};
use trialmatch::run::{pairs_to_assess, run_match, MatchOutput};
use trialmatch_core::corpus::Corpus;
use trialmatch_core::gateway::GenerationConfig;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures/tiny")
        .join(name)
}

pub fn corpus_files() -> CorpusFiles {
    CorpusFiles {
        patients: fixture("patients.jsonl"),
        trials: fixture("trials.jsonl"),
        qrels: Some(fixture("qrels.tsv")),
        codes: RelevanceCodes::Graded,
    }
}

pub fn corpus() -> Corpus {
    corpus_files().load().unwrap().0
}

pub fn scripted(script: &str, name: &str) -> ScriptedBackend {
    ScriptedBackend::from_file(&fixture(script))
        .unwrap()
        .named(name)
}

pub fn run_fixture(script: &str, name: &str) -> MatchOutput {
    let corpus = corpus();
    let backend = scripted(script, name);
    run_match(
        &corpus,
        &pairs_to_assess(&corpus),
        &backend,
        &GenerationConfig::default(),
        4,
    )
    .unwrap()
}

/// Fixture corpus paths as CLI flags.
pub fn corpus_flags() -> Vec<String> {
    vec![
        "--patients".into(),
        fixture("patients.jsonl").display().to_string(),
        "--trials".into(),
        fixture("trials.jsonl").display().to_string(),
        "--qrels".into(),
        fixture("qrels.tsv").display().to_string(),
    ]
}
