//! Command-line definitions and the command implementations.
//!
//! Exit codes: 0 success, 2 bad input, 3 backend setup, 4 incomparable
//! runs, 5 internal. The HTTP backend credential is read from the
//! `BACKEND_API_KEY` environment variable; no flag accepts it.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use trialmatch_core::corpus::{corpus_stats, split_by_patient, Corpus, DEFAULT_TEST_RATIO};
use trialmatch_core::distill::{sample_pairs, DEFAULT_SAMPLE_SIZE};
use trialmatch_core::gateway::{
    ChatBackend, Exemplar, GenerationConfig, DEFAULT_MAX_ATTEMPTS, DEFAULT_TOP_P,
    DETERMINISTIC_TEMPERATURE, OPEN_WEIGHT_TEMPERATURE,
};
use trialmatch_core::metrics::{
    AurocMode, AurocScore, HumanVerdict, PredictionIndex, RankingOptions,
};
use trialmatch_core::rouge::{SetAggregation, DEFAULT_ALIGN_THRESHOLD};
use trialmatch_core::selection::{
    rows_from_assessments, CriterionRow, SelectionConfig, SelectionPool, Stage,
    DEFAULT_FINAL_PER_LABEL, DEFAULT_SELECTED_PER_LABEL, DEFAULT_TAU,
};

use crate::backend::{HttpBackend, ScriptedBackend};
use crate::error::CliError;
use crate::evaluate::{evaluate, summary_tsv, EvaluateError, EvaluateInputs};
use crate::io::{self, CorpusFiles, RelevanceCodes};
use crate::manifest::RunManifest;
use crate::pool::{pool_lines, PoolLine, FINAL_FILE, POOL_FILE};
use crate::run::{pairs_to_assess, run_match, write_run, LoadedRun, RANKED_DIR};
use crate::service::{http, state::Event, Service};

#[derive(Debug, Parser)]
#[command(
    name = "trialmatch",
    version,
    about = "Criterion-level patient to clinical-trial matching"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assess patient/trial pairs with a chat backend and rank trials per patient.
    Match(MatchArgs),
    /// Score one or more run directories against judgments and gold annotations.
    Evaluate(EvaluateArgs),
    /// Build the criterion selection pool from a run directory.
    Select(SelectArgs),
    /// Collect validated teacher outputs as fine-tuning records.
    Distill(DistillArgs),
    /// Split a corpus into train and test sets along the patient axis.
    Split(SplitArgs),
    /// Print corpus statistics.
    Stats(StatsArgs),
    /// Queue annotation tasks from a selection pool.
    ImportTasks(ImportTasksArgs),
    /// Queue blind head-to-head judgment tasks for two runs.
    ImportJudgments(ImportJudgmentsArgs),
    /// Run the annotation service (no authentication; keep it on a trusted network).
    Serve(ServeArgs),
    /// Write the annotation service's annotations and verdicts to files.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    /// Patients, JSON lines.
    #[arg(long)]
    pub patients: PathBuf,
    /// Trials, JSON lines.
    #[arg(long)]
    pub trials: PathBuf,
    /// Relevance judgments, `patient<TAB>trial<TAB>relevance`.
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    /// Read relevance codes as SIGIR referral classes; class 1 rows are dropped.
    #[arg(long)]
    pub sigir_mapping: bool,
}

impl CorpusArgs {
    fn files(&self) -> CorpusFiles {
        CorpusFiles {
            patients: self.patients.clone(),
            trials: self.trials.clone(),
            qrels: self.qrels.clone(),
            codes: codes(self.sigir_mapping),
        }
    }

    fn load(&self, manifest: &mut RunManifest) -> Result<(Corpus, usize), CliError> {
        let (corpus, loaded) = self.files().load()?;
        manifest.add_input("patients", &self.patients)?;
        manifest.add_input("trials", &self.trials)?;
        if let Some(q) = &self.qrels {
            manifest.add_input("qrels", q)?;
        }
        Ok((corpus, loaded.dropped))
    }
}

fn codes(sigir: bool) -> RelevanceCodes {
    if sigir {
        RelevanceCodes::Sigir
    } else {
        RelevanceCodes::Graded
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Scripted responses from --mock-script.
    Mock,
    /// OpenAI-compatible chat-completion endpoint at --endpoint.
    Openai,
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    #[arg(long, value_enum)]
    pub backend: BackendKind,
    /// Scripted responses for the mock backend, JSON lines.
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    /// Full chat-completion URL for the HTTP backend.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Model name sent to the HTTP backend.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, default_value_t = 120)]
    pub timeout_secs: u64,
    /// Sampling temperature [default: 0.0, or 0.4 with --open-weight].
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_TOP_P)]
    pub top_p: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ATTEMPTS)]
    pub max_attempts: u32,
    /// Use the open-weight chat model defaults.
    #[arg(long)]
    pub open_weight: bool,
    /// Do not prime the assistant turn (for fine-tuned models).
    #[arg(long)]
    pub no_exemplar: bool,
    /// One worked exchange, JSON `{"user": ..., "assistant": ...}`.
    #[arg(long)]
    pub exemplar: Option<PathBuf>,
}

impl BackendArgs {
    pub fn generation_config(&self) -> Result<GenerationConfig, CliError> {
        let default_t = if self.open_weight {
            OPEN_WEIGHT_TEMPERATURE
        } else {
            DETERMINISTIC_TEMPERATURE
        };
        let exemplar: Option<Exemplar> = self.exemplar.as_deref().map(io::read_json).transpose()?;
        let config = GenerationConfig {
            temperature: self.temperature.unwrap_or(default_t),
            top_p: self.top_p,
            max_attempts: self.max_attempts,
            include_exemplar: !self.no_exemplar,
            exemplar,
        };
        config
            .validate()
            .map_err(|e| CliError::input(e.to_string()))?;
        Ok(config)
    }

    pub fn resolve(&self, seed: u64) -> Result<Box<dyn ChatBackend>, CliError> {
        match self.backend {
            BackendKind::Mock => {
                let path = self
                    .mock_script
                    .as_deref()
                    .ok_or_else(|| CliError::backend("--backend mock needs --mock-script"))?;
                let backend = ScriptedBackend::from_file(path)
                    .map_err(|e| CliError::backend(e.to_string()))?;
                Ok(Box::new(backend))
            }
            BackendKind::Openai => {
                let endpoint = self
                    .endpoint
                    .as_deref()
                    .ok_or_else(|| CliError::backend("--backend openai needs --endpoint"))?;
                let model = self
                    .model
                    .as_deref()
                    .ok_or_else(|| CliError::backend("--backend openai needs --model"))?;
                if !(endpoint.starts_with("http://") || endpoint.starts_with("https://")) {
                    return Err(CliError::backend(format!(
                        "endpoint {endpoint:?} is not an http(s) URL"
                    )));
                }
                Ok(Box::new(HttpBackend::from_env(
                    endpoint,
                    model,
                    Some(seed),
                    Duration::from_secs(self.timeout_secs),
                )))
            }
        }
    }

    fn add_inputs(&self, manifest: &mut RunManifest) -> Result<(), CliError> {
        if let Some(p) = &self.mock_script {
            manifest.add_input("mock_script", p)?;
        }
        if let Some(p) = &self.exemplar {
            manifest.add_input("exemplar", p)?;
        }
        Ok(())
    }

    fn describe(&self) -> Value {
        json!({
            "backend": self.backend,
            "endpoint": self.endpoint,
            "model": self.model,
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct MatchArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Name for this run in evaluation reports [default: backend name].
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Write into a non-empty output directory, replacing earlier results.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AurocScoreArg {
    Rank,
    NegatedExclusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AurocModeArg {
    Pooled,
    PerPatient,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Run directory; repeat to compare models.
    #[arg(long = "run", required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    #[arg(long)]
    pub sigir_mapping: bool,
    /// Gold annotations, JSON lines.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Human head-to-head verdicts, JSON lines.
    #[arg(long)]
    pub verdicts: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = AurocScoreArg::Rank)]
    pub auroc_score: AurocScoreArg,
    #[arg(long, value_enum, default_value_t = AurocModeArg::Pooled)]
    pub auroc_mode: AurocModeArg,
    #[arg(long, default_value_t = DEFAULT_ALIGN_THRESHOLD)]
    pub align_threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregationArg {
    Max,
    Mean,
}

impl From<AggregationArg> for SetAggregation {
    fn from(a: AggregationArg) -> Self {
        match a {
            AggregationArg::Max => SetAggregation::Max,
            AggregationArg::Mean => SetAggregation::Mean,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    /// Criteria kept per label in the final sample.
    #[arg(long, default_value_t = DEFAULT_FINAL_PER_LABEL)]
    pub per_label: usize,
    /// Criteria sampled per label before the novelty filter.
    #[arg(long, default_value_t = DEFAULT_SELECTED_PER_LABEL)]
    pub selected_per_label: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = AggregationArg::Max)]
    pub aggregation: AggregationArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DistillArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Number of judged pairs to sample.
    #[arg(long, default_value_t = DEFAULT_SAMPLE_SIZE)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, default_value_t = DEFAULT_TEST_RATIO)]
    pub test_ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Also write stats.json and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ImportTasksArgs {
    #[arg(long)]
    pub journal: PathBuf,
    /// Final selection rows (final.jsonl), or a full pool file whose final stage is used.
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub patients: PathBuf,
    #[arg(long)]
    pub trials: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ImportJudgmentsArgs {
    #[arg(long)]
    pub journal: PathBuf,
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub patients: PathBuf,
    #[arg(long)]
    pub trials: PathBuf,
    /// Exactly two run directories: model A, then model B.
    #[arg(long = "run", num_args = 1, required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ALIGN_THRESHOLD)]
    pub align_threshold: f64,
    /// Seeds which model is shown as x for each task.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub journal: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: String,
    /// Static review UI bundle served under `/`.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub journal: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Match(a) => cmd_match(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Select(a) => cmd_select(&a),
        Command::Distill(a) => cmd_distill(&a),
        Command::Split(a) => cmd_split(&a),
        Command::Stats(a) => cmd_stats(&a),
        Command::ImportTasks(a) => cmd_import_tasks(&a),
        Command::ImportJudgments(a) => cmd_import_judgments(&a),
        Command::Serve(a) => cmd_serve(&a),
        Command::Export(a) => cmd_export(&a),
    }
}

/// Creates `dir`. A non-empty directory is refused unless `force`, in which
/// case stale ranked lists are cleared so the directory matches this run.
fn prepare_out_dir(dir: &Path, force: bool) -> Result<(), CliError> {
    let non_empty = fs::read_dir(dir)
        .map(|mut d| d.next().is_some())
        .unwrap_or(false);
    if non_empty && !force {
        return Err(CliError::input(format!(
            "output directory {} is not empty (use --force to overwrite)",
            dir.display()
        )));
    }
    let ranked = dir.join(RANKED_DIR);
    if force && ranked.is_dir() {
        fs::remove_dir_all(&ranked)
            .map_err(|e| CliError::internal(format!("{}: {e}", ranked.display())))?;
    }
    fs::create_dir_all(dir).map_err(|e| CliError::internal(format!("{}: {e}", dir.display())))
}

/// Writes to stdout, ignoring a closed pipe (e.g. when piped into `head`).
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

pub fn cmd_match(a: &MatchArgs) -> Result<(), CliError> {
    let mut manifest = RunManifest::start("match", Value::Null, a.seed);
    let (corpus, dropped) = a.corpus.load(&mut manifest)?;
    let config = a.backend.generation_config()?;
    let backend = a.backend.resolve(a.seed)?;
    a.backend.add_inputs(&mut manifest)?;
    prepare_out_dir(&a.out, a.force)?;

    let label = a
        .label
        .clone()
        .unwrap_or_else(|| backend.name().to_string());
    manifest.backend = Some(backend.name().to_string());
    manifest.config = json!({
        "label": label,
        "generation": config,
        "backend": a.backend.describe(),
        "workers": a.workers,
        "sigir_mapping": a.corpus.sigir_mapping,
    });

    let pairs = pairs_to_assess(&corpus);
    let output = run_match(&corpus, &pairs, backend.as_ref(), &config, a.workers)
        .map_err(|e| CliError::internal(e.to_string()))?;
    let files = write_run(&a.out, &output)?;
    manifest.failures = output.failures().map(to_value).collect();
    manifest.summary = json!({
        "pairs": output.results.len(),
        "failed_pairs": manifest.failures.len(),
        "evidence_warnings": output.warnings.len(),
        "dropped_judgments": dropped,
    });
    manifest.finish(&a.out, &files)?;
    eprintln!(
        "assessed {} pairs ({} failed) into {}",
        output.results.len(),
        output.failures().count(),
        a.out.display()
    );
    Ok(())
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    let mut manifest = RunManifest::start("evaluate", Value::Null, 0);
    let mut runs = Vec::new();
    for (i, dir) in a.runs.iter().enumerate() {
        runs.push(LoadedRun::load(dir)?);
        manifest.add_input(
            format!("run:{i}"),
            &dir.join(crate::manifest::MANIFEST_FILE),
        )?;
    }
    let judgments = match &a.qrels {
        Some(q) => {
            manifest.add_input("qrels", q)?;
            Some(io::load_judgments(q, codes(a.sigir_mapping))?.judgments)
        }
        None => None,
    };
    let annotations = match &a.annotations {
        Some(p) => {
            manifest.add_input("annotations", p)?;
            Some(io::load_annotations(p)?)
        }
        None => None,
    };
    let verdicts: Vec<HumanVerdict> = match &a.verdicts {
        Some(p) => {
            manifest.add_input("verdicts", p)?;
            io::read_jsonl(p)?
        }
        None => Vec::new(),
    };
    let ranking = RankingOptions {
        score: match a.auroc_score {
            AurocScoreArg::Rank => AurocScore::RankScore,
            AurocScoreArg::NegatedExclusion => AurocScore::NegatedExclusionScore,
        },
        mode: match a.auroc_mode {
            AurocModeArg::Pooled => AurocMode::Pooled,
            AurocModeArg::PerPatient => AurocMode::PerPatientMean,
        },
    };
    let report = evaluate(&EvaluateInputs {
        runs: &runs,
        judgments: judgments.as_deref(),
        annotations: annotations.as_deref(),
        verdicts: &verdicts,
        ranking,
        align_threshold: a.align_threshold,
    })
    .map_err(|e| match e {
        EvaluateError::DifferentPairs { .. } | EvaluateError::DuplicateLabel(_) => {
            CliError::comparability(e.to_string())
        }
        _ => CliError::input(e.to_string()),
    })?;

    prepare_out_dir(&a.out, a.force)?;
    io::write_json(&a.out.join("report.json"), &report)?;
    io::write_text(&a.out.join("summary.tsv"), &summary_tsv(&report))?;
    manifest.config = json!({
        "ranking": ranking,
        "align_threshold": a.align_threshold,
        "runs": a.runs,
    });
    manifest.finish(&a.out, &["report.json".into(), "summary.tsv".into()])?;
    emit(&summary_tsv(&report));
    Ok(())
}

pub fn cmd_select(a: &SelectArgs) -> Result<(), CliError> {
    let config = SelectionConfig {
        tau: a.tau,
        selected_per_label: a.selected_per_label,
        final_per_label: a.per_label,
        seed: a.seed,
        aggregation: a.aggregation.into(),
    };
    let mut manifest = RunManifest::start("select", to_value(&config), a.seed);
    let run = LoadedRun::load(&a.run)?;
    manifest.add_input("run", &a.run.join(crate::run::ASSESSMENTS_FILE))?;
    let rows = rows_from_assessments(run.results.iter().filter_map(|r| r.assessment()));
    let pool = SelectionPool::build(rows, &config).map_err(|e| CliError::input(e.to_string()))?;

    prepare_out_dir(&a.out, a.force)?;
    io::write_jsonl(&a.out.join(POOL_FILE), &pool_lines(&pool))?;
    io::write_jsonl(&a.out.join(FINAL_FILE), &pool.final_rows)?;
    manifest.summary = json!({
        "predicted": pool.predicted.len(),
        "reduced": pool.reduced.len(),
        "selected": pool.selected.len(),
        "novel": pool.novel.len(),
        "final": pool.final_rows.len(),
    });
    manifest.finish(&a.out, &[POOL_FILE.into(), FINAL_FILE.into()])?;
    eprintln!(
        "selected {} criteria into {}",
        pool.final_rows.len(),
        a.out.display()
    );
    Ok(())
}

pub fn cmd_distill(a: &DistillArgs) -> Result<(), CliError> {
    let mut manifest = RunManifest::start("distill", Value::Null, a.seed);
    let (corpus, _) = a.corpus.load(&mut manifest)?;
    let config = a.backend.generation_config()?;
    let backend = a.backend.resolve(a.seed)?;
    a.backend.add_inputs(&mut manifest)?;
    prepare_out_dir(&a.out, a.force)?;

    let pairs = sample_pairs(&corpus, a.n, a.seed);
    let outcome = crate::distill::collect(&pairs, &corpus, backend.as_ref(), &config, a.workers)
        .map_err(|e| CliError::internal(e.to_string()))?;
    io::write_jsonl(&a.out.join(crate::distill::EXPORT_FILE), &outcome.records)?;
    io::write_jsonl(
        &a.out.join(crate::distill::FAILURES_FILE),
        &outcome.failures,
    )?;
    manifest.backend = Some(backend.name().to_string());
    manifest.config = json!({
        "n": a.n,
        "generation": GenerationConfig { include_exemplar: false, ..config },
        "backend": a.backend.describe(),
        "workers": a.workers,
    });
    manifest.failures = outcome.failures.iter().map(to_value).collect();
    manifest.summary = json!({
        "requested_pairs": a.n,
        "sampled_pairs": pairs.len(),
        "records": outcome.records.len(),
        "failed_generations": outcome.failures.len(),
    });
    manifest.finish(
        &a.out,
        &[
            crate::distill::EXPORT_FILE.into(),
            crate::distill::FAILURES_FILE.into(),
        ],
    )?;
    eprintln!(
        "wrote {} records from {} pairs into {}",
        outcome.records.len(),
        pairs.len(),
        a.out.display()
    );
    Ok(())
}

pub fn cmd_split(a: &SplitArgs) -> Result<(), CliError> {
    let mut manifest = RunManifest::start("split", json!({"test_ratio": a.test_ratio}), a.seed);
    let (corpus, dropped) = a.corpus.load(&mut manifest)?;
    let split = split_by_patient(&corpus, a.test_ratio, a.seed)
        .map_err(|e| CliError::input(e.to_string()))?;
    prepare_out_dir(&a.out, a.force)?;
    let mut files = Vec::new();
    for (name, side) in [("train", &split.train), ("test", &split.test)] {
        let p = format!("{name}/patients.jsonl");
        let t = format!("{name}/trials.jsonl");
        let q = format!("{name}/qrels.tsv");
        io::write_jsonl(&a.out.join(&p), side.patients())?;
        io::write_jsonl(&a.out.join(&t), side.trials())?;
        io::write_judgments(&a.out.join(&q), side.judgments())?;
        files.extend([p, t, q]);
    }
    manifest.summary = json!({
        "train_patients": split.train.patients().len(),
        "test_patients": split.test.patients().len(),
        "train_judgments": split.train.judgments().len(),
        "test_judgments": split.test.judgments().len(),
        "dropped_judgments": dropped,
    });
    manifest.finish(&a.out, &files)?;
    eprintln!(
        "train {} / test {} patients",
        split.train.patients().len(),
        split.test.patients().len()
    );
    Ok(())
}

pub fn cmd_stats(a: &StatsArgs) -> Result<(), CliError> {
    let mut manifest = RunManifest::start("stats", Value::Null, 0);
    let (corpus, _) = a.corpus.load(&mut manifest)?;
    let stats = corpus_stats(&corpus);
    emit(&format!(
        "{}\n",
        serde_json::to_string_pretty(&stats).expect("serializable")
    ));
    if let Some(out) = &a.out {
        prepare_out_dir(out, a.force)?;
        io::write_json(&out.join("stats.json"), &stats)?;
        manifest.finish(out, &["stats.json".into()])?;
    }
    Ok(())
}

/// Final-stage rows from either `final.jsonl` or a tagged pool file.
pub fn read_final_rows(path: &Path) -> Result<Vec<CriterionRow>, CliError> {
    fn parse<T: serde::de::DeserializeOwned>(v: Value, path: &Path) -> Result<T, CliError> {
        serde_json::from_value(v).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }
    let values: Vec<Value> = io::read_jsonl(path)?;
    let mut rows = Vec::new();
    for v in values {
        if v.get("stage").is_some() {
            let line: PoolLine = parse(v, path)?;
            if line.stage == Stage::Final {
                rows.push(line.row);
            }
        } else {
            rows.push(parse(v, path)?);
        }
    }
    Ok(rows)
}

fn load_plain_corpus(patients: &Path, trials: &Path) -> Result<Corpus, CliError> {
    let files = CorpusFiles {
        patients: patients.to_owned(),
        trials: trials.to_owned(),
        qrels: None,
        codes: RelevanceCodes::Graded,
    };
    Ok(files.load()?.0)
}

fn open_service(journal: &Path) -> Result<Service, CliError> {
    Service::open(journal).map_err(|e| CliError::input(e.to_string()))
}

fn count_tasks(events: &[Event]) -> usize {
    events
        .iter()
        .filter(|e| {
            matches!(
                e,
                Event::AnnotationTaskCreated { .. } | Event::JudgmentTaskCreated { .. }
            )
        })
        .count()
}

pub fn cmd_import_tasks(a: &ImportTasksArgs) -> Result<(), CliError> {
    let rows = read_final_rows(&a.pool)?;
    let corpus = load_plain_corpus(&a.patients, &a.trials)?;
    let service = open_service(&a.journal)?;
    let events = service
        .execute(|s, _| {
            s.plan_task_import(&rows, &corpus).map_err(|e| {
                crate::service::state::ServiceError::Invalid {
                    message: e.to_string(),
                    violations: e.offenders,
                }
            })
        })
        .map_err(|e| CliError::input(e.to_string()))?;
    emit(&format!("{}\n", count_tasks(&events)));
    eprintln!("imported {} annotation tasks", count_tasks(&events));
    Ok(())
}

pub fn cmd_import_judgments(a: &ImportJudgmentsArgs) -> Result<(), CliError> {
    let [dir_a, dir_b] = a.runs.as_slice() else {
        return Err(CliError::input("--run must be given exactly twice"));
    };
    let run_a = LoadedRun::load(dir_a)?;
    let run_b = LoadedRun::load(dir_b)?;
    if run_a.label == run_b.label {
        return Err(CliError::comparability(format!(
            "both runs are labelled {}",
            run_a.label
        )));
    }
    let rows = read_final_rows(&a.pool)?;
    let corpus = load_plain_corpus(&a.patients, &a.trials)?;
    let idx_a = PredictionIndex::new(run_a.results.iter().filter_map(|r| r.assessment()));
    let idx_b = PredictionIndex::new(run_b.results.iter().filter_map(|r| r.assessment()));
    let service = open_service(&a.journal)?;
    let events = service
        .execute(|s, _| {
            s.plan_judgment_import(
                &rows,
                &corpus,
                (&run_a.label, &idx_a),
                (&run_b.label, &idx_b),
                a.align_threshold,
                a.seed,
            )
            .map_err(|e| crate::service::state::ServiceError::Invalid {
                message: e.to_string(),
                violations: e.offenders,
            })
        })
        .map_err(|e| CliError::input(e.to_string()))?;
    emit(&format!("{}\n", count_tasks(&events)));
    eprintln!("imported {} judgment tasks", count_tasks(&events));
    Ok(())
}

pub fn cmd_serve(a: &ServeArgs) -> Result<(), CliError> {
    let service = Arc::new(open_service(&a.journal)?);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::internal(e.to_string()))?;
    runtime
        .block_on(http::serve(service, &a.listen, a.ui_dir.as_deref()))
        .map_err(|e| CliError::input(format!("{}: {e}", a.listen)))
}

pub fn cmd_export(a: &ExportArgs) -> Result<(), CliError> {
    let mut manifest = RunManifest::start("export", Value::Null, 0);
    manifest.add_input("journal", &a.journal)?;
    let service = open_service(&a.journal)?;
    let (annotations, verdicts) = {
        let state = service.state();
        (state.export_annotations(), state.export_verdicts())
    };
    prepare_out_dir(&a.out, a.force)?;
    io::write_jsonl(&a.out.join("annotations.jsonl"), &annotations)?;
    io::write_jsonl(&a.out.join("verdicts.jsonl"), &verdicts)?;
    manifest.summary = json!({"annotations": annotations.len(), "verdicts": verdicts.len()});
    manifest.finish(
        &a.out,
        &["annotations.jsonl".into(), "verdicts.jsonl".into()],
    )?;
    Ok(())
}
