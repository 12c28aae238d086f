//! Loaders and writers for the on-disk formats.
//!
//! Patients, trials, annotations and every generated artifact are JSON
//! lines. Relevance judgments are tab-separated
//! `patient_id<TAB>trial_id<TAB>relevance` rows.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use trialmatch_core::corpus::{map_qrels_grade, map_sigir_label, Corpus, CorpusError};
use trialmatch_core::{ClinicalTrial, GoldCriterionAnnotation, PatientNote, RelevanceJudgment};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid corpus: {0}")]
    Corpus(#[from] CorpusError),
}

impl IoError {
    /// True for failures caused by the input files rather than the machine.
    pub fn is_input(&self) -> bool {
        !matches!(self, IoError::Write { .. })
    }
}

fn open(path: &Path) -> Result<BufReader<File>, IoError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| IoError::Read {
            path: path.to_owned(),
            source,
        })
}

/// Non-blank lines with their 1-based line numbers.
fn lines(path: &Path) -> Result<Vec<(usize, String)>, IoError> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|source| IoError::Read {
            path: path.to_owned(),
            source,
        })?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    lines(path)?
        .into_iter()
        .map(|(line, text)| {
            serde_json::from_str(&text).map_err(|e| IoError::Parse {
                path: path.to_owned(),
                line,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    serde_json::from_reader(open(path)?).map_err(|e| IoError::Parse {
        path: path.to_owned(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    let err = |source| IoError::Write {
        path: path.to_owned(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(err)?;
    }
    File::create(path).map(BufWriter::new).map_err(err)
}

/// One compact JSON document per line, each terminated by `\n`.
pub fn write_jsonl<'a, T, I>(path: &Path, items: I) -> Result<(), IoError>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let mut w = create(path)?;
    let err = |source| IoError::Write {
        path: path.to_owned(),
        source,
    };
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| err(e.into()))?;
        w.write_all(b"\n").map_err(err)?;
    }
    w.flush().map_err(err)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut w = create(path)?;
    let err = |source| IoError::Write {
        path: path.to_owned(),
        source,
    };
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| err(e.into()))?;
    w.write_all(b"\n").map_err(err)?;
    w.flush().map_err(err)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    let mut w = create(path)?;
    let err = |source| IoError::Write {
        path: path.to_owned(),
        source,
    };
    w.write_all(text.as_bytes()).map_err(err)?;
    w.flush().map_err(err)
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, IoError> {
    fs::read(path)
        .map(|b| sha256_bytes(&b))
        .map_err(|source| IoError::Read {
            path: path.to_owned(),
            source,
        })
}

pub fn load_patients(path: &Path) -> Result<Vec<PatientNote>, IoError> {
    read_jsonl(path)
}

pub fn load_trials(path: &Path) -> Result<Vec<ClinicalTrial>, IoError> {
    read_jsonl(path)
}

pub fn load_annotations(path: &Path) -> Result<Vec<GoldCriterionAnnotation>, IoError> {
    read_jsonl(path)
}

/// How the relevance column is interpreted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum RelevanceCodes {
    /// 0 irrelevant, 1 excluded, 2 eligible.
    #[default]
    Graded,
    /// 0 will not refer, 1 may refer (dropped), 2 will refer.
    Sigir,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadedJudgments {
    pub judgments: Vec<RelevanceJudgment>,
    /// Rows dropped by the SIGIR mapping.
    pub dropped: usize,
}

pub fn load_judgments(path: &Path, codes: RelevanceCodes) -> Result<LoadedJudgments, IoError> {
    let mut out = LoadedJudgments::default();
    for (line, text) in lines(path)? {
        let parse_err = |message: String| IoError::Parse {
            path: path.to_owned(),
            line,
            message,
        };
        let fields: Vec<&str> = text.split('\t').map(str::trim).collect();
        let [patient_id, trial_id, code] = fields[..] else {
            return Err(parse_err(format!(
                "expected 3 tab-separated fields, got {}",
                fields.len()
            )));
        };
        let code: i64 = code
            .parse()
            .map_err(|_| parse_err(format!("relevance {code:?} is not an integer")))?;
        let relevance = match codes {
            RelevanceCodes::Graded => Some(map_qrels_grade(code)),
            RelevanceCodes::Sigir => map_sigir_label(code).transpose(),
        };
        match relevance {
            None => out.dropped += 1,
            Some(r) => out.judgments.push(RelevanceJudgment {
                patient_id: patient_id.into(),
                trial_id: trial_id.into(),
                relevance: r.map_err(|e| parse_err(e.to_string()))?,
            }),
        }
    }
    Ok(out)
}

pub fn write_judgments(path: &Path, judgments: &[RelevanceJudgment]) -> Result<(), IoError> {
    let text: String = judgments
        .iter()
        .map(|j| {
            format!(
                "{}\t{}\t{}\n",
                j.patient_id,
                j.trial_id,
                j.relevance.grade()
            )
        })
        .collect();
    write_text(path, &text)
}

/// Paths making up a corpus on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusFiles {
    pub patients: PathBuf,
    pub trials: PathBuf,
    pub qrels: Option<PathBuf>,
    pub codes: RelevanceCodes,
}

impl CorpusFiles {
    pub fn paths(&self) -> Vec<&Path> {
        let mut out = vec![self.patients.as_path(), self.trials.as_path()];
        out.extend(self.qrels.as_deref());
        out
    }

    pub fn load(&self) -> Result<(Corpus, LoadedJudgments), IoError> {
        let patients = load_patients(&self.patients)?;
        let trials = load_trials(&self.trials)?;
        let loaded = match &self.qrels {
            Some(q) => load_judgments(q, self.codes)?,
            None => LoadedJudgments::default(),
        };
        let corpus = Corpus::new(patients, trials, loaded.judgments.clone())?;
        Ok((corpus, loaded))
    }
}

/// Makes an id safe to use as a file name: bytes outside
/// `[A-Za-z0-9._-]` become `%XX`, and a leading dot is escaped too.
pub fn file_stem(id: &str) -> String {
    let mut out = String::with_capacity(id.len());
    for (i, b) in id.bytes().enumerate() {
        let safe = b.is_ascii_alphanumeric() || b == b'_' || b == b'-' || (b == b'.' && i > 0);
        if safe {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}
