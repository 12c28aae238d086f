//! Acceptance checks. Each criterion prints one `PASS` or `FAIL` line with
//! its elapsed time and pinned tolerance; the target exits non-zero if any
//! line is a failure.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use clap::Parser;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use trialmatch::backend::ScriptedBackend;
use trialmatch::cli::{run, Cli};
use trialmatch_core::corpus::{split_by_patient, Corpus};
use trialmatch_core::distill::DistillRecord;
use trialmatch_core::gateway::{
    generate_validated, GenerationConfig, GenerationError, RequestContext,
};
use trialmatch_core::metrics::{auroc, ndcg_at_k};
use trialmatch_core::rouge::{rouge_l_tokens, SetAggregation};
use trialmatch_core::schema::{
    extract_fenced_payload, validate_payload, PayloadError, SchemaViolation,
};
use trialmatch_core::scoring::scores_from_labels;
use trialmatch_core::selection::{select_novel, CriterionRow};
use trialmatch_core::{
    ClinicalTrial, CriterionKind, EligibilityLabel, PatientNote, Relevance, RelevanceJudgment,
};

type Check = Result<String, String>;

struct Criterion {
    name: &'static str,
    tolerance: &'static str,
    budget: Duration,
    check: fn() -> Check,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---- scores ----

const INCL: [EligibilityLabel; 3] = [
    EligibilityLabel::Included,
    EligibilityLabel::NotIncluded,
    EligibilityLabel::NoRelevantInformation,
];
const EXCL: [EligibilityLabel; 3] = [
    EligibilityLabel::Excluded,
    EligibilityLabel::NotExcluded,
    EligibilityLabel::NoRelevantInformation,
];

/// Every label sequence of length 0..=4 over `alphabet`.
fn sequences(alphabet: &[EligibilityLabel; 3]) -> Vec<Vec<EligibilityLabel>> {
    let mut all = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..4 {
        let mut next = Vec::new();
        for s in &frontier {
            for &l in alphabet {
                let mut t: Vec<EligibilityLabel> = s.clone();
                t.push(l);
                next.push(t);
            }
        }
        all.extend(next.iter().cloned());
        frontier = next;
    }
    all
}

/// Recount from scratch: returns (R, E).
fn brute_scores(incl: &[EligibilityLabel], excl: &[EligibilityLabel]) -> (f64, f64) {
    let frac = |list: &[EligibilityLabel], want: EligibilityLabel| {
        if list.is_empty() {
            0.0
        } else {
            list.iter().filter(|&&l| l == want).count() as f64 / list.len() as f64
        }
    };
    let met_incl = frac(incl, EligibilityLabel::Included);
    let unmet_incl = frac(incl, EligibilityLabel::NotIncluded);
    let met_excl = frac(excl, EligibilityLabel::Excluded);
    let r = met_incl - met_excl;
    let e = f64::from(u8::from(unmet_incl > 0.0)) + f64::from(u8::from(met_excl > 0.0)) - met_incl;
    (r, e)
}

fn scores_exhaustive() -> Check {
    let incl = sequences(&INCL);
    let excl = sequences(&EXCL);
    let mut n = 0;
    for i in &incl {
        for e in &excl {
            let s = scores_from_labels(i.iter().copied(), e.iter().copied());
            let (r, x) = brute_scores(i, e);
            ensure(s.rank_score == r && s.exclusion_score == x, || {
                format!(
                    "{i:?} / {e:?}: got ({}, {}), want ({r}, {x})",
                    s.rank_score, s.exclusion_score
                )
            })?;
            n += 1;
        }
    }
    Ok(format!("{n} label combinations"))
}

fn random_labels(rng: &mut ChaCha8Rng, alphabet: &[EligibilityLabel; 3]) -> Vec<EligibilityLabel> {
    let len = rng.random_range(0..=12);
    (0..len).map(|_| alphabet[rng.random_range(0..3)]).collect()
}

fn scores_bounds_and_monotonicity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut flips = 0;
    for _ in 0..10_000 {
        let incl = random_labels(&mut rng, &INCL);
        let excl = random_labels(&mut rng, &EXCL);
        let s = scores_from_labels(incl.iter().copied(), excl.iter().copied());
        ensure((-1.0..=1.0).contains(&s.rank_score), || {
            format!("R = {} out of bounds", s.rank_score)
        })?;
        ensure((-1.0..=2.0).contains(&s.exclusion_score), || {
            format!("E = {} out of bounds", s.exclusion_score)
        })?;
        let unmet: Vec<usize> = (0..incl.len())
            .filter(|&i| incl[i] == EligibilityLabel::NotIncluded)
            .collect();
        if let Some(&i) = unmet.first() {
            let mut flipped = incl.clone();
            flipped[i] = EligibilityLabel::Included;
            let t = scores_from_labels(flipped.iter().copied(), excl.iter().copied());
            ensure(
                t.rank_score >= s.rank_score && t.exclusion_score <= s.exclusion_score,
                || format!("flip in {incl:?} / {excl:?} moved scores the wrong way"),
            )?;
            flips += 1;
        }
    }
    Ok(format!("10000 assessments, {flips} flips"))
}

// ---- ranking metrics ----

fn brute_ndcg(grades: &[u8], k: usize) -> f64 {
    let dcg = |g: &[u8]| -> f64 {
        g.iter()
            .take(k)
            .enumerate()
            .map(|(i, &r)| (2f64.powi(i32::from(r)) - 1.0) / ((i + 2) as f64).log2())
            .sum()
    };
    let mut best = grades.to_vec();
    best.sort_by(|a, b| b.cmp(a));
    let ideal = dcg(&best);
    if ideal == 0.0 {
        0.0
    } else {
        dcg(grades) / ideal
    }
}

fn ndcg_oracle() -> Check {
    // All grade sequences of length 1..=6 are all permutations of all
    // multisets of that size.
    let mut lists: Vec<Vec<u8>> = vec![vec![]];
    let mut checked = 0;
    for _ in 0..6 {
        lists = lists
            .iter()
            .flat_map(|l| (0..=2u8).map(move |g| [l.as_slice(), &[g]].concat()))
            .collect();
        for l in &lists {
            for k in [1, 3, 5, 10] {
                let (got, want) = (ndcg_at_k(l, k), brute_ndcg(l, k));
                ensure((got - want).abs() <= 1e-9, || {
                    format!("{l:?}@{k}: {got} vs {want}")
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} list/cutoff cases"))
}

fn mann_whitney(scores: &[f64], positive: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &p) in positive.iter().enumerate() {
        for (j, &q) in positive.iter().enumerate() {
            if p && !q {
                pairs += 1.0;
                wins += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                };
            }
        }
    }
    wins / pairs
}

fn auroc_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut done = 0;
    while done < 1000 {
        let n = rng.random_range(2..=50);
        // Coarse scores so ties are common.
        let scores: Vec<f64> = (0..n)
            .map(|_| f64::from(rng.random_range(-4..=4)) / 4.0)
            .collect();
        let positive: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let both = positive.iter().any(|&p| p) && positive.iter().any(|&p| !p);
        match auroc(&scores, &positive) {
            Ok(got) if both => {
                let want = mann_whitney(&scores, &positive);
                ensure((got - want).abs() <= 1e-9, || {
                    format!("n={n}: {got} vs {want}")
                })?;
                done += 1;
            }
            Err(_) if !both => {}
            other => return Err(format!("unexpected {other:?} with both classes = {both}")),
        }
    }
    Ok("1000 instances".into())
}

// ---- ROUGE-L ----

fn dp_lcs(a: &[u8], b: &[u8]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    t[a.len()][b.len()]
}

fn rouge_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let tokens = |rng: &mut ChaCha8Rng| -> Vec<u8> {
            let len = rng.random_range(0..=10);
            (0..len).map(|_| rng.random_range(0..5)).collect()
        };
        let a = tokens(&mut rng);
        let b = tokens(&mut rng);
        let lcs = dp_lcs(&a, &b);
        let want = if lcs == 0 {
            0.0
        } else {
            let p = lcs as f64 / a.len() as f64;
            let r = lcs as f64 / b.len() as f64;
            2.0 * p * r / (p + r)
        };
        let got = rouge_l_tokens(&a, &b);
        ensure(got == want, || format!("{a:?} vs {b:?}: {got} != {want}"))?;
    }
    let example = trialmatch_core::rouge::rouge_l_f1("the cat sat", "the cat");
    ensure((example - 0.8).abs() <= 1e-12, || {
        format!("\"the cat sat\" vs \"the cat\" = {example}")
    })?;
    Ok("1000 pairs exact, worked example within 1e-12".into())
}

// ---- novelty selection ----

fn random_pool(rng: &mut ChaCha8Rng) -> Vec<CriterionRow> {
    const LABELS: [EligibilityLabel; 5] = [
        EligibilityLabel::Included,
        EligibilityLabel::NotIncluded,
        EligibilityLabel::Excluded,
        EligibilityLabel::NotExcluded,
        EligibilityLabel::NoRelevantInformation,
    ];
    let n = rng.random_range(1..=200);
    (0..n)
        .map(|i| {
            let len = rng.random_range(1..=5);
            let text: Vec<&str> = (0..len)
                .map(|_| WORDS[rng.random_range(0..WORDS.len())])
                .collect();
            CriterionRow {
                criterion_text: text.join(" "),
                predicted_label: LABELS[rng.random_range(0..LABELS.len())],
                patient_id: format!("p{}", i % 7),
                trial_id: format!("t{}", i % 11),
                kind: CriterionKind::Inclusion,
            }
        })
        .collect()
}

const WORDS: [&str; 8] = [
    "prior", "therapy", "stable", "dose", "history", "cancer", "renal", "failure",
];

fn text_f1(a: &str, b: &str) -> f64 {
    let ids = |t: &str| -> Vec<u8> {
        t.split_whitespace()
            .map(|w| WORDS.iter().position(|x| *x == w).expect("pool word") as u8)
            .collect()
    };
    let (ta, tb) = (ids(a), ids(b));
    let lcs = dp_lcs(&ta, &tb);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / ta.len() as f64;
    let r = lcs as f64 / tb.len() as f64;
    2.0 * p * r / (p + r)
}

fn novelty_postcondition() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut pools = 0;
    for &tau in &[0.5, 0.7, 0.9] {
        for _ in 0..20 {
            let pool = random_pool(&mut rng);
            let novel = select_novel(&pool, tau, SetAggregation::Max).map_err(|e| e.to_string())?;
            for (i, row) in novel.iter().enumerate() {
                for earlier in &novel[..i] {
                    let s = text_f1(&row.criterion_text, &earlier.criterion_text);
                    ensure(s < tau, || {
                        format!(
                            "tau {tau}: {:?} scores {s} against {:?}",
                            row.criterion_text, earlier.criterion_text
                        )
                    })?;
                }
            }
            let replay =
                select_novel(&novel, tau, SetAggregation::Max).map_err(|e| e.to_string())?;
            ensure(replay == novel, || {
                format!("tau {tau}: replay dropped rows")
            })?;
            pools += 1;
        }
    }
    Ok(format!("{pools} pools"))
}

// ---- schema ----

fn schema_mutations() -> Check {
    use SchemaViolation as V;
    let valid = r#"{"Age 18 or older": ["The patient is 54.", [0], "included"], "Diabetes": ["Type 2.", [1, 2], "not included"]}"#;
    let n = validate_payload(valid, CriterionKind::Inclusion)
        .map_err(|e| format!("valid payload rejected: {e}"))?;
    ensure(n.len() == 2, || "valid payload lost a criterion".into())?;

    let ids21: Vec<String> = (0..21).map(|i| i.to_string()).collect();
    let ids21 = format!(r#"{{"c": ["x", [{}], "included"]}}"#, ids21.join(","));
    let schema = |v: SchemaViolation| move |e: &PayloadError| matches!(e, PayloadError::Schema { violation, .. } if *violation == v);
    type Expect = Box<dyn Fn(&PayloadError) -> bool>;
    let cases: Vec<(&str, String, Expect)> = vec![
        (
            "missing element",
            r#"{"c": ["x", [0]]}"#.into(),
            Box::new(schema(V::MinItems { len: 2 })),
        ),
        (
            "extra element",
            r#"{"c": ["x", [0], "included", 1]}"#.into(),
            Box::new(schema(V::MaxItems { len: 4 })),
        ),
        (
            "21 evidence ids",
            ids21,
            Box::new(schema(V::EvidenceMaxItems { len: 21 })),
        ),
        (
            "non-enum label",
            r#"{"c": ["x", [0], "maybe"]}"#.into(),
            Box::new(schema(V::LabelNotInEnum {
                value: "maybe".into(),
            })),
        ),
        (
            "label in the wrong case",
            r#"{"c": ["x", [0], "Included"]}"#.into(),
            Box::new(schema(V::LabelNotInEnum {
                value: "Included".into(),
            })),
        ),
        (
            "empty property name",
            r#"{"": ["x", [0], "included"]}"#.into(),
            Box::new(schema(V::AdditionalProperty)),
        ),
        (
            "property name with a line break",
            "{\"a\\nb\": [\"x\", [0], \"included\"]}".into(),
            Box::new(schema(V::AdditionalProperty)),
        ),
        (
            "fractional id",
            r#"{"c": ["x", [0, 1.5], "included"]}"#.into(),
            Box::new(schema(V::EvidenceNotInteger { position: 1 })),
        ),
        (
            "string id",
            r#"{"c": ["x", ["0"], "included"]}"#.into(),
            Box::new(schema(V::EvidenceNotInteger { position: 0 })),
        ),
        (
            "explanation not a string",
            r#"{"c": [1, [0], "included"]}"#.into(),
            Box::new(schema(V::ExplanationNotString)),
        ),
        (
            "evidence not an array",
            r#"{"c": ["x", 0, "included"]}"#.into(),
            Box::new(schema(V::EvidenceNotArray)),
        ),
        (
            "label not a string",
            r#"{"c": ["x", [0], null]}"#.into(),
            Box::new(schema(V::LabelNotString)),
        ),
        (
            "value not an array",
            r#"{"c": {"label": "included"}}"#.into(),
            Box::new(schema(V::NotAnArray)),
        ),
        (
            "top level not an object",
            r#"[["x", [0], "included"]]"#.into(),
            Box::new(schema(V::NotAnObject)),
        ),
        (
            "label illegal for the kind",
            r#"{"c": ["x", [0], "excluded"]}"#.into(),
            Box::new(|e: &PayloadError| matches!(e, PayloadError::KindViolation { .. })),
        ),
        (
            "not JSON",
            r#"{"c": ["x", [0], "included"]"#.into(),
            Box::new(|e: &PayloadError| matches!(e, PayloadError::Parse(_))),
        ),
    ];
    for (name, payload, expect) in &cases {
        match validate_payload(payload, CriterionKind::Inclusion) {
            Ok(_) => return Err(format!("{name}: accepted")),
            Err(e) if !expect(&e) => return Err(format!("{name}: wrong class {e:?}")),
            Err(_) => {}
        }
    }
    Ok(format!(
        "valid accepted, {} mutations rejected",
        cases.len()
    ))
}

// ---- retries ----

fn retry_protocol() -> Check {
    let good = "```json\n{\"Age 18 or older\": [\"Adult.\", [0], \"included\"]}\n```";
    let bad = "I am not sure.";
    let ctx = |k: usize| RequestContext {
        patient_id: format!("p{k}"),
        trial_id: "t".into(),
        kind: CriterionKind::Inclusion,
    };
    let mut script = Vec::new();
    for k in 0..=5 {
        for _ in 0..k {
            script.push((ctx(k), bad.to_string()));
        }
        if k < 5 {
            script.push((ctx(k), good.to_string()));
        }
    }
    let backend = ScriptedBackend::new("scripted", script);
    let config = GenerationConfig::default();
    for k in 0..5 {
        let v = generate_validated(&backend, &[], CriterionKind::Inclusion, &config, &ctx(k))
            .map_err(|e| format!("k={k}: {e}"))?;
        let calls = backend.calls_for(&ctx(k));
        ensure(calls == k + 1 && v.attempts_used as usize == k + 1, || {
            format!("k={k}: {calls} calls, {} attempts", v.attempts_used)
        })?;
    }
    match generate_validated(&backend, &[], CriterionKind::Inclusion, &config, &ctx(5)) {
        Err(GenerationError::StructuredOutput(f))
            if f.attempts == 5 && backend.calls_for(&ctx(5)) == 5 => {}
        other => return Err(format!("five failures gave {other:?}")),
    }
    Ok("k+1 calls for k in 0..=4, failure after 5".into())
}

// ---- end to end ----

fn cli(args: &[String]) -> Result<(), String> {
    let cli =
        Cli::try_parse_from(std::iter::once("trialmatch".to_string()).chain(args.iter().cloned()))
            .map_err(|e| e.to_string())?;
    run(cli).map_err(|e| e.to_string())
}

fn match_into(out: &Path) -> Result<(), String> {
    let mut args = vec!["match".to_string()];
    args.extend(common::corpus_flags());
    args.extend([
        "--backend".into(),
        "mock".into(),
        "--mock-script".into(),
        common::fixture("mock_script.jsonl").display().to_string(),
        "--label".into(),
        "mock".into(),
        "--out".into(),
        out.display().to_string(),
    ]);
    cli(&args)
}

fn ranked_bytes(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir.join(trialmatch::run::RANKED_DIR)).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        out.push((
            entry.file_name().to_string_lossy().into_owned(),
            fs::read(entry.path()).map_err(|e| e.to_string())?,
        ));
    }
    out.sort();
    Ok(out)
}

fn end_to_end() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (first, second) = (tmp.path().join("first"), tmp.path().join("second"));
    match_into(&first)?;
    match_into(&second)?;
    let ranked = ranked_bytes(&first)?;
    ensure(ranked.len() == 3, || {
        format!("{} ranked lists", ranked.len())
    })?;
    ensure(ranked == ranked_bytes(&second)?, || {
        "ranked lists differ between runs".into()
    })?;

    let eval = tmp.path().join("eval");
    cli(&[
        "evaluate".into(),
        "--run".into(),
        first.display().to_string(),
        "--qrels".into(),
        common::fixture("qrels.tsv").display().to_string(),
        "--out".into(),
        eval.display().to_string(),
    ])?;
    let report: Value = serde_json::from_str(
        &fs::read_to_string(eval.join("report.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let ndcg = report["models"][0]["ranking"]["ndcg_at_10"]
        .as_f64()
        .unwrap_or(f64::NAN);
    ensure(ndcg == 1.0, || format!("NDCG@10 = {ndcg}"))?;
    Ok("3 byte-identical ranked lists, NDCG@10 = 1 (same-platform reruns only)".into())
}

// ---- split ----

fn random_corpus(rng: &mut ChaCha8Rng, n_patients: usize) -> Corpus {
    let patients: Vec<PatientNote> = (0..n_patients)
        .map(|i| PatientNote::new(format!("P{i:04}"), vec!["A note.".into()]).unwrap())
        .collect();
    let n_trials = rng.random_range(1..=8);
    let trials: Vec<ClinicalTrial> = (0..n_trials)
        .map(|i| ClinicalTrial {
            trial_id: format!("T{i}"),
            ..Default::default()
        })
        .collect();
    let mut judgments = Vec::new();
    for p in &patients {
        let mut ts: Vec<&ClinicalTrial> = trials.iter().collect();
        ts.shuffle(rng);
        for t in ts.into_iter().take(rng.random_range(0..=n_trials)) {
            judgments.push(RelevanceJudgment {
                patient_id: p.patient_id().into(),
                trial_id: t.trial_id.clone(),
                relevance: [
                    Relevance::Irrelevant,
                    Relevance::Excluded,
                    Relevance::Eligible,
                ][rng.random_range(0..3)],
            });
        }
    }
    Corpus::new(patients, trials, judgments).unwrap()
}

fn split_integrity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for round in 0..500 {
        let n = rng.random_range(2..=300);
        let corpus = random_corpus(&mut rng, n);
        let s = split_by_patient(&corpus, 0.2, round).map_err(|e| e.to_string())?;
        let train: BTreeSet<&str> = s
            .train
            .patients()
            .iter()
            .map(PatientNote::patient_id)
            .collect();
        let test: BTreeSet<&str> = s
            .test
            .patients()
            .iter()
            .map(PatientNote::patient_id)
            .collect();
        ensure(
            train.is_disjoint(&test) && train.len() + test.len() == n,
            || format!("round {round}: patients leak or go missing"),
        )?;
        ensure(
            s.train
                .judgments()
                .iter()
                .all(|j| train.contains(j.patient_id.as_str())),
            || format!("round {round}: a train judgment names a test patient"),
        )?;
        ensure(
            s.test
                .judgments()
                .iter()
                .all(|j| test.contains(j.patient_id.as_str())),
            || format!("round {round}: a test judgment names a train patient"),
        )?;
        ensure(
            s.train.judgments().len() + s.test.judgments().len() == corpus.judgments().len(),
            || format!("round {round}: judgments lost"),
        )?;
        let target = 0.2 * n as f64;
        ensure((test.len() as f64 - target).abs() <= 1.0, || {
            format!("round {round}: {} test patients for n = {n}", test.len())
        })?;
    }
    let corpus = random_corpus(&mut rng, 176);
    let s = split_by_patient(&corpus, 0.2, 0).map_err(|e| e.to_string())?;
    let (tr, te) = (s.train.patients().len(), s.test.patients().len());
    ensure(te == 36 && tr == 140, || {
        format!("176 patients split {te}/{tr}")
    })?;
    Ok("500 corpora, 176 -> 36 test / 140 train".into())
}

// ---- distillation ----

fn distill_round_trip() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = tmp.path().join("distill");
    let mut args = vec!["distill".to_string()];
    args.extend(common::corpus_flags());
    args.extend([
        "--backend".into(),
        "mock".into(),
        "--mock-script".into(),
        common::fixture("mock_script.jsonl").display().to_string(),
        "--n".into(),
        "20".into(),
        "--out".into(),
        out.display().to_string(),
    ]);
    cli(&args)?;
    let text = fs::read_to_string(out.join(trialmatch::distill::EXPORT_FILE))
        .map_err(|e| e.to_string())?;
    let mut pairs = BTreeSet::new();
    let mut n = 0;
    for line in text.lines() {
        let r: DistillRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let payload = extract_fenced_payload(&r.assistant).map_err(|e| e.to_string())?;
        validate_payload(payload, r.meta.kind)
            .map_err(|e| format!("{}/{}: {e}", r.meta.patient_id, r.meta.trial_id))?;
        pairs.insert((r.meta.patient_id, r.meta.trial_id));
        n += 1;
    }
    ensure(n > 0 && n <= 40, || format!("{n} records"))?;
    ensure(pairs.len() <= 20, || {
        format!("{} distinct pairs", pairs.len())
    })?;
    Ok(format!(
        "{n} records from {} pairs, all re-validate",
        pairs.len()
    ))
}

fn main() {
    let criteria = [
        Criterion {
            name: "score formulas match a brute-force recount",
            tolerance: "exact",
            budget: Duration::from_secs(1),
            check: scores_exhaustive,
        },
        Criterion {
            name: "score bounds and single-flip monotonicity",
            tolerance: "exact",
            budget: Duration::from_secs(5),
            check: scores_bounds_and_monotonicity,
        },
        Criterion {
            name: "NDCG matches brute-force DCG/IDCG",
            tolerance: "1e-9",
            budget: Duration::from_secs(10),
            check: ndcg_oracle,
        },
        Criterion {
            name: "AUROC matches Mann-Whitney pair count",
            tolerance: "1e-9",
            budget: Duration::from_secs(5),
            check: auroc_oracle,
        },
        Criterion {
            name: "ROUGE-L matches a quadratic LCS oracle",
            tolerance: "exact",
            budget: Duration::from_secs(5),
            check: rouge_oracle,
        },
        Criterion {
            name: "novelty selection post-condition and replay",
            tolerance: "exact",
            budget: Duration::from_secs(10),
            check: novelty_postcondition,
        },
        Criterion {
            name: "schema mutation suite",
            tolerance: "exact violation class",
            budget: Duration::from_secs(1),
            check: schema_mutations,
        },
        Criterion {
            name: "retry protocol call counts",
            tolerance: "exact",
            budget: Duration::from_secs(1),
            check: retry_protocol,
        },
        Criterion {
            name: "end-to-end match determinism and NDCG@10 = 1",
            tolerance: "byte-identical, exact",
            budget: Duration::from_secs(30),
            check: end_to_end,
        },
        Criterion {
            name: "patient-axis split integrity",
            tolerance: "+/-1 patient",
            budget: Duration::from_secs(10),
            check: split_integrity,
        },
        Criterion {
            name: "distill export round-trip",
            tolerance: "exact",
            budget: Duration::from_secs(10),
            check: distill_round_trip,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = (c.check)();
        let elapsed = start.elapsed();
        let outcome = match result {
            Ok(detail) if elapsed <= c.budget => Ok(detail),
            Ok(detail) => Err(format!("{detail}; over the {:?} budget", c.budget)),
            Err(e) => Err(e),
        };
        match outcome {
            Ok(detail) => println!(
                "PASS  {} [{:.3}s / {:?}, tolerance {}] {detail}",
                c.name,
                elapsed.as_secs_f64(),
                c.budget,
                c.tolerance
            ),
            Err(e) => {
                failed += 1;
                println!(
                    "FAIL  {} [{:.3}s / {:?}, tolerance {}] {e}",
                    c.name,
                    elapsed.as_secs_f64(),
                    c.budget,
                    c.tolerance
                );
            }
        }
    }
    println!(
        "{} of {} acceptance criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
