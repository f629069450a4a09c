//! Drives the `evhop` binary on the shipped synthetic fixture.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use evhop::corpus::{load_claims, Claim};
use evhop::eval::{MetricsReport, RankedEvidence};
use evhop::hybrid::{hybrid_rank, HybridParams};
use evhop::pipeline::ClaimRun;
use evhop::tuning::{GridResult, DEFAULT_GRID};
use evhop::SentenceAddress;
use serde_json::Value;
use sha2::{Digest, Sha256};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures/synthetic")
        .join(name)
}

fn evhop(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evhop"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = evhop(dir, args);
    assert!(
        out.status.success(),
        "evhop {}: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Ingests the fixture, indexes it and writes multi-hop runs to `runs.jsonl`.
fn prepare(dir: &Path) {
    let corpus = fixture("corpus.jsonl");
    let claims = fixture("claims.jsonl");
    ok(
        dir,
        &[
            "ingest-corpus",
            "--input",
            corpus.to_str().unwrap(),
            "--out",
            "corpus.jsonl",
        ],
    );
    ok(
        dir,
        &[
            "ingest-claims",
            "--input",
            claims.to_str().unwrap(),
            "--corpus",
            "corpus.jsonl",
            "--out",
            "claims.jsonl",
        ],
    );
    ok(
        dir,
        &[
            "build-sparse",
            "--corpus",
            "corpus.jsonl",
            "--out",
            "bm25.bin",
        ],
    );
    ok(
        dir,
        &[
            "multihop",
            "--claims",
            "claims.jsonl",
            "--corpus",
            "corpus.jsonl",
            "--retriever",
            "sparse",
            "--index",
            "bm25.bin",
            "--scorer",
            "oracle",
            "--out",
            "runs.jsonl",
        ],
    );
}

fn read_runs(path: &Path) -> Vec<ClaimRun> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn fixture_end_to_end_reports_every_metric() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);
    ok(
        d,
        &[
            "fuse",
            "--runs",
            "runs.jsonl",
            "--strategy",
            "hybrid",
            "--mth",
            "0.01",
            "--gamma",
            "1",
            "--out",
            "fused.jsonl",
        ],
    );
    let preds = fixture("predictions.jsonl");
    let table = ok(
        d,
        &[
            "evaluate",
            "--claims",
            "claims.jsonl",
            "--evidence",
            "fused.jsonl",
            "--predictions",
            preds.to_str().unwrap(),
            "--out",
            "metrics.json",
        ],
    );
    let report: MetricsReport =
        serde_json::from_str(&fs::read_to_string(d.join("metrics.json")).unwrap()).unwrap();
    for (name, v) in [
        ("sentence recall", report.sentence_recall),
        ("multi-hop sentence recall", report.sentence_recall_multihop),
        ("document recall", report.document_recall),
        ("document hit", report.document_hit),
        ("label accuracy", report.label_accuracy),
        ("fever", report.fever_score),
    ] {
        let v = v.unwrap_or_else(|| panic!("{name} missing"));
        assert!((0.0..=1.0).contains(&v), "{name} = {v}");
    }
    // The fixture predictions are the gold labels.
    assert_eq!(report.label_accuracy, Some(1.0));
    assert_eq!(report.k, 5);
    assert!(!table.is_empty());
}

#[test]
fn fuse_output_equals_library_fusion() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);
    ok(
        d,
        &[
            "fuse",
            "--runs",
            "runs.jsonl",
            "--strategy",
            "hybrid",
            "--mth",
            "0.5",
            "--gamma",
            "0.5",
            "--k",
            "5",
            "--out",
            "fused.jsonl",
        ],
    );
    let params = HybridParams::new(0.5, 0.5).unwrap();
    let mut expected = String::new();
    for run in read_runs(&d.join("runs.jsonl")) {
        let mut evidence = hybrid_rank(&run.single_map(), &run.sequences, &params);
        evidence.truncate(5);
        expected.push_str(
            &serde_json::to_string(&RankedEvidence {
                claim_id: run.claim_id,
                evidence,
            })
            .unwrap(),
        );
        expected.push('\n');
    }
    assert_eq!(fs::read_to_string(d.join("fused.jsonl")).unwrap(), expected);
}

/// Share of verifiable claims whose top `k` covers some complete gold set.
fn recall_oracle(runs: &[ClaimRun], claims: &[Claim], mth: f64, gamma: f64, k: usize) -> f64 {
    let params = HybridParams::new(mth, gamma).unwrap();
    let (mut hit, mut total) = (0usize, 0usize);
    for c in claims.iter().filter(|c| !c.evidence_sets.is_empty()) {
        total += 1;
        let Some(run) = runs.iter().find(|r| r.claim_id == c.id) else {
            continue;
        };
        let top: BTreeSet<SentenceAddress> =
            hybrid_rank(&run.single_map(), &run.sequences, &params)
                .into_iter()
                .take(k)
                .map(|(a, _)| a)
                .collect();
        if c.evidence_sets
            .iter()
            .any(|set| set.iter().all(|a| top.contains(a)))
        {
            hit += 1;
        }
    }
    hit as f64 / total as f64
}

#[test]
fn grid_search_picks_exhaustive_best() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);
    ok(
        d,
        &[
            "grid-search",
            "--runs",
            "runs.jsonl",
            "--claims",
            "claims.jsonl",
            "--out",
            "grid.json",
        ],
    );
    let result: GridResult =
        serde_json::from_str(&fs::read_to_string(d.join("grid.json")).unwrap()).unwrap();
    let runs = read_runs(&d.join("runs.jsonl"));
    let claims = load_claims(d.join("claims.jsonl"), None).unwrap().claims;
    assert_eq!(result.cells.len(), DEFAULT_GRID.len() * DEFAULT_GRID.len());
    // Grid values are ascending, so a strict improvement test keeps the
    // smallest mth, then the smallest gamma, among ties.
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for &mth in &DEFAULT_GRID {
        for &gamma in &DEFAULT_GRID {
            let r = recall_oracle(&runs, &claims, mth, gamma, 5);
            let cell = result
                .cells
                .iter()
                .find(|c| c.mth == mth && c.gamma == gamma)
                .unwrap();
            assert!(
                (cell.recall.unwrap() - r).abs() < 1e-12,
                "cell ({mth}, {gamma})"
            );
            if r > best.0 {
                best = (r, mth, gamma);
            }
        }
    }
    assert_eq!((result.best.mth, result.best.gamma), (best.1, best.2));
    assert_eq!(result.best.recall, Some(best.0));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let code = |args: &[&str]| evhop(d, args).status.code();
    assert_eq!(code(&["--help"]), Some(0));
    assert_eq!(code(&["build-sparse", "--no-such-flag"]), Some(1));
    assert_eq!(
        code(&["build-sparse", "--out", "x.bin"]),
        Some(1),
        "missing input flag"
    );
    assert_eq!(
        code(&["build-sparse", "--corpus", "absent.jsonl", "--out", "x.bin"]),
        Some(2)
    );
    assert_eq!(
        code(&["generate-fixture", "--out-dir", "fx"]),
        Some(1),
        "missing seed"
    );
    fs::write(d.join("bad.json"), "{\"unknown\": 1}").unwrap();
    assert_eq!(code(&["--config", "bad.json", "build-sparse"]), Some(1));
    fs::write(d.join("broken.jsonl"), "{not json\n").unwrap();
    assert_eq!(
        code(&["build-sparse", "--corpus", "broken.jsonl", "--out", "x.bin"]),
        Some(2)
    );
}

#[test]
fn manifest_records_inputs_outputs_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "--seed",
            "3",
            "generate-fixture",
            "--preset",
            "fixture",
            "--out-dir",
            "fx",
        ],
    );
    ok(
        d,
        &[
            "build-sparse",
            "--corpus",
            "fx/corpus.jsonl",
            "--out",
            "bm25.bin",
        ],
    );
    let m: Value =
        serde_json::from_str(&fs::read_to_string(d.join("bm25.bin.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(m["command"], "build-sparse");
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(m["inputs"][0]["path"], "fx/corpus.jsonl");
    let digest = hex::encode(Sha256::digest(fs::read(d.join("fx/corpus.jsonl")).unwrap()));
    assert_eq!(m["inputs"][0]["sha256"], digest.as_str());
    let out_digest = hex::encode(Sha256::digest(fs::read(d.join("bm25.bin")).unwrap()));
    assert_eq!(m["outputs"][0]["sha256"], out_digest.as_str());
    assert_eq!(m["config"]["bm25"]["k1"], 0.9);

    let g: Value =
        serde_json::from_str(&fs::read_to_string(d.join("fx/corpus.jsonl.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(g["seed"], 3);
    assert_eq!(g["outputs"].as_array().unwrap().len(), 3);

    // Same inputs, same bytes.
    let first = fs::read(d.join("bm25.bin.manifest.json")).unwrap();
    ok(
        d,
        &[
            "build-sparse",
            "--corpus",
            "fx/corpus.jsonl",
            "--out",
            "bm25.bin",
        ],
    );
    assert_eq!(fs::read(d.join("bm25.bin.manifest.json")).unwrap(), first);
}

#[test]
fn shipped_fixture_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "generate-fixture",
            "--preset",
            "fixture",
            "--seed",
            "17",
            "--out-dir",
            ".",
        ],
    );
    for name in ["corpus.jsonl", "claims.jsonl", "predictions.jsonl"] {
        assert_eq!(
            fs::read(dir.path().join(name)).unwrap(),
            fs::read(fixture(name)).unwrap(),
            "{name}"
        );
    }
}
