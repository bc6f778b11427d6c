mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use socemo::cli::run;
use socemo::pipeline::{read_records_jsonl, ConditioningMode, RunStatus};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join(rel)
}

async fn socemo(args: &[&str]) -> Result<String, socemo::cli::CliError> {
    let mut argv = vec!["socemo".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    let mut out = Vec::new();
    run(argv, &mut out).await?;
    Ok(String::from_utf8(out).unwrap())
}

async fn ingest(dir: &Path) -> PathBuf {
    let out = dir.join("samples.jsonl");
    let corpus = fixture("fixtures/corpus");
    socemo(&[
        "ingest",
        "--dialogues",
        corpus.join("dialogues.txt").to_str().unwrap(),
        "--acts",
        corpus.join("acts.txt").to_str().unwrap(),
        "--emotions",
        corpus.join("emotions.txt").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
    .await
    .unwrap();
    out
}

#[tokio::test]
async fn score_table_matches_golden() {
    let bundle = fixture("fixtures/tiny.jsonl");
    let table = socemo(&["score", "--bundle", bundle.to_str().unwrap()]).await.unwrap();
    assert_eq!(table, include_str!("golden/score_tiny.txt"));
    let agree = socemo(&["agree", "--bundle", bundle.to_str().unwrap()]).await.unwrap();
    assert_eq!(agree, include_str!("golden/agree_tiny.txt"));
}

#[tokio::test]
async fn tiny_bundle_hand_values() {
    let bundle = fixture("fixtures/tiny.jsonl");
    let json = socemo(&["score", "--bundle", bundle.to_str().unwrap(), "--format", "json"]).await.unwrap();
    let report: serde_json::Value = serde_json::from_str(&json).unwrap();
    let rows = report["rows"].as_array().unwrap();
    let row = |mode: Option<&str>| {
        rows.iter()
            .find(|r| r["key"]["mode"].as_str() == mode)
            .unwrap_or_else(|| panic!("no row for {mode:?}"))
    };
    // (filter, top3, socemo, logical, emotional, social, weighted fluency)
    let cases = [
        (Some("NO_CD"), [75.0, 50.0, 25.0, 50.0, 0.0, 25.0, 75.0]),
        (Some("CD_PRED"), [75.0, 75.0, 81.25, 93.75, 75.0, 75.0, 100.0]),
        (Some("CD_GT"), [100.0, 100.0, 81.25, 93.75, 75.0, 75.0, 100.0]),
        (None, [50.0, 50.0, 212.5 / 3.0, 87.5, 75.0, 50.0, 75.0]),
    ];
    for (mode, want) in cases {
        let r = row(mode);
        let got = ["filter", "top3", "socemo", "logical", "emotional", "social", "weighted_fluency"]
            .map(|f| r[f].as_f64().unwrap());
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-9, "{mode:?}: {got:?} vs {want:?}");
        }
    }

    let agree = socemo(&["agree", "--bundle", bundle.to_str().unwrap(), "--format", "json"]).await.unwrap();
    let report: serde_json::Value = serde_json::from_str(&agree).unwrap();
    let alpha = report["mean_alpha"].as_f64().unwrap();
    assert!((alpha - 10.0 / 31.0).abs() < 1e-12, "{alpha}");
}

#[tokio::test]
async fn ingest_stats_and_plan_eval() {
    let dir = tempfile::tempdir().unwrap();
    let samples = ingest(dir.path()).await;
    let stats = socemo(&["stats", "--samples", samples.to_str().unwrap(), "--format", "json"]).await.unwrap();
    let stats: serde_json::Value = serde_json::from_str(&stats).unwrap();
    assert_eq!(stats["samples"], 10);
    assert_eq!(stats["mean_gold_length"], 1.5);

    let oracle = socemo(&["plan-eval", "--samples", samples.to_str().unwrap(), "--planner", "oracle"]).await.unwrap();
    assert_eq!(
        oracle,
        "model   jaccard  precision  recall    f1   nls  mean_l\n\
         oracle     1.00       1.00    1.00  1.00  1.00    1.50\n"
    );
    let random = ["plan-eval", "--samples", samples.to_str().unwrap(), "--planner", "random", "--seed", "4"];
    assert_eq!(socemo(&random).await.unwrap(), socemo(&random).await.unwrap());
}

#[tokio::test]
async fn run_cd_gt_on_ten_samples() {
    let dir = tempfile::tempdir().unwrap();
    let samples = ingest(dir.path()).await;
    let out = dir.path().join("cd-gt.jsonl");
    let printed = socemo(&[
        "run",
        "--samples",
        samples.to_str().unwrap(),
        "--mode",
        "cd-gt",
        "--backend",
        "mock",
        "--out",
        out.to_str().unwrap(),
    ])
    .await
    .unwrap();
    assert!(printed.is_empty());
    let records = read_records_jsonl(std::io::BufReader::new(std::fs::File::open(&out).unwrap())).unwrap();
    assert_eq!(records.len(), 10);
    for r in &records {
        assert_eq!(r.candidates.len(), 10);
        assert_eq!(r.mode, ConditioningMode::CdGt);
        assert_eq!(r.status, RunStatus::Ok);
        assert!(r.selected().is_some());
    }
}

#[tokio::test]
async fn campaign_create_then_export() {
    let dir = tempfile::tempdir().unwrap();
    let samples = ingest(dir.path()).await;
    let mut record_files = Vec::new();
    for mode in ["nocd", "cd-pred", "cd-gt"] {
        let out = dir.path().join(format!("{mode}.jsonl"));
        socemo(&["run", "--samples", samples.to_str().unwrap(), "--mode", mode, "--out", out.to_str().unwrap()])
            .await
            .unwrap();
        record_files.push(out.to_str().unwrap().to_string());
    }
    let data = dir.path().join("data");
    let mut args = vec!["campaign-create", "--records"];
    args.extend(record_files.iter().map(String::as_str));
    args.extend(["--data-dir", data.to_str().unwrap(), "--step3", "2", "--annotators", "x,y,z"]);
    let created: serde_json::Value = serde_json::from_str(&socemo(&args).await.unwrap()).unwrap();
    assert_eq!(created["contexts"], 10);
    assert_eq!(created["tokens"].as_object().unwrap().len(), 3);
    let id = created["campaign_id"].as_str().unwrap();

    let bundle = socemo(&["export", "--campaign", id, "--data-dir", data.to_str().unwrap()]).await.unwrap();
    assert_eq!(bundle.lines().filter(|l| l.contains(r#""type":"pool""#)).count(), 10);
    let token = created["tokens"]["x"].as_str().unwrap();
    assert!(!bundle.contains(token));
}

fn exit_code(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_socemo")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stderr).unwrap())
}

#[test]
fn exit_codes_and_error_json() {
    let (code, err) = exit_code(&["frobnicate"]);
    assert_eq!(code, 2);
    let parsed: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(parsed["error"]["code"], "usage");

    assert_eq!(exit_code(&["score", "--bundle", "/definitely/missing.jsonl"]).0, 3);

    let not_a_bundle = fixture("fixtures/corpus/acts.txt");
    assert_eq!(exit_code(&["score", "--bundle", not_a_bundle.to_str().unwrap()]).0, 4);

    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        exit_code(&["export", "--campaign", "c-none", "--data-dir", dir.path().to_str().unwrap()]).0,
        6
    );
}

#[test]
fn unreachable_backend_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let rt = tokio::runtime::Runtime::new().unwrap();
    let samples = rt.block_on(ingest(dir.path()));
    let (code, err) = exit_code(&[
        "plan-eval",
        "--samples",
        samples.to_str().unwrap(),
        "--planner",
        "remote",
        "--backend",
        "http",
        "--backend-url",
        "http://127.0.0.1:9",
        "--retries",
        "0",
    ]);
    assert_eq!(code, 5, "{err}");
    assert!(err.contains("backend_unreachable"));
}

#[tokio::test]
async fn partial_bundle_needs_flag() {
    let full = std::fs::read_to_string(fixture("fixtures/tiny.jsonl")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let partial = dir.path().join("partial.jsonl");
    // drop one step-3 rating
    let mut dropped = false;
    let kept: Vec<&str> = full
        .lines()
        .filter(|l| {
            if !dropped && l.contains(r#""type":"step3""#) {
                dropped = true;
                return false;
            }
            true
        })
        .collect();
    std::fs::write(&partial, kept.join("\n")).unwrap();
    let p = partial.to_str().unwrap();
    let err = socemo(&["score", "--bundle", p]).await.unwrap_err();
    assert_eq!(err.exit_code(), 4);
    assert!(socemo(&["score", "--bundle", p, "--partial"]).await.is_ok());
}
