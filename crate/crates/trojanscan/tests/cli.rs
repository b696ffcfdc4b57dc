//! End-to-end CLI checks on a miniature experiment.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_trojanscan")
}

/// Overrides shrinking every stage so a full command finishes in seconds.
fn tiny_args() -> Vec<String> {
    [
        "--task.n_attacker=96",
        "--task.n_defender=96",
        "--zoo.count_benign=3",
        "--zoo.count_trojan=3",
        "--zoo.validation_benign=1",
        "--zoo.validation_trojan=1",
        "--training.epochs=3",
        "--meta.k=2",
        "--meta.epochs=2",
        "--meta.hidden=8",
        "--arms_race.target_count=2",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn run_in(dir: &Path, args: &[String]) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn run_ok(dir: &Path, args: &[String]) -> Output {
    let out = run_in(dir, args);
    assert!(
        out.status.success(),
        "expected success for {args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn gen_zoo(dir: &Path, out_name: &str) -> PathBuf {
    let mut args = vec!["gen-zoo".to_string(), format!("--out={out_name}")];
    args.extend(tiny_args());
    run_ok(dir, &args);
    dir.join(out_name).join("manifest.jsonl")
}

#[test]
fn gen_zoo_writes_models_and_manifest_idempotently() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_zoo(dir.path(), "zoo");
    let text = std::fs::read_to_string(&manifest).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    let trojans = lines.iter().filter(|l| l.contains("\"label\":1")).count();
    assert_eq!(trojans, 3);
    let models: Vec<_> = std::fs::read_dir(dir.path().join("zoo/models"))
        .unwrap()
        .collect();
    assert_eq!(models.len(), 6);

    // Rerun with the same seed: byte-identical manifest.
    let first = std::fs::read(&manifest).unwrap();
    gen_zoo(dir.path(), "zoo");
    assert_eq!(first, std::fs::read(&manifest).unwrap());

    // A different master seed changes the artifacts.
    let mut args = vec![
        "gen-zoo".to_string(),
        "--out=zoo2".to_string(),
        "--set".to_string(),
        "master_seed=777".to_string(),
    ];
    args.extend(tiny_args());
    run_ok(dir.path(), &args);
    let other = std::fs::read(dir.path().join("zoo2/manifest.jsonl")).unwrap();
    assert_ne!(first, other);
}

#[test]
fn env_seed_overrides_master_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["gen-zoo".to_string(), "--out=by_env".to_string()];
    args.extend(tiny_args());
    let out = Command::new(bin())
        .args(&args)
        .env("TROJANSCAN_SEED", "777")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());

    let mut args = vec![
        "gen-zoo".to_string(),
        "--out=by_flag".to_string(),
        "--set".to_string(),
        "master_seed=777".to_string(),
    ];
    args.extend(tiny_args());
    run_ok(dir.path(), &args);

    assert_eq!(
        std::fs::read(dir.path().join("by_env/manifest.jsonl")).unwrap(),
        std::fs::read(dir.path().join("by_flag/manifest.jsonl")).unwrap()
    );
}

#[test]
fn train_meta_writes_state_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_zoo(dir.path(), "zoo");
    let mut args = vec![
        "train-meta".to_string(),
        format!("--zoo={}", manifest.display()),
        "--out=meta".to_string(),
    ];
    args.extend(tiny_args());
    run_ok(dir.path(), &args);

    let state = std::fs::read_to_string(dir.path().join("meta/meta_state.json")).unwrap();
    assert!(state.contains("\"mode\":\"jumbo\""));
    assert!(state.contains("\"k\":2"));
    let trace = std::fs::read_to_string(dir.path().join("meta/trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines[0], "epoch,loss");
    assert_eq!(lines.len() - 1, 2, "one row per meta-training epoch");
}

#[test]
fn train_meta_oneclass_accepts_benign_only_zoo() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["gen-zoo".to_string(), "--out=zoo".to_string()];
    args.extend(tiny_args());
    args.push("--zoo.count_trojan=0".to_string());
    run_ok(dir.path(), &args);

    let mut args = vec![
        "train-meta".to_string(),
        "--zoo=zoo/manifest.jsonl".to_string(),
        "--mode=oneclass".to_string(),
        "--out=meta".to_string(),
    ];
    args.extend(tiny_args());
    run_ok(dir.path(), &args);
    let state = std::fs::read_to_string(dir.path().join("meta/meta_state.json")).unwrap();
    assert!(state.contains("\"mode\":\"oneclass\""));
    assert!(!state.contains("\"rho\":null"));
}

#[test]
fn train_meta_jumbo_needs_both_labels_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["gen-zoo".to_string(), "--out=zoo".to_string()];
    args.extend(tiny_args());
    args.push("--zoo.count_trojan=0".to_string());
    run_ok(dir.path(), &args);

    let mut args = vec![
        "train-meta".to_string(),
        "--zoo=zoo/manifest.jsonl".to_string(),
        "--out=meta".to_string(),
    ];
    args.extend(tiny_args());
    let out = run_in(dir.path(), &args);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.lines().count(), 1, "one-line diagnostic: {stderr}");
}

#[test]
fn scan_reproduces_in_process_scores_and_handles_errors() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_zoo(dir.path(), "zoo");
    let mut args = vec![
        "train-meta".to_string(),
        format!("--zoo={}", manifest.display()),
        "--out=meta".to_string(),
    ];
    args.extend(tiny_args());
    run_ok(dir.path(), &args);

    // Score the first zoo member through the library.
    let state =
        trojanscan::artifacts::read_meta_state(&dir.path().join("meta/meta_state.json")).unwrap();
    let zoo = trojanscan::artifacts::load_zoo(&manifest).unwrap();
    let expected = state.score_target(&zoo[0].model).unwrap();

    let out = run_ok(
        dir.path(),
        &[
            "scan".to_string(),
            "--meta=meta/meta_state.json".to_string(),
            "zoo/models/benign_0000.json".to_string(),
        ],
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "model_path,label,score");
    let score: f64 = lines[1].rsplit(',').next().unwrap().parse().unwrap();
    assert_eq!(score, expected, "scan must reproduce the in-process score");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("file IO excluded"), "timing goes to stderr");

    // Empty target list: header-only CSV, exit 0.
    let out = run_ok(
        dir.path(),
        &[
            "scan".to_string(),
            "--meta=meta/meta_state.json".to_string(),
        ],
    );
    assert_eq!(
        String::from_utf8_lossy(&out.stdout),
        "model_path,label,score\n"
    );

    // A malformed model file yields an ERROR row and exit code 1.
    std::fs::write(dir.path().join("broken.json"), "{not json").unwrap();
    let out = run_in(
        dir.path(),
        &[
            "scan".to_string(),
            "--meta=meta/meta_state.json".to_string(),
            "broken.json".to_string(),
            "zoo/models/benign_0001.json".to_string(),
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("broken.json,,ERROR"));
}

#[test]
fn scan_with_manifest_carries_labels() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_zoo(dir.path(), "zoo");
    let mut args = vec![
        "train-meta".to_string(),
        format!("--zoo={}", manifest.display()),
        "--out=meta".to_string(),
    ];
    args.extend(tiny_args());
    run_ok(dir.path(), &args);

    let out = run_ok(
        dir.path(),
        &[
            "scan".to_string(),
            "--meta=meta/meta_state.json".to_string(),
            format!("--manifest={}", manifest.display()),
            "--out=report.csv".to_string(),
        ],
    );
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows.iter().filter(|r| r.contains(",1,")).count(), 3);
    assert_eq!(rows.iter().filter(|r| r.contains(",0,")).count(), 3);
}

#[test]
fn eval_emits_the_full_auc_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["eval".to_string(), "--out=evalout".to_string()];
    args.extend(tiny_args());
    run_ok(dir.path(), &args);

    let csv = std::fs::read_to_string(dir.path().join("evalout/eval.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "detector,attack,auc,master_seed");
    for detector in ["jumbo-tuned", "jumbo-untuned", "oneclass"] {
        for attack in ["modification", "blending", "all_to_all"] {
            assert!(
                lines
                    .iter()
                    .any(|l| l.starts_with(&format!("{detector},{attack},"))),
                "missing row {detector},{attack}"
            );
        }
    }
    for (defense, attack) in [
        ("plain", "none"),
        ("plain", "adaptive"),
        ("robust", "none"),
        ("robust", "adaptive"),
    ] {
        assert!(
            lines
                .iter()
                .any(|l| l.starts_with(&format!("{defense},{attack},"))),
            "missing arms row {defense},{attack}"
        );
    }
    // Every AUC cell parses and lies in [0,1].
    for line in &lines[1..] {
        let auc: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&auc), "auc out of range in {line}");
    }
    assert!(dir.path().join("evalout/meta_tuned.json").exists());
}

#[test]
fn eval_reports_are_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["first", "second"] {
        let mut args = vec!["eval".to_string(), format!("--out={out}")];
        args.extend(tiny_args());
        run_ok(dir.path(), &args);
    }
    assert_eq!(
        std::fs::read(dir.path().join("first/eval.csv")).unwrap(),
        std::fs::read(dir.path().join("second/eval.csv")).unwrap()
    );
    assert_eq!(
        std::fs::read(dir.path().join("first/meta_tuned.json")).unwrap(),
        std::fs::read(dir.path().join("second/meta_tuned.json")).unwrap()
    );
}

#[test]
fn arms_race_emits_defense_attack_grid() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["arms-race".to_string(), "--out=arms".to_string()];
    args.extend(tiny_args());
    run_ok(dir.path(), &args);
    let csv = std::fs::read_to_string(dir.path().join("arms/arms_race.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "defense,attack,auc");
    assert_eq!(lines.len(), 5);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["no-such-command".to_string()]);
    assert_eq!(out.status.code(), Some(2));
    let out = run_in(
        dir.path(),
        &[
            "gen-zoo".to_string(),
            "--zoo.role=bogus".to_string(),
            "--out=x".to_string(),
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}
