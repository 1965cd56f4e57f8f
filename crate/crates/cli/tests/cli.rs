use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_session-coder"));
    c.env_remove("SESSION_CODER_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn error_json(out: &Output) -> Value {
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|_| panic!("stderr is not JSON: {text}"))
}

/// Small synthetic dataset plus a tiny training config.
fn fixture(dir: &Path) -> PathBuf {
    let spec = serde_json::json!({
        "n_sessions": 32,
        "n_therapists": 8,
        "d": 12,
        "turns_mean": 10.0,
        "turns_std": 2.0,
        "min_turns": 4,
        "seed": 7,
    });
    let spec_path = dir.join("spec.json");
    fs::write(&spec_path, spec.to_string()).unwrap();
    let data = dir.join("data");
    ok(&["synth", "--spec", spec_path.to_str().unwrap(), "--out", data.to_str().unwrap()]);
    let cfg = serde_json::json!({
        "transcripts": "data/transcripts.jsonl",
        "embeddings": "data/embeddings.jsonl",
        "vocab": "data/vocab.json",
        "u": 4, "p": 3, "q": 4,
        "max_epochs": 3, "patience": 2, "batch_size": 8,
        "k": 4, "bootstrap_n": 200,
    });
    let cfg_path = dir.join("run.json");
    fs::write(&cfg_path, cfg.to_string()).unwrap();
    cfg_path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_defaults_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let summary = ok(&["synth", "--out", s(&a)]);
    assert!(summary.contains("200 sessions, 50 therapists"), "{summary}");
    ok(&["synth", "--out", s(&b)]);
    for f in ["transcripts.jsonl", "embeddings.jsonl", "vocab.json", "spec.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let therapists: std::collections::BTreeSet<String> = fs::read_to_string(a.join("transcripts.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["therapist_id"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(therapists.len(), 50);
    let manifest = json(&a.join("manifest.json"));
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["seed"], 42);

    let c = tmp.path().join("c");
    ok(&["synth", "--out", s(&c), "--seed", "43"]);
    assert_ne!(fs::read(a.join("embeddings.jsonl")).unwrap(), fs::read(c.join("embeddings.jsonl")).unwrap());
}

#[test]
fn synth_accepts_overlapping_regions_and_rejects_bad_fields() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"n_sessions": 8, "n_therapists": 4, "regions": {"ag": [[0.0, 0.5]], "fb": [[0.2, 0.9]]}}"#,
    )
    .unwrap();
    ok(&["synth", "--spec", s(&spec), "--out", s(&tmp.path().join("o"))]);

    fs::write(&spec, r#"{"noise_scale": -1.0}"#).unwrap();
    let err = error_json(&run(&["synth", "--spec", s(&spec), "--out", s(&tmp.path().join("p"))]));
    assert_eq!(err["error"]["kind"], "validation");
    fs::write(&spec, r#"{"no_such_field": 1}"#).unwrap();
    let err = error_json(&run(&["synth", "--spec", s(&spec), "--out", s(&tmp.path().join("q"))]));
    assert_eq!(err["error"]["kind"], "validation");
}

#[test]
fn embed_hash_and_file_providers() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&["synth", "--out", s(&data)]);
    let transcripts = data.join("transcripts.jsonl");
    let e1 = tmp.path().join("e1");
    let e2 = tmp.path().join("e2");
    ok(&["embed", "--transcripts", s(&transcripts), "--dim", "16", "--out", s(&e1)]);
    ok(&["embed", "--transcripts", s(&transcripts), "--dim", "16", "--out", s(&e2)]);
    let bytes = fs::read(e1.join("embeddings.jsonl")).unwrap();
    assert_eq!(bytes, fs::read(e2.join("embeddings.jsonl")).unwrap());

    // one vector per therapist turn; synthetic turns alternate roles
    let sessions: Vec<Value> = fs::read_to_string(&transcripts)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let rows: Vec<Value> = String::from_utf8(bytes)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), sessions.len());
    for (sess, emb) in sessions.iter().zip(&rows) {
        assert_eq!(sess["session_id"], emb["session_id"]);
        let therapist = sess["utterances"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|u| u["role"] == "therapist")
            .count();
        assert_eq!(emb["vectors"].as_array().unwrap().len(), therapist);
        assert_eq!(emb["dim"], 16);
    }

    // the file provider passes a complete file through unchanged
    let e3 = tmp.path().join("e3");
    ok(&[
        "embed", "--transcripts", s(&transcripts), "--provider", "file",
        "--source", s(&data.join("embeddings.jsonl")), "--out", s(&e3),
    ]);
    assert_eq!(
        fs::read(e3.join("embeddings.jsonl")).unwrap(),
        fs::read(data.join("embeddings.jsonl")).unwrap()
    );

    // and names the sessions it lacks
    let partial = tmp.path().join("partial.jsonl");
    let text = fs::read_to_string(data.join("embeddings.jsonl")).unwrap();
    let kept: Vec<&str> = text.lines().filter(|l| !l.contains("\"S0003\"") && !l.contains("\"S0017\"")).collect();
    fs::write(&partial, kept.join("\n")).unwrap();
    let out = run(&[
        "embed", "--transcripts", s(&transcripts), "--provider", "file",
        "--source", s(&partial), "--out", s(&tmp.path().join("e4")),
    ]);
    let err = error_json(&out);
    assert_eq!(err["error"]["kind"], "missing_embedding");
    let msg = err["error"]["message"].as_str().unwrap();
    assert!(msg.contains("S0003") && msg.contains("S0017"), "{msg}");
}

#[test]
fn crossval_report_structure_manifest_and_parallel_equivalence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture(tmp.path());
    let a = tmp.path().join("cv_a");
    let b = tmp.path().join("cv_b");
    let summary = ok(&["crossval", "--config", s(&cfg), "--out", s(&a)]);
    assert!(summary.contains("macro-F1"));
    ok(&["crossval", "--config", s(&cfg), "--out", s(&b), "--parallel-folds", "3"]);
    let ra = fs::read(a.join("report.json")).unwrap();
    assert_eq!(ra, fs::read(b.join("report.json")).unwrap());

    let report = json(&a.join("report.json"));
    assert_eq!(report["folds"].as_array().unwrap().len(), 4);
    assert_eq!(report["predictions"].as_array().unwrap().len(), 32);
    let f1 = report["macro_f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f1));
    assert_eq!(report["system"], "multi_task/metadata_on/therapist_only");

    let manifest = json(&a.join("manifest.json"));
    assert_eq!(manifest["command"], "crossval");
    let inputs = manifest["inputs"].as_array().unwrap();
    assert_eq!(inputs.len(), 3);
    assert!(inputs.iter().all(|i| i["sha256"].as_str().unwrap().len() == 64));
    assert!(manifest["wall_clock_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));

    // the thread cap leaves results alone as well
    let c = tmp.path().join("cv_c");
    let out = bin()
        .args(["crossval", "--config", s(&cfg), "--out", s(&c), "--parallel-folds", "4"])
        .env("SESSION_CODER_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(ra, fs::read(c.join("report.json")).unwrap());
}

#[test]
fn flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture(tmp.path());
    let out = tmp.path().join("single");
    ok(&[
        "crossval", "--config", s(&cfg), "--out", s(&out),
        "--mode", "single", "--metadata", "off", "--role", "all", "--seed", "5",
    ]);
    let report = json(&out.join("report.json"));
    assert_eq!(report["system"], "single_task/metadata_off/all");
    assert_eq!(report["config"]["run"]["seed"], 5);
    assert!(report["predictions"][0]["probability"].is_f64());
}

#[test]
fn saliency_csv_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture(tmp.path());
    let multi = tmp.path().join("sal_multi");
    ok(&["saliency", "--config", s(&cfg), "--out", s(&multi)]);
    let text = fs::read_to_string(multi.join("saliency.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 13);
    assert!(lines[0].starts_with("code,bin_0,"));
    assert!(lines[0].ends_with(",bin_99"));
    assert!(lines[12].starts_with("mean,"));
    assert!(lines.iter().all(|l| l.split(',').count() == 101));

    let single = tmp.path().join("sal_single");
    ok(&["saliency", "--config", s(&cfg), "--out", s(&single), "--mode", "single"]);
    let text = fs::read_to_string(single.join("saliency.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("total,"));
}

#[test]
fn train_then_saliency_from_model() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture(tmp.path());
    let out = tmp.path().join("train");
    let summary = ok(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert!(summary.contains("best epoch"), "{summary}");
    let model = out.join("model.json");
    assert!(model.is_file());
    let history = json(&out.join("history.json"));
    assert!(!history["epochs"].as_array().unwrap().is_empty());
    let sal = tmp.path().join("sal");
    ok(&["saliency", "--config", s(&cfg), "--model", s(&model), "--out", s(&sal)]);
    assert_eq!(fs::read_to_string(sal.join("saliency.csv")).unwrap().lines().count(), 13);
}

#[test]
fn baseline_and_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture(tmp.path());
    let base = tmp.path().join("base");
    ok(&["baseline", "--config", s(&cfg), "--out", s(&base)]);
    let report = json(&base.join("baseline_report.json"));
    assert_eq!(report["system"], "baseline/therapist_only");
    assert_eq!(report["folds"].as_array().unwrap().len(), 4);
    assert!(base.join("baseline_model.json").is_file());

    let cv = tmp.path().join("cv");
    ok(&["crossval", "--config", s(&cfg), "--out", s(&cv)]);

    let same = tmp.path().join("same");
    let r = base.join("baseline_report.json");
    ok(&["evaluate", "--a", s(&r), "--b", s(&r), "--config", s(&cfg), "--out", s(&same)]);
    let cmp = json(&same.join("comparison.json"));
    assert_eq!(cmp["bootstrap"]["p_value"], 1.0);
    assert_eq!(cmp["bootstrap"]["delta"], 0.0);
    assert_eq!(cmp["bootstrap"]["n"], 200);

    let diff = tmp.path().join("diff");
    let cvr = cv.join("report.json");
    let summary = ok(&[
        "evaluate", "--a", s(&r), "--b", s(&cvr), "--config", s(&cfg), "--out", s(&diff), "--bootstrap-n", "500",
    ]);
    assert!(summary.contains("p ="), "{summary}");
    let cmp = json(&diff.join("comparison.json"));
    let p = cmp["bootstrap"]["p_value"].as_f64().unwrap();
    assert!(p > 0.0 && p <= 1.0);
    assert_eq!(json(&diff.join("report.json"))["bootstrap"]["n"], 500);
}

#[test]
fn ablate_emits_eight_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture(tmp.path());
    let out = tmp.path().join("ablate");
    ok(&["ablate", "--config", s(&cfg), "--out", s(&out)]);
    let grid = json(&out.join("ablation.json"));
    let cells = grid["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 8);
    let systems: std::collections::BTreeSet<&str> = cells.iter().map(|c| c["system"].as_str().unwrap()).collect();
    assert_eq!(systems.len(), 8);
    assert_eq!(grid["toggles"].as_array().unwrap().len(), 3);
    assert_eq!(fs::read_dir(out.join("cells")).unwrap().count(), 8);
}

#[test]
fn errors_are_json_with_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["crossval", "--out", s(&tmp.path().join("x"))]);
    let err = error_json(&out);
    assert_eq!(err["error"]["kind"], "config");
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["crossval", "--transcripts", "/no/such/file.jsonl", "--embeddings", "/no/such/e.jsonl"]);
    assert_eq!(error_json(&out)["error"]["kind"], "config");

    let out = run(&["train", "--mode", "bogus"]);
    assert_eq!(error_json(&out)["error"]["kind"], "usage");
    assert_eq!(out.status.code(), Some(2));

    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"learning_rate": -1.0}"#).unwrap();
    let out = run(&["crossval", "--config", s(&cfg)]);
    assert_eq!(error_json(&out)["error"]["kind"], "config");

    let out = bin()
        .args(["crossval", "--config", s(&cfg)])
        .env("SESSION_CODER_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(error_json(&out)["error"]["kind"], "config");
}

#[test]
fn inputs_are_not_modified() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture(tmp.path());
    let data = tmp.path().join("data");
    let before: Vec<Vec<u8>> = ["transcripts.jsonl", "embeddings.jsonl", "vocab.json"]
        .iter()
        .map(|f| fs::read(data.join(f)).unwrap())
        .collect();
    ok(&["baseline", "--config", s(&cfg), "--out", s(&tmp.path().join("b"))]);
    ok(&["train", "--config", s(&cfg), "--out", s(&tmp.path().join("t"))]);
    let after: Vec<Vec<u8>> = ["transcripts.jsonl", "embeddings.jsonl", "vocab.json"]
        .iter()
        .map(|f| fs::read(data.join(f)).unwrap())
        .collect();
    assert_eq!(before, after);
}
