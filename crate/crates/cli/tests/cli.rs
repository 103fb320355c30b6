use std::path::Path;
use std::process::{Command, Output};

fn xmodal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xmodal"))
        .args(args)
        .output()
        .expect("spawn xmodal")
}

fn ok(args: &[&str]) -> Output {
    let out = xmodal(args);
    assert!(
        out.status.success(),
        "xmodal {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL_SPEC: &str = r#"{
  "genera": 2, "species_per_genus": 2, "head": 60, "tail": 10,
  "dim": 8, "seq_len": 80, "seqs_per_species": 3, "seed": 4
}"#;

const SMALL_TRAIN: &str = r#"{
  "input_dim": 8, "hidden_dim": 16, "batch_size": 16,
  "epochs_stage1": 2, "epochs_stage2": 2
}"#;

#[test]
fn unknown_subcommand_prints_usage() {
    let out = xmodal(&["frobnicate"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn eval_without_ckpt_names_the_flag() {
    let out = xmodal(&["eval", "--gallery", "g.csv", "--queries", "q.csv", "--out", "m.json"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--ckpt"), "{err}");
}

#[test]
fn unknown_flag_rejected() {
    let out = xmodal(&["anchors", "--in", "a", "--out", "b", "--bogus"]);
    assert!(!out.status.success());
}

#[test]
fn module_errors_exit_nonzero_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let out = xmodal(&["anchors", "--in", p(&missing), "--out", p(&dir.path().join("a.csv"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:") && err.contains("missing.csv"), "{err}");
}

#[test]
fn config_with_unknown_key_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"lr": 0.1, "learning_rate": 0.1}"#).unwrap();
    let out = xmodal(&[
        "train",
        "--config",
        p(&cfg),
        "--features",
        "x.csv",
        "--out",
        p(&dir.path().join("c.json")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
}

#[test]
fn subcommands_chain_without_edits() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = d.join("spec.json");
    std::fs::write(&spec, SMALL_SPEC).unwrap();
    let cfg = d.join("cfg.json");
    std::fs::write(&cfg, SMALL_TRAIN).unwrap();
    let data = d.join("data");

    ok(&["synth", "--spec", p(&spec), "--out", p(&data)]);
    for f in ["sequences.fa", "labels.csv", "train.csv", "test.csv", "split.json", "truth.json"] {
        assert!(data.join(f).is_file(), "{f} missing");
    }
    ok(&[
        "sgt-embed",
        "--fasta",
        p(&data.join("sequences.fa")),
        "--labels",
        p(&data.join("labels.csv")),
        "--kappa",
        "1.0",
        "--out",
        p(&d.join("genetic.csv")),
    ]);
    ok(&["anchors", "--in", p(&d.join("genetic.csv")), "--out", p(&d.join("anchors.csv"))]);
    ok(&[
        "train",
        "--config",
        p(&cfg),
        "--features",
        p(&data.join("train.csv")),
        "--out",
        p(&d.join("ckpt.json")),
    ]);
    assert!(d.join("history.json").is_file());
    ok(&[
        "align",
        "--config",
        p(&cfg),
        "--ckpt",
        p(&d.join("ckpt.json")),
        "--anchors",
        p(&d.join("anchors.csv")),
        "--features",
        p(&data.join("train.csv")),
        "--out",
        p(&d.join("ckpt2.json")),
        "--history",
        p(&d.join("history2.json")),
    ]);
    for (ckpt, metrics) in [("ckpt.json", "m1.json"), ("ckpt2.json", "m2.json")] {
        ok(&[
            "eval",
            "--ckpt",
            p(&d.join(ckpt)),
            "--gallery",
            p(&data.join("train.csv")),
            "--queries",
            p(&data.join("test.csv")),
            "--k",
            "3",
            "--counts",
            p(&data.join("taxa.csv")),
            "--out",
            p(&d.join(metrics)),
        ]);
        let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join(metrics)).unwrap()).unwrap();
        let overall = m["overall"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&overall));
        assert_eq!(m["k"], 3);
    }
    ok(&[
        "eval",
        "--ckpt",
        p(&d.join("ckpt2.json")),
        "--gallery",
        p(&data.join("train.csv")),
        "--queries",
        p(&data.join("test.csv")),
        "--k",
        "1",
        "--centroids",
        "--out",
        p(&d.join("m3.json")),
    ]);
    ok(&[
        "layout",
        "--ckpt",
        p(&d.join("ckpt2.json")),
        "--features",
        p(&data.join("train.csv")),
        "--out",
        p(&d.join("layout.csv")),
    ]);
    let layout = std::fs::read_to_string(d.join("layout.csv")).unwrap();
    let mut lines = layout.lines();
    assert_eq!(lines.next(), Some("class_id,x,y,stress"));
    assert_eq!(lines.count(), 4);
}

#[test]
fn pipeline_writes_report_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pipeline.json");
    std::fs::write(
        &cfg,
        r#"{
  "synth": {"genera": 2, "species_per_genus": 2, "head": 60, "tail": 10, "dim": 8, "seq_len": 80},
  "train": {"input_dim": 8, "hidden_dim": 16, "batch_size": 16, "epochs_stage1": 2, "epochs_stage2": 1}
}"#,
    )
    .unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&["pipeline", "--config", p(&cfg), "--seed", "3", "--out", p(&out)]);
        out
    };
    let a = run("a");
    let b = run("b");
    let report = std::fs::read(a.join("report.json")).unwrap();
    assert_eq!(report, std::fs::read(b.join("report.json")).unwrap());
    let parsed: serde_json::Value = serde_json::from_slice(&report).unwrap();
    let tags: Vec<&String> = parsed.as_object().unwrap().keys().collect();
    assert_eq!(tags, ["naive", "naive+A", "wd+m", "wd+m+A"]);
    for tag in tags {
        let ckpt = format!("{tag}.ckpt.json");
        assert_eq!(std::fs::read(a.join(&ckpt)).unwrap(), std::fs::read(b.join(&ckpt)).unwrap());
    }
}
