use std::path::Path;
use std::process::{Command, Output};

fn frnf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frnf"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_run_eval_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    let out = ok(&frnf(&["gen-dataset", "--fixture", "single_frame", "--out", p(&ds), "--seed", "4"]));
    assert!(out.contains("1 frames"));
    assert!(ds.join("manifest.json").exists() && ds.join("clicks.json").exists());

    let ckpt = tmp.path().join("w.ckpt");
    let metrics = tmp.path().join("m.jsonl");
    let out = ok(&frnf(&[
        "run",
        "--dataset",
        p(&ds),
        "--steps-per-frame",
        "3",
        "--hidden",
        "16",
        "--checkpoint",
        p(&ckpt),
        "--metrics",
        p(&metrics),
        "--kf-rel-error",
        "0.05",
        "--kf-fraction",
        "0.5",
    ]));
    let summary: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(summary["n_steps"], 3);
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(&metrics)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[2]["step"], 3);

    let report = tmp.path().join("eval.json");
    let out = ok(&frnf(&["eval", "--checkpoint", p(&ckpt), "--dataset", p(&ds), "--report", p(&report), "--stride", "8"]));
    assert!(out.starts_with("mean_iou "));
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    let m = r["mean_iou"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&m));
    assert_eq!(r["n_eval_frames"], 1);

    let report = tmp.path().join("base.json");
    ok(&frnf(&["baseline", "--dataset", p(&ds), "--report", p(&report), "--stride", "8"]));
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert!(r["per_class_iou"].as_array().is_some_and(|a| !a.is_empty()));
}

#[test]
fn bad_arguments_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = frnf(&["gen-dataset", "--fixture", "nowhere", "--out", p(tmp.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));

    let ds = tmp.path().join("ds");
    ok(&frnf(&["gen-dataset", "--fixture", "single_frame", "--out", p(&ds)]));
    let ckpt = tmp.path().join("w.ckpt");
    let out = frnf(&["run", "--dataset", p(&ds), "--checkpoint", p(&ckpt), "--mode", "sideways"]);
    assert!(!out.status.success());
    let out = frnf(&["run", "--dataset", p(&ds), "--checkpoint", p(&ckpt), "--kf-fraction", "1.5", "--hidden", "8"]);
    assert!(!out.status.success());
    assert!(!ckpt.exists());

    std::fs::write(&ckpt, b"not a checkpoint").unwrap();
    let report = tmp.path().join("r.json");
    let out = frnf(&["eval", "--checkpoint", p(&ckpt), "--dataset", p(&ds), "--report", p(&report)]);
    assert!(!out.status.success());
    assert!(!report.exists());
}
