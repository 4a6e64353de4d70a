use std::path::Path;
use std::process::{Command, Output};

fn smem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smem")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_train_eval_viz_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    let run = tmp.path().join("run");
    let d = data.to_str().unwrap();
    let r = run.to_str().unwrap();

    let o = smem(&["generate", "--task", "abs", "--seed", "7", "--out", d, "--train", "30", "--test", "10"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(data.join("train/manifest.jsonl").exists());
    assert!(data.join("test/images").is_dir());
    let m = read_json(&data.join("manifest.json"));
    assert_eq!(m["command"], "generate");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["metrics"]["train_samples"], 120);
    assert!(m["build"].as_str().unwrap().starts_with(env!("CARGO_PKG_VERSION")));

    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"epochs": 5, "model": "smem-2hop", "seed": 3}"#).unwrap();
    let o = smem(&["train", "--data", d, "--out", r, "--config", cfg.to_str().unwrap(), "--epochs", "2", "--quiet"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["final.ckpt", "best.ckpt", "vocab.json", "config.json", "manifest.json"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let m = read_json(&run.join("manifest.json"));
    assert_eq!(m["config"]["epochs"], 2, "flag overrides the file");
    assert_eq!(m["config"]["model"], "smem-2hop");
    assert_eq!(m["metrics"]["history"].as_array().unwrap().len(), 2);

    let out = tmp.path().join("eval");
    let o = smem(&["eval", "--run", r, "--data", &format!("{d}/test"), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["samples"].as_array().unwrap().len(), 40);
    assert_eq!(read_json(&out.join("manifest.json"))["metrics"]["accuracy"], report["accuracy"]);

    let viz = tmp.path().join("viz");
    let o = smem(&["viz", "--run", r, "--data", &format!("{d}/test"), "--out", viz.to_str().unwrap(), "--samples", "1,2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["sample_00001_hop2.pgm", "sample_00002_hop1_overlay.ppm", "sample_00002.json", "sample_00001_correlation.csv"] {
        assert!(viz.join(f).exists(), "missing {f}");
    }

    let o = smem(&["viz", "--run", r, "--data", &format!("{d}/test"), "--out", viz.to_str().unwrap(), "--samples", "999"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn heuristic_runs_through_train_and_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    let r = tmp.path().join("h");
    let o = smem(&["generate", "--task", "rel", "--out", d.to_str().unwrap(), "--train", "20", "--test", "5"]);
    assert_eq!(code(&o), 0);
    let o = smem(&["train", "--data", d.to_str().unwrap(), "--out", r.to_str().unwrap(), "--model", "position-heuristic"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(r.join("heuristic.json").exists());
    let o = smem(&["eval", "--run", r.to_str().unwrap(), "--data", d.join("test").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("accuracy "));
}

#[test]
fn gradcheck_and_quick_repro_pass() {
    let o = smem(&["gradcheck"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("max relative error"));

    let o = smem(&["repro", "vqa-consensus"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("[PASS]"));
    let o = smem(&["repro", "7"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&smem(&[])), 1);
    assert_eq!(code(&smem(&["frobnicate"])), 1);
    assert_eq!(code(&smem(&["generate", "--out", "x", "--bogus"])), 1);
    assert_eq!(code(&smem(&["repro", "no-such-scenario"])), 1);
    assert_eq!(code(&smem(&["generate", "--task", "sideways", "--out", "x"])), 1);
    assert_eq!(code(&smem(&["eval", "--data", "nowhere"])), 1);
    assert_eq!(code(&smem(&["--help"])), 0);
}
