//! End-to-end smoke tests for the `camseg` binary: argument handling, a tiny
//! experiment round trip, and agreement between the standalone `gradcam`
//! command and the maps the experiment itself wrote.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn camseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_camseg"))
        .args(args)
        .output()
        .expect("spawn camseg")
}

fn tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.toml");
    fs::write(
        &path,
        "version = 1\n\
         seed = 11\n\
         architectures = [\"gap-head-small\"]\n\
         \n\
         [dataset]\n\
         kind = \"synthetic\"\n\
         per_class = 6\n\
         roi_size = 16\n\
         blob_min = 4.0\n\
         blob_max = 10.0\n\
         texture = 8.0\n\
         \n\
         [train]\n\
         epochs = 8\n\
         patience = 8\n\
         threads = 1\n",
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn help_lists_the_subcommands() {
    let out = camseg(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["gen-data", "train", "gradcam", "eval", "exp1", "exp2", "report"] {
        assert!(text.contains(cmd), "help is missing `{cmd}`:\n{text}");
    }
}

#[test]
fn unknown_flags_are_rejected_with_usage_errors() {
    let out = camseg(&["exp1", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_fails_cleanly() {
    let out = camseg(&["exp1", "--config", "/nonexistent/camseg.toml"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error:"), "stderr was: {err}");
}

#[test]
fn tiny_experiment_report_and_gradcam_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let out_dir = dir.path().join("run");
    let out_str = out_dir.display().to_string();

    let run = camseg(&["exp1", "--config", &config, "--out", &out_str]);
    assert!(
        run.status.success(),
        "exp1 failed: {}",
        String::from_utf8_lossy(&run.stderr)
    );
    for artifact in ["report.json", "report.txt", "run-meta.txt"] {
        assert!(out_dir.join(artifact).is_file(), "missing {artifact}");
    }
    assert!(out_dir.join("checkpoints/gap-head-small.ckpt").is_file());
    let cam_dir = out_dir.join("cams/gap-head-small");
    let cams: Vec<_> = fs::read_dir(&cam_dir).unwrap().collect();
    assert_eq!(cams.len(), 6, "one map per abnormal sample");

    // The stored metrics must be reproducible from the artifacts alone.
    let check = camseg(&["report", "--out", &out_str, "--recompute-metrics"]);
    assert!(
        check.status.success(),
        "recompute failed: {}",
        String::from_utf8_lossy(&check.stderr)
    );

    // JSON output goes to stdout and parses.
    let json = camseg(&["report", "--out", &out_str, "--format", "json"]);
    assert!(json.status.success());
    let value: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(value["rows"][0]["architecture"], "gap-head-small");

    // The standalone gradcam command reproduces the experiment's maps byte
    // for byte from the persisted checkpoint and dataset.
    let redo_dir = dir.path().join("redo");
    let redo = camseg(&[
        "gradcam",
        "--checkpoint",
        &out_dir.join("checkpoints/gap-head-small.ckpt").display().to_string(),
        "--dataset",
        &out_dir.join("dataset").display().to_string(),
        "--out",
        &redo_dir.display().to_string(),
    ]);
    assert!(
        redo.status.success(),
        "gradcam failed: {}",
        String::from_utf8_lossy(&redo.stderr)
    );
    let mut compared = 0;
    for entry in fs::read_dir(&cam_dir).unwrap() {
        let entry = entry.unwrap();
        let redone = redo_dir.join(entry.file_name());
        assert!(redone.is_file(), "gradcam skipped {:?}", entry.file_name());
        assert_eq!(
            fs::read(entry.path()).unwrap(),
            fs::read(&redone).unwrap(),
            "map {:?} differs between exp1 and the gradcam command",
            entry.file_name()
        );
        compared += 1;
    }
    assert_eq!(compared, 6);
}

#[test]
fn gen_data_writes_a_loadable_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    let run = camseg(&[
        "gen-data",
        "--out",
        &out.display().to_string(),
        "--seed",
        "5",
        "--per-class",
        "4",
        "--roi-size",
        "16",
        "--blob-min",
        "4",
        "--blob-max",
        "10",
    ]);
    assert!(
        run.status.success(),
        "gen-data failed: {}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(out.join("manifest.jsonl").is_file());
    let images = fs::read_dir(out.join("images")).unwrap().count();
    assert_eq!(images, 8, "four samples per class, both classes");
}
