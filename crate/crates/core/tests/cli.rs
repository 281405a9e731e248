//! Drives the `comfno` binary through every subcommand on a tiny config.

use std::process::Command;

const TINY: &str = r#"
experiment = "1d-plain"
output_dir = "unused"

[data]
resolution = 33
train_functions = 12
test_functions = 6
eps = 0.01
seed = 5
fine_n = 256

[fno]
depth = 2
width = 8
modes = 6
proj_hidden = 16

[comfno]
block_num = 1
depth = 2
width = 8
modes = 6
proj_hidden = 16
extra_depth = 1
extra_width = 4
extra_modes = 4
dense_hidden = [8]

[train.fno]
lr = 0.001
epochs = 3
batch_size = 4
seed = 5

[train.comfno]
lr = 0.001
epochs = 3
batch_size = 4
seed = 5
"#;

fn comfno(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_comfno"))
        .args(args)
        .env_remove("COMFNO_SEED")
        .output()
        .expect("binary runs")
}

#[test]
fn stages_run_in_order_and_reproduce() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let cfg = cfg.to_str().unwrap();
    let run = dir.path().join("run");
    let run_s = run.to_str().unwrap();

    let early = comfno(&["evaluate", "--config", cfg, "--out", run_s]);
    assert!(!early.status.success());
    assert!(String::from_utf8_lossy(&early.stderr).contains("generate"));

    assert!(comfno(&["generate", "--config", cfg, "--out", run_s]).status.success());
    assert!(comfno(&["train", "--config", cfg, "--model", "fno", "--out", run_s]).status.success());
    assert!(comfno(&["train", "--config", cfg, "--model", "comfno", "--out", run_s]).status.success());
    let eval = comfno(&["evaluate", "--config", cfg, "--out", run_s]);
    assert!(eval.status.success());
    assert!(String::from_utf8_lossy(&eval.stdout).contains("1d-plain"));

    let out = dir.path().join("curves.csv");
    assert!(comfno(&["export-curves", "--run", run_s, "--out", out.to_str().unwrap()]).status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().next(), Some("x,fno_abs_residual,comfno_abs_residual"));
    assert_eq!(csv.lines().count(), 34);

    // Same config and seed: identical artifacts.
    let again = dir.path().join("again");
    let again_s = again.to_str().unwrap();
    for args in [
        vec!["generate", "--config", cfg, "--out", again_s],
        vec!["train", "--config", cfg, "--model", "fno", "--out", again_s],
    ] {
        assert!(comfno(&args).status.success());
    }
    for f in ["train.spds", "test.spds", "fno.spck"] {
        assert_eq!(std::fs::read(run.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }

    // The seed override changes the data.
    let other = dir.path().join("other");
    let status = Command::new(env!("CARGO_BIN_EXE_comfno"))
        .args(["generate", "--config", cfg, "--out", other.to_str().unwrap()])
        .env("COMFNO_SEED", "99")
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    assert_ne!(std::fs::read(run.join("train.spds")).unwrap(), std::fs::read(other.join("train.spds")).unwrap());
}

#[test]
fn rejects_bad_block_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, TINY.replace("block_num = 1", "block_num = 2")).unwrap();
    let out = comfno(&["generate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("block_num"));
}
