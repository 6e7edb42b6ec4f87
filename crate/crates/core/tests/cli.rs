use std::path::Path;
use std::process::{Command, Output};

use rilo::expert::ExpertDataset;
use rilo::gridworld::MoveStyle;
use rilo::harness::metrics_from_csv;
use rilo::numnet::ParamSet;

const SMALL: [&str; 8] = [
    "--set",
    "iterations=200",
    "--set",
    "eval_every=100",
    "--set",
    "eval_episodes=10",
    "--set",
    "dataset_size=20",
];

fn rilo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rilo"))
        .args(args)
        .output()
        .expect("spawn rilo")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn config_errors_exit_with_one() {
    assert_eq!(code(&rilo(&["train", "--preset", "nope"])), 1);
    assert_eq!(code(&rilo(&["train", "--set", "lambda"])), 1);
    assert_eq!(code(&rilo(&["train", "--set", "lambda=-1.0"])), 1);
    assert_eq!(code(&rilo(&["train", "--set", "no_such_key=3"])), 1);
    assert_eq!(code(&rilo(&["train", "--learner", "bishop"])), 1);
    assert_eq!(code(&rilo(&["frobnicate"])), 1);
    let missing = rilo(&["train", "--config", "/nonexistent/rilo.toml"]);
    assert_eq!(code(&missing), 1);
    assert!(!missing.stderr.is_empty());
}

#[test]
fn help_exits_cleanly() {
    let out = rilo(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in ["gen-data", "train-expert", "train", "eval", "matrix", "plot"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn gen_data_writes_a_loadable_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = rilo(&[
        "gen-data",
        "--style",
        "knight",
        "--count",
        "15",
        "--out-dir",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let ds = ExpertDataset::load(&dir.path().join("knight.txt")).unwrap();
    assert_eq!(ds.trajectories.len(), 15);
    assert_eq!(ds.header.style, MoveStyle::Knight);
}

#[test]
fn train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let mut args = vec![
        "train",
        "--learner",
        "king",
        "--method",
        "SSD-SE",
        "--seed",
        "3",
        "--out-dir",
        path(&run),
    ];
    args.extend(SMALL);
    let out = rilo(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "metrics.csv",
        "timing.csv",
        "final.ckpt",
        "disc.ckpt",
        "report.txt",
        "config.toml",
    ] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let rows = metrics_from_csv(&std::fs::read_to_string(run.join("metrics.csv")).unwrap()).unwrap();
    assert_eq!(rows.iter().map(|r| r.iteration).collect::<Vec<_>>(), vec![100, 200]);
    let saved = std::fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(saved.contains("seed = 3"));

    // the saved config reproduces the run
    let again = dir.path().join("again");
    let out = rilo(&[
        "train",
        "--config",
        path(&run.join("config.toml")),
        "--out-dir",
        path(&again),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read(run.join("metrics.csv")).unwrap(),
        std::fs::read(again.join("metrics.csv")).unwrap()
    );

    let ckpt = run.join("final.ckpt");
    let eval_dir = dir.path().join("eval");
    let out = rilo(&[
        "eval",
        "--checkpoint",
        path(&ckpt),
        "--learner",
        "king",
        "--episodes",
        "25",
        "--out-dir",
        path(&eval_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().contains("episodes      25"));

    // a king checkpoint does not fit a 4-way head
    let out = rilo(&["eval", "--checkpoint", path(&ckpt), "--learner", "4-way"]);
    assert_eq!(code(&out), 1);
    let out = rilo(&["eval", "--checkpoint", path(&dir.path().join("missing.ckpt"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn sparse_run_has_no_discriminator() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--lambda", "0", "--out-dir", path(dir.path())];
    args.extend(SMALL);
    let out = rilo(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("final.ckpt").exists());
    assert!(!dir.path().join("disc.ckpt").exists());
    ParamSet::load(&dir.path().join("final.ckpt")).unwrap();
}

#[test]
fn dataset_style_mismatch_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = rilo(&[
        "gen-data",
        "--style",
        "king",
        "--count",
        "5",
        "--out-dir",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 0);
    let ds = dir.path().join("king.txt");
    let mut args = vec![
        "train",
        "--expert",
        "4-way",
        "--dataset",
        path(&ds),
        "--out-dir",
        path(dir.path()),
    ];
    args.extend(SMALL);
    assert_eq!(code(&rilo(&args)), 2);
}

#[test]
fn matrix_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep");
    let mut args = vec![
        "matrix",
        "--experts",
        "4-way",
        "--learners",
        "4-way,knight",
        "--methods",
        "CSD,ATD-SE",
        "--seeds",
        "0",
        "--out-dir",
        path(&sweep),
    ];
    args.extend(SMALL);
    let out = rilo(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(sweep.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
    assert!(summary.contains(",D,"));

    let plots = dir.path().join("plots");
    let out = rilo(&["plot", "--input", path(&sweep), "--out-dir", path(&plots)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let svgs: Vec<_> = std::fs::read_dir(&plots)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "svg"))
        .collect();
    assert_eq!(svgs.len(), 3, "{svgs:?}");
    for svg in svgs {
        assert!(std::fs::read_to_string(svg).unwrap().starts_with("<svg"));
    }
    let out = rilo(&["plot", "--input", path(&dir.path().join("nothing"))]);
    assert_eq!(code(&out), 2);
}
