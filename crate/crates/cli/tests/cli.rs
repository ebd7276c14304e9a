use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
algorithm = "qcsac"
seed = 1
episodes = 4
eval_episodes = 3

[log]
checkpoint_every = 2
checkpoint_eval_episodes = 2
trajectory_every = 2

[demo]
episodes = 3

[hyperparams]
hidden = [16, 16]
batch_rl = 16
batch_bc = 16
learning_starts = 40
"#;

fn qcsac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcsac"))
        .args(args)
        .env_remove("QCSAC_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn train_twice_gives_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let o = qcsac(&[
            "train",
            "-c",
            &cfg,
            "--algo",
            "qcsac",
            "--seed",
            "1",
            "--output-dir",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in [
        "metrics.csv",
        "episodes.csv",
        "trajectories.jsonl",
        "eval.json",
        "checkpoints/final.ckpt",
    ] {
        let fa = fs::read(a.join("qcsac-seed1").join(file)).unwrap();
        let fb = fs::read(b.join("qcsac-seed1").join(file)).unwrap();
        assert!(!fa.is_empty(), "{file} is empty");
        assert_eq!(fa, fb, "{file} differs between identical runs");
    }
}

#[test]
fn every_output_carries_the_config_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("runs");
    let o = qcsac(&["train", "-c", &cfg, "--output-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = out.join("qcsac-seed1");
    let config = fs::read_to_string(run.join("config.toml")).unwrap();
    let hash = config.lines().next().unwrap().split('"').nth(1).unwrap().to_string();
    assert_eq!(hash.len(), 16);
    for file in [
        "metrics.csv",
        "episodes.csv",
        "checkpoint_evals.csv",
        "trajectories.jsonl",
        "eval.json",
        "eval.txt",
    ] {
        let text = fs::read_to_string(run.join(file)).unwrap();
        assert!(text.contains(&hash), "{file} lacks the config hash");
    }
    let ckpt = fs::read(run.join("checkpoints/best.ckpt")).unwrap();
    assert!(ckpt.windows(hash.len()).any(|w| w == hash.as_bytes()));
}

#[test]
fn ablation_flags_select_the_none_variant() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("runs");
    let o = qcsac(&[
        "train",
        "-c",
        &cfg,
        "--no-qnfd",
        "--no-sddu",
        "--episodes",
        "2",
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let config = fs::read_to_string(out.join("qcsac-none-seed1/config.toml")).unwrap();
    assert!(config.contains("use_qnfd = false") && config.contains("use_sddu = false"));
    // critics train on the RL batch alone
    let metrics = fs::read_to_string(out.join("qcsac-none-seed1/metrics.csv")).unwrap();
    let row = metrics.lines().nth(2).expect("at least one gradient step");
    assert_eq!(row.split(',').nth(10), Some("16"));
}

#[test]
fn output_root_env_var_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let root = tmp.path().join("override");
    let o = Command::new(env!("CARGO_BIN_EXE_qcsac"))
        .args([
            "train",
            "-c",
            &cfg,
            "--algo",
            "bc",
            "--episodes",
            "1",
            "--output-dir",
            "ignored",
        ])
        .env("QCSAC_OUTPUT_ROOT", &root)
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(root.join("bc-seed1/metrics.csv").exists());
    assert!(!tmp.path().join("ignored").exists());
}

#[test]
fn gen_demos_then_train_and_eval_from_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let demos = tmp.path().join("demos.bin");
    let o = qcsac(&["gen-demos", "-c", &cfg, "--episodes", "3", "--out", demos.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("success rate"));

    let out = tmp.path().join("runs");
    let o = qcsac(&[
        "train",
        "-c",
        &cfg,
        "--algo",
        "bcsac",
        "--demos",
        demos.to_str().unwrap(),
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let ckpt = out.join("bcsac-seed1/checkpoints/final.ckpt");
    let eval_dir = tmp.path().join("eval");
    let o = qcsac(&[
        "eval",
        "-c",
        &cfg,
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--episodes",
        "5",
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(eval_dir.join("eval.json")).unwrap();
    assert!(report.contains("\"n_episodes\": 5"));
}

#[test]
fn replay_export_writes_a_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("runs");
    assert!(qcsac(&[
        "train",
        "-c",
        &cfg,
        "--algo",
        "sac",
        "--episodes",
        "3",
        "--output-dir",
        out.to_str().unwrap()
    ])
    .status
    .success());
    let table = tmp.path().join("traj.csv");
    let input = out.join("sac-seed1/trajectories.jsonl");
    let o = qcsac(&[
        "replay-export",
        "--input",
        input.to_str().unwrap(),
        "--output",
        table.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&table).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert!(lines.next().unwrap().starts_with("episode,t,x,y"));
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty());
    // episodes 0 and 2 are logged
    assert!(rows.iter().any(|r| r.starts_with("0,")) && rows.iter().any(|r| r.starts_with("2,")));
}

#[test]
fn bad_config_exits_2_with_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "algorithm = \"qcsac\"\n[hyperparams]\ntau = 0.005\ngamma = 2.0\n");
    let o = qcsac(&["train", "-c", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 4"));

    let cfg = write_config(tmp.path(), "algorithm = \"qcsac\"\nbogus_key = 1\n");
    let o = qcsac(&["train", "-c", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn missing_files_exit_3() {
    let o = qcsac(&["train", "-c", "/nonexistent/run.toml"]);
    assert_eq!(o.status.code(), Some(3));
    let o = qcsac(&["eval", "--checkpoint", "/nonexistent/final.ckpt"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn corrupt_checkpoint_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.ckpt");
    fs::write(&bad, b"garbage").unwrap();
    let o = qcsac(&["eval", "--checkpoint", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}
