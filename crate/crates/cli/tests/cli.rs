//! End-to-end runs of the `windswarm` binary on a miniature experiment:
//! tiny grids, half-second episodes, a dozen training steps.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::tempdir;
use windswarm::harness::ExperimentConfig;
use windswarm::sac::SacConfig;
use windswarm::windfield::read_series;

fn windswarm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_windswarm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn expect_success(args: &[&str]) -> String {
    let out = windswarm(args);
    assert!(
        out.status.success(),
        "windswarm {:?} failed with {:?}\nstdout: {}\nstderr: {}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    String::from_utf8(out.stdout).expect("stdout is utf-8")
}

fn expect_exit(args: &[&str], code: i32) {
    let out = windswarm(args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "windswarm {:?}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stderr),
    );
}

/// A config small enough that train and eval finish in well under a second.
fn tiny_config(dir: &Path) -> PathBuf {
    let cfg = ExperimentConfig {
        n: 3,
        k: 2,
        dt: 0.1,
        episode_length: 0.5,
        eval_episodes: 2,
        sac: SacConfig {
            total_steps: 12,
            warmup_steps: 4,
            batch: 4,
            capacity: 64,
            log_every: 6,
            ..SacConfig::default()
        },
        ..ExperimentConfig::default()
    };
    let path = dir.join("tiny.json");
    fs::write(&path, cfg.to_json()).unwrap();
    path
}

fn gen_tiny_wind(dir: &Path, seeds: &str) -> PathBuf {
    let wind = dir.join("wind");
    expect_success(&[
        "gen-wind",
        "--seeds",
        seeds,
        "--grid",
        "32",
        "--duration",
        "0.6",
        "--out",
        wind.to_str().unwrap(),
    ]);
    wind
}

#[test]
fn gen_wind_writes_one_file_per_seed() {
    let tmp = tempdir().unwrap();
    let wind = gen_tiny_wind(tmp.path(), "0..2");

    let a = wind.join("wind_0000.twn");
    let b = wind.join("wind_0001.twn");
    assert!(a.is_file() && b.is_file());
    let series = read_series(&a).unwrap();
    assert_eq!(series.frames.len(), 7); // 0.6 s at the 0.1 s frame cadence
    assert_eq!(series.seed, 0);
    assert_eq!(read_series(&b).unwrap().seed, 1);

    // inclusive and single-seed spellings
    let more = tmp.path().join("more");
    expect_success(&[
        "gen-wind", "--seeds", "2..=3", "--grid", "32", "--duration", "0.2",
        "--out", more.to_str().unwrap(),
    ]);
    assert!(more.join("wind_0002.twn").is_file() && more.join("wind_0003.twn").is_file());
    expect_success(&[
        "gen-wind", "--seeds", "7", "--grid", "32", "--duration", "0.2",
        "--out", more.to_str().unwrap(),
    ]);
    assert!(more.join("wind_0007.twn").is_file());
}

#[test]
fn train_eval_roundtrip_produces_the_artifact_set() {
    let tmp = tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let wind = gen_tiny_wind(tmp.path(), "0..2");
    let run = tmp.path().join("run");

    let stdout = expect_success(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--wind",
        wind.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ]);
    let ckpt = run.join("checkpoint_final.tnck");
    assert!(ckpt.is_file());
    assert!(run.join("config.resolved.json").is_file());
    assert!(run.join("train_log.csv").is_file());
    assert!(run.join("train_episodes.csv").is_file());
    assert!(stdout.contains("checkpoint:"));

    let eval_dir = tmp.path().join("eval");
    expect_success(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--wind",
        wind.to_str().unwrap(),
        "--episodes",
        "2",
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    for name in [
        "metrics.csv",
        "curve_pos.csv",
        "curve_control.csv",
        "curve_re.csv",
        "bucket_1s.csv",
        "bucket_10s.csv",
        "final_10s.csv",
        "manifest.json",
    ] {
        assert!(eval_dir.join(name).is_file(), "missing {name}");
    }

    // naming a CSV redirects the metrics table and keeps companions beside it
    let named = tmp.path().join("named").join("run1.csv");
    fs::create_dir_all(named.parent().unwrap()).unwrap();
    expect_success(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--wind",
        wind.to_str().unwrap(),
        "--episodes",
        "2",
        "--out",
        named.to_str().unwrap(),
    ]);
    assert!(named.is_file());
    assert!(!named.with_file_name("metrics.csv").exists());
    assert!(named.with_file_name("curve_pos.csv").is_file());
    assert_eq!(
        fs::read(named).unwrap(),
        fs::read(eval_dir.join("metrics.csv")).unwrap(),
        "the same config and winds must reproduce the metrics bytes"
    );
}

#[test]
fn eval_without_weights_runs_the_baseline_controller() {
    let tmp = tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let wind = gen_tiny_wind(tmp.path(), "0..1");
    let out = tmp.path().join("eval");
    expect_success(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--variant",
        "tracking_only",
        "--wind",
        wind.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(out.join("metrics.csv").is_file());
}

#[test]
fn config_errors_exit_with_2() {
    let tmp = tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let wind = gen_tiny_wind(tmp.path(), "0..1");
    let out = tmp.path().join("out");

    // learned variant without a checkpoint
    expect_exit(
        &[
            "eval", "--config", cfg.to_str().unwrap(), "--wind", wind.to_str().unwrap(),
            "--out", out.to_str().unwrap(),
        ],
        2,
    );

    // checkpoint offered to the weightless baseline
    let stray = tmp.path().join("stray.tnck");
    fs::write(&stray, b"").unwrap();
    expect_exit(
        &[
            "eval", "--config", cfg.to_str().unwrap(), "--variant", "tracking_only",
            "--ckpt", stray.to_str().unwrap(), "--wind", wind.to_str().unwrap(),
            "--out", out.to_str().unwrap(),
        ],
        2,
    );

    // malformed config file
    let broken = tmp.path().join("broken.json");
    fs::write(&broken, "{\"n\": 1}").unwrap();
    expect_exit(
        &[
            "train", "--config", broken.to_str().unwrap(), "--wind", wind.to_str().unwrap(),
            "--out", out.to_str().unwrap(),
        ],
        2,
    );

    // the baseline has nothing to train
    expect_exit(
        &[
            "train", "--config", cfg.to_str().unwrap(), "--variant", "tracking_only",
            "--wind", wind.to_str().unwrap(), "--out", out.to_str().unwrap(),
        ],
        2,
    );

    // clap rejects a backwards seed range
    expect_exit(
        &["gen-wind", "--seeds", "5..2", "--out", out.to_str().unwrap()],
        2,
    );

    // a grid the solver cannot run on
    expect_exit(
        &[
            "gen-wind", "--seeds", "0", "--grid", "20", "--duration", "0.2",
            "--out", out.to_str().unwrap(),
        ],
        2,
    );
}

#[test]
fn data_errors_exit_with_3() {
    let tmp = tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let wind = gen_tiny_wind(tmp.path(), "0..1");
    let out = tmp.path().join("out");

    // missing wind directory
    expect_exit(
        &[
            "eval", "--config", cfg.to_str().unwrap(), "--variant", "tracking_only",
            "--wind", tmp.path().join("nowhere").to_str().unwrap(),
            "--out", out.to_str().unwrap(),
        ],
        3,
    );

    // missing checkpoint file
    expect_exit(
        &[
            "eval", "--config", cfg.to_str().unwrap(),
            "--ckpt", tmp.path().join("none.tnck").to_str().unwrap(),
            "--wind", wind.to_str().unwrap(), "--out", out.to_str().unwrap(),
        ],
        3,
    );

    // wind directory with no .twn files
    let empty = tmp.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    expect_exit(
        &[
            "eval", "--config", cfg.to_str().unwrap(), "--variant", "tracking_only",
            "--wind", empty.to_str().unwrap(), "--out", out.to_str().unwrap(),
        ],
        3,
    );

    // plot-data over results that contain nothing to collect
    expect_exit(
        &[
            "plot-data", "--results", empty.to_str().unwrap(),
            "--out", out.to_str().unwrap(),
        ],
        3,
    );
}

#[test]
fn sweep_k_writes_the_sensitivity_table() {
    let tmp = tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let wind = gen_tiny_wind(tmp.path(), "0..1");
    let out = tmp.path().join("sweeps").join("k_sensitivity.csv");

    expect_success(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--param",
        "k",
        "--values",
        "1,2",
        "--variant",
        "tracking_only",
        "--wind",
        wind.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,mean,ci95,count");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,") && lines[2].starts_with("2,"));
}

#[test]
fn sweep_n_reads_team_sizes_from_the_training_runs() {
    let tmp = tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let wind = gen_tiny_wind(tmp.path(), "0..1");
    let run = tmp.path().join("run");
    expect_success(&[
        "train", "--config", cfg.to_str().unwrap(), "--wind", wind.to_str().unwrap(),
        "--out", run.to_str().unwrap(),
    ]);
    let ckpt = run.join("checkpoint_final.tnck");
    let out = tmp.path().join("n_matrix.csv");

    expect_success(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--param",
        "n",
        "--values",
        "2,4",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--wind",
        wind.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n_train,n_test,mean,ci95");
    // k = 2 rules out the 2-robot test team, the 4-robot one evaluates
    assert_eq!(lines[1], "3,2,nan,nan");
    assert!(lines[2].starts_with("3,4,") && !lines[2].contains("nan"));

    // a checkpoint without its training config beside it is unusable
    let orphan = tmp.path().join("orphan.tnck");
    fs::copy(&ckpt, &orphan).unwrap();
    expect_exit(
        &[
            "sweep", "--config", cfg.to_str().unwrap(), "--param", "n", "--values", "4",
            "--ckpt", orphan.to_str().unwrap(), "--wind", wind.to_str().unwrap(),
            "--out", out.to_str().unwrap(),
        ],
        3,
    );
}

#[test]
fn ablate_then_plot_data_collects_the_comparison() {
    let tmp = tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let wind = gen_tiny_wind(tmp.path(), "0..2");
    let run = tmp.path().join("run");
    expect_success(&[
        "train", "--config", cfg.to_str().unwrap(), "--wind", wind.to_str().unwrap(),
        "--out", run.to_str().unwrap(),
    ]);
    let ckpt = run.join("checkpoint_final.tnck");
    let results = tmp.path().join("results");

    expect_success(&[
        "ablate",
        "--config",
        cfg.to_str().unwrap(),
        "--variants",
        "full,tracking_only",
        "--ckpt",
        &format!("full={}", ckpt.display()),
        "--wind",
        wind.to_str().unwrap(),
        "--out",
        results.to_str().unwrap(),
    ]);
    let table = results.join("eval").join("ablation.csv");
    let text = fs::read_to_string(&table).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "variant,mean,ci95,count");
    assert!(lines[1].starts_with("full,"));
    assert!(lines[2].starts_with("tracking_only,"));
    for variant in ["full", "tracking_only"] {
        let dir = results.join("eval").join(variant);
        assert!(dir.join("metrics.csv").is_file(), "missing artifacts for {variant}");
        assert!(dir.join("manifest.json").is_file());
    }

    // an unmapped learned variant cannot be ablated
    expect_exit(
        &[
            "ablate", "--config", cfg.to_str().unwrap(), "--variants", "full,no_relpos",
            "--ckpt", &format!("full={}", ckpt.display()),
            "--wind", wind.to_str().unwrap(), "--out", results.to_str().unwrap(),
        ],
        2,
    );

    let plots = tmp.path().join("plots");
    let stdout = expect_success(&[
        "plot-data",
        "--results",
        results.to_str().unwrap(),
        "--out",
        plots.to_str().unwrap(),
    ]);
    for name in [
        "re_evolution.csv",
        "error_curve_full.csv",
        "error_curve_tracking_only.csv",
        "control_magnitude_full.csv",
        "control_magnitude_tracking_only.csv",
        "ablation.csv",
    ] {
        assert!(plots.join(name).is_file(), "missing {name}");
        assert!(stdout.contains(name));
    }
    assert_eq!(
        fs::read(plots.join("error_curve_full.csv")).unwrap(),
        fs::read(results.join("eval").join("full").join("curve_pos.csv")).unwrap()
    );
}
