//! Fixed-schema CSV and JSON artifacts. Headers are pinned byte-for-byte so
//! downstream plotting never has to guess, and floats are written with
//! Rust's shortest round-trip formatting so re-reading an artifact restores
//! the exact values.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::policy::ModelVariant;
use crate::sac::TrainLogRow;
use crate::windfield::{read_series, WindFieldSeries};

use super::episode::MetricsRow;
use super::eval::SizeCell;
use super::stats::ConfidenceSummary;
use super::{ExperimentConfig, HarnessError};

pub const METRICS_HEADER: &str = "episode,t,pos_err,vel_err,control_mag,reward,re_diag";
pub const CURVE_HEADER: &str = "t,mean,ci95,count";
pub const TRAIN_LOG_HEADER: &str = "step,episode,mean_reward,critic_loss,actor_loss,alpha";
pub const TRAIN_EPISODES_HEADER: &str = "episode,wind_seed";
pub const SWEEP_HEADER: &str = "k,mean,ci95,count";
pub const MATRIX_HEADER: &str = "n_train,n_test,mean,ci95";
pub const ABLATION_HEADER: &str = "variant,mean,ci95,count";

fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".to_owned()
    } else {
        format!("{v}")
    }
}

fn bad(what: &'static str, path: &Path, reason: impl Into<String>) -> HarnessError {
    HarnessError::BadData {
        what,
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn parse_f64(field: &str, what: &'static str, path: &Path) -> Result<f64, HarnessError> {
    if field == "nan" {
        return Ok(f64::NAN);
    }
    field
        .parse()
        .map_err(|e| bad(what, path, format!("bad float {field:?}: {e}")))
}

fn parse_u64(field: &str, what: &'static str, path: &Path) -> Result<u64, HarnessError> {
    field
        .parse()
        .map_err(|e| bad(what, path, format!("bad integer {field:?}: {e}")))
}

/// Splits a CSV body into rows of exactly `width` fields after checking the
/// header line.
fn read_rows<'a>(
    text: &'a str,
    header: &str,
    width: usize,
    what: &'static str,
    path: &Path,
) -> Result<Vec<Vec<&'a str>>, HarnessError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(first) if first == header => {}
        Some(first) => {
            return Err(bad(what, path, format!("header {first:?}, expected {header:?}")))
        }
        None => return Err(bad(what, path, "empty file")),
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(bad(what, path, format!("{} fields in {line:?}", fields.len())));
        }
        rows.push(fields);
    }
    Ok(rows)
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<(), HarnessError> {
    let mut text = String::with_capacity(rows.len() * 64 + 64);
    text.push_str(METRICS_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.episode,
            num(r.t),
            num(r.pos_err),
            num(r.vel_err),
            num(r.control_mag),
            num(r.reward),
            num(r.re_diag),
        ));
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>, HarnessError> {
    let what = "metrics csv";
    let text = fs::read_to_string(path)?;
    read_rows(&text, METRICS_HEADER, 7, what, path)?
        .into_iter()
        .map(|f| {
            Ok(MetricsRow {
                episode: parse_u64(f[0], what, path)?,
                t: parse_f64(f[1], what, path)?,
                pos_err: parse_f64(f[2], what, path)?,
                vel_err: parse_f64(f[3], what, path)?,
                control_mag: parse_f64(f[4], what, path)?,
                reward: parse_f64(f[5], what, path)?,
                re_diag: parse_f64(f[6], what, path)?,
            })
        })
        .collect()
}

pub fn write_curve_csv(path: &Path, curve: &[ConfidenceSummary]) -> Result<(), HarnessError> {
    let mut text = String::with_capacity(curve.len() * 48 + 32);
    text.push_str(CURVE_HEADER);
    text.push('\n');
    for s in curve {
        text.push_str(&format!("{},{},{},{}\n", num(s.t), num(s.mean), num(s.ci95), s.count));
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn read_curve_csv(path: &Path) -> Result<Vec<ConfidenceSummary>, HarnessError> {
    let what = "curve csv";
    let text = fs::read_to_string(path)?;
    read_rows(&text, CURVE_HEADER, 4, what, path)?
        .into_iter()
        .map(|f| {
            Ok(ConfidenceSummary {
                t: parse_f64(f[0], what, path)?,
                mean: parse_f64(f[1], what, path)?,
                ci95: parse_f64(f[2], what, path)?,
                count: parse_u64(f[3], what, path)? as usize,
            })
        })
        .collect()
}

pub fn write_train_log_csv(path: &Path, rows: &[TrainLogRow]) -> Result<(), HarnessError> {
    let mut text = String::with_capacity(rows.len() * 64 + 64);
    text.push_str(TRAIN_LOG_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.step,
            r.episode,
            num(r.mean_reward),
            num(r.critic_loss),
            num(r.actor_loss),
            num(r.alpha),
        ));
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn read_train_log_csv(path: &Path) -> Result<Vec<TrainLogRow>, HarnessError> {
    let what = "train log";
    let text = fs::read_to_string(path)?;
    read_rows(&text, TRAIN_LOG_HEADER, 6, what, path)?
        .into_iter()
        .map(|f| {
            Ok(TrainLogRow {
                step: parse_u64(f[0], what, path)?,
                episode: parse_u64(f[1], what, path)?,
                mean_reward: parse_f64(f[2], what, path)?,
                critic_loss: parse_f64(f[3], what, path)?,
                actor_loss: parse_f64(f[4], what, path)?,
                alpha: parse_f64(f[5], what, path)?,
            })
        })
        .collect()
}

pub fn write_train_episodes_csv(path: &Path, episodes: &[(u64, u64)]) -> Result<(), HarnessError> {
    let mut text = String::with_capacity(episodes.len() * 16 + 24);
    text.push_str(TRAIN_EPISODES_HEADER);
    text.push('\n');
    for (episode, wind_seed) in episodes {
        text.push_str(&format!("{episode},{wind_seed}\n"));
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn read_train_episodes_csv(path: &Path) -> Result<Vec<(u64, u64)>, HarnessError> {
    let what = "train episodes";
    let text = fs::read_to_string(path)?;
    read_rows(&text, TRAIN_EPISODES_HEADER, 2, what, path)?
        .into_iter()
        .map(|f| Ok((parse_u64(f[0], what, path)?, parse_u64(f[1], what, path)?)))
        .collect()
}

/// Neighbor-count sensitivity: one closing-window summary per k.
pub fn write_sweep_csv(path: &Path, points: &[(usize, ConfidenceSummary)]) -> Result<(), HarnessError> {
    let mut text = String::with_capacity(points.len() * 48 + 24);
    text.push_str(SWEEP_HEADER);
    text.push('\n');
    for (k, s) in points {
        text.push_str(&format!("{},{},{},{}\n", k, num(s.mean), num(s.ci95), s.count));
    }
    fs::write(path, text)?;
    Ok(())
}

/// Team-size transfer matrix. Infeasible cells (graph degree too high for
/// the test team) carry `nan,nan`.
pub fn write_matrix_csv(path: &Path, cells: &[SizeCell]) -> Result<(), HarnessError> {
    let mut text = String::with_capacity(cells.len() * 40 + 32);
    text.push_str(MATRIX_HEADER);
    text.push('\n');
    for c in cells {
        let (mean, ci95) = match &c.summary {
            Some(s) => (s.mean, s.ci95),
            None => (f64::NAN, f64::NAN),
        };
        text.push_str(&format!("{},{},{},{}\n", c.n_train, c.n_test, num(mean), num(ci95)));
    }
    fs::write(path, text)?;
    Ok(())
}

/// Ablation table: closing-window summary per model variant.
pub fn write_ablation_csv(
    path: &Path,
    rows: &[(ModelVariant, ConfidenceSummary)],
) -> Result<(), HarnessError> {
    let mut text = String::with_capacity(rows.len() * 48 + 32);
    text.push_str(ABLATION_HEADER);
    text.push('\n');
    for (variant, s) in rows {
        text.push_str(&format!("{},{},{},{}\n", variant.name(), num(s.mean), num(s.ci95), s.count));
    }
    fs::write(path, text)?;
    Ok(())
}

/// Everything needed to repeat an evaluation exactly: the resolved config,
/// the actor weights, the wind series in episode-cycling order, and the
/// per-episode seeds that the config derives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    /// Actor checkpoint; absent when the policy has no weights.
    pub checkpoint: Option<PathBuf>,
    pub wind_files: Vec<PathBuf>,
    /// Seed of episode `i` at index `i`; recorded for audit, re-derived on
    /// replay.
    pub episode_seeds: Vec<u64>,
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(path, text)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest, HarnessError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| bad("manifest", path, e.to_string()))
}

/// Collects plot-ready CSVs from a results directory into `out_dir`, one
/// file per figure: Reynolds evolution, per-variant error and control
/// curves, neighbor-count sensitivity, the team-size matrix, and the
/// ablation table. Sources are validated against their pinned headers and
/// copied byte-for-byte; missing sources are skipped. Returns the files
/// written, in a fixed order.
pub fn emit_plot_data(results: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(out_dir)?;
    let mut written: Vec<PathBuf> = Vec::new();
    let copy_checked = |src: PathBuf,
                            dest_name: String,
                            header: &'static str,
                            written: &mut Vec<PathBuf>|
     -> Result<(), HarnessError> {
        if !src.is_file() {
            return Ok(());
        }
        let text = fs::read_to_string(&src)?;
        match text.lines().next() {
            Some(first) if first == header => {}
            other => {
                return Err(bad(
                    "plot source",
                    &src,
                    format!("header {other:?}, expected {header:?}"),
                ))
            }
        }
        let dest = out_dir.join(dest_name);
        fs::write(&dest, text)?;
        written.push(dest);
        Ok(())
    };

    let eval_dir = results.join("eval");
    for variant in ModelVariant::ALL {
        let dir = eval_dir.join(variant.name());
        if !dir.is_dir() {
            continue;
        }
        if written.iter().all(|p| !p.ends_with("re_evolution.csv")) {
            copy_checked(
                dir.join("curve_re.csv"),
                "re_evolution.csv".into(),
                CURVE_HEADER,
                &mut written,
            )?;
        }
        copy_checked(
            dir.join("curve_pos.csv"),
            format!("error_curve_{}.csv", variant.name()),
            CURVE_HEADER,
            &mut written,
        )?;
        copy_checked(
            dir.join("curve_control.csv"),
            format!("control_magnitude_{}.csv", variant.name()),
            CURVE_HEADER,
            &mut written,
        )?;
    }
    copy_checked(
        results.join("sweeps/k_sensitivity.csv"),
        "k_sensitivity.csv".into(),
        SWEEP_HEADER,
        &mut written,
    )?;
    copy_checked(
        results.join("sweeps/n_matrix.csv"),
        "n_matrix.csv".into(),
        MATRIX_HEADER,
        &mut written,
    )?;
    copy_checked(
        eval_dir.join("ablation.csv"),
        "ablation.csv".into(),
        ABLATION_HEADER,
        &mut written,
    )?;

    if written.is_empty() {
        return Err(bad(
            "results directory",
            results,
            "no evaluation, sweep, or ablation artifacts found",
        ));
    }
    Ok(written)
}

/// Loads every `*.twn` series in `dir`, sorted by file name so the episode
/// order never depends on directory enumeration.
pub fn load_wind_dir(dir: &Path) -> Result<Vec<(PathBuf, WindFieldSeries)>, HarnessError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|entry| {
            let path = entry.ok()?.path();
            (path.extension().is_some_and(|e| e == "twn") && path.is_file()).then_some(path)
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(HarnessError::EmptyWindSet { dir: dir.to_path_buf() });
    }
    paths
        .into_iter()
        .map(|p| {
            let series = read_series(&p)?;
            Ok((p, series))
        })
        .collect()
}
