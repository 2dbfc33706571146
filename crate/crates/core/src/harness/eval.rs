use std::fs;
use std::path::{Path, PathBuf};

use crate::policy::{Actor, ModelVariant};
use crate::sac::load_actor_weights;
use crate::windfield::{read_series, WindFieldSeries};

use super::episode::{run_episode, MetricsRow};
use super::stats::{t_interval, ConfidenceSummary};
use super::{files, streams, ExperimentConfig, HarnessError};

/// Seconds of each coarse averaging window.
const BUCKET_SHORT_S: f64 = 1.0;
const BUCKET_LONG_S: f64 = 10.0;
/// Closing window whose per-episode mean position error summarizes a run.
const FINAL_WINDOW_S: f64 = 10.0;

/// Aggregated results of a multi-episode evaluation. Curves summarize across
/// episodes at each control step; buckets coarsen the position error in time;
/// `final_10s` reduces each episode to its closing-window mean and puts a
/// confidence interval over those.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Every step of every episode, episode-major.
    pub rows: Vec<MetricsRow>,
    pub pos_curve: Vec<ConfidenceSummary>,
    pub control_curve: Vec<ConfidenceSummary>,
    pub re_curve: Vec<ConfidenceSummary>,
    pub bucket_1s: Vec<ConfidenceSummary>,
    pub bucket_10s: Vec<ConfidenceSummary>,
    pub final_10s: ConfidenceSummary,
}

/// Runs `cfg.eval_episodes` noise-free deterministic episodes, cycling
/// through `winds` and seeding episode `i` from the config's evaluation
/// stream. Episodes are independent, so they run on worker threads; results
/// are aggregated in episode order, which keeps the output bitwise equal to
/// a serial run.
pub fn evaluate(
    cfg: &ExperimentConfig,
    actor: &Actor,
    winds: &[WindFieldSeries],
) -> Result<Evaluation, HarnessError> {
    cfg.validate()?;
    if winds.is_empty() {
        return Err(HarnessError::EmptyWindSet {
            dir: cfg.test_wind_dir.clone(),
        });
    }
    let episodes = cfg.eval_episodes;
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(episodes);

    let run_one = |e: usize| -> Result<Vec<MetricsRow>, HarnessError> {
        let wind = &winds[e % winds.len()];
        let seed = cfg.subseed(streams::EVAL, e as u64);
        run_episode(cfg, actor, wind, seed, e as u64, true)
    };

    let mut results: Vec<Option<Result<Vec<MetricsRow>, HarnessError>>> =
        (0..episodes).map(|_| None).collect();
    if workers <= 1 {
        for (e, slot) in results.iter_mut().enumerate() {
            *slot = Some(run_one(e));
        }
    } else {
        let mut chunks: Vec<Vec<(usize, Result<Vec<MetricsRow>, HarnessError>)>> =
            std::thread::scope(|scope| {
                (0..workers)
                    .map(|w| {
                        scope.spawn(move || {
                            (w..episodes)
                                .step_by(workers)
                                .map(|e| (e, run_one(e)))
                                .collect()
                        })
                    })
                    .collect::<Vec<_>>()
                    .into_iter()
                    .map(|handle| handle.join().expect("evaluation worker panicked"))
                    .collect()
            });
        for chunk in chunks.drain(..) {
            for (e, result) in chunk {
                results[e] = Some(result);
            }
        }
    }

    let mut per_episode = Vec::with_capacity(episodes);
    for slot in results {
        per_episode.push(slot.expect("every episode ran")?);
    }
    Ok(aggregate(cfg, per_episode))
}

fn aggregate(cfg: &ExperimentConfig, per_episode: Vec<Vec<MetricsRow>>) -> Evaluation {
    let pos_curve = step_curve(&per_episode, |r| r.pos_err);
    let control_curve = step_curve(&per_episode, |r| r.control_mag);
    let re_curve = step_curve(&per_episode, |r| r.re_diag);
    let bucket_1s = bucket_curve(&per_episode, BUCKET_SHORT_S, cfg.dt);
    let bucket_10s = bucket_curve(&per_episode, BUCKET_LONG_S, cfg.dt);

    let steps = per_episode[0].len();
    let window = ((FINAL_WINDOW_S / cfg.dt).round() as usize).clamp(1, steps);
    let closing: Vec<f64> = per_episode
        .iter()
        .map(|ep| ep[steps - window..].iter().map(|r| r.pos_err).sum::<f64>() / window as f64)
        .collect();
    let final_10s = t_interval(cfg.episode_length, &closing);

    let mut rows = Vec::with_capacity(per_episode.len() * steps);
    for ep in per_episode {
        rows.extend(ep);
    }
    Evaluation {
        rows,
        pos_curve,
        control_curve,
        re_curve,
        bucket_1s,
        bucket_10s,
        final_10s,
    }
}

fn step_curve(per_episode: &[Vec<MetricsRow>], field: impl Fn(&MetricsRow) -> f64) -> Vec<ConfidenceSummary> {
    let steps = per_episode[0].len();
    (0..steps)
        .map(|s| {
            let values: Vec<f64> = per_episode.iter().map(|ep| field(&ep[s])).collect();
            t_interval(per_episode[0][s].t, &values)
        })
        .collect()
}

fn bucket_curve(per_episode: &[Vec<MetricsRow>], width_s: f64, dt: f64) -> Vec<ConfidenceSummary> {
    let steps = per_episode[0].len();
    let per_bucket = ((width_s / dt).round() as usize).max(1);
    let n_buckets = steps.div_ceil(per_bucket);
    (0..n_buckets)
        .map(|b| {
            let lo = b * per_bucket;
            let hi = ((b + 1) * per_bucket).min(steps);
            let mut values = Vec::with_capacity(per_episode.len() * (hi - lo));
            for ep in per_episode {
                values.extend(ep[lo..hi].iter().map(|r| r.pos_err));
            }
            t_interval(per_episode[0][hi - 1].t, &values)
        })
        .collect()
}

/// Re-evaluates one trained policy under different neighbor counts. The
/// graph layers aggregate over whatever neighborhood they are given, so the
/// same weights run at any `k < n`.
pub fn sweep_neighbors(
    cfg: &ExperimentConfig,
    actor: &Actor,
    winds: &[WindFieldSeries],
    ks: &[usize],
) -> Result<Vec<(usize, ConfidenceSummary)>, HarnessError> {
    let mut points = Vec::with_capacity(ks.len());
    for &k in ks {
        let swept = ExperimentConfig { k, ..cfg.clone() };
        let evaluation = evaluate(&swept, actor, winds)?;
        points.push((k, evaluation.final_10s));
    }
    Ok(points)
}

/// One cell of the team-size transfer matrix: a policy trained with
/// `n_train` robots evaluated on a team of `n_test`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeCell {
    pub n_train: usize,
    pub n_test: usize,
    /// Closing-window summary; `None` when `k` does not fit the test team.
    pub summary: Option<ConfidenceSummary>,
}

/// Evaluates each trained policy on each test team size. Weight sharing
/// across robots makes the transfer well-defined; cells whose test team is
/// too small for the configured neighbor count are flagged, not fatal.
pub fn size_matrix(
    cfg: &ExperimentConfig,
    actors: &[(usize, &Actor)],
    n_tests: &[usize],
    winds: &[WindFieldSeries],
) -> Result<Vec<SizeCell>, HarnessError> {
    let mut cells = Vec::with_capacity(actors.len() * n_tests.len());
    for (n_train, actor) in actors {
        for &n_test in n_tests {
            let summary = if cfg.k < n_test {
                let swept = ExperimentConfig { n: n_test, ..cfg.clone() };
                Some(evaluate(&swept, actor, winds)?.final_10s)
            } else {
                None
            };
            cells.push(SizeCell {
                n_train: *n_train,
                n_test,
                summary,
            });
        }
    }
    Ok(cells)
}

/// Evaluates several model variants under identical conditions: the same
/// seeds, winds, and episode schedule, so differences come from the policies
/// alone.
pub fn ablate(
    cfg: &ExperimentConfig,
    actors: &[(ModelVariant, Actor)],
    winds: &[WindFieldSeries],
) -> Result<Vec<(ModelVariant, Evaluation)>, HarnessError> {
    let mut out = Vec::with_capacity(actors.len());
    for (variant, actor) in actors {
        let tagged = ExperimentConfig { variant: *variant, ..cfg.clone() };
        out.push((*variant, evaluate(&tagged, actor, winds)?));
    }
    Ok(out)
}

/// The manifest describing an evaluation run: the resolved config, the
/// checkpoint, the wind files in cycling order, and the derived episode
/// seeds.
pub fn eval_manifest(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
    wind_files: &[PathBuf],
) -> files::Manifest {
    files::Manifest {
        config: cfg.clone(),
        checkpoint: checkpoint.map(Path::to_path_buf),
        wind_files: wind_files.to_vec(),
        episode_seeds: (0..cfg.eval_episodes)
            .map(|e| cfg.subseed(streams::EVAL, e as u64))
            .collect(),
    }
}

/// Writes one evaluation's artifact set under `out_dir`: `metrics.csv`, the
/// three step curves, both bucket tables, `final_10s.csv`, and the manifest.
pub fn write_evaluation(
    out_dir: &Path,
    evaluation: &Evaluation,
    manifest: &files::Manifest,
) -> Result<(), HarnessError> {
    fs::create_dir_all(out_dir)?;
    files::write_metrics_csv(&out_dir.join("metrics.csv"), &evaluation.rows)?;
    files::write_curve_csv(&out_dir.join("curve_pos.csv"), &evaluation.pos_curve)?;
    files::write_curve_csv(&out_dir.join("curve_control.csv"), &evaluation.control_curve)?;
    files::write_curve_csv(&out_dir.join("curve_re.csv"), &evaluation.re_curve)?;
    files::write_curve_csv(&out_dir.join("bucket_1s.csv"), &evaluation.bucket_1s)?;
    files::write_curve_csv(&out_dir.join("bucket_10s.csv"), &evaluation.bucket_10s)?;
    files::write_curve_csv(&out_dir.join("final_10s.csv"), &[evaluation.final_10s])?;
    files::write_manifest(&out_dir.join("manifest.json"), manifest)?;
    Ok(())
}

/// Runs an evaluation and writes the full artifact set under `out_dir`; a
/// later [`replay_manifest`] on the written manifest repeats it exactly.
/// `wind_files` must parallel `winds`.
pub fn write_eval_outputs(
    cfg: &ExperimentConfig,
    actor: &Actor,
    checkpoint: Option<&Path>,
    wind_files: &[PathBuf],
    winds: &[WindFieldSeries],
    out_dir: &Path,
) -> Result<Evaluation, HarnessError> {
    assert_eq!(wind_files.len(), winds.len());
    let evaluation = evaluate(cfg, actor, winds)?;
    let manifest = eval_manifest(cfg, checkpoint, wind_files);
    write_evaluation(out_dir, &evaluation, &manifest)?;
    Ok(evaluation)
}

/// Repeats the evaluation a manifest describes and writes a fresh artifact
/// set under `out_dir`. Relative paths in the manifest resolve against the
/// manifest's own directory. With unchanged inputs the rewritten CSVs match
/// the originals byte for byte.
pub fn replay_manifest(manifest_path: &Path, out_dir: &Path) -> Result<Evaluation, HarnessError> {
    let manifest = files::read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new(""));
    let resolve = |p: &Path| -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    let mut winds = Vec::with_capacity(manifest.wind_files.len());
    for file in &manifest.wind_files {
        winds.push(read_series(&resolve(file))?);
    }

    let cfg = &manifest.config;
    let mut actor = Actor::new(cfg.variant, cfg.f_max, 0);
    if let Some(ckpt) = &manifest.checkpoint {
        let full = resolve(ckpt);
        if !full.is_file() {
            return Err(HarnessError::MissingCheckpoint { path: full });
        }
        load_actor_weights(&mut actor, &full)?;
    }
    write_eval_outputs(
        cfg,
        &actor,
        manifest.checkpoint.as_deref(),
        &manifest.wind_files,
        &winds,
        out_dir,
    )
}
