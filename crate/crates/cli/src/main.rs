//! Command-line front end for the windswarm experiment pipeline.
//!
//! Exit codes: 0 on success, 2 for configuration problems (bad flags, bad
//! config files, inconsistent experiment settings), 3 for data problems
//! (missing or malformed wind files, checkpoints, and result sets).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use windswarm::harness::{
    ablate, emit_plot_data, eval_manifest, load_wind_dir, size_matrix, sweep_neighbors,
    train_variant, write_ablation_csv, write_eval_outputs, write_evaluation, write_matrix_csv,
    write_sweep_csv, ExperimentConfig, HarnessError,
};
use windswarm::policy::{Actor, ModelVariant};
use windswarm::sac::load_actor_weights;
use windswarm::windfield::{
    write_series, GridSpec, WindFieldSeries, DT_FRAME_DEFAULT, SPEED_BOUND_DEFAULT,
};

#[derive(Parser)]
#[command(name = "windswarm", version, about = "Wind field generation and swarm policy experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate turbulent wind series and store them as .twn files.
    GenWind(GenWindArgs),
    /// Train one policy variant against a directory of wind series.
    Train(TrainArgs),
    /// Evaluate a checkpoint on held-out wind series.
    Eval(EvalArgs),
    /// Sweep the neighbor count k or the team size n.
    Sweep(SweepArgs),
    /// Evaluate several model variants on an identical episode schedule.
    Ablate(AblateArgs),
    /// Collect plot-ready CSVs out of a results directory.
    PlotData(PlotDataArgs),
}

/// Half-open seed range. Accepts `A..B`, inclusive `A..=B`, or a single `A`.
#[derive(Clone, Copy, Debug)]
struct SeedRange {
    start: u64,
    end: u64,
}

impl FromStr for SeedRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |part: &str| {
            part.trim()
                .parse::<u64>()
                .map_err(|e| format!("bad seed '{part}': {e}"))
        };
        let (start, end) = match s.split_once("..") {
            Some((a, b)) => match b.strip_prefix('=') {
                Some(b) => (parse(a)?, parse(b)?.saturating_add(1)),
                None => (parse(a)?, parse(b)?),
            },
            None => {
                let a = parse(s)?;
                (a, a + 1)
            }
        };
        if end <= start {
            return Err(format!("empty seed range '{s}'"));
        }
        Ok(SeedRange { start, end })
    }
}

#[derive(Args)]
struct GenWindArgs {
    /// Seed range: `0..10`, `3..=5`, or a single seed `7`.
    #[arg(long)]
    seeds: SeedRange,
    /// Grid resolution per side.
    #[arg(long, default_value_t = 64)]
    grid: usize,
    /// Series length in seconds.
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    /// Seconds between stored frames.
    #[arg(long, default_value_t = DT_FRAME_DEFAULT)]
    dt_frame: f64,
    /// Directory receiving one wind_NNNN.twn per seed.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of training wind series.
    #[arg(long)]
    wind: PathBuf,
    /// Run directory for the checkpoint, logs, and resolved config.
    #[arg(long)]
    out: PathBuf,
    /// Override the config's model variant.
    #[arg(long)]
    variant: Option<ModelVariant>,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Experiment config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trained checkpoint (.tnck). Omit only for tracking_only.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Directory of held-out wind series.
    #[arg(long)]
    wind: PathBuf,
    /// Number of evaluation episodes.
    #[arg(long)]
    episodes: Option<usize>,
    /// Metrics CSV path (companion files land beside it) or a directory
    /// for the full artifact set.
    #[arg(long)]
    out: PathBuf,
    /// Override the config's model variant.
    #[arg(long)]
    variant: Option<ModelVariant>,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parameter to sweep.
    #[arg(long, value_parser = ["k", "n"])]
    param: String,
    /// Comma-separated values, e.g. `2,4,6,8`.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<usize>,
    /// Checkpoint to evaluate; for `--param n` repeat once per trained
    /// team size (the run's config.resolved.json must sit next to it).
    #[arg(long = "ckpt")]
    ckpts: Vec<PathBuf>,
    /// Directory of held-out wind series.
    #[arg(long)]
    wind: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Override the config's model variant (`--param k` only).
    #[arg(long)]
    variant: Option<ModelVariant>,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct AblateArgs {
    /// Experiment config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated variant names, e.g. `full,no_relpos,base_mlp,tracking_only`.
    #[arg(long, value_delimiter = ',', required = true)]
    variants: Vec<ModelVariant>,
    /// Checkpoint per learned variant as NAME=PATH; repeatable.
    #[arg(long = "ckpt", value_parser = parse_ckpt_pair)]
    ckpts: Vec<(ModelVariant, PathBuf)>,
    /// Directory of held-out wind series.
    #[arg(long)]
    wind: PathBuf,
    /// Results root; per-variant artifacts land in OUT/eval/NAME/.
    #[arg(long)]
    out: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PlotDataArgs {
    /// Results root holding eval/ and sweeps/ subdirectories.
    #[arg(long)]
    results: PathBuf,
    /// Directory receiving the plot-ready CSVs.
    #[arg(long)]
    out: PathBuf,
}

fn parse_ckpt_pair(s: &str) -> Result<(ModelVariant, PathBuf), String> {
    let (name, path) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=PATH, got '{s}'"))?;
    if path.is_empty() {
        return Err(format!("empty checkpoint path in '{s}'"));
    }
    Ok((name.parse()?, PathBuf::from(path)))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenWind(args) => run_gen_wind(args),
        Command::Train(args) => run_train(args),
        Command::Eval(args) => run_eval(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Ablate(args) => run_ablate(args),
        Command::PlotData(args) => run_plot_data(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                HarnessError::BadConfig { .. } => 2,
                _ => 3,
            };
            ExitCode::from(code)
        }
    }
}

fn bad_config(reason: impl Into<String>) -> HarnessError {
    HarnessError::BadConfig { reason: reason.into() }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, HarnessError> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| bad_config(format!("cannot read config {}: {e}", p.display())))?;
            ExperimentConfig::from_json(&text)
        }
        None => Ok(ExperimentConfig::default()),
    }
}

/// Builds the actor for `cfg.variant`, restoring `ckpt` when given. Learned
/// variants demand a checkpoint; tracking_only refuses one.
fn load_actor(cfg: &ExperimentConfig, ckpt: Option<&Path>) -> Result<Actor, HarnessError> {
    let mut actor = Actor::new(cfg.variant, cfg.f_max, 0);
    match ckpt {
        Some(path) if cfg.variant.is_learned() => {
            if !path.is_file() {
                return Err(HarnessError::MissingCheckpoint { path: path.to_path_buf() });
            }
            load_actor_weights(&mut actor, path)?;
            Ok(actor)
        }
        Some(_) => Err(bad_config(format!(
            "variant {} has no weights to load, drop --ckpt",
            cfg.variant
        ))),
        None if cfg.variant.is_learned() => {
            Err(bad_config(format!("variant {} needs --ckpt", cfg.variant)))
        }
        None => Ok(actor),
    }
}

fn load_winds(dir: &Path) -> Result<(Vec<PathBuf>, Vec<WindFieldSeries>), HarnessError> {
    Ok(load_wind_dir(dir)?.into_iter().unzip())
}

/// Reads the resolved config that `train` writes next to its checkpoint.
fn sibling_config(ckpt: &Path) -> Result<ExperimentConfig, HarnessError> {
    let path = ckpt
        .parent()
        .unwrap_or_else(|| Path::new(""))
        .join("config.resolved.json");
    let text = fs::read_to_string(&path).map_err(|e| HarnessError::BadData {
        what: "resolved training config",
        path: path.clone(),
        reason: format!("needed to describe {}: {e}", ckpt.display()),
    })?;
    ExperimentConfig::from_json(&text)
}

/// Splits an `--out` that names a CSV file into (directory, file name);
/// a directory path passes through unchanged.
fn split_out(out: &Path) -> (PathBuf, Option<OsString>) {
    if out.extension().is_some_and(|e| e == "csv") {
        let dir = match out.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        (dir, out.file_name().map(OsString::from))
    } else {
        (out.to_path_buf(), None)
    }
}

fn ensure_parent(path: &Path) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

fn run_gen_wind(args: GenWindArgs) -> Result<(), HarnessError> {
    if !(args.duration > 0.0) {
        return Err(bad_config("--duration must be positive"));
    }
    if !(args.dt_frame > 0.0) {
        return Err(bad_config("--dt-frame must be positive"));
    }
    let spec = GridSpec {
        nx: args.grid,
        ny: args.grid,
        ..GridSpec::default()
    };
    spec.validate()
        .map_err(|e| bad_config(format!("--grid {}: {e}", args.grid)))?;
    fs::create_dir_all(&args.out)?;
    for seed in args.seeds.start..args.seeds.end {
        let series = WindFieldSeries::generate(
            spec.clone(),
            seed,
            args.duration,
            args.dt_frame,
            SPEED_BOUND_DEFAULT,
        )?;
        let path = args.out.join(format!("wind_{seed:04}.twn"));
        write_series(&series, &path)?;
        println!("wrote {} ({} frames)", path.display(), series.frames.len());
    }
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<(), HarnessError> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(v) = args.variant {
        cfg.variant = v;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.train_wind_dir = args.wind.clone();
    let (_, winds) = load_winds(&args.wind)?;
    let outcome = train_variant(&cfg, &winds, &args.out)?;
    println!(
        "trained {} for {} steps over {} episodes",
        cfg.variant,
        cfg.sac.total_steps,
        outcome.episodes.len()
    );
    println!("checkpoint: {}", outcome.checkpoint.display());
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<(), HarnessError> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(v) = args.variant {
        cfg.variant = v;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.episodes {
        cfg.eval_episodes = n;
    }
    cfg.test_wind_dir = args.wind.clone();
    let (files, winds) = load_winds(&args.wind)?;
    let actor = load_actor(&cfg, args.ckpt.as_deref())?;
    let (dir, rename) = split_out(&args.out);
    let evaluation = write_eval_outputs(&cfg, &actor, args.ckpt.as_deref(), &files, &winds, &dir)?;
    if let Some(name) = rename {
        if name != "metrics.csv" {
            fs::rename(dir.join("metrics.csv"), dir.join(&name))?;
        }
    }
    let s = evaluation.final_10s;
    println!(
        "closing-window position error: {:.4} +/- {:.4} m over {} episodes",
        s.mean, s.ci95, s.count
    );
    Ok(())
}

fn run_sweep(args: SweepArgs) -> Result<(), HarnessError> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(v) = args.variant {
        cfg.variant = v;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.test_wind_dir = args.wind.clone();
    let (_, winds) = load_winds(&args.wind)?;
    ensure_parent(&args.out)?;
    match args.param.as_str() {
        "k" => {
            if args.ckpts.len() > 1 {
                return Err(bad_config("--param k takes at most one --ckpt"));
            }
            let actor = load_actor(&cfg, args.ckpts.first().map(PathBuf::as_path))?;
            let points = sweep_neighbors(&cfg, &actor, &winds, &args.values)?;
            write_sweep_csv(&args.out, &points)?;
            for (k, s) in &points {
                println!("k={k}: {:.4} +/- {:.4} m", s.mean, s.ci95);
            }
        }
        "n" => {
            if args.ckpts.is_empty() {
                return Err(bad_config("--param n needs one --ckpt per trained size"));
            }
            if args.variant.is_some() {
                return Err(bad_config(
                    "--param n reads each checkpoint's variant from its training run, drop --variant",
                ));
            }
            let mut trained = Vec::with_capacity(args.ckpts.len());
            for path in &args.ckpts {
                let run_cfg = sibling_config(path)?;
                let tagged = ExperimentConfig {
                    variant: run_cfg.variant,
                    f_max: run_cfg.f_max,
                    ..cfg.clone()
                };
                trained.push((run_cfg.n, load_actor(&tagged, Some(path))?));
            }
            let actors: Vec<(usize, &Actor)> = trained.iter().map(|(n, a)| (*n, a)).collect();
            let cells = size_matrix(&cfg, &actors, &args.values, &winds)?;
            write_matrix_csv(&args.out, &cells)?;
            for c in &cells {
                match &c.summary {
                    Some(s) => println!(
                        "train n={} -> test n={}: {:.4} +/- {:.4} m",
                        c.n_train, c.n_test, s.mean, s.ci95
                    ),
                    None => println!(
                        "train n={} -> test n={}: skipped (k does not fit)",
                        c.n_train, c.n_test
                    ),
                }
            }
        }
        other => unreachable!("clap validated --param, got '{other}'"),
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn run_ablate(args: AblateArgs) -> Result<(), HarnessError> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.test_wind_dir = args.wind.clone();
    let (files, winds) = load_winds(&args.wind)?;
    let ckpt_for = |variant: ModelVariant| {
        args.ckpts
            .iter()
            .find(|(v, _)| *v == variant)
            .map(|(_, p)| p.as_path())
    };
    let mut actors = Vec::with_capacity(args.variants.len());
    for &variant in &args.variants {
        let tagged = ExperimentConfig { variant, ..cfg.clone() };
        actors.push((variant, load_actor(&tagged, ckpt_for(variant))?));
    }
    let results = ablate(&cfg, &actors, &winds)?;
    let mut table = Vec::with_capacity(results.len());
    for (variant, evaluation) in &results {
        let tagged = ExperimentConfig { variant: *variant, ..cfg.clone() };
        let manifest = eval_manifest(&tagged, ckpt_for(*variant), &files);
        write_evaluation(&args.out.join("eval").join(variant.name()), evaluation, &manifest)?;
        let s = evaluation.final_10s;
        table.push((*variant, s));
        println!("{variant}: {:.4} +/- {:.4} m over {} episodes", s.mean, s.ci95, s.count);
    }
    let table_path = args.out.join("eval").join("ablation.csv");
    write_ablation_csv(&table_path, &table)?;
    println!("wrote {}", table_path.display());
    Ok(())
}

fn run_plot_data(args: PlotDataArgs) -> Result<(), HarnessError> {
    let written = emit_plot_data(&args.results, &args.out)?;
    for path in &written {
        println!("wrote {}", path.display());
    }
    Ok(())
}
