use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kmtpe_core::config::RunConfig;
use kmtpe_core::driver::{resume, run_race, run_search, Optimizer, SearchState, MIN_SEEDS};
use kmtpe_core::error::{Error, Result};
use kmtpe_core::evalsim::{pretrain, BenchKind, BenchObjective};
use kmtpe_core::hw::{capacity_check, cost_report, HardwareSpec, BASELINE_BITS};
use kmtpe_core::models;
use kmtpe_core::net::{Dataset, TinyNet};
use kmtpe_core::sensitivity::{analyze_hessian, Estimator, SensitivityOptions};
use kmtpe_core::space::{Configuration, LayerShape};
use kmtpe_core::tpe::TpeParams;
use serde::de::DeserializeOwned;

/// Joint bit-width and layer-width search with k-means TPE.
#[derive(Parser)]
#[command(name = "kmtpe", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run (or resume) a bit-width/width search described by a run config.
    Search(SearchArgs),
    /// Pre-train the template network of a run config and dump it with its data.
    Pretrain(PretrainArgs),
    /// Per-layer Hessian-trace sensitivity of a network checkpoint.
    Sensitivity(SensitivityArgs),
    /// Model size and systolic-array latency of a configuration.
    Cost(CostArgs),
    /// Race optimizers on a synthetic benchmark objective.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SearchArgs {
    /// Run configuration (JSON).
    #[arg(long, required_unless_present = "resume")]
    config: Option<PathBuf>,
    /// Overrides the seed of the run configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Continue from a state snapshot instead of starting a new run.
    #[arg(long, conflicts_with_all = ["config", "seed", "optimizer"])]
    resume: Option<PathBuf>,
    /// Overrides the optimizer of the run configuration.
    #[arg(long, value_parser = parse_optimizer)]
    optimizer: Option<Optimizer>,
    /// Stop after this many trials in total (the state file allows resuming).
    #[arg(long)]
    stop_after: Option<usize>,
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output path of the network checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output path of the training split.
    #[arg(long)]
    dataset: PathBuf,
}

#[derive(Args)]
struct SensitivityArgs {
    /// Network checkpoint (JSON weight dump).
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset (JSON) to estimate the loss curvature on.
    #[arg(long)]
    dataset: PathBuf,
    /// Output report path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of sensitivity clusters.
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 100)]
    probes: usize,
    #[arg(long, default_value_t = 512)]
    samples: usize,
    /// `hutchinson` or `exact`.
    #[arg(long, default_value = "hutchinson", value_parser = parse_estimator)]
    estimator: Estimator,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CostArgs {
    /// Built-in layer list: resnet18, resnet20, resnet50, mobilenet_v1, mobilenet_v2.
    #[arg(long, conflicts_with = "layers", required_unless_present = "layers")]
    model: Option<String>,
    /// Layer list (JSON array of layer shapes).
    #[arg(long)]
    layers: Option<PathBuf>,
    /// Configuration (JSON with `bits` and `widths`), one entry per layer or
    /// per main-path layer (projection shortcuts then follow their block).
    #[arg(long, conflicts_with = "bits", required_unless_present = "bits")]
    config: Option<PathBuf>,
    /// Uniform bit-width for every layer.
    #[arg(long)]
    bits: Option<u32>,
    /// Uniform width multiplier, with --bits.
    #[arg(long, default_value_t = 1.0, requires = "bits")]
    width: f64,
    /// Hardware description (JSON); the default 32×32 array otherwise.
    #[arg(long)]
    hardware: Option<PathBuf>,
    #[arg(long, default_value_t = BASELINE_BITS)]
    baseline_bits: u32,
    /// Output report path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// plateau_grid, deceptive_flat or quadratic_mixed.
    #[arg(long, default_value = "plateau_grid", value_parser = parse_kind)]
    kind: BenchKind,
    #[arg(long, default_value_t = BenchObjective::default().dims)]
    dims: usize,
    #[arg(long, default_value_t = BenchObjective::default().levels)]
    levels: usize,
    #[arg(long, default_value_t = BenchObjective::default().flat_fraction)]
    flat_fraction: f64,
    #[arg(long, default_value_t = BenchObjective::default().steps)]
    steps: usize,
    /// Seed of the landscape family.
    #[arg(long, default_value_t = 0)]
    objective_seed: u64,
    /// Number of race seeds (0, 1, …).
    #[arg(long, default_value_t = MIN_SEEDS)]
    seeds: usize,
    /// Comma-separated optimizers.
    #[arg(long, default_value = "kmeans-tpe,classic-tpe,random", value_delimiter = ',', value_parser = parse_optimizer)]
    optimizers: Vec<Optimizer>,
    #[arg(long, default_value_t = TpeParams::default().n_initial)]
    n_initial: usize,
    #[arg(long, default_value_t = TpeParams::default().n_total)]
    n_total: usize,
    /// Trajectory CSV output.
    #[arg(long, default_value = "race.csv")]
    csv: PathBuf,
    /// Summary JSON output.
    #[arg(long, default_value = "race_summary.json")]
    summary: PathBuf,
}

fn parse_optimizer(s: &str) -> std::result::Result<Optimizer, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_estimator(s: &str) -> std::result::Result<Estimator, String> {
    match s {
        "hutchinson" => Ok(Estimator::Hutchinson),
        "exact" => Ok(Estimator::Exact),
        _ => Err(format!(
            "unknown estimator `{s}` (expected hutchinson or exact)"
        )),
    }
}

fn parse_kind(s: &str) -> std::result::Result<BenchKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
        format!(
            "unknown benchmark `{s}` (expected plateau_grid, deceptive_flat or quadratic_mixed)"
        )
    })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json("output", e))?;
    match out {
        Some(path) => kmtpe_core::driver::write_atomic(path, format!("{text}\n").as_bytes()),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn print_result(state: &SearchState) {
    println!("trials: {}", state.trials.len());
    match state.best_trial() {
        Some(best) => {
            println!(
                "best trial: {} (objective {:.4})",
                best.index,
                best.objective_value()
            );
            println!("  accuracy:   {:.4}", best.metrics.accuracy);
            println!("  size:       {} bytes", best.metrics.model_size_bytes);
            println!("  latency:    {} cycles", best.metrics.latency_cycles);
            println!("  penalty:    {:.4}", best.metrics.penalty);
            println!("  bits:       {:?}", best.config.bits);
            println!("  widths:     {:?}", best.config.widths);
        }
        None => println!("no successful trial"),
    }
    if !state.complete {
        println!(
            "stopped early; resume with --resume {}",
            state.run.output.state.display()
        );
    }
}

fn search(args: SearchArgs) -> Result<()> {
    let state = if let Some(path) = &args.resume {
        resume(path, args.stop_after)?
    } else {
        let path = args.config.as_deref().expect("clap enforces --config");
        let mut run = RunConfig::load(path)?;
        if let Some(seed) = args.seed {
            run.seed = seed;
        }
        if let Some(optimizer) = args.optimizer {
            run.optimizer = optimizer;
        }
        run_search(&run, args.stop_after)?
    };
    print_result(&state);
    Ok(())
}

fn pretrain_cmd(args: PretrainArgs) -> Result<()> {
    let run = RunConfig::load(&args.config)?;
    let (net, train, _) = pretrain(&run.task, &run.net.hidden, &run.net.pretrain, run.seed)?;
    write_json(&net, Some(&args.checkpoint))?;
    write_json(&train, Some(&args.dataset))?;
    println!(
        "wrote {} ({} parameters) and {} ({} samples)",
        args.checkpoint.display(),
        net.parameter_count(),
        args.dataset.display(),
        train.len()
    );
    Ok(())
}

fn sensitivity(args: SensitivityArgs) -> Result<()> {
    let net: TinyNet = read_json(&args.checkpoint)?;
    net.validate()?;
    let data: Dataset = read_json(&args.dataset)?;
    let options = SensitivityOptions {
        k: args.k,
        probes: args.probes,
        samples: args.samples,
        estimator: args.estimator,
        seed: args.seed,
    };
    let report = analyze_hessian(&net, &data, &options)?;
    write_json(&report, args.out.as_deref())
}

fn cost(args: CostArgs) -> Result<()> {
    let layers: Vec<LayerShape> = match (&args.model, &args.layers) {
        (Some(name), _) => models::by_name(name)?,
        (None, Some(path)) => read_json(path)?,
        (None, None) => unreachable!("clap enforces --model or --layers"),
    };
    let config: Configuration = match (&args.config, args.bits) {
        (Some(path), _) => models::expand_main_path(&layers, &read_json(path)?)?,
        (None, Some(bits)) => Configuration::uniform(layers.len(), bits, args.width),
        (None, None) => unreachable!("clap enforces --config or --bits"),
    };
    let hw: HardwareSpec = match &args.hardware {
        Some(path) => read_json(path)?,
        None => HardwareSpec::default(),
    };
    hw.validate()?;
    for row in capacity_check(&hw) {
        if !row.is_admitted() {
            log::warn!(
                "{}-bit packing ({} mults/DSP) exceeds the largest bit-exact layout",
                row.bits,
                row.mults_per_dsp
            );
        }
    }
    let report = cost_report(&layers, &config, &hw, args.baseline_bits)?;
    write_json(&report, args.out.as_deref())
}

fn bench(args: BenchArgs) -> Result<()> {
    let objective = BenchObjective {
        kind: args.kind,
        dims: args.dims,
        levels: args.levels,
        flat_fraction: args.flat_fraction,
        steps: args.steps,
        seed: args.objective_seed,
    };
    let params = TpeParams {
        n_initial: args.n_initial,
        n_total: args.n_total,
        max_iters: args.n_total.saturating_sub(args.n_initial),
        ..TpeParams::default()
    };
    let seeds: Vec<u64> = (0..args.seeds as u64).collect();
    let report = run_race(&objective, &args.optimizers, &seeds, &params)?;
    report.write(&args.csv, &args.summary)?;
    for s in &report.summaries {
        println!(
            "{:<12} median evaluations to target {:>6.1}  reached {:>3}/{}  median final {:.4}",
            s.optimizer.name(),
            s.median_evaluations_to_target,
            s.reached,
            s.runs,
            s.median_final_best
        );
    }
    if let (Some(ratio), Some(wins)) = (report.kmeans_to_classic_ratio, report.kmeans_win_fraction)
    {
        println!("k-means/classic evaluations ratio {ratio:.3}, k-means final best ≥ classic in {:.0}% of seeds", wins * 100.0);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KMTPE_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Search(args) => search(args),
        Command::Pretrain(args) => pretrain_cmd(args),
        Command::Sensitivity(args) => sensitivity(args),
        Command::Cost(args) => cost(args),
        Command::Bench(args) => bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}
