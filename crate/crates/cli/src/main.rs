//! Batch front end: generate workloads, simulate them under different
//! placement strategies, sweep workload knobs, and train the policy.
//!
//! Every command is deterministic given its flags and config file. Outputs
//! are plain text and CSV so downstream plotting carries no dependency on
//! this crate. Exit code 0 on success, 2 on configuration errors, 1 on
//! runtime failures. `RUST_LOG` controls verbosity.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vnelab::agent::{epoch_log_csv, train_a3c, PolicyModel, TrainError};
use vnelab::sim::{
    compare, run, run_with, sweep, PlacerChoice, RunConfig, RunOutput, SimError, SweepAxis,
    SweepSpec,
};
use vnelab::substrate::SubstrateNetwork;
use vnelab::workload::{
    generate_substrate, generate_vnr_stream, parse_stream, stream_rng, write_stream,
    STREAM_TRAIN,
};
use vnelab::Units;

use config::FileConfig;

#[derive(Parser)]
#[command(name = "vnelab", version, about = "Virtual network embedding laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a substrate and request stream as replayable text files
    GenWorkload(GenWorkloadArgs),
    /// Simulate one workload under one placement strategy
    Run(RunArgs),
    /// Grid over one workload knob, aggregated over seeds
    Sweep(SweepArgs),
    /// Run several placers against the identical workload
    Compare(CompareArgs),
    /// Train the policy and write a checkpoint
    Train(TrainArgs),
}

/// Flags shared by every subcommand.
#[derive(Args)]
struct CommonArgs {
    /// Experiment file (TOML); flags override its values
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Workload seed; overrides the config file
    #[arg(long, value_name = "K")]
    seed: Option<u64>,
    /// Output directory (created if absent)
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

impl CommonArgs {
    fn file_config(&self) -> Result<FileConfig, SimError> {
        match &self.config {
            Some(path) => FileConfig::load(path),
            None => Ok(FileConfig::default()),
        }
    }
}

#[derive(Args)]
struct GenWorkloadArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Node placement strategy
    #[arg(long, value_name = "NAME")]
    placer: Option<String>,
    /// Hill-climb consolidation at each sampling point
    #[arg(long, value_name = "on|off")]
    consolidate: Option<String>,
    /// Policy checkpoint (required by the rl placer)
    #[arg(long, value_name = "PATH")]
    model: Option<PathBuf>,
    /// Replay a recorded workload directory instead of generating one
    #[arg(long, value_name = "DIR")]
    workload: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    placement: PlacementArgs,
    /// Workload knob to vary; overrides the config file
    #[arg(long, value_name = "NAME")]
    axis: Option<String>,
    /// Values of the knob, comma separated
    #[arg(long, value_delimiter = ',', value_name = "V,...")]
    values: Vec<Units>,
    /// Workload seeds to aggregate over, comma separated
    #[arg(long, value_delimiter = ',', value_name = "K,...")]
    seeds: Vec<u64>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    placement: PlacementArgs,
    /// Placers to compare, comma separated
    #[arg(long, value_delimiter = ',', value_name = "NAME,...", required = true)]
    placers: Vec<String>,
}

#[derive(Args)]
struct PlacementArgs {
    /// Hill-climb consolidation at each sampling point
    #[arg(long, value_name = "on|off")]
    consolidate: Option<String>,
    /// Policy checkpoint (required by the rl placer)
    #[arg(long, value_name = "PATH")]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Parallel training workers
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Total training episodes per worker; overrides epochs from the config
    #[arg(long, value_name = "S")]
    steps: Option<usize>,
}

fn parse_on_off(flag: &str, value: &str) -> Result<bool, SimError> {
    match value {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(SimError::Config(format!(
            "--{flag} takes on or off, got {other:?}"
        ))),
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, SimError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

/// Builds the run configuration from file plus flags, in override order:
/// library defaults, then the file, then explicit flags.
fn resolve_run_config(
    common: &CommonArgs,
    placer: Option<&str>,
    consolidate: Option<&str>,
    model: Option<&Path>,
) -> Result<(RunConfig, FileConfig), SimError> {
    let file = common.file_config()?;
    let mut cfg = file.run_config();
    let placer_name = placer.map(str::to_owned).or_else(|| file.run.placer.clone());
    if let Some(name) = placer_name {
        cfg.placer = PlacerChoice::parse(&name)?;
    }
    if let Some(v) = consolidate {
        cfg.consolidate = parse_on_off("consolidate", v)?;
    }
    if let Some(path) = model {
        cfg.model_path = Some(path.to_owned());
    }
    if let Some(seed) = common.seed {
        cfg.workload.rng_seed = seed;
    }
    Ok((cfg, file))
}

fn cmd_gen_workload(args: &GenWorkloadArgs) -> Result<(), SimError> {
    let (cfg, _) = resolve_run_config(&args.common, None, None, None)?;
    cfg.workload.validate()?;
    let net = generate_substrate(&cfg.workload)?;
    let stream = generate_vnr_stream(&cfg.workload)?;
    let dir = &args.common.out;
    write_file(dir, "substrate.txt", &net.write_text())?;
    write_file(dir, "stream.txt", &write_stream(&stream))?;
    println!(
        "workload seed {}: {} substrate nodes, {} requests -> {}",
        cfg.workload.rng_seed,
        net.node_count(),
        stream.len(),
        dir.display()
    );
    Ok(())
}

fn load_recorded(dir: &Path) -> Result<(SubstrateNetwork, Vec<vnelab::workload::VirtualRequest>), SimError> {
    let net_text = std::fs::read_to_string(dir.join("substrate.txt"))?;
    let stream_text = std::fs::read_to_string(dir.join("stream.txt"))?;
    let net = SubstrateNetwork::parse_text(&net_text)
        .map_err(|e| SimError::Config(format!("substrate.txt: {e}")))?;
    let stream = parse_stream(&stream_text)
        .map_err(|e| SimError::Config(format!("stream.txt: {e}")))?;
    Ok((net, stream))
}

fn print_run_summary(name: &str, out: &RunOutput) {
    let last = out.samples.last();
    let rate = last.and_then(|r| r.acceptance_rate);
    println!(
        "{name}: arrived {} accepted {} acceptance {} mutations {}+{} moves {}",
        out.arrived,
        out.accepted,
        rate.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
        out.mutations_applied,
        out.mutations_rejected,
        out.consolidation_moves,
    );
}

fn cmd_run(args: &RunArgs) -> Result<(), SimError> {
    let (cfg, _) = resolve_run_config(
        &args.common,
        args.placer.as_deref(),
        args.consolidate.as_deref(),
        args.model.as_deref(),
    )?;
    let out = match &args.workload {
        Some(dir) => {
            let (net, stream) = load_recorded(dir)?;
            run_with(&cfg, net, &stream)?
        }
        None => run(&cfg)?,
    };
    let dir = &args.common.out;
    write_file(dir, "metrics.csv", &out.metrics_csv)?;
    write_file(dir, "ledger.txt", &out.ledger.write_text())?;
    print_run_summary(cfg.placer.name(), &out);
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), SimError> {
    let (mut base, file) = resolve_run_config(
        &args.common,
        None,
        args.placement.consolidate.as_deref(),
        args.placement.model.as_deref(),
    )?;
    if base.duration_rounds.is_none() {
        // Aggregation needs a shared time grid even when streams differ.
        base.duration_rounds = Some(10);
    }
    let axis_name = args
        .axis
        .clone()
        .or_else(|| file.sweep.axis.clone())
        .ok_or_else(|| SimError::Config("sweep needs --axis or [sweep] axis".into()))?;
    let values = if args.values.is_empty() {
        file.sweep.values.clone().unwrap_or_default()
    } else {
        args.values.clone()
    };
    let seeds = if args.seeds.is_empty() {
        file.sweep
            .seeds
            .clone()
            .unwrap_or_else(|| vec![base.workload.rng_seed])
    } else {
        args.seeds.clone()
    };
    let spec = SweepSpec { base, axis: SweepAxis::parse(&axis_name)?, values, seeds };
    let out = sweep(&spec)?;
    let dir = &args.common.out;
    write_file(dir, "sweep_long.csv", &out.long_csv)?;
    write_file(dir, "sweep_agg.csv", &out.aggregate_csv)?;
    println!(
        "sweep {} over {:?} x {} seeds -> {}",
        spec.axis.name(),
        spec.values,
        spec.seeds.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<(), SimError> {
    let (base, _) = resolve_run_config(
        &args.common,
        None,
        args.placement.consolidate.as_deref(),
        args.placement.model.as_deref(),
    )?;
    let placers = args
        .placers
        .iter()
        .map(|s| PlacerChoice::parse(s))
        .collect::<Result<Vec<_>, _>>()?;
    let out = compare(&base, &placers)?;
    let dir = &args.common.out;
    write_file(dir, "compare_long.csv", &out.long_csv)?;
    write_file(dir, "compare_summary.csv", &out.summary_csv)?;
    print!("{}", out.summary_csv);
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<(), SimError> {
    let file = args.common.file_config()?;
    let mut workload = vnelab::workload::WorkloadConfig::default();
    file.workload.apply(&mut workload);
    let mut cfg = file.train_config();
    if let Some(seed) = args.common.seed {
        cfg.seed = seed;
        workload.rng_seed = seed;
    }
    if let Some(workers) = args.workers {
        cfg.workers = workers;
    }
    if let Some(steps) = args.steps {
        if steps == 0 {
            return Err(SimError::Config("--steps must be positive".into()));
        }
        cfg.epochs = steps.div_ceil(cfg.episodes_per_epoch);
    }
    workload.validate()?;

    let mut rng = stream_rng(cfg.seed, STREAM_TRAIN);
    let init = PolicyModel::new(&mut rng, &cfg.hidden, cfg.filter_order);
    log::info!(
        "training {} workers x {} epochs x {} episodes",
        cfg.workers,
        cfg.epochs,
        cfg.episodes_per_epoch
    );
    let (model, logs) = train_a3c(&workload, &cfg, init).map_err(|e| match e {
        TrainError::Workload(w) => SimError::Workload(w),
        diverged => SimError::Invariant(diverged.to_string()),
    })?;

    let dir = &args.common.out;
    std::fs::create_dir_all(dir)?;
    let model_path = dir.join("model.bin");
    model.save(&model_path)?;
    log::info!("wrote {}", model_path.display());
    write_file(dir, "training_log.csv", &epoch_log_csv(&logs))?;
    if let Some(last) = logs.last() {
        println!(
            "trained: mean reward {:.4}, acceptance {:.4} -> {}",
            last.mean_reward,
            last.acceptance_rate,
            model_path.display()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenWorkload(args) => cmd_gen_workload(args),
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Train(args) => cmd_train(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                SimError::Config(_) | SimError::Workload(_) => ExitCode::from(2),
                SimError::Invariant(_) | SimError::Io(_) => ExitCode::FAILURE,
            }
        }
    }
}
