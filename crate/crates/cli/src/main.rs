//! `dce`: synthesize data, train embeddings, evaluate, predict and tune.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dce_core::pipeline::{
    self, apply_synth_setting, split_override, synth_config_from_text, RunConfig,
};
use dce_core::synthgen::SynthConfig;
use dce_core::{DceError, Result};

#[derive(Parser)]
#[command(
    name = "dce",
    version,
    about = "Cascade-based node embeddings and infection prediction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted-community graph and cascades.
    Synth(SynthArgs),
    /// Train on the training split and write the embedding and checkpoint.
    Train(RunArgs),
    /// Score predictions for held-out cascades.
    Evaluate(RunArgs),
    /// Write ranked predictions for held-out cascades.
    Predict(RunArgs),
    /// Grid-search alpha and beta on the validation split.
    Tune(RunArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Flat `key = value` file of synth settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    communities: Option<usize>,
    #[arg(long)]
    cascades: Option<usize>,
    #[arg(long)]
    ic_probability: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Draw cascade sources uniformly instead of per community.
    #[arg(long)]
    uniform_sources: bool,
    /// Any setting as `key=value`; applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long)]
    cascades: Option<PathBuf>,
    /// Output (and artifact) directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    embedding: Option<PathBuf>,
    #[arg(long)]
    eval_cascades: Option<PathBuf>,
    /// `dce` or `dce-c`.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Comma-separated MAP cutoffs.
    #[arg(long)]
    cutoffs: Option<String>,
    /// Do not echo the training log.
    #[arg(long)]
    quiet: bool,
    /// Any setting as `key=value`; applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn read_config(path: &PathBuf) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        DceError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_text(&read_config(p)?)?,
            None => RunConfig::default(),
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let flags = [
            ("edges", path(&self.edges)),
            ("cascades", path(&self.cascades)),
            ("out_dir", path(&self.out)),
            ("embedding", path(&self.embedding)),
            ("eval_cascades", path(&self.eval_cascades)),
            ("mode", self.mode.clone()),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("learning_rate", self.learning_rate.map(|v| v.to_string())),
            ("alpha", self.alpha.map(|v| v.to_string())),
            ("beta", self.beta.map(|v| v.to_string())),
            ("cutoffs", self.cutoffs.clone()),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        for o in &self.overrides {
            let (k, v) = split_override(o)?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }
}

impl SynthArgs {
    fn resolve(&self) -> Result<SynthConfig> {
        let mut cfg = match &self.config {
            Some(p) => synth_config_from_text(&read_config(p)?)?,
            None => SynthConfig::default(),
        };
        let flags = [
            ("n_nodes", self.nodes.map(|v| v.to_string())),
            ("n_communities", self.communities.map(|v| v.to_string())),
            ("n_cascades", self.cascades.map(|v| v.to_string())),
            ("ic_probability", self.ic_probability.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                apply_synth_setting(&mut cfg, key, &v)?;
            }
        }
        for o in &self.overrides {
            let (k, v) = split_override(o)?;
            apply_synth_setting(&mut cfg, k, v)?;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => {
            let cfg = args.resolve()?;
            let summary = pipeline::run_synth(&cfg, !args.uniform_sources, &args.out)?;
            print!("{}", summary.table());
        }
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let quiet = args.quiet;
            let outcome = pipeline::run_train_with(&cfg, |line| {
                if !quiet {
                    println!("{line}");
                }
            })?;
            let r = &outcome.report;
            println!(
                "# epochs {} converged {} initial {:.6e} final {:.6e} time {:.3}s",
                r.epochs_completed(),
                r.converged,
                r.initial_loss().total,
                r.final_loss.total,
                r.wall_time.as_secs_f64()
            );
        }
        Command::Evaluate(args) => {
            let report = pipeline::run_evaluate(&args.resolve()?)?;
            print!("{}", report.table());
        }
        Command::Predict(args) => {
            let rankings = pipeline::run_predict(&args.resolve()?)?;
            println!("# ranked {} cascades", rankings.len());
        }
        Command::Tune(args) => {
            let result = pipeline::run_tune(&args.resolve()?)?;
            print!("{}", result.table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error kind={} message={msg:?}", e.kind());
            ExitCode::FAILURE
        }
    }
}
