//! End-to-end commands: synthesize, train, evaluate, predict and tune, with
//! flat `key = value` configuration and on-disk artifacts.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::cascade::{
    parse_cascades, parse_edge_list, split_dataset, write_cascades, write_edge_list, Cascade,
    CascadeDataset, DatasetSplit, SocialNetwork,
};
use crate::error::{DceError, Result};
use crate::evaluation::{
    default_cutoffs, evaluate_dataset, predict_cascades, primary_cutoff, EvalConfig, MetricReport,
};
use crate::features::FeatureSet;
use crate::io;
use crate::model::{embed, Activation, DescentMode, EmbeddingMatrix, ModelConfig};
use crate::prediction::{PredictionRanking, RankingMode};
use crate::synthgen::{
    generate_graph, planted_community_cascades, simulate_ic_cascades, write_communities,
    SynthConfig,
};
use crate::training::{train_with, LossBreakdown, TrainReport};

pub const EDGES_FILE: &str = "edges.txt";
pub const CASCADES_FILE: &str = "cascades.txt";
pub const COMMUNITIES_FILE: &str = "communities.txt";
pub const CONFIG_FILE: &str = "config.txt";
pub const EMBEDDING_FILE: &str = "embedding.txt";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";
pub const LOG_FILE: &str = "training_log.txt";
pub const TRAIN_SPLIT_FILE: &str = "train_cascades.txt";
pub const VALIDATION_SPLIT_FILE: &str = "validation_cascades.txt";
pub const TEST_SPLIT_FILE: &str = "test_cascades.txt";
pub const METRICS_FILE: &str = "metrics.txt";
pub const PREDICTIONS_FILE: &str = "predictions.txt";
pub const GRID_FILE: &str = "tune_grid.txt";

/// Full model versus the ablation without the affinity and structural terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Dce,
    DceC,
}

impl FromStr for Variant {
    type Err = DceError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dce" => Ok(Variant::Dce),
            "dce-c" => Ok(Variant::DceC),
            other => Err(DceError::InvalidArgument(format!(
                "unknown mode `{other}` (expected dce or dce-c)"
            ))),
        }
    }
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Dce => "dce",
            Variant::DceC => "dce-c",
        }
    }
}

/// Everything a command needs. Options left as `None` fall back to values
/// derived from the data (see [`ModelConfig::desk_default`]).
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub edges: Option<PathBuf>,
    pub cascades: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Embedding to evaluate or predict with; defaults to the one in `out_dir`.
    pub embedding: Option<PathBuf>,
    /// Cascades to evaluate or predict; defaults to the test split in `out_dir`.
    pub eval_cascades: Option<PathBuf>,
    pub variant: Variant,
    pub embedding_dim: Option<usize>,
    pub hidden_widths: Option<Vec<usize>>,
    pub fusion_width: Option<usize>,
    pub tau: Option<f64>,
    pub rho: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub activation: Activation,
    /// `None` is full-batch descent.
    pub batch_size: Option<usize>,
    pub split: (f64, f64, f64),
    pub split_seed: u64,
    pub min_cascade_len: usize,
    pub cutoffs: Option<Vec<usize>>,
    pub ranking: RankingMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::desk_default(1, 1);
        RunConfig {
            edges: None,
            cascades: None,
            out_dir: PathBuf::from("dce-out"),
            embedding: None,
            eval_cascades: None,
            variant: Variant::Dce,
            embedding_dim: None,
            hidden_widths: None,
            fusion_width: None,
            tau: None,
            rho: m.rho,
            alpha: m.alpha,
            beta: m.beta,
            gamma: m.gamma,
            learning_rate: m.learning_rate,
            epochs: m.epochs,
            seed: m.rng_seed,
            activation: m.activation,
            batch_size: None,
            split: (0.6, 0.2, 0.2),
            split_seed: 0,
            min_cascade_len: 2,
            cutoffs: None,
            ranking: RankingMode::OneShot,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| DceError::InvalidArgument(format!("bad value `{value}` for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|t| parse_value(key, t.trim()))
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse_value(key, value).map(Some)
    }
}

/// Applies each `key = value` line of `text` through `set`; `#` starts a comment.
fn apply_lines(text: &str, mut set: impl FnMut(&str, &str) -> Result<()>) -> Result<()> {
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| DceError::Parse {
            line: i + 1,
            msg: format!("expected `key = value`, found `{line}`"),
        })?;
        set(key.trim(), value.trim()).map_err(|e| DceError::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
    }
    Ok(())
}

/// Splits a `key=value` override.
pub fn split_override(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| DceError::InvalidArgument(format!("override `{s}` is not key=value")))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "edges" => self.edges = Some(value.into()),
            "cascades" => self.cascades = Some(value.into()),
            "out_dir" => self.out_dir = value.into(),
            "embedding" => self.embedding = Some(value.into()),
            "eval_cascades" => self.eval_cascades = Some(value.into()),
            "mode" => self.variant = value.parse()?,
            "embedding_dim" => self.embedding_dim = optional(key, value)?,
            "hidden_widths" => {
                self.hidden_widths = if value == "auto" {
                    None
                } else {
                    Some(parse_list(key, value)?)
                }
            }
            "fusion_width" => self.fusion_width = optional(key, value)?,
            "tau" => self.tau = optional(key, value)?,
            "rho" => self.rho = parse_value(key, value)?,
            "alpha" => self.alpha = parse_value(key, value)?,
            "beta" => self.beta = parse_value(key, value)?,
            "gamma" => self.gamma = parse_value(key, value)?,
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "activation" => self.activation = value.parse()?,
            "batch_size" => {
                self.batch_size = if value == "full" {
                    None
                } else {
                    Some(parse_value(key, value)?)
                }
            }
            "split" => {
                let r: Vec<f64> = parse_list(key, value)?;
                let [a, b, c] = r[..] else {
                    return Err(DceError::InvalidArgument(format!(
                        "split needs three ratios, got `{value}`"
                    )));
                };
                self.split = (a, b, c);
            }
            "split_seed" => self.split_seed = parse_value(key, value)?,
            "min_cascade_len" => self.min_cascade_len = parse_value(key, value)?,
            "cutoffs" => {
                self.cutoffs = if value == "auto" {
                    None
                } else {
                    Some(parse_list(key, value)?)
                }
            }
            "ranking" => {
                self.ranking = match value {
                    "one-shot" => RankingMode::OneShot,
                    "sequential" => RankingMode::Sequential,
                    _ => {
                        return Err(DceError::InvalidArgument(format!(
                            "unknown ranking `{value}`"
                        )))
                    }
                }
            }
            _ => {
                return Err(DceError::InvalidArgument(format!(
                    "unknown config key `{key}`"
                )))
            }
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        apply_lines(text, |k, v| cfg.set(k, v))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        RunConfig::from_text(&read_text(path)?)
    }

    /// Serializes every key so that [`RunConfig::from_text`] restores `self`.
    pub fn to_text(&self) -> String {
        let auto = |o: Option<String>| o.unwrap_or_else(|| "auto".into());
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        if let Some(p) = &self.edges {
            kv("edges", p.display().to_string());
        }
        if let Some(p) = &self.cascades {
            kv("cascades", p.display().to_string());
        }
        kv("out_dir", self.out_dir.display().to_string());
        if let Some(p) = &self.embedding {
            kv("embedding", p.display().to_string());
        }
        if let Some(p) = &self.eval_cascades {
            kv("eval_cascades", p.display().to_string());
        }
        kv("mode", self.variant.name().into());
        kv(
            "embedding_dim",
            auto(self.embedding_dim.map(|v| v.to_string())),
        );
        kv(
            "hidden_widths",
            auto(self.hidden_widths.as_deref().map(join)),
        );
        kv(
            "fusion_width",
            auto(self.fusion_width.map(|v| v.to_string())),
        );
        kv("tau", auto(self.tau.map(|v| v.to_string())));
        kv("rho", self.rho.to_string());
        kv("alpha", self.alpha.to_string());
        kv("beta", self.beta.to_string());
        kv("gamma", self.gamma.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv("epochs", self.epochs.to_string());
        kv("seed", self.seed.to_string());
        kv("activation", self.activation.name().into());
        kv(
            "batch_size",
            self.batch_size.map_or("full".into(), |b| b.to_string()),
        );
        kv("split", join(&[self.split.0, self.split.1, self.split.2]));
        kv("split_seed", self.split_seed.to_string());
        kv("min_cascade_len", self.min_cascade_len.to_string());
        kv("cutoffs", auto(self.cutoffs.as_deref().map(join)));
        kv(
            "ranking",
            match self.ranking {
                RankingMode::OneShot => "one-shot",
                RankingMode::Sequential => "sequential",
            }
            .into(),
        );
        out
    }

    /// Model configuration for `n_nodes` nodes and `n_cascades` training cascades.
    /// The ablation variant zeroes `alpha` and `beta`.
    pub fn model_config(&self, n_nodes: usize, n_cascades: usize) -> Result<ModelConfig> {
        let mut m = ModelConfig::desk_default(n_nodes, n_cascades);
        if let Some(h) = &self.hidden_widths {
            m.hidden_widths = h.clone();
        }
        m.fusion_width = self.fusion_width.unwrap_or(m.fusion_width);
        let last = m.hidden_widths.last().copied().unwrap_or(n_nodes);
        m.embedding_dim = self.embedding_dim.unwrap_or(m.embedding_dim.min(last));
        m.tau = self.tau;
        m.rho = self.rho;
        (m.alpha, m.beta) = match self.variant {
            Variant::Dce => (self.alpha, self.beta),
            Variant::DceC => (0.0, 0.0),
        };
        m.gamma = self.gamma;
        m.learning_rate = self.learning_rate;
        m.epochs = self.epochs;
        m.rng_seed = self.seed;
        m.activation = self.activation;
        m.descent = match self.batch_size {
            None => DescentMode::FullBatch,
            Some(batch_size) => DescentMode::Stochastic { batch_size },
        };
        m.validate()?;
        Ok(m)
    }

    pub fn eval_config(&self, n_nodes: usize) -> EvalConfig {
        EvalConfig {
            cutoffs: self
                .cutoffs
                .clone()
                .unwrap_or_else(|| default_cutoffs(n_nodes)),
            mode: self.ranking,
        }
    }

    fn required(path: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
        path.clone()
            .ok_or_else(|| DceError::InvalidArgument(format!("`{key}` path is required")))
    }
}

pub fn apply_synth_setting(cfg: &mut SynthConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "n_nodes" => cfg.n_nodes = parse_value(key, value)?,
        "n_communities" => cfg.n_communities = parse_value(key, value)?,
        "intra_edge_prob" => cfg.intra_edge_prob = parse_value(key, value)?,
        "inter_edge_prob" => cfg.inter_edge_prob = parse_value(key, value)?,
        "n_cascades" => cfg.n_cascades = parse_value(key, value)?,
        "ic_probability" => cfg.ic_probability = parse_value(key, value)?,
        "time_scale" => cfg.time_scale = parse_value(key, value)?,
        "seed" | "rng_seed" => cfg.rng_seed = parse_value(key, value)?,
        "suppression" => {
            cfg.suppression = if value == "inf" {
                f64::INFINITY
            } else {
                parse_value(key, value)?
            }
        }
        "min_cascade_len" => cfg.min_cascade_len = parse_value(key, value)?,
        _ => {
            return Err(DceError::InvalidArgument(format!(
                "unknown synth key `{key}`"
            )))
        }
    }
    Ok(())
}

pub fn synth_config_from_text(text: &str) -> Result<SynthConfig> {
    let mut cfg = SynthConfig::default();
    apply_lines(text, |k, v| apply_synth_setting(&mut cfg, k, v))?;
    Ok(cfg)
}

fn with_path<T>(path: &Path, r: std::io::Result<T>) -> Result<T> {
    r.map_err(|e| {
        DceError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn read_text(path: &Path) -> Result<String> {
    with_path(path, fs::read_to_string(path))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    with_path(path, File::open(path)).map(BufReader::new)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    with_path(path, fs::write(path, text))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    with_path(dir, fs::create_dir_all(dir))
}

pub fn load_network(path: &Path) -> Result<SocialNetwork> {
    parse_edge_list(open(path)?)
}

pub fn load_cascades(path: &Path, network: &SocialNetwork) -> Result<Vec<Cascade>> {
    parse_cascades(open(path)?, network)
}

pub fn load_embedding(path: &Path) -> Result<EmbeddingMatrix> {
    io::read_embedding(open(path)?)
}

/// Table of dataset statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub average_degree: f64,
    pub n_cascades: usize,
    pub average_cascade_length: f64,
}

impl DatasetSummary {
    pub fn of(network: &SocialNetwork, cascades: &[Cascade]) -> Self {
        let infections: usize = cascades.iter().map(Cascade::len).sum();
        DatasetSummary {
            n_nodes: network.n_nodes(),
            n_edges: network.n_edges(),
            average_degree: network.average_degree(),
            n_cascades: cascades.len(),
            average_cascade_length: if cascades.is_empty() {
                0.0
            } else {
                infections as f64 / cascades.len() as f64
            },
        }
    }

    pub fn table(&self) -> String {
        format!(
            "{:<24} {:>12}\n{:<24} {:>12}\n{:<24} {:>12}\n{:<24} {:>12.4}\n{:<24} {:>12}\n{:<24} {:>12.4}\n",
            "statistic",
            "value",
            "nodes",
            self.n_nodes,
            "edges",
            self.n_edges,
            "average degree",
            self.average_degree,
            "cascades",
            self.n_cascades,
            "average cascade length",
            self.average_cascade_length
        )
    }
}

/// Writes a synthetic graph, its cascades and the community assignment to
/// `out_dir`. `planted` selects community-seeded cascades over uniform sources.
pub fn run_synth(config: &SynthConfig, planted: bool, out_dir: &Path) -> Result<DatasetSummary> {
    let graph = generate_graph(config)?;
    let cascades = if planted {
        planted_community_cascades(&graph, config)?
    } else {
        simulate_ic_cascades(&graph.network, config)?
    };
    ensure_dir(out_dir)?;
    write_text(&out_dir.join(EDGES_FILE), &write_edge_list(&graph.network))?;
    write_text(
        &out_dir.join(CASCADES_FILE),
        &write_cascades(&cascades, &graph.network),
    )?;
    write_text(&out_dir.join(COMMUNITIES_FILE), &write_communities(&graph))?;
    Ok(DatasetSummary::of(&graph.network, &cascades))
}

/// Network plus the train/validation/test split of its cascades.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub network: SocialNetwork,
    pub split: DatasetSplit,
    pub dropped_short: usize,
}

/// Loads `edges` and `cascades`, drops short cascades and splits.
pub fn prepare(config: &RunConfig) -> Result<PreparedData> {
    let network = load_network(&RunConfig::required(&config.edges, "edges")?)?;
    let cascades = load_cascades(
        &RunConfig::required(&config.cascades, "cascades")?,
        &network,
    )?;
    prepare_from(config, network, cascades)
}

pub fn prepare_from(
    config: &RunConfig,
    network: SocialNetwork,
    cascades: Vec<Cascade>,
) -> Result<PreparedData> {
    let data = CascadeDataset::new(network, cascades, config.min_cascade_len)?;
    let split = split_dataset(&data.cascades, config.split, config.split_seed)?;
    Ok(PreparedData {
        network: data.network,
        split,
        dropped_short: data.dropped_short,
    })
}

/// A trained model and the embedding of every node.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub report: TrainReport,
    pub embedding: EmbeddingMatrix,
}

pub fn fit(config: &RunConfig, network: &SocialNetwork, train: &[Cascade]) -> Result<FitOutcome> {
    fit_with(config, network, train, |_, _| {})
}

/// Builds features from `train` only, trains, and embeds every node.
pub fn fit_with(
    config: &RunConfig,
    network: &SocialNetwork,
    train: &[Cascade],
    on_epoch: impl FnMut(usize, &LossBreakdown),
) -> Result<FitOutcome> {
    let features = FeatureSet::build(network, train, config.tau, config.rho)?;
    let model = config.model_config(network.n_nodes(), train.len())?;
    let report = train_with(&model, &features, on_epoch)?;
    let embedding = embed(&report.params, &features.contexts)?;
    Ok(FitOutcome { report, embedding })
}

/// Splits, trains on the training part and writes the checkpoint, embedding,
/// training log, resolved config and the three cascade splits to `out_dir`.
pub fn run_train(config: &RunConfig) -> Result<FitOutcome> {
    run_train_with(config, |_| {})
}

/// [`run_train`] that also hands each training-log line to `on_line`.
pub fn run_train_with(config: &RunConfig, mut on_line: impl FnMut(&str)) -> Result<FitOutcome> {
    let data = prepare(config)?;
    let mut log = format!("{}\n", io::TRAINING_LOG_HEADER);
    on_line(io::TRAINING_LOG_HEADER);
    let outcome = fit_with(config, &data.network, &data.split.train, |epoch, loss| {
        let line = io::training_log_line(epoch, loss);
        on_line(&line);
        log.push_str(&line);
        log.push('\n');
    })?;
    let dir = &config.out_dir;
    ensure_dir(dir)?;
    write_text(&dir.join(CONFIG_FILE), &config.to_text())?;
    write_text(
        &dir.join(CHECKPOINT_FILE),
        &io::write_checkpoint(&outcome.report.params),
    )?;
    write_text(
        &dir.join(EMBEDDING_FILE),
        &io::write_embedding(&outcome.embedding),
    )?;
    write_text(&dir.join(LOG_FILE), &log)?;
    for (file, part) in [
        (TRAIN_SPLIT_FILE, &data.split.train),
        (VALIDATION_SPLIT_FILE, &data.split.validation),
        (TEST_SPLIT_FILE, &data.split.test),
    ] {
        write_text(&dir.join(file), &write_cascades(part, &data.network))?;
    }
    Ok(outcome)
}

struct EvalInputs {
    network: SocialNetwork,
    embedding: EmbeddingMatrix,
    cascades: Vec<Cascade>,
}

fn eval_inputs(config: &RunConfig) -> Result<EvalInputs> {
    let network = load_network(&RunConfig::required(&config.edges, "edges")?)?;
    let embedding_path = config
        .embedding
        .clone()
        .unwrap_or_else(|| config.out_dir.join(EMBEDDING_FILE));
    let embedding = load_embedding(&embedding_path)?;
    if embedding.n_nodes() != network.n_nodes() {
        return Err(DceError::Shape(format!(
            "embedding has {} rows but the network has {} nodes",
            embedding.n_nodes(),
            network.n_nodes()
        )));
    }
    let cascades_path = config
        .eval_cascades
        .clone()
        .unwrap_or_else(|| config.out_dir.join(TEST_SPLIT_FILE));
    let cascades = load_cascades(&cascades_path, &network)?;
    Ok(EvalInputs {
        network,
        embedding,
        cascades,
    })
}

/// Predicts and scores the evaluation cascades; writes the metrics file.
pub fn run_evaluate(config: &RunConfig) -> Result<MetricReport> {
    let inputs = eval_inputs(config)?;
    let report = evaluate_dataset(
        &inputs.embedding,
        &inputs.cascades,
        &config.eval_config(inputs.network.n_nodes()),
    )?;
    ensure_dir(&config.out_dir)?;
    write_text(
        &config.out_dir.join(METRICS_FILE),
        &io::write_metrics(&report),
    )?;
    Ok(report)
}

/// Ranks the non-seed nodes of every evaluation cascade; writes the predictions file.
pub fn run_predict(config: &RunConfig) -> Result<Vec<PredictionRanking>> {
    let inputs = eval_inputs(config)?;
    let (pairs, _) = predict_cascades(&inputs.embedding, &inputs.cascades, config.ranking)?;
    let rankings: Vec<PredictionRanking> = pairs.into_iter().map(|(r, _)| r).collect();
    let labels: HashMap<usize, &str> = inputs
        .cascades
        .iter()
        .map(|c| (c.id, c.label.as_str()))
        .collect();
    let text = io::write_predictions(&rankings, &inputs.network, |id| labels[&id]);
    ensure_dir(&config.out_dir)?;
    write_text(&config.out_dir.join(PREDICTIONS_FILE), &text)?;
    Ok(rankings)
}

pub const TUNE_GAMMA: f64 = 0.002;

/// Grid values for both `alpha` and `beta`: `0, 0.2, ..., 1`.
pub fn tune_axis() -> Vec<f64> {
    (0..=5).map(|i| i as f64 / 5.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneCell {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub map: f64,
    pub order_precision: f64,
}

impl TuneCell {
    pub fn score(&self) -> f64 {
        self.map + self.order_precision
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    /// Cutoff of the MAP column.
    pub k: usize,
    /// Alpha-major, both ascending.
    pub cells: Vec<TuneCell>,
    /// Index of the first cell with the highest score.
    pub best: usize,
}

impl TuneResult {
    pub fn best_cell(&self) -> &TuneCell {
        &self.cells[self.best]
    }

    pub fn table(&self) -> String {
        let mut out = format!("alpha beta gamma map@{} order_precision score\n", self.k);
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{} {} {} {:.16e} {:.16e} {:.16e}",
                c.alpha,
                c.beta,
                c.gamma,
                c.map,
                c.order_precision,
                c.score()
            );
        }
        let b = self.best_cell();
        let _ = writeln!(
            out,
            "# best alpha={} beta={} score={:.16e}",
            b.alpha,
            b.beta,
            b.score()
        );
        out
    }
}

/// Trains one model per `(alpha, beta)` on the grid with `gamma` fixed, all
/// from the same initialization seed, and scores each on `validation` by
/// MAP at the primary cutoff plus order-Precision.
pub fn tune(
    config: &RunConfig,
    network: &SocialNetwork,
    train: &[Cascade],
    validation: &[Cascade],
) -> Result<TuneResult> {
    let n = network.n_nodes();
    let k = primary_cutoff(n);
    let eval = EvalConfig {
        cutoffs: vec![k],
        mode: config.ranking,
    };
    let mut cells = Vec::new();
    for &alpha in &tune_axis() {
        for &beta in &tune_axis() {
            let cell_cfg = RunConfig {
                variant: Variant::Dce,
                alpha,
                beta,
                gamma: TUNE_GAMMA,
                ..config.clone()
            };
            let fitted = fit(&cell_cfg, network, train)?;
            let report = evaluate_dataset(&fitted.embedding, validation, &eval)?;
            cells.push(TuneCell {
                alpha,
                beta,
                gamma: TUNE_GAMMA,
                map: report.map(k).expect("cutoff requested"),
                order_precision: report.order_precision,
            });
        }
    }
    let mut best = 0;
    for (i, c) in cells.iter().enumerate() {
        if c.score() > cells[best].score() {
            best = i;
        }
    }
    Ok(TuneResult { k, cells, best })
}

/// Loads and splits the data, runs [`tune`] and writes the grid file.
pub fn run_tune(config: &RunConfig) -> Result<TuneResult> {
    let data = prepare(config)?;
    let result = tune(
        config,
        &data.network,
        &data.split.train,
        &data.split.validation,
    )?;
    ensure_dir(&config.out_dir)?;
    write_text(&config.out_dir.join(GRID_FILE), &result.table())?;
    Ok(result)
}
