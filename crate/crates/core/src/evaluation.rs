//! MAP@k and order-Precision over predicted rankings.

use std::collections::HashMap;

use crate::cascade::{Cascade, NodeId};
use crate::error::{DceError, Result};
use crate::model::EmbeddingMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::prediction::{
    random_ranking, rank_nodes_with, seed_count, select_seeds, PredictionRanking, RankingMode,
    SeedSet,
};

/// Truly infected non-seed nodes of a cascade in infection order.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub cascade_id: usize,
    pub nodes: Vec<NodeId>,
}

impl GroundTruth {
    /// Infections after the first `n_seeds`, in cascade order.
    pub fn from_cascade(cascade: &Cascade, n_seeds: usize) -> Self {
        GroundTruth {
            cascade_id: cascade.id,
            nodes: cascade
                .infections()
                .iter()
                .skip(n_seeds)
                .map(|&(v, _)| v)
                .collect(),
        }
    }
}

/// `|top-n of predicted ∩ truth| / n`.
pub fn precision_at_n(predicted: &[NodeId], truth: &GroundTruth, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(DceError::InvalidArgument(
            "precision cutoff must be positive".into(),
        ));
    }
    if n > predicted.len() {
        return Err(DceError::InvalidArgument(format!(
            "cutoff {n} exceeds ranking length {}",
            predicted.len()
        )));
    }
    let hits = predicted[..n]
        .iter()
        .filter(|v| truth.nodes.contains(v))
        .count();
    Ok(hits as f64 / n as f64)
}

/// Sum of precisions at the ranks of truth nodes within the top `k`, divided
/// by `|R_C|` (not by `min(k, |R_C|)`). Cutoffs beyond the ranking are clamped.
pub fn average_precision(predicted: &[NodeId], truth: &GroundTruth, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(DceError::InvalidArgument(
            "cutoff k must be positive".into(),
        ));
    }
    if truth.nodes.is_empty() {
        return Err(DceError::Empty(format!(
            "cascade {} has no infections to predict",
            truth.cascade_id
        )));
    }
    let relevant: std::collections::HashSet<NodeId> = truth.nodes.iter().copied().collect();
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, v) in predicted.iter().take(k).enumerate() {
        if relevant.contains(v) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / truth.nodes.len() as f64)
}

fn aligned<'a>(
    predictions: &'a [PredictionRanking],
    truths: &'a [GroundTruth],
) -> Result<impl Iterator<Item = (&'a PredictionRanking, &'a GroundTruth)>> {
    if predictions.len() != truths.len() {
        return Err(DceError::Shape(format!(
            "{} rankings vs {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if let Some((p, t)) = predictions
        .iter()
        .zip(truths)
        .find(|(p, t)| p.cascade_id != t.cascade_id)
    {
        return Err(DceError::InvalidArgument(format!(
            "ranking for cascade {} paired with truth for cascade {}",
            p.cascade_id, t.cascade_id
        )));
    }
    Ok(predictions
        .iter()
        .zip(truths)
        .filter(|(_, t)| !t.nodes.is_empty()))
}

/// Mean of AP@k over cascades with a non-empty truth list.
pub fn map_at_k(
    predictions: &[PredictionRanking],
    truths: &[GroundTruth],
    k: usize,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, t) in aligned(predictions, truths)? {
        sum += average_precision(&p.nodes(), t, k)?;
        count += 1;
    }
    if count == 0 {
        return Err(DceError::Empty("no evaluable cascades for MAP".into()));
    }
    Ok(sum / count as f64)
}

/// Fenwick tree over true-order positions.
struct PrefixCounter(Vec<usize>);

impl PrefixCounter {
    fn new(n: usize) -> Self {
        PrefixCounter(vec![0; n + 1])
    }

    fn add(&mut self, pos: usize) {
        let mut i = pos + 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of added positions `< pos`.
    fn below(&self, pos: usize) -> usize {
        let mut i = pos;
        let mut total = 0;
        while i > 0 {
            total += self.0[i];
            i -= i & i.wrapping_neg();
        }
        total
    }
}

/// Order agreement of one cascade.
///
/// For each truth node `v` that appears in the ranking, the ratio is the
/// number of truth nodes ranked before `v` that were also truly infected
/// before `v`, over the number of truth nodes ranked before `v`. An empty
/// denominator counts as 1. Ratios are summed in true infection order and
/// divided by `|R_C|`.
pub fn cascade_order_precision(predicted: &[NodeId], truth: &GroundTruth) -> f64 {
    if truth.nodes.is_empty() {
        return 0.0;
    }
    let true_pos: HashMap<NodeId, usize> = truth
        .nodes
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, i))
        .collect();
    let mut ratio: Vec<Option<f64>> = vec![None; truth.nodes.len()];
    let mut seen = PrefixCounter::new(truth.nodes.len());
    let mut seen_count = 0usize;
    for v in predicted {
        if let Some(&r) = true_pos.get(v) {
            if ratio[r].is_some() {
                continue;
            }
            let agree = seen.below(r);
            ratio[r] = Some(if seen_count == 0 {
                1.0
            } else {
                agree as f64 / seen_count as f64
            });
            seen.add(r);
            seen_count += 1;
        }
    }
    let sum = ratio.iter().flatten().fold(0.0, |acc, r| acc + r);
    sum / truth.nodes.len() as f64
}

/// Mean order agreement over cascades with a non-empty truth list.
pub fn order_precision(predictions: &[PredictionRanking], truths: &[GroundTruth]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, t) in aligned(predictions, truths)? {
        sum += cascade_order_precision(&p.nodes(), t);
        count += 1;
    }
    if count == 0 {
        return Err(DceError::Empty(
            "no evaluable cascades for order-precision".into(),
        ));
    }
    Ok(sum / count as f64)
}

/// `{N/10, N/5, N/2}` below 900 nodes, else `{100, 300, 500, 700, 900}`.
pub fn default_cutoffs(n_nodes: usize) -> Vec<usize> {
    if n_nodes < 900 {
        let mut ks: Vec<usize> = [10, 5, 2].iter().map(|d| (n_nodes / d).max(1)).collect();
        ks.dedup();
        ks
    } else {
        vec![100, 300, 500, 700, 900]
    }
}

/// The cutoff used when a single MAP value is needed: `N/5` at desk scale, 500 otherwise.
pub fn primary_cutoff(n_nodes: usize) -> usize {
    if n_nodes < 900 {
        (n_nodes / 5).max(1)
    } else {
        500
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub cutoffs: Vec<usize>,
    pub mode: RankingMode,
}

impl EvalConfig {
    pub fn for_nodes(n_nodes: usize) -> Self {
        EvalConfig {
            cutoffs: default_cutoffs(n_nodes),
            mode: RankingMode::OneShot,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub map_at_k: Vec<(usize, f64)>,
    pub order_precision: f64,
    pub n_cascades: usize,
    /// Cascades too short to leave anything to predict after seeding.
    pub n_skipped: usize,
}

impl MetricReport {
    pub fn map(&self, k: usize) -> Option<f64> {
        self.map_at_k.iter().find(|(kk, _)| *kk == k).map(|e| e.1)
    }

    /// Human-readable table.
    pub fn table(&self) -> String {
        let mut out = format!("{:<12} {:>10}\n", "metric", "value");
        for (k, v) in &self.map_at_k {
            out.push_str(&format!("{:<12} {:>10.6}\n", format!("MAP@{k}"), v));
        }
        out.push_str(&format!(
            "{:<12} {:>10.6}\n",
            "order-P", self.order_precision
        ));
        out.push_str(&format!("{:<12} {:>10}\n", "cascades", self.n_cascades));
        out.push_str(&format!("{:<12} {:>10}\n", "skipped", self.n_skipped));
        out
    }
}

/// Seeds, ranks and builds ground truth for every cascade with something left
/// to predict. Returns the evaluable pairs and the number skipped.
pub fn predict_cascades(
    z: &EmbeddingMatrix,
    cascades: &[Cascade],
    mode: RankingMode,
) -> Result<(Vec<(PredictionRanking, GroundTruth)>, usize)> {
    predict_with(z.n_nodes(), cascades, |seeds| {
        rank_nodes_with(seeds, z, mode)
    })
}

fn predict_with(
    n_nodes: usize,
    cascades: &[Cascade],
    mut rank: impl FnMut(&SeedSet) -> Result<PredictionRanking>,
) -> Result<(Vec<(PredictionRanking, GroundTruth)>, usize)> {
    let n_seeds = seed_count(n_nodes);
    let mut out = Vec::new();
    let mut skipped = 0;
    for c in cascades {
        if c.len() < n_seeds + 1 {
            skipped += 1;
            continue;
        }
        let seeds =
            select_seeds(c, n_nodes).map_err(|e| DceError::InvalidArgument(format!("{e:?}")))?;
        out.push((rank(&seeds)?, GroundTruth::from_cascade(c, n_seeds)));
    }
    Ok((out, skipped))
}

/// Aggregates per-cascade rankings into MAP at each cutoff and order-Precision.
pub fn evaluate_rankings(
    pairs: Vec<(PredictionRanking, GroundTruth)>,
    n_skipped: usize,
    cutoffs: &[usize],
) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(DceError::Empty(format!(
            "none of {n_skipped} cascades is long enough to evaluate"
        )));
    }
    let (rankings, truths): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let map_at_k = cutoffs
        .iter()
        .map(|&k| map_at_k(&rankings, &truths, k).map(|v| (k, v)))
        .collect::<Result<Vec<_>>>()?;
    let order_precision = order_precision(&rankings, &truths)?;
    Ok(MetricReport {
        map_at_k,
        order_precision,
        n_cascades: rankings.len(),
        n_skipped,
    })
}

pub fn evaluate_dataset(
    z: &EmbeddingMatrix,
    cascades: &[Cascade],
    config: &EvalConfig,
) -> Result<MetricReport> {
    let (pairs, n_skipped) = predict_cascades(z, cascades, config.mode)?;
    evaluate_rankings(pairs, n_skipped, &config.cutoffs)
}

/// Same protocol with uniformly random rankings in place of the model.
pub fn evaluate_random_baseline(
    n_nodes: usize,
    cascades: &[Cascade],
    cutoffs: &[usize],
    rng_seed: u64,
) -> Result<MetricReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (pairs, n_skipped) = predict_with(n_nodes, cascades, |seeds| {
        Ok(random_ranking(seeds, n_nodes, &mut rng))
    })?;
    evaluate_rankings(pairs, n_skipped, cutoffs)
}
