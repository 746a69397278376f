//! Independent reference implementations shared by the integration tests.
//! They recompute everything from sets and nested loops, never calling the
//! library code they check.
#![allow(dead_code)]

use std::collections::BTreeSet;

use dce_core::cascade::{Cascade, NodeId, SocialNetwork};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

/// Sum over ranks `i < k` holding a true node of `|top-(i+1) ∩ truth| / (i+1)`,
/// divided by `|truth|`.
pub fn ap_oracle(predicted: &[NodeId], truth: &[NodeId], k: usize) -> f64 {
    let truth_set: BTreeSet<NodeId> = truth.iter().copied().collect();
    let mut sum = 0.0;
    for i in 0..k.min(predicted.len()) {
        if truth.contains(&predicted[i]) {
            let prefix: BTreeSet<NodeId> = predicted[..=i].iter().copied().collect();
            let hits = prefix.intersection(&truth_set).count();
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / truth.len() as f64
}

/// Mean AP over non-empty truths.
pub fn map_oracle(rankings: &[Vec<NodeId>], truths: &[Vec<NodeId>], k: usize) -> f64 {
    let mut sum = 0.0;
    let mut count = 0;
    for (p, t) in rankings.iter().zip(truths) {
        if !t.is_empty() {
            sum += ap_oracle(p, t, k);
            count += 1;
        }
    }
    sum / count as f64
}

/// Before-set enumeration: for each true node `v` (in true order) that is
/// ranked, `|ranked-before(v) ∩ truly-before(v)| / |ranked-before(v) ∩ truth|`,
/// with 0/0 read as 1; the sum is divided by `|truth|`.
pub fn order_precision_oracle(predicted: &[NodeId], truth: &[NodeId]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let truth_set: BTreeSet<NodeId> = truth.iter().copied().collect();
    let mut sum = 0.0;
    for (j, v) in truth.iter().enumerate() {
        let Some(pos) = predicted.iter().position(|p| p == v) else {
            continue;
        };
        let ranked_before: BTreeSet<NodeId> = predicted[..pos].iter().copied().collect();
        let truly_before: BTreeSet<NodeId> = truth[..j].iter().copied().collect();
        let denom = ranked_before.intersection(&truth_set).count();
        let num = ranked_before.intersection(&truly_before).count();
        sum += if denom == 0 {
            1.0
        } else {
            num as f64 / denom as f64
        };
    }
    sum / truth.len() as f64
}

pub fn mean_order_precision_oracle(rankings: &[Vec<NodeId>], truths: &[Vec<NodeId>]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0;
    for (p, t) in rankings.iter().zip(truths) {
        if !t.is_empty() {
            sum += order_precision_oracle(p, t);
            count += 1;
        }
    }
    sum / count as f64
}

/// `Σ_{u,v} w[u,v] ‖z_u − z_v‖²` by explicit double loop.
pub fn pairwise_quadratic(w: &Array2<f64>, z: &Array2<f64>) -> f64 {
    let n = w.nrows();
    let mut total = 0.0;
    for u in 0..n {
        for v in 0..n {
            let d2: f64 = (0..z.ncols())
                .map(|j| (z[[u, j]] - z[[v, j]]).powi(2))
                .sum();
            total += w[[u, v]] * d2;
        }
    }
    total
}

/// A ranked list and a truth list over `0..universe`, each a random ordered
/// subset; overlap varies from none to full.
pub fn random_metric_instance(rng: &mut impl Rng, universe: usize) -> (Vec<NodeId>, Vec<NodeId>) {
    let mut all: Vec<NodeId> = (0..universe).map(NodeId).collect();
    all.shuffle(rng);
    let truth_len = rng.gen_range(1..=universe);
    let truth = all[..truth_len].to_vec();
    all.shuffle(rng);
    let ranked_len = rng.gen_range(1..=universe);
    (all[..ranked_len].to_vec(), truth)
}

/// `n` nodes, each pair linked with probability `p`.
pub fn random_network(rng: &mut impl Rng, n: usize, p: f64) -> SocialNetwork {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                edges.push((NodeId(u), NodeId(v)));
            }
        }
    }
    SocialNetwork::with_indexed_labels(n, edges).unwrap()
}

/// `m` cascades over `n` nodes with 2..=max_len distinct nodes and distinct random times.
pub fn random_cascades(rng: &mut impl Rng, n: usize, m: usize, max_len: usize) -> Vec<Cascade> {
    (0..m)
        .map(|id| {
            let mut nodes: Vec<usize> = (0..n).collect();
            nodes.shuffle(rng);
            let len = rng.gen_range(2..=max_len.min(n));
            let mut t = 0.0;
            let infections = nodes[..len]
                .iter()
                .map(|&v| {
                    t += rng.gen_range(0.1..2.0);
                    (NodeId(v), t)
                })
                .collect();
            Cascade::new(id, format!("c{id}"), infections).unwrap()
        })
        .collect()
}
