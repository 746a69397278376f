//! Planted-partition graphs and continuous-time independent-cascade
//! simulation for desk-scale experiments.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::cascade::{Cascade, NodeId, SocialNetwork};
use crate::error::{DceError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_nodes: usize,
    pub n_communities: usize,
    pub intra_edge_prob: f64,
    pub inter_edge_prob: f64,
    pub n_cascades: usize,
    /// Per-edge transmission probability.
    pub ic_probability: f64,
    /// Mean transmission delay.
    pub time_scale: f64,
    pub rng_seed: u64,
    /// Cross-community transmission probability is divided by this; may be infinite.
    pub suppression: f64,
    /// Sources are redrawn until a cascade reaches this many infections (bounded retries).
    pub min_cascade_len: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_nodes: 100,
            n_communities: 3,
            intra_edge_prob: 0.3,
            inter_edge_prob: 0.02,
            n_cascades: 100,
            ic_probability: 0.2,
            time_scale: 1.0,
            rng_seed: 0,
            suppression: 10.0,
            min_cascade_len: 2,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DceError::InvalidArgument(m));
        if self.n_communities == 0 {
            return bad("need at least one community".into());
        }
        if self.n_nodes == 0 {
            return bad("need at least one node".into());
        }
        for (name, p) in [
            ("intra_edge_prob", self.intra_edge_prob),
            ("inter_edge_prob", self.inter_edge_prob),
            ("ic_probability", self.ic_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        if !(self.time_scale.is_finite() && self.time_scale > 0.0) {
            return bad(format!(
                "time_scale must be positive, got {}",
                self.time_scale
            ));
        }
        if !(self.suppression >= 1.0) {
            return bad(format!(
                "suppression must be at least 1, got {}",
                self.suppression
            ));
        }
        Ok(())
    }

    /// Community of node `v`: contiguous, near-equal blocks.
    pub fn community_of(&self, v: usize) -> usize {
        v * self.n_communities / self.n_nodes
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticGraph {
    pub network: SocialNetwork,
    pub communities: Vec<usize>,
}

/// Planted-partition random graph: each pair is linked with the intra- or
/// inter-community probability.
pub fn generate_graph(config: &SynthConfig) -> Result<SyntheticGraph> {
    config.validate()?;
    let n = config.n_nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let communities: Vec<usize> = (0..n).map(|v| config.community_of(v)).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if communities[u] == communities[v] {
                config.intra_edge_prob
            } else {
                config.inter_edge_prob
            };
            if rng.gen_bool(p) {
                edges.push((NodeId(u), NodeId(v)));
            }
        }
    }
    Ok(SyntheticGraph {
        network: SocialNetwork::with_indexed_labels(n, edges)?,
        communities,
    })
}

#[derive(PartialEq)]
struct Pending(f64, usize);

impl Eq for Pending {}

impl Ord for Pending {
    // Min-heap on time, then node id.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// One continuous-time IC run from `source` at t = 0. Each node, once
/// infected, tries every not-yet-infected neighbour once; a success arrives
/// after an exponential delay and the earliest arrival wins.
fn run_ic(
    adjacency: &[Vec<NodeId>],
    source: usize,
    edge_prob: &impl Fn(usize, usize) -> f64,
    delay: &Exp<f64>,
    rng: &mut ChaCha8Rng,
) -> Vec<(NodeId, f64)> {
    let mut infected = vec![false; adjacency.len()];
    let mut out = Vec::new();
    let mut heap = BinaryHeap::new();
    heap.push(Pending(0.0, source));
    while let Some(Pending(t, u)) = heap.pop() {
        if infected[u] {
            continue;
        }
        infected[u] = true;
        out.push((NodeId(u), t));
        for &w in &adjacency[u] {
            if infected[w.0] {
                continue;
            }
            let p = edge_prob(u, w.0);
            if p > 0.0 && rng.gen_bool(p) {
                let mut dt = delay.sample(rng);
                while dt <= 0.0 {
                    dt = delay.sample(rng);
                }
                heap.push(Pending(t + dt, w.0));
            }
        }
    }
    out
}

const MAX_SOURCE_DRAWS: usize = 1000;

fn simulate(
    network: &SocialNetwork,
    config: &SynthConfig,
    mut pick_source: impl FnMut(usize, &mut ChaCha8Rng) -> usize,
    edge_prob: impl Fn(usize, usize) -> f64,
) -> Result<Vec<Cascade>> {
    config.validate()?;
    let adjacency = network.adjacency();
    let delay = Exp::new(1.0 / config.time_scale)
        .map_err(|e| DceError::InvalidArgument(format!("time scale: {e}")))?;
    (0..config.n_cascades)
        .map(|m| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
            rng.set_stream(m as u64 + 1);
            let mut infections = Vec::new();
            for _ in 0..MAX_SOURCE_DRAWS {
                let source = pick_source(m, &mut rng);
                infections = run_ic(&adjacency, source, &edge_prob, &delay, &mut rng);
                if infections.len() >= config.min_cascade_len {
                    break;
                }
            }
            Cascade::new(m, format!("c{m}"), infections)
        })
        .collect()
}

/// Cascades from uniformly random sources with a uniform edge probability.
pub fn simulate_ic_cascades(network: &SocialNetwork, config: &SynthConfig) -> Result<Vec<Cascade>> {
    let n = network.n_nodes();
    simulate(
        network,
        config,
        |_, rng| rng.gen_range(0..n),
        |_, _| config.ic_probability,
    )
}

/// Cascade `m` starts in community `m mod C`; transmissions that cross
/// communities use `ic_probability / suppression`.
pub fn planted_community_cascades(
    graph: &SyntheticGraph,
    config: &SynthConfig,
) -> Result<Vec<Cascade>> {
    let c = config.n_communities;
    let members: Vec<Vec<usize>> = (0..c)
        .map(|k| {
            (0..graph.communities.len())
                .filter(|&v| graph.communities[v] == k)
                .collect()
        })
        .collect();
    if members.iter().any(Vec::is_empty) {
        return Err(DceError::InvalidArgument(format!(
            "some of the {c} communities are empty"
        )));
    }
    let cross = if config.suppression.is_infinite() {
        0.0
    } else {
        config.ic_probability / config.suppression
    };
    let communities = &graph.communities;
    simulate(
        &graph.network,
        config,
        |m, rng| {
            let block = &members[m % c];
            block[rng.gen_range(0..block.len())]
        },
        |u, v| {
            if communities[u] == communities[v] {
                config.ic_probability
            } else {
                cross
            }
        },
    )
}

/// `node_label community_id` per line.
pub fn write_communities(graph: &SyntheticGraph) -> String {
    let mut out = String::new();
    for (v, k) in graph.communities.iter().enumerate() {
        let _ = writeln!(out, "{} {k}", graph.network.label(NodeId(v)));
    }
    out
}
