//! Networks, cascades, their text formats, and dataset splitting.
//!
//! Node labels are arbitrary strings; ingestion maps them to dense ids in
//! order of first appearance so that ids index matrix rows directly.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{DceError, Result};

/// Dense node identifier in `[0, N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

/// Undirected simple graph over labelled nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SocialNetwork {
    labels: Vec<String>,
    index: HashMap<String, NodeId>,
    /// Sorted, each pair stored as `(min, max)`.
    edges: Vec<(NodeId, NodeId)>,
}

impl SocialNetwork {
    /// Builds a network from labels (id = position) and an edge list.
    /// Reversed duplicates collapse; self-loops and out-of-range endpoints are rejected.
    pub fn new(
        labels: Vec<String>,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if index.insert(label.clone(), NodeId(i)).is_some() {
                return Err(DceError::InvalidArgument(format!(
                    "duplicate node label `{label}`"
                )));
            }
        }
        let n = labels.len();
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u.0 >= n || v.0 >= n {
                return Err(DceError::InvalidArgument(format!(
                    "edge ({}, {}) out of range for {n} nodes",
                    u.0, v.0
                )));
            }
            if u == v {
                return Err(DceError::SelfLoop(labels[u.0].clone()));
            }
            set.insert((u.min(v), u.max(v)));
        }
        Ok(SocialNetwork {
            labels,
            index,
            edges: set.into_iter().collect(),
        })
    }

    /// Network with nodes labelled `n0 .. n{N-1}`.
    pub fn with_indexed_labels(
        n_nodes: usize,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self> {
        Self::new((0..n_nodes).map(|i| format!("n{i}")).collect(), edges)
    }

    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn label(&self, id: NodeId) -> &str {
        &self.labels[id.0]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn id_of(&self, label: &str) -> Option<NodeId> {
        self.index.get(label).copied()
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.edges.binary_search(&(u.min(v), u.max(v))).is_ok()
    }

    pub fn average_degree(&self) -> f64 {
        if self.labels.is_empty() {
            0.0
        } else {
            2.0 * self.edges.len() as f64 / self.labels.len() as f64
        }
    }

    /// Adjacency lists, neighbours sorted ascending.
    pub fn adjacency(&self) -> Vec<Vec<NodeId>> {
        let mut adj = vec![Vec::new(); self.n_nodes()];
        for &(u, v) in &self.edges {
            adj[u.0].push(v);
            adj[v.0].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }
}

/// One information cascade: timestamped infections sorted by time, ties by node id.
#[derive(Debug, Clone, PartialEq)]
pub struct Cascade {
    pub id: usize,
    pub label: String,
    infections: Vec<(NodeId, f64)>,
}

impl Cascade {
    pub fn new(
        id: usize,
        label: impl Into<String>,
        mut infections: Vec<(NodeId, f64)>,
    ) -> Result<Self> {
        let label = label.into();
        if let Some(&(node, t)) = infections.iter().find(|(_, t)| !t.is_finite()) {
            return Err(DceError::InvalidArgument(format!(
                "cascade `{label}`: non-finite timestamp {t} for node {}",
                node.0
            )));
        }
        infections.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let mut seen = HashSet::with_capacity(infections.len());
        for &(node, _) in &infections {
            if !seen.insert(node) {
                return Err(DceError::DuplicateInfection {
                    cascade: label,
                    node: node.0.to_string(),
                });
            }
        }
        Ok(Cascade {
            id,
            label,
            infections,
        })
    }

    /// Infections in ascending (timestamp, node) order.
    pub fn infections(&self) -> &[(NodeId, f64)] {
        &self.infections
    }

    pub fn len(&self) -> usize {
        self.infections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.infections.is_empty()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.infections.iter().any(|&(v, _)| v == node)
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.infections.iter().map(|&(v, _)| v)
    }

    pub fn with_id(mut self, id: usize) -> Self {
        self.id = id;
        self
    }
}

/// A network plus the cascades observed on it.
#[derive(Debug, Clone)]
pub struct CascadeDataset {
    pub network: SocialNetwork,
    pub cascades: Vec<Cascade>,
    /// Cascades dropped for having fewer than the minimum number of infections.
    pub dropped_short: usize,
}

impl CascadeDataset {
    /// Drops cascades shorter than `min_len` and renumbers the rest `0..M`.
    pub fn new(network: SocialNetwork, cascades: Vec<Cascade>, min_len: usize) -> Result<Self> {
        let n = network.n_nodes();
        let before = cascades.len();
        let mut kept = Vec::with_capacity(before);
        for c in cascades {
            if let Some(&(v, _)) = c.infections().iter().find(|(v, _)| v.0 >= n) {
                return Err(DceError::InvalidArgument(format!(
                    "cascade `{}` infects node {} outside the network",
                    c.label, v.0
                )));
            }
            if c.len() >= min_len {
                let id = kept.len();
                kept.push(c.with_id(id));
            }
        }
        let dropped_short = before - kept.len();
        Ok(CascadeDataset {
            network,
            cascades: kept,
            dropped_short,
        })
    }

    pub fn n_cascades(&self) -> usize {
        self.cascades.len()
    }

    pub fn n_infections(&self) -> usize {
        self.cascades.iter().map(Cascade::len).sum()
    }

    pub fn average_cascade_length(&self) -> f64 {
        if self.cascades.is_empty() {
            0.0
        } else {
            self.n_infections() as f64 / self.cascades.len() as f64
        }
    }
}

/// Disjoint train/validation/test partition of a cascade list.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Cascade>,
    pub validation: Vec<Cascade>,
    pub test: Vec<Cascade>,
}

fn content_lines<R: BufRead>(reader: R) -> impl Iterator<Item = (usize, std::io::Result<String>)> {
    reader
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| match l {
            Ok(s) => {
                let t = s.trim();
                !t.is_empty() && !t.starts_with('#')
            }
            Err(_) => true,
        })
}

/// Parses a whitespace-separated edge list.
///
/// A line holding a single label declares a node without adding an edge,
/// which keeps isolated nodes and id order stable across a write/read cycle.
pub fn parse_edge_list<R: BufRead>(reader: R) -> Result<SocialNetwork> {
    let mut labels: Vec<String> = Vec::new();
    let mut index: HashMap<String, NodeId> = HashMap::new();
    let mut intern = |label: &str, labels: &mut Vec<String>| -> NodeId {
        *index.entry(label.to_string()).or_insert_with(|| {
            labels.push(label.to_string());
            NodeId(labels.len() - 1)
        })
    };
    let mut edges = Vec::new();
    for (line_no, line) in content_lines(reader) {
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [a] => {
                intern(a, &mut labels);
            }
            [a, b] => {
                if a == b {
                    return Err(DceError::SelfLoop((*a).to_string()));
                }
                let u = intern(a, &mut labels);
                let v = intern(b, &mut labels);
                edges.push((u, v));
            }
            _ => {
                return Err(DceError::Parse {
                    line: line_no,
                    msg: format!("expected `labelA labelB`, got {} fields", fields.len()),
                })
            }
        }
    }
    SocialNetwork::new(labels, edges)
}

/// Parses `cascade_id node_label timestamp` lines, grouping by cascade id in
/// order of first appearance.
pub fn parse_cascades<R: BufRead>(reader: R, network: &SocialNetwork) -> Result<Vec<Cascade>> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<(NodeId, f64)>> = HashMap::new();
    let mut seen: HashSet<(String, NodeId)> = HashSet::new();
    for (line_no, line) in content_lines(reader) {
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [cid, label, ts] = fields.as_slice() else {
            return Err(DceError::Parse {
                line: line_no,
                msg: format!(
                    "expected `cascade_id node_label timestamp`, got {} fields",
                    fields.len()
                ),
            });
        };
        let node = network.id_of(label).ok_or_else(|| DceError::UnknownNode {
            label: (*label).to_string(),
            line: line_no,
        })?;
        let t: f64 = ts.parse().map_err(|_| DceError::Parse {
            line: line_no,
            msg: format!("timestamp `{ts}` is not a number"),
        })?;
        if !t.is_finite() {
            return Err(DceError::Parse {
                line: line_no,
                msg: format!("timestamp `{ts}` is not finite"),
            });
        }
        if !seen.insert(((*cid).to_string(), node)) {
            return Err(DceError::DuplicateInfection {
                cascade: (*cid).to_string(),
                node: (*label).to_string(),
            });
        }
        groups
            .entry((*cid).to_string())
            .or_insert_with(|| {
                order.push((*cid).to_string());
                Vec::new()
            })
            .push((node, t));
    }
    order
        .into_iter()
        .enumerate()
        .map(|(id, cid)| {
            let infections = groups.remove(&cid).unwrap_or_default();
            Cascade::new(id, cid, infections)
        })
        .collect()
}

/// Writes node declarations followed by one edge per line.
pub fn write_edge_list(network: &SocialNetwork) -> String {
    let mut out = String::new();
    for label in network.labels() {
        let _ = writeln!(out, "{label}");
    }
    for &(u, v) in network.edges() {
        let _ = writeln!(out, "{} {}", network.label(u), network.label(v));
    }
    out
}

pub fn write_cascades(cascades: &[Cascade], network: &SocialNetwork) -> String {
    let mut out = String::new();
    for c in cascades {
        for &(v, t) in c.infections() {
            let _ = writeln!(out, "{} {} {}", c.label, network.label(v), t);
        }
    }
    out
}

/// Seeded random partition. Validation and test get `floor(r * M)` cascades,
/// train takes the remainder. Each part is returned in ascending id order.
pub fn split_dataset(
    cascades: &[Cascade],
    ratios: (f64, f64, f64),
    rng_seed: u64,
) -> Result<DatasetSplit> {
    let (r_train, r_val, r_test) = ratios;
    if [r_train, r_val, r_test]
        .iter()
        .any(|r| !(r.is_finite() && *r > 0.0))
    {
        return Err(DceError::InvalidArgument(format!(
            "split ratios must be positive, got {ratios:?}"
        )));
    }
    if ((r_train + r_val + r_test) - 1.0).abs() > 1e-9 {
        return Err(DceError::InvalidArgument(format!(
            "split ratios must sum to 1, got {ratios:?}"
        )));
    }
    let m = cascades.len();
    if m < 3 {
        return Err(DceError::InvalidArgument(format!(
            "need at least 3 cascades to split, got {m}"
        )));
    }
    let n_val = (r_val * m as f64).floor() as usize;
    let n_test = (r_test * m as f64).floor() as usize;

    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(rng_seed));
    let take = |idx: &[usize]| {
        let mut sorted = idx.to_vec();
        sorted.sort_unstable();
        sorted
            .into_iter()
            .map(|i| cascades[i].clone())
            .collect::<Vec<_>>()
    };
    let validation = take(&order[..n_val]);
    let test = take(&order[n_val..n_val + n_test]);
    let train = take(&order[n_val + n_test..]);
    Ok(DatasetSplit {
        train,
        validation,
        test,
    })
}
