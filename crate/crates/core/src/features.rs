//! Relation structures consumed by the model: per-cascade context matrices,
//! cascading affinity, structural proximity, reconstruction penalties and
//! graph Laplacians.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView1};

use crate::cascade::{Cascade, NodeId, SocialNetwork};
use crate::error::{DceError, Result};

/// Time-decayed influence matrix `X` of one cascade.
///
/// Only rows of infected nodes are stored; every other row is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadingContextMatrix {
    pub cascade_id: usize,
    n_nodes: usize,
    /// Infected nodes, one per stored row.
    rows: Vec<NodeId>,
    /// `row_of[v]` is the stored row of node `v`, if infected.
    row_of: Vec<Option<usize>>,
    values: Array2<f64>,
}

impl CascadingContextMatrix {
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn infected(&self) -> &[NodeId] {
        &self.rows
    }

    /// Stored-row index of `node`, `None` when the row is implicitly zero.
    pub fn stored_row(&self, node: NodeId) -> Option<usize> {
        self.row_of[node.0]
    }

    /// The `k x N` block of stored rows, aligned with [`Self::infected`].
    pub fn stored_values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn get(&self, u: NodeId, v: NodeId) -> f64 {
        self.row_of[u.0].map_or(0.0, |r| self.values[[r, v.0]])
    }

    pub fn row(&self, u: NodeId) -> Array1<f64> {
        match self.row_of[u.0] {
            Some(r) => self.values.row(r).to_owned(),
            None => Array1::zeros(self.n_nodes),
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut dense = Array2::zeros((self.n_nodes, self.n_nodes));
        for (r, v) in self.rows.iter().enumerate() {
            dense.row_mut(v.0).assign(&self.values.row(r));
        }
        dense
    }

    pub fn nnz(&self) -> usize {
        self.values.iter().filter(|x| **x != 0.0).count()
    }
}

/// `x[u][v] = exp(-(t_u - t_v) / tau)` when `v` was infected strictly before `u`, else 0.
pub fn cascading_context(
    cascade: &Cascade,
    n_nodes: usize,
    tau: f64,
) -> Result<CascadingContextMatrix> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(DceError::InvalidArgument(format!(
            "tau must be positive, got {tau}"
        )));
    }
    let infections = cascade.infections();
    let mut row_of = vec![None; n_nodes];
    let mut rows = Vec::with_capacity(infections.len());
    for (r, &(v, _)) in infections.iter().enumerate() {
        if v.0 >= n_nodes {
            return Err(DceError::InvalidArgument(format!(
                "node {} outside {n_nodes} nodes",
                v.0
            )));
        }
        row_of[v.0] = Some(r);
        rows.push(v);
    }
    let mut values = Array2::zeros((rows.len(), n_nodes));
    for (r, &(_, t_u)) in infections.iter().enumerate() {
        for &(v, t_v) in &infections[..r] {
            if t_v < t_u {
                values[[r, v.0]] = (-(t_u - t_v) / tau).exp();
            }
        }
    }
    Ok(CascadingContextMatrix {
        cascade_id: cascade.id,
        n_nodes,
        rows,
        row_of,
        values,
    })
}

/// Mean gap between consecutive infections over all cascades; 1.0 when undefined or zero.
pub fn default_tau(cascades: &[Cascade]) -> f64 {
    let (sum, count) = cascades.iter().fold((0.0, 0usize), |(s, c), cascade| {
        let inf = cascade.infections();
        let gaps: f64 = inf.windows(2).map(|w| w[1].1 - w[0].1).sum();
        (s + gaps, c + inf.len().saturating_sub(1))
    });
    let mean = if count > 0 { sum / count as f64 } else { 0.0 };
    if mean.is_finite() && mean > 0.0 {
        mean
    } else {
        1.0
    }
}

/// Symmetric co-occurrence ratio matrix `A` with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadingAffinityMatrix(pub Array2<f64>);

pub fn cascading_affinity(cascades: &[Cascade], n_nodes: usize) -> Result<CascadingAffinityMatrix> {
    if cascades.is_empty() {
        return Err(DceError::Empty(
            "cascading affinity needs at least one cascade".into(),
        ));
    }
    let mut counts = Array2::<f64>::zeros((n_nodes, n_nodes));
    for c in cascades {
        let nodes: Vec<usize> = c.nodes().map(NodeId::index).collect();
        if let Some(&bad) = nodes.iter().find(|&&v| v >= n_nodes) {
            return Err(DceError::InvalidArgument(format!(
                "node {bad} outside {n_nodes} nodes"
            )));
        }
        for (i, &u) in nodes.iter().enumerate() {
            for &v in &nodes[i + 1..] {
                counts[[u, v]] += 1.0;
                counts[[v, u]] += 1.0;
            }
        }
    }
    let m = cascades.len() as f64;
    counts.mapv_inplace(|c| c / m);
    Ok(CascadingAffinityMatrix(counts))
}

/// First-order proximity: `s[u][v] = 1` iff `(u, v)` is an edge.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralProximityMatrix(pub Array2<f64>);

pub fn structural_proximity(network: &SocialNetwork) -> StructuralProximityMatrix {
    let n = network.n_nodes();
    let mut s = Array2::zeros((n, n));
    for &(u, v) in network.edges() {
        s[[u.0, v.0]] = 1.0;
        s[[v.0, u.0]] = 1.0;
    }
    StructuralProximityMatrix(s)
}

/// Reconstruction weights: `rho` where the context entry is nonzero, 1 elsewhere.
///
/// Shares the row layout of its context matrix; unstored rows are all ones.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMatrix {
    pub cascade_id: usize,
    pub rho: f64,
    n_nodes: usize,
    row_of: Vec<Option<usize>>,
    values: Array2<f64>,
}

impl PenaltyMatrix {
    pub fn get(&self, u: NodeId, v: NodeId) -> f64 {
        self.row_of[u.0].map_or(1.0, |r| self.values[[r, v.0]])
    }

    /// Row `u` as a dense vector.
    pub fn row(&self, u: NodeId) -> Array1<f64> {
        match self.row_of[u.0] {
            Some(r) => self.values.row(r).to_owned(),
            None => Array1::ones(self.n_nodes),
        }
    }

    pub fn stored_row(&self, u: NodeId) -> Option<ArrayView1<'_, f64>> {
        self.row_of[u.0].map(|r| self.values.row(r))
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut dense = Array2::ones((self.n_nodes, self.n_nodes));
        for (u, r) in self.row_of.iter().enumerate() {
            if let Some(r) = r {
                dense.row_mut(u).assign(&self.values.row(*r));
            }
        }
        dense
    }
}

pub fn penalty_matrix(context: &CascadingContextMatrix, rho: f64) -> Result<PenaltyMatrix> {
    if !(rho.is_finite() && rho > 1.0) {
        return Err(DceError::InvalidArgument(format!(
            "rho must exceed 1, got {rho}"
        )));
    }
    Ok(PenaltyMatrix {
        cascade_id: context.cascade_id,
        rho,
        n_nodes: context.n_nodes,
        row_of: context.row_of.clone(),
        values: context.values.mapv(|x| if x != 0.0 { rho } else { 1.0 }),
    })
}

/// `L = D - W` for a symmetric weight matrix.
pub fn laplacian(w: &Array2<f64>) -> Result<Array2<f64>> {
    let (n, cols) = w.dim();
    if n != cols {
        return Err(DceError::Shape(format!(
            "laplacian of non-square {n}x{cols} matrix"
        )));
    }
    for i in 0..n {
        for j in i + 1..n {
            let gap = (w[[i, j]] - w[[j, i]]).abs();
            if gap > 1e-12 || gap.is_nan() {
                return Err(DceError::Asymmetric {
                    row: i,
                    col: j,
                    gap,
                });
            }
        }
    }
    let mut l = -w;
    for (i, degree) in w.sum_axis(ndarray::Axis(1)).iter().enumerate() {
        l[[i, i]] += degree;
    }
    Ok(l)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianPair {
    pub affinity_laplacian: Array2<f64>,
    pub structural_laplacian: Array2<f64>,
}

/// Everything the training loop consumes, built from the training cascades.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub n_nodes: usize,
    pub tau: f64,
    pub rho: f64,
    pub contexts: Vec<CascadingContextMatrix>,
    pub penalties: Vec<PenaltyMatrix>,
    pub affinity: CascadingAffinityMatrix,
    pub structural: StructuralProximityMatrix,
    pub laplacians: LaplacianPair,
}

impl FeatureSet {
    /// `tau = None` picks [`default_tau`] of the given cascades.
    pub fn build(
        network: &SocialNetwork,
        cascades: &[Cascade],
        tau: Option<f64>,
        rho: f64,
    ) -> Result<Self> {
        let n = network.n_nodes();
        let tau = tau.unwrap_or_else(|| default_tau(cascades));
        let contexts = cascades
            .iter()
            .enumerate()
            .map(|(m, c)| {
                cascading_context(c, n, tau).map(|mut x| {
                    x.cascade_id = m;
                    x
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let penalties = contexts
            .iter()
            .map(|x| penalty_matrix(x, rho))
            .collect::<Result<Vec<_>>>()?;
        let affinity = cascading_affinity(cascades, n)?;
        let structural = structural_proximity(network);
        let laplacians = LaplacianPair {
            affinity_laplacian: laplacian(&affinity.0)?,
            structural_laplacian: laplacian(&structural.0)?,
        };
        Ok(FeatureSet {
            n_nodes: n,
            tau,
            rho,
            contexts,
            penalties,
            affinity,
            structural,
            laplacians,
        })
    }

    pub fn n_cascades(&self) -> usize {
        self.contexts.len()
    }
}

/// Nonzero entries as `row col value` lines.
pub fn write_triplets(matrix: &Array2<f64>) -> String {
    let mut out = String::new();
    for ((r, c), v) in matrix.indexed_iter() {
        if *v != 0.0 {
            let _ = writeln!(out, "{r} {c} {v:.17e}");
        }
    }
    out
}
