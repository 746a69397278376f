//! Composite loss, reverse-mode gradients, gradient descent and the
//! finite-difference gradient checker.
//!
//! The total loss is
//! `L = L_x + alpha * L_a + beta * L_s + gamma * L_reg` where `L_x` is the
//! penalty-weighted reconstruction error summed over cascades, `L_a` and
//! `L_s` are `2 tr(Z^T L Z)` for the affinity and structural Laplacians, and
//! `L_reg` is the squared Frobenius norm of every weight matrix (shared
//! layers counted once, biases excluded).

use std::time::{Duration, Instant};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cascade::NodeId;
use crate::error::{DceError, Result};
use crate::features::{CascadingContextMatrix, FeatureSet, PenaltyMatrix};
use crate::model::{
    forward_all, init_params, Activation, BranchInput, DescentMode, Layer, ModelConfig, ModelParams,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl From<&ModelConfig> for LossWeights {
    fn from(c: &ModelConfig) -> Self {
        LossWeights {
            alpha: c.alpha,
            beta: c.beta,
            gamma: c.gamma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub reconstruction: f64,
    pub affinity: f64,
    pub structural: f64,
    pub regularizer: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn combine(
        reconstruction: f64,
        affinity: f64,
        structural: f64,
        regularizer: f64,
        w: LossWeights,
    ) -> Result<Self> {
        let total =
            reconstruction + w.alpha * affinity + w.beta * structural + w.gamma * regularizer;
        for (name, v) in [
            ("reconstruction loss", reconstruction),
            ("affinity loss", affinity),
            ("structural loss", structural),
            ("regularizer", regularizer),
            ("total loss", total),
        ] {
            if !v.is_finite() {
                return Err(DceError::NonFinite(name.to_string()));
            }
        }
        Ok(LossBreakdown {
            reconstruction,
            affinity,
            structural,
            regularizer,
            total,
        })
    }
}

/// Gradient of the total loss, one tensor per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet(pub ModelParams);

impl GradientSet {
    pub fn zeros_like(params: &ModelParams) -> Self {
        GradientSet(params.zeros_like())
    }

    pub fn check_finite(&self) -> Result<()> {
        for t in self.0.tensors() {
            if t.values.iter().any(|g| !g.is_finite()) {
                return Err(DceError::NonFinite(format!("gradient of {}", t.name)));
            }
        }
        Ok(())
    }
}

/// `sum_m || (X_m - X_hat_m) .* P_m ||_F^2` with dense reconstructions.
pub fn loss_reconstruction(
    contexts: &[CascadingContextMatrix],
    reconstructions: &[Array2<f64>],
    penalties: &[PenaltyMatrix],
) -> Result<f64> {
    if contexts.len() != reconstructions.len() || contexts.len() != penalties.len() {
        return Err(DceError::Shape(format!(
            "{} contexts, {} reconstructions, {} penalties",
            contexts.len(),
            reconstructions.len(),
            penalties.len()
        )));
    }
    let mut total = 0.0;
    for (m, ((x, x_hat), p)) in contexts
        .iter()
        .zip(reconstructions)
        .zip(penalties)
        .enumerate()
    {
        let n = x.n_nodes();
        if x_hat.dim() != (n, n) {
            return Err(DceError::Shape(format!(
                "cascade {m}: reconstruction {:?} vs {n}x{n}",
                x_hat.dim()
            )));
        }
        for (u, row) in x_hat.rows().into_iter().enumerate() {
            let u = NodeId(u);
            match (x.stored_row(u), p.stored_row(u)) {
                (Some(r), Some(p_row)) => {
                    let x_row = x.stored_values().row(r);
                    for ((xh, xv), pv) in row.iter().zip(x_row).zip(p_row) {
                        let e = (xv - xh) * pv;
                        total += e * e;
                    }
                }
                _ => total += row.iter().map(|xh| xh * xh).sum::<f64>(),
            }
        }
    }
    Ok(total)
}

fn laplacian_loss(z: &Array2<f64>, laplacian: &Array2<f64>) -> Result<f64> {
    let n = z.nrows();
    if laplacian.dim() != (n, n) {
        return Err(DceError::Shape(format!(
            "laplacian {:?} vs {n} embeddings",
            laplacian.dim()
        )));
    }
    let lz = laplacian.dot(z);
    Ok((2.0 * (z * &lz).sum()).max(0.0))
}

/// `2 tr(Z^T L_a Z)`.
pub fn loss_affinity(z: &Array2<f64>, affinity_laplacian: &Array2<f64>) -> Result<f64> {
    laplacian_loss(z, affinity_laplacian)
}

/// `2 tr(Z^T L_s Z)`.
pub fn loss_structural(z: &Array2<f64>, structural_laplacian: &Array2<f64>) -> Result<f64> {
    laplacian_loss(z, structural_laplacian)
}

/// Full forward pass followed by every loss component.
pub fn loss_total(
    params: &ModelParams,
    features: &FeatureSet,
    weights: LossWeights,
) -> Result<LossBreakdown> {
    let (z, recon) = forward_all(params, &features.contexts)?;
    let lx = loss_reconstruction(&features.contexts, &recon, &features.penalties)?;
    let la = loss_affinity(&z.0, &features.laplacians.affinity_laplacian)?;
    let ls = loss_structural(&z.0, &features.laplacians.structural_laplacian)?;
    LossBreakdown::combine(lx, la, ls, params.weight_norm_sq(), weights)
}

/// `delta = upstream .* act'(output)`.
fn local_delta(act: Activation, upstream: Array2<f64>, output: &Array2<f64>) -> Array2<f64> {
    let mut delta = upstream;
    delta.zip_mut_with(output, |g, &y| *g *= act.derivative_from_output(y));
    delta
}

/// Accumulates one dense layer's gradients and returns the gradient w.r.t. its input.
fn layer_backward(
    layer: &Layer,
    grad: &mut Layer,
    delta: &Array2<f64>,
    input: &Array2<f64>,
    need_input: bool,
) -> Option<Array2<f64>> {
    grad.weight += &delta.t().dot(input);
    grad.bias += &delta.sum_axis(Axis(0));
    need_input.then(|| delta.dot(&layer.weight))
}

/// Reconstruction loss of a batch and its gradient w.r.t. `x_hat`.
fn reconstruction_grad(
    x_hat: &Array2<f64>,
    input: &BranchInput,
    penalty: &PenaltyMatrix,
    nodes: &[NodeId],
) -> (f64, Array2<f64>) {
    let rho_sq = penalty.rho * penalty.rho;
    let mut diff = x_hat.clone();
    let mut weight_rows: Vec<Option<usize>> = vec![None; nodes.len()];
    for (r, &i) in input.positions.iter().enumerate() {
        weight_rows[i] = Some(r);
    }
    let mut loss = 0.0;
    for (i, mut row) in diff.rows_mut().into_iter().enumerate() {
        match weight_rows[i] {
            Some(r) => {
                for (d, &x) in row.iter_mut().zip(input.rows.row(r)) {
                    *d -= x;
                    let w = if x != 0.0 { rho_sq } else { 1.0 };
                    loss += w * *d * *d;
                    *d *= 2.0 * w;
                }
            }
            None => {
                for d in row.iter_mut() {
                    loss += *d * *d;
                    *d *= 2.0;
                }
            }
        }
    }
    (loss, diff)
}

/// Loss and gradient over a set of nodes.
///
/// With `z_ref = None` the batch must be every node and the Laplacian terms
/// use the batch embeddings. Otherwise `z_ref` holds embeddings of all nodes
/// used for the neighbours in the Laplacian gradient, and the regularizer
/// gradient is scaled by `|batch| / N` so that per-batch gradients sum to the
/// full gradient.
fn loss_and_gradient_on(
    params: &ModelParams,
    features: &FeatureSet,
    weights: LossWeights,
    nodes: &[NodeId],
    z_ref: Option<&Array2<f64>>,
) -> Result<(LossBreakdown, GradientSet)> {
    let act = params.activation;
    let n = params.n_nodes();
    if features.n_cascades() != params.n_cascades() || features.n_nodes != n {
        return Err(DceError::Shape(format!(
            "features for N={} M={} but model has N={n} M={}",
            features.n_nodes,
            features.n_cascades(),
            params.n_cascades()
        )));
    }
    let inputs: Vec<BranchInput> = features
        .contexts
        .iter()
        .map(|c| BranchInput::from_context(c, nodes))
        .collect();
    let pass = params.encode_batch(&inputs, nodes.len())?;
    let expanded = params.expand(&pass.z)?;
    let mut grads = GradientSet::zeros_like(params);

    // Decoders.
    let mut recon_loss = 0.0;
    let mut g_expanded = Array2::<f64>::zeros(expanded.dim());
    for m in 0..params.n_cascades() {
        let acts = params.decode_branch(m, &expanded)?;
        let (loss, mut g) = reconstruction_grad(
            acts.last().expect("non-empty decoder"),
            &inputs[m],
            &features.penalties[m],
            nodes,
        );
        recon_loss += loss;
        let branch = &params.decoders[m];
        let depth = branch.len();
        for i in (0..depth).rev() {
            let layer_idx = depth - 1 - i;
            let delta = local_delta(act, g, &acts[i]);
            let input = if i == 0 { &expanded } else { &acts[i - 1] };
            let need = true;
            g = layer_backward(
                &branch[layer_idx],
                &mut grads.0.decoders[m][layer_idx],
                &delta,
                input,
                need,
            )
            .expect("input gradient requested");
        }
        g_expanded += &g;
    }
    let delta = local_delta(act, g_expanded, &expanded);
    let mut g_z = layer_backward(
        &params.expansion,
        &mut grads.0.expansion,
        &delta,
        &pass.z,
        true,
    )
    .expect("requested");

    // Laplacian terms: d/dZ of 2 tr(Z^T L Z) is 4 L Z for symmetric L.
    let (la, ls) = match z_ref {
        None => {
            let lap = &features.laplacians;
            let la_z = lap.affinity_laplacian.dot(&pass.z);
            let ls_z = lap.structural_laplacian.dot(&pass.z);
            g_z.scaled_add(4.0 * weights.alpha, &la_z);
            g_z.scaled_add(4.0 * weights.beta, &ls_z);
            (
                (2.0 * (&pass.z * &la_z).sum()).max(0.0),
                (2.0 * (&pass.z * &ls_z).sum()).max(0.0),
            )
        }
        Some(z_all) => {
            let rows: Vec<usize> = nodes.iter().map(|v| v.0).collect();
            let mut z_all = z_all.clone();
            for (i, &r) in rows.iter().enumerate() {
                z_all.row_mut(r).assign(&pass.z.row(i));
            }
            let lap = &features.laplacians;
            let la_z = lap.affinity_laplacian.select(Axis(0), &rows).dot(&z_all);
            let ls_z = lap.structural_laplacian.select(Axis(0), &rows).dot(&z_all);
            g_z.scaled_add(4.0 * weights.alpha, &la_z);
            g_z.scaled_add(4.0 * weights.beta, &ls_z);
            (0.0, 0.0)
        }
    };

    // Output and fusion layers.
    let delta = local_delta(act, g_z, &pass.z);
    let g_fused = layer_backward(
        &params.output,
        &mut grads.0.output,
        &delta,
        &pass.fused,
        true,
    )
    .expect("requested");
    let delta_fused = local_delta(act, g_fused, &pass.fused);

    // Encoders.
    for m in 0..params.n_cascades() {
        let branch = &params.encoders[m];
        let hidden = &pass.hidden[m];
        let depth = branch.len();
        let mut g = layer_backward(
            &branch[depth - 1],
            &mut grads.0.encoders[m][depth - 1],
            &delta_fused,
            &hidden[depth - 2],
            true,
        )
        .expect("requested");
        for l in (1..depth - 1).rev() {
            let delta = local_delta(act, g, &hidden[l]);
            g = layer_backward(
                &branch[l],
                &mut grads.0.encoders[m][l],
                &delta,
                &hidden[l - 1],
                true,
            )
            .expect("requested");
        }
        let delta = local_delta(act, g, &hidden[0]);
        let grad = &mut grads.0.encoders[m][0];
        grad.bias += &delta.sum_axis(Axis(0));
        if !inputs[m].positions.is_empty() {
            let infected_delta = delta.select(Axis(0), &inputs[m].positions);
            grad.weight += &infected_delta.t().dot(&inputs[m].rows);
        }
    }

    // Regularizer.
    let reg = params.weight_norm_sq();
    let scale = 2.0 * weights.gamma * nodes.len() as f64 / n as f64;
    if scale != 0.0 {
        for (g, p) in grads.0.tensors_mut().into_iter().zip(params.tensors()) {
            if g.is_weight {
                for (gv, pv) in g.values.iter_mut().zip(p.values) {
                    *gv += scale * pv;
                }
            }
        }
    }

    let loss = LossBreakdown::combine(recon_loss, la, ls, reg, weights)?;
    grads.check_finite()?;
    Ok((loss, grads))
}

/// Full-batch loss together with its exact gradient.
pub fn loss_and_gradient(
    params: &ModelParams,
    features: &FeatureSet,
    weights: LossWeights,
) -> Result<(LossBreakdown, GradientSet)> {
    let nodes: Vec<NodeId> = (0..params.n_nodes()).map(NodeId).collect();
    loss_and_gradient_on(params, features, weights, &nodes, None)
}

/// Exact gradient of [`loss_total`] with respect to every parameter.
pub fn backprop(
    params: &ModelParams,
    features: &FeatureSet,
    weights: LossWeights,
) -> Result<GradientSet> {
    loss_and_gradient(params, features, weights).map(|(_, g)| g)
}

/// `theta <- theta - learning_rate * grad` for every tensor.
pub fn sgd_step(params: &mut ModelParams, grads: &GradientSet, learning_rate: f64) {
    for (p, g) in params.tensors_mut().into_iter().zip(grads.0.tensors()) {
        debug_assert_eq!(p.name, g.name);
        for (pv, gv) in p.values.iter_mut().zip(g.values) {
            *pv -= learning_rate * gv;
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Loss at the start of each completed epoch (before its update).
    pub history: Vec<LossBreakdown>,
    /// Loss of the returned parameters.
    pub final_loss: LossBreakdown,
    pub params: ModelParams,
    pub wall_time: Duration,
    pub converged: bool,
}

impl TrainReport {
    pub fn epochs_completed(&self) -> usize {
        self.history.len()
    }

    pub fn initial_loss(&self) -> LossBreakdown {
        self.history.first().copied().unwrap_or(self.final_loss)
    }
}

const CONVERGENCE_WINDOW: usize = 10;
const CONVERGENCE_TOL: f64 = 1e-6;
const DIVERGENCE_FACTOR: f64 = 1e3;

pub fn train(config: &ModelConfig, features: &FeatureSet) -> Result<TrainReport> {
    train_with(config, features, |_, _| {})
}

/// Runs gradient descent from a fresh initialization, calling
/// `on_epoch(epoch, loss)` after each epoch's loss is known.
pub fn train_with(
    config: &ModelConfig,
    features: &FeatureSet,
    mut on_epoch: impl FnMut(usize, &LossBreakdown),
) -> Result<TrainReport> {
    config.validate()?;
    if features.n_nodes != config.n_nodes || features.n_cascades() != config.n_cascades {
        return Err(DceError::Shape(format!(
            "config expects N={} M={}, features have N={} M={}",
            config.n_nodes,
            config.n_cascades,
            features.n_nodes,
            features.n_cascades()
        )));
    }
    let start = Instant::now();
    let weights = LossWeights::from(config);
    let mut params = init_params(config)?;
    let mut history: Vec<LossBreakdown> = Vec::with_capacity(config.epochs);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.rng_seed ^ 0x5eed_5eed);
    let mut order: Vec<NodeId> = (0..config.n_nodes).map(NodeId).collect();
    let mut converged = false;

    for epoch in 0..config.epochs {
        let loss = match config.descent {
            DescentMode::FullBatch => {
                let (loss, grads) = loss_and_gradient(&params, features, weights)?;
                check_divergence(epoch, &loss, history.first())?;
                sgd_step(&mut params, &grads, config.learning_rate);
                loss
            }
            DescentMode::Stochastic { batch_size } => {
                let loss = loss_total(&params, features, weights)?;
                check_divergence(epoch, &loss, history.first())?;
                let z_ref = crate::model::embed(&params, &features.contexts)?.0;
                order.shuffle(&mut shuffle_rng);
                for batch in order.chunks(batch_size) {
                    let (_, grads) =
                        loss_and_gradient_on(&params, features, weights, batch, Some(&z_ref))?;
                    sgd_step(&mut params, &grads, config.learning_rate);
                }
                loss
            }
        };
        on_epoch(epoch, &loss);
        history.push(loss);
        if history.len() > CONVERGENCE_WINDOW {
            let now = loss.total;
            let then = history[history.len() - 1 - CONVERGENCE_WINDOW].total;
            if now > 0.0 && ((now - then) / now).abs() < CONVERGENCE_TOL {
                converged = true;
                break;
            }
        }
    }
    let final_loss = loss_total(&params, features, weights)?;
    if let Some(first) = history.first() {
        check_divergence(history.len(), &final_loss, Some(first))?;
    }
    Ok(TrainReport {
        history,
        final_loss,
        params,
        wall_time: start.elapsed(),
        converged,
    })
}

fn check_divergence(
    epoch: usize,
    loss: &LossBreakdown,
    initial: Option<&LossBreakdown>,
) -> Result<()> {
    match initial {
        Some(init) if loss.total > DIVERGENCE_FACTOR * init.total => Err(DceError::Diverged {
            epoch,
            loss: loss.total,
            initial: init.total,
        }),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub name: String,
    pub max_relative_error: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone)]
pub struct FiniteDifferenceReport {
    pub tensors: Vec<TensorCheck>,
    pub tolerance: f64,
}

impl FiniteDifferenceReport {
    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| !t.flagged)
    }

    pub fn worst(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_relative_error)
            .fold(0.0, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<&TensorCheck> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

pub const FD_STEP: f64 = 1e-5;

/// `|a - b| / (|a| + |b| + 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-12)
}

/// Compares [`backprop`] against central differences on every parameter.
pub fn finite_difference_check(
    params: &ModelParams,
    features: &FeatureSet,
    weights: LossWeights,
    tolerance: f64,
) -> Result<FiniteDifferenceReport> {
    let grads = backprop(params, features, weights)?;
    finite_difference_check_against(params, features, weights, &grads, tolerance)
}

/// Compares a supplied gradient against central differences. A tensor is
/// flagged when its worst relative error is not below `tolerance`.
pub fn finite_difference_check_against(
    params: &ModelParams,
    features: &FeatureSet,
    weights: LossWeights,
    grads: &GradientSet,
    tolerance: f64,
) -> Result<FiniteDifferenceReport> {
    let mut probe = params.clone();
    let names: Vec<(String, usize)> = params
        .tensors()
        .into_iter()
        .map(|t| (t.name, t.values.len()))
        .collect();
    let analytic: Vec<Vec<f64>> = grads
        .0
        .tensors()
        .into_iter()
        .map(|t| t.values.to_vec())
        .collect();
    let mut tensors = Vec::with_capacity(names.len());
    for (k, (name, len)) in names.into_iter().enumerate() {
        let mut worst = 0.0f64;
        for i in 0..len {
            let original = params.tensors()[k].values[i];
            probe.tensors_mut()[k].values[i] = original + FD_STEP;
            let plus = loss_total(&probe, features, weights)?.total;
            probe.tensors_mut()[k].values[i] = original - FD_STEP;
            let minus = loss_total(&probe, features, weights)?.total;
            probe.tensors_mut()[k].values[i] = original;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(analytic[k][i], numeric));
        }
        tensors.push(TensorCheck {
            name,
            max_relative_error: worst,
            flagged: !(worst < tolerance),
        });
    }
    Ok(FiniteDifferenceReport { tensors, tolerance })
}
