//! The collaborative autoencoder: one encoder/decoder branch per training
//! cascade, a shared fusion into the node embedding, and a shared expansion
//! back out of it.
//!
//! Layer indices follow the usual convention for this architecture. For cascade
//! `m`, encoder layer `l` (1-based) maps width `h[l-1]` to `h[l]` with
//! `h[0] = N`, and encoder layer `L+1` maps `h[L]` into the fusion width. The
//! fusion pre-activation is the sum of all branches' layer `L+1` outputs. The
//! shared output layer maps the fusion width to `d`. Decoder layer `l` is the
//! transposed mirror of encoder layer `l`.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cascade::NodeId;
use crate::error::{DceError, Result};
use crate::features::CascadingContextMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = DceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            other => Err(DceError::InvalidArgument(format!(
                "unknown activation `{other}`"
            ))),
        }
    }
}

/// How the training loop forms its gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescentMode {
    /// One update per epoch from the gradient over every node.
    FullBatch,
    /// Shuffled node mini-batches; `batch_size = 1` is per-node SGD.
    Stochastic { batch_size: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub n_nodes: usize,
    pub n_cascades: usize,
    pub embedding_dim: usize,
    /// Encoder hidden widths `h[1..=L]`.
    pub hidden_widths: Vec<usize>,
    pub fusion_width: usize,
    /// Context decay; `None` uses the mean inter-infection gap.
    pub tau: Option<f64>,
    pub rho: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub rng_seed: u64,
    pub activation: Activation,
    pub descent: DescentMode,
}

impl ModelConfig {
    /// One hidden layer of width `min(256, N)`, fusion of the same width, `d = 16`.
    pub fn desk_default(n_nodes: usize, n_cascades: usize) -> Self {
        let width = n_nodes.min(256);
        ModelConfig {
            n_nodes,
            n_cascades,
            embedding_dim: 16.min(width),
            hidden_widths: vec![width],
            fusion_width: width,
            tau: None,
            rho: 5.0,
            alpha: 0.4,
            beta: 0.4,
            gamma: 0.002,
            learning_rate: 0.05,
            epochs: 500,
            rng_seed: 0,
            activation: Activation::Sigmoid,
            descent: DescentMode::FullBatch,
        }
    }

    pub fn n_hidden_layers(&self) -> usize {
        self.hidden_widths.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DceError::InvalidArgument(msg));
        if self.n_nodes == 0 || self.n_cascades == 0 {
            return bad(format!(
                "need nodes and cascades, got N={} M={}",
                self.n_nodes, self.n_cascades
            ));
        }
        if self.hidden_widths.is_empty() {
            return bad("at least one hidden layer is required".into());
        }
        let mut prev = self.n_nodes;
        for (l, &w) in self.hidden_widths.iter().enumerate() {
            if w == 0 || w > prev {
                return bad(format!(
                    "hidden width {w} at layer {} must be in 1..={prev}",
                    l + 1
                ));
            }
            prev = w;
        }
        if self.fusion_width == 0 {
            return bad("fusion width must be positive".into());
        }
        if self.embedding_dim == 0 || self.embedding_dim > prev {
            return bad(format!(
                "embedding dim {} must be in 1..={prev}",
                self.embedding_dim
            ));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be nonnegative, got {v}"));
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !(self.rho.is_finite() && self.rho > 1.0) {
            return bad(format!("rho must exceed 1, got {}", self.rho));
        }
        if let Some(tau) = self.tau {
            if !(tau.is_finite() && tau > 0.0) {
                return bad(format!("tau must be positive, got {tau}"));
            }
        }
        if let DescentMode::Stochastic { batch_size: 0 } = self.descent {
            return bad("batch size must be positive".into());
        }
        Ok(())
    }
}

/// Dense layer `y = act(W x + b)` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Layer {
            weight: Array2::zeros((fan_out, fan_in)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn glorot(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Layer {
            weight: Array2::from_shape_simple_fn((fan_out, fan_in), || {
                rng.gen_range(-limit..=limit)
            }),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.nrows()
    }

    fn zeros_like(&self) -> Self {
        Layer::zeros(self.fan_in(), self.fan_out())
    }

    /// Pre-activation for a batch of row inputs: `X W^T + b`.
    fn pre(&self, input: &Array2<f64>) -> Array2<f64> {
        let mut out = input.dot(&self.weight.t());
        out += &self.bias;
        out
    }
}

/// All learnable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub activation: Activation,
    /// `encoders[m][l-1]` is encoder layer `l` of cascade `m`, `l = 1..=L+1`.
    pub encoders: Vec<Vec<Layer>>,
    /// Shared fusion-to-embedding layer.
    pub output: Layer,
    /// Shared embedding-to-fusion layer.
    pub expansion: Layer,
    /// `decoders[m][l-1]` mirrors `encoders[m][l-1]` (maps `h[l]` back to `h[l-1]`).
    pub decoders: Vec<Vec<Layer>>,
}

/// Borrowed view of one parameter tensor.
pub struct Tensor<'a> {
    pub name: String,
    pub is_weight: bool,
    pub rows: usize,
    pub cols: usize,
    pub values: &'a [f64],
}

pub struct TensorMut<'a> {
    pub name: String,
    pub is_weight: bool,
    pub values: &'a mut [f64],
}

/// Xavier/Glorot-uniform weights, zero biases, deterministic in `rng_seed`.
pub fn init_params(config: &ModelConfig) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut widths = vec![config.n_nodes];
    widths.extend(&config.hidden_widths);
    widths.push(config.fusion_width);
    let mut encoders = Vec::with_capacity(config.n_cascades);
    for _ in 0..config.n_cascades {
        encoders.push(
            widths
                .windows(2)
                .map(|w| Layer::glorot(w[0], w[1], &mut rng))
                .collect(),
        );
    }
    let output = Layer::glorot(config.fusion_width, config.embedding_dim, &mut rng);
    let expansion = Layer::glorot(config.embedding_dim, config.fusion_width, &mut rng);
    let mut decoders = Vec::with_capacity(config.n_cascades);
    for _ in 0..config.n_cascades {
        decoders.push(
            widths
                .windows(2)
                .map(|w| Layer::glorot(w[1], w[0], &mut rng))
                .collect(),
        );
    }
    Ok(ModelParams {
        activation: config.activation,
        encoders,
        output,
        expansion,
        decoders,
    })
}

impl ModelParams {
    pub fn n_cascades(&self) -> usize {
        self.encoders.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.encoders[0][0].fan_in()
    }

    pub fn embedding_dim(&self) -> usize {
        self.output.fan_out()
    }

    pub fn fusion_width(&self) -> usize {
        self.output.fan_in()
    }

    /// Hidden widths `h[1..=L]`.
    pub fn hidden_widths(&self) -> Vec<usize> {
        let layers = &self.encoders[0];
        layers[..layers.len() - 1]
            .iter()
            .map(Layer::fan_out)
            .collect()
    }

    pub fn zeros_like(&self) -> Self {
        let zero = |branches: &Vec<Vec<Layer>>| {
            branches
                .iter()
                .map(|b| b.iter().map(Layer::zeros_like).collect())
                .collect()
        };
        ModelParams {
            activation: self.activation,
            encoders: zero(&self.encoders),
            output: self.output.zeros_like(),
            expansion: self.expansion.zeros_like(),
            decoders: zero(&self.decoders),
        }
    }

    /// Checks that every layer's widths chain into the next.
    pub fn check_shapes(&self) -> Result<()> {
        let m = self.encoders.len();
        if m == 0 || self.decoders.len() != m {
            return Err(DceError::Shape(format!(
                "{m} encoders vs {} decoders",
                self.decoders.len()
            )));
        }
        let chain = |layers: &[Layer]| layers.windows(2).all(|w| w[0].fan_out() == w[1].fan_in());
        let reference: Vec<(usize, usize)> = self.encoders[0]
            .iter()
            .map(|l| (l.fan_in(), l.fan_out()))
            .collect();
        for (k, (enc, dec)) in self.encoders.iter().zip(&self.decoders).enumerate() {
            let shape: Vec<(usize, usize)> =
                enc.iter().map(|l| (l.fan_in(), l.fan_out())).collect();
            let mirrored: Vec<(usize, usize)> =
                dec.iter().map(|l| (l.fan_out(), l.fan_in())).collect();
            if shape != reference || mirrored != reference || !chain(enc) {
                return Err(DceError::Shape(format!(
                    "branch {k} does not match branch 0"
                )));
            }
            if enc.iter().chain(dec).any(|l| l.bias.len() != l.fan_out()) {
                return Err(DceError::Shape(format!("branch {k} bias length mismatch")));
            }
        }
        let fusion = reference.last().map(|s| s.1).unwrap_or(0);
        if self.output.fan_in() != fusion
            || self.expansion.fan_out() != fusion
            || self.expansion.fan_in() != self.output.fan_out()
        {
            return Err(DceError::Shape(
                "shared layers do not match the fusion width".into(),
            ));
        }
        Ok(())
    }

    fn named_layers(&self) -> Vec<(String, &Layer)> {
        let mut out = Vec::new();
        for (m, branch) in self.encoders.iter().enumerate() {
            for (l, layer) in branch.iter().enumerate() {
                out.push((format!("enc.{m}.{}", l + 1), layer));
            }
        }
        out.push(("out".to_string(), &self.output));
        out.push(("exp".to_string(), &self.expansion));
        for (m, branch) in self.decoders.iter().enumerate() {
            for (l, layer) in branch.iter().enumerate() {
                out.push((format!("dec.{m}.{}", l + 1), layer));
            }
        }
        out
    }

    fn named_layers_mut(&mut self) -> Vec<(String, &mut Layer)> {
        let mut out = Vec::new();
        for (m, branch) in self.encoders.iter_mut().enumerate() {
            for (l, layer) in branch.iter_mut().enumerate() {
                out.push((format!("enc.{m}.{}", l + 1), layer));
            }
        }
        out.push(("out".to_string(), &mut self.output));
        out.push(("exp".to_string(), &mut self.expansion));
        for (m, branch) in self.decoders.iter_mut().enumerate() {
            for (l, layer) in branch.iter_mut().enumerate() {
                out.push((format!("dec.{m}.{}", l + 1), layer));
            }
        }
        out
    }

    /// Every tensor in a fixed order: weights as `<layer>.W`, biases as `<layer>.b`.
    pub fn tensors(&self) -> Vec<Tensor<'_>> {
        let mut out = Vec::new();
        for (name, layer) in self.named_layers() {
            out.push(Tensor {
                name: format!("{name}.W"),
                is_weight: true,
                rows: layer.weight.nrows(),
                cols: layer.weight.ncols(),
                values: layer.weight.as_slice().expect("standard layout"),
            });
            out.push(Tensor {
                name: format!("{name}.b"),
                is_weight: false,
                rows: layer.bias.len(),
                cols: 1,
                values: layer.bias.as_slice().expect("standard layout"),
            });
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = Vec::new();
        for (name, layer) in self.named_layers_mut() {
            let Layer { weight, bias } = layer;
            out.push(TensorMut {
                name: format!("{name}.W"),
                is_weight: true,
                values: weight.as_slice_mut().expect("standard layout"),
            });
            out.push(TensorMut {
                name: format!("{name}.b"),
                is_weight: false,
                values: bias.as_slice_mut().expect("standard layout"),
            });
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.values.len()).sum()
    }

    /// Sum of squared Frobenius norms of all weight matrices (biases excluded).
    pub fn weight_norm_sq(&self) -> f64 {
        self.tensors()
            .iter()
            .filter(|t| t.is_weight)
            .map(|t| t.values.iter().map(|w| w * w).sum::<f64>())
            .sum()
    }
}

/// `N x d` learned embeddings; row `v` is node `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix(pub Array2<f64>);

impl EmbeddingMatrix {
    pub fn n_nodes(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn row(&self, v: NodeId) -> ArrayView1<'_, f64> {
        self.0.row(v.0)
    }
}

/// Sparse batch input for one branch: `rows` holds the inputs of the batch
/// positions listed in `positions`; every other position is a zero vector.
pub(crate) struct BranchInput {
    pub positions: Vec<usize>,
    pub rows: Array2<f64>,
}

impl BranchInput {
    /// Gathers the context rows of `nodes` from a compressed context matrix.
    pub(crate) fn from_context(context: &CascadingContextMatrix, nodes: &[NodeId]) -> Self {
        let stored = context.stored_values();
        let mut positions = Vec::new();
        let mut src = Vec::new();
        for (i, &v) in nodes.iter().enumerate() {
            if let Some(r) = context.stored_row(v) {
                positions.push(i);
                src.push(r);
            }
        }
        let rows = stored.select(Axis(0), &src);
        BranchInput { positions, rows }
    }
}

/// Encoder activations for a batch, kept for backpropagation.
pub(crate) struct EncoderPass {
    /// `hidden[m][l-1]` is `y^(m,l)` for `l = 1..=L` (`B x h[l]`).
    pub hidden: Vec<Vec<Array2<f64>>>,
    /// `y^(L+1)` (`B x fusion`).
    pub fused: Array2<f64>,
    /// `B x d`.
    pub z: Array2<f64>,
}

fn check_finite(values: &Array2<f64>, what: impl FnOnce() -> String) -> Result<()> {
    if values.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(DceError::NonFinite(what()))
    }
}

impl ModelParams {
    pub(crate) fn activate(&self, mut pre: Array2<f64>) -> Array2<f64> {
        let act = self.activation;
        pre.mapv_inplace(|x| act.apply(x));
        pre
    }

    pub(crate) fn encode_batch(&self, inputs: &[BranchInput], batch: usize) -> Result<EncoderPass> {
        if inputs.len() != self.n_cascades() {
            return Err(DceError::Shape(format!(
                "{} inputs for {} branches",
                inputs.len(),
                self.n_cascades()
            )));
        }
        let n = self.n_nodes();
        let mut hidden = Vec::with_capacity(inputs.len());
        let mut fused_pre = Array2::<f64>::zeros((batch, self.fusion_width()));
        for (m, (branch, input)) in self.encoders.iter().zip(inputs).enumerate() {
            if input.rows.ncols() != n {
                return Err(DceError::Shape(format!(
                    "cascade {m}: input width {} != {n}",
                    input.rows.ncols()
                )));
            }
            let first = &branch[0];
            let mut pre = Array2::from_shape_fn((batch, first.fan_out()), |(_, j)| first.bias[j]);
            if !input.positions.is_empty() {
                let partial = input.rows.dot(&first.weight.t());
                for (r, &i) in input.positions.iter().enumerate() {
                    let mut row = pre.row_mut(i);
                    row += &partial.row(r);
                }
            }
            let mut y = self.activate(pre);
            check_finite(&y, || format!("encoder layer 1 of cascade {m}"))?;
            let mut layers = vec![y.clone()];
            let depth = branch.len();
            for (l, layer) in branch[1..depth - 1].iter().enumerate() {
                y = self.activate(layer.pre(&y));
                check_finite(&y, || format!("encoder layer {} of cascade {m}", l + 2))?;
                layers.push(y.clone());
            }
            fused_pre += &branch[depth - 1].pre(&y);
            check_finite(&fused_pre, || format!("fusion input from cascade {m}"))?;
            hidden.push(layers);
        }
        let fused = self.activate(fused_pre);
        let z = self.activate(self.output.pre(&fused));
        check_finite(&z, || "embedding output layer".to_string())?;
        Ok(EncoderPass { hidden, fused, z })
    }

    /// Shared expansion `y_hat^(L+1)` from embeddings.
    pub(crate) fn expand(&self, z: &Array2<f64>) -> Result<Array2<f64>> {
        let expanded = self.activate(self.expansion.pre(z));
        check_finite(&expanded, || "decoder expansion layer".to_string())?;
        Ok(expanded)
    }

    /// Runs branch `m`'s decoder, returning activations from the
    /// expansion down: `[y_hat^(m,L), ..., y_hat^(m,1), x_hat^(m)]`.
    pub(crate) fn decode_branch(
        &self,
        m: usize,
        expanded: &Array2<f64>,
    ) -> Result<Vec<Array2<f64>>> {
        let branch = &self.decoders[m];
        let mut acts = Vec::with_capacity(branch.len());
        let mut y = expanded;
        for (l, layer) in branch.iter().enumerate().rev() {
            let out = self.activate(layer.pre(y));
            check_finite(&out, || format!("decoder layer {} of cascade {m}", l + 1))?;
            acts.push(out);
            y = acts.last().expect("just pushed");
        }
        Ok(acts)
    }
}

/// Encodes one node from its `M` context rows. Returns the intermediate
/// embeddings `y^(m,L)` of every branch and the fused embedding `z`.
pub fn encode(
    params: &ModelParams,
    contexts: &[ArrayView1<'_, f64>],
) -> Result<(Vec<Array1<f64>>, Array1<f64>)> {
    let inputs: Vec<BranchInput> = contexts
        .iter()
        .map(|row| BranchInput {
            positions: vec![0],
            rows: row.to_owned().insert_axis(Axis(0)),
        })
        .collect();
    let pass = params.encode_batch(&inputs, 1)?;
    let intermediates = pass
        .hidden
        .iter()
        .map(|layers| layers.last().expect("L >= 1").row(0).to_owned())
        .collect();
    Ok((intermediates, pass.z.row(0).to_owned()))
}

/// Reconstructs the `M` context rows of one node from its embedding.
pub fn decode(params: &ModelParams, z: ArrayView1<'_, f64>) -> Result<Vec<Array1<f64>>> {
    if z.len() != params.embedding_dim() {
        return Err(DceError::Shape(format!(
            "embedding width {} != {}",
            z.len(),
            params.embedding_dim()
        )));
    }
    let expanded = params.expand(&z.to_owned().insert_axis(Axis(0)))?;
    (0..params.n_cascades())
        .map(|m| {
            let acts = params.decode_branch(m, &expanded)?;
            Ok(acts.last().expect("non-empty decoder").row(0).to_owned())
        })
        .collect()
}

/// Batched forward pass over every node: embeddings plus every branch's reconstruction.
pub fn forward_all(
    params: &ModelParams,
    contexts: &[CascadingContextMatrix],
) -> Result<(EmbeddingMatrix, Vec<Array2<f64>>)> {
    let nodes: Vec<NodeId> = (0..params.n_nodes()).map(NodeId).collect();
    let z = embed_nodes(params, contexts, &nodes)?;
    let expanded = params.expand(&z)?;
    let recon = (0..params.n_cascades())
        .map(|m| {
            params
                .decode_branch(m, &expanded)
                .map(|mut acts| acts.pop().expect("non-empty decoder"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((EmbeddingMatrix(z), recon))
}

/// Embeddings of the given nodes only.
pub fn embed_nodes(
    params: &ModelParams,
    contexts: &[CascadingContextMatrix],
    nodes: &[NodeId],
) -> Result<Array2<f64>> {
    if contexts.len() != params.n_cascades() {
        return Err(DceError::Shape(format!(
            "{} contexts for {} branches",
            contexts.len(),
            params.n_cascades()
        )));
    }
    let inputs: Vec<BranchInput> = contexts
        .iter()
        .map(|c| BranchInput::from_context(c, nodes))
        .collect();
    Ok(params.encode_batch(&inputs, nodes.len())?.z)
}

/// Embeddings of all nodes.
pub fn embed(params: &ModelParams, contexts: &[CascadingContextMatrix]) -> Result<EmbeddingMatrix> {
    let nodes: Vec<NodeId> = (0..params.n_nodes()).map(NodeId).collect();
    embed_nodes(params, contexts, &nodes).map(EmbeddingMatrix)
}
