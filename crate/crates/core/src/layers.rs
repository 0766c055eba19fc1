//! Encoders, pooling, the sigmoid classifier and the multi-label loss.
//!
//! Sequences are `[T × d]` matrices whose rows are time steps; pooled
//! outputs and label scores are rank-1 vectors. Every function records its
//! computation on a [`Graph`] and returns the output node.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::{Activation, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Dense,
    Gru,
    #[serde(rename = "bigru")]
    BiGru,
}

impl EncoderKind {
    /// Output width for a hidden size of `hidden`.
    pub fn output_dim(self, hidden: usize) -> usize {
        match self {
            EncoderKind::BiGru => 2 * hidden,
            _ => hidden,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EncoderKind::Dense => "dense",
            EncoderKind::Gru => "gru",
            EncoderKind::BiGru => "bigru",
        }
    }
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dense" => Ok(EncoderKind::Dense),
            "gru" => Ok(EncoderKind::Gru),
            "bigru" => Ok(EncoderKind::BiGru),
            other => Err(Error::Config(format!("unknown encoder `{other}`"))),
        }
    }
}

/// Uniform Glorot initialization for a `[fan_in × fan_out]` matrix.
pub(crate) fn glorot<S: Scalar, R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor<S> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| S::of(rng.gen_range(-limit..limit))).collect();
    Tensor::new(shape.to_vec(), data).expect("glorot shape is valid")
}

fn add_matrix<S: Scalar, R: Rng>(
    store: &mut ParamStore<S>,
    rng: &mut R,
    name: String,
    rows: usize,
    cols: usize,
) -> Result<ParamId> {
    store.add(name, glorot(rng, &[rows, cols], rows, cols))
}

fn add_bias<S: Scalar>(store: &mut ParamStore<S>, name: String, n: usize) -> Result<ParamId> {
    store.add(name, Tensor::zeros(&[n]))
}

fn check_dims(input: usize, hidden: usize) -> Result<()> {
    if input == 0 || hidden == 0 {
        return Err(Error::Config(format!(
            "layer dimensions must be positive, got {input}×{hidden}"
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DenseParams {
    pub w: ParamId,
    pub b: ParamId,
}

/// Weights of one GRU direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GruParams {
    pub w_z: ParamId,
    pub w_r: ParamId,
    pub w_h: ParamId,
    pub u_z: ParamId,
    pub u_r: ParamId,
    pub u_h: ParamId,
    pub b_z: ParamId,
    pub b_r: ParamId,
    pub b_h: ParamId,
}

impl GruParams {
    fn build<S: Scalar, R: Rng>(
        store: &mut ParamStore<S>,
        rng: &mut R,
        prefix: &str,
        input: usize,
        hidden: usize,
    ) -> Result<Self> {
        Ok(GruParams {
            w_z: add_matrix(store, rng, format!("{prefix}.W_z"), input, hidden)?,
            w_r: add_matrix(store, rng, format!("{prefix}.W_r"), input, hidden)?,
            w_h: add_matrix(store, rng, format!("{prefix}.W_h"), input, hidden)?,
            u_z: add_matrix(store, rng, format!("{prefix}.U_z"), hidden, hidden)?,
            u_r: add_matrix(store, rng, format!("{prefix}.U_r"), hidden, hidden)?,
            u_h: add_matrix(store, rng, format!("{prefix}.U_h"), hidden, hidden)?,
            b_z: add_bias(store, format!("{prefix}.b_z"), hidden)?,
            b_r: add_bias(store, format!("{prefix}.b_r"), hidden)?,
            b_h: add_bias(store, format!("{prefix}.b_h"), hidden)?,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![
            self.w_z, self.w_r, self.w_h, self.u_z, self.u_r, self.u_h, self.b_z, self.b_r, self.b_h,
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderWeights {
    Dense(DenseParams),
    Gru(GruParams),
    BiGru { forward: GruParams, backward: GruParams },
}

/// A word- or sentence-level encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub weights: EncoderWeights,
}

impl EncoderParams {
    pub fn build<S: Scalar, R: Rng>(
        store: &mut ParamStore<S>,
        rng: &mut R,
        prefix: &str,
        kind: EncoderKind,
        input_dim: usize,
        hidden_dim: usize,
    ) -> Result<Self> {
        check_dims(input_dim, hidden_dim)?;
        let weights = match kind {
            EncoderKind::Dense => EncoderWeights::Dense(DenseParams {
                w: add_matrix(store, rng, format!("{prefix}.W"), input_dim, hidden_dim)?,
                b: add_bias(store, format!("{prefix}.b"), hidden_dim)?,
            }),
            EncoderKind::Gru => EncoderWeights::Gru(GruParams::build(store, rng, prefix, input_dim, hidden_dim)?),
            EncoderKind::BiGru => EncoderWeights::BiGru {
                forward: GruParams::build(store, rng, &format!("{prefix}.fwd"), input_dim, hidden_dim)?,
                backward: GruParams::build(store, rng, &format!("{prefix}.bwd"), input_dim, hidden_dim)?,
            },
        };
        Ok(EncoderParams {
            input_dim,
            hidden_dim,
            weights,
        })
    }

    pub fn kind(&self) -> EncoderKind {
        match self.weights {
            EncoderWeights::Dense(_) => EncoderKind::Dense,
            EncoderWeights::Gru(_) => EncoderKind::Gru,
            EncoderWeights::BiGru { .. } => EncoderKind::BiGru,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.kind().output_dim(self.hidden_dim)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        match &self.weights {
            EncoderWeights::Dense(p) => vec![p.w, p.b],
            EncoderWeights::Gru(p) => p.param_ids(),
            EncoderWeights::BiGru { forward, backward } => {
                let mut ids = forward.param_ids();
                ids.extend(backward.param_ids());
                ids
            }
        }
    }
}

/// Attention scorer `v_t = act(h_t·W + b)`, `logit_t = v_t·u`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionParams {
    pub w: ParamId,
    pub b: ParamId,
    pub context: ParamId,
}

impl AttentionParams {
    pub fn build<S: Scalar, R: Rng>(
        store: &mut ParamStore<S>,
        rng: &mut R,
        prefix: &str,
        input_dim: usize,
        attention_dim: usize,
    ) -> Result<Self> {
        check_dims(input_dim, attention_dim)?;
        Ok(AttentionParams {
            w: add_matrix(store, rng, format!("{prefix}.W"), input_dim, attention_dim)?,
            b: add_bias(store, format!("{prefix}.b"), attention_dim)?,
            context: store.add(format!("{prefix}.u"), glorot(rng, &[attention_dim], attention_dim, 1))?,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.w, self.b, self.context]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClassifierParams {
    pub w: ParamId,
    pub b: ParamId,
}

impl ClassifierParams {
    pub fn build<S: Scalar, R: Rng>(
        store: &mut ParamStore<S>,
        rng: &mut R,
        prefix: &str,
        input_dim: usize,
        num_labels: usize,
    ) -> Result<Self> {
        check_dims(input_dim, num_labels)?;
        Ok(ClassifierParams {
            w: add_matrix(store, rng, format!("{prefix}.W"), input_dim, num_labels)?,
            b: add_bias(store, format!("{prefix}.b"), num_labels)?,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.w, self.b]
    }
}

/// Number of leading `true` entries; errors unless the mask is a prefix mask.
pub fn prefix_len(mask: &[bool]) -> Result<usize> {
    let len = mask.iter().take_while(|&&m| m).count();
    if mask[len..].iter().any(|&m| m) {
        return Err(Error::Contract(format!("mask is not prefix-valid: {mask:?}")));
    }
    Ok(len)
}

fn rows_of<S: Scalar>(g: &Graph<'_, S>, x: NodeId, op: &'static str) -> Result<(usize, usize)> {
    match g.shape(x) {
        [t, d] => Ok((*t, *d)),
        s => Err(Error::dim(op, s, &[])),
    }
}

/// `relu(x_t·W + b)` (or another activation) applied to every row.
pub fn dense_encode<S: Scalar>(g: &mut Graph<'_, S>, x: NodeId, p: &DenseParams, act: Activation) -> Result<NodeId> {
    let w = g.param(p.w);
    let b = g.param(p.b);
    let xw = g.matmul(x, w)?;
    let pre = g.add_row(xw, b)?;
    g.activation(pre, act)
}

/// Runs a GRU over the valid prefix of `x`; padded steps repeat the last state.
pub fn gru_encode<S: Scalar>(g: &mut Graph<'_, S>, x: NodeId, p: &GruParams, mask: &[bool]) -> Result<NodeId> {
    let (t_max, _) = rows_of(g, x, "gru_encode")?;
    if mask.len() != t_max {
        return Err(Error::dim("gru_encode", g.shape(x), &[mask.len()]));
    }
    let valid = prefix_len(mask)?;
    let hidden = g.store().get(p.u_z).shape()[0];
    let h0 = g.input(Tensor::zeros(&[1, hidden]))?;
    if valid == 0 {
        let rows = vec![h0; t_max];
        return g.stack_rows(&rows);
    }

    let gate_inputs = |g: &mut Graph<'_, S>, w: ParamId, b: ParamId| -> Result<NodeId> {
        let w = g.param(w);
        let b = g.param(b);
        let xw = g.matmul(x, w)?;
        g.add_row(xw, b)
    };
    let xz = gate_inputs(g, p.w_z, p.b_z)?;
    let xr = gate_inputs(g, p.w_r, p.b_r)?;
    let xh = gate_inputs(g, p.w_h, p.b_h)?;
    let (u_z, u_r, u_h) = (g.param(p.u_z), g.param(p.u_r), g.param(p.u_h));

    let mut h = h0;
    let mut states = Vec::with_capacity(t_max);
    for t in 0..valid {
        let xz_t = g.gather_rows(xz, &[t])?;
        let hz = g.matmul(h, u_z)?;
        let z_pre = g.add(xz_t, hz)?;
        let z = g.activation(z_pre, Activation::Sigmoid)?;

        let xr_t = g.gather_rows(xr, &[t])?;
        let hr = g.matmul(h, u_r)?;
        let r_pre = g.add(xr_t, hr)?;
        let r = g.activation(r_pre, Activation::Sigmoid)?;

        let xh_t = g.gather_rows(xh, &[t])?;
        let rh = g.mul(r, h)?;
        let rhu = g.matmul(rh, u_h)?;
        let cand_pre = g.add(xh_t, rhu)?;
        let cand = g.activation(cand_pre, Activation::Tanh)?;

        let keep = g.one_minus(z)?;
        let old = g.mul(keep, h)?;
        let new = g.mul(z, cand)?;
        h = g.add(old, new)?;
        states.push(h);
    }
    states.resize(t_max, h);
    g.stack_rows(&states)
}

/// Forward GRU states concatenated with backward GRU states (run over the
/// reversed valid prefix). Padded rows carry zeros in the backward half.
pub fn bigru_encode<S: Scalar>(
    g: &mut Graph<'_, S>,
    x: NodeId,
    forward: &GruParams,
    backward: &GruParams,
    mask: &[bool],
) -> Result<NodeId> {
    let (t_max, _) = rows_of(g, x, "bigru_encode")?;
    if mask.len() != t_max {
        return Err(Error::dim("bigru_encode", g.shape(x), &[mask.len()]));
    }
    let valid = prefix_len(mask)?;
    let fwd = gru_encode(g, x, forward, mask)?;
    let hidden = g.store().get(backward.u_z).shape()[0];
    let bwd = if valid == 0 {
        g.input(Tensor::zeros(&[t_max, hidden]))?
    } else {
        let rev: Vec<usize> = (0..valid).rev().collect();
        let x_rev = g.gather_rows(x, &rev)?;
        let states_rev = gru_encode(g, x_rev, backward, &vec![true; valid])?;
        let states = g.gather_rows(states_rev, &rev)?;
        if valid < t_max {
            let pad = g.input(Tensor::zeros(&[t_max - valid, hidden]))?;
            g.stack_rows(&[states, pad])?
        } else {
            states
        }
    };
    g.concat_cols(fwd, bwd)
}

/// Dispatches on the encoder kind. `act` applies to dense encoders only.
pub fn encode<S: Scalar>(
    g: &mut Graph<'_, S>,
    x: NodeId,
    p: &EncoderParams,
    mask: &[bool],
    act: Activation,
) -> Result<NodeId> {
    let (_, d) = rows_of(g, x, "encode")?;
    if d != p.input_dim {
        return Err(Error::dim("encode", g.shape(x), &[p.input_dim, p.hidden_dim]));
    }
    match &p.weights {
        EncoderWeights::Dense(d) => dense_encode(g, x, d, act),
        EncoderWeights::Gru(gp) => gru_encode(g, x, gp, mask),
        EncoderWeights::BiGru { forward, backward } => bigru_encode(g, x, forward, backward, mask),
    }
}

/// Result of attention pooling.
#[derive(Clone, Copy, Debug)]
pub struct Pooled {
    /// `[d_enc]` pooled vector.
    pub output: NodeId,
    /// `[T]` attention weights, exactly zero at padded positions.
    pub weights: NodeId,
}

fn effective_len(mask: &[bool], op: &'static str) -> Result<usize> {
    match mask.iter().filter(|&&m| m).count() {
        0 => Err(Error::EmptySequence(op)),
        n => Ok(n),
    }
}

/// Attention-weighted sum of the rows of `h`. With `strict_scaling` the sum
/// is additionally multiplied by `1/T_eff`.
pub fn attention_pool<S: Scalar>(
    g: &mut Graph<'_, S>,
    h: NodeId,
    a: &AttentionParams,
    mask: &[bool],
    strict_scaling: bool,
    act: Activation,
) -> Result<Pooled> {
    let (t, _) = rows_of(g, h, "attention_pool")?;
    if mask.len() != t {
        return Err(Error::dim("attention_pool", g.shape(h), &[mask.len()]));
    }
    let t_eff = effective_len(mask, "attention_pool: no valid positions")?;
    let (w, b, u) = (g.param(a.w), g.param(a.b), g.param(a.context));
    let hw = g.matmul(h, w)?;
    let pre = g.add_row(hw, b)?;
    let v = g.activation(pre, act)?;
    let logits = g.matvec(v, u)?;
    let weights = g.masked_softmax(logits, mask)?;
    let mut output = g.vecmat(weights, h)?;
    if strict_scaling && t_eff > 1 {
        output = g.scale(output, S::one() / S::from_usize(t_eff).unwrap())?;
    }
    Ok(Pooled { output, weights })
}

/// Mean of the valid rows of `h`.
pub fn average_pool<S: Scalar>(g: &mut Graph<'_, S>, h: NodeId, mask: &[bool]) -> Result<NodeId> {
    let (t, _) = rows_of(g, h, "average_pool")?;
    if mask.len() != t {
        return Err(Error::dim("average_pool", g.shape(h), &[mask.len()]));
    }
    let t_eff = S::from_usize(effective_len(mask, "average_pool: no valid positions")?).unwrap();
    let weights: Vec<S> = mask
        .iter()
        .map(|&m| if m { S::one() / t_eff } else { S::zero() })
        .collect();
    let weights = g.input(Tensor::vector(weights)?)?;
    g.vecmat(weights, h)
}

/// Independent per-label probabilities `σ(W_cᵀu + b_c)`.
pub fn classify<S: Scalar>(g: &mut Graph<'_, S>, u: NodeId, c: &ClassifierParams) -> Result<NodeId> {
    let (w, b) = (g.param(c.w), g.param(c.b));
    let logits = g.vecmat(u, w)?;
    let logits = g.add(logits, b)?;
    g.activation(logits, Activation::Sigmoid)
}

/// Mean binary cross-entropy over the `k` labels.
pub fn bce_loss<S: Scalar>(g: &mut Graph<'_, S>, y: &[S], probs: NodeId) -> Result<NodeId> {
    if y.iter().any(|&v| v != S::zero() && v != S::one()) {
        return Err(Error::Contract("bce_loss targets must be 0 or 1".into()));
    }
    g.bce(probs, y)
}
