//! Semantic-attention fusion of per-layer embeddings and the joint
//! multiplex objective.
//!
//! Each layer `r` scores node `n` with `tanh(y_rᵀ V_r h_n^r)`; a row softmax
//! over layers gives the weights of the convex combination. Fused positive
//! and fused negative embeddings go through the same attention module, and
//! the fused level is trained with the same three signals as a single layer
//! using the mean fused embedding as summary.

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{shape_err, HdmiError, Result};
use crate::graph::{corrupt_attributes, normalize_adjacency, MultiplexNetwork, NormalizedAdjacency};
use crate::model::{
    encode, encode_on_tape, signal_losses, DiscVars, Discriminators, EmbeddingMatrix, LossEval, LossWeights, SignalVars,
};
use crate::tensor::Tensor2;

/// Per-layer attention matrices `V_r` (`d' × d`) and context vectors `y_r` (`d' × 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct FusionParameters {
    pub v: Vec<Tensor2>,
    pub y: Vec<Tensor2>,
}

impl FusionParameters {
    pub fn init<R: Rng + ?Sized>(layers: usize, dim: usize, attention_dim: usize, rng: &mut R) -> Self {
        let mut v = Vec::with_capacity(layers);
        let mut y = Vec::with_capacity(layers);
        for _ in 0..layers {
            v.push(Tensor2::glorot(attention_dim, dim, rng));
            y.push(Tensor2::glorot(attention_dim, 1, rng));
        }
        Self { v, y }
    }

    pub fn n_layers(&self) -> usize {
        self.v.len()
    }

    pub fn attention_dim(&self) -> usize {
        self.v.first().map_or(0, Tensor2::rows)
    }

    pub fn check(&self, layers: usize, dim: usize) -> Result<()> {
        if self.v.len() != layers || self.y.len() != layers {
            return Err(shape_err(
                "fusion parameters",
                format!(
                    "{} / {} attention pairs for {layers} layers",
                    self.v.len(),
                    self.y.len()
                ),
            ));
        }
        let dp = self.attention_dim();
        for (v, y) in self.v.iter().zip(&self.y) {
            if v.shape() != (dp, dim) || y.shape() != (dp, 1) {
                return Err(shape_err(
                    "fusion parameters",
                    format!("V {:?}, y {:?} with d'={dp}, d={dim}", v.shape(), y.shape()),
                ));
            }
        }
        Ok(())
    }
}

/// Normalized layer weights, one row per node and one column per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights(pub Tensor2);

impl AttentionWeights {
    pub fn as_tensor(&self) -> &Tensor2 {
        &self.0
    }
}

fn check_layers(per_layer: &[EmbeddingMatrix]) -> Result<(usize, usize)> {
    let first = per_layer.first().ok_or_else(|| shape_err("fusion", "no layers"))?;
    let shape = first.as_tensor().shape();
    if per_layer.iter().any(|h| h.as_tensor().shape() != shape) {
        return Err(shape_err("fusion", "layer embeddings differ in shape"));
    }
    Ok(shape)
}

/// Raw layer scores `tanh(y_rᵀ V_r h_n^r)` as an `N × R` matrix.
pub fn attention_scores(per_layer: &[EmbeddingMatrix], fp: &FusionParameters) -> Result<Tensor2> {
    let (n, d) = check_layers(per_layer)?;
    fp.check(per_layer.len(), d)?;
    let mut scores = Tensor2::zeros(n, per_layer.len());
    for (r, h) in per_layer.iter().enumerate() {
        // (H Vᵀ) y
        let hv = crate::tensor::gemm(h.as_tensor(), false, &fp.v[r], true)?;
        let col = hv.matmul(&fp.y[r])?;
        for i in 0..n {
            scores.set(i, r, col.data()[i].tanh());
        }
    }
    Ok(scores)
}

/// Row softmax of a score matrix.
pub fn softmax_rows(scores: &Tensor2) -> Tensor2 {
    let mut out = scores.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    out
}

pub fn attention_weights(per_layer: &[EmbeddingMatrix], fp: &FusionParameters) -> Result<AttentionWeights> {
    Ok(AttentionWeights(softmax_rows(&attention_scores(per_layer, fp)?)))
}

/// `h_n = Σ_r α_n^r h_n^r`.
pub fn fuse(per_layer: &[EmbeddingMatrix], weights: &AttentionWeights) -> Result<EmbeddingMatrix> {
    let (n, d) = check_layers(per_layer)?;
    let alpha = weights.as_tensor();
    if alpha.shape() != (n, per_layer.len()) {
        return Err(shape_err(
            "fuse",
            format!(
                "weights {:?} for {} layers of {n} nodes",
                alpha.shape(),
                per_layer.len()
            ),
        ));
    }
    if per_layer.len() == 1 && alpha.data().iter().all(|&a| a == 1.0) {
        // Exact copy; accumulating into zeros would turn -0.0 into 0.0.
        return Ok(per_layer[0].clone());
    }
    let mut out = Tensor2::zeros(n, d);
    for i in 0..n {
        let dst = out.row_mut(i);
        for (r, h) in per_layer.iter().enumerate() {
            let a = alpha.get(i, r);
            for (o, x) in dst.iter_mut().zip(h.as_tensor().row(i)) {
                *o += a * x;
            }
        }
    }
    Ok(EmbeddingMatrix(out))
}

/// All trainable parameters of the multiplex model.
///
/// Encoders are per layer; one discriminator set is shared by every layer;
/// the fused level has its own discriminator set.
#[derive(Debug, Clone, PartialEq)]
pub struct HdmiParameters {
    pub encoders: Vec<Tensor2>,
    pub layer_disc: Discriminators,
    pub fusion: FusionParameters,
    pub fusion_disc: Discriminators,
}

impl HdmiParameters {
    pub fn init<R: Rng + ?Sized>(
        layers: usize,
        attr_dim: usize,
        dim: usize,
        attention_dim: usize,
        rng: &mut R,
    ) -> Self {
        let encoders = (0..layers).map(|_| Tensor2::glorot(attr_dim, dim, rng)).collect();
        let layer_disc = Discriminators::init(attr_dim, dim, rng);
        let fusion = FusionParameters::init(layers, dim, attention_dim, rng);
        let fusion_disc = Discriminators::init(attr_dim, dim, rng);
        Self {
            encoders,
            layer_disc,
            fusion,
            fusion_disc,
        }
    }

    /// Every matrix random, bilinear forms included (for gradient checks).
    pub fn random<R: Rng + ?Sized>(
        layers: usize,
        attr_dim: usize,
        dim: usize,
        attention_dim: usize,
        rng: &mut R,
    ) -> Self {
        let encoders = (0..layers).map(|_| Tensor2::glorot(attr_dim, dim, rng)).collect();
        let layer_disc = Discriminators::random(attr_dim, dim, rng);
        let fusion = FusionParameters::init(layers, dim, attention_dim, rng);
        let fusion_disc = Discriminators::random(attr_dim, dim, rng);
        Self {
            encoders,
            layer_disc,
            fusion,
            fusion_disc,
        }
    }

    pub fn n_layers(&self) -> usize {
        self.encoders.len()
    }

    pub fn dim(&self) -> usize {
        self.layer_disc.dim()
    }

    pub fn attr_dim(&self) -> usize {
        self.layer_disc.attr_dim()
    }

    /// `[W_1..W_R, shared disc (6), V_1..V_R, y_1..y_R, fusion disc (6)]`.
    pub fn to_tensors(&self) -> Vec<Tensor2> {
        let mut out: Vec<Tensor2> = self.encoders.clone();
        out.extend(self.layer_disc.tensors().into_iter().cloned());
        out.extend(self.fusion.v.iter().cloned());
        out.extend(self.fusion.y.iter().cloned());
        out.extend(self.fusion_disc.tensors().into_iter().cloned());
        out
    }

    pub fn from_tensors(layers: usize, t: &[Tensor2]) -> Result<Self> {
        let want = 3 * layers + 2 * Discriminators::COUNT;
        if t.len() != want || layers == 0 {
            return Err(shape_err(
                "hdmi parameters",
                format!("{} tensors, expected {want}", t.len()),
            ));
        }
        let r = layers;
        let d = Discriminators::COUNT;
        let p = Self {
            encoders: t[..r].to_vec(),
            layer_disc: Discriminators::from_tensors(&t[r..r + d])?,
            fusion: FusionParameters {
                v: t[r + d..2 * r + d].to_vec(),
                y: t[2 * r + d..3 * r + d].to_vec(),
            },
            fusion_disc: Discriminators::from_tensors(&t[3 * r + d..])?,
        };
        p.check()?;
        Ok(p)
    }

    pub fn names(layers: usize) -> Vec<String> {
        let disc = ["M_E", "M_I", "W_f", "W_s", "W_z", "M_J"];
        let mut out: Vec<String> = (0..layers).map(|r| format!("W.{r}")).collect();
        out.extend(disc.iter().map(|n| format!("layer.{n}")));
        out.extend((0..layers).map(|r| format!("V.{r}")));
        out.extend((0..layers).map(|r| format!("y.{r}")));
        out.extend(disc.iter().map(|n| format!("fusion.{n}")));
        out
    }

    pub fn check(&self) -> Result<()> {
        let (a, d) = (self.attr_dim(), self.dim());
        for w in &self.encoders {
            if w.shape() != (a, d) {
                return Err(shape_err(
                    "hdmi parameters",
                    format!("encoder {:?}, want {:?}", w.shape(), (a, d)),
                ));
            }
        }
        self.layer_disc.check(a, d)?;
        self.fusion_disc.check(a, d)?;
        self.fusion.check(self.n_layers(), d)
    }
}

/// Coefficients of the multiplex objective.
#[derive(Debug, Clone, PartialEq)]
pub struct HdmiWeights {
    /// Signal weights for each layer's loss.
    pub layer: Vec<LossWeights>,
    /// Signal weights for the fused level.
    pub fusion: LossWeights,
    pub lambda_m: f64,
    pub lambda_r: Vec<f64>,
}

impl HdmiWeights {
    pub fn uniform(layers: usize, signals: LossWeights) -> Self {
        Self {
            layer: vec![signals; layers],
            fusion: signals,
            lambda_m: 1.0,
            lambda_r: vec![1.0; layers],
        }
    }

    fn validate(&self, layers: usize) -> Result<()> {
        if self.layer.len() != layers || self.lambda_r.len() != layers {
            return Err(HdmiError::InvalidArgument(format!(
                "{} layer weight sets and {} lambda_r values for {layers} layers",
                self.layer.len(),
                self.lambda_r.len()
            )));
        }
        for w in &self.layer {
            w.validate()?;
        }
        self.fusion.validate()?;
        let coeffs = std::iter::once(&self.lambda_m).chain(&self.lambda_r);
        if coeffs.clone().any(|l| !(l.is_finite() && *l >= 0.0)) || coeffs.into_iter().all(|&l| l == 0.0) {
            return Err(HdmiError::InvalidArgument(
                "lambda_m / lambda_r must be >= 0 and not all zero".into(),
            ));
        }
        Ok(())
    }
}

/// Tape outputs of the multiplex objective.
pub struct HdmiVars {
    pub total: Var,
    pub layer_signals: Vec<SignalVars>,
    pub fusion_signals: SignalVars,
    pub per_layer_h: Vec<Var>,
    pub fused: Var,
    pub attention: Var,
}

/// The negated multiplex objective.
pub struct HdmiObjective<'a> {
    adjs: &'a [NormalizedAdjacency],
    features: &'a Tensor2,
    weights: HdmiWeights,
}

impl<'a> HdmiObjective<'a> {
    pub fn new(adjs: &'a [NormalizedAdjacency], features: &'a Tensor2, weights: HdmiWeights) -> Result<Self> {
        if adjs.is_empty() {
            return Err(HdmiError::InvalidArgument("no layers".into()));
        }
        weights.validate(adjs.len())?;
        if adjs.iter().any(|a| a.n_nodes() != features.rows()) {
            return Err(shape_err(
                "hdmi objective",
                "layer node count differs from attribute rows",
            ));
        }
        Ok(Self {
            adjs,
            features,
            weights,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.adjs.len()
    }

    /// Soft attention and fusion of `per_layer` on the tape; returns `(fused, alpha)`.
    fn fuse_on_tape(tape: &mut Tape<'a>, per_layer: &[Var], v: &[Var], y: &[Var]) -> Result<(Var, Var)> {
        let mut scores = Vec::with_capacity(per_layer.len());
        for ((&h, &vr), &yr) in per_layer.iter().zip(v).zip(y) {
            let hv = tape.matmul_t(h, false, vr, true)?;
            let raw = tape.matmul(hv, yr)?;
            scores.push(tape.tanh(raw)?);
        }
        let all = tape.concat_cols(&scores)?;
        let alpha = tape.row_softmax(all)?;
        let mut fused: Option<Var> = None;
        for (r, &h) in per_layer.iter().enumerate() {
            let a = tape.column(alpha, r)?;
            let term = tape.mul_col(h, a)?;
            fused = Some(match fused {
                None => term,
                Some(acc) => tape.add(acc, term)?,
            });
        }
        Ok((fused.expect("at least one layer"), alpha))
    }

    /// Records the loss given handles in [`HdmiParameters::to_tensors`] order.
    pub fn build(&self, tape: &mut Tape<'a>, params: &[Var], perm: &[usize]) -> Result<HdmiVars> {
        let r = self.n_layers();
        let dc = Discriminators::COUNT;
        if params.len() != 3 * r + 2 * dc {
            return Err(shape_err(
                "hdmi objective",
                format!("{} parameter handles", params.len()),
            ));
        }
        if perm.len() != self.features.rows() {
            return Err(shape_err(
                "hdmi objective",
                "permutation length differs from node count",
            ));
        }
        let encoders = &params[..r];
        let layer_disc = DiscVars::from_slice(&params[r..r + dc]);
        let v = &params[r + dc..2 * r + dc];
        let y = &params[2 * r + dc..3 * r + dc];
        let fusion_disc = DiscVars::from_slice(&params[3 * r + dc..]);

        let f = tape.constant(self.features.clone())?;
        let f_neg = tape.constant(self.features.gather_rows(perm))?;

        let mut per_layer_h = Vec::with_capacity(r);
        let mut per_layer_neg = Vec::with_capacity(r);
        let mut layer_signals = Vec::with_capacity(r);
        let mut total: Option<Var> = None;
        for (k, adj) in self.adjs.iter().enumerate() {
            let h = encode_on_tape(tape, adj, f, encoders[k])?;
            let h_neg = encode_on_tape(tape, adj, f_neg, encoders[k])?;
            let s = tape.row_mean(h)?;
            let sv = signal_losses(tape, h, h_neg, s, f, f_neg, &layer_disc, &self.weights.layer[k])?;
            let weighted = tape.scale(sv.total, self.weights.lambda_r[k])?;
            total = Some(match total {
                None => weighted,
                Some(acc) => tape.add(acc, weighted)?,
            });
            per_layer_h.push(h);
            per_layer_neg.push(h_neg);
            layer_signals.push(sv);
        }

        let (fused, attention) = Self::fuse_on_tape(tape, &per_layer_h, v, y)?;
        let (fused_neg, _) = Self::fuse_on_tape(tape, &per_layer_neg, v, y)?;
        let s = tape.row_mean(fused)?;
        let fusion_signals = signal_losses(tape, fused, fused_neg, s, f, f_neg, &fusion_disc, &self.weights.fusion)?;
        let weighted = tape.scale(fusion_signals.total, self.weights.lambda_m)?;
        let total = tape.add(total.expect("at least one layer"), weighted)?;
        Ok(HdmiVars {
            total,
            layer_signals,
            fusion_signals,
            per_layer_h,
            fused,
            attention,
        })
    }

    fn read(tape: &Tape<'_>, vars: &HdmiVars) -> LossEval {
        let mut signals: Vec<_> = vars.layer_signals.iter().map(|s| s.read(tape)).collect();
        signals.push(vars.fusion_signals.read(tape));
        LossEval {
            total: tape.scalar(vars.total),
            signals,
        }
    }

    pub fn evaluate(&self, params: &HdmiParameters, perm: &[usize]) -> Result<LossEval> {
        let mut tape = Tape::new();
        let vars = params
            .to_tensors()
            .into_iter()
            .map(|t| tape.constant(t))
            .collect::<Result<Vec<_>>>()?;
        let out = self.build(&mut tape, &vars, perm)?;
        Ok(Self::read(&tape, &out))
    }

    /// Loss and gradients in `to_tensors` order.
    pub fn value_and_grad(&self, params: &HdmiParameters, perm: &[usize]) -> Result<(LossEval, Vec<Tensor2>)> {
        self.value_and_grad_flat(&params.to_tensors(), perm)
    }

    /// As [`Self::value_and_grad`] with parameters already flattened.
    pub fn value_and_grad_flat(&self, tensors: &[Tensor2], perm: &[usize]) -> Result<(LossEval, Vec<Tensor2>)> {
        let mut tape = Tape::new();
        let vars = tensors
            .iter()
            .map(|t| tape.param(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let out = self.build(&mut tape, &vars, perm)?;
        let grads = tape.backward(out.total)?;
        let g = vars
            .iter()
            .zip(tensors)
            .map(|(&v, t)| grads.get_or_zeros(v, t))
            .collect();
        Ok((Self::read(&tape, &out), g))
    }
}

/// Per-layer embeddings, attention weights and fused embedding for trained parameters.
pub struct MultiplexEmbedding {
    pub per_layer: Vec<EmbeddingMatrix>,
    pub attention: AttentionWeights,
    pub fused: EmbeddingMatrix,
}

pub fn embed_multiplex(
    adjs: &[NormalizedAdjacency],
    features: &Tensor2,
    params: &HdmiParameters,
) -> Result<MultiplexEmbedding> {
    if adjs.len() != params.n_layers() {
        return Err(shape_err(
            "embed",
            format!("{} layers vs {} encoders", adjs.len(), params.n_layers()),
        ));
    }
    let per_layer = adjs
        .iter()
        .zip(&params.encoders)
        .map(|(a, w)| encode(a, features, w))
        .collect::<Result<Vec<_>>>()?;
    let attention = attention_weights(&per_layer, &params.fusion)?;
    let fused = fuse(&per_layer, &attention)?;
    Ok(MultiplexEmbedding {
        per_layer,
        attention,
        fused,
    })
}

pub fn normalize_all(net: &MultiplexNetwork, self_weight: f64) -> Result<Vec<NormalizedAdjacency>> {
    net.layers()
        .iter()
        .map(|l| normalize_adjacency(l, self_weight))
        .collect()
}

/// Negated multiplex objective with one corruption drawn from `rng`.
pub fn hdmi_loss<R: Rng + ?Sized>(
    adjs: &[NormalizedAdjacency],
    features: &Tensor2,
    params: &HdmiParameters,
    weights: HdmiWeights,
    rng: &mut R,
) -> Result<LossEval> {
    let (_, perm) = corrupt_attributes(features, rng);
    let loss = HdmiObjective::new(adjs, features, weights)?.evaluate(params, &perm)?;
    if !loss.total.is_finite() {
        return Err(HdmiError::NonFinite("hdmi_loss"));
    }
    Ok(loss)
}
