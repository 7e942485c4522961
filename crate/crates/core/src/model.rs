//! Single-layer high-order deep infomax: GCN encoder, mean readout, the
//! extrinsic / intrinsic / joint discriminators and their combined loss.
//!
//! The engine minimizes the negated objective. For each signal the
//! minimized term is `mean(softplus(-pos)) + mean(softplus(neg))`, which is
//! `-(E[log D(pos)] + E[log(1 - D(neg))])` written in a form that stays
//! finite for saturated logits.

use rand::Rng;

use crate::autodiff::{sigmoid, Tape, Var};
use crate::error::{shape_err, HdmiError, Result};
use crate::graph::{corrupt_attributes, NormalizedAdjacency};
use crate::tensor::{gemm, Tensor2};

/// Node embeddings, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix(pub Tensor2);

impl EmbeddingMatrix {
    pub fn as_tensor(&self) -> &Tensor2 {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor2 {
        self.0
    }

    pub fn n_nodes(&self) -> usize {
        self.0.rows()
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }
}

/// Graph-level summary vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryVector(pub Vec<f64>);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_e: f64,
    pub lambda_i: f64,
    pub lambda_j: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::new(1.0, 1.0, 1.0)
    }
}

impl LossWeights {
    pub const fn new(lambda_e: f64, lambda_i: f64, lambda_j: f64) -> Self {
        Self {
            lambda_e,
            lambda_i,
            lambda_j,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_e, self.lambda_i, self.lambda_j];
        if all.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(HdmiError::InvalidArgument(format!(
                "loss weights must be >= 0: {self:?}"
            )));
        }
        if all.iter().all(|&l| l == 0.0) {
            return Err(HdmiError::InvalidArgument(
                "at least one loss weight must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.lambda_e + self.lambda_i + self.lambda_j
    }
}

/// Discriminator parameters: the extrinsic and intrinsic bilinear forms and
/// the projection stack of the joint discriminator.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminators {
    /// `d × d`
    pub m_e: Tensor2,
    /// `d × d_F`
    pub m_i: Tensor2,
    /// `d × d_F`
    pub w_f: Tensor2,
    /// `d × d`
    pub w_s: Tensor2,
    /// `d × 2d`
    pub w_z: Tensor2,
    /// `d × d`
    pub m_j: Tensor2,
}

impl Discriminators {
    pub const COUNT: usize = 6;

    /// Bilinear matrices zeroed, projections Glorot-initialized.
    pub fn init<R: Rng + ?Sized>(attr_dim: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            m_e: Tensor2::zeros(dim, dim),
            m_i: Tensor2::zeros(dim, attr_dim),
            w_f: Tensor2::glorot(dim, attr_dim, rng),
            w_s: Tensor2::glorot(dim, dim, rng),
            w_z: Tensor2::glorot(dim, 2 * dim, rng),
            m_j: Tensor2::zeros(dim, dim),
        }
    }

    /// Every matrix Glorot-initialized (used for gradient checks).
    pub fn random<R: Rng + ?Sized>(attr_dim: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            m_e: Tensor2::glorot(dim, dim, rng),
            m_i: Tensor2::glorot(dim, attr_dim, rng),
            w_f: Tensor2::glorot(dim, attr_dim, rng),
            w_s: Tensor2::glorot(dim, dim, rng),
            w_z: Tensor2::glorot(dim, 2 * dim, rng),
            m_j: Tensor2::glorot(dim, dim, rng),
        }
    }

    pub fn tensors(&self) -> [&Tensor2; 6] {
        [&self.m_e, &self.m_i, &self.w_f, &self.w_s, &self.w_z, &self.m_j]
    }

    pub fn from_tensors(t: &[Tensor2]) -> Result<Self> {
        match t {
            [m_e, m_i, w_f, w_s, w_z, m_j] => Ok(Self {
                m_e: m_e.clone(),
                m_i: m_i.clone(),
                w_f: w_f.clone(),
                w_s: w_s.clone(),
                w_z: w_z.clone(),
                m_j: m_j.clone(),
            }),
            _ => Err(shape_err(
                "discriminators",
                format!("expected 6 tensors, got {}", t.len()),
            )),
        }
    }

    pub fn dim(&self) -> usize {
        self.m_e.rows()
    }

    pub fn attr_dim(&self) -> usize {
        self.m_i.cols()
    }

    pub fn check(&self, attr_dim: usize, dim: usize) -> Result<()> {
        let want = [
            (dim, dim),
            (dim, attr_dim),
            (dim, attr_dim),
            (dim, dim),
            (dim, 2 * dim),
            (dim, dim),
        ];
        for (t, w) in self.tensors().iter().zip(want) {
            if t.shape() != w {
                return Err(shape_err(
                    "discriminators",
                    format!("{:?} where {w:?} expected", t.shape()),
                ));
            }
        }
        Ok(())
    }
}

/// Encoder weight plus discriminators for one attributed network.
#[derive(Debug, Clone, PartialEq)]
pub struct HdiParameters {
    /// `d_F × d`
    pub encoder: Tensor2,
    pub disc: Discriminators,
}

impl HdiParameters {
    pub fn init<R: Rng + ?Sized>(attr_dim: usize, dim: usize, rng: &mut R) -> Self {
        let encoder = Tensor2::glorot(attr_dim, dim, rng);
        Self {
            encoder,
            disc: Discriminators::init(attr_dim, dim, rng),
        }
    }

    pub fn random<R: Rng + ?Sized>(attr_dim: usize, dim: usize, rng: &mut R) -> Self {
        let encoder = Tensor2::glorot(attr_dim, dim, rng);
        Self {
            encoder,
            disc: Discriminators::random(attr_dim, dim, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.encoder.cols()
    }

    pub fn attr_dim(&self) -> usize {
        self.encoder.rows()
    }

    /// `[W, M_E, M_I, W_f, W_s, W_z, M_J]`.
    pub fn to_tensors(&self) -> Vec<Tensor2> {
        std::iter::once(&self.encoder)
            .chain(self.disc.tensors())
            .cloned()
            .collect()
    }

    pub fn from_tensors(t: &[Tensor2]) -> Result<Self> {
        if t.len() != 1 + Discriminators::COUNT {
            return Err(shape_err(
                "hdi parameters",
                format!("expected 7 tensors, got {}", t.len()),
            ));
        }
        let p = Self {
            encoder: t[0].clone(),
            disc: Discriminators::from_tensors(&t[1..])?,
        };
        p.disc.check(p.attr_dim(), p.dim())?;
        Ok(p)
    }

    pub fn names() -> Vec<String> {
        ["W", "M_E", "M_I", "W_f", "W_s", "W_z", "M_J"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }
}

/// Per-signal minimized terms (`-L_E`, `-L_I`, `-L_J`) of one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalLosses {
    pub extrinsic: f64,
    pub intrinsic: f64,
    pub joint: f64,
}

/// Value of an objective: the minimized total and per-level signal terms.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub total: f64,
    pub signals: Vec<SignalLosses>,
}

// ---------------------------------------------------------------------------
// Point evaluations
// ---------------------------------------------------------------------------

/// `H = ReLU(Â F W)`.
pub fn encode(adj: &NormalizedAdjacency, features: &Tensor2, weight: &Tensor2) -> Result<EmbeddingMatrix> {
    if adj.n_nodes() != features.rows() {
        return Err(shape_err(
            "encode",
            format!("{} nodes vs {} attribute rows", adj.n_nodes(), features.rows()),
        ));
    }
    let fw = features.matmul(weight)?;
    let h = adj.matrix().matmul_dense(&fw)?.map(|v| v.max(0.0));
    Ok(EmbeddingMatrix(h))
}

/// Mean of the node embeddings.
pub fn readout(h: &EmbeddingMatrix) -> Result<SummaryVector> {
    let t = h.as_tensor();
    if t.rows() == 0 {
        return Err(shape_err("readout", "no nodes"));
    }
    let mut s = vec![0.0; t.cols()];
    for i in 0..t.rows() {
        for (a, b) in s.iter_mut().zip(t.row(i)) {
            *a += b;
        }
    }
    let n = t.rows() as f64;
    s.iter_mut().for_each(|v| *v /= n);
    Ok(SummaryVector(s))
}

fn bilinear_form(op: &'static str, x: &[f64], m: &Tensor2, y: &[f64]) -> Result<f64> {
    if m.rows() != x.len() || m.cols() != y.len() {
        return Err(shape_err(op, format!("{} x {:?} x {}", x.len(), m.shape(), y.len())));
    }
    Ok((0..m.rows())
        .map(|r| x[r] * m.row(r).iter().zip(y).map(|(a, b)| a * b).sum::<f64>())
        .sum())
}

/// `σ(hᵀ M_E s)`.
pub fn disc_extrinsic(h: &[f64], s: &SummaryVector, m_e: &Tensor2) -> Result<f64> {
    Ok(sigmoid(bilinear_form("disc_extrinsic", h, m_e, &s.0)?))
}

/// `σ(hᵀ M_I f)`.
pub fn disc_intrinsic(h: &[f64], f: &[f64], m_i: &Tensor2) -> Result<f64> {
    Ok(sigmoid(bilinear_form("disc_intrinsic", h, m_i, f)?))
}

fn sigmoid_matvec(m: &Tensor2, x: &[f64]) -> Result<Vec<f64>> {
    if m.cols() != x.len() {
        return Err(shape_err("disc_joint", format!("{:?} times {}", m.shape(), x.len())));
    }
    Ok((0..m.rows())
        .map(|r| sigmoid(m.row(r).iter().zip(x).map(|(a, b)| a * b).sum()))
        .collect())
}

/// `σ(hᵀ M_J z)` with `z = σ(W_z [σ(W_f f); σ(W_s s)])`.
pub fn disc_joint(h: &[f64], s: &SummaryVector, f: &[f64], disc: &Discriminators) -> Result<f64> {
    let z_f = sigmoid_matvec(&disc.w_f, f)?;
    let z_s = sigmoid_matvec(&disc.w_s, &s.0)?;
    let cat: Vec<f64> = z_f.into_iter().chain(z_s).collect();
    let z = sigmoid_matvec(&disc.w_z, &cat)?;
    Ok(sigmoid(bilinear_form("disc_joint", h, &disc.m_j, &z)?))
}

// ---------------------------------------------------------------------------
// Tape construction
// ---------------------------------------------------------------------------

/// Tape handles for a [`Discriminators`] set.
#[derive(Debug, Clone, Copy)]
pub struct DiscVars {
    pub m_e: Var,
    pub m_i: Var,
    pub w_f: Var,
    pub w_s: Var,
    pub w_z: Var,
    pub m_j: Var,
}

impl DiscVars {
    pub fn from_slice(v: &[Var]) -> Self {
        Self {
            m_e: v[0],
            m_i: v[1],
            w_f: v[2],
            w_s: v[3],
            w_z: v[4],
            m_j: v[5],
        }
    }
}

/// Per-signal loss handles plus the weighted total.
#[derive(Debug, Clone, Copy)]
pub struct SignalVars {
    pub extrinsic: Var,
    pub intrinsic: Var,
    pub joint: Var,
    pub total: Var,
}

impl SignalVars {
    pub fn read(&self, tape: &Tape<'_>) -> SignalLosses {
        SignalLosses {
            extrinsic: tape.scalar(self.extrinsic),
            intrinsic: tape.scalar(self.intrinsic),
            joint: tape.scalar(self.joint),
        }
    }
}

/// `ReLU(Â · F · W)` on the tape.
pub fn encode_on_tape<'a>(
    tape: &mut Tape<'a>,
    adj: &'a NormalizedAdjacency,
    features: Var,
    weight: Var,
) -> Result<Var> {
    let fw = tape.matmul(features, weight)?;
    let prop = tape.spmm(adj.matrix(), fw)?;
    tape.relu(prop)
}

/// `mean(softplus(-pos)) + mean(softplus(neg))`.
fn contrastive_term(tape: &mut Tape<'_>, pos: Var, neg: Var) -> Result<Var> {
    let neg_pos = tape.scale(pos, -1.0)?;
    let sp_pos = tape.softplus(neg_pos)?;
    let sp_neg = tape.softplus(neg)?;
    let a = tape.mean_all(sp_pos)?;
    let b = tape.mean_all(sp_neg)?;
    tape.add(a, b)
}

/// `σ(W_z [σ(F W_fᵀ); σ(s W_sᵀ)])` for every row of `features`.
fn joint_projection(tape: &mut Tape<'_>, features: Var, z_s: Var, disc: &DiscVars) -> Result<Var> {
    let n = tape.value(features).rows();
    let pre_f = tape.matmul_t(features, false, disc.w_f, true)?;
    let z_f = tape.sigmoid(pre_f)?;
    let z_s_rows = tape.repeat_rows(z_s, n)?;
    let cat = tape.concat_cols(&[z_f, z_s_rows])?;
    let pre_z = tape.matmul_t(cat, false, disc.w_z, true)?;
    tape.sigmoid(pre_z)
}

/// The three contrastive signals for positive embeddings `h`, negative
/// embeddings `h_neg`, summary `s` (`1×d`), attributes `features` and
/// corrupted attributes `features_neg`.
#[allow(clippy::too_many_arguments)]
pub fn signal_losses(
    tape: &mut Tape<'_>,
    h: Var,
    h_neg: Var,
    s: Var,
    features: Var,
    features_neg: Var,
    disc: &DiscVars,
    weights: &LossWeights,
) -> Result<SignalVars> {
    let pos_e = tape.bilinear(h, disc.m_e, s)?;
    let neg_e = tape.bilinear(h_neg, disc.m_e, s)?;
    let extrinsic = contrastive_term(tape, pos_e, neg_e)?;

    let pos_i = tape.bilinear(h, disc.m_i, features)?;
    let neg_i = tape.bilinear(h_neg, disc.m_i, features)?;
    let intrinsic = contrastive_term(tape, pos_i, neg_i)?;

    let pre_s = tape.matmul_t(s, false, disc.w_s, true)?;
    let z_s = tape.sigmoid(pre_s)?;
    let z_pos = joint_projection(tape, features, z_s, disc)?;
    let z_neg = joint_projection(tape, features_neg, z_s, disc)?;
    let pos_j = tape.bilinear(h, disc.m_j, z_pos)?;
    let neg_j = tape.bilinear(h, disc.m_j, z_neg)?;
    let joint = contrastive_term(tape, pos_j, neg_j)?;

    let we = tape.scale(extrinsic, weights.lambda_e)?;
    let wi = tape.scale(intrinsic, weights.lambda_i)?;
    let wj = tape.scale(joint, weights.lambda_j)?;
    let ei = tape.add(we, wi)?;
    let total = tape.add(ei, wj)?;
    Ok(SignalVars {
        extrinsic,
        intrinsic,
        joint,
        total,
    })
}

/// The negated HDI objective on one attributed network.
pub struct HdiObjective<'a> {
    adj: &'a NormalizedAdjacency,
    features: &'a Tensor2,
    weights: LossWeights,
}

impl<'a> HdiObjective<'a> {
    pub fn new(adj: &'a NormalizedAdjacency, features: &'a Tensor2, weights: LossWeights) -> Result<Self> {
        weights.validate()?;
        if adj.n_nodes() != features.rows() {
            return Err(shape_err(
                "hdi objective",
                format!("{} nodes vs {} attribute rows", adj.n_nodes(), features.rows()),
            ));
        }
        Ok(Self { adj, features, weights })
    }

    pub fn weights(&self) -> LossWeights {
        self.weights
    }

    /// Records the loss for parameter handles `[W, M_E, M_I, W_f, W_s, W_z, M_J]`
    /// with corruption permutation `perm`.
    pub fn build(&self, tape: &mut Tape<'a>, params: &[Var], perm: &[usize]) -> Result<SignalVars> {
        if params.len() != 1 + Discriminators::COUNT {
            return Err(shape_err(
                "hdi objective",
                format!("{} parameter handles", params.len()),
            ));
        }
        if perm.len() != self.features.rows() {
            return Err(shape_err("hdi objective", "permutation length differs from node count"));
        }
        let f = tape.constant(self.features.clone())?;
        let f_neg = tape.constant(self.features.gather_rows(perm))?;
        let h = encode_on_tape(tape, self.adj, f, params[0])?;
        let h_neg = encode_on_tape(tape, self.adj, f_neg, params[0])?;
        let s = tape.row_mean(h)?;
        let disc = DiscVars::from_slice(&params[1..]);
        signal_losses(tape, h, h_neg, s, f, f_neg, &disc, &self.weights)
    }

    pub fn evaluate(&self, params: &HdiParameters, perm: &[usize]) -> Result<LossEval> {
        let mut tape = Tape::new();
        let vars = params
            .to_tensors()
            .into_iter()
            .map(|t| tape.constant(t))
            .collect::<Result<Vec<_>>>()?;
        let sv = self.build(&mut tape, &vars, perm)?;
        Ok(LossEval {
            total: tape.scalar(sv.total),
            signals: vec![sv.read(&tape)],
        })
    }

    /// Loss and gradients in `to_tensors` order.
    pub fn value_and_grad(&self, params: &HdiParameters, perm: &[usize]) -> Result<(LossEval, Vec<Tensor2>)> {
        self.value_and_grad_flat(&params.to_tensors(), perm)
    }

    /// As [`Self::value_and_grad`] with parameters already flattened.
    pub fn value_and_grad_flat(&self, tensors: &[Tensor2], perm: &[usize]) -> Result<(LossEval, Vec<Tensor2>)> {
        let mut tape = Tape::new();
        let vars = tensors
            .iter()
            .map(|t| tape.param(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let sv = self.build(&mut tape, &vars, perm)?;
        let grads = tape.backward(sv.total)?;
        let g = vars
            .iter()
            .zip(tensors)
            .map(|(&v, t)| grads.get_or_zeros(v, t))
            .collect();
        Ok((
            LossEval {
                total: tape.scalar(sv.total),
                signals: vec![sv.read(&tape)],
            },
            g,
        ))
    }
}

/// Negated HDI objective with a corruption drawn from `rng`.
pub fn hdi_loss<R: Rng + ?Sized>(
    adj: &NormalizedAdjacency,
    features: &Tensor2,
    params: &HdiParameters,
    weights: LossWeights,
    rng: &mut R,
) -> Result<LossEval> {
    let (_, perm) = corrupt_attributes(features, rng);
    let loss = HdiObjective::new(adj, features, weights)?.evaluate(params, &perm)?;
    if !loss.total.is_finite() {
        return Err(HdmiError::NonFinite("hdi_loss"));
    }
    Ok(loss)
}

/// Dense `h_iᵀ M v` for each row (used by callers that only need logits).
pub fn bilinear_scores(h: &Tensor2, m: &Tensor2, v: &Tensor2) -> Result<Vec<f64>> {
    let hm = gemm(h, false, m, false)?;
    if v.cols() != hm.cols() || !(v.rows() == 1 || v.rows() == h.rows()) {
        return Err(shape_err(
            "bilinear_scores",
            format!("{:?} vs {:?}", hm.shape(), v.shape()),
        ));
    }
    Ok((0..h.rows())
        .map(|i| {
            let vr = if v.rows() == 1 { v.row(0) } else { v.row(i) };
            hm.row(i).iter().zip(vr).map(|(a, b)| a * b).sum()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normalize_adjacency, AttributedLayer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;

    fn path3() -> NormalizedAdjacency {
        let layer = AttributedLayer::from_edges("p", 3, &[(0, 1), (1, 2)]).unwrap();
        normalize_adjacency(&layer, 3.0).unwrap()
    }

    #[test]
    fn encode_zero_features() {
        let adj = path3();
        let h = encode(&adj, &Tensor2::zeros(3, 2), &Tensor2::filled(2, 4, 0.7)).unwrap();
        assert!(h.as_tensor().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encode_single_node_is_relu_fw() {
        let layer = AttributedLayer::from_edges("x", 1, &[]).unwrap();
        let adj = normalize_adjacency(&layer, 3.0).unwrap();
        let f = Tensor2::from_rows(&[[1.0, -2.0]]);
        let w = Tensor2::from_rows(&[[0.5, 1.0], [0.25, 1.0]]);
        let h = encode(&adj, &f, &w).unwrap();
        assert_eq!(h.as_tensor().data(), &[0.0, 0.0]);
        let w2 = Tensor2::from_rows(&[[2.0, 1.0], [0.25, -1.0]]);
        assert_eq!(encode(&adj, &f, &w2).unwrap().as_tensor().data(), &[1.5, 3.0]);
    }

    #[test]
    fn encode_path_graph_by_hand() {
        // degrees with w=3: 4, 5, 4
        let adj = path3();
        let f = Tensor2::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let w = Tensor2::from_rows(&[[1.0, -1.0], [2.0, 0.5]]);
        let fw = [[1.0, -1.0], [2.0, 0.5], [3.0, -0.5]];
        let d = [4.0f64, 5.0, 4.0];
        let a = [[3.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 3.0]];
        let h = encode(&adj, &f, &w).unwrap();
        for i in 0..3 {
            for c in 0..2 {
                let mut acc = 0.0;
                for j in 0..3 {
                    acc += a[i][j] / (d[i].sqrt() * d[j].sqrt()) * fw[j][c];
                }
                assert!((h.as_tensor().get(i, c) - acc.max(0.0)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn readout_examples() {
        let h = EmbeddingMatrix(Tensor2::from_rows(&[[1.0, 3.0], [3.0, 5.0]]));
        assert_eq!(readout(&h).unwrap().0, vec![2.0, 4.0]);
        let c = EmbeddingMatrix(Tensor2::from_rows(&[[0.3, -1.0]; 5]));
        let s = readout(&c).unwrap().0;
        assert!((s[0] - 0.3).abs() < 1e-15 && (s[1] + 1.0).abs() < 1e-15);
        assert!(readout(&EmbeddingMatrix(Tensor2::zeros(0, 2))).is_err());
    }

    #[test]
    fn extrinsic_discriminator_examples() {
        let s = SummaryVector(vec![0.5, -1.0]);
        assert_eq!(disc_extrinsic(&[1.0, 2.0], &s, &Tensor2::zeros(2, 2)).unwrap(), 0.5);
        let eye = Tensor2::identity(2);
        assert_eq!(disc_extrinsic(&[2.0, 1.0], &s, &eye).unwrap(), 0.5);
        let v = disc_extrinsic(&[1.0, 2.0], &s, &eye).unwrap();
        assert!((v - 0.182_425_523_806_356_2).abs() < 1e-12);
        assert!(disc_extrinsic(&[1.0], &s, &eye).is_err());
    }

    #[test]
    fn intrinsic_discriminator_examples() {
        let m = Tensor2::from_rows(&[[0.2, -0.4, 1.0], [0.3, 0.1, -0.5]]);
        assert_eq!(
            disc_intrinsic(&[1.0, 1.0], &[1.0, 2.0, 3.0], &Tensor2::zeros(2, 3)).unwrap(),
            0.5
        );
        assert_eq!(disc_intrinsic(&[1.0, 1.0], &[0.0; 3], &m).unwrap(), 0.5);
        // h = (2, -1), f = (1, 0.5, -1): hᵀM = (0.1, -0.9, 2.5); · f = 0.1 - 0.45 - 2.5
        let v = disc_intrinsic(&[2.0, -1.0], &[1.0, 0.5, -1.0], &m).unwrap();
        assert!((v - sigmoid(-2.85)).abs() < 1e-15);
    }

    #[test]
    fn joint_discriminator_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut disc = Discriminators::random(2, 2, &mut rng);
        disc.m_j = Tensor2::zeros(2, 2);
        let s = SummaryVector(vec![0.4, 0.1]);
        assert_eq!(disc_joint(&[3.0, 1.0], &s, &[1.0, -1.0], &disc).unwrap(), 0.5);

        // projections zero: z = 0.5 everywhere
        let mut zeroed = Discriminators::random(2, 2, &mut rng);
        zeroed.w_f = Tensor2::zeros(2, 2);
        zeroed.w_s = Tensor2::zeros(2, 2);
        zeroed.w_z = Tensor2::zeros(2, 4);
        let h = [0.7, -0.2];
        let hm: f64 = (0..2)
            .map(|k| (0..2).map(|r| h[r] * zeroed.m_j.get(r, k)).sum::<f64>())
            .sum();
        let v = disc_joint(&h, &s, &[5.0, 5.0], &zeroed).unwrap();
        assert!((v - sigmoid(0.5 * hm)).abs() < 1e-15);

        // step by step, d = d_F = 2
        let d = Discriminators {
            m_e: Tensor2::zeros(2, 2),
            m_i: Tensor2::zeros(2, 2),
            w_f: Tensor2::from_rows(&[[1.0, 0.0], [0.5, -1.0]]),
            w_s: Tensor2::from_rows(&[[0.0, 2.0], [1.0, 1.0]]),
            w_z: Tensor2::from_rows(&[[1.0, -1.0, 0.5, 0.0], [0.0, 0.25, -0.5, 1.0]]),
            m_j: Tensor2::from_rows(&[[1.0, 2.0], [-1.0, 0.5]]),
        };
        let f = [2.0, 1.0];
        let s = SummaryVector(vec![-0.5, 0.25]);
        let z_f = [sigmoid(2.0), sigmoid(1.0 - 1.0)];
        let z_s = [sigmoid(0.5), sigmoid(-0.25)];
        let z = [
            sigmoid(z_f[0] - z_f[1] + 0.5 * z_s[0]),
            sigmoid(0.25 * z_f[1] - 0.5 * z_s[0] + z_s[1]),
        ];
        let h = [1.0, 3.0];
        // hᵀ M_J = (1 - 3, 2 + 1.5)
        let want = sigmoid(-2.0 * z[0] + 3.5 * z[1]);
        assert!((disc_joint(&h, &s, &f, &d).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn zero_discriminators_give_closed_form_loss() {
        let adj = path3();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = Tensor2::uniform(3, 4, 1.0, &mut rng);
        let params = HdiParameters::init(4, 5, &mut rng);
        let loss = hdi_loss(&adj, &f, &params, LossWeights::default(), &mut rng).unwrap();
        assert!((loss.total - 6.0 * LN_2).abs() < 1e-12);
        let w = LossWeights::new(0.5, 2.0, 0.0);
        let loss = hdi_loss(&adj, &f, &params, w, &mut rng).unwrap();
        assert!((loss.total - 2.5 * 2.0 * LN_2).abs() < 1e-12);
    }

    #[test]
    fn loss_weights_validation() {
        assert!(LossWeights::new(0.0, 0.0, 0.0).validate().is_err());
        assert!(LossWeights::new(-1.0, 1.0, 0.0).validate().is_err());
        assert!(LossWeights::new(1.0, 0.0, 0.0).validate().is_ok());
    }

    #[test]
    fn saturated_logits_stay_finite() {
        let adj = path3();
        let f = Tensor2::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let mut params = HdiParameters::init(2, 2, &mut ChaCha8Rng::seed_from_u64(0));
        params.encoder = Tensor2::filled(2, 2, 10.0);
        params.disc.m_e = Tensor2::filled(2, 2, -5.0);
        params.disc.m_i = Tensor2::filled(2, 2, 12.0);
        let obj = HdiObjective::new(&adj, &f, LossWeights::default()).unwrap();
        let (loss, grads) = obj.value_and_grad(&params, &[2, 0, 1]).unwrap();
        assert!(loss.total.is_finite() && loss.total > 100.0);
        assert!(grads.iter().all(Tensor2::is_finite));
    }
}
