//! Planted-community multiplex benchmark and the signal ablation.
//!
//! Every layer is a stochastic block model over the same balanced
//! communities; layer `r` uses within-community probability
//! `p_out + informativeness[r] · (p_in − p_out)`. Attributes are shared:
//! community `c` is shifted by `attribute_signal` on the coordinates
//! `j ≡ c (mod C)`, plus isotropic Gaussian noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::config::TrainingConfig;
use crate::error::{HdmiError, Result};
use crate::eval::{evaluate, stratified_split, EvalReport};
use crate::graph::{AttributedLayer, MultiplexNetwork, Splits};
use crate::model::{EmbeddingMatrix, LossWeights};
use crate::tensor::Tensor2;
use crate::trainer::{train_hdi, train_hdmi};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub nodes: usize,
    pub communities: usize,
    pub layers: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub attribute_dim: usize,
    pub attribute_signal: f64,
    pub attribute_noise: f64,
    pub layer_informativeness: Vec<f64>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            nodes: 200,
            communities: 2,
            layers: 2,
            p_in: 0.10,
            p_out: 0.01,
            attribute_dim: 32,
            attribute_signal: 1.0,
            attribute_noise: 1.0,
            layer_informativeness: vec![1.0, 0.5],
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HdmiError::InvalidArgument(m));
        if self.communities < 2 {
            return bad(format!("need at least 2 communities, got {}", self.communities));
        }
        if self.nodes == 0 || !self.nodes.is_multiple_of(self.communities) {
            return bad(format!(
                "{} nodes do not split evenly into {} communities",
                self.nodes, self.communities
            ));
        }
        if !(0.0 <= self.p_out && self.p_out <= self.p_in && self.p_in <= 1.0) {
            return bad(format!(
                "need 0 <= p_out <= p_in <= 1, got p_out={} p_in={}",
                self.p_out, self.p_in
            ));
        }
        if self.layers == 0 || self.layer_informativeness.len() != self.layers {
            return bad(format!(
                "{} informativeness values for {} layers",
                self.layer_informativeness.len(),
                self.layers
            ));
        }
        if self.layer_informativeness.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return bad("layer informativeness must lie in [0, 1]".into());
        }
        if self.attribute_dim == 0 || !(self.attribute_noise >= 0.0) || !self.attribute_signal.is_finite() {
            return bad("attribute_dim must be >= 1 and noise >= 0".into());
        }
        Ok(())
    }

    pub fn community_of(&self, node: usize) -> usize {
        node / (self.nodes / self.communities)
    }
}

/// Draws the network described by `spec`; labels are community ids.
pub fn generate(spec: &SyntheticSpec) -> Result<MultiplexNetwork> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.nodes;
    let labels: Vec<usize> = (0..n).map(|i| spec.community_of(i)).collect();
    let mut layers = Vec::with_capacity(spec.layers);
    for (r, &m) in spec.layer_informativeness.iter().enumerate() {
        let p_in = spec.p_out + m * (spec.p_in - spec.p_out);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let p = if labels[i] == labels[j] { p_in } else { spec.p_out };
                if rng.random_bool(p) {
                    edges.push((i, j));
                }
            }
        }
        layers.push(AttributedLayer::from_edges(format!("L{r}"), n, &edges)?);
    }
    let noise = Normal::new(0.0, spec.attribute_noise)
        .map_err(|e| HdmiError::InvalidArgument(format!("attribute noise: {e}")))?;
    let mut attributes = Tensor2::zeros(n, spec.attribute_dim);
    for i in 0..n {
        let c = labels[i];
        for (j, v) in attributes.row_mut(i).iter_mut().enumerate() {
            let mean = if j % spec.communities == c {
                spec.attribute_signal
            } else {
                0.0
            };
            *v = mean + noise.sample(&mut rng);
        }
    }
    MultiplexNetwork::new(layers, attributes, Some(labels), None)
}

/// Which contrastive signals a variant trains with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SignalSet {
    E,
    EI,
    EIJ,
}

impl SignalSet {
    pub const ALL: [SignalSet; 3] = [SignalSet::E, SignalSet::EI, SignalSet::EIJ];

    pub fn weights(self) -> LossWeights {
        match self {
            SignalSet::E => LossWeights::new(1.0, 0.0, 0.0),
            SignalSet::EI => LossWeights::new(1.0, 1.0, 0.0),
            SignalSet::EIJ => LossWeights::new(1.0, 1.0, 1.0),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SignalSet::E => "E",
            SignalSet::EI => "E+I",
            SignalSet::EIJ => "E+I+J",
        }
    }
}

/// Embedding source of one ablation row.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Single-layer model on layer `r`.
    Layer(usize, SignalSet),
    /// Mean of the per-layer `E+I+J` embeddings.
    FusedAverage,
    /// Multiplex model with attention fusion, all signals.
    FusedAttention,
}

impl Variant {
    pub fn layer_name(&self) -> String {
        match self {
            Variant::Layer(r, _) => format!("L{r}"),
            Variant::FusedAverage => "fused-average".into(),
            Variant::FusedAttention => "fused-attention".into(),
        }
    }

    pub fn signals(&self) -> SignalSet {
        match self {
            Variant::Layer(_, s) => *s,
            _ => SignalSet::EIJ,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub nmi: f64,
    pub sim_at_5: f64,
    /// Per-seed reports, in seed order.
    pub per_seed: Vec<EvalReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub seeds: Vec<u64>,
}

impl AblationTable {
    pub fn row(&self, variant: &Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| &r.variant == variant)
    }

    /// Header plus one tab-separated line per row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("layer\tsignals\tmacro_f1\tmicro_f1\tnmi\tsim@5\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\n",
                r.variant.layer_name(),
                r.variant.signals().label(),
                r.macro_f1,
                r.micro_f1,
                r.nmi,
                r.sim_at_5
            ));
        }
        out
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fraction of labeled nodes used for training the probe classifier.
pub const TRAIN_FRACTION: f64 = 0.3;

fn run_seed(spec: &SyntheticSpec, config: &TrainingConfig, seed: u64) -> Result<Vec<(Variant, EvalReport)>> {
    let net = generate(&SyntheticSpec { seed, ..spec.clone() })?;
    let labels = net.labels().expect("synthetic networks are labeled").to_vec();
    let split = stratified_split(&labels, TRAIN_FRACTION, seed)?;
    let eval = |h: &EmbeddingMatrix| evaluate(h, &labels, &split, spec.communities, 5, seed);

    let mut jobs: Vec<Variant> = (0..net.n_layers())
        .flat_map(|r| SignalSet::ALL.into_iter().map(move |s| Variant::Layer(r, s)))
        .collect();
    jobs.push(Variant::FusedAttention);

    let embeddings: Vec<(Variant, EmbeddingMatrix)> = jobs
        .into_par_iter()
        .map(|variant| {
            let mut cfg = config.clone();
            cfg.seed = seed;
            let h = match variant {
                Variant::Layer(r, s) => {
                    let w = s.weights();
                    cfg.lambda_e = w.lambda_e;
                    cfg.lambda_i = w.lambda_i;
                    cfg.lambda_j = w.lambda_j;
                    train_hdi(&net.layers()[r], net.attributes(), &cfg)?.embedding
                }
                _ => train_hdmi(&net, &cfg)?.fused,
            };
            Ok((variant, h))
        })
        .collect::<Result<_>>()?;

    let full: Vec<&EmbeddingMatrix> = embeddings
        .iter()
        .filter(|(v, _)| matches!(v, Variant::Layer(_, SignalSet::EIJ)))
        .map(|(_, h)| h)
        .collect();
    let mut avg = Tensor2::zeros(net.n_nodes(), config.embedding_dim);
    for h in &full {
        avg.axpy(1.0 / full.len() as f64, h.as_tensor());
    }

    let mut out = Vec::with_capacity(embeddings.len() + 1);
    for (v, h) in &embeddings {
        out.push((v.clone(), eval(h)?));
    }
    out.push((Variant::FusedAverage, eval(&EmbeddingMatrix(avg))?));
    Ok(out)
}

/// Trains every signal variant per layer plus both fusion modes for each
/// seed (the seed drives data generation, training and evaluation) and
/// reports per-variant medians.
pub fn run_ablation(spec: &SyntheticSpec, config: &TrainingConfig, seeds: &[u64]) -> Result<AblationTable> {
    if seeds.len() < 3 {
        return Err(HdmiError::InvalidArgument(format!(
            "ablation needs >= 3 seeds, got {}",
            seeds.len()
        )));
    }
    spec.validate()?;
    config.validate()?;
    let per_seed: Vec<Vec<(Variant, EvalReport)>> = seeds
        .par_iter()
        .map(|&s| run_seed(spec, config, s))
        .collect::<Result<_>>()?;

    let mut variants: Vec<Variant> = per_seed[0].iter().map(|(v, _)| v.clone()).collect();
    variants.sort();
    let rows = variants
        .into_iter()
        .map(|variant| {
            let reports: Vec<EvalReport> = per_seed
                .iter()
                .map(|runs| {
                    runs.iter()
                        .find(|(v, _)| *v == variant)
                        .expect("same variants per seed")
                        .1
                        .clone()
                })
                .collect();
            let med = |f: fn(&EvalReport) -> f64| median(&reports.iter().map(f).collect::<Vec<_>>());
            AblationRow {
                macro_f1: med(|r| r.macro_f1),
                micro_f1: med(|r| r.micro_f1),
                nmi: med(|r| r.nmi),
                sim_at_5: med(|r| r.sim_at_k),
                variant,
                per_seed: reports,
            }
        })
        .collect();
    Ok(AblationTable {
        rows,
        seeds: seeds.to_vec(),
    })
}

/// Splits with `fraction` of each class in `train` and the rest in `test`.
pub fn default_splits(net: &MultiplexNetwork, seed: u64) -> Result<Option<Splits>> {
    net.labels()
        .map(|l| stratified_split(l, TRAIN_FRACTION, seed))
        .transpose()
}
