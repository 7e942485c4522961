//! Probes on frozen embeddings: node classification, clustering NMI and
//! nearest-neighbour label agreement.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adam::{adam_step, AdamConfig, AdamState};
use crate::error::{shape_err, HdmiError, Result};
use crate::graph::Splits;
use crate::mi_oracle::{entropy, mutual_information, DiscreteJoint};
use crate::model::EmbeddingMatrix;
use crate::tensor::{gemm, Tensor2};

/// Settings of the logistic-regression probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub l2: f64,
    pub steps: usize,
    pub lr: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            steps: 500,
            lr: 0.01,
        }
    }
}

/// Settings of the k-means clustering probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 300,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1Scores {
    pub macro_f1: f64,
    pub micro_f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimAtK {
    pub value: f64,
    /// Nodes left out because their embedding row has zero norm.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub nmi: f64,
    pub sim_at_k: f64,
    pub k: usize,
    pub sim_skipped: usize,
    pub train_size: usize,
    pub test_size: usize,
}

impl EvalReport {
    /// `metric<TAB>value` lines in fixed order.
    pub fn to_tsv(&self) -> String {
        format!(
            "macro_f1\t{:.6}\nmicro_f1\t{:.6}\nnmi\t{:.6}\nsim@{}\t{:.6}\nsim_skipped\t{}\ntrain_size\t{}\ntest_size\t{}\n",
            self.macro_f1,
            self.micro_f1,
            self.nmi,
            self.k,
            self.sim_at_k,
            self.sim_skipped,
            self.train_size,
            self.test_size
        )
    }
}

fn check_labels(h: &Tensor2, labels: &[usize]) -> Result<()> {
    if h.rows() != labels.len() {
        return Err(shape_err(
            "eval",
            format!("{} embedding rows but {} labels", h.rows(), labels.len()),
        ));
    }
    Ok(())
}

/// Per-class stratified split: `fraction` of each class (at least one node)
/// goes to `train`, the rest to `test`.
pub fn stratified_split(labels: &[usize], fraction: f64, seed: u64) -> Result<Splits> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(HdmiError::InvalidArgument(format!(
            "train fraction {fraction} outside (0, 1)"
        )));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits = Splits::default();
    for c in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let k = ((members.len() as f64 * fraction).round() as usize).clamp(1, members.len());
        splits.train.extend_from_slice(&members[..k]);
        splits.test.extend_from_slice(&members[k..]);
    }
    splits.train.sort_unstable();
    splits.test.sort_unstable();
    Ok(splits)
}

/// Macro-F1 averages over every class seen in either labeling; micro-F1 is
/// accuracy for single-label prediction.
pub fn f1_scores(y_true: &[usize], y_pred: &[usize]) -> Result<F1Scores> {
    if y_true.len() != y_pred.len() || y_true.is_empty() {
        return Err(shape_err(
            "f1_scores",
            format!("{} true vs {} predicted labels", y_true.len(), y_pred.len()),
        ));
    }
    let classes = y_true.iter().chain(y_pred).max().map_or(0, |m| m + 1);
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fn_ = vec![0usize; classes];
    let mut seen = vec![false; classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        seen[t] = true;
        seen[p] = true;
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for c in (0..classes).filter(|&c| seen[c]) {
        let denom = 2 * tp[c] + fp[c] + fn_[c];
        sum += if denom == 0 {
            0.0
        } else {
            2.0 * tp[c] as f64 / denom as f64
        };
        count += 1;
    }
    let total_tp: usize = tp.iter().sum();
    let micro = total_tp as f64 / y_true.len() as f64;
    // With one label per node the global FP and FN counts coincide.
    let fp_total: usize = fp.iter().sum();
    let fn_total: usize = fn_.iter().sum();
    debug_assert_eq!(fp_total, fn_total);
    let micro_global = 2.0 * total_tp as f64 / (2 * total_tp + fp_total + fn_total) as f64;
    debug_assert!((micro - micro_global).abs() < 1e-12);
    Ok(F1Scores {
        macro_f1: sum / count as f64,
        micro_f1: micro_global,
    })
}

/// Multinomial logistic regression on standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// `(d + 1) × C`; the last row is the bias.
    weights: Tensor2,
}

fn standardize(x: &Tensor2, mean: &[f64], scale: &[f64]) -> Tensor2 {
    let mut out = Tensor2::zeros(x.rows(), x.cols() + 1);
    for i in 0..x.rows() {
        let row = out.row_mut(i);
        for (j, &v) in x.row(i).iter().enumerate() {
            row[j] = (v - mean[j]) / scale[j];
        }
        row[x.cols()] = 1.0;
    }
    out
}

fn softmax_in_place(logits: &mut Tensor2) {
    for i in 0..logits.rows() {
        let row = logits.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
}

impl LogisticRegression {
    pub fn fit(x: &Tensor2, y: &[usize], classes: usize, cfg: ProbeConfig) -> Result<Self> {
        if x.rows() != y.len() || x.rows() == 0 {
            return Err(shape_err(
                "logistic_regression",
                format!("{} rows, {} labels", x.rows(), y.len()),
            ));
        }
        for c in 0..classes {
            if !y.contains(&c) {
                return Err(HdmiError::MissingClass(c));
            }
        }
        if let Some(&bad) = y.iter().find(|&&l| l >= classes) {
            return Err(HdmiError::InvalidArgument(format!("label {bad} >= {classes} classes")));
        }
        let (n, d) = x.shape();
        let mut mean = vec![0.0; d];
        let mut scale = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v / n as f64;
            }
        }
        for i in 0..n {
            for ((s, v), m) in scale.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m) / n as f64;
            }
        }
        for s in &mut scale {
            *s = if *s > 1e-24 { s.sqrt() } else { 1.0 };
        }
        let xs = standardize(x, &mean, &scale);
        let mut params = vec![Tensor2::zeros(d + 1, classes)];
        let mut state = AdamState::new(
            &params,
            AdamConfig {
                lr: cfg.lr,
                ..AdamConfig::default()
            },
        )?;
        for _ in 0..cfg.steps {
            let mut p = gemm(&xs, false, &params[0], false)?;
            softmax_in_place(&mut p);
            for (i, &label) in y.iter().enumerate() {
                p.row_mut(i)[label] -= 1.0;
            }
            let mut grad = gemm(&xs, true, &p, false)?.map(|g| g / n as f64);
            for r in 0..d {
                for c in 0..classes {
                    let g = grad.get(r, c) + cfg.l2 * params[0].get(r, c);
                    grad.set(r, c, g);
                }
            }
            adam_step(&mut params, &[grad], &mut state)?;
        }
        let weights = params.pop().expect("one parameter block");
        if !weights.is_finite() {
            return Err(HdmiError::NonFinite("logistic_regression"));
        }
        Ok(Self { mean, scale, weights })
    }

    /// Class probabilities, one row per input row.
    pub fn predict_proba(&self, x: &Tensor2) -> Result<Tensor2> {
        if x.cols() != self.mean.len() {
            return Err(shape_err(
                "predict",
                format!("{} features, model has {}", x.cols(), self.mean.len()),
            ));
        }
        let mut p = gemm(&standardize(x, &self.mean, &self.scale), false, &self.weights, false)?;
        softmax_in_place(&mut p);
        Ok(p)
    }

    /// Arg-max class; ties go to the lower class index.
    pub fn predict(&self, x: &Tensor2) -> Result<Vec<usize>> {
        let p = self.predict_proba(x)?;
        Ok((0..p.rows())
            .map(|i| {
                let row = p.row(i);
                (0..row.len()).fold(0, |best, c| if row[c] > row[best] { c } else { best })
            })
            .collect())
    }
}

/// Trains the probe on `train` and scores it on `test`.
pub fn classify(h: &EmbeddingMatrix, labels: &[usize], train: &[usize], test: &[usize]) -> Result<F1Scores> {
    classify_with(h, labels, train, test, ProbeConfig::default())
}

pub fn classify_with(
    h: &EmbeddingMatrix,
    labels: &[usize],
    train: &[usize],
    test: &[usize],
    cfg: ProbeConfig,
) -> Result<F1Scores> {
    let x = h.as_tensor();
    check_labels(x, labels)?;
    if train.is_empty() || test.is_empty() {
        return Err(HdmiError::InvalidArgument(
            "train and test splits must be non-empty".into(),
        ));
    }
    if let Some(&i) = train.iter().chain(test).find(|&&i| i >= labels.len()) {
        return Err(HdmiError::InvalidArgument(format!("split index {i} out of range")));
    }
    let mut in_train = vec![false; labels.len()];
    for &i in train {
        in_train[i] = true;
    }
    if let Some(&i) = test.iter().find(|&&i| in_train[i]) {
        return Err(HdmiError::InvalidArgument(format!(
            "node {i} is in both train and test"
        )));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let y_train: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let model = LogisticRegression::fit(&x.gather_rows(train), &y_train, classes, cfg)?;
    let y_pred = model.predict(&x.gather_rows(test))?;
    let y_true: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
    f1_scores(&y_true, &y_pred)
}

/// `2 I(A;B) / (H(A) + H(B))` of the empirical joint; 1 when both
/// labelings are constant.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(shape_err("nmi", format!("{} vs {} labels", a.len(), b.len())));
    }
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let samples: Vec<Vec<usize>> = a.iter().zip(b).map(|(&x, &y)| vec![x, y]).collect();
    let joint = DiscreteJoint::from_samples(vec![ka, kb], &samples)?;
    let (ha, hb) = (entropy(&joint, &[0])?, entropy(&joint, &[1])?);
    if ha + hb <= 0.0 {
        return Ok(1.0);
    }
    let v = 2.0 * mutual_information(&joint, 0, 1)? / (ha + hb);
    Ok(v.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignment: Vec<usize>,
    pub centroids: Tensor2,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; the lowest index wins ties.
fn nearest(x: &[f64], centroids: &Tensor2) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = sq_dist(x, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_once<R: Rng>(x: &Tensor2, k: usize, max_iter: usize, rng: &mut R) -> KMeansResult {
    let (n, d) = x.shape();
    let mut centroids = Tensor2::zeros(k, d);
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(x.row(first));
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(x.row(pick));
        for (i, slot) in dist.iter_mut().enumerate() {
            *slot = slot.min(sq_dist(x.row(i), centroids.row(c)));
        }
    }

    let mut assignment = vec![usize::MAX; n];
    for _ in 0..max_iter {
        let mut changed = false;
        for i in 0..n {
            let (c, _) = nearest(x.row(i), &centroids);
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Tensor2::zeros(k, d);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignment[i];
            counts[c] += 1;
            for (s, v) in sums.row_mut(c).iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            // Empty clusters keep their previous centroid.
            if counts[c] > 0 {
                for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s / counts[c] as f64;
                }
            }
        }
    }
    let inertia = (0..n).map(|i| sq_dist(x.row(i), centroids.row(assignment[i]))).sum();
    KMeansResult {
        assignment,
        centroids,
        inertia,
    }
}

fn distinct_rows(x: &Tensor2, limit: usize) -> usize {
    let mut seen: Vec<&[f64]> = Vec::new();
    for i in 0..x.rows() {
        let r = x.row(i);
        if !seen.contains(&r) {
            seen.push(r);
            if seen.len() >= limit {
                break;
            }
        }
    }
    seen.len()
}

/// k-means++ seeded Lloyd iterations; the restart with the lowest inertia
/// wins (earliest restart on ties).
pub fn kmeans(x: &Tensor2, k: usize, cfg: KMeansConfig) -> Result<KMeansResult> {
    if k == 0 || cfg.restarts == 0 {
        return Err(HdmiError::InvalidArgument("k and restarts must be >= 1".into()));
    }
    let distinct = distinct_rows(x, k);
    if distinct < k {
        return Err(HdmiError::TooFewPoints { clusters: k, distinct });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..cfg.restarts {
        let run = kmeans_once(x, k, cfg.max_iter, &mut rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// k-means with `k = num_classes`, scored by NMI against `labels`.
pub fn cluster_nmi(h: &EmbeddingMatrix, labels: &[usize], num_classes: usize, seed: u64) -> Result<f64> {
    check_labels(h.as_tensor(), labels)?;
    if num_classes < 2 {
        return Err(HdmiError::InvalidArgument(format!(
            "need >= 2 clusters, got {num_classes}"
        )));
    }
    let km = kmeans(
        h.as_tensor(),
        num_classes,
        KMeansConfig {
            seed,
            ..KMeansConfig::default()
        },
    )?;
    nmi(&km.assignment, labels)
}

/// Mean fraction of each node's `k` most cosine-similar other nodes that
/// share its label. Ties go to the lower node index; zero-norm rows are
/// excluded both as queries and as neighbours.
pub fn sim_at_k(h: &EmbeddingMatrix, labels: &[usize], k: usize) -> Result<SimAtK> {
    let x = h.as_tensor();
    check_labels(x, labels)?;
    let n = x.rows();
    if k == 0 || n <= k {
        return Err(HdmiError::InvalidArgument(format!(
            "sim@k needs 1 <= k < N, got k={k} N={n}"
        )));
    }
    let norms: Vec<f64> = (0..n)
        .map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let valid: Vec<usize> = (0..n).filter(|&i| norms[i] > 0.0).collect();
    let skipped = n - valid.len();
    if valid.len() <= k {
        return Err(HdmiError::InvalidArgument(format!(
            "only {} nodes have non-zero embeddings, need more than k={k}",
            valid.len()
        )));
    }
    let scores: Vec<f64> = valid
        .par_iter()
        .map(|&i| {
            let mut sims: Vec<(f64, usize)> = valid
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| {
                    let dot: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| a * b).sum();
                    (dot / (norms[i] * norms[j]), j)
                })
                .collect();
            sims.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            sims[..k].iter().filter(|(_, j)| labels[*j] == labels[i]).count() as f64 / k as f64
        })
        .collect();
    Ok(SimAtK {
        value: scores.iter().sum::<f64>() / scores.len() as f64,
        skipped,
    })
}

/// Runs all three probes; `seed` drives k-means.
pub fn evaluate(
    h: &EmbeddingMatrix,
    labels: &[usize],
    splits: &Splits,
    num_classes: usize,
    k: usize,
    seed: u64,
) -> Result<EvalReport> {
    let f1 = classify(h, labels, &splits.train, &splits.test)?;
    let nmi = cluster_nmi(h, labels, num_classes, seed)?;
    let sim = sim_at_k(h, labels, k)?;
    Ok(EvalReport {
        macro_f1: f1.macro_f1,
        micro_f1: f1.micro_f1,
        nmi,
        sim_at_k: sim.value,
        k,
        sim_skipped: sim.skipped,
        train_size: splits.train.len(),
        test_size: splits.test.len(),
    })
}
