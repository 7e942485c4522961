//! Full-batch training loops with early stopping on the training loss.
//!
//! One seeded ChaCha stream drives parameter initialization and then one
//! corruption permutation per epoch, so `(data, config)` fixes every number
//! a run reports.

use std::f64::consts::LN_2;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adam::{adam_step, AdamState};
use crate::config::TrainingConfig;
use crate::error::{HdmiError, Result};
use crate::fusion::{embed_multiplex, normalize_all, AttentionWeights, HdmiObjective, HdmiParameters, HdmiWeights};
use crate::graph::{normalize_adjacency, random_permutation, AttributedLayer, MultiplexNetwork};
use crate::model::{encode, EmbeddingMatrix, HdiObjective, HdiParameters, LossEval, SignalLosses};
use crate::tensor::Tensor2;

/// Tolerance of the epoch-0 closed-form loss check.
pub const SELF_TEST_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total: f64,
    /// One entry per layer, then the fused level for multiplex runs.
    pub signals: Vec<SignalLosses>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub trace: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    pub duration: Duration,
}

impl TrainReport {
    pub fn best_loss(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.trace[e].total)
    }

    /// Tab-separated trace: `epoch total [E I J]...`.
    pub fn trace_tsv(&self) -> String {
        let mut out = String::new();
        for rec in &self.trace {
            out.push_str(&format!("{}\t{}", rec.epoch, rec.total));
            for s in &rec.signals {
                out.push_str(&format!("\t{}\t{}\t{}", s.extrinsic, s.intrinsic, s.joint));
            }
            out.push('\n');
        }
        out
    }
}

pub struct HdiRun {
    pub params: HdiParameters,
    pub embedding: EmbeddingMatrix,
    pub report: TrainReport,
}

pub struct HdmiRun {
    pub params: HdmiParameters,
    pub fused: EmbeddingMatrix,
    pub per_layer: Vec<EmbeddingMatrix>,
    pub attention: AttentionWeights,
    pub report: TrainReport,
}

/// Closed-form loss when every bilinear discriminator matrix is zero: each
/// signal contributes `2 ln 2`.
pub fn zero_init_hdi_loss(config: &TrainingConfig) -> f64 {
    2.0 * LN_2 * config.signal_weights().sum()
}

pub fn zero_init_hdmi_loss(weights: &HdmiWeights) -> f64 {
    let layers: f64 = weights
        .layer
        .iter()
        .zip(&weights.lambda_r)
        .map(|(w, l)| l * w.sum())
        .sum();
    2.0 * LN_2 * (weights.lambda_m * weights.fusion.sum() + layers)
}

/// Generic minimization loop. `step` returns loss and gradients for the
/// given parameters and corruption permutation.
fn optimize<F>(
    mut params: Vec<Tensor2>,
    n_nodes: usize,
    config: &TrainingConfig,
    rng: &mut ChaCha8Rng,
    expected_initial: f64,
    step: F,
) -> Result<(Vec<Tensor2>, TrainReport)>
where
    F: Fn(&[Tensor2], &[usize]) -> Result<(LossEval, Vec<Tensor2>)>,
{
    let start = Instant::now();
    let mut state = AdamState::new(&params, config.adam())?;
    let mut trace = Vec::new();
    let mut best: Option<(usize, f64, Vec<Tensor2>)> = None;
    let mut since_best = 0usize;
    let mut stopped_early = false;

    for epoch in 0..config.max_epochs {
        let perm = random_permutation(n_nodes, rng);
        let (loss, grads) = step(&params, &perm).map_err(|e| match e {
            HdmiError::NonFinite(_) => HdmiError::Diverged { epoch },
            other => other,
        })?;
        if !loss.total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(HdmiError::Diverged { epoch });
        }
        if epoch == 0 && (loss.total - expected_initial).abs() > SELF_TEST_TOL {
            return Err(HdmiError::SelfTest(format!(
                "epoch-0 loss {} but zero-initialized discriminators imply {expected_initial}",
                loss.total
            )));
        }
        trace.push(EpochRecord {
            epoch,
            total: loss.total,
            signals: loss.signals,
        });
        let improved = best.as_ref().is_none_or(|(_, b, _)| loss.total < *b);
        if improved {
            best = Some((epoch, loss.total, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                stopped_early = epoch + 1 < config.max_epochs;
                break;
            }
        }
        adam_step(&mut params, &grads, &mut state)?;
    }

    let (best_epoch, best_params) = match best {
        Some((e, _, p)) => (Some(e), p),
        None => (None, params),
    };
    Ok((
        best_params,
        TrainReport {
            trace,
            best_epoch,
            stopped_early,
            duration: start.elapsed(),
        },
    ))
}

/// Trains the single-layer model on `layer` with attributes `features`.
pub fn train_hdi(layer: &AttributedLayer, features: &Tensor2, config: &TrainingConfig) -> Result<HdiRun> {
    config.validate()?;
    let adj = normalize_adjacency(layer, config.self_weight)?;
    let objective = HdiObjective::new(&adj, features, config.signal_weights())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = HdiParameters::init(features.cols(), config.embedding_dim, &mut rng);
    let (best, report) = optimize(
        init.to_tensors(),
        features.rows(),
        config,
        &mut rng,
        zero_init_hdi_loss(config),
        |p, perm| objective.value_and_grad_flat(p, perm),
    )?;
    let params = HdiParameters::from_tensors(&best)?;
    let embedding = encode(&adj, features, &params.encoder)?;
    Ok(HdiRun {
        params,
        embedding,
        report,
    })
}

/// Trains the multiplex model jointly over every layer of `net`.
pub fn train_hdmi(net: &MultiplexNetwork, config: &TrainingConfig) -> Result<HdmiRun> {
    config.validate()?;
    let adjs = normalize_all(net, config.self_weight)?;
    let weights = config.hdmi_weights(net.n_layers())?;
    let expected = zero_init_hdmi_loss(&weights);
    let objective = HdmiObjective::new(&adjs, net.attributes(), weights)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = HdmiParameters::init(
        net.n_layers(),
        net.attribute_dim(),
        config.embedding_dim,
        config.attention_dim(),
        &mut rng,
    );
    let (best, report) = optimize(
        init.to_tensors(),
        net.n_nodes(),
        config,
        &mut rng,
        expected,
        |p, perm| objective.value_and_grad_flat(p, perm),
    )?;
    let params = HdmiParameters::from_tensors(net.n_layers(), &best)?;
    let emb = embed_multiplex(&adjs, net.attributes(), &params)?;
    Ok(HdmiRun {
        params,
        fused: emb.fused,
        per_layer: emb.per_layer,
        attention: emb.attention,
        report,
    })
}

/// One configuration of a loss-weight sweep and its score.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub lambda_e: f64,
    pub lambda_i: f64,
    pub lambda_j: f64,
    pub score: f64,
}

/// Trains one multiplex model for every `(lambda_e, lambda_i, lambda_j)` in
/// `grid`³, keeping the other settings of `base`, and scores each run.
/// Runs execute in parallel; results follow grid order.
pub fn lambda_sweep<S>(net: &MultiplexNetwork, base: &TrainingConfig, grid: &[f64], score: S) -> Result<Vec<SweepPoint>>
where
    S: Fn(&HdmiRun) -> Result<f64> + Sync,
{
    if grid.is_empty() {
        return Err(HdmiError::InvalidArgument("empty sweep grid".into()));
    }
    let combos: Vec<(f64, f64, f64)> = grid
        .iter()
        .flat_map(|&e| grid.iter().flat_map(move |&i| grid.iter().map(move |&j| (e, i, j))))
        .collect();
    combos
        .par_iter()
        .map(|&(e, i, j)| {
            let cfg = TrainingConfig {
                lambda_e: e,
                lambda_i: i,
                lambda_j: j,
                ..base.clone()
            };
            let run = train_hdmi(net, &cfg)?;
            Ok(SweepPoint {
                lambda_e: e,
                lambda_i: i,
                lambda_j: j,
                score: score(&run)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate, SyntheticSpec};

    fn small_config(epochs: usize) -> TrainingConfig {
        TrainingConfig {
            embedding_dim: 8,
            max_epochs: epochs,
            seed: 11,
            ..Default::default()
        }
    }

    fn small_net() -> MultiplexNetwork {
        generate(&SyntheticSpec {
            nodes: 24,
            attribute_dim: 6,
            p_in: 0.4,
            p_out: 0.05,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn zero_epochs_returns_initial_parameters() {
        let net = small_net();
        let cfg = small_config(0);
        let run = train_hdi(&net.layers()[0], net.attributes(), &cfg).unwrap();
        assert!(run.report.trace.is_empty());
        assert_eq!(run.report.best_epoch, None);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        assert_eq!(run.params, HdiParameters::init(6, 8, &mut rng));
    }

    #[test]
    fn best_epoch_has_minimum_loss_and_patience_stops() {
        let net = small_net();
        let cfg = TrainingConfig {
            patience: 3,
            learning_rate: 0.5,
            ..small_config(200)
        };
        let run = train_hdmi(&net, &cfg).unwrap();
        let best = run.report.best_loss().unwrap();
        assert!(run.report.trace.iter().all(|r| r.total >= best));
        assert!(run.report.trace.len() <= 200);
        if run.report.stopped_early {
            let last = run.report.trace.len() - 1;
            assert_eq!(last - run.report.best_epoch.unwrap(), 3);
        }
    }

    #[test]
    fn epoch_zero_loss_matches_closed_form() {
        let net = small_net();
        let run = train_hdmi(&net, &small_config(1)).unwrap();
        assert!((run.report.trace[0].total - 18.0 * LN_2).abs() < 1e-12);
        let run = train_hdi(&net.layers()[1], net.attributes(), &small_config(1)).unwrap();
        assert!((run.report.trace[0].total - 6.0 * LN_2).abs() < 1e-12);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let net = small_net();
        let cfg = TrainingConfig {
            patience: 0,
            ..small_config(3)
        };
        assert!(train_hdmi(&net, &cfg).is_err());
    }
}
