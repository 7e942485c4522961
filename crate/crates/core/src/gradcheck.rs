//! Central-difference verification of tape gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{HdmiError, Result};
use crate::fusion::{normalize_all, HdmiObjective, HdmiParameters, HdmiWeights};
use crate::graph::{random_permutation, MultiplexNetwork};
use crate::model::{HdiObjective, HdiParameters, LossWeights};
use crate::synthetic::{generate, SyntheticSpec};
use crate::tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
    pub max_rel_error: f64,
    /// `(parameter index, flat coordinate)` where the maximum occurred.
    pub worst: Option<(usize, usize)>,
    pub coordinates: usize,
}

/// Evaluates `loss_fn` and its gradient with respect to every tensor in `params`.
pub fn value_and_grad<'a, F>(loss_fn: &F, params: &[Tensor2]) -> Result<(f64, Vec<Tensor2>)>
where
    F: Fn(&mut Tape<'a>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params
        .iter()
        .map(|p| tape.param(p.clone()))
        .collect::<Result<Vec<_>>>()?;
    let loss = loss_fn(&mut tape, &vars)?;
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(HdmiError::NonFinite("loss"));
    }
    let grads = tape.backward(loss)?;
    let out = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| grads.get_or_zeros(v, p))
        .collect();
    Ok((value, out))
}

fn loss_value<'a, F>(loss_fn: &F, params: &[Tensor2]) -> Result<f64>
where
    F: Fn(&mut Tape<'a>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params
        .iter()
        .map(|p| tape.constant(p.clone()))
        .collect::<Result<Vec<_>>>()?;
    let loss = loss_fn(&mut tape, &vars)?;
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(HdmiError::NonFinite("loss"));
    }
    Ok(value)
}

/// Compares tape gradients of `loss_fn` against central differences with step `eps`.
pub fn gradient_check<'a, F>(loss_fn: F, params: &[Tensor2], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'a>, &[Var]) -> Result<Var>,
{
    let (_, analytic) = value_and_grad(&loss_fn, params)?;
    compare_with_central_differences(loss_fn, params, &analytic, eps)
}

/// Like [`gradient_check`] but with caller-supplied analytic gradients.
pub fn compare_with_central_differences<'a, F>(
    loss_fn: F,
    params: &[Tensor2],
    analytic: &[Tensor2],
    eps: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'a>, &[Var]) -> Result<Var>,
{
    compare_over_steps(loss_fn, params, analytic, &[eps])
}

/// Per coordinate, keeps the smallest relative error over `steps`. Small
/// steps lose tiny gradients to round-off and large ones may cross a ReLU
/// kink; a wrong gradient disagrees at every step.
pub fn compare_over_steps<'a, F>(
    loss_fn: F,
    params: &[Tensor2],
    analytic: &[Tensor2],
    steps: &[f64],
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'a>, &[Var]) -> Result<Var>,
{
    if steps.is_empty() || steps.iter().any(|&e| !(e > 0.0)) {
        return Err(HdmiError::InvalidArgument(format!(
            "steps must be positive, got {steps:?}"
        )));
    }
    if analytic.len() != params.len() {
        return Err(HdmiError::InvalidArgument(
            "one gradient per parameter is required".into(),
        ));
    }
    let mut work: Vec<Tensor2> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    for p in 0..params.len() {
        for k in 0..params[p].len() {
            let orig = params[p].data()[k];
            let a = analytic[p].data()[k];
            let mut rel = f64::INFINITY;
            for &eps in steps {
                work[p].data_mut()[k] = orig + eps;
                let plus = loss_value(&loss_fn, &work)?;
                work[p].data_mut()[k] = orig - eps;
                let minus = loss_value(&loss_fn, &work)?;
                let numeric = (plus - minus) / (2.0 * eps);
                rel = rel.min((a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8));
            }
            work[p].data_mut()[k] = orig;
            report.coordinates += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel.max(report.max_rel_error);
                report.worst = Some((p, k));
            }
        }
    }
    Ok(report)
}

/// Tolerance on the relative error used by [`standard_suite`] callers.
pub const SUITE_TOLERANCE: f64 = 1e-4;

/// Finite-difference steps of the standard suite.
pub const SUITE_STEPS: [f64; 4] = [1e-3, 1e-4, 1e-5, 1e-6];

/// One named check of the standard suite.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedCheck {
    pub name: &'static str,
    pub report: GradCheckReport,
}

impl NamedCheck {
    pub fn passed(&self) -> bool {
        self.report.max_rel_error < SUITE_TOLERANCE
    }
}

/// Small two-layer fixture: 12 nodes, 5 attributes.
pub fn fixture_network(seed: u64) -> Result<MultiplexNetwork> {
    generate(&SyntheticSpec {
        nodes: 12,
        attribute_dim: 5,
        p_in: 0.6,
        p_out: 0.1,
        layer_informativeness: vec![1.0, 0.5],
        seed,
        ..SyntheticSpec::default()
    })
}

fn run_check<'a, F>(name: &'static str, loss_fn: F, params: &[Tensor2], corrupt: Option<f64>) -> Result<NamedCheck>
where
    F: Fn(&mut Tape<'a>, &[Var]) -> Result<Var>,
{
    let (_, mut analytic) = value_and_grad(&loss_fn, params)?;
    if let Some(factor) = corrupt {
        for g in &mut analytic {
            *g = g.map(|v| v * factor);
        }
    }
    let report = compare_over_steps(loss_fn, params, &analytic, &SUITE_STEPS)?;
    Ok(NamedCheck { name, report })
}

/// Checks the three single-layer signals, the single-layer objective and
/// the multiplex objective with embedding dimension `dim`, all parameters
/// random. `corrupt` scales every analytic gradient before comparison, as
/// a negative control.
pub fn standard_suite(seed: u64, dim: usize, corrupt: Option<f64>) -> Result<Vec<NamedCheck>> {
    let net = fixture_network(seed)?;
    let adjs = normalize_all(&net, 3.0)?;
    let features = net.attributes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perm = random_permutation(net.n_nodes(), &mut rng);

    let hdi = HdiObjective::new(&adjs[0], features, LossWeights::default())?;
    let hdi_params = HdiParameters::random(net.attribute_dim(), dim, &mut rng).to_tensors();
    let mut out = vec![
        run_check(
            "extrinsic",
            |t, v| Ok(hdi.build(t, v, &perm)?.extrinsic),
            &hdi_params,
            corrupt,
        )?,
        run_check(
            "intrinsic",
            |t, v| Ok(hdi.build(t, v, &perm)?.intrinsic),
            &hdi_params,
            corrupt,
        )?,
        run_check("joint", |t, v| Ok(hdi.build(t, v, &perm)?.joint), &hdi_params, corrupt)?,
        run_check(
            "layer_total",
            |t, v| Ok(hdi.build(t, v, &perm)?.total),
            &hdi_params,
            corrupt,
        )?,
    ];

    let hdmi = HdmiObjective::new(
        &adjs,
        features,
        HdmiWeights::uniform(net.n_layers(), LossWeights::default()),
    )?;
    let hdmi_params = HdmiParameters::random(net.n_layers(), net.attribute_dim(), dim, dim, &mut rng).to_tensors();
    out.push(run_check(
        "multiplex_total",
        |t, v| Ok(hdmi.build(t, v, &perm)?.total),
        &hdmi_params,
        corrupt,
    )?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_loss_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = Tensor2::uniform(4, 3, 1.0, &mut rng);
        let loss = |t: &mut Tape<'_>, v: &[Var]| {
            let sq = t.mul(v[0], v[0])?;
            let s = t.sum_all(sq)?;
            t.scale(s, 0.5)
        };
        let report = gradient_check(loss, &[w], 1e-5).unwrap();
        assert!(report.max_rel_error < 1e-9, "{report:?}");
        assert_eq!(report.coordinates, 12);
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let w = Tensor2::from_rows(&[[0.3, -0.7]]);
        let loss = |t: &mut Tape<'_>, v: &[Var]| {
            let s = t.sigmoid(v[0])?;
            t.sum_all(s)
        };
        let (_, mut g) = value_and_grad(&loss, std::slice::from_ref(&w)).unwrap();
        g[0].data_mut()[1] *= 1.01;
        let report = compare_with_central_differences(loss, &[w], &g, 1e-5).unwrap();
        assert!(report.max_rel_error > 1e-4);
        assert_eq!(report.worst, Some((0, 1)));
    }

    #[test]
    fn suite_passes_and_negative_control_fails() {
        let good = standard_suite(3, 4, None).unwrap();
        assert_eq!(good.len(), 5);
        assert!(good.iter().all(NamedCheck::passed), "{good:?}");
        let bad = standard_suite(3, 4, Some(1.01)).unwrap();
        assert!(bad.iter().all(|c| !c.passed()), "{bad:?}");
    }

    #[test]
    fn rejects_bad_step() {
        let loss = |t: &mut Tape<'_>, v: &[Var]| t.sum_all(v[0]);
        assert!(gradient_check(loss, &[Tensor2::zeros(1, 1)], 0.0).is_err());
    }
}
