//! Exact entropy and (high-order) mutual information for small discrete
//! joint distributions. All quantities are in nats.
//!
//! The three-variable interaction information is exposed in two algebraic
//! forms, the inclusion-exclusion sum over joint entropies and the
//! pairwise-minus-joint rearrangement `I(X;Y) + I(X;Z) - I(X;Y,Z)`, so that
//! each can serve as a check on the other.

use crate::error::{HdmiError, Result};

/// Probabilities below this are treated as exact zeros in entropy sums.
pub const PROB_FLOOR: f64 = 1e-15;

/// Tolerance on `sum(probs) == 1`.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// A joint probability table over two or three finite variables.
///
/// The table is flat and row-major: the last variable varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint {
    alphabet_sizes: Vec<usize>,
    probs: Vec<f64>,
}

impl DiscreteJoint {
    pub fn new(alphabet_sizes: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        if !(2..=3).contains(&alphabet_sizes.len()) {
            return Err(HdmiError::InvalidDistribution(format!(
                "arity must be 2 or 3, got {}",
                alphabet_sizes.len()
            )));
        }
        if alphabet_sizes.contains(&0) {
            return Err(HdmiError::InvalidDistribution("alphabet sizes must be positive".into()));
        }
        let cells: usize = alphabet_sizes.iter().product();
        if probs.len() != cells {
            return Err(HdmiError::InvalidDistribution(format!(
                "table has {} cells, alphabets imply {cells}",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(HdmiError::InvalidDistribution(format!(
                "probability {p} is negative or non-finite"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(HdmiError::InvalidDistribution(format!("probabilities sum to {total}")));
        }
        Ok(Self { alphabet_sizes, probs })
    }

    /// Empirical joint of paired label sequences; labels must be `< sizes[i]`.
    pub fn from_samples(alphabet_sizes: Vec<usize>, samples: &[Vec<usize>]) -> Result<Self> {
        if samples.is_empty() {
            return Err(HdmiError::InvalidDistribution("no samples".into()));
        }
        let cells: usize = alphabet_sizes.iter().product();
        let mut counts = vec![0usize; cells];
        for s in samples {
            if s.len() != alphabet_sizes.len() {
                return Err(HdmiError::InvalidDistribution(
                    "sample arity differs from alphabet count".into(),
                ));
            }
            let mut idx = 0;
            for (&v, &size) in s.iter().zip(&alphabet_sizes) {
                if v >= size {
                    return Err(HdmiError::InvalidDistribution(format!(
                        "outcome {v} outside alphabet of size {size}"
                    )));
                }
                idx = idx * size + v;
            }
            counts[idx] += 1;
        }
        let n = samples.len() as f64;
        let probs = counts.into_iter().map(|c| c as f64 / n).collect();
        Self::new(alphabet_sizes, probs)
    }

    pub fn arity(&self) -> usize {
        self.alphabet_sizes.len()
    }

    pub fn alphabet_sizes(&self) -> &[usize] {
        &self.alphabet_sizes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Marginal table over `subset` (indices kept in ascending order).
    pub fn marginal(&self, subset: &[usize]) -> Result<Vec<f64>> {
        let vars = self.normalize_subset(subset)?;
        let out_sizes: Vec<usize> = vars.iter().map(|&v| self.alphabet_sizes[v]).collect();
        let mut out = vec![0.0; out_sizes.iter().product()];
        let mut coords = vec![0usize; self.arity()];
        for &p in &self.probs {
            let mut idx = 0;
            for (&v, &size) in vars.iter().zip(&out_sizes) {
                idx = idx * size + coords[v];
            }
            out[idx] += p;
            // odometer increment, last variable fastest
            for k in (0..coords.len()).rev() {
                coords[k] += 1;
                if coords[k] < self.alphabet_sizes[k] {
                    break;
                }
                coords[k] = 0;
            }
        }
        Ok(out)
    }

    fn normalize_subset(&self, subset: &[usize]) -> Result<Vec<usize>> {
        if subset.is_empty() {
            return Err(HdmiError::InvalidArgument("empty variable subset".into()));
        }
        let mut vars = subset.to_vec();
        vars.sort_unstable();
        vars.dedup();
        if let Some(&bad) = vars.iter().find(|&&v| v >= self.arity()) {
            return Err(HdmiError::InvalidArgument(format!(
                "variable index {bad} out of range for arity {}",
                self.arity()
            )));
        }
        Ok(vars)
    }
}

/// Shannon entropy (nats) of a probability vector, with `0 ln 0 = 0`.
pub fn shannon_entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > PROB_FLOOR)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Entropy of the marginal over `subset`.
pub fn entropy(j: &DiscreteJoint, subset: &[usize]) -> Result<f64> {
    Ok(shannon_entropy(&j.marginal(subset)?))
}

/// `I(A;B) = H(A) + H(B) - H(A,B)` for two single variables.
pub fn mutual_information(j: &DiscreteJoint, a: usize, b: usize) -> Result<f64> {
    if a == b {
        return Err(HdmiError::InvalidArgument(
            "mutual information needs two distinct variables".into(),
        ));
    }
    mutual_information_sets(j, &[a], &[b])
}

/// `I(A;B)` between two disjoint groups of variables, e.g. `I(X; Y,Z)`.
pub fn mutual_information_sets(j: &DiscreteJoint, a: &[usize], b: &[usize]) -> Result<f64> {
    if a.iter().any(|v| b.contains(v)) {
        return Err(HdmiError::InvalidArgument("variable groups must be disjoint".into()));
    }
    let both: Vec<usize> = a.iter().chain(b).copied().collect();
    Ok(entropy(j, a)? + entropy(j, b)? - entropy(j, &both)?)
}

/// `H(A|B) = H(A,B) - H(B)`.
pub fn conditional_entropy(j: &DiscreteJoint, a: &[usize], given: &[usize]) -> Result<f64> {
    let both: Vec<usize> = a.iter().chain(given).copied().collect();
    Ok(entropy(j, &both)? - entropy(j, given)?)
}

fn require_three(j: &DiscreteJoint) -> Result<()> {
    if j.arity() != 3 {
        return Err(HdmiError::InvalidArgument(format!(
            "interaction information needs arity 3, got {}",
            j.arity()
        )));
    }
    Ok(())
}

/// Three-variable interaction information as the alternating sum of joint
/// entropies over every non-empty subset.
pub fn interaction_information_entropy_form(j: &DiscreteJoint) -> Result<f64> {
    require_three(j)?;
    let mut total = 0.0;
    for mask in 1u32..8 {
        let subset: Vec<usize> = (0..3).filter(|&v| mask & (1 << v) != 0).collect();
        let sign = if subset.len() % 2 == 1 { 1.0 } else { -1.0 };
        total += sign * entropy(j, &subset)?;
    }
    Ok(total)
}

/// `I(X;Y) + I(X;Z) - I(X;Y,Z)`, with variable 0 in the role of X.
pub fn interaction_information_pairwise_form(j: &DiscreteJoint) -> Result<f64> {
    require_three(j)?;
    Ok(mutual_information(j, 0, 1)? + mutual_information(j, 0, 2)? - mutual_information_sets(j, &[0], &[1, 2])?)
}

/// Three-variable high-order mutual information (may be negative).
pub fn interaction_information(j: &DiscreteJoint) -> Result<f64> {
    interaction_information_entropy_form(j)
}

/// Absolute disagreement between the two interaction-information forms.
pub fn decomposition_check(j: &DiscreteJoint) -> Result<f64> {
    Ok((interaction_information_entropy_form(j)? - interaction_information_pairwise_form(j)?).abs())
}

/// `X, Y` independent fair bits and `Z = X xor Y`.
pub fn xor_joint() -> DiscreteJoint {
    let mut p = vec![0.0; 8];
    for x in 0..2 {
        for y in 0..2 {
            p[x * 4 + y * 2 + (x ^ y)] = 0.25;
        }
    }
    DiscreteJoint::new(vec![2, 2, 2], p).expect("valid table")
}

/// Result of a randomized decomposition sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepReport {
    pub joints: usize,
    pub max_residual: f64,
}

/// Draws `count` random three-variable joints with alphabets in `2..=max_alphabet`
/// and returns the largest decomposition residual.
pub fn decomposition_sweep<R: rand::Rng + ?Sized>(
    count: usize,
    max_alphabet: usize,
    rng: &mut R,
) -> Result<SweepReport> {
    let mut max_residual: f64 = 0.0;
    for _ in 0..count {
        let j = random_joint(&[max_alphabet; 3], rng)?;
        max_residual = max_residual.max(decomposition_check(&j)?);
    }
    Ok(SweepReport {
        joints: count,
        max_residual,
    })
}

/// Random joint with each alphabet drawn from `2..=max_sizes[i]`. Some cells
/// are zeroed so degenerate supports are exercised too.
pub fn random_joint<R: rand::Rng + ?Sized>(max_sizes: &[usize], rng: &mut R) -> Result<DiscreteJoint> {
    let sizes: Vec<usize> = max_sizes.iter().map(|&m| rng.random_range(2..=m.max(2))).collect();
    let cells: usize = sizes.iter().product();
    let mut raw: Vec<f64> = (0..cells)
        .map(|_| {
            if rng.random_bool(0.15) {
                0.0
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    if raw.iter().all(|&p| p == 0.0) {
        raw[0] = 1.0;
    }
    let total: f64 = raw.iter().sum();
    raw.iter_mut().for_each(|p| *p /= total);
    DiscreteJoint::new(sizes, raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;

    #[test]
    fn entropy_examples() {
        let uniform = DiscreteJoint::new(vec![2, 1], vec![0.5, 0.5]).unwrap();
        assert!((entropy(&uniform, &[0]).unwrap() - LN_2).abs() < 1e-15);
        let point = DiscreteJoint::new(vec![2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(entropy(&point, &[0, 1]).unwrap(), 0.0);
        let three = DiscreteJoint::new(vec![3, 1], vec![0.5, 0.25, 0.25]).unwrap();
        // -(0.5 ln 0.5 + 2 * 0.25 ln 0.25) = 1.5 ln 2
        assert!((entropy(&three, &[0]).unwrap() - 1.039_720_770_839_917_9).abs() < 1e-12);
    }

    #[test]
    fn entropy_errors() {
        let j = DiscreteJoint::new(vec![2, 2], vec![0.25; 4]).unwrap();
        assert!(entropy(&j, &[]).is_err());
        assert!(entropy(&j, &[2]).is_err());
    }

    #[test]
    fn mi_examples() {
        let indep = DiscreteJoint::new(vec![2, 2], vec![0.25; 4]).unwrap();
        assert!(mutual_information(&indep, 0, 1).unwrap().abs() < 1e-15);
        let copy = DiscreteJoint::new(vec![2, 2], vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        assert!((mutual_information(&copy, 0, 1).unwrap() - LN_2).abs() < 1e-15);
        assert!(mutual_information(&copy, 1, 1).is_err());
    }

    #[test]
    fn mi_matches_kl_form_on_random_3x3() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let j = random_joint(&[3, 3], &mut rng).unwrap();
            let (na, nb) = (j.alphabet_sizes()[0], j.alphabet_sizes()[1]);
            let pa = j.marginal(&[0]).unwrap();
            let pb = j.marginal(&[1]).unwrap();
            let mut kl = 0.0;
            for a in 0..na {
                for b in 0..nb {
                    let p = j.probs()[a * nb + b];
                    if p > 0.0 {
                        kl -= p * (pa[a] * pb[b] / p).ln();
                    }
                }
            }
            assert!((mutual_information(&j, 0, 1).unwrap() - kl).abs() < 1e-12);
        }
    }

    #[test]
    fn interaction_examples() {
        let indep = DiscreteJoint::new(vec![2, 2, 2], vec![0.125; 8]).unwrap();
        assert!(interaction_information(&indep).unwrap().abs() < 1e-12);
        let xor = xor_joint();
        assert!((interaction_information(&xor).unwrap() + LN_2).abs() < 1e-12);
        assert!((interaction_information_pairwise_form(&xor).unwrap() + LN_2).abs() < 1e-12);
        assert!(decomposition_check(&xor).unwrap() < 1e-12);
    }

    #[test]
    fn interaction_requires_three_variables() {
        let j = DiscreteJoint::new(vec![2, 2], vec![0.25; 4]).unwrap();
        assert!(interaction_information(&j).is_err());
        assert!(decomposition_check(&j).is_err());
    }

    #[test]
    fn rejects_invalid_tables() {
        assert!(DiscreteJoint::new(vec![2, 2], vec![0.5, 0.5, 0.5, -0.5]).is_err());
        assert!(DiscreteJoint::new(vec![2, 2], vec![0.3; 4]).is_err());
        assert!(DiscreteJoint::new(vec![2, 2], vec![0.5; 2]).is_err());
        assert!(DiscreteJoint::new(vec![2], vec![0.5; 2]).is_err());
    }

    #[test]
    fn from_samples_counts() {
        let j = DiscreteJoint::from_samples(vec![2, 2], &[vec![0, 0], vec![1, 1], vec![1, 1], vec![0, 1]]).unwrap();
        assert_eq!(j.probs(), &[0.25, 0.25, 0.0, 0.5]);
    }
}
