//! Every tape operation against central differences on random inputs.

use hdmi_core::autodiff::{Tape, Var};
use hdmi_core::error::Result;
use hdmi_core::gradcheck::{compare_over_steps, gradient_check, standard_suite, value_and_grad, SUITE_TOLERANCE};
use hdmi_core::graph::{normalize_adjacency, AttributedLayer};
use hdmi_core::Tensor2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const STEPS: [f64; 3] = [1e-4, 1e-5, 1e-6];

fn rand_t(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor2 {
    Tensor2::uniform(rows, cols, 1.5, rng)
}

/// Contracts the op output with a fixed random weight so every output
/// coordinate reaches the scalar loss.
fn check<'a, F>(seed: u64, inputs: Vec<Tensor2>, op: F) -> f64
where
    F: Fn(&mut Tape<'a>, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let probe = {
        let mut t = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|x| t.constant(x.clone()).unwrap()).collect();
        let out = op(&mut t, &vars).unwrap();
        rand_t(t.value(out).rows(), t.value(out).cols(), &mut rng)
    };
    let loss = |t: &mut Tape<'a>, v: &[Var]| {
        let out = op(t, v)?;
        let w = t.constant(probe.clone())?;
        let prod = t.mul(out, w)?;
        t.sum_all(prod)
    };
    let (_, analytic) = value_and_grad(&loss, &inputs).unwrap();
    compare_over_steps(loss, &inputs, &analytic, &STEPS)
        .unwrap()
        .max_rel_error
}

/// Keeps values away from the ReLU kink.
fn away_from_zero(t: Tensor2) -> Tensor2 {
    t.map(|v| if v.abs() < 0.05 { v + 0.1 } else { v })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn matmul_variants(seed in 0u64..10_000, n in 1usize..5, k in 1usize..5, m in 1usize..5, ta: bool, tb: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = if ta { rand_t(k, n, &mut rng) } else { rand_t(n, k, &mut rng) };
        let b = if tb { rand_t(m, k, &mut rng) } else { rand_t(k, m, &mut rng) };
        let err = check(seed, vec![a, b], move |t, v| t.matmul_t(v[0], ta, v[1], tb));
        prop_assert!(err < SUITE_TOLERANCE, "{err}");
    }

    #[test]
    fn elementwise_ops(seed in 0u64..10_000, n in 1usize..5, m in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = away_from_zero(rand_t(n, m, &mut rng));
        let b = rand_t(n, m, &mut rng);
        for which in 0..8 {
            let err = check(seed, vec![a.clone(), b.clone()], move |t, v| match which {
                0 => t.add(v[0], v[1]),
                1 => t.sub(v[0], v[1]),
                2 => t.mul(v[0], v[1]),
                3 => t.relu(v[0]),
                4 => t.sigmoid(v[0]),
                5 => t.tanh(v[1]),
                6 => t.softplus(v[0]),
                _ => t.scale(v[1], -2.5),
            });
            prop_assert!(err < SUITE_TOLERANCE, "op {which}: {err}");
        }
    }

    #[test]
    fn reductions_and_reshapes(seed in 0u64..10_000, n in 1usize..5, m in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_t(n, m, &mut rng);
        let row = rand_t(1, m, &mut rng);
        let col = rand_t(n, 1, &mut rng);
        let other = rand_t(n, 2, &mut rng);
        for which in 0..9 {
            let err = check(seed, vec![x.clone(), row.clone(), col.clone(), other.clone()], move |t, v| match which {
                0 => t.row_mean(v[0]),
                1 => t.mean_all(v[0]),
                2 => t.sum_all(v[0]),
                3 => t.transpose(v[0]),
                4 => t.row_softmax(v[0]),
                5 => t.add_row(v[0], v[1]),
                6 => t.mul_col(v[0], v[2]),
                7 => t.concat_cols(&[v[0], v[3], v[2]]),
                _ => t.repeat_rows(v[1], n),
            });
            prop_assert!(err < SUITE_TOLERANCE, "op {which}: {err}");
        }
        let j = (seed as usize) % m;
        let err = check(seed, vec![x], move |t, v| t.column(v[0], j));
        prop_assert!(err < SUITE_TOLERANCE, "column: {err}");
    }

    #[test]
    fn bilinear_forms(seed in 0u64..10_000, n in 1usize..5, d in 1usize..5, e in 1usize..5, shared: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = rand_t(n, d, &mut rng);
        let m = rand_t(d, e, &mut rng);
        let v = rand_t(if shared { 1 } else { n }, e, &mut rng);
        let err = check(seed, vec![h, m, v], |t, v| t.bilinear(v[0], v[1], v[2]));
        prop_assert!(err < SUITE_TOLERANCE, "{err}");
    }

    #[test]
    fn sparse_propagation(seed in 0u64..10_000, n in 2usize..7, m in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| !(i * 7 + j * 3 + seed as usize).is_multiple_of(3))
            .collect();
        let layer = AttributedLayer::from_edges("r", n, &edges).unwrap();
        let adj = normalize_adjacency(&layer, 3.0).unwrap();
        let x = rand_t(n, m, &mut rng);
        let err = check(seed, vec![x], |t, v| t.spmm(adj.matrix(), v[0]));
        prop_assert!(err < SUITE_TOLERANCE, "{err}");
    }
}

#[test]
fn standard_suite_on_twelve_nodes_passes() {
    for check in standard_suite(7, 8, None).unwrap() {
        assert!(check.passed(), "{check:?}");
    }
}

#[test]
fn negative_control_fails_every_check() {
    for check in standard_suite(7, 8, Some(1.01)).unwrap() {
        assert!(!check.passed(), "{check:?}");
    }
}

#[test]
fn composite_softplus_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = rand_t(3, 4, &mut rng);
    let loss = |t: &mut Tape<'_>, v: &[Var]| {
        let s = t.softplus(v[0])?;
        let q = t.mul(s, v[0])?;
        t.mean_all(q)
    };
    assert!(gradient_check(loss, &[x], 1e-5).unwrap().max_rel_error < 1e-6);
}
