//! The tape objectives against a loop-by-loop dense reference.

use hdmi_core::fusion::{normalize_all, HdmiObjective, HdmiParameters, HdmiWeights};
use hdmi_core::graph::random_permutation;
use hdmi_core::model::{Discriminators, HdiObjective, SignalLosses};
use hdmi_core::synthetic::{generate, SyntheticSpec};
use hdmi_core::{HdiParameters, LossWeights, MultiplexNetwork, Tensor2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Mat = Vec<Vec<f64>>;

fn to_mat(t: &Tensor2) -> Mat {
    t.to_rows()
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            for t in 0..k {
                out[i][j] += a[i][t] * b[t][j];
            }
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `log(1 + e^x)` evaluated directly; fine for the moderate logits used here.
fn softplus(x: f64) -> f64 {
    (1.0 + x.exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mat_vec(m: &Mat, v: &[f64]) -> Vec<f64> {
    m.iter().map(|r| dot(r, v)).collect()
}

fn dense_normalized(net: &MultiplexNetwork, r: usize, w: f64) -> Mat {
    let n = net.n_nodes();
    let mut a = vec![vec![0.0; n]; n];
    for (i, j) in net.layers()[r].edges() {
        a[i][j] = 1.0;
        a[j][i] = 1.0;
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += w;
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    (0..n)
        .map(|i| (0..n).map(|j| a[i][j] / (deg[i].sqrt() * deg[j].sqrt())).collect())
        .collect()
}

fn encode(adj: &Mat, f: &Mat, w: &Mat) -> Mat {
    matmul(&matmul(adj, f), w)
        .into_iter()
        .map(|r| r.into_iter().map(|v| v.max(0.0)).collect())
        .collect()
}

fn mean_rows(h: &Mat) -> Vec<f64> {
    let n = h.len() as f64;
    (0..h[0].len())
        .map(|j| h.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect()
}

fn joint_code(f: &[f64], s: &[f64], d: &Discriminators) -> Vec<f64> {
    let zf: Vec<f64> = mat_vec(&to_mat(&d.w_f), f).into_iter().map(sigmoid).collect();
    let zs: Vec<f64> = mat_vec(&to_mat(&d.w_s), s).into_iter().map(sigmoid).collect();
    let cat: Vec<f64> = zf.into_iter().chain(zs).collect();
    mat_vec(&to_mat(&d.w_z), &cat).into_iter().map(sigmoid).collect()
}

fn signals(h: &Mat, h_neg: &Mat, f: &Mat, f_neg: &Mat, d: &Discriminators) -> SignalLosses {
    let n = h.len() as f64;
    let s = mean_rows(h);
    let (me, mi, mj) = (to_mat(&d.m_e), to_mat(&d.m_i), to_mat(&d.m_j));
    let mut e = 0.0;
    let mut i_ = 0.0;
    let mut j = 0.0;
    for k in 0..h.len() {
        e += softplus(-dot(&h[k], &mat_vec(&me, &s))) + softplus(dot(&h_neg[k], &mat_vec(&me, &s)));
        i_ += softplus(-dot(&h[k], &mat_vec(&mi, &f[k]))) + softplus(dot(&h_neg[k], &mat_vec(&mi, &f[k])));
        let zp = joint_code(&f[k], &s, d);
        let zn = joint_code(&f_neg[k], &s, d);
        j += softplus(-dot(&h[k], &mat_vec(&mj, &zp))) + softplus(dot(&h[k], &mat_vec(&mj, &zn)));
    }
    SignalLosses {
        extrinsic: e / n,
        intrinsic: i_ / n,
        joint: j / n,
    }
}

fn fixture(seed: u64) -> MultiplexNetwork {
    generate(&SyntheticSpec {
        nodes: 16,
        attribute_dim: 6,
        p_in: 0.5,
        p_out: 0.1,
        seed,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs()))
}

#[test]
fn single_layer_loss_matches_reference() {
    for seed in 0..5 {
        let net = fixture(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let params = HdiParameters::random(6, 7, &mut rng);
        let perm = random_permutation(16, &mut rng);
        let weights = LossWeights::new(0.7, 1.3, 0.4);

        let adjs = normalize_all(&net, 3.0).unwrap();
        let got = HdiObjective::new(&adjs[1], net.attributes(), weights)
            .unwrap()
            .evaluate(&params, &perm)
            .unwrap();

        let adj = dense_normalized(&net, 1, 3.0);
        let f = to_mat(net.attributes());
        let f_neg: Mat = perm.iter().map(|&p| f[p].clone()).collect();
        let w = to_mat(&params.encoder);
        let want = signals(
            &encode(&adj, &f, &w),
            &encode(&adj, &f_neg, &w),
            &f,
            &f_neg,
            &params.disc,
        );
        let total = 0.7 * want.extrinsic + 1.3 * want.intrinsic + 0.4 * want.joint;

        let s = &got.signals[0];
        assert!(
            close(s.extrinsic, want.extrinsic),
            "{} vs {}",
            s.extrinsic,
            want.extrinsic
        );
        assert!(
            close(s.intrinsic, want.intrinsic),
            "{} vs {}",
            s.intrinsic,
            want.intrinsic
        );
        assert!(close(s.joint, want.joint), "{} vs {}", s.joint, want.joint);
        assert!(close(got.total, total), "{} vs {total}", got.total);
    }
}

fn fuse_reference(hs: &[Mat], p: &HdmiParameters) -> Mat {
    let n = hs[0].len();
    (0..n)
        .map(|i| {
            let scores: Vec<f64> = hs
                .iter()
                .enumerate()
                .map(|(r, h)| {
                    let vh = mat_vec(&to_mat(&p.fusion.v[r]), &h[i]);
                    let y: Vec<f64> = p.fusion.y[r].data().to_vec();
                    dot(&y, &vh).tanh()
                })
                .collect();
            let z: f64 = scores.iter().map(|s| s.exp()).sum();
            let mut out = vec![0.0; hs[0][0].len()];
            for (r, h) in hs.iter().enumerate() {
                let a = scores[r].exp() / z;
                for (o, v) in out.iter_mut().zip(&h[i]) {
                    *o += a * v;
                }
            }
            out
        })
        .collect()
}

#[test]
fn multiplex_loss_matches_reference() {
    for seed in 0..5 {
        let net = fixture(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 200);
        let params = HdmiParameters::random(2, 6, 5, 3, &mut rng);
        let perm = random_permutation(16, &mut rng);
        let weights = HdmiWeights {
            layer: vec![LossWeights::new(1.0, 0.5, 2.0), LossWeights::new(0.3, 1.0, 1.0)],
            fusion: LossWeights::new(1.0, 1.0, 0.25),
            lambda_m: 0.6,
            lambda_r: vec![1.5, 0.8],
        };

        let adjs = normalize_all(&net, 3.0).unwrap();
        let got = HdmiObjective::new(&adjs, net.attributes(), weights.clone())
            .unwrap()
            .evaluate(&params, &perm)
            .unwrap();

        let f = to_mat(net.attributes());
        let f_neg: Mat = perm.iter().map(|&p| f[p].clone()).collect();
        let mut hs = Vec::new();
        let mut hs_neg = Vec::new();
        let mut total = 0.0;
        for r in 0..2 {
            let adj = dense_normalized(&net, r, 3.0);
            let w = to_mat(&params.encoders[r]);
            let h = encode(&adj, &f, &w);
            let hn = encode(&adj, &f_neg, &w);
            let s = signals(&h, &hn, &f, &f_neg, &params.layer_disc);
            let lw = weights.layer[r];
            total +=
                weights.lambda_r[r] * (lw.lambda_e * s.extrinsic + lw.lambda_i * s.intrinsic + lw.lambda_j * s.joint);
            assert!(close(got.signals[r].joint, s.joint));
            hs.push(h);
            hs_neg.push(hn);
        }
        let fused = fuse_reference(&hs, &params);
        let fused_neg = fuse_reference(&hs_neg, &params);
        let s = signals(&fused, &fused_neg, &f, &f_neg, &params.fusion_disc);
        let fw = weights.fusion;
        total += weights.lambda_m * (fw.lambda_e * s.extrinsic + fw.lambda_i * s.intrinsic + fw.lambda_j * s.joint);
        assert!(close(got.signals[2].extrinsic, s.extrinsic));
        assert!(close(got.signals[2].intrinsic, s.intrinsic));
        assert!(close(got.signals[2].joint, s.joint));
        assert!(close(got.total, total), "{} vs {total}", got.total);
    }
}
