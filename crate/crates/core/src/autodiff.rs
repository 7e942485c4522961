//! Reverse-mode differentiation over a linear tape of dense matrix ops.
//!
//! Every op checks shapes up front and rejects non-finite results, which is
//! how divergence surfaces during training.

use crate::error::{shape_err, HdmiError, Result};
use crate::graph::CsrMatrix;
use crate::tensor::{gemm, Tensor2};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<'a> {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    SpMatMul { m: &'a CsrMatrix, x: Var },
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow { x: Var, row: Var },
    Mul(Var, Var),
    MulCol { x: Var, col: Var },
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softplus(Var),
    RowSoftmax(Var),
    RowMean(Var),
    MeanAll(Var),
    SumAll(Var),
    ConcatCols(Vec<Var>),
    Column { x: Var, j: usize },
    RepeatRows { x: Var, n: usize },
    Bilinear { h: Var, m: Var, v: Var },
}

struct Node<'a> {
    value: Tensor2,
    op: Op<'a>,
    requires_grad: bool,
}

/// Records a computation so that gradients of a scalar can be pulled back
/// to every leaf created with [`Tape::param`].
#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients indexed by tape variable.
pub struct Gradients {
    grads: Vec<Option<Tensor2>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor2> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` when nothing flowed to it.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor2) -> Tensor2 {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor2::zeros(like.rows(), like.cols()))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow; `-softplus(-x) = ln σ(x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    /// Scalar value of a 1×1 variable.
    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        debug_assert_eq!(t.shape(), (1, 1));
        t.data()[0]
    }

    fn push(&mut self, value: Tensor2, op: Op<'a>, requires_grad: bool, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(HdmiError::NonFinite(name));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor2) -> Result<Var> {
        self.push(value, Op::Leaf, true, "param")
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Tensor2) -> Result<Var> {
        self.push(value, Op::Leaf, false, "constant")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, false, b, false)
    }

    /// `op(a) · op(b)` with optional transposes.
    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Result<Var> {
        let value = gemm(self.value(a), ta, self.value(b), tb)?;
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMul { a, b, ta, tb }, rg, "matmul")
    }

    /// Constant sparse matrix times a dense variable.
    pub fn spmm(&mut self, m: &'a CsrMatrix, x: Var) -> Result<Var> {
        let value = m.matmul_dense(self.value(x))?;
        let rg = self.rg(x);
        self.push(value, Op::SpMatMul { m, x }, rg, "spmm")
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).transpose();
        let rg = self.rg(x);
        self.push(value, Op::Transpose(x), rg, "transpose")
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(shape_err(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Add(a, b), rg, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Sub(a, b), rg, "sub")
    }

    /// Adds a `1×c` row vector to every row of an `n×c` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xs, rs) = (self.value(x).shape(), self.value(row).shape());
        if rs.0 != 1 || rs.1 != xs.1 {
            return Err(shape_err("add_row", format!("{xs:?} plus row {rs:?}")));
        }
        let mut value = self.value(x).clone();
        let r = self.value(row).data().to_vec();
        for i in 0..xs.0 {
            for (d, b) in value.row_mut(i).iter_mut().zip(&r) {
                *d += b;
            }
        }
        let rg = self.rg(x) || self.rg(row);
        self.push(value, Op::AddRow { x, row }, rg, "add_row")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Mul(a, b), rg, "mul")
    }

    /// Scales row `i` of an `n×c` matrix by `col[i]` (`col` is `n×1`).
    pub fn mul_col(&mut self, x: Var, col: Var) -> Result<Var> {
        let (xs, cs) = (self.value(x).shape(), self.value(col).shape());
        if cs != (xs.0, 1) {
            return Err(shape_err("mul_col", format!("{xs:?} scaled by {cs:?}")));
        }
        let mut value = self.value(x).clone();
        for i in 0..xs.0 {
            let s = self.value(col).data()[i];
            value.row_mut(i).iter_mut().for_each(|v| *v *= s);
        }
        let rg = self.rg(x) || self.rg(col);
        self.push(value, Op::MulCol { x, col }, rg, "mul_col")
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let value = self.value(x).map(|v| v * c);
        let rg = self.rg(x);
        self.push(value, Op::Scale(x, c), rg, "scale")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(|v| v.max(0.0));
        let rg = self.rg(x);
        self.push(value, Op::Relu(x), rg, "relu")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(sigmoid);
        let rg = self.rg(x);
        self.push(value, Op::Sigmoid(x), rg, "sigmoid")
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(f64::tanh);
        let rg = self.rg(x);
        self.push(value, Op::Tanh(x), rg, "tanh")
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(softplus);
        let rg = self.rg(x);
        self.push(value, Op::Softplus(x), rg, "softplus")
    }

    pub fn row_softmax(&mut self, x: Var) -> Result<Var> {
        let mut value = self.value(x).clone();
        for i in 0..value.rows() {
            let row = value.row_mut(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            row.iter_mut().for_each(|v| *v /= total);
        }
        let rg = self.rg(x);
        self.push(value, Op::RowSoftmax(x), rg, "row_softmax")
    }

    /// Mean over rows: `n×c → 1×c`.
    pub fn row_mean(&mut self, x: Var) -> Result<Var> {
        let src = self.value(x);
        if src.rows() == 0 {
            return Err(shape_err("row_mean", "no rows"));
        }
        let n = src.rows() as f64;
        let mut value = Tensor2::zeros(1, src.cols());
        for i in 0..src.rows() {
            for (d, s) in value.data_mut().iter_mut().zip(src.row(i)) {
                *d += s;
            }
        }
        value.data_mut().iter_mut().for_each(|v| *v /= n);
        let rg = self.rg(x);
        self.push(value, Op::RowMean(x), rg, "row_mean")
    }

    /// Mean of all entries, as a 1×1 value.
    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        let src = self.value(x);
        if src.is_empty() {
            return Err(shape_err("mean_all", "empty input"));
        }
        let value = Tensor2::filled(1, 1, src.sum() / src.len() as f64);
        let rg = self.rg(x);
        self.push(value, Op::MeanAll(x), rg, "mean_all")
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let value = Tensor2::filled(1, 1, self.value(x).sum());
        let rg = self.rg(x);
        self.push(value, Op::SumAll(x), rg, "sum_all")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| shape_err("concat_cols", "no inputs"))?;
        let rows = self.value(first).rows();
        if let Some(p) = parts.iter().find(|p| self.value(**p).rows() != rows) {
            return Err(shape_err(
                "concat_cols",
                format!("row counts {rows} and {}", self.value(*p).rows()),
            ));
        }
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut value = Tensor2::zeros(rows, cols);
        for i in 0..rows {
            let mut off = 0;
            for p in parts {
                let src = self.value(*p).row(i);
                value.row_mut(i)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        self.push(value, Op::ConcatCols(parts.to_vec()), rg, "concat_cols")
    }

    /// Column `j` as an `n×1` matrix.
    pub fn column(&mut self, x: Var, j: usize) -> Result<Var> {
        let src = self.value(x);
        if j >= src.cols() {
            return Err(shape_err("column", format!("column {j} of {:?}", src.shape())));
        }
        let value = Tensor2::column_vector(&(0..src.rows()).map(|i| src.get(i, j)).collect::<Vec<_>>());
        let rg = self.rg(x);
        self.push(value, Op::Column { x, j }, rg, "column")
    }

    /// Stacks a `1×c` row `n` times.
    pub fn repeat_rows(&mut self, x: Var, n: usize) -> Result<Var> {
        let src = self.value(x);
        if src.rows() != 1 {
            return Err(shape_err(
                "repeat_rows",
                format!("input {:?} is not a row", src.shape()),
            ));
        }
        let row = src.data().to_vec();
        let mut value = Tensor2::zeros(n, row.len());
        for i in 0..n {
            value.row_mut(i).copy_from_slice(&row);
        }
        let rg = self.rg(x);
        self.push(value, Op::RepeatRows { x, n }, rg, "repeat_rows")
    }

    /// Row-wise bilinear form `out[i] = h_iᵀ M v_i` as an `n×1` column.
    /// `v` may be a single row, in which case it is shared by every `h_i`.
    pub fn bilinear(&mut self, h: Var, m: Var, v: Var) -> Result<Var> {
        let (hs, ms, vs) = (self.value(h).shape(), self.value(m).shape(), self.value(v).shape());
        if hs.1 != ms.0 || vs.1 != ms.1 || !(vs.0 == hs.0 || vs.0 == 1) {
            return Err(shape_err("bilinear", format!("h {hs:?}, M {ms:?}, v {vs:?}")));
        }
        let out: Vec<f64> = if vs.0 == 1 {
            // H (M vᵀ) avoids the n×d×d product.
            let mv = gemm(self.value(m), false, self.value(v), true)?;
            gemm(self.value(h), false, &mv, false)?.into_data()
        } else {
            let hm = gemm(self.value(h), false, self.value(m), false)?;
            let vv = self.value(v);
            (0..hs.0)
                .map(|i| hm.row(i).iter().zip(vv.row(i)).map(|(a, b)| a * b).sum())
                .collect()
        };
        let rg = self.rg(h) || self.rg(m) || self.rg(v);
        self.push(Tensor2::column_vector(&out), Op::Bilinear { h, m, v }, rg, "bilinear")
    }

    /// Pulls the gradient of the 1×1 `loss` back through the tape.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(shape_err("backward", "loss must be 1x1"));
        }
        let mut grads: Vec<Option<Tensor2>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor2::filled(1, 1, 1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.pull_back(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn pull_back(&self, node: &Node<'a>, g: &Tensor2, grads: &mut [Option<Tensor2>]) -> Result<()> {
        let mut acc = |v: Var, delta: Tensor2| {
            if !self.rg(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.axpy(1.0, &delta),
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul { a, b, ta, tb } => {
                let (av, bv) = (self.value(a), self.value(b));
                if self.rg(a) {
                    let da = if ta {
                        gemm(bv, tb, g, true)?
                    } else {
                        gemm(g, false, bv, !tb)?
                    };
                    acc(a, da);
                }
                if self.rg(b) {
                    let db = if tb {
                        gemm(g, true, av, ta)?
                    } else {
                        gemm(av, !ta, g, false)?
                    };
                    acc(b, db);
                }
            }
            &Op::SpMatMul { m, x } => acc(x, m.transpose_matmul_dense(g)?),
            &Op::Transpose(x) => acc(x, g.transpose()),
            &Op::Add(a, b) => {
                acc(a, g.clone());
                acc(b, g.clone());
            }
            &Op::Sub(a, b) => {
                acc(a, g.clone());
                acc(b, g.map(|v| -v));
            }
            &Op::AddRow { x, row } => {
                acc(x, g.clone());
                let mut dr = Tensor2::zeros(1, g.cols());
                for i in 0..g.rows() {
                    for (d, s) in dr.data_mut().iter_mut().zip(g.row(i)) {
                        *d += s;
                    }
                }
                acc(row, dr);
            }
            &Op::Mul(a, b) => {
                acc(a, g.zip_map(self.value(b), |gi, bi| gi * bi));
                acc(b, g.zip_map(self.value(a), |gi, ai| gi * ai));
            }
            &Op::MulCol { x, col } => {
                let (xv, cv) = (self.value(x), self.value(col));
                let mut dx = g.clone();
                let mut dc = Tensor2::zeros(cv.rows(), 1);
                for i in 0..g.rows() {
                    let s = cv.data()[i];
                    dc.data_mut()[i] = g.row(i).iter().zip(xv.row(i)).map(|(a, b)| a * b).sum();
                    dx.row_mut(i).iter_mut().for_each(|v| *v *= s);
                }
                acc(x, dx);
                acc(col, dc);
            }
            &Op::Scale(x, c) => acc(x, g.map(|v| v * c)),
            &Op::Relu(x) => acc(x, g.zip_map(self.value(x), |gi, xi| if xi > 0.0 { gi } else { 0.0 })),
            Op::Sigmoid(x) => acc(*x, g.zip_map(&node.value, |gi, y| gi * y * (1.0 - y))),
            Op::Tanh(x) => acc(*x, g.zip_map(&node.value, |gi, y| gi * (1.0 - y * y))),
            &Op::Softplus(x) => acc(x, g.zip_map(self.value(x), |gi, xi| gi * sigmoid(xi))),
            Op::RowSoftmax(x) => {
                let y = &node.value;
                let mut dx = Tensor2::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let dot: f64 = g.row(i).iter().zip(y.row(i)).map(|(a, b)| a * b).sum();
                    for ((d, gi), yi) in dx.row_mut(i).iter_mut().zip(g.row(i)).zip(y.row(i)) {
                        *d = yi * (gi - dot);
                    }
                }
                acc(*x, dx);
            }
            &Op::RowMean(x) => {
                let n = self.value(x).rows();
                let share = g.map(|v| v / n as f64);
                let mut dx = Tensor2::zeros(n, g.cols());
                for i in 0..n {
                    dx.row_mut(i).copy_from_slice(share.data());
                }
                acc(x, dx);
            }
            &Op::MeanAll(x) => {
                let xv = self.value(x);
                acc(x, Tensor2::filled(xv.rows(), xv.cols(), g.data()[0] / xv.len() as f64));
            }
            &Op::SumAll(x) => {
                let xv = self.value(x);
                acc(x, Tensor2::filled(xv.rows(), xv.cols(), g.data()[0]));
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    let mut dp = Tensor2::zeros(g.rows(), c);
                    for i in 0..g.rows() {
                        dp.row_mut(i).copy_from_slice(&g.row(i)[off..off + c]);
                    }
                    off += c;
                    acc(p, dp);
                }
            }
            &Op::Column { x, j } => {
                let xv = self.value(x);
                let mut dx = Tensor2::zeros(xv.rows(), xv.cols());
                for i in 0..xv.rows() {
                    dx.set(i, j, g.data()[i]);
                }
                acc(x, dx);
            }
            &Op::RepeatRows { x, n } => {
                let mut dx = Tensor2::zeros(1, g.cols());
                for i in 0..n {
                    for (d, s) in dx.data_mut().iter_mut().zip(g.row(i)) {
                        *d += s;
                    }
                }
                acc(x, dx);
            }
            &Op::Bilinear { h, m, v } => {
                let (hv, mv, vv) = (self.value(h), self.value(m), self.value(v));
                let n = hv.rows();
                if vv.rows() == 1 {
                    // out = H u with u = M vᵀ
                    if self.rg(h) {
                        let u = gemm(mv, false, vv, true)?;
                        acc(h, gemm(g, false, &u, true)?);
                    }
                    if self.rg(v) || self.rg(m) {
                        let gh = gemm(g, true, hv, false)?;
                        if self.rg(v) {
                            acc(v, gemm(&gh, false, mv, false)?);
                        }
                        if self.rg(m) {
                            acc(m, gemm(&gh, true, vv, false)?);
                        }
                    }
                    return Ok(());
                }
                // dP[i,:] = g_i v_i, where P = H M
                let mut dp = Tensor2::zeros(n, mv.cols());
                for i in 0..n {
                    let vr = vv.row(i);
                    let gi = g.data()[i];
                    for (d, s) in dp.row_mut(i).iter_mut().zip(vr) {
                        *d = gi * s;
                    }
                }
                if self.rg(v) {
                    let hm = gemm(hv, false, mv, false)?;
                    let mut dv = Tensor2::zeros(vv.rows(), vv.cols());
                    for i in 0..n {
                        let gi = g.data()[i];
                        for (d, s) in dv.row_mut(i).iter_mut().zip(hm.row(i)) {
                            *d += gi * s;
                        }
                    }
                    acc(v, dv);
                }
                if self.rg(h) {
                    acc(h, gemm(&dp, false, mv, true)?);
                }
                if self.rg(m) {
                    acc(m, gemm(hv, true, &dp, false)?);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_at_zero() {
        let mut t = Tape::new();
        let x = t.param(Tensor2::zeros(1, 1)).unwrap();
        let y = t.sigmoid(x).unwrap();
        assert_eq!(t.scalar(y), 0.5);
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().data()[0], 0.25);
    }

    #[test]
    fn relu_dead_region() {
        let mut t = Tape::new();
        let x = t.param(Tensor2::from_rows(&[[-1.0, -2.0], [-0.5, -3.0]])).unwrap();
        let y = t.relu(x).unwrap();
        assert!(t.value(y).data().iter().all(|&v| v == 0.0));
        let s = t.sum_all(y).unwrap();
        let g = t.backward(s).unwrap();
        assert!(g.get(x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bilinear_with_identity_is_dot_product() {
        let mut t = Tape::new();
        let h = t.constant(Tensor2::from_rows(&[[1.0, 2.0, 3.0]])).unwrap();
        let m = t.constant(Tensor2::identity(3)).unwrap();
        let v = t.constant(Tensor2::from_rows(&[[4.0, -1.0, 0.5]])).unwrap();
        let out = t.bilinear(h, m, v).unwrap();
        assert_eq!(t.value(out).data(), &[4.0 - 2.0 + 1.5]);
    }

    #[test]
    fn shape_errors_are_reported() {
        let mut t = Tape::new();
        let a = t.param(Tensor2::zeros(2, 3)).unwrap();
        let b = t.param(Tensor2::zeros(2, 2)).unwrap();
        assert!(t.add(a, b).is_err());
        assert!(t.matmul(a, a).is_err());
        assert!(t.mul_col(a, b).is_err());
        assert!(t.bilinear(a, b, a).is_err());
        let c = t.param(Tensor2::zeros(1, 2)).unwrap();
        assert!(t.backward(a).is_err());
        assert!(t.add_row(a, c).is_err());
    }

    #[test]
    fn non_finite_forward_is_rejected() {
        let mut t = Tape::new();
        let a = t.param(Tensor2::filled(1, 1, 1e300)).unwrap();
        assert!(matches!(t.mul(a, a), Err(HdmiError::NonFinite("mul"))));
    }

    #[test]
    fn row_softmax_rows_sum_to_one() {
        let mut t = Tape::new();
        let x = t
            .param(Tensor2::from_rows(&[[0.5, -0.5, 3.0], [700.0, 0.0, -700.0]]))
            .unwrap();
        let y = t.row_softmax(x).unwrap();
        for i in 0..2 {
            let row = t.value(y).row(i);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn row_mean_backward_is_uniform() {
        let mut t = Tape::new();
        let x = t
            .param(Tensor2::from_rows(&[[1.0, 3.0], [3.0, 5.0], [0.0, 1.0], [2.0, 2.0]]))
            .unwrap();
        let m = t.row_mean(x).unwrap();
        let w = t.constant(Tensor2::from_rows(&[[2.0, -4.0]])).unwrap();
        let p = t.mul(m, w).unwrap();
        let s = t.sum_all(p).unwrap();
        let g = t.backward(s).unwrap();
        for i in 0..4 {
            assert_eq!(g.get(x).unwrap().row(i), &[0.5, -1.0]);
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(-800.0), 0.0);
        assert_eq!(softplus(800.0), 800.0);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-16);
    }
}
