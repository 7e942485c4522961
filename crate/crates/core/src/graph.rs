//! Attributed (multiplex) networks, GCN adjacency normalization and the
//! row-shuffling corruption used to build negative networks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{shape_err, HdmiError, Result};
use crate::tensor::Tensor2;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        for &(r, c, _) in &sorted {
            if r >= n_rows || c >= n_cols {
                return Err(HdmiError::InvalidNetwork(format!(
                    "entry ({r}, {c}) outside {n_rows}x{n_cols}"
                )));
            }
        }
        sorted.sort_by_key(|a| (a.0, a.1));
        let mut indptr = vec![0usize; n_rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..n_rows {
            indptr[r + 1] += indptr[r];
        }
        Ok(Self {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(col, value)` pairs of row `r`, columns ascending.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.row(r).map(|(_, v)| v).sum()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map_or(0.0, |(_, v)| v)
    }

    pub fn to_dense(&self) -> Tensor2 {
        let mut out = Tensor2::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                out.set(r, c, v);
            }
        }
        out
    }

    /// `self · x`.
    pub fn matmul_dense(&self, x: &Tensor2) -> Result<Tensor2> {
        if x.rows() != self.n_cols {
            return Err(shape_err(
                "sparse matmul",
                format!("{}x{} times {}x{}", self.n_rows, self.n_cols, x.rows(), x.cols()),
            ));
        }
        let mut out = Tensor2::zeros(self.n_rows, x.cols());
        for r in 0..self.n_rows {
            let dst = out.row_mut(r);
            for (c, v) in self.row(r) {
                for (d, s) in dst.iter_mut().zip(x.row(c)) {
                    *d += v * s;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · x`.
    pub fn transpose_matmul_dense(&self, x: &Tensor2) -> Result<Tensor2> {
        if x.rows() != self.n_rows {
            return Err(shape_err(
                "sparse transpose matmul",
                format!("{}x{}ᵀ times {}x{}", self.n_rows, self.n_cols, x.rows(), x.cols()),
            ));
        }
        let mut out = Tensor2::zeros(self.n_cols, x.cols());
        for r in 0..self.n_rows {
            let src = x.row(r);
            for (c, v) in self.row(r) {
                for (d, s) in out.row_mut(c).iter_mut().zip(src) {
                    *d += v * s;
                }
            }
        }
        Ok(out)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.n_rows == self.n_cols
            && (0..self.n_rows).all(|r| self.row(r).all(|(c, v)| (self.get(c, r) - v).abs() <= tol))
    }
}

/// One relation of a multiplex network: an undirected, unweighted graph.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedLayer {
    relation_name: String,
    adjacency: CsrMatrix,
}

impl AttributedLayer {
    /// Symmetrizes `edges`, collapses duplicates and drops self-loops.
    pub fn from_edges(relation_name: impl Into<String>, n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= n_nodes || b >= n_nodes {
                return Err(HdmiError::InvalidNetwork(format!(
                    "edge ({a}, {b}) references a node outside 0..{n_nodes}"
                )));
            }
            if a != b {
                pairs.push((a.min(b), a.max(b)));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let triplets: Vec<(usize, usize, f64)> = pairs.iter().flat_map(|&(a, b)| [(a, b, 1.0), (b, a, 1.0)]).collect();
        Ok(Self {
            relation_name: relation_name.into(),
            adjacency: CsrMatrix::from_triplets(n_nodes, n_nodes, &triplets)?,
        })
    }

    pub fn relation_name(&self) -> &str {
        &self.relation_name
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.n_rows()
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    /// Undirected edges with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n_nodes())
            .flat_map(|r| {
                self.adjacency
                    .row(r)
                    .filter(move |&(c, _)| c > r)
                    .map(move |(c, _)| (r, c))
            })
            .collect()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency.row(node).count()
    }
}

/// Node-index sets for evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// `R ≥ 1` layers over one node set sharing an `N × d_F` attribute matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplexNetwork {
    layers: Vec<AttributedLayer>,
    attributes: Tensor2,
    labels: Option<Vec<usize>>,
    splits: Option<Splits>,
}

impl MultiplexNetwork {
    pub fn new(
        layers: Vec<AttributedLayer>,
        attributes: Tensor2,
        labels: Option<Vec<usize>>,
        splits: Option<Splits>,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(HdmiError::InvalidNetwork("at least one layer is required".into()));
        }
        let n = attributes.rows();
        if n == 0 || attributes.cols() == 0 {
            return Err(HdmiError::InvalidNetwork("attribute matrix is empty".into()));
        }
        if !attributes.is_finite() {
            return Err(HdmiError::InvalidNetwork(
                "attribute matrix has non-finite entries".into(),
            ));
        }
        for layer in &layers {
            if layer.n_nodes() != n {
                return Err(HdmiError::InvalidNetwork(format!(
                    "layer '{}' has {} nodes but the attribute matrix has {n} rows",
                    layer.relation_name(),
                    layer.n_nodes()
                )));
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(HdmiError::InvalidNetwork(format!(
                    "{} labels for {n} nodes",
                    labels.len()
                )));
            }
        }
        if let Some(splits) = &splits {
            for &i in splits.train.iter().chain(&splits.val).chain(&splits.test) {
                if i >= n {
                    return Err(HdmiError::InvalidNetwork(format!("split node {i} out of range")));
                }
            }
        }
        Ok(Self {
            layers,
            attributes,
            labels,
            splits,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.attributes.rows()
    }

    pub fn attribute_dim(&self) -> usize {
        self.attributes.cols()
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[AttributedLayer] {
        &self.layers
    }

    pub fn layer(&self, r: usize) -> Option<&AttributedLayer> {
        self.layers.get(r)
    }

    pub fn attributes(&self) -> &Tensor2 {
        &self.attributes
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn splits(&self) -> Option<&Splits> {
        self.splits.as_ref()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| l.iter().max().map_or(0, |m| m + 1))
    }

    /// A single-layer network over layer `r`, keeping attributes and labels.
    pub fn select_layer(&self, r: usize) -> Result<Self> {
        let layer = self
            .layers
            .get(r)
            .ok_or_else(|| HdmiError::InvalidArgument(format!("layer {r} out of range 0..{}", self.layers.len())))?;
        Ok(Self {
            layers: vec![layer.clone()],
            attributes: self.attributes.clone(),
            labels: self.labels.clone(),
            splits: self.splits.clone(),
        })
    }
}

/// `D̂^{-1/2} (A + wI) D̂^{-1/2}` for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    matrix: CsrMatrix,
    self_weight: f64,
}

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn self_weight(&self) -> f64 {
        self.self_weight
    }

    pub fn n_nodes(&self) -> usize {
        self.matrix.n_rows()
    }
}

pub fn normalize_adjacency(layer: &AttributedLayer, self_weight: f64) -> Result<NormalizedAdjacency> {
    if !(self_weight >= 0.0 && self_weight.is_finite()) {
        return Err(HdmiError::InvalidArgument(format!(
            "self-connection weight must be finite and >= 0, got {self_weight}"
        )));
    }
    let adj = layer.adjacency();
    let n = adj.n_rows();
    let mut deg = Vec::with_capacity(n);
    for i in 0..n {
        let d = adj.row_sum(i) + self_weight;
        if d <= 0.0 {
            return Err(HdmiError::ZeroRowSum { node: i });
        }
        deg.push(d);
    }
    // One square root per entry keeps the diagonal of an isolated node exact.
    let mut triplets = Vec::with_capacity(adj.nnz() + n);
    for i in 0..n {
        for (j, v) in adj.row(i) {
            triplets.push((i, j, v / (deg[i] * deg[j]).sqrt()));
        }
        if self_weight > 0.0 {
            triplets.push((i, i, self_weight / deg[i]));
        }
    }
    Ok(NormalizedAdjacency {
        matrix: CsrMatrix::from_triplets(n, n, &triplets)?,
        self_weight,
    })
}

/// Row permutation `perm` with `F̃[n] = F[perm[n]]`.
pub fn random_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

/// Shuffles the rows of `features`; returns the corrupted matrix and the
/// permutation used (`F̃[n] = F[perm[n]]`).
pub fn corrupt_attributes<R: Rng + ?Sized>(features: &Tensor2, rng: &mut R) -> (Tensor2, Vec<usize>) {
    let perm = random_permutation(features.rows(), rng);
    (features.gather_rows(&perm), perm)
}

/// Inverse of a permutation.
pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}
