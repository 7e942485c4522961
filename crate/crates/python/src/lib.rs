//! Python bindings. Matrices cross the boundary as lists of row lists.

use std::error::Error as _;
use std::path::PathBuf;

use hdmi_core::eval::stratified_split;
use hdmi_core::gradcheck::standard_suite;
use hdmi_core::mi_oracle::{decomposition_sweep, interaction_information as ii, mutual_information};
use hdmi_core::model::EmbeddingMatrix;
use hdmi_core::synthetic::{default_splits, TRAIN_FRACTION};
use hdmi_core::trainer::{zero_init_hdi_loss, zero_init_hdmi_loss};
use hdmi_core::{
    DiscreteJoint, HdmiError, MultiplexNetwork, Splits, SyntheticSpec, Tensor2, TrainReport, TrainingConfig,
};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn to_py(e: HdmiError) -> PyErr {
    let mut msg = e.to_string();
    let mut src = e.source();
    while let Some(s) = src {
        msg.push_str(&format!(": {s}"));
        src = s.source();
    }
    match e {
        HdmiError::Io { .. } => PyIOError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn rows(t: &Tensor2) -> Vec<Vec<f64>> {
    t.to_rows()
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<Tensor2> {
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Ok(Tensor2::from_rows(rows))
}

/// Training hyperparameters; keyword arguments override defaults.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: TrainingConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (**overrides))]
    fn new(overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut cfg = Self {
            inner: TrainingConfig::default(),
        };
        if let Some(kw) = overrides {
            for (k, v) in kw.iter() {
                cfg.set(&k.extract::<String>()?, &v)?;
            }
        }
        cfg.inner.validate().map_err(to_py)?;
        Ok(cfg)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: TrainingConfig::load(&path).map_err(to_py)?,
        })
    }

    /// Sets one key; lists are accepted for `lambda_r`.
    fn set(&mut self, key: &str, value: &Bound<'_, PyAny>) -> PyResult<()> {
        let text = if let Ok(list) = value.cast::<PyList>() {
            list.iter()
                .map(|x| x.str().map(|s| s.to_string()))
                .collect::<PyResult<Vec<_>>>()?
                .join(",")
        } else if value.is_none() {
            "auto".to_string()
        } else {
            value.str()?.to_string()
        };
        self.inner.set(key, &text).map_err(to_py)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn embedding_dim(&self) -> usize {
        self.inner.embedding_dim
    }

    #[getter]
    fn max_epochs(&self) -> usize {
        self.inner.max_epochs
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(embedding_dim={}, max_epochs={}, seed={})",
            self.inner.embedding_dim, self.inner.max_epochs, self.inner.seed
        )
    }
}

/// Attributed multiplex network.
#[pyclass(name = "Network", frozen)]
struct PyNetwork {
    inner: MultiplexNetwork,
}

#[pymethods]
impl PyNetwork {
    /// `edges[r]` lists undirected `(a, b)` pairs of layer `r`.
    #[new]
    #[pyo3(signature = (edges, attributes, labels=None, layer_names=None))]
    fn new(
        edges: Vec<Vec<(usize, usize)>>,
        attributes: Vec<Vec<f64>>,
        labels: Option<Vec<usize>>,
        layer_names: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let attributes = matrix(&attributes)?;
        let n = attributes.rows();
        let names = layer_names.unwrap_or_else(|| (0..edges.len()).map(|r| format!("L{r}")).collect());
        if names.len() != edges.len() {
            return Err(PyValueError::new_err("layer_names must match the number of edge lists"));
        }
        let layers = names
            .iter()
            .zip(&edges)
            .map(|(name, e)| hdmi_core::AttributedLayer::from_edges(name.clone(), n, e))
            .collect::<Result<Vec<_>, _>>()
            .map_err(to_py)?;
        let inner = MultiplexNetwork::new(layers, attributes, labels, None).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(manifest: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: hdmi_core::io::load_multiplex(&manifest).map_err(to_py)?,
        })
    }

    /// Writes the network and returns the manifest path.
    fn save(&self, directory: PathBuf) -> PyResult<PathBuf> {
        hdmi_core::io::save_multiplex(&self.inner, &directory).map_err(to_py)
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.inner.n_nodes()
    }

    #[getter]
    fn n_layers(&self) -> usize {
        self.inner.n_layers()
    }

    #[getter]
    fn attribute_dim(&self) -> usize {
        self.inner.attribute_dim()
    }

    #[getter]
    fn layer_names(&self) -> Vec<String> {
        self.inner
            .layers()
            .iter()
            .map(|l| l.relation_name().to_string())
            .collect()
    }

    #[getter]
    fn labels(&self) -> Option<Vec<usize>> {
        self.inner.labels().map(<[usize]>::to_vec)
    }

    /// `(train, val, test)` or `None`.
    #[getter]
    fn splits(&self) -> Option<(Vec<usize>, Vec<usize>, Vec<usize>)> {
        self.inner
            .splits()
            .map(|s| (s.train.clone(), s.val.clone(), s.test.clone()))
    }

    fn edges(&self, layer: usize) -> PyResult<Vec<(usize, usize)>> {
        self.inner
            .layer(layer)
            .map(|l| l.edges())
            .ok_or_else(|| PyValueError::new_err(format!("no layer {layer}")))
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(n_nodes={}, n_layers={})",
            self.inner.n_nodes(),
            self.inner.n_layers()
        )
    }
}

fn trace(report: &TrainReport) -> Vec<f64> {
    report.trace.iter().map(|r| r.total).collect()
}

/// Result of a training run.
#[pyclass(name = "Run", frozen)]
struct PyRun {
    #[pyo3(get)]
    embedding: Vec<Vec<f64>>,
    /// Per-layer embeddings; a single entry for single-layer runs.
    #[pyo3(get)]
    per_layer: Vec<Vec<Vec<f64>>>,
    /// N x R attention weights; `None` for single-layer runs.
    #[pyo3(get)]
    attention: Option<Vec<Vec<f64>>>,
    #[pyo3(get)]
    loss_trace: Vec<f64>,
    #[pyo3(get)]
    best_epoch: Option<usize>,
    #[pyo3(get)]
    stopped_early: bool,
    trace_tsv: String,
}

#[pymethods]
impl PyRun {
    fn trace_tsv(&self) -> String {
        self.trace_tsv.clone()
    }
}

fn config_or_default(config: Option<PyConfig>) -> TrainingConfig {
    config.map_or_else(TrainingConfig::default, |c| c.inner)
}

/// Trains the multiplex model on every layer.
#[pyfunction]
#[pyo3(signature = (network, config=None))]
fn train_hdmi(py: Python<'_>, network: &PyNetwork, config: Option<PyConfig>) -> PyResult<PyRun> {
    let cfg = config_or_default(config);
    let run = py
        .detach(|| hdmi_core::train_hdmi(&network.inner, &cfg))
        .map_err(to_py)?;
    Ok(PyRun {
        embedding: rows(run.fused.as_tensor()),
        per_layer: run.per_layer.iter().map(|h| rows(h.as_tensor())).collect(),
        attention: Some(rows(run.attention.as_tensor())),
        loss_trace: trace(&run.report),
        best_epoch: run.report.best_epoch,
        stopped_early: run.report.stopped_early,
        trace_tsv: run.report.trace_tsv(),
    })
}

/// Trains the single-layer model on one layer.
#[pyfunction]
#[pyo3(signature = (network, layer, config=None))]
fn train_hdi(py: Python<'_>, network: &PyNetwork, layer: usize, config: Option<PyConfig>) -> PyResult<PyRun> {
    let cfg = config_or_default(config);
    let l = network
        .inner
        .layer(layer)
        .ok_or_else(|| PyValueError::new_err(format!("no layer {layer}")))?;
    let run = py
        .detach(|| hdmi_core::train_hdi(l, network.inner.attributes(), &cfg))
        .map_err(to_py)?;
    let h = rows(run.embedding.as_tensor());
    Ok(PyRun {
        per_layer: vec![h.clone()],
        embedding: h,
        attention: None,
        loss_trace: trace(&run.report),
        best_epoch: run.report.best_epoch,
        stopped_early: run.report.stopped_early,
        trace_tsv: run.report.trace_tsv(),
    })
}

/// Planted-community multiplex network with labels and a stratified 30/70 split.
#[pyfunction]
#[pyo3(signature = (
    nodes=200, communities=2, p_in=0.10, p_out=0.01, attribute_dim=32,
    attribute_signal=1.0, attribute_noise=1.0, informativeness=vec![1.0, 0.5], seed=0
))]
#[allow(clippy::too_many_arguments)]
fn synthetic(
    nodes: usize,
    communities: usize,
    p_in: f64,
    p_out: f64,
    attribute_dim: usize,
    attribute_signal: f64,
    attribute_noise: f64,
    informativeness: Vec<f64>,
    seed: u64,
) -> PyResult<PyNetwork> {
    let spec = SyntheticSpec {
        nodes,
        communities,
        layers: informativeness.len(),
        p_in,
        p_out,
        attribute_dim,
        attribute_signal,
        attribute_noise,
        layer_informativeness: informativeness,
        seed,
    };
    let net = hdmi_core::generate(&spec).map_err(to_py)?;
    let splits = default_splits(&net, seed).map_err(to_py)?;
    let inner = MultiplexNetwork::new(
        net.layers().to_vec(),
        net.attributes().clone(),
        net.labels().map(<[usize]>::to_vec),
        splits,
    )
    .map_err(to_py)?;
    Ok(PyNetwork { inner })
}

/// Macro/micro-F1, k-means NMI and Sim@k. Without explicit indices a
/// stratified 30/70 split drawn with `seed` is used.
#[pyfunction]
#[pyo3(signature = (embedding, labels, train=None, test=None, k=5, seed=0))]
fn evaluate<'py>(
    py: Python<'py>,
    embedding: Vec<Vec<f64>>,
    labels: Vec<usize>,
    train: Option<Vec<usize>>,
    test: Option<Vec<usize>>,
    k: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let h = EmbeddingMatrix(matrix(&embedding)?);
    let splits = match (train, test) {
        (Some(train), Some(test)) => Splits {
            train,
            val: Vec::new(),
            test,
        },
        (None, None) => stratified_split(&labels, TRAIN_FRACTION, seed).map_err(to_py)?,
        _ => return Err(PyValueError::new_err("pass both train and test, or neither")),
    };
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let r = py
        .detach(|| hdmi_core::evaluate(&h, &labels, &splits, classes, k, seed))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("macro_f1", r.macro_f1)?;
    out.set_item("micro_f1", r.micro_f1)?;
    out.set_item("nmi", r.nmi)?;
    out.set_item(format!("sim@{k}"), r.sim_at_k)?;
    out.set_item("train_size", r.train_size)?;
    out.set_item("test_size", r.test_size)?;
    Ok(out)
}

/// Interaction information `I(X;Y;Z)` of a three-variable joint given as a
/// nested list `p[x][y][z]`.
#[pyfunction]
fn interaction_information(p: Vec<Vec<Vec<f64>>>) -> PyResult<f64> {
    let (a, b) = (p.len(), p.first().map_or(0, Vec::len));
    let c = p.first().and_then(|r| r.first()).map_or(0, Vec::len);
    if p.iter().any(|r| r.len() != b || r.iter().any(|s| s.len() != c)) {
        return Err(PyValueError::new_err("joint must be a rectangular 3-d array"));
    }
    let flat: Vec<f64> = p.into_iter().flatten().flatten().collect();
    let joint = DiscreteJoint::new(vec![a, b, c], flat).map_err(to_py)?;
    ii(&joint).map_err(to_py)
}

/// Mutual information `I(X;Y)` of a 2-d joint `p[x][y]`.
#[pyfunction]
fn mutual_info(p: Vec<Vec<f64>>) -> PyResult<f64> {
    let (a, b) = (p.len(), p.first().map_or(0, Vec::len));
    if p.iter().any(|r| r.len() != b) {
        return Err(PyValueError::new_err("joint must be rectangular"));
    }
    let joint = DiscreteJoint::new(vec![a, b], p.into_iter().flatten().collect()).map_err(to_py)?;
    mutual_information(&joint, 0, 1).map_err(to_py)
}

/// Largest decomposition residual over `count` random joints.
#[pyfunction]
#[pyo3(signature = (count=100, max_alphabet=4, seed=0))]
fn mi_sweep(count: usize, max_alphabet: usize, seed: u64) -> PyResult<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(decomposition_sweep(count, max_alphabet, &mut rng)
        .map_err(to_py)?
        .max_residual)
}

/// Per-loss max relative gradient error on the 12-node fixture.
#[pyfunction]
#[pyo3(signature = (seed=0, dim=8))]
fn gradcheck(py: Python<'_>, seed: u64, dim: usize) -> PyResult<Vec<(String, f64)>> {
    let checks = py.detach(|| standard_suite(seed, dim, None)).map_err(to_py)?;
    Ok(checks
        .into_iter()
        .map(|c| (c.name.to_string(), c.report.max_rel_error))
        .collect())
}

/// Closed-form loss at zero-initialized discriminators; `layers = 0`
/// gives the single-layer value.
#[pyfunction]
#[pyo3(signature = (layers=0, config=None))]
fn zero_init_loss(layers: usize, config: Option<PyConfig>) -> PyResult<f64> {
    let cfg = config_or_default(config);
    if layers == 0 {
        return Ok(zero_init_hdi_loss(&cfg));
    }
    Ok(zero_init_hdmi_loss(&cfg.hdmi_weights(layers).map_err(to_py)?))
}

#[pymodule]
fn hdmi(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyRun>()?;
    m.add_function(wrap_pyfunction!(train_hdmi, m)?)?;
    m.add_function(wrap_pyfunction!(train_hdi, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(interaction_information, m)?)?;
    m.add_function(wrap_pyfunction!(mutual_info, m)?)?;
    m.add_function(wrap_pyfunction!(mi_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(zero_init_loss, m)?)?;
    Ok(())
}
