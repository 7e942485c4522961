//! Plain-text dataset and artifact formats.
//!
//! * Manifest: `key = value` lines. Keys `attributes`, `labels`, `train`,
//!   `val`, `test` name files; each `layer = NAME FILE` line adds a layer
//!   in order. Relative paths resolve against the manifest's directory.
//! * Edge file: `a b` per line, 0-based; `#` lines are comments.
//! * Matrix file: header `N d`, then `N` rows of `d` numbers. Attribute
//!   files may instead start with `sparse N d` followed by `row col value`.
//! * Label file: `node class` per line. Split file: one node per line.
//! * Parameter snapshot: per block a `name rows cols` header and its rows.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{HdmiError, Result};
use crate::graph::{AttributedLayer, MultiplexNetwork, Splits};
use crate::model::EmbeddingMatrix;
use crate::tensor::Tensor2;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| HdmiError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| HdmiError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> HdmiError {
    HdmiError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Non-empty, non-comment lines with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, tok: &str, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| parse_err(path, line, format!("cannot parse {what} '{tok}'")))
}

pub fn read_edges(path: &Path, n_nodes: usize) -> Result<Vec<(usize, usize)>> {
    let text = read_text(path)?;
    let mut edges = Vec::new();
    for (no, line) in content_lines(&text) {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(parse_err(
                path,
                no,
                format!("expected 2 node indices, found {} fields", toks.len()),
            ));
        }
        let a: usize = parse_field(path, no, toks[0], "node index")?;
        let b: usize = parse_field(path, no, toks[1], "node index")?;
        if a >= n_nodes || b >= n_nodes {
            return Err(parse_err(path, no, format!("node index out of range 0..{n_nodes}")));
        }
        edges.push((a, b));
    }
    Ok(edges)
}

pub fn write_edges(path: &Path, layer: &AttributedLayer) -> Result<()> {
    let mut out = format!("# {}\n", layer.relation_name());
    for (a, b) in layer.edges() {
        out.push_str(&format!("{a} {b}\n"));
    }
    write_text(path, &out)
}

fn parse_header(path: &Path, no: usize, toks: &[&str]) -> Result<(usize, usize)> {
    if toks.len() != 2 {
        return Err(parse_err(path, no, "expected header 'N d'"));
    }
    Ok((
        parse_field(path, no, toks[0], "row count")?,
        parse_field(path, no, toks[1], "column count")?,
    ))
}

fn parse_value(path: &Path, no: usize, tok: &str) -> Result<f64> {
    let v: f64 = parse_field(path, no, tok, "number")?;
    if !v.is_finite() {
        return Err(parse_err(path, no, format!("non-finite value '{tok}'")));
    }
    Ok(v)
}

/// Reads a dense `N d` matrix or, when `allow_sparse`, a `sparse N d`
/// triplet file.
fn read_matrix_impl(path: &Path, allow_sparse: bool) -> Result<Tensor2> {
    let text = read_text(path)?;
    let mut lines = content_lines(&text);
    let (hno, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file, expected header"))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.first() == Some(&"sparse") {
        if !allow_sparse {
            return Err(parse_err(path, hno, "sparse form is only accepted for attribute files"));
        }
        let (n, d) = parse_header(path, hno, &toks[1..])?;
        let mut m = Tensor2::zeros(n, d);
        for (no, line) in lines {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 3 {
                return Err(parse_err(path, no, "expected 'row col value'"));
            }
            let r: usize = parse_field(path, no, t[0], "row")?;
            let c: usize = parse_field(path, no, t[1], "column")?;
            if r >= n || c >= d {
                return Err(parse_err(path, no, format!("entry ({r}, {c}) outside {n}x{d}")));
            }
            let v = parse_value(path, no, t[2])?;
            m.set(r, c, m.get(r, c) + v);
        }
        return Ok(m);
    }
    let (n, d) = parse_header(path, hno, &toks)?;
    let mut data = Vec::with_capacity(n * d);
    let mut rows = 0;
    for (no, line) in lines {
        let before = data.len();
        for tok in line.split_whitespace() {
            data.push(parse_value(path, no, tok)?);
        }
        if data.len() - before != d {
            return Err(parse_err(
                path,
                no,
                format!("row has {} values, header says {d}", data.len() - before),
            ));
        }
        rows += 1;
        if rows > n {
            return Err(parse_err(path, no, format!("more than {n} rows")));
        }
    }
    if rows != n {
        return Err(parse_err(path, hno, format!("header says {n} rows, found {rows}")));
    }
    Tensor2::from_vec(n, d, data)
}

pub fn read_attributes(path: &Path) -> Result<Tensor2> {
    read_matrix_impl(path, true)
}

pub fn read_matrix(path: &Path) -> Result<Tensor2> {
    read_matrix_impl(path, false)
}

/// Values use Rust's shortest round-trip formatting, so a write followed
/// by a read reproduces every bit.
pub fn format_matrix(m: &Tensor2) -> String {
    let mut out = format!("{} {}\n", m.rows(), m.cols());
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: &Path, m: &Tensor2) -> Result<()> {
    write_text(path, &format_matrix(m))
}

pub fn write_embedding(path: &Path, h: &EmbeddingMatrix) -> Result<()> {
    write_matrix(path, h.as_tensor())
}

pub fn read_embedding(path: &Path) -> Result<EmbeddingMatrix> {
    read_matrix(path).map(EmbeddingMatrix)
}

/// Every node must appear exactly once.
pub fn read_labels(path: &Path, n_nodes: usize) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    let mut labels = vec![None; n_nodes];
    for (no, line) in content_lines(&text) {
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 2 {
            return Err(parse_err(path, no, "expected 'node class'"));
        }
        let node: usize = parse_field(path, no, t[0], "node index")?;
        let class: usize = parse_field(path, no, t[1], "class id")?;
        let slot = labels
            .get_mut(node)
            .ok_or_else(|| parse_err(path, no, format!("node {node} out of range 0..{n_nodes}")))?;
        if slot.replace(class).is_some() {
            return Err(parse_err(path, no, format!("node {node} labeled twice")));
        }
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| parse_err(path, 0, format!("node {i} has no label"))))
        .collect()
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let out: String = labels.iter().enumerate().map(|(i, c)| format!("{i} {c}\n")).collect();
    write_text(path, &out)
}

pub fn read_index_list(path: &Path, n_nodes: usize) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    content_lines(&text)
        .map(|(no, line)| {
            let i: usize = parse_field(path, no, line, "node index")?;
            if i >= n_nodes {
                return Err(parse_err(path, no, format!("node {i} out of range 0..{n_nodes}")));
            }
            Ok(i)
        })
        .collect()
}

pub fn write_index_list(path: &Path, idx: &[usize]) -> Result<()> {
    let out: String = idx.iter().map(|i| format!("{i}\n")).collect();
    write_text(path, &out)
}

/// Parsed manifest with paths already resolved.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub attributes: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub layers: Vec<(String, PathBuf)>,
}

impl Manifest {
    pub fn parse(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |v: &str| base.join(v);
        let mut m = Manifest::default();
        for (no, line) in content_lines(&text) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(path, no, "expected 'key = value'"))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "attributes" => m.attributes = Some(resolve(v)),
                "labels" => m.labels = Some(resolve(v)),
                "train" => m.train = Some(resolve(v)),
                "val" => m.val = Some(resolve(v)),
                "test" => m.test = Some(resolve(v)),
                "layer" => {
                    let (name, file) = v
                        .split_once(char::is_whitespace)
                        .ok_or_else(|| parse_err(path, no, "expected 'layer = NAME FILE'"))?;
                    m.layers.push((name.to_string(), resolve(file.trim())));
                }
                other => return Err(parse_err(path, no, format!("unknown key '{other}'"))),
            }
        }
        if m.attributes.is_none() {
            return Err(parse_err(path, 0, "manifest has no 'attributes' entry"));
        }
        if m.layers.is_empty() {
            return Err(parse_err(path, 0, "manifest lists no layers"));
        }
        Ok(m)
    }
}

pub fn load_multiplex(manifest: &Path) -> Result<MultiplexNetwork> {
    let m = Manifest::parse(manifest)?;
    let attributes = read_attributes(m.attributes.as_deref().expect("checked in parse"))?;
    let n = attributes.rows();
    let layers = m
        .layers
        .iter()
        .map(|(name, file)| AttributedLayer::from_edges(name.clone(), n, &read_edges(file, n)?))
        .collect::<Result<Vec<_>>>()?;
    let labels = m.labels.as_deref().map(|p| read_labels(p, n)).transpose()?;
    let splits = if m.train.is_some() || m.val.is_some() || m.test.is_some() {
        let read = |p: &Option<PathBuf>| p.as_deref().map_or(Ok(Vec::new()), |p| read_index_list(p, n));
        Some(Splits {
            train: read(&m.train)?,
            val: read(&m.val)?,
            test: read(&m.test)?,
        })
    } else {
        None
    };
    MultiplexNetwork::new(layers, attributes, labels, splits)
}

/// Writes `net` into `dir` (created if needed) and returns the manifest path.
pub fn save_multiplex(net: &MultiplexNetwork, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|source| HdmiError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut manifest = String::from("attributes = attributes.txt\n");
    write_matrix(&dir.join("attributes.txt"), net.attributes())?;
    if let Some(labels) = net.labels() {
        write_labels(&dir.join("labels.txt"), labels)?;
        manifest.push_str("labels = labels.txt\n");
    }
    if let Some(s) = net.splits() {
        for (key, idx) in [("train", &s.train), ("val", &s.val), ("test", &s.test)] {
            let file = format!("{key}.txt");
            write_index_list(&dir.join(&file), idx)?;
            manifest.push_str(&format!("{key} = {file}\n"));
        }
    }
    for (r, layer) in net.layers().iter().enumerate() {
        let file = format!("layer{r}.edges");
        write_edges(&dir.join(&file), layer)?;
        manifest.push_str(&format!("layer = {} {file}\n", layer.relation_name()));
    }
    let path = dir.join("manifest.txt");
    write_text(&path, &manifest)?;
    Ok(path)
}

pub fn write_parameters(path: &Path, names: &[String], tensors: &[Tensor2]) -> Result<()> {
    if names.len() != tensors.len() {
        return Err(HdmiError::InvalidArgument(format!(
            "{} names for {} tensors",
            names.len(),
            tensors.len()
        )));
    }
    let mut out = String::new();
    for (name, t) in names.iter().zip(tensors) {
        out.push_str(&format!("{name} {}", format_matrix(t)));
    }
    write_text(path, &out)
}

pub fn read_parameters(path: &Path) -> Result<Vec<(String, Tensor2)>> {
    let text = read_text(path)?;
    let mut lines = content_lines(&text).peekable();
    let mut out = Vec::new();
    while let Some((no, header)) = lines.next() {
        let t: Vec<&str> = header.split_whitespace().collect();
        if t.len() != 3 {
            return Err(parse_err(path, no, "expected block header 'name rows cols'"));
        }
        let (rows, cols) = parse_header(path, no, &t[1..])?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (rno, line) = lines
                .next()
                .ok_or_else(|| parse_err(path, no, format!("block '{}' is truncated", t[0])))?;
            let before = data.len();
            for tok in line.split_whitespace() {
                data.push(parse_value(path, rno, tok)?);
            }
            if data.len() - before != cols {
                return Err(parse_err(path, rno, format!("expected {cols} values")));
            }
        }
        out.push((t[0].to_string(), Tensor2::from_vec(rows, cols, data)?));
    }
    Ok(out)
}
