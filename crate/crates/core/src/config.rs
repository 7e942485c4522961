//! Training configuration and its flat `key = value` text form.

use std::fmt::Write as _;
use std::path::Path;

use crate::adam::AdamConfig;
use crate::error::{HdmiError, Result};
use crate::fusion::HdmiWeights;
use crate::model::LossWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub embedding_dim: usize,
    /// `None` means "same as `embedding_dim`".
    pub attention_dim: Option<usize>,
    pub self_weight: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub lambda_e: f64,
    pub lambda_i: f64,
    pub lambda_j: f64,
    pub lambda_m: f64,
    /// Per-layer coefficients; empty means 1 for every layer.
    pub lambda_r: Vec<f64>,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 128,
            attention_dim: None,
            self_weight: 3.0,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 500,
            patience: 100,
            lambda_e: 1.0,
            lambda_i: 1.0,
            lambda_j: 1.0,
            lambda_m: 1.0,
            lambda_r: Vec::new(),
            seed: 0,
            precision: Precision::F64,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| HdmiError::Config(format!("{key}: cannot parse '{value}'")))
}

impl TrainingConfig {
    pub const KEYS: [&'static str; 16] = [
        "embedding_dim",
        "attention_dim",
        "self_weight",
        "learning_rate",
        "beta1",
        "beta2",
        "epsilon",
        "max_epochs",
        "patience",
        "lambda_e",
        "lambda_i",
        "lambda_j",
        "lambda_m",
        "lambda_r",
        "seed",
        "precision",
    ];

    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "embedding_dim" => self.embedding_dim = parse_num(key, value)?,
            "attention_dim" => {
                self.attention_dim = match value {
                    "" | "auto" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "self_weight" => self.self_weight = parse_num(key, value)?,
            "learning_rate" => self.learning_rate = parse_num(key, value)?,
            "beta1" => self.beta1 = parse_num(key, value)?,
            "beta2" => self.beta2 = parse_num(key, value)?,
            "epsilon" => self.epsilon = parse_num(key, value)?,
            "max_epochs" => self.max_epochs = parse_num(key, value)?,
            "patience" => self.patience = parse_num(key, value)?,
            "lambda_e" => self.lambda_e = parse_num(key, value)?,
            "lambda_i" => self.lambda_i = parse_num(key, value)?,
            "lambda_j" => self.lambda_j = parse_num(key, value)?,
            "lambda_m" => self.lambda_m = parse_num(key, value)?,
            "lambda_r" => {
                self.lambda_r = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_num(key, s))
                    .collect::<Result<_>>()?
            }
            "seed" => self.seed = parse_num(key, value)?,
            "precision" => {
                self.precision = match value {
                    "f64" | "double" => Precision::F64,
                    other => {
                        return Err(HdmiError::Config(format!(
                            "precision '{other}' is not supported (only f64)"
                        )))
                    }
                }
            }
            other => return Err(HdmiError::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| HdmiError::Config(format!("line {}: expected 'key = value'", no + 1)))?;
            cfg.set(k, v)
                .map_err(|e| HdmiError::Config(format!("line {}: {e}", no + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| HdmiError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let attention = self.attention_dim.map_or_else(|| "auto".to_string(), |d| d.to_string());
        let lambda_r = self.lambda_r.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let _ = writeln!(out, "embedding_dim = {}", self.embedding_dim);
        let _ = writeln!(out, "attention_dim = {attention}");
        let _ = writeln!(out, "self_weight = {}", self.self_weight);
        let _ = writeln!(out, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(out, "beta1 = {}", self.beta1);
        let _ = writeln!(out, "beta2 = {}", self.beta2);
        let _ = writeln!(out, "epsilon = {}", self.epsilon);
        let _ = writeln!(out, "max_epochs = {}", self.max_epochs);
        let _ = writeln!(out, "patience = {}", self.patience);
        let _ = writeln!(out, "lambda_e = {}", self.lambda_e);
        let _ = writeln!(out, "lambda_i = {}", self.lambda_i);
        let _ = writeln!(out, "lambda_j = {}", self.lambda_j);
        let _ = writeln!(out, "lambda_m = {}", self.lambda_m);
        let _ = writeln!(out, "lambda_r = {lambda_r}");
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "precision = f64");
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(HdmiError::Config("embedding_dim must be >= 1".into()));
        }
        if self.attention_dim == Some(0) {
            return Err(HdmiError::Config("attention_dim must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(HdmiError::Config("learning_rate must be > 0".into()));
        }
        if self.patience == 0 {
            return Err(HdmiError::Config("patience must be >= 1".into()));
        }
        if !(self.self_weight >= 0.0 && self.self_weight.is_finite()) {
            return Err(HdmiError::Config("self_weight must be >= 0".into()));
        }
        self.signal_weights()
            .validate()
            .map_err(|e| HdmiError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn attention_dim(&self) -> usize {
        self.attention_dim.unwrap_or(self.embedding_dim)
    }

    pub fn signal_weights(&self) -> LossWeights {
        LossWeights::new(self.lambda_e, self.lambda_i, self.lambda_j)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn hdmi_weights(&self, layers: usize) -> Result<HdmiWeights> {
        let lambda_r = match self.lambda_r.len() {
            0 => vec![1.0; layers],
            n if n == layers => self.lambda_r.clone(),
            n => {
                return Err(HdmiError::Config(format!(
                    "lambda_r has {n} values for {layers} layers"
                )))
            }
        };
        Ok(HdmiWeights {
            layer: vec![self.signal_weights(); layers],
            fusion: self.signal_weights(),
            lambda_m: self.lambda_m,
            lambda_r,
        })
    }
}
