//! Self-supervised embedding of attributed multiplex networks by maximizing
//! high-order mutual information between node embeddings, graph summaries
//! and node attributes, with attention fusion across layers.
//!
//! Everything runs in `f64` on a small reverse-mode tape; an exact discrete
//! information-theory oracle, finite-difference gradient checks and
//! closed-form initial losses back the numerics.

// Numeric kernels index several arrays in lockstep, and `!(x > 0.0)` is
// used on purpose so NaN fails validation.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod adam;
pub mod autodiff;
pub mod config;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod gradcheck;
pub mod graph;
pub mod io;
pub mod mi_oracle;
pub mod model;
pub mod synthetic;
pub mod tensor;
pub mod trainer;

pub use config::TrainingConfig;
pub use error::{HdmiError, Result};
pub use eval::{classify, cluster_nmi, evaluate, sim_at_k, EvalReport};
pub use fusion::{embed_multiplex, AttentionWeights, HdmiParameters, MultiplexEmbedding};
pub use graph::{normalize_adjacency, AttributedLayer, MultiplexNetwork, NormalizedAdjacency, Splits};
pub use mi_oracle::DiscreteJoint;
pub use model::{EmbeddingMatrix, HdiParameters, LossWeights};
pub use synthetic::{generate, run_ablation, AblationTable, SyntheticSpec};
pub use tensor::Tensor2;
pub use trainer::{train_hdi, train_hdmi, HdiRun, HdmiRun, TrainReport};
