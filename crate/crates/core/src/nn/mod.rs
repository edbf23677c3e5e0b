//! Small deterministic neural-network toolkit: tensors, a reverse-mode
//! tape, the layers used by the trajectory model, checkpoints and Adam.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use layers::{normalized_adjacency, Dense, GcnLayer, Glu, Lstm, Mlp, MultiHeadAttention, Norm, NormScope};
pub use optim::{Adam, AdamConfig, CosineWarmRestarts};
pub use params::{ParamId, ParamStore};
pub use tape::{Grads, Graph, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("adjacency is not symmetric at ({i}, {j})")]
    AsymmetricAdjacency { i: usize, j: usize },
    #[error("sequence is empty")]
    EmptySequence,
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("duplicate parameter name {0}")]
    DuplicateParam(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
