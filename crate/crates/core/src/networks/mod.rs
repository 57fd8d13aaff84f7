//! Style transfer network `T(c, S)` and style prediction network `P(s)`.

mod embedding;
mod model;
mod prediction;
mod transfer;

pub use embedding::{concat_norm_params, embedding_dim, slice_embedding, StyleEmbedding};
pub use model::StyleModel;
pub use prediction::{predict_embedding, BackboneLayer, PredictionNet, PredictionNetConfig};
pub use transfer::{transfer_forward, Activation, Stage, TransferNet, TransferNetConfig};

/// Standard deviation of the isotropic Gaussian weight initialization.
pub const INIT_STD: f64 = 0.01;
