//! Tensors, reverse-mode autodiff, layers, optimiser and the transformer
//! decoder with its mixture-of-Gaussians head.

pub mod checkpoint;
pub mod decoder;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod mog;
pub mod ops;
pub mod optim;
pub mod params;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use decoder::{DecoderConfig, KvCache, TransformerDecoder};
pub use gradcheck::{GradCheckReport, check_gradients, relative_error};
pub use graph::{Gradients, Graph, Var};
pub use layers::{LayerNorm, Linear};
pub use mog::{MoGParams, MogHead, MogHeadConfig, MogOutput, mog_nll, mog_nll_rows};
pub use optim::{Adam, AdamConfig, CosineSchedule};
pub use params::{Bound, ParamId, ParamStore};
pub use tensor::Tensor;
