//! Auto-quantized contrastive learning for CTR models, end to end at desk
//! scale: a compact differentiable backbone trained jointly with an
//! instance/cluster contrastive auxiliary whose interest codebook is learned
//! online through balanced Sinkhorn-Knopp assignment, and whose
//! instance-vs-cluster balance adapts to user activity.

pub mod alpha;
pub mod augment;
pub mod cli;
pub mod codebook;
pub mod config;
pub mod data;
pub mod error;
pub mod loss;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod reference;
pub mod rng;
pub mod tape;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
