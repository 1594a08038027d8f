//! Desk-scale building blocks for temporally coherent 4D mesh generation:
//! a small reverse-mode tensor engine, sliding-window temporal attention
//! with 1D rotary phases and a rolling KV cache, rectified flow-matching
//! training and sampling on synthetic latent sequences, silhouette-based
//! trajectory optimization, and a mesh-sequence evaluation suite.

pub mod error;
pub mod flowmatch;
pub mod meshio;
pub mod metrics;
pub mod checks;
pub mod optim;
pub mod pipeline;
pub mod swattn;
pub mod trajectory;
pub mod tensor;

pub use error::{Error, Result};
