//! Sparse, interpretable features for paired image/text embeddings.
//!
//! The crate covers the whole analysis loop:
//!
//! * [`tensorio`]: MMTF tensor files and paired datasets on disk.
//! * [`synthgen`]: seeded synthetic data with planted modality structure.
//! * [`sae`]: a single TopK sparse autoencoder shared by both modalities.
//! * [`ncl`]: a non-negative two-layer projector trained contrastively.
//! * [`mds`]: per-feature modality dominance scores and categories.
//! * [`mono`]: embedding-similarity monosemanticity scores.
//! * [`intervene`]: masking, alignment and interpolation on index sets.

pub mod error;
pub mod matrix;
pub mod tensorio;
pub mod synthgen;
pub mod train;
pub mod sae;
pub mod ncl;
pub mod mds;
pub mod mono;
pub mod intervene;
pub mod seed;
#[cfg(feature = "cli")]
pub mod config;
#[cfg(feature = "cli")]
pub mod cli;

pub use error::{Error, Result};
pub use matrix::Matrix;
