//! Label-dispersion harness for zero-shot, embedding-based action classifiers.
//!
//! The crate is model-free: encoders and segmenters live outside it and hand
//! over embeddings (EMB1 files) and masks (PNG). What lives here:
//!
//! - [`embedding`]: vector arithmetic and contrastive zero-shot classification.
//! - [`emb1`]: the EMB1 binary embedding container and its id sidecar.
//! - [`masking`]: random pixel/shape masking, feature masks, isolation masks.
//! - [`dispersion`]: frequency histograms, dispersion metrics and report rendering.
//! - [`noise`]: class-specific noise vectors learned with an augmented triplet loss.
//! - [`pipeline`]: manifest/config loading, embedding providers and task runners.

pub mod catalog;
pub mod dispersion;
pub mod emb1;
pub mod embedding;
pub mod error;
pub mod masking;
pub mod noise;
pub mod pipeline;
pub mod rng;

pub use catalog::{ClassCatalog, ClassId};
pub use error::{Error, Result};
