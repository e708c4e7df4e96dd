//! Embedding, clustering and stability selection for tabular records.
//!
//! Pipeline: encode a [`dataset::Table`] with a [`dataset::Preprocessor`],
//! reduce to two dimensions with [`umap`] or [`pca`], cluster with [`gmm`],
//! pick hyperparameters by cross-fold agreement in [`stability`], and
//! describe the clusters with [`phenotype`].

#![no_std]
extern crate alloc;

pub mod dataset;
pub mod error;
pub mod gmm;
pub mod linalg;
pub mod matrix;
pub mod neighbors;
pub mod pca;
pub mod phenotype;
pub mod rng;
pub mod stability;
pub mod umap;

pub use error::{Error, Result};
pub use matrix::Matrix;
