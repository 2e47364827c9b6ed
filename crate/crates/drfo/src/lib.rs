//! Training and evaluation toolkit for demographic-parity-fair recommendation
//! when sensitive attributes are only partially known.
//!
//! The pipeline: ingest an interaction dataset ([`ingest`]), pretrain a matrix
//! factorization recommender ([`mf`]), reconstruct missing sensitive
//! attributes and bound the reconstruction error ([`recon`]), then fine-tune
//! under a fairness objective that is robust to that error ([`dro`]).
//! Reference baselines live in [`baselines`], evaluation metrics in
//! [`metrics`], and the sweep/selection machinery in [`harness`].

pub mod baselines;
pub mod cli;
pub mod data;
pub mod dro;
pub mod error;
pub mod harness;
pub mod ingest;
pub mod metrics;
pub mod mf;
pub mod recon;

pub use error::{Error, Result};
