//! Joint field selection and embedding dimension search for CTR-style
//! tabular models.
//!
//! The pipeline has three stages:
//!
//! 1. **Pretrain** a relaxed model in which every field owns a `d_K`-wide
//!    embedding split into disjoint regions, each region scaled by a softmax
//!    weight learned jointly with the network ([`razor`]).
//! 2. **Derive** a compact input configuration by cumulative-probability
//!    threshold pruning of those weights ([`prune`]). A region of size zero
//!    acts as an off switch, so a field whose weight mass concentrates there
//!    is dropped entirely.
//! 3. **Retrain** a plain embedding + MLP model on the surviving fields with
//!    their assigned widths, then evaluate it ([`retrain`]).
//!
//! All numerics are double precision with hand-written backward passes
//! ([`nn`]); every stage is bit-reproducible for a given seed.

pub mod checkpoint;
pub mod config;
pub mod data;
mod error;
pub mod nn;
pub mod pipeline;
pub mod prune;
pub mod razor;
pub mod retrain;
pub mod rng;

pub use error::{Error, Result};

pub(crate) fn sha256_hex(data: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    use std::fmt::Write as _;
    Sha256::digest(data).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
