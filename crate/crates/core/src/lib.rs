//! Bloom embeddings for sparse binary inputs and outputs of neural networks.
//!
//! A sparse binary instance over `d` items is compressed into an `m`-bit
//! vector by setting `k` hashed bits per active item, as a Bloom filter would.
//! A network is trained entirely in the `m`-dimensional space; its softmax
//! output is mapped back to a ranking over the original `d` items.
//!
//! * [`hashing`]: projection families and their file formats.
//! * [`codec`]: encoding, likelihood / NLL decoding, ranking.
//! * [`cbe`]: co-occurrence steering of hash collisions.
//! * [`metrics`]: MAP, RR, accuracy and ratio reports.
//! * [`trainer`]: a small dense feed-forward network with manual backprop.
//! * [`data`]: profile files, profile splitting and synthetic data.
//! * [`experiment`]: configuration, single runs and sweeps.

pub mod cbe;
pub mod codec;
pub mod data;
pub mod error;
pub mod experiment;
pub mod hashing;
pub mod metrics;
pub mod rng;
pub mod trainer;

pub use codec::{
    decode_likelihood, decode_nll, encode, rank, renormalize, BloomVector, DecodeMode, ItemScores, ProbabilityVector,
    ScoreOrdering, SparseInstance,
};
pub use error::{Error, Result};
pub use hashing::{DoubleHashing, HashFamily, HashFamilySpec, HashMatrix, HashMode, Projector};
