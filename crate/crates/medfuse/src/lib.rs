//! A from-scratch multimodal deep-learning library: a small CNN encodes an
//! image, a Bi-LSTM with attention pooling encodes a token sequence, one of
//! five fusion strategies joins the two, and three task heads decode the
//! joint vector into a class, a bounding box with a coarse mask, and a
//! generated description. Every gradient is written by hand and verified
//! against central finite differences.
//!
//! The crate ships a synthetic planted-signal corpus generator whose label is
//! the XOR of one image attribute and one text attribute, so unimodal models
//! cap near chance while fused models can solve the task — which makes the
//! image+text-beats-either-alone comparison reproducible on a laptop.
//!
//! See the `examples/` directory for one runnable walkthrough per major
//! capability, and the `medfuse` binary for the batch CLI.

pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod gradcheck;
pub mod heads;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod synthdata;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
