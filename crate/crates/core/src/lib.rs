//! Discriminative feature learning from generalized eigenvectors of
//! class-conditional second moments.
//!
//! For every selected ordered class pair `(i, j)` the leading solutions of
//! `C_i v = lambda (C_j + ridge) v` become feature detectors. Their
//! projections are expanded through a fixed nonlinear basis and a
//! multinomial logistic model is trained on the result.
//!
//! Class indices are zero-based throughout the API; text outputs that name
//! classes print `c + 1`.

pub mod classifier;
pub mod error;
pub mod featmap;
pub mod geneig;
pub mod ingest;
pub mod moments;
pub mod pairsel;
pub mod par;
pub mod pipeline;
pub mod rff;
pub mod synth;

pub use error::{GemError, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator behind every random choice in the crate.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
