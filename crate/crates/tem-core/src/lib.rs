//! Metric differential privacy for word embeddings.
//!
//! The crate is organized around one pipeline:
//!
//! 1. [`embedding_store`] loads a vocabulary with embedding vectors and
//!    exposes the metric over words.
//! 2. [`candidate_index`] answers exact radius queries over that metric and
//!    precomputes per-word candidate lists so privatization is O(1) per
//!    token at serving time.
//! 3. [`mechanisms`] implements the privatization mechanisms themselves:
//!    the truncated exponential mechanism over candidate lists, and a
//!    calibrated-noise baseline that perturbs the embedding vector directly.
//! 4. [`dp_verifier`] checks the privacy and utility claims numerically:
//!    exhaustive log-domain ratio checks on small vocabularies, sensitivity
//!    bounds, utility mass, sampler-vs-oracle equivalence, and Monte Carlo
//!    certification of violations.
//!
//! Everything downstream of a seed is deterministic: [`rng::RandomSource`]
//! derives keyed substreams per document and per token, so a corpus run
//! produces identical bytes regardless of thread count.

pub mod candidate_index;
pub mod corpus;
pub mod dp_verifier;
pub mod embedding_store;
pub mod mechanisms;
pub mod num;
pub mod rng;
pub mod synth;
