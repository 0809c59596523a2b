//! Hashtag generation and hashtag-guided tweet classification at desk scale.
//!
//! Two-stage pipeline: a transformer encoder-decoder generates hashtags for
//! a tweet, enriched by a corpus-level tweet memory (TAM) and an entity
//! co-occurrence graph encoded with GCN and GAT layers (EAM); a separate
//! transformer classifier consumes the tweet with the generated hashtags
//! fused in.

pub mod checks;
pub mod classifier;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod eam;
pub mod fusion;
pub mod hashgen;
pub mod layers;
pub mod metrics;
pub mod synth;
pub mod tam;

/// Pipeline scalar type. The numeric core is generic; everything here runs
/// in f64 so central-difference gradient checks stay reliable.
pub type Real = f64;
pub type Tsr = numcore::Tensor<Real>;
