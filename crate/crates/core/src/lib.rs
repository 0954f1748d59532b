//! samforge-core: generation and scoring of contrastive reading-comprehension
//! challenge sets.
//!
//! The library simulates structured match worlds, realizes them as short
//! report passages through a partitioned template grammar with exact span
//! bookkeeping, applies semantics-altering (SAM) and semantics-preserving
//! (SPM) modifications to build aligned baseline/intervention pairs, and
//! scores externally produced predictions with consistency/DICE metrics and
//! corpus-quality indices.

pub mod error;
pub mod formats;
pub mod grammar;
pub mod metrics;
pub mod modify;
pub mod pipeline;
pub mod predictors;
pub mod quality;
pub mod realize;
pub mod seed;
pub mod verify;
pub mod world;

pub use error::{Error, Result};
pub use formats::*;
