//! Sum-of-squares reweighting for finding rank-one matrices in a subspace.
//!
//! The pipeline: a degree-d moment relaxation ([`sdp`]) yields a
//! pseudo-distribution over unit pairs (u, v) with uvᵀ in W
//! ([`pseudodist`]); SOS reweightings ([`reweighting`]) applied by the
//! structure iteration ([`structure`]) make its second moment close to rank
//! one, and the mean is read off as the candidate ([`bss`]). The classical
//! rectangle finder for factored matrices lives in [`rectangle`].

pub mod bss;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod measure;
pub mod poly;
pub mod pseudodist;
pub mod rectangle;
pub mod reweighting;
pub mod sdp;
pub mod structure;
pub mod textio;

pub use error::{Error, Result};
