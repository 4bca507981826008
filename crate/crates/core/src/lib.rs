//! Two-way interactive lossy communication over a pair of independent
//! discrete memoryless channels.
//!
//! The crate covers the whole pipeline of the problem at desk scale:
//!
//! - [`infotheory`]: exact entropies and mutual informations of dense pmfs.
//! - [`channel`] and [`source`]: channel capacity and rate-distortion solvers.
//! - [`protocol`]: executable scheduled and staggered interactive codes, the
//!   code transformations that reduce general codes to staggered ones, Monte
//!   Carlo execution and exact joint-law enumeration.
//! - [`converse`]: numerical verification of the mutual-information chain that
//!   bounds a staggered code's rounds by the channel capacities.
//! - [`kaspi`]: two-way interactive rate-distortion points via auxiliary chains.
//! - [`sepsim`]: end-to-end separation experiments (source code + transport).
//! - [`harness`]: the reproducible experiment battery.

pub mod channel;
pub mod converse;
pub mod error;
pub mod harness;
pub mod infotheory;
pub mod kaspi;
pub mod protocol;
pub mod rng;
pub mod sepsim;
pub mod source;

pub use error::{Error, Result};
