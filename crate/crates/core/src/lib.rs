//! Monte-Carlo tree search with a family of value backups (average, power
//! mean, max) and tree policies (UCB1 and E3W under Shannon, relative,
//! Tsallis and alpha-divergence regularization), together with the
//! benchmark problems, exact small-instance oracles and the experiment
//! harness used to compare them.
//!
//! The guide in `book/` walks through each piece; its code listings are
//! compiled and run as doctests of this crate.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod envs;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod mcts;
pub mod numeric;
pub mod oracle;
pub mod pomcp;
pub mod regularizers;
pub mod seed;

pub use error::{Error, Result};

/// RNG used by every simulator and search. ChaCha keeps streams identical
/// across platforms.
pub type SimRng = rand_chacha::ChaCha8Rng;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/backups.md")]
    pub struct Backups;
    #[doc = include_str!("../../../book/src/regularizers.md")]
    pub struct Regularizers;
    #[doc = include_str!("../../../book/src/search.md")]
    pub struct Search;
    #[doc = include_str!("../../../book/src/pomcp.md")]
    pub struct Pomcp;
    #[doc = include_str!("../../../book/src/environments.md")]
    pub struct Environments;
    #[doc = include_str!("../../../book/src/oracle.md")]
    pub struct Oracle;
    #[doc = include_str!("../../../book/src/harness.md")]
    pub struct Harness;
}
