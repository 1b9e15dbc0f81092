//! Benchmark problems. The fully observable ones implement
//! [`Environment`](crate::mcts::Environment); Rocksample and PocMan implement
//! [`PomdpEnv`](crate::pomcp::PomdpEnv).

mod bandit;
mod copy;
pub mod lake;
mod pocman;
mod rocksample;
mod synthetic;

pub use bandit::BernoulliBandit;
pub use copy::{CopyAction, CopyEnv, CopyState, BAND_LENGTH};
pub use lake::{GridLakeEnv, LakeState};
pub use pocman::{PocmanEnv, PocmanRewards, PocmanState, MAZE as POCMAN_MAZE};
pub use rocksample::{RockRewards, RockState, RocksampleEnv};
pub use synthetic::{SynState, SyntheticTree, DEFAULT_SIGMA, MAX_LEAVES};

pub mod rock_actions {
    pub use super::rocksample::{EAST, FIRST_CHECK, NORTH, OBS_BAD, OBS_GOOD, OBS_NONE, SAMPLE, SOUTH, WEST};
}
