//! Copy task: reproduce an input band of characters on an output band.
//!
//! An action is a triple (move the read head left or right, write or not,
//! character), encoded as `(2 * move + write) * m + character`, so an
//! alphabet of size `m` gives `4m` actions.

use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::mcts::{recommend_at, Environment, Recommend, Transition, Tree};
use crate::SimRng;

pub const BAND_LENGTH: usize = 40;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CopyEnv {
    band: Vec<u32>,
    alphabet: usize,
    time_limit: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CopyState {
    pub head: usize,
    pub written: usize,
    pub t: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CopyAction {
    pub move_right: bool,
    pub write: bool,
    pub character: u32,
}

impl CopyEnv {
    /// Random band of `BAND_LENGTH` characters over an alphabet of size `m`.
    pub fn new(alphabet: usize, seed: u64) -> Result<Self> {
        Self::with_length(alphabet, BAND_LENGTH, seed)
    }

    pub fn with_length(alphabet: usize, length: usize, seed: u64) -> Result<Self> {
        if alphabet < 1 || length < 1 {
            return Err(Error::domain("copy needs a non-empty alphabet and band"));
        }
        let mut rng = SimRng::seed_from_u64(seed);
        let band = (0..length).map(|_| rng.gen_range(0..alphabet as u32)).collect();
        Ok(CopyEnv {
            band,
            alphabet,
            time_limit: 2 * length as u32,
        })
    }

    /// Environment whose action count is `actions`, which must be a multiple
    /// of 4.
    pub fn with_actions(actions: usize, seed: u64) -> Result<Self> {
        if actions == 0 || !actions.is_multiple_of(4) {
            return Err(Error::domain(format!("copy action count {actions} is not a positive multiple of 4")));
        }
        Self::new(actions / 4, seed)
    }

    pub fn band(&self) -> &[u32] {
        &self.band
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn initial_state(&self) -> CopyState {
        CopyState { head: 0, written: 0, t: 0 }
    }

    pub fn encode(&self, action: CopyAction) -> usize {
        (2 * action.move_right as usize + action.write as usize) * self.alphabet + action.character as usize
    }

    pub fn decode(&self, action: usize) -> Result<CopyAction> {
        if action >= 4 * self.alphabet {
            return Err(Error::Environment(format!("illegal copy action {action}")));
        }
        let kind = action / self.alphabet;
        Ok(CopyAction {
            move_right: kind >= 2,
            write: kind % 2 == 1,
            character: (action % self.alphabet) as u32,
        })
    }

    /// Action that writes the next expected character and moves right.
    pub fn correct_action(&self, state: &CopyState) -> Option<usize> {
        self.band.get(state.written).map(|&c| {
            self.encode(CopyAction {
                move_right: true,
                write: true,
                character: c,
            })
        })
    }

    /// Undiscounted return of following the tree's recommendations from the
    /// initial state; actions off the tree are uniformly random.
    pub fn evaluate_tree(&self, tree: &Tree<CopyState>, rule: Recommend, rng: &mut SimRng) -> Result<f64> {
        let mut state = self.initial_state();
        let mut node = Some(0);
        let mut total = 0.0;
        loop {
            let action = match node {
                Some(id) => recommend_at(tree.node(id), rule),
                None => rng.gen_range(0..4 * self.alphabet),
            };
            let tr = self.step(&state, action, rng)?;
            total += tr.reward;
            if tr.done {
                return Ok(total);
            }
            node = node.and_then(|id| tree.child(id, action, &tr.state));
            state = tr.state;
        }
    }
}

impl Environment for CopyEnv {
    type State = CopyState;

    fn num_actions(&self, _: &CopyState) -> usize {
        4 * self.alphabet
    }

    fn step(&self, state: &CopyState, action: usize, _rng: &mut SimRng) -> Result<Transition<CopyState>> {
        let act = self.decode(action)?;
        let len = self.band.len();
        let head = if act.move_right {
            (state.head + 1).min(len - 1)
        } else {
            state.head.saturating_sub(1)
        };
        let t = state.t + 1;
        let mut next = CopyState { head, written: state.written, t };
        let mut reward = 0.0;
        let mut done = t >= self.time_limit;
        if act.write {
            if self.band.get(state.written) == Some(&act.character) {
                reward = 1.0;
                next.written += 1;
                done |= next.written == len;
            } else {
                done = true;
            }
        }
        Ok(Transition { state: next, reward, done })
    }

    fn reward_range(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
}
