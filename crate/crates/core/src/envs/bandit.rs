//! One-step Bernoulli bandit, mostly for tests and examples.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mcts::{Environment, Transition};
use crate::SimRng;

#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliBandit {
    pub probs: Vec<f64>,
}

impl BernoulliBandit {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::domain("arm probabilities must lie in [0, 1]"));
        }
        Ok(BernoulliBandit { probs })
    }
}

impl Environment for BernoulliBandit {
    /// `false` before the pull, `true` after.
    type State = bool;

    fn num_actions(&self, pulled: &bool) -> usize {
        if *pulled {
            0
        } else {
            self.probs.len()
        }
    }

    fn step(&self, pulled: &bool, action: usize, rng: &mut SimRng) -> Result<Transition<bool>> {
        let p = match self.probs.get(action) {
            Some(p) if !*pulled => *p,
            _ => return Err(Error::Environment(format!("illegal arm {action}"))),
        };
        let reward = if rng.gen::<f64>() < p { 1.0 } else { 0.0 };
        Ok(Transition { state: true, reward, done: true })
    }

    fn reward_range(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
}
