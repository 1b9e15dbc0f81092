//! Rocksample(n, k): a rover on an `n x n` grid with `k` rocks of unknown
//! quality. Actions are North, South, East, West, Sample and one Check per
//! rock. Leaving the grid to the east ends the episode.

use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::pomcp::{PomdpEnv, PomdpStep};
use crate::SimRng;

pub const NORTH: usize = 0;
pub const SOUTH: usize = 1;
pub const EAST: usize = 2;
pub const WEST: usize = 3;
pub const SAMPLE: usize = 4;
pub const FIRST_CHECK: usize = 5;

/// Observations: nothing, a good reading, a bad reading.
pub const OBS_NONE: u8 = 0;
pub const OBS_GOOD: u8 = 1;
pub const OBS_BAD: u8 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct RockRewards {
    pub good_sample: f64,
    pub bad_sample: f64,
    pub exit: f64,
}

impl Default for RockRewards {
    fn default() -> Self {
        RockRewards {
            good_sample: 10.0,
            bad_sample: -10.0,
            exit: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocksampleEnv {
    n: usize,
    rocks: Vec<(usize, usize)>,
    pub rewards: RockRewards,
    /// Sensor half-efficiency distance.
    pub sensor_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RockState {
    pub x: usize,
    pub y: usize,
    /// Bit `i` is set while rock `i` is good.
    pub good: u64,
}

impl RocksampleEnv {
    /// Rock positions are drawn from `seed`, distinct and off the start cell.
    pub fn new(n: usize, k: usize, seed: u64) -> Result<Self> {
        if n < 2 || k > 64 || k + 1 > n * n {
            return Err(Error::domain(format!("rocksample({n},{k}) is not a valid instance")));
        }
        let start = (0, n / 2);
        let mut rng = SimRng::seed_from_u64(seed);
        let mut rocks = Vec::with_capacity(k);
        while rocks.len() < k {
            let cell = (rng.gen_range(0..n), rng.gen_range(0..n));
            if cell != start && !rocks.contains(&cell) {
                rocks.push(cell);
            }
        }
        Self::with_rocks(n, rocks)
    }

    pub fn with_rocks(n: usize, rocks: Vec<(usize, usize)>) -> Result<Self> {
        if rocks.len() > 64 || rocks.iter().any(|&(x, y)| x >= n || y >= n) {
            return Err(Error::domain("rock positions must lie on the grid, at most 64 rocks"));
        }
        Ok(RocksampleEnv {
            n,
            rocks,
            rewards: RockRewards::default(),
            sensor_distance: 20.0,
        })
    }

    pub fn rocks(&self) -> &[(usize, usize)] {
        &self.rocks
    }

    pub fn grid_size(&self) -> usize {
        self.n
    }

    pub fn start_state(&self, good: u64) -> RockState {
        RockState { x: 0, y: self.n / 2, good }
    }

    /// Probability that checking `rock` from `(x, y)` reports its true label.
    pub fn sensor_accuracy(&self, x: usize, y: usize, rock: usize) -> f64 {
        let (rx, ry) = self.rocks[rock];
        let dist = ((x as f64 - rx as f64).powi(2) + (y as f64 - ry as f64).powi(2)).sqrt();
        0.5 * (1.0 + (-dist / self.sensor_distance).exp2())
    }
}

impl PomdpEnv for RocksampleEnv {
    type State = RockState;
    type Obs = u8;

    fn num_actions(&self) -> usize {
        self.rocks.len() + 5
    }

    fn step(&self, s: &RockState, action: usize, rng: &mut SimRng) -> Result<PomdpStep<RockState, u8>> {
        let mut next = s.clone();
        let mut reward = 0.0;
        let mut obs = OBS_NONE;
        let mut done = false;
        match action {
            NORTH => next.y = s.y.saturating_sub(1),
            SOUTH => next.y = (s.y + 1).min(self.n - 1),
            WEST => next.x = s.x.saturating_sub(1),
            EAST if s.x + 1 == self.n => {
                reward = self.rewards.exit;
                done = true;
            }
            EAST => next.x = s.x + 1,
            SAMPLE => match self.rocks.iter().position(|&r| r == (s.x, s.y)) {
                Some(i) if s.good >> i & 1 == 1 => {
                    reward = self.rewards.good_sample;
                    next.good &= !(1 << i);
                }
                _ => reward = self.rewards.bad_sample,
            },
            a if a < self.num_actions() => {
                let i = a - FIRST_CHECK;
                let truth = s.good >> i & 1 == 1;
                let correct = rng.gen::<f64>() < self.sensor_accuracy(s.x, s.y, i);
                obs = if truth == correct { OBS_GOOD } else { OBS_BAD };
            }
            a => return Err(Error::Environment(format!("illegal rocksample action {a}"))),
        }
        Ok(PomdpStep {
            state: next,
            obs,
            reward,
            done,
        })
    }

    /// Robot at the start cell, each rock good with probability 1/2.
    fn sample_initial(&self, rng: &mut SimRng) -> RockState {
        let mask = if self.rocks.len() == 64 { u64::MAX } else { (1u64 << self.rocks.len()) - 1 };
        self.start_state(rng.gen::<u64>() & mask)
    }

    fn reward_range(&self) -> (f64, f64) {
        let r = &self.rewards;
        (r.bad_sample.min(0.0), r.good_sample.max(r.exit).max(0.0))
    }
}
