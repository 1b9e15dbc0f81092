//! Synthetic tree: a `k`-ary tree of depth `d` whose edges carry random
//! values in `[0, 1]`. A leaf's mean is the sum of the edge values on its
//! path, min-max normalized over all leaves, and reaching it returns a
//! Gaussian sample around that mean.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::mcts::{Environment, Transition};
use crate::seed::derive_seed;
use crate::SimRng;

pub const DEFAULT_SIGMA: f64 = 0.05;

/// Largest number of leaves the tree will materialize.
pub const MAX_LEAVES: u64 = 10_000_000;

/// Samples are clamped this many standard deviations outside `[0, 1]` so the
/// declared reward range holds.
const CLAMP_SIGMAS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTree {
    k: usize,
    d: usize,
    sigma: f64,
    seed: u64,
    /// `edge_values[t][i * k + a]` is the edge from node `i` at depth `t`.
    edge_values: Vec<Vec<f64>>,
    leaf_means: Vec<f64>,
}

/// Position in the tree: node `index` among the `k^depth` nodes at `depth`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SynState {
    pub depth: usize,
    pub index: usize,
}

impl SyntheticTree {
    pub fn new(k: usize, d: usize, seed: u64) -> Result<Self> {
        Self::with_sigma(k, d, DEFAULT_SIGMA, seed)
    }

    pub fn with_sigma(k: usize, d: usize, sigma: f64, seed: u64) -> Result<Self> {
        if k < 2 || d < 1 {
            return Err(Error::domain(format!("need k >= 2 and d >= 1, got k={k}, d={d}")));
        }
        if !(sigma >= 0.0) {
            return Err(Error::domain(format!("noise {sigma} must be non-negative")));
        }
        let leaves = (k as u64).checked_pow(d as u32).unwrap_or(u64::MAX);
        if leaves > MAX_LEAVES {
            return Err(Error::SizeGuard { size: leaves, limit: MAX_LEAVES });
        }

        let mut rng = SimRng::seed_from_u64(seed);
        let mut edge_values = Vec::with_capacity(d);
        let mut width = 1usize;
        for _ in 0..d {
            width *= k;
            edge_values.push((0..width).map(|_| rng.gen::<f64>()).collect::<Vec<_>>());
        }

        // path sums, level by level
        let mut sums = vec![0.0];
        for level in &edge_values {
            sums = level
                .iter()
                .enumerate()
                .map(|(j, v)| sums[j / k] + v)
                .collect();
        }
        let lo = sums.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let leaf_means = sums.iter().map(|s| (s - lo) / (hi - lo)).collect();

        Ok(SyntheticTree {
            k,
            d,
            sigma,
            seed,
            edge_values,
            leaf_means,
        })
    }

    /// The `trees x runs` layout: tree `i` is built from a seed derived from
    /// `master_seed`, and each of its runs gets its own search seed.
    pub fn experiment_layout(k: usize, d: usize, trees: usize, runs: usize, master_seed: u64) -> Result<Vec<(SyntheticTree, Vec<u64>)>> {
        (0..trees)
            .map(|i| {
                let tree = SyntheticTree::new(k, d, derive_seed(master_seed, &[k as u64, d as u64, i as u64]))?;
                let seeds = (0..runs)
                    .map(|j| derive_seed(master_seed, &[k as u64, d as u64, i as u64, 1 + j as u64]))
                    .collect();
                Ok((tree, seeds))
            })
            .collect()
    }

    pub fn branching(&self) -> usize {
        self.k
    }

    pub fn depth(&self) -> usize {
        self.d
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn edge_values(&self) -> &[Vec<f64>] {
        &self.edge_values
    }

    pub fn root(&self) -> SynState {
        SynState { depth: 0, index: 0 }
    }

    pub(crate) fn leaf_means(&self) -> &[f64] {
        &self.leaf_means
    }

    /// Leaf index reached by following `path` from the root.
    pub fn leaf_index(&self, path: &[usize]) -> Result<usize> {
        if path.len() != self.d {
            return Err(Error::domain(format!("path of length {} in a tree of depth {}", path.len(), self.d)));
        }
        path.iter().try_fold(0usize, |idx, &a| {
            if a >= self.k {
                Err(Error::domain(format!("action {a} with branching {}", self.k)))
            } else {
                Ok(idx * self.k + a)
            }
        })
    }

    /// One noisy evaluation of the leaf at the end of `path`.
    pub fn evaluate(&self, path: &[usize], rng: &mut SimRng) -> Result<f64> {
        let leaf = self.leaf_index(path)?;
        Ok(self.sample(leaf, rng))
    }

    fn sample(&self, leaf: usize, rng: &mut SimRng) -> f64 {
        let mean = self.leaf_means[leaf];
        if self.sigma == 0.0 {
            return mean;
        }
        let noise = Normal::new(0.0, self.sigma).expect("sigma validated").sample(rng);
        let (lo, hi) = self.reward_range();
        (mean + noise).clamp(lo, hi)
    }
}

impl Environment for SyntheticTree {
    type State = SynState;

    fn num_actions(&self, state: &SynState) -> usize {
        if state.depth < self.d {
            self.k
        } else {
            0
        }
    }

    fn step(&self, state: &SynState, action: usize, rng: &mut SimRng) -> Result<Transition<SynState>> {
        if action >= self.k || state.depth >= self.d {
            return Err(Error::Environment(format!("illegal action {action} at {state:?}")));
        }
        let next = SynState {
            depth: state.depth + 1,
            index: state.index * self.k + action,
        };
        let done = next.depth == self.d;
        let reward = if done { self.sample(next.index, rng) } else { 0.0 };
        Ok(Transition { state: next, reward, done })
    }

    fn reward_range(&self) -> (f64, f64) {
        (-CLAMP_SIGMAS * self.sigma, 1.0 + CLAMP_SIGMAS * self.sigma)
    }
}
