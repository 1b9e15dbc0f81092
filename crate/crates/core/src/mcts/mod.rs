//! Monte-Carlo tree search over fully observable MDPs.
//!
//! Each simulation selects down the tree, adds at most one node, rolls out
//! uniformly at random from the first state outside the tree and backs the
//! return up along the path. The V-node aggregation (average, power mean,
//! max) and the tree policy (UCB1 or E3W with a convex regularizer) are
//! independent choices in [`SearchConfig`].
//!
//! Q-nodes are backed up as
//!
//! ```text
//! Q(s,a) = (sum of rewards through (s,a) + gamma * (sum_s' N(s') V(s') + leaf returns)) / n(s,a)
//! ```
//!
//! where "leaf returns" are the rollout returns (or zero for terminal
//! transitions) recorded on the edge when no child node was reached. Under
//! E3W, `V(s')` is the conjugate value `Omega*(Q_Omega(s'))`.

mod engine;
mod tree;

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

pub(crate) use engine::{argmax_by, Engine, Model, Step};
pub use tree::{e3w_distribution, e3w_lambda, select_e3w, select_ucb1, NodeId, QEdge, Tree, TreeNode};

use crate::error::{Error, Result};
use crate::regularizers::{RegularizerKind, Simplex};
use crate::SimRng;

/// Outcome of one generative step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<S> {
    pub state: S,
    pub reward: f64,
    pub done: bool,
}

/// Generative model of an MDP. Randomness comes from the caller's RNG, so a
/// `(seed, action sequence)` pair always reproduces the same trajectory.
pub trait Environment {
    type State: Clone + PartialEq + Debug;

    /// Legal actions are `0..num_actions(state)`.
    fn num_actions(&self, state: &Self::State) -> usize;

    fn step(&self, state: &Self::State, action: usize, rng: &mut SimRng) -> Result<Transition<Self::State>>;

    /// Bounds on a single immediate reward.
    fn reward_range(&self) -> (f64, f64);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Backup {
    Average,
    /// Power mean with exponent `p >= 1`; `p = inf` is the max.
    Power(f64),
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreePolicy {
    Ucb1 { c: f64 },
    E3w { kind: RegularizerKind, epsilon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Recommend {
    MaxVisit,
    MaxValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub n_simulations: usize,
    pub backup: Backup,
    pub tree_policy: TreePolicy,
    pub gamma: f64,
    pub rollout_depth_limit: usize,
    pub rng_seed: u64,
    /// `None` picks max-visit for UCB1 and max-value for E3W.
    pub recommend: Option<Recommend>,
}

pub const DEFAULT_ROLLOUT_DEPTH: usize = 100;

impl SearchConfig {
    pub fn uct(n_simulations: usize, c: f64) -> Self {
        SearchConfig {
            n_simulations,
            backup: Backup::Average,
            tree_policy: TreePolicy::Ucb1 { c },
            gamma: 1.0,
            rollout_depth_limit: DEFAULT_ROLLOUT_DEPTH,
            rng_seed: 0,
            recommend: None,
        }
    }

    pub fn e3w(n_simulations: usize, kind: RegularizerKind, epsilon: f64) -> Self {
        SearchConfig {
            tree_policy: TreePolicy::E3w { kind, epsilon },
            ..Self::uct(n_simulations, 0.0)
        }
    }

    pub fn with_backup(mut self, backup: Backup) -> Self {
        self.backup = backup;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_recommend(mut self, rule: Recommend) -> Self {
        self.recommend = Some(rule);
        self
    }

    pub fn recommend_rule(&self) -> Recommend {
        self.recommend.unwrap_or(match self.tree_policy {
            TreePolicy::Ucb1 { .. } => Recommend::MaxVisit,
            TreePolicy::E3w { .. } => Recommend::MaxValue,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_simulations == 0 {
            return Err(Error::Precondition("n_simulations must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Precondition(format!("discount {} outside [0, 1]", self.gamma)));
        }
        if let Backup::Power(p) = self.backup {
            if !(p >= 1.0) {
                return Err(Error::Precondition(format!("power backup needs p >= 1, got {p}")));
            }
        }
        match &self.tree_policy {
            TreePolicy::Ucb1 { c } if !(c.is_finite() && *c >= 0.0) => {
                Err(Error::Precondition(format!("exploration constant {c} must be non-negative")))
            }
            TreePolicy::E3w { epsilon, .. } if !(*epsilon > 0.0) => {
                Err(Error::Precondition(format!("epsilon {epsilon} must be positive")))
            }
            TreePolicy::E3w { kind, .. } => kind.validate(),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub recommended_action: usize,
    /// `V(root)` for the UCT backups (in normalized reward units under a
    /// power backup), `Omega*(Q_Omega(root))` under E3W.
    pub root_value: f64,
    /// Visit distribution for UCB1, regularized policy for E3W.
    pub root_policy: Simplex,
    pub visit_histogram: Vec<u64>,
    pub root_q: Vec<f64>,
    /// Root action taken by each simulation, in order. The regret trace is
    /// this sequence mapped through the true child values.
    pub root_choices: Vec<usize>,
    /// `(offset, scale)` of the affine map applied to immediate rewards;
    /// `(0, 1)` unless a power backup needed rewards in `[0, 1]`.
    pub reward_normalization: (f64, f64),
}

struct MdpModel<'a, E>(&'a E);

impl<E: Environment> Model for MdpModel<'_, E> {
    type Sim = E::State;
    type Key = E::State;

    fn num_actions(&self, sim: &E::State) -> usize {
        self.0.num_actions(sim)
    }

    fn step(&self, sim: &E::State, action: usize, rng: &mut SimRng) -> Result<Step<E::State, E::State>> {
        let t = self.0.step(sim, action, rng)?;
        debug_assert!({
            let (lo, hi) = self.0.reward_range();
            (lo..=hi).contains(&t.reward)
        });
        Ok(Step {
            key: t.state.clone(),
            sim: t.state,
            reward: t.reward,
            done: t.done,
        })
    }

}

/// A search in progress, for callers that need the tree afterwards.
pub struct Planner<E: Environment> {
    engine: Engine<E::State>,
    root: E::State,
    remaining: usize,
}

impl<E: Environment> Planner<E> {
    pub fn new(env: &E, root: E::State, config: &SearchConfig) -> Result<Self> {
        let engine = Engine::new(config, env.num_actions(&root), env.reward_range())?;
        Ok(Planner {
            engine,
            root,
            remaining: config.n_simulations,
        })
    }

    /// Runs one simulation; returns false once the budget is spent.
    pub fn step(&mut self, env: &E) -> Result<bool> {
        if self.remaining == 0 {
            return Ok(false);
        }
        let model = MdpModel(env);
        self.engine.simulate(&model, self.root.clone())?;
        self.remaining -= 1;
        Ok(true)
    }

    pub fn run(mut self, env: &E) -> Result<(SearchResult, Tree<E::State>)> {
        while self.step(env)? {}
        let result = self.engine.result()?;
        Ok((result, self.engine.tree))
    }

    pub fn tree(&self) -> &Tree<E::State> {
        &self.engine.tree
    }

    pub fn result(&self) -> Result<SearchResult> {
        self.engine.result()
    }
}

/// Runs `config.n_simulations` simulations from `root` and recommends a root
/// action.
pub fn search<E: Environment>(env: &E, root: &E::State, config: &SearchConfig) -> Result<SearchResult> {
    Planner::new(env, root.clone(), config)?.run(env).map(|(r, _)| r)
}

/// Greedy action at a tree node under the given rule.
pub fn recommend_at<K>(node: &TreeNode<K>, rule: Recommend) -> usize {
    match rule {
        Recommend::MaxVisit => argmax_by(node.edges.iter().map(|e| e.visits as f64)),
        Recommend::MaxValue => argmax_by(node.edges.iter().map(|e| e.q)),
    }
}

impl<K> Tree<K> {
    /// Nodes where `N(s)` differs from the sum of edge visits.
    pub fn conservation_violations(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.visits != n.edges.iter().map(|e| e.visits).sum::<u64>())
            .map(|(i, _)| i)
            .collect()
    }
}
