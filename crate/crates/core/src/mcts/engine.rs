//! Simulation loop shared by the state tree and the history tree.

use rand::Rng;
use rand::SeedableRng;

use super::tree::{aggregate, ensure_finite, sample_index, select_ucb1, e3w_distribution, NodeAggregate, NodeId, Tree};
use super::{Backup, Recommend, SearchConfig, SearchResult, TreePolicy};
use crate::error::{Error, Result};
use crate::regularizers::{RegularizerKind, Simplex};
use crate::SimRng;

/// Relative-entropy priors are floored here so the KL stays finite.
const PRIOR_FLOOR: f64 = 1e-12;

/// A generative model seen through the tree: `Sim` is what the simulator
/// steps, `Key` is what distinguishes sibling nodes under one edge.
pub(crate) trait Model {
    type Sim: Clone;
    type Key: PartialEq + Clone;

    fn num_actions(&self, sim: &Self::Sim) -> usize;
    fn step(&self, sim: &Self::Sim, action: usize, rng: &mut SimRng) -> Result<Step<Self::Sim, Self::Key>>;
}

pub(crate) struct Step<S, K> {
    pub sim: S,
    pub key: K,
    pub reward: f64,
    pub done: bool,
}

enum Outcome {
    Child,
    Leaf(f64),
}

struct PathEntry {
    node: NodeId,
    action: usize,
    reward: f64,
    outcome: Outcome,
}

enum Policy {
    Ucb1 { c: f64 },
    E3w { kind: RegularizerKind, epsilon: f64 },
}

pub(crate) struct Engine<K> {
    pub tree: Tree<K>,
    gamma: f64,
    rollout_depth_limit: usize,
    aggregate: NodeAggregate,
    policy: Policy,
    recommend: Recommend,
    reward_offset: f64,
    reward_scale: f64,
    pub rng: SimRng,
    pub root_choices: Vec<usize>,
}

impl<K: PartialEq + Clone> Engine<K> {
    pub fn new(config: &SearchConfig, root_actions: usize, reward_range: (f64, f64)) -> Result<Self> {
        config.validate()?;
        if root_actions == 0 {
            return Err(Error::Precondition("root state has no legal actions".into()));
        }
        let aggregate = match config.backup {
            Backup::Average => NodeAggregate::Average,
            Backup::Power(p) if p.is_infinite() => NodeAggregate::Max,
            Backup::Power(p) => NodeAggregate::Power(p),
            Backup::Max => NodeAggregate::Max,
        };
        // Rewards are mapped to [0, 1] only where the power mean needs
        // non-negative inputs.
        let (reward_offset, reward_scale) = match aggregate {
            NodeAggregate::Power(p) if p != 1.0 => {
                let (lo, hi) = reward_range;
                if !(hi > lo) {
                    return Err(Error::Precondition(format!("empty reward range [{lo}, {hi}]")));
                }
                (lo, hi - lo)
            }
            _ => (0.0, 1.0),
        };
        let policy = match &config.tree_policy {
            TreePolicy::Ucb1 { c } => Policy::Ucb1 { c: c / reward_scale },
            TreePolicy::E3w { kind, epsilon } => Policy::E3w {
                kind: kind.clone(),
                epsilon: *epsilon,
            },
        };
        Ok(Engine {
            tree: Tree::new(root_actions),
            gamma: config.gamma,
            rollout_depth_limit: config.rollout_depth_limit,
            aggregate,
            policy,
            recommend: config.recommend_rule(),
            reward_offset,
            reward_scale,
            rng: SimRng::seed_from_u64(config.rng_seed),
            root_choices: Vec::with_capacity(config.n_simulations),
        })
    }

    fn normalize(&self, r: f64) -> f64 {
        (r - self.reward_offset) / self.reward_scale
    }

    fn select(&mut self, id: NodeId) -> Result<usize> {
        match &self.policy {
            Policy::Ucb1 { c } => Ok(select_ucb1(&self.tree.nodes[id], *c)),
            Policy::E3w { kind, epsilon } => {
                let node = &self.tree.nodes[id];
                let kind = kind.with_prior(node.prior_policy.clone());
                let (dist, policy) = e3w_distribution(node, &kind, *epsilon)?;
                let a = sample_index(dist.probs(), &mut self.rng);
                if matches!(kind.entropy, crate::regularizers::Entropy::Relative(_)) {
                    let floored = policy.into_vec().into_iter().map(|p| p.max(PRIOR_FLOOR)).collect();
                    self.tree.nodes[id].prior_policy = Simplex::normalized(floored)?;
                }
                Ok(a)
            }
        }
    }

    fn rollout<M: Model>(&mut self, model: &M, mut sim: M::Sim) -> Result<f64> {
        let mut ret = 0.0;
        let mut discount = 1.0;
        for _ in 0..self.rollout_depth_limit {
            let n = model.num_actions(&sim);
            if n == 0 {
                break;
            }
            let a = self.rng.gen_range(0..n);
            let step = model.step(&sim, a, &mut self.rng)?;
            ret += discount * self.normalize(step.reward);
            discount *= self.gamma;
            if step.done {
                break;
            }
            sim = step.sim;
        }
        Ok(ret)
    }

    /// Runs one simulation from `start` and returns the simulator state seen
    /// at each tree node on the way down.
    pub fn simulate<M: Model<Key = K>>(&mut self, model: &M, start: M::Sim) -> Result<Vec<(NodeId, M::Sim)>> {
        let mut path: Vec<PathEntry> = Vec::new();
        let mut visited = Vec::new();
        let mut node = 0;
        let mut sim = start;
        let mut expanded = false;
        loop {
            visited.push((node, sim.clone()));
            let action = self.select(node)?;
            if node == 0 {
                self.root_choices.push(action);
            }
            let step = model.step(&sim, action, &mut self.rng)?;
            let reward = self.normalize(step.reward);
            if step.done {
                path.push(PathEntry { node, action, reward, outcome: Outcome::Leaf(0.0) });
                break;
            }
            if let Some(child) = self.tree.child(node, action, &step.key) {
                path.push(PathEntry { node, action, reward, outcome: Outcome::Child });
                node = child;
                sim = step.sim;
                continue;
            }
            if expanded {
                let rho = self.rollout(model, step.sim)?;
                path.push(PathEntry { node, action, reward, outcome: Outcome::Leaf(rho) });
                break;
            }
            let n_actions = model.num_actions(&step.sim);
            if n_actions == 0 {
                path.push(PathEntry { node, action, reward, outcome: Outcome::Leaf(0.0) });
                break;
            }
            let child = self.tree.add_child(node, action, step.key, n_actions);
            expanded = true;
            path.push(PathEntry { node, action, reward, outcome: Outcome::Child });
            node = child;
            sim = step.sim;
        }
        self.backup(&path)?;
        Ok(visited)
    }

    fn backup(&mut self, path: &[PathEntry]) -> Result<()> {
        for entry in path.iter().rev() {
            let children_mass: f64;
            {
                let edge = &self.tree.nodes[entry.node].edges[entry.action];
                children_mass = edge
                    .children
                    .iter()
                    .map(|(_, c)| {
                        let child = &self.tree.nodes[*c];
                        child.visits as f64 * child.value
                    })
                    .sum();
            }
            let gamma = self.gamma;
            let node = &mut self.tree.nodes[entry.node];
            let edge = &mut node.edges[entry.action];
            edge.visits += 1;
            edge.reward_sum += entry.reward;
            if let Outcome::Leaf(rho) = entry.outcome {
                edge.leaf_visits += 1;
                edge.leaf_return_sum += rho;
            }
            let q = (edge.reward_sum + gamma * (children_mass + edge.leaf_return_sum)) / edge.visits as f64;
            edge.q = ensure_finite(q, "Q(s,a)")?;
            node.visits += 1;

            let value = match &self.policy {
                Policy::Ucb1 { .. } => aggregate(node, self.aggregate)?,
                Policy::E3w { kind, .. } => kind
                    .with_prior(node.prior_policy.clone())
                    .value(&node.q_values())?,
            };
            node.value = ensure_finite(value, "V(s)")?;
        }
        Ok(())
    }

    pub fn recommended_action(&self) -> usize {
        let root = self.tree.root();
        match self.recommend {
            Recommend::MaxVisit => argmax_by(root.edges.iter().map(|e| e.visits as f64)),
            Recommend::MaxValue => argmax_by(root.edges.iter().map(|e| e.q)),
        }
    }

    pub fn result(&self) -> Result<SearchResult> {
        let root = self.tree.root();
        let root_policy = match &self.policy {
            Policy::Ucb1 { .. } => Simplex::normalized(root.edges.iter().map(|e| e.visits as f64).collect())?,
            Policy::E3w { kind, .. } => kind.with_prior(root.prior_policy.clone()).policy(&root.q_values())?,
        };
        Ok(SearchResult {
            recommended_action: self.recommended_action(),
            root_value: root.value,
            root_policy,
            visit_histogram: root.visit_counts(),
            root_q: root.q_values(),
            root_choices: self.root_choices.clone(),
            reward_normalization: (self.reward_offset, self.reward_scale),
        })
    }
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax_by<I: IntoIterator<Item = f64>>(values: I) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}
