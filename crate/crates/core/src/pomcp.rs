//! Partially observable search over action-observation histories.
//!
//! The tree is the same arena as in [`crate::mcts`], with children keyed by
//! observation instead of state. Each simulation draws a start state from
//! the particle belief; every history node keeps the states that passed
//! through it.

use std::fmt::Debug;
use std::hash::Hash;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mcts::{Engine, Environment, Model, NodeId, SearchConfig, SearchResult, Step, Tree};
use crate::SimRng;

pub const DEFAULT_PARTICLES: usize = 1000;

/// Rejection-sampling budget of one belief update.
pub const MAX_ATTEMPTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PomdpStep<S, O> {
    pub state: S,
    pub obs: O,
    pub reward: f64,
    pub done: bool,
}

/// Generative model of a POMDP with a fixed action set.
pub trait PomdpEnv {
    type State: Clone + Debug;
    type Obs: Clone + Eq + Hash + Debug;

    fn num_actions(&self) -> usize;

    fn step(&self, state: &Self::State, action: usize, rng: &mut SimRng) -> Result<PomdpStep<Self::State, Self::Obs>>;

    fn sample_initial(&self, rng: &mut SimRng) -> Self::State;

    /// Bounds on a single immediate reward.
    fn reward_range(&self) -> (f64, f64);
}

/// An MDP seen as a POMDP whose observation is the full state.
#[derive(Debug, Clone)]
pub struct FullyObservable<E: Environment> {
    pub env: E,
    pub root: E::State,
}

impl<E> PomdpEnv for FullyObservable<E>
where
    E: Environment,
    E::State: Eq + Hash,
{
    type State = E::State;
    type Obs = E::State;

    fn num_actions(&self) -> usize {
        self.env.num_actions(&self.root)
    }

    fn step(&self, state: &E::State, action: usize, rng: &mut SimRng) -> Result<PomdpStep<E::State, E::State>> {
        let t = self.env.step(state, action, rng)?;
        Ok(PomdpStep {
            obs: t.state.clone(),
            state: t.state,
            reward: t.reward,
            done: t.done,
        })
    }

    fn sample_initial(&self, _: &mut SimRng) -> E::State {
        self.root.clone()
    }

    fn reward_range(&self) -> (f64, f64) {
        self.env.reward_range()
    }
}

struct PomdpModel<'a, E>(&'a E);

impl<E: PomdpEnv> Model for PomdpModel<'_, E> {
    type Sim = E::State;
    type Key = E::Obs;

    fn num_actions(&self, _: &E::State) -> usize {
        self.0.num_actions()
    }

    fn step(&self, sim: &E::State, action: usize, rng: &mut SimRng) -> Result<Step<E::State, E::Obs>> {
        let s = self.0.step(sim, action, rng)?;
        debug_assert!({
            let (lo, hi) = self.0.reward_range();
            (lo..=hi).contains(&s.reward)
        });
        Ok(Step {
            sim: s.state,
            key: s.obs,
            reward: s.reward,
            done: s.done,
        })
    }

}

/// History tree after a search, with the particles seen at each node.
#[derive(Debug, Clone)]
pub struct HistoryTree<S, O> {
    pub tree: Tree<O>,
    particles: Vec<Vec<S>>,
}

impl<S, O> HistoryTree<S, O> {
    /// States that reached `node` during the search. Empty for the root,
    /// whose belief is the caller's.
    pub fn particles(&self, node: NodeId) -> &[S] {
        self.particles.get(node).map_or(&[], |p| p.as_slice())
    }
}

pub fn pomcp_search<E: PomdpEnv>(env: &E, belief: &[E::State], config: &SearchConfig) -> Result<SearchResult> {
    pomcp_search_tree(env, belief, config).map(|(r, _)| r)
}

pub fn pomcp_search_tree<E: PomdpEnv>(
    env: &E,
    belief: &[E::State],
    config: &SearchConfig,
) -> Result<(SearchResult, HistoryTree<E::State, E::Obs>)> {
    if belief.is_empty() {
        return Err(Error::Precondition("empty belief".into()));
    }
    let mut engine: Engine<E::Obs> = Engine::new(config, env.num_actions(), env.reward_range())?;
    let model = PomdpModel(env);
    let mut particles: Vec<Vec<E::State>> = Vec::new();
    for _ in 0..config.n_simulations {
        // a single particle draws nothing, so the stream matches a state search
        let start = if belief.len() == 1 {
            belief[0].clone()
        } else {
            belief[engine.rng.gen_range(0..belief.len())].clone()
        };
        for (node, state) in engine.simulate(&model, start)? {
            if node == 0 {
                continue;
            }
            if particles.len() <= node {
                particles.resize_with(node + 1, Vec::new);
            }
            particles[node].push(state);
        }
    }
    let result = engine.result()?;
    Ok((result, HistoryTree { tree: engine.tree, particles }))
}

/// Particle filter step: pushes particles through `action` and keeps those
/// that emit `obs`, then resamples the survivors up to `target`.
pub fn belief_update<E: PomdpEnv>(
    env: &E,
    belief: &[E::State],
    action: usize,
    obs: &E::Obs,
    target: usize,
    rng: &mut SimRng,
) -> Result<Vec<E::State>> {
    if belief.is_empty() {
        return Err(Error::Precondition("empty belief".into()));
    }
    let mut out = Vec::with_capacity(target);
    let mut attempts = 0;
    while out.len() < target && attempts < MAX_ATTEMPTS {
        attempts += 1;
        let s = &belief[rng.gen_range(0..belief.len())];
        let next = env.step(s, action, rng)?;
        if next.obs == *obs {
            out.push(next.state);
        }
    }
    top_up(out, target, attempts, rng)
}

/// Rebuilds a belief from the initial-state sampler, keeping only samples
/// that reproduce every observation of `history`.
pub fn restart_belief<E: PomdpEnv>(
    env: &E,
    history: &[(usize, E::Obs)],
    target: usize,
    rng: &mut SimRng,
) -> Result<Vec<E::State>> {
    let mut out = Vec::with_capacity(target);
    let mut attempts = 0;
    'sample: while out.len() < target && attempts < MAX_ATTEMPTS {
        attempts += 1;
        let mut s = env.sample_initial(rng);
        for (a, o) in history {
            let next = env.step(&s, *a, rng)?;
            if next.obs != *o {
                continue 'sample;
            }
            s = next.state;
        }
        out.push(s);
    }
    top_up(out, target, attempts, rng)
}

fn top_up<S: Clone>(mut out: Vec<S>, target: usize, attempts: usize, rng: &mut SimRng) -> Result<Vec<S>> {
    if out.is_empty() {
        return Err(Error::BeliefCollapse { attempts });
    }
    let survivors = out.len();
    while out.len() < target {
        let i = rng.gen_range(0..survivors);
        out.push(out[i].clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::SyntheticTree;
    use crate::mcts::{search, Recommend};
    use rand::SeedableRng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    /// One step, two actions paying 0 and 1.
    struct TwoArms;

    impl PomdpEnv for TwoArms {
        type State = ();
        type Obs = ();

        fn num_actions(&self) -> usize {
            2
        }

        fn step(&self, _: &(), action: usize, _: &mut SimRng) -> Result<PomdpStep<(), ()>> {
            Ok(PomdpStep {
                state: (),
                obs: (),
                reward: action as f64,
                done: true,
            })
        }

        fn sample_initial(&self, _: &mut SimRng) {}

        fn reward_range(&self) -> (f64, f64) {
            (0.0, 1.0)
        }
    }

    /// Three states; action 0 moves `s -> s + 1 mod 3` w.p. 0.7 and stays
    /// otherwise. The observation is a coin flip, or the state for action 1.
    struct Ring;

    impl PomdpEnv for Ring {
        type State = u8;
        type Obs = u8;

        fn num_actions(&self) -> usize {
            2
        }

        fn step(&self, s: &u8, action: usize, rng: &mut SimRng) -> Result<PomdpStep<u8, u8>> {
            let next = if rng.gen::<f64>() < 0.7 { (s + 1) % 3 } else { *s };
            let obs = if action == 1 { next } else { rng.gen_range(0..2) };
            Ok(PomdpStep {
                state: next,
                obs,
                reward: 0.0,
                done: false,
            })
        }

        fn sample_initial(&self, rng: &mut SimRng) -> u8 {
            rng.gen_range(0..3)
        }

        fn reward_range(&self) -> (f64, f64) {
            (0.0, 1.0)
        }
    }

    #[test]
    fn picks_the_paying_action() {
        // with one visit per arm only the values tell them apart
        let config = SearchConfig::uct(2, 1.0).with_recommend(Recommend::MaxValue);
        assert_eq!(pomcp_search(&TwoArms, &[()], &config).unwrap().recommended_action, 1);
        let config = SearchConfig::uct(50, 1.0);
        assert_eq!(pomcp_search(&TwoArms, &[()], &config).unwrap().recommended_action, 1);
    }

    #[test]
    fn empty_belief_is_rejected() {
        let config = SearchConfig::uct(10, 1.0);
        assert!(matches!(pomcp_search(&TwoArms, &[], &config), Err(Error::Precondition(_))));
        let mut rng = SimRng::seed_from_u64(0);
        assert!(belief_update(&Ring, &[], 0, &0, 10, &mut rng).is_err());
    }

    #[test]
    fn deterministic_observations_filter_exactly() {
        let mut rng = SimRng::seed_from_u64(1);
        let belief = vec![0u8, 1, 2, 0, 1];
        let out = belief_update(&Ring, &belief, 1, &2, DEFAULT_PARTICLES, &mut rng).unwrap();
        assert_eq!(out.len(), DEFAULT_PARTICLES);
        assert!(out.iter().all(|&s| s == 2));
    }

    #[test]
    fn uninformative_observation_gives_the_pushforward() {
        let mut rng = SimRng::seed_from_u64(2);
        // prior (0.5, 0.3, 0.2)
        let belief: Vec<u8> = [0u8; 5].iter().chain(&[1u8; 3]).chain(&[2u8; 2]).copied().collect();
        let out = belief_update(&Ring, &belief, 0, &1, 30_000, &mut rng).unwrap();
        let prior = [0.5, 0.3, 0.2];
        let expected: Vec<f64> = (0..3).map(|s| 0.3 * prior[s] + 0.7 * prior[(s + 2) % 3]).collect();
        let mut counts = [0f64; 3];
        for s in &out {
            counts[*s as usize] += 1.0;
        }
        let n = out.len() as f64;
        let stat: f64 = (0..3).map(|s| (counts[s] - n * expected[s]).powi(2) / (n * expected[s])).sum();
        let p = 1.0 - ChiSquared::new(2.0).unwrap().cdf(stat);
        assert!(p > 0.01, "chi2 p-value {p}");
    }

    #[test]
    fn impossible_observation_collapses() {
        let mut rng = SimRng::seed_from_u64(3);
        let err = belief_update(&Ring, &[0u8], 1, &7, 10, &mut rng).unwrap_err();
        assert!(matches!(err, Error::BeliefCollapse { attempts: MAX_ATTEMPTS }));
    }

    #[test]
    fn restart_filters_by_history() {
        let mut rng = SimRng::seed_from_u64(4);
        let out = restart_belief(&Ring, &[(1, 1), (0, 0), (1, 0)], 200, &mut rng).unwrap();
        assert!(out.iter().all(|&s| s == 0));
    }

    #[test]
    fn fully_observable_wrapper_reproduces_the_state_search() {
        let tree = SyntheticTree::new(3, 2, 8).unwrap();
        let config = SearchConfig::uct(300, 2f64.sqrt()).with_seed(5);
        let wrapped = FullyObservable { env: tree.clone(), root: tree.root() };
        let a = pomcp_search(&wrapped, &[tree.root()], &config).unwrap();
        let b = search(&tree, &tree.root(), &config).unwrap();
        assert_eq!(a.visit_histogram, b.visit_histogram);
        assert_eq!(a.root_q, b.root_q);
    }

    #[test]
    fn history_nodes_collect_particles_and_conserve_counts() {
        let mut rng = SimRng::seed_from_u64(6);
        let belief: Vec<u8> = (0..100).map(|_| Ring.sample_initial(&mut rng)).collect();
        let mut config = SearchConfig::uct(500, 1.0).with_gamma(0.9);
        config.rollout_depth_limit = 5;
        let (_, tree) = pomcp_search_tree(&Ring, &belief, &config).unwrap();
        assert!(tree.tree.conservation_violations().is_empty());
        assert_eq!(tree.tree.root().visits, 500);
        let child = tree.tree.child(0, 1, &2).unwrap();
        assert!(!tree.particles(child).is_empty());
        assert!(tree.particles(child).iter().all(|&s| s == 2));
    }
}
