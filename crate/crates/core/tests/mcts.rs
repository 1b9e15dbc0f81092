use mctslab::envs::{BernoulliBandit, GridLakeEnv, SynState, SyntheticTree};
use mctslab::harness::stats::chi_square_p;
use mctslab::mcts::{search, select_e3w, Backup, Environment, Planner, SearchConfig, Transition, TreeNode};
use mctslab::oracle::regret_and_errors;
use mctslab::regularizers::RegularizerKind;
use mctslab::{Result, SimRng};
use rand::{Rng, SeedableRng};

/// Two arms with Gaussian noise, clamped to the declared range.
struct NoisyArms {
    means: [f64; 2],
    sigma: f64,
}

impl Environment for NoisyArms {
    type State = bool;

    fn num_actions(&self, pulled: &bool) -> usize {
        if *pulled {
            0
        } else {
            2
        }
    }

    fn step(&self, _: &bool, action: usize, rng: &mut SimRng) -> Result<Transition<bool>> {
        // Box-Muller
        let (u1, u2): (f64, f64) = (rng.gen::<f64>().max(1e-300), rng.gen());
        let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        let reward = (self.means[action] + self.sigma * z).clamp(-0.5, 1.5);
        Ok(Transition { state: true, reward, done: true })
    }

    fn reward_range(&self) -> (f64, f64) {
        (-0.5, 1.5)
    }
}

/// Multiplies every reward by a constant.
struct Scaled<E>(E, f64);

impl<E: Environment> Environment for Scaled<E> {
    type State = E::State;

    fn num_actions(&self, s: &E::State) -> usize {
        self.0.num_actions(s)
    }

    fn step(&self, s: &E::State, a: usize, rng: &mut SimRng) -> Result<Transition<E::State>> {
        let mut t = self.0.step(s, a, rng)?;
        t.reward *= self.1;
        Ok(t)
    }

    fn reward_range(&self) -> (f64, f64) {
        let (lo, hi) = self.0.reward_range();
        (lo * self.1, hi * self.1)
    }
}

fn lake() -> GridLakeEnv {
    GridLakeEnv::new()
}

#[test]
fn counts_are_conserved_after_every_simulation() {
    let env = lake();
    let configs = [
        SearchConfig::uct(300, 1.4).with_gamma(0.95),
        SearchConfig::uct(300, 1.4).with_backup(Backup::Power(2.2)).with_gamma(0.95),
        SearchConfig::uct(300, 1.4).with_backup(Backup::Max).with_gamma(0.95),
        SearchConfig::e3w(300, RegularizerKind::tsallis(0.1).unwrap(), 0.1).with_gamma(0.95),
    ];
    for config in configs {
        let mut planner = Planner::new(&env, env.initial_state(), &config.with_seed(9)).unwrap();
        let mut done = 0;
        while planner.step(&env).unwrap() {
            done += 1;
            assert!(planner.tree().conservation_violations().is_empty());
            assert_eq!(planner.tree().root().visits, done);
        }
        assert_eq!(done, 300);
    }
}

#[test]
fn average_node_value_is_visit_weighted_mean_of_q() {
    let tree = SyntheticTree::new(3, 4, 2).unwrap();
    let config = SearchConfig::uct(2000, 1.0).with_seed(4);
    let (_, t) = Planner::new(&tree, tree.root(), &config).unwrap().run(&tree).unwrap();
    for id in 0..t.len() {
        let node = t.node(id);
        if node.visits == 0 {
            continue;
        }
        let mean: f64 = node.edges.iter().map(|e| e.visits as f64 * e.q).sum::<f64>() / node.visits as f64;
        assert!((node.value - mean).abs() <= 1e-12, "node {id}: {} vs {mean}", node.value);
    }
}

#[test]
fn power_node_values_lie_between_average_and_max() {
    let tree = SyntheticTree::new(3, 4, 5).unwrap();
    let config = SearchConfig::uct(2000, 1.0).with_backup(Backup::Power(2.0)).with_seed(6);
    let (_, t) = Planner::new(&tree, tree.root(), &config).unwrap().run(&tree).unwrap();
    let mut checked = 0;
    for id in 0..t.len() {
        let node = t.node(id);
        if node.visits < 2 {
            continue;
        }
        let visited = node.edges.iter().filter(|e| e.visits > 0);
        let avg: f64 = node.edges.iter().map(|e| e.visits as f64 * e.q).sum::<f64>() / node.visits as f64;
        let max = visited.map(|e| e.q).fold(f64::NEG_INFINITY, f64::max);
        assert!(avg - 1e-12 <= node.value && node.value <= max + 1e-12, "node {id}");
        checked += 1;
    }
    assert!(checked > 10);
}

#[test]
fn power_one_matches_average_on_a_bandit() {
    let env = BernoulliBandit::new(vec![0.2, 0.8, 0.5]).unwrap();
    let avg = search(&env, &false, &SearchConfig::uct(10_000, 1.0).with_seed(1)).unwrap();
    let p1 = search(&env, &false, &SearchConfig::uct(10_000, 1.0).with_backup(Backup::Power(1.0)).with_seed(1)).unwrap();
    assert!((avg.root_value - p1.root_value).abs() <= 1e-12);
    assert_eq!(avg.visit_histogram, p1.visit_histogram);
}

#[test]
fn power_two_sits_strictly_between_average_and_max() {
    let env = BernoulliBandit::new(vec![0.2, 0.8]).unwrap();
    let run = |b| search(&env, &false, &SearchConfig::uct(10_000, 1.0).with_backup(b).with_seed(3)).unwrap().root_value;
    let (avg, p2, max) = (run(Backup::Average), run(Backup::Power(2.0)), run(Backup::Max));
    assert!(avg < p2 && p2 < max, "{avg} {p2} {max}");
}

#[test]
fn identical_seeds_give_identical_results() {
    let env = lake();
    for config in [
        SearchConfig::uct(500, 1.0).with_backup(Backup::Power(3.0)).with_gamma(0.95),
        SearchConfig::e3w(500, RegularizerKind::shannon(0.2).unwrap(), 0.1).with_gamma(0.95),
    ] {
        let a = search(&env, &env.initial_state(), &config.clone().with_seed(77)).unwrap();
        let b = search(&env, &env.initial_state(), &config.with_seed(77)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn e3w_draws_follow_the_mixture() {
    let mut node = TreeNode::<()>::new(4, 0);
    for (e, (n, q)) in node.edges.iter_mut().zip([(30u64, 0.2), (5, 0.9), (0, 0.0), (15, 0.5)]) {
        e.visits = n;
        e.q = q;
    }
    node.visits = 50;
    let kind = RegularizerKind::shannon(0.5).unwrap();
    let eps = 0.3;

    // expected distribution written out independently of the library
    let lambda = (eps * 4.0 / 51f64.ln()).min(1.0);
    let w: Vec<f64> = node.edges.iter().map(|e| (e.q / 0.5).exp()).collect();
    let z: f64 = w.iter().sum();
    let probs: Vec<f64> = w.iter().map(|x| (1.0 - lambda) * x / z + lambda / 4.0).collect();

    let mut rng = SimRng::seed_from_u64(12);
    let mut counts = [0u64; 4];
    for _ in 0..100_000 {
        counts[select_e3w(&node, &kind, eps, &mut rng).unwrap()] += 1;
    }
    let p = chi_square_p(&counts, &probs);
    assert!(p > 0.01, "p = {p}, counts {counts:?}, expected {probs:?}");
}

#[test]
fn scaling_rewards_and_c_together_keeps_the_selection_sequence() {
    let tree = SyntheticTree::new(4, 3, 21).unwrap();
    let scaled = Scaled(tree.clone(), 4.0);
    let root = tree.root();
    let base = search(&tree, &root, &SearchConfig::uct(3000, 0.7).with_seed(5)).unwrap();
    let both = search(&scaled, &root, &SearchConfig::uct(3000, 2.8).with_seed(5)).unwrap();
    assert_eq!(base.root_choices, both.root_choices);
    let rewards_only = search(&scaled, &root, &SearchConfig::uct(3000, 0.7).with_seed(5)).unwrap();
    assert_ne!(base.root_choices, rewards_only.root_choices);
}

#[test]
fn clear_two_arm_tree_is_solved() {
    let env = NoisyArms { means: [0.9, 0.1], sigma: 0.05 };
    let hits = (0..100)
        .filter(|&s| {
            let config = SearchConfig::uct(1000, std::f64::consts::SQRT_2).with_seed(s);
            search(&env, &false, &config).unwrap().recommended_action == 0
        })
        .count();
    assert!(hits >= 99, "{hits}/100");
}

#[test]
fn budget_of_one_per_action_visits_each_root_edge_once() {
    let tree = SyntheticTree::new(5, 2, 8).unwrap();
    let r = search(&tree, &tree.root(), &SearchConfig::uct(5, 1.0).with_seed(0)).unwrap();
    assert_eq!(r.visit_histogram, vec![1; 5]);
    let env = BernoulliBandit::new(vec![0.5; 7]).unwrap();
    let r = search(&env, &false, &SearchConfig::uct(7, 1.0)).unwrap();
    assert_eq!(r.visit_histogram, vec![1; 7]);
}

#[test]
fn shannon_e3w_error_shrinks_with_budget() {
    let kind = RegularizerKind::shannon(0.1).unwrap();
    let mean_error = |n: usize| -> f64 {
        (0..8u64)
            .map(|s| {
                let tree = SyntheticTree::new(100, 1, 100 + s).unwrap();
                let root: SynState = tree.root();
                let r = search(&tree, &root, &SearchConfig::e3w(n, kind.clone(), 0.1).with_seed(s)).unwrap();
                regret_and_errors(&r, n, &tree, Some(&kind)).unwrap().eps_omega.abs()
            })
            .sum::<f64>()
            / 8.0
    };
    let (small, large) = (mean_error(1000), mean_error(20_000));
    assert!(large < small, "{small} -> {large}");
}
