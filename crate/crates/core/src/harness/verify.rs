//! Property suites run by `mctslab verify <suite>`.
//!
//! Each suite returns a report with one assertion per property; the binary
//! prints it as JSON and exits 1 if any assertion failed.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use serde::Serialize;

use super::stats::wilson_lower;
use crate::envs::SyntheticTree;
use crate::error::{Error, Result};
use crate::kernels::{compute_h, power_mean, theorem1_bound, PowerExponent, WeightedValues, BOUND_FLOOR};
use crate::mcts::{search, Backup, SearchConfig};
use crate::oracle::{entropic_mean, exact_values};
use crate::regularizers::{Entropy, RegularizerKind, Simplex};
use crate::seed::derive_seed;
use crate::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Kernels,
    Regularizers,
    Concentration,
    OracleEquivalence,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Kernels, Suite::Regularizers, Suite::Concentration, Suite::OracleEquivalence];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Kernels => "kernels",
            Suite::Regularizers => "regularizers",
            Suite::Concentration => "concentration",
            Suite::OracleEquivalence => "oracle-equivalence",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown suite `{s}`; expected kernels, regularizers, concentration or oracle-equivalence")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub observed: f64,
    pub limit: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub suite: String,
    pub passed: bool,
    pub assertions: Vec<Assertion>,
}

impl Report {
    fn new(suite: Suite, assertions: Vec<Assertion>) -> Self {
        Report {
            suite: suite.name().to_string(),
            passed: assertions.iter().all(|a| a.passed),
            assertions,
        }
    }

    pub fn assertion(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name == name)
    }
}

/// Passes when `observed <= limit`.
fn at_most(name: impl Into<String>, observed: f64, limit: f64, detail: impl Into<String>) -> Assertion {
    Assertion {
        name: name.into(),
        passed: observed <= limit,
        observed,
        limit,
        detail: detail.into(),
    }
}

fn failed(name: impl Into<String>, err: &Error) -> Assertion {
    Assertion {
        name: name.into(),
        passed: false,
        observed: f64::NAN,
        limit: f64::NAN,
        detail: err.to_string(),
    }
}

/// Knobs for the suites. Defaults are the full-size settings.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Temperature for the regularizer suite; a negative value is the
    /// injected fault.
    pub tau: f64,
    pub concentration_trials: u64,
    pub oracle_simulations: usize,
    pub oracle_runs: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 0,
            tau: 0.5,
            concentration_trials: 1_000_000,
            oracle_simulations: 100_000,
            oracle_runs: 25,
        }
    }
}

pub fn verify(suite: Suite, opts: &VerifyOptions) -> Report {
    match suite {
        Suite::Kernels => kernels_suite(opts.seed, 1000),
        Suite::Regularizers => regularizers_suite(opts.seed, opts.tau),
        Suite::Concentration => concentration_suite(opts.seed, opts.concentration_trials),
        Suite::OracleEquivalence => oracle_equivalence_suite(opts.seed, opts.oracle_simulations, opts.oracle_runs),
    }
}

fn random_instance(rng: &mut SimRng, lo: f64, hi: f64) -> WeightedValues {
    let n = rng.gen_range(1..=10);
    let values = (0..n).map(|_| rng.gen_range(lo..=hi)).collect();
    let weights = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    WeightedValues::new(values, weights).expect("valid instance")
}

fn pm(data: &WeightedValues, p: f64) -> f64 {
    let p = if p.is_infinite() {
        PowerExponent::PosInf
    } else {
        PowerExponent::Finite(p)
    };
    power_mean(data, p).expect("finite positive instance")
}

const KERNEL_TOL: f64 = 1e-12;
const MONOTONE_GRID: [f64; 9] = [1.0, 1.5, 2.0, 2.2, 3.0, 5.0, 8.0, 16.0, f64::INFINITY];

pub fn kernels_suite(seed: u64, instances: usize) -> Report {
    let mut rng = SimRng::seed_from_u64(seed);
    let (mut outside, mut decrease, mut p1_gap, mut lemma) = (0.0f64, 0.0f64, 0.0f64, f64::NEG_INFINITY);
    let mut lemma_worst = String::new();
    for _ in 0..instances {
        let data = random_instance(&mut rng, 0.0, 1.0);
        let ms: Vec<f64> = MONOTONE_GRID.iter().map(|&p| pm(&data, p)).collect();
        for &m in &ms {
            outside = outside.max(data.min() - m).max(m - data.max());
        }
        for w in ms.windows(2) {
            decrease = decrease.max(w[0] - w[1]);
        }
        let total: f64 = data.weights().iter().sum();
        let arith: f64 = data.values().iter().zip(data.weights()).map(|(x, w)| x * w).sum::<f64>() / total;
        p1_gap = p1_gap.max((ms[0] - arith).abs());

        let data = random_instance(&mut rng, 0.1, 1.0);
        let p = rng.gen_range(1.05..8.0);
        let q = if rng.gen_bool(0.5) { 1.0 } else { rng.gen_range(1.0..p) };
        let h = compute_h(0.1, 1.0, p, q).expect("valid exponents").h;
        let excess = pm(&data, p) - pm(&data, q) - h;
        if excess > lemma {
            lemma = excess;
            lemma_worst = format!("worst at p={p:.3}, q={q:.3}, H={h:.6}");
        }
    }
    let n = format!("{instances} instances");
    Report::new(
        Suite::Kernels,
        vec![
            at_most("power_mean_within_extremes", outside, KERNEL_TOL, format!("{n}; largest excursion beyond [min, max]")),
            at_most("power_mean_nondecreasing_in_p", decrease, KERNEL_TOL, format!("{n}; largest drop along p = 1..inf")),
            at_most("p1_equals_weighted_average", p1_gap, KERNEL_TOL, format!("{n}; largest |M_1 - mean|")),
            at_most("additive_gap_bound", lemma, KERNEL_TOL, format!("{n} in [0.1, 1]; max of M_p - M_q - H, {lemma_worst}")),
        ],
    )
}

fn regularizer_kinds(tau: f64, n: usize, rng: &mut SimRng) -> Vec<(String, RegularizerKind)> {
    let prior = Simplex::normalized((0..n).map(|_| rng.gen_range(0.1..1.0)).collect()).expect("positive weights");
    // struct literals on purpose: the fault run needs a tau that `new` rejects
    vec![
        ("shannon".into(), RegularizerKind { entropy: Entropy::Shannon, tau }),
        ("relative".into(), RegularizerKind { entropy: Entropy::Relative(prior), tau }),
        ("tsallis".into(), RegularizerKind { entropy: Entropy::Tsallis, tau }),
        ("alpha(1.5)".into(), RegularizerKind { entropy: Entropy::Alpha(1.5), tau }),
        ("alpha(4)".into(), RegularizerKind { entropy: Entropy::Alpha(4.0), tau }),
    ]
}

const GRADIENT_TOL: f64 = 1e-5;
const OPTIMALITY_TOL: f64 = 1e-9;
const ALPHA2_TOL: f64 = 1e-12;
const FD_STEP: f64 = 1e-6;

#[derive(Default)]
struct KindStats {
    gradient: f64,
    gap: f64,
    beaten: f64,
    bound: f64,
    error: Option<Error>,
}

fn check_kind(kind: &RegularizerKind, q: &[f64], rng: &mut SimRng, s: &mut KindStats) -> Result<()> {
    let value = kind.value(q)?;
    let pi = kind.policy(q)?;
    let mut bumped = q.to_vec();
    for a in 0..q.len() {
        bumped[a] = q[a] + FD_STEP;
        let up = kind.value(&bumped)?;
        bumped[a] = q[a] - FD_STEP;
        let down = kind.value(&bumped)?;
        bumped[a] = q[a];
        s.gradient = s.gradient.max(((up - down) / (2.0 * FD_STEP) - pi.probs()[a]).abs());
    }
    let objective = |p: &Simplex| -> Result<f64> { Ok(p.dot(q) - kind.tau * kind.regularizer_value(p)?) };
    s.gap = s.gap.max((value - objective(&pi)?).abs());
    for _ in 0..20 {
        let other = Simplex::normalized((0..q.len()).map(|_| rng.gen::<f64>().powi(3)).collect())?;
        s.beaten = s.beaten.max(objective(&other)? - value);
    }
    let (lo, hi) = kind.omega_bounds(q.len());
    let qmax = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (below, above) = (qmax - kind.tau * hi, qmax - kind.tau * lo);
    s.bound = s.bound.max(below - value).max(value - above);
    Ok(())
}

pub fn regularizers_suite(seed: u64, tau: f64) -> Report {
    let mut rng = SimRng::seed_from_u64(seed);
    let names: Vec<String> = regularizer_kinds(tau, 2, &mut rng).into_iter().map(|(n, _)| n).collect();
    let mut stats: Vec<KindStats> = names.iter().map(|_| KindStats::default()).collect();
    for _ in 0..200 {
        let n = rng.gen_range(2..=8);
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for ((_, kind), s) in regularizer_kinds(tau, n, &mut rng).iter().zip(stats.iter_mut()) {
            if s.error.is_none() {
                if let Err(e) = check_kind(kind, &q, &mut rng, s) {
                    s.error = Some(e);
                }
            }
        }
    }
    let mut assertions = Vec::new();
    for (name, s) in names.iter().zip(&stats) {
        if let Some(e) = &s.error {
            for check in ["gradient", "optimality", "boundedness"] {
                assertions.push(failed(format!("{check}/{name}"), e));
            }
            continue;
        }
        assertions.push(at_most(format!("gradient/{name}"), s.gradient, GRADIENT_TOL, "200 vectors; max |finite difference - policy|"));
        assertions.push(at_most(
            format!("optimality/{name}"),
            s.gap.max(s.beaten),
            OPTIMALITY_TOL,
            format!("gap at returned policy {:.2e}, best random simplex point above value by {:.2e}", s.gap, s.beaten),
        ));
        assertions.push(at_most(format!("boundedness/{name}"), s.bound, OPTIMALITY_TOL, "max q - tau U <= value <= max q - tau L"));
    }

    let tsallis = RegularizerKind { entropy: Entropy::Tsallis, tau };
    let alpha2 = RegularizerKind { entropy: Entropy::Alpha(2.0), tau };
    let mut diff = 0.0f64;
    let mut err = None;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=10);
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pair = (|| -> Result<f64> {
            let dv = (tsallis.value(&q)? - alpha2.value(&q)?).abs();
            let (a, b) = (tsallis.policy(&q)?, alpha2.policy(&q)?);
            Ok(a.probs().iter().zip(b.probs()).map(|(x, y)| (x - y).abs()).fold(dv, f64::max))
        })();
        match pair {
            Ok(d) => diff = diff.max(d),
            Err(e) => {
                err = Some(e);
                break;
            }
        }
    }
    assertions.push(match err {
        Some(e) => failed("alpha2_matches_tsallis", &e),
        None => at_most("alpha2_matches_tsallis", diff, ALPHA2_TOL, "1000 vectors; max difference in value and policy"),
    });
    Report::new(Suite::Regularizers, assertions)
}

pub const CONCENTRATION_EXPONENTS: [f64; 3] = [1.0, 2.0, 4.0];
pub const CONCENTRATION_SIZES: [u64; 2] = [10, 100];
pub const CONCENTRATION_EPSILONS: [f64; 8] = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4];
/// One-sided 99% normal quantile.
const Z99: f64 = 2.326;

/// Empirical two-sided tails `P(|M_p - 1/2| > eps)` of the equal-weight
/// power mean of `n` uniform samples, one entry per epsilon.
pub fn empirical_tails(p: f64, n: u64, trials: u64, seed: u64) -> Vec<u64> {
    let mut rng = SimRng::seed_from_u64(seed);
    let mut hits = vec![0u64; CONCENTRATION_EPSILONS.len()];
    for _ in 0..trials {
        let mut acc = 0.0;
        for _ in 0..n {
            let x: f64 = rng.gen();
            acc += match p as u32 {
                1 => x,
                2 => x * x,
                4 => (x * x) * (x * x),
                _ => x.powf(p),
            };
        }
        let dev = ((acc / n as f64).powf(1.0 / p) - 0.5).abs();
        for (h, &eps) in hits.iter_mut().zip(&CONCENTRATION_EPSILONS) {
            if dev > eps {
                *h += 1;
            }
        }
    }
    hits
}

/// Monte-Carlo check of the power-mean tail bound. A cell fails when the
/// 99% lower confidence bound of its empirical tail exceeds the bound.
pub fn concentration_suite(seed: u64, trials: u64) -> Report {
    let mut assertions = Vec::new();
    for &p in &CONCENTRATION_EXPONENTS {
        for &n in &CONCENTRATION_SIZES {
            let hits = empirical_tails(p, n, trials, derive_seed(seed, &[p as u64, n]));
            let mut ratio = 0.0f64;
            let mut worst = String::new();
            for (&h, &eps) in hits.iter().zip(&CONCENTRATION_EPSILONS) {
                let bound = theorem1_bound(n, p, eps, 0.0, 1.0).expect("valid grid");
                let lower = wilson_lower(h, trials, Z99);
                let r = lower / bound;
                if r > ratio {
                    ratio = r;
                    worst = format!("eps={eps}: tail {:.3e} (99% lower {lower:.3e}) vs bound {bound:.3e}", h as f64 / trials as f64);
                }
            }
            assertions.push(at_most(
                format!("tail_bound/p={p}/n={n}"),
                ratio,
                1.0,
                format!("{trials} trials, l floored at {BOUND_FLOOR}; worst {worst}"),
            ));
        }
    }
    Report::new(Suite::Concentration, assertions)
}

pub const ENTROPIC_TOL: f64 = 1e-6;
pub const ORACLE_TOL: f64 = 0.02;
pub const ORACLE_SHAPES: [(usize, usize); 6] = [(2, 1), (3, 1), (4, 1), (2, 2), (3, 2), (4, 2)];
/// Exploration constant for the convergence check.
pub const ORACLE_C: f64 = std::f64::consts::SQRT_2;

/// Entropic-mean identity and convergence of Average-backup UCT to the
/// exact root value.
pub fn oracle_equivalence_suite(seed: u64, simulations: usize, runs: usize) -> Report {
    let mut rng = SimRng::seed_from_u64(seed);
    let mut assertions = Vec::new();
    for p in [1.5, 2.0, 3.0] {
        let mut worst = 0.0f64;
        let mut err = None;
        for _ in 0..500 {
            let data = random_instance(&mut rng, 0.1, 1.0);
            let total: f64 = data.weights().iter().sum();
            let w: Vec<f64> = data.weights().iter().map(|x| x / total).collect();
            match entropic_mean(data.values(), &w, 1.0 - p) {
                Ok(e) => worst = worst.max((e - pm(&data, p)).abs()),
                Err(e) => {
                    err = Some(e);
                    break;
                }
            }
        }
        let name = format!("entropic_mean_equals_power_mean/p={p}");
        assertions.push(match err {
            Some(e) => failed(name, &e),
            None => at_most(name, worst, ENTROPIC_TOL, "500 instances; max |entropic - power|"),
        });
    }

    for (k, d) in ORACLE_SHAPES {
        let outcome = (|| -> Result<(usize, f64)> {
            let trees = SyntheticTree::experiment_layout(k, d, runs.div_ceil(5), 5, derive_seed(seed, &[k as u64, d as u64]))?;
            let mut within = 0;
            let mut worst = 0.0f64;
            for (tree, seeds) in &trees {
                let v_star = exact_values(tree)?.root_value();
                for &s in seeds {
                    let sc = SearchConfig::uct(simulations, ORACLE_C).with_backup(Backup::Average).with_seed(s);
                    let err = (search(tree, &tree.root(), &sc)?.root_value - v_star).abs();
                    worst = worst.max(err);
                    if err <= ORACLE_TOL {
                        within += 1;
                    }
                }
            }
            Ok((within, worst))
        })();
        let name = format!("uct_converges/k={k}/d={d}");
        let total = runs.div_ceil(5) * 5;
        let need = total - total.div_ceil(25);
        assertions.push(match outcome {
            Ok((within, worst)) => Assertion {
                name,
                passed: within >= need,
                observed: within as f64,
                limit: need as f64,
                detail: format!("{within}/{total} runs within {ORACLE_TOL} at {simulations} simulations (needed {need}); worst error {worst:.4}"),
            },
            Err(e) => failed(name, &e),
        });
    }
    Report::new(Suite::OracleEquivalence, assertions)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("kernel".parse::<Suite>().is_err());
    }

    #[test]
    fn kernels_pass() {
        let r = kernels_suite(3, 200);
        assert!(r.passed, "{r:#?}");
    }

    #[test]
    fn regularizers_pass_and_corrupted_tau_fails_boundedness() {
        let good = regularizers_suite(5, 0.5);
        assert!(good.passed, "{good:#?}");
        let bad = regularizers_suite(5, -1.0);
        assert!(!bad.passed);
        assert!(bad
            .assertions
            .iter()
            .filter(|a| a.name.starts_with("boundedness/"))
            .all(|a| !a.passed));
    }

    #[test]
    fn tails_shrink_with_epsilon() {
        let hits = empirical_tails(1.0, 10, 20_000, 1);
        assert!(hits.windows(2).all(|w| w[0] >= w[1]));
        // Var of the mean of 10 uniforms is 1/120; eps=0.05 is ~0.55 sd
        let rate = hits[0] as f64 / 20_000.0;
        assert!((rate - 0.58).abs() < 0.03, "{rate}");
    }
}
