//! Flat `key = value` experiment files with dotted keys.
//!
//! ```text
//! # Table 2 layout
//! env.name = frozenlake
//! search.backup = power
//! search.c = 1.414
//! run.count = 100
//! run.budgets = 4096, 16384
//! sweep.search.backup.p = 1, 2.2, max
//! ```
//!
//! Lines starting with `#` are comments. A `sweep.<key>` entry lists values
//! for a `search.*` key; the variants are the cartesian product of all sweep
//! axes in file order.

use std::collections::BTreeMap;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::envs::RockRewards;
use crate::error::{Error, Result};
use crate::mcts::{Backup, Recommend, SearchConfig, TreePolicy, DEFAULT_ROLLOUT_DEPTH};
use crate::regularizers::{Entropy, RegularizerKind, Simplex};

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvSpec {
    FrozenLake { max_steps: u32 },
    /// `replan`: search before every move instead of once up front.
    Copy { actions: usize, length: usize, replan: bool },
    Synthetic { k: usize, d: usize, sigma: f64, trees: usize },
    Rocksample {
        n: usize,
        rocks: usize,
        layout_seed: u64,
        rewards: RockRewards,
        sensor_distance: f64,
        max_steps: usize,
        particles: usize,
    },
    Pocman {
        food_prob: f64,
        chase_prob: f64,
        max_steps: usize,
        particles: usize,
    },
}

impl EnvSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EnvSpec::FrozenLake { .. } => "frozenlake",
            EnvSpec::Copy { .. } => "copy",
            EnvSpec::Synthetic { .. } => "synthetic",
            EnvSpec::Rocksample { .. } => "rocksample",
            EnvSpec::Pocman { .. } => "pocman",
        }
    }

    fn default_gamma(&self) -> f64 {
        match self {
            EnvSpec::Copy { .. } | EnvSpec::Synthetic { .. } => 1.0,
            _ => 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExplorationConstant {
    Fixed(f64),
    /// Width of the environment's immediate-reward range.
    RewardRange,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    Ucb1 { c: ExplorationConstant },
    E3w { entropy: EntropySpec, tau: f64, epsilon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EntropySpec {
    Shannon,
    Relative,
    Tsallis,
    Alpha(f64),
}

/// Search settings of one variant, before the budget and seed are known.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpec {
    pub policy: PolicySpec,
    pub backup: Backup,
    pub gamma: f64,
    pub rollout_depth: usize,
    pub recommend: Option<Recommend>,
}

impl SearchSpec {
    /// Concrete configuration for an environment with `n_actions` root
    /// actions and the given reward range.
    pub fn build(&self, n_simulations: usize, seed: u64, n_actions: usize, reward_range: (f64, f64)) -> Result<SearchConfig> {
        let tree_policy = match &self.policy {
            PolicySpec::Ucb1 { c } => TreePolicy::Ucb1 {
                c: match c {
                    ExplorationConstant::Fixed(c) => *c,
                    ExplorationConstant::RewardRange => reward_range.1 - reward_range.0,
                },
            },
            PolicySpec::E3w { entropy, tau, epsilon } => TreePolicy::E3w {
                kind: self.kind(*entropy, *tau, n_actions)?,
                epsilon: *epsilon,
            },
        };
        let config = SearchConfig {
            n_simulations,
            backup: self.backup,
            tree_policy,
            gamma: self.gamma,
            rollout_depth_limit: self.rollout_depth,
            rng_seed: seed,
            recommend: self.recommend,
        };
        config.validate()?;
        Ok(config)
    }

    fn kind(&self, entropy: EntropySpec, tau: f64, n_actions: usize) -> Result<RegularizerKind> {
        let entropy = match entropy {
            EntropySpec::Shannon => Entropy::Shannon,
            EntropySpec::Relative => Entropy::Relative(Simplex::uniform(n_actions.max(1))),
            EntropySpec::Tsallis => Entropy::Tsallis,
            EntropySpec::Alpha(a) => Entropy::Alpha(a),
        };
        RegularizerKind::new(entropy, tau)
    }

    /// Regularizer of an E3W variant, for the oracle.
    pub fn regularizer(&self, n_actions: usize) -> Result<Option<RegularizerKind>> {
        match &self.policy {
            PolicySpec::E3w { entropy, tau, .. } => self.kind(*entropy, *tau, n_actions).map(Some),
            PolicySpec::Ucb1 { .. } => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    /// `base`, or the swept assignments joined with `;`.
    pub label: String,
    pub search: SearchSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub env: EnvSpec,
    pub variants: Vec<Variant>,
    pub runs: usize,
    pub seed: u64,
    pub budgets: Vec<usize>,
    pub output: Option<PathBuf>,
    pub swept: bool,
    entries: BTreeMap<String, Entry>,
}

const TOP_KEYS: &[&str] = &["name", "run.count", "run.seed", "run.budgets", "output.path"];

const ENV_KEYS: &[&str] = &[
    "env.name",
    "env.max_steps",
    "env.actions",
    "env.length",
    "env.replan",
    "env.k",
    "env.d",
    "env.sigma",
    "env.trees",
    "env.n",
    "env.rocks",
    "env.layout_seed",
    "env.reward.good",
    "env.reward.bad",
    "env.reward.exit",
    "env.sensor_distance",
    "env.particles",
    "env.food_prob",
    "env.chase_prob",
];

const SEARCH_KEYS: &[&str] = &[
    "search.policy",
    "search.c",
    "search.backup",
    "search.backup.p",
    "search.regularizer",
    "search.tau",
    "search.alpha",
    "search.epsilon",
    "search.gamma",
    "search.rollout_depth",
    "search.recommend",
];

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut sweep_order = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| Error::config(line, trimmed, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::config(line, key, "malformed key"));
            }
            if value.is_empty() {
                return Err(Error::config(line, key, "missing value"));
            }
            let known = match key.strip_prefix("sweep.") {
                Some(target) => {
                    sweep_order.push(key.to_string());
                    SEARCH_KEYS.contains(&target)
                }
                None => TOP_KEYS.contains(&key) || ENV_KEYS.contains(&key) || SEARCH_KEYS.contains(&key),
            };
            if !known {
                return Err(Error::config(line, key, "unknown key"));
            }
            let entry = Entry { value: value.to_string(), line };
            if let Some(prev) = entries.insert(key.to_string(), entry) {
                return Err(Error::config(line, key, format!("duplicate key, first set on line {}", prev.line)));
            }
        }
        Self::from_entries(entries, &sweep_order)
    }

    fn from_entries(entries: BTreeMap<String, Entry>, sweep_order: &[String]) -> Result<Self> {
        let get = Getter(&entries);
        let env = parse_env(&get)?;
        let runs = get.parse_or("run.count", 1usize)?;
        if runs == 0 {
            return Err(get.error("run.count", "must be at least 1"));
        }
        let seed = get.parse_or("run.seed", 0u64)?;
        let budgets: Vec<usize> = match get.entry("run.budgets") {
            Some(e) => e
                .value
                .split(',')
                .map(|v| v.trim().parse().map_err(|_| Error::config(e.line, "run.budgets", format!("`{}` is not a count", v.trim()))))
                .collect::<Result<_>>()?,
            None => return Err(Error::config(0, "run.budgets", "missing required key")),
        };
        if budgets.contains(&0) || budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(get.error("run.budgets", "budgets must be positive and strictly ascending"));
        }

        // variants: cartesian product of sweep axes, first axis slowest
        let mut assignments: Vec<Vec<(String, String, usize)>> = vec![vec![]];
        for sweep_key in sweep_order {
            let e = &entries[sweep_key];
            let target = sweep_key.trim_start_matches("sweep.").to_string();
            let values: Vec<String> = e.value.split(',').map(|v| v.trim().to_string()).collect();
            if values.iter().any(String::is_empty) {
                return Err(Error::config(e.line, sweep_key.as_str(), "empty sweep value"));
            }
            assignments = assignments
                .into_iter()
                .flat_map(|prefix| {
                    let target = &target;
                    values.iter().map(move |v| {
                        let mut a = prefix.clone();
                        a.push((target.clone(), v.clone(), e.line));
                        a
                    })
                })
                .collect();
        }
        let variants = assignments
            .into_iter()
            .map(|assign| {
                let mut local = entries.clone();
                for (key, value, line) in &assign {
                    local.insert(key.clone(), Entry { value: value.clone(), line: *line });
                }
                let label = if assign.is_empty() {
                    "base".to_string()
                } else {
                    assign.iter().map(|(k, v, _)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
                };
                Ok(Variant {
                    label,
                    search: parse_search(&Getter(&local), &env)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(ExperimentConfig {
            name: get.string_or("name", "experiment"),
            env,
            variants,
            runs,
            seed,
            budgets,
            output: get.entry("output.path").map(|e| PathBuf::from(&e.value)),
            swept: !sweep_order.is_empty(),
            entries,
        })
    }

    /// Replaces the seed base, as `--seed` does.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.entries.insert("run.seed".into(), Entry { value: seed.to_string(), line: 0 });
    }

    /// Canonical text of every setting that affects results: sorted
    /// `key = value` lines, output path excluded.
    pub fn canonical(&self) -> String {
        self.entries
            .iter()
            .filter(|(k, _)| k.as_str() != "output.path")
            .map(|(k, e)| format!("{k} = {}\n", e.value))
            .collect()
    }

    /// SHA-256 of [`Self::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

struct Getter<'a>(&'a BTreeMap<String, Entry>);

impl Getter<'_> {
    fn entry(&self, key: &str) -> Option<&Entry> {
        self.0.get(key)
    }

    fn line(&self, key: &str) -> usize {
        self.entry(key).map_or(0, |e| e.line)
    }

    fn error(&self, key: &str, msg: impl Into<String>) -> Error {
        Error::config(self.line(key), key, msg)
    }

    fn string_or(&self, key: &str, default: &str) -> String {
        self.entry(key).map_or_else(|| default.to_string(), |e| e.value.clone())
    }

    fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.entry(key) {
            Some(e) => e
                .value
                .parse()
                .map_err(|_| Error::config(e.line, key, format!("cannot parse `{}`", e.value))),
            None => Ok(default),
        }
    }

    fn required<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let e = self.entry(key).ok_or_else(|| Error::config(0, key, "missing required key"))?;
        e.value
            .parse()
            .map_err(|_| Error::config(e.line, key, format!("cannot parse `{}`", e.value)))
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.parse_or(key, default)?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(self.error(key, "must be positive"));
        }
        Ok(v)
    }

    fn probability(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.parse_or(key, default)?;
        if !(0.0..=1.0).contains(&v) {
            return Err(self.error(key, "must lie in [0, 1]"));
        }
        Ok(v)
    }

    fn reject(&self, keys: &[&str], env: &str) -> Result<()> {
        for key in keys {
            if self.entry(key).is_some() {
                return Err(self.error(key, format!("not used by env.name = {env}")));
            }
        }
        Ok(())
    }
}

fn parse_env(get: &Getter) -> Result<EnvSpec> {
    let name = get
        .entry("env.name")
        .ok_or_else(|| Error::config(0, "env.name", "missing required key"))?
        .value
        .clone();
    let synthetic = ["env.k", "env.d", "env.sigma", "env.trees"];
    let copy = ["env.actions", "env.length", "env.replan"];
    let rock = [
        "env.n",
        "env.rocks",
        "env.layout_seed",
        "env.reward.good",
        "env.reward.bad",
        "env.reward.exit",
        "env.sensor_distance",
    ];
    let pocman = ["env.food_prob", "env.chase_prob"];
    let pomdp = ["env.particles"];
    let episodic = ["env.max_steps"];
    let spec = match name.as_str() {
        "frozenlake" => {
            get.reject(&[&synthetic[..], &copy, &rock, &pocman, &pomdp].concat(), &name)?;
            EnvSpec::FrozenLake {
                max_steps: get.parse_or("env.max_steps", crate::envs::lake::STEP_LIMIT)?,
            }
        }
        "copy" => {
            get.reject(&[&synthetic[..], &rock, &pocman, &pomdp, &episodic].concat(), &name)?;
            let actions = get.parse_or("env.actions", 144usize)?;
            if actions == 0 || !actions.is_multiple_of(4) {
                return Err(get.error("env.actions", "must be a positive multiple of 4"));
            }
            let length = get.parse_or("env.length", crate::envs::BAND_LENGTH)?;
            if length == 0 {
                return Err(get.error("env.length", "must be positive"));
            }
            EnvSpec::Copy {
                actions,
                length,
                replan: get.parse_or("env.replan", false)?,
            }
        }
        "synthetic" => {
            get.reject(&[&copy[..], &rock, &pocman, &pomdp, &episodic].concat(), &name)?;
            let k: usize = get.required("env.k")?;
            let d: usize = get.required("env.d")?;
            if k < 2 || d < 1 {
                return Err(get.error("env.k", "need k >= 2 and d >= 1"));
            }
            let sigma = get.parse_or("env.sigma", crate::envs::DEFAULT_SIGMA)?;
            if !(sigma >= 0.0) {
                return Err(get.error("env.sigma", "must be non-negative"));
            }
            let trees = get.parse_or("env.trees", 5usize)?;
            if trees == 0 {
                return Err(get.error("env.trees", "must be at least 1"));
            }
            EnvSpec::Synthetic { k, d, sigma, trees }
        }
        "rocksample" => {
            get.reject(&[&synthetic[..], &copy, &pocman].concat(), &name)?;
            let n = get.parse_or("env.n", 4usize)?;
            let rocks = get.parse_or("env.rocks", 2usize)?;
            if n < 2 || rocks > 64 || rocks + 1 > n * n {
                return Err(get.error("env.n", "not a valid rocksample instance"));
            }
            let defaults = RockRewards::default();
            EnvSpec::Rocksample {
                n,
                rocks,
                layout_seed: get.parse_or("env.layout_seed", 0u64)?,
                rewards: RockRewards {
                    good_sample: get.parse_or("env.reward.good", defaults.good_sample)?,
                    bad_sample: get.parse_or("env.reward.bad", defaults.bad_sample)?,
                    exit: get.parse_or("env.reward.exit", defaults.exit)?,
                },
                sensor_distance: get.positive("env.sensor_distance", 20.0)?,
                max_steps: get.parse_or("env.max_steps", 100usize)?,
                particles: particles(get)?,
            }
        }
        "pocman" => {
            get.reject(&[&synthetic[..], &copy, &rock].concat(), &name)?;
            EnvSpec::Pocman {
                food_prob: get.probability("env.food_prob", 0.5)?,
                chase_prob: get.probability("env.chase_prob", 0.75)?,
                max_steps: get.parse_or("env.max_steps", 200usize)?,
                particles: particles(get)?,
            }
        }
        other => return Err(get.error("env.name", format!("unknown environment `{other}`"))),
    };
    Ok(spec)
}

fn particles(get: &Getter) -> Result<usize> {
    let n = get.parse_or("env.particles", crate::pomcp::DEFAULT_PARTICLES)?;
    if n == 0 {
        return Err(get.error("env.particles", "must be at least 1"));
    }
    Ok(n)
}

fn parse_search(get: &Getter, env: &EnvSpec) -> Result<SearchSpec> {
    let policy = match get.string_or("search.policy", "ucb1").as_str() {
        "ucb1" => {
            let c = match get.entry("search.c").map(|e| e.value.as_str()) {
                Some("range") => ExplorationConstant::RewardRange,
                _ => {
                    let c = get.parse_or("search.c", std::f64::consts::SQRT_2)?;
                    if !(c >= 0.0 && c.is_finite()) {
                        return Err(get.error("search.c", "must be non-negative"));
                    }
                    ExplorationConstant::Fixed(c)
                }
            };
            PolicySpec::Ucb1 { c }
        }
        "e3w" => {
            let entropy = match get.string_or("search.regularizer", "shannon").as_str() {
                "shannon" => EntropySpec::Shannon,
                "relative" => EntropySpec::Relative,
                "tsallis" => EntropySpec::Tsallis,
                "alpha" => EntropySpec::Alpha(get.positive("search.alpha", 2.0)?),
                other => return Err(get.error("search.regularizer", format!("unknown regularizer `{other}`"))),
            };
            PolicySpec::E3w {
                entropy,
                tau: get.positive("search.tau", 0.1)?,
                epsilon: get.positive("search.epsilon", 0.1)?,
            }
        }
        other => return Err(get.error("search.policy", format!("unknown policy `{other}`"))),
    };
    let backup = match get.string_or("search.backup", "average").as_str() {
        "average" => Backup::Average,
        "max" => Backup::Max,
        "power" => {
            let p = match get.entry("search.backup.p").map(|e| e.value.as_str()) {
                Some("max") | Some("inf") => f64::INFINITY,
                _ => get.parse_or("search.backup.p", 1.0)?,
            };
            if !(p >= 1.0) {
                return Err(get.error("search.backup.p", "power backup needs p >= 1"));
            }
            Backup::Power(p)
        }
        other => return Err(get.error("search.backup", format!("unknown backup `{other}`"))),
    };
    let gamma = get.parse_or("search.gamma", env.default_gamma())?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(get.error("search.gamma", "must lie in [0, 1]"));
    }
    if matches!(env, EnvSpec::Synthetic { .. }) && gamma != 1.0 {
        return Err(get.error("search.gamma", "synthetic trees are undiscounted"));
    }
    let recommend = match get.entry("search.recommend").map(|e| e.value.as_str()) {
        None => None,
        Some("max_visit") => Some(Recommend::MaxVisit),
        Some("max_value") => Some(Recommend::MaxValue),
        Some(other) => return Err(get.error("search.recommend", format!("unknown rule `{other}`"))),
    };
    Ok(SearchSpec {
        policy,
        backup,
        gamma,
        rollout_depth: get.parse_or("search.rollout_depth", DEFAULT_ROLLOUT_DEPTH)?,
        recommend,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LAKE: &str = "\
# comment
env.name = frozenlake
search.backup = power
run.count = 3
run.budgets = 16, 64
sweep.search.backup.p = 1, 2.2, max
";

    #[test]
    fn parses_sweeps_in_order() {
        let c = ExperimentConfig::parse(LAKE).unwrap();
        assert_eq!(c.runs, 3);
        assert_eq!(c.budgets, vec![16, 64]);
        let labels: Vec<_> = c.variants.iter().map(|v| v.label.as_str()).collect();
        assert_eq!(labels, ["search.backup.p=1", "search.backup.p=2.2", "search.backup.p=max"]);
        assert_eq!(c.variants[2].search.backup, Backup::Power(f64::INFINITY));
        assert_eq!(c.variants[0].search.gamma, 0.95);
    }

    #[test]
    fn two_axes_form_a_product() {
        let text = "env.name = synthetic\nenv.k = 3\nenv.d = 1\nsearch.policy = e3w\nrun.budgets = 10\n\
                    sweep.search.regularizer = shannon, tsallis\nsweep.search.tau = 0.1, 1\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.variants.len(), 4);
        assert_eq!(c.variants[1].label, "search.regularizer=shannon;search.tau=1");
    }

    #[test]
    fn errors_carry_line_and_field() {
        let cases = [
            ("env.name = frozenlake\nrun.budgets = 10\nsearch.c = -1\n", 3, "search.c"),
            ("env.name = frozenlake\nrun.budgets = 20, 10\n", 2, "run.budgets"),
            ("env.name = frozenlake\nrun.budgets = 10\nbogus.key = 1\n", 3, "bogus.key"),
            ("env.name = lake\nrun.budgets = 10\n", 1, "env.name"),
            ("env.name = frozenlake\nrun.budgets = 10\nrun.count = 0\n", 3, "run.count"),
            ("env.name = frozenlake\nrun.budgets = 10\nrun.budgets = 11\n", 3, "run.budgets"),
            ("env.name = frozenlake\nrun.budgets = 10\nenv.k = 4\n", 3, "env.k"),
            ("env.name = frozenlake\nrun.budgets = 10\nnot a pair\n", 3, "not a pair"),
            ("env.name = synthetic\nenv.k = 2\nenv.d = 1\nrun.budgets = 10\nsearch.gamma = 0.9\n", 5, "search.gamma"),
            ("env.name = frozenlake\nrun.budgets = 10\nsweep.search.backup.p = 0.5\nsearch.backup = power\n", 3, "search.backup.p"),
        ];
        for (text, line, field) in cases {
            match ExperimentConfig::parse(text) {
                Err(Error::Config { line: l, field: f, .. }) => {
                    assert_eq!((l, f.as_str()), (line, field), "{text}");
                }
                other => panic!("expected config error for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn hash_ignores_output_path_and_tracks_seed() {
        let a = ExperimentConfig::parse(LAKE).unwrap();
        let b = ExperimentConfig::parse(&format!("{LAKE}output.path = x.csv\n")).unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.set_seed(9);
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn builds_search_configs() {
        let text = "env.name = rocksample\nsearch.c = range\nrun.budgets = 10\n";
        let c = ExperimentConfig::parse(text).unwrap();
        let sc = c.variants[0].search.build(10, 1, 7, (-10.0, 10.0)).unwrap();
        assert_eq!(sc.tree_policy, TreePolicy::Ucb1 { c: 20.0 });
        let text = "env.name = copy\nsearch.policy = e3w\nsearch.regularizer = relative\nrun.budgets = 10\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert!(c.variants[0].search.build(10, 1, 144, (0.0, 1.0)).is_ok());
    }
}
