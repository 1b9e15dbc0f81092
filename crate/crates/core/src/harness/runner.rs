//! Fans an experiment out over `(variant, budget, run)` cells and writes
//! the results.
//!
//! Every cell derives its own seeds from the seed base and its coordinates,
//! so the output does not depend on the worker count or on scheduling.
//! Environment randomness (true world, Copy band, tree instance) depends on
//! the run index only, so variants face the same problems.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{EnvSpec, ExperimentConfig, Variant};
use super::stats::summarize;
use crate::envs::{CopyEnv, GridLakeEnv, PocmanEnv, RocksampleEnv, SyntheticTree};
use crate::error::{Error, Result};
use crate::mcts::{search, Environment, Planner};
use crate::oracle::{exact_regularized_values, exact_values, regret_and_errors_with};
use crate::pomcp::{belief_update, pomcp_search, restart_belief, PomdpEnv};
use crate::seed::derive_seed;
use crate::SimRng;

/// Version of the column layout below.
pub const CSV_SCHEMA: u32 = 1;

pub const CSV_COLUMNS: [&str; 12] = [
    "config_hash",
    "variant",
    "env",
    "budget",
    "run",
    "seed",
    "return",
    "success",
    "eps_omega",
    "eps_uct",
    "regret",
    "steps",
];

pub const AGGREGATE_COLUMNS: [&str; 7] = ["variant", "budget", "metric", "n", "mean", "two_std", "std_err"];

const TAG_TREE: u64 = 0x7472_6565;
const TAG_WORLD: u64 = 0x77_6f72_6c64;
const TAG_BAND: u64 = 0x6261_6e64;

/// One row per `(variant, run, budget)`. Empty fields do not apply to the
/// environment or policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub config_hash: String,
    pub variant: String,
    pub env: String,
    pub budget: usize,
    pub run: usize,
    pub seed: u64,
    /// Discounted return of the episode (Copy and synthetic trees: see the
    /// README for their definitions).
    #[serde(rename = "return")]
    pub ret: f64,
    pub success: Option<u8>,
    pub eps_omega: Option<f64>,
    pub eps_uct: Option<f64>,
    pub regret: Option<f64>,
    pub steps: usize,
    #[serde(skip)]
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub variant: String,
    pub budget: usize,
    pub metric: &'static str,
    pub n: usize,
    pub mean: f64,
    pub two_std: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub records: Vec<ExperimentRecord>,
    pub aggregates: Vec<AggregateRow>,
}

impl Outcome {
    /// Values of one metric for a variant and budget, in run order.
    pub fn metric(&self, variant: &str, budget: usize, metric: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.variant == variant && r.budget == budget)
            .filter_map(|r| metric_value(r, metric))
            .collect()
    }
}

const METRICS: [&str; 6] = ["return", "success", "eps_omega", "eps_uct", "regret", "steps"];

fn metric_value(r: &ExperimentRecord, metric: &str) -> Option<f64> {
    match metric {
        "return" => Some(r.ret),
        "success" => r.success.map(f64::from),
        "eps_omega" => r.eps_omega,
        "eps_uct" => r.eps_uct,
        "regret" => r.regret,
        "steps" => Some(r.steps as f64),
        _ => None,
    }
}

/// Runs every cell on a pool of `workers` threads and aggregates per
/// variant and budget.
pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<Outcome> {
    let hash = config.hash();
    let trees = match &config.env {
        EnvSpec::Synthetic { k, d, sigma, trees } => (0..*trees)
            .map(|i| SyntheticTree::with_sigma(*k, *d, *sigma, derive_seed(config.seed, &[TAG_TREE, i as u64])))
            .collect::<Result<Vec<_>>>()?,
        _ => Vec::new(),
    };
    let mut cells = Vec::new();
    for (v, variant) in config.variants.iter().enumerate() {
        for &budget in &config.budgets {
            for run in 0..config.runs {
                cells.push((v, variant, budget, run));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))?;
    let records = pool.install(|| {
        cells
            .par_iter()
            .map(|&(v, variant, budget, run)| {
                let seed = derive_seed(config.seed, &[v as u64, budget as u64, run as u64]);
                let start = Instant::now();
                let mut record = run_cell(config, &trees, variant, budget, run, seed)?;
                record.config_hash = hash.clone();
                record.wall_ms = start.elapsed().as_secs_f64() * 1e3;
                Ok(record)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let aggregates = aggregate(config, &records);
    Ok(Outcome { records, aggregates })
}

fn aggregate(config: &ExperimentConfig, records: &[ExperimentRecord]) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for variant in &config.variants {
        for &budget in &config.budgets {
            let cell: Vec<&ExperimentRecord> = records
                .iter()
                .filter(|r| r.variant == variant.label && r.budget == budget)
                .collect();
            for metric in METRICS {
                let xs: Vec<f64> = cell.iter().filter_map(|r| metric_value(r, metric)).collect();
                if let Some(s) = summarize(&xs) {
                    rows.push(AggregateRow {
                        variant: variant.label.clone(),
                        budget,
                        metric,
                        n: s.n,
                        mean: s.mean,
                        two_std: s.two_std(),
                        std_err: s.std_err,
                    });
                }
            }
        }
    }
    rows
}

fn blank(variant: &Variant, env: &EnvSpec, budget: usize, run: usize, seed: u64) -> ExperimentRecord {
    ExperimentRecord {
        config_hash: String::new(),
        variant: variant.label.clone(),
        env: env.name().to_string(),
        budget,
        run,
        seed,
        ret: 0.0,
        success: None,
        eps_omega: None,
        eps_uct: None,
        regret: None,
        steps: 0,
        wall_ms: 0.0,
    }
}

fn run_cell(
    config: &ExperimentConfig,
    trees: &[SyntheticTree],
    variant: &Variant,
    budget: usize,
    run: usize,
    seed: u64,
) -> Result<ExperimentRecord> {
    let mut record = blank(variant, &config.env, budget, run, seed);
    let world_seed = derive_seed(config.seed, &[TAG_WORLD, run as u64]);
    let spec = &variant.search;
    match &config.env {
        EnvSpec::Synthetic { d, .. } => {
            let tree = &trees[run % trees.len()];
            let root = tree.root();
            let n_actions = tree.num_actions(&root);
            let sc = spec.build(budget, seed, n_actions, tree.reward_range())?;
            let result = search(tree, &root, &sc)?;
            let exact = exact_values(tree)?;
            let kind = spec.regularizer(n_actions)?;
            let regularized = match &kind {
                Some(kind) => exact_regularized_values(tree, kind)?,
                None => exact.clone(),
            };
            // undo the reward map: every root-to-leaf path has d rewards
            let (offset, scale) = result.reward_normalization;
            let root_value = scale * result.root_value + offset * *d as f64;
            let errs = regret_and_errors_with(&result, budget, &exact, &regularized, root_value)?;
            record.ret = exact.root_children()[result.recommended_action];
            record.success = Some((result.recommended_action == exact.best_action()) as u8);
            record.eps_omega = kind.is_some().then_some(errs.eps_omega);
            record.eps_uct = Some(errs.eps_uct);
            record.regret = Some(errs.regret);
            record.steps = 1;
        }
        EnvSpec::FrozenLake { max_steps } => {
            let env = GridLakeEnv::from_map(&crate::envs::lake::LAKE_MAP, *max_steps)?;
            let mut world = SimRng::seed_from_u64(world_seed);
            let mut state = env.initial_state();
            let mut discount = 1.0;
            loop {
                let sc = spec.build(budget, derive_seed(seed, &[record.steps as u64]), 4, env.reward_range())?;
                let action = search(&env, &state, &sc)?.recommended_action;
                let tr = env.step(&state, action, &mut world)?;
                record.ret += discount * tr.reward;
                discount *= spec.gamma;
                record.steps += 1;
                if tr.done {
                    record.success = Some(env.is_goal(tr.state.pos) as u8);
                    break;
                }
                state = tr.state;
            }
        }
        EnvSpec::Copy { actions, length, replan } => {
            let env = CopyEnv::with_length(actions / 4, *length, derive_seed(config.seed, &[TAG_BAND, run as u64]))?;
            let root = env.initial_state();
            if *replan {
                let mut world = SimRng::seed_from_u64(world_seed);
                let mut state = root;
                loop {
                    let sc = spec.build(budget, derive_seed(seed, &[record.steps as u64]), *actions, env.reward_range())?;
                    let action = search(&env, &state, &sc)?.recommended_action;
                    let tr = env.step(&state, action, &mut world)?;
                    record.ret += tr.reward;
                    record.steps += 1;
                    if tr.done {
                        break;
                    }
                    state = tr.state;
                }
            } else {
                let sc = spec.build(budget, seed, *actions, env.reward_range())?;
                let rule = sc.recommend_rule();
                let (_, tree) = Planner::new(&env, root, &sc)?.run(&env)?;
                let mut rng = SimRng::seed_from_u64(derive_seed(seed, &[TAG_WORLD]));
                record.ret = env.evaluate_tree(&tree, rule, &mut rng)?;
                record.steps = record.ret as usize;
            }
            record.success = Some((record.ret == *length as f64) as u8);
        }
        EnvSpec::Rocksample {
            n,
            rocks,
            layout_seed,
            rewards,
            sensor_distance,
            max_steps,
            particles,
        } => {
            let mut env = RocksampleEnv::new(*n, *rocks, *layout_seed)?;
            env.rewards = rewards.clone();
            env.sensor_distance = *sensor_distance;
            let ep = pomdp_episode(&env, variant, budget, seed, world_seed, *max_steps, *particles)?;
            record.ret = ep.ret;
            record.steps = ep.steps;
            record.success = Some(ep.done as u8);
        }
        EnvSpec::Pocman {
            food_prob,
            chase_prob,
            max_steps,
            particles,
        } => {
            let mut env = PocmanEnv::new();
            env.food_prob = *food_prob;
            env.chase_prob = *chase_prob;
            let ep = pomdp_episode(&env, variant, budget, seed, world_seed, *max_steps, *particles)?;
            record.ret = ep.ret;
            record.steps = ep.steps;
        }
    }
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Episode {
    pub ret: f64,
    pub steps: usize,
    /// The environment ended the episode before the step cap.
    pub done: bool,
}

/// Plays one POMDP episode, replanning from the particle belief at every
/// step.
pub fn pomdp_episode<E: PomdpEnv>(
    env: &E,
    variant: &Variant,
    budget: usize,
    seed: u64,
    world_seed: u64,
    max_steps: usize,
    particles: usize,
) -> Result<Episode> {
    let mut world = SimRng::seed_from_u64(world_seed);
    let mut filter_rng = SimRng::seed_from_u64(derive_seed(seed, &[TAG_WORLD]));
    let mut state = env.sample_initial(&mut world);
    let mut belief: Vec<E::State> = (0..particles).map(|_| env.sample_initial(&mut filter_rng)).collect();
    let mut history = Vec::new();
    let mut ep = Episode { ret: 0.0, steps: 0, done: false };
    let mut discount = 1.0;
    while ep.steps < max_steps {
        let sc = variant
            .search
            .build(budget, derive_seed(seed, &[ep.steps as u64]), env.num_actions(), env.reward_range())?;
        let action = pomcp_search(env, &belief, &sc)?.recommended_action;
        let step = env.step(&state, action, &mut world)?;
        ep.ret += discount * step.reward;
        discount *= variant.search.gamma;
        ep.steps += 1;
        if step.done {
            ep.done = true;
            break;
        }
        history.push((action, step.obs.clone()));
        belief = match belief_update(env, &belief, action, &step.obs, particles, &mut filter_rng) {
            Ok(b) => b,
            Err(Error::BeliefCollapse { .. }) => restart_belief(env, &history, particles, &mut filter_rng)?,
            Err(e) => return Err(e),
        };
        state = step.state;
    }
    Ok(ep)
}

/// Paths of the files written for one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputPaths {
    pub csv: PathBuf,
    pub aggregate: PathBuf,
    pub timing: PathBuf,
    pub meta: PathBuf,
}

impl OutputPaths {
    pub fn for_csv(csv: &Path) -> Self {
        let stem = csv.with_extension("");
        let sibling = |suffix: &str| {
            let mut s = stem.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        };
        OutputPaths {
            csv: csv.to_path_buf(),
            aggregate: sibling(".aggregate.csv"),
            timing: sibling(".timing.csv"),
            meta: sibling(".meta.json"),
        }
    }
}

#[derive(Serialize)]
struct Meta<'a> {
    name: &'a str,
    command: &'a str,
    config_hash: String,
    env: &'a str,
    seed: u64,
    runs: usize,
    budgets: &'a [usize],
    variants: Vec<&'a str>,
    rows: usize,
    columns: &'a [&'a str],
    versions: Versions,
}

#[derive(Serialize)]
struct Versions {
    mctslab: &'static str,
    csv_schema: u32,
}

fn create(path: &Path) -> Result<File> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| Error::Output { path: path.to_path_buf(), source })?;
    }
    File::create(path).map_err(|source| Error::Output { path: path.to_path_buf(), source })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(true)
        .from_writer(create(path)?))
}

/// Writes the raw rows, the aggregate block, per-cell wall times and the
/// metadata sidecar. Everything except the timing file is a pure function
/// of the config.
pub fn write_outputs(config: &ExperimentConfig, command: &str, outcome: &Outcome, csv_path: &Path) -> Result<OutputPaths> {
    let paths = OutputPaths::for_csv(csv_path);

    let mut w = csv_writer(&paths.csv)?;
    if outcome.records.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    for r in &outcome.records {
        w.serialize(r)?;
    }
    w.flush()?;

    let mut w = csv_writer(&paths.aggregate)?;
    if outcome.aggregates.is_empty() {
        w.write_record(AGGREGATE_COLUMNS)?;
    }
    for r in &outcome.aggregates {
        w.serialize(r)?;
    }
    w.flush()?;

    let mut w = csv_writer(&paths.timing)?;
    w.write_record(["variant", "budget", "run", "wall_ms"])?;
    for r in &outcome.records {
        w.write_record([r.variant.clone(), r.budget.to_string(), r.run.to_string(), format!("{:.3}", r.wall_ms)])?;
    }
    w.flush()?;

    let meta = Meta {
        name: &config.name,
        command,
        config_hash: config.hash(),
        env: config.env.name(),
        seed: config.seed,
        runs: config.runs,
        budgets: &config.budgets,
        variants: config.variants.iter().map(|v| v.label.as_str()).collect(),
        rows: outcome.records.len(),
        columns: &CSV_COLUMNS,
        versions: Versions {
            mctslab: env!("CARGO_PKG_VERSION"),
            csv_schema: CSV_SCHEMA,
        },
    };
    let mut f = create(&paths.meta)?;
    serde_json::to_writer_pretty(&mut f, &meta)?;
    f.write_all(b"\n").map_err(|source| Error::Output { path: paths.meta.clone(), source })?;
    Ok(paths)
}
