//! Acceptance criteria, one line of output each.
//!
//! `cargo test --test acceptance` runs them all; pass criterion numbers to
//! run a subset (`cargo test --test acceptance -- 5 11`).

use std::process::ExitCode;
use std::time::Instant;

use mctslab::envs::{GridLakeEnv, RocksampleEnv};
use mctslab::harness::stats::{bootstrap_diff_lower, ks_two_sample, mean, summarize};
use mctslab::harness::verify::{concentration_suite, kernels_suite, oracle_equivalence_suite, regularizers_suite, Report};
use mctslab::harness::{run_experiment, write_outputs, ExperimentConfig, Outcome};
use mctslab::mcts::{search, SearchConfig};
use mctslab::pomcp::{pomcp_search, FullyObservable, PomdpEnv};
use mctslab::seed::derive_seed;

const SEED: u64 = 20_240_601;
const BOOTSTRAP_RESAMPLES: usize = 10_000;

struct Verdict {
    passed: bool,
    summary: String,
}

fn verdict(passed: bool, summary: impl Into<String>) -> Verdict {
    Verdict { passed, summary: summary.into() }
}

fn from_report(report: &Report, keep: impl Fn(&str) -> bool) -> Verdict {
    let picked: Vec<_> = report.assertions.iter().filter(|a| keep(&a.name)).collect();
    let failed: Vec<String> = picked
        .iter()
        .filter(|a| !a.passed)
        .map(|a| format!("{} (observed {:.4e}, limit {:.4e}; {})", a.name, a.observed, a.limit, a.detail))
        .collect();
    if failed.is_empty() {
        verdict(true, format!("{} assertions hold", picked.len()))
    } else {
        verdict(false, failed.join(" | "))
    }
}

fn experiment(text: &str) -> Outcome {
    let config = ExperimentConfig::parse(text).expect("acceptance config parses");
    run_experiment(&config, workers()).expect("experiment runs")
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn criterion_1() -> Verdict {
    from_report(&kernels_suite(SEED, 1000), |_| true)
}

fn criterion_2() -> Verdict {
    let mut failed = Vec::new();
    let mut count = 0;
    for tau in [0.1f64, 0.5, 1.0] {
        let r = regularizers_suite(derive_seed(SEED, &[tau.to_bits()]), tau);
        let v = from_report(&r, |_| true);
        count += r.assertions.len();
        if !v.passed {
            failed.push(format!("tau={tau}: {}", v.summary));
        }
    }
    if failed.is_empty() {
        verdict(true, format!("{count} gradient, optimality, boundedness and alpha=2 assertions hold at tau 0.1, 0.5, 1"))
    } else {
        verdict(false, failed.join(" | "))
    }
}

fn criterion_3_and_5() -> (Verdict, Verdict) {
    let r = oracle_equivalence_suite(SEED, 100_000, 25);
    (
        from_report(&r, |n| n.starts_with("entropic_mean")),
        from_report(&r, |n| n.starts_with("uct_converges")),
    )
}

fn criterion_4() -> Verdict {
    let r = concentration_suite(SEED, 1_000_000);
    let worst = r
        .assertions
        .iter()
        .map(|a| a.observed)
        .fold(0.0, f64::max);
    let v = from_report(&r, |_| true);
    verdict(v.passed, format!("max (99% lower tail) / bound = {worst:.3}; {}", v.summary))
}

fn criterion_6() -> Verdict {
    let out = experiment(
        "name = accept6\nenv.name = frozenlake\nsearch.backup = power\nsweep.search.backup.p = 1, 2.2\n\
         run.budgets = 16384\nrun.count = 100\nrun.seed = 6\n",
    );
    let uct = out.metric("search.backup.p=1", 16384, "success");
    let power = out.metric("search.backup.p=2.2", 16384, "success");
    let lower = bootstrap_diff_lower(&power, &uct, BOOTSTRAP_RESAMPLES, 0.95, SEED);
    verdict(
        lower > 0.0,
        format!(
            "success p=2.2 {:.2} vs UCT {:.2}; one-sided 95% lower bound of difference {lower:.3} (need > 0)",
            mean(&power),
            mean(&uct)
        ),
    )
}

fn criterion_7() -> Verdict {
    let out = experiment(
        "name = accept7\nenv.name = copy\nenv.actions = 144\nsearch.backup = power\nsweep.search.backup.p = 1, 3\n\
         run.budgets = 8192\nrun.count = 20\nrun.seed = 7\n",
    );
    let uct = out.metric("search.backup.p=1", 8192, "return");
    let power = out.metric("search.backup.p=3", 8192, "return");
    let (pm, um) = (mean(&power), mean(&uct));
    let lower = bootstrap_diff_lower(&power, &uct, BOOTSTRAP_RESAMPLES, 0.95, SEED);
    verdict(
        pm >= 38.0 && pm >= um,
        format!("mean return p=3 {pm:.2} vs UCT {um:.2} (need p=3 >= 38 and >= UCT); 95% lower bound of difference {lower:.2}"),
    )
}

fn criterion_8() -> Verdict {
    let budget = 10_000;
    let out = experiment(&format!(
        "name = accept8\nenv.name = synthetic\nenv.k = 100\nenv.d = 1\nsearch.policy = e3w\nsearch.tau = 0.1\n\
         search.epsilon = 0.1\nsweep.search.regularizer = shannon, relative, tsallis\nrun.budgets = {budget}\n\
         run.count = 25\nrun.seed = 8\n"
    ));
    let get = |name: &str, metric: &str| -> Vec<f64> {
        let v = out.metric(&format!("search.regularizer={name}"), budget, metric);
        if metric == "eps_omega" {
            v.iter().map(|x| x.abs()).collect()
        } else {
            v
        }
    };
    let (ments, rents, tents) = (get("shannon", "eps_omega"), get("relative", "eps_omega"), get("tsallis", "eps_omega"));
    let (ments_regret, tents_regret) = (get("shannon", "regret"), get("tsallis", "regret"));
    let error_ok = mean(&tents) < mean(&ments) && mean(&tents) < mean(&rents);
    let regret_ok = mean(&tents_regret) <= mean(&ments_regret);
    let per_run_error = (0..tents.len()).filter(|&i| tents[i] < ments[i] && tents[i] < rents[i]).count();
    let per_run_regret = (0..tents.len()).filter(|&i| tents_regret[i] <= ments_regret[i]).count();
    let soft = if per_run_error < 20 || per_run_regret < 20 { " [soft: per-run ordering below 20/25]" } else { "" };
    verdict(
        error_ok && regret_ok,
        format!(
            "mean |eps_omega| TENTS {:.4}, MENTS {:.4}, RENTS {:.4}; mean regret TENTS {:.1} vs MENTS {:.1}; \
             per run: error {per_run_error}/25, regret {per_run_regret}/25{soft}",
            mean(&tents),
            mean(&ments),
            mean(&rents),
            mean(&tents_regret),
            mean(&ments_regret)
        ),
    )
}

fn criterion_9() -> Verdict {
    let budget = 10_000;
    let alphas = [1, 2, 4, 8, 16];
    let out = experiment(&format!(
        "name = accept9\nenv.name = synthetic\nenv.k = 16\nenv.d = 2\nsearch.policy = e3w\nsearch.regularizer = alpha\n\
         search.tau = 0.1\nsearch.epsilon = 0.1\nsweep.search.alpha = 1, 2, 4, 8, 16\nrun.budgets = {budget}\n\
         run.count = 25\nrun.seed = 9\n"
    ));
    let stats: Vec<_> = alphas
        .iter()
        .map(|a| {
            let errs: Vec<f64> = out.metric(&format!("search.alpha={a}"), budget, "eps_omega").iter().map(|x| x.abs()).collect();
            summarize(&errs).expect("runs")
        })
        .collect();
    let ok = stats
        .windows(2)
        .all(|w| w[1].mean <= w[0].mean + w[0].std_err.max(w[1].std_err));
    let listing: Vec<String> = alphas
        .iter()
        .zip(&stats)
        .map(|(a, s)| format!("a={a}: {:.4}+-{:.4}", s.mean, s.std_err))
        .collect();
    verdict(ok, format!("mean |eps_omega| (+- s.e.) {}", listing.join(", ")))
}

fn criterion_10() -> Verdict {
    let env = GridLakeEnv::new();
    let root = env.initial_state();
    let wrapped = FullyObservable { env: env.clone(), root };
    let belief = vec![root; 100];
    let (mut uct, mut pomcp) = (vec![Vec::new(); 4], vec![Vec::new(); 4]);
    for run in 0..50u64 {
        let config = SearchConfig::uct(1000, std::f64::consts::SQRT_2).with_gamma(0.95).with_seed(derive_seed(SEED, &[10, run]));
        let a = search(&env, &root, &config).expect("uct");
        let b = pomcp_search(&wrapped, &belief, &config).expect("pomcp");
        for act in 0..4 {
            uct[act].push(a.visit_histogram[act] as f64 / 1000.0);
            pomcp[act].push(b.visit_histogram[act] as f64 / 1000.0);
        }
    }
    let min_p = (0..4).map(|a| ks_two_sample(&uct[a], &pomcp[a]).1).fold(1.0, f64::min);

    let out = experiment(
        "name = accept10\nenv.name = rocksample\nenv.n = 4\nenv.rocks = 2\nsearch.c = range\n\
         run.budgets = 4096\nrun.count = 100\nrun.seed = 10\n",
    );
    let returns = out.metric("base", 4096, "return");
    let s = summarize(&returns).expect("runs");
    let rock_env = RocksampleEnv::new(4, 2, 0).expect("instance");
    verdict(
        min_p > 0.01 && s.mean > 0.0,
        format!(
            "KS over 50 runs, smallest p across root actions {min_p:.3} (need > 0.01); rocksample(4,2) mean discounted return \
             {:.2} +- {:.2} (2 s.d.) over 100 runs, reward range {:?}",
            s.mean,
            s.two_std(),
            rock_env.reward_range()
        ),
    )
}

fn criterion_11() -> Verdict {
    let text = "name = accept11\nenv.name = frozenlake\nenv.max_steps = 30\nsweep.search.policy = ucb1, e3w\n\
                search.regularizer = tsallis\nrun.budgets = 64, 256\nrun.count = 4\nrun.seed = 11\n";
    let config = ExperimentConfig::parse(text).expect("parses");
    let dir = tempfile::tempdir().expect("tempdir");
    let mut files = Vec::new();
    for (i, workers) in [1, 2, 1].into_iter().enumerate() {
        let outcome = run_experiment(&config, workers).expect("runs");
        let paths = write_outputs(&config, "sweep", &outcome, &dir.path().join(format!("{i}/out.csv"))).expect("writes");
        files.push((std::fs::read(&paths.csv).expect("csv"), std::fs::read(&paths.aggregate).expect("aggregate")));
    }
    let same = files.windows(2).all(|w| w[0] == w[1]);
    verdict(same, format!("3 reruns (1, 2, 1 workers), {} CSV bytes each, identical: {same}", files[0].0.len()))
}

type Row = (u32, Verdict);
type Criterion = (u32, &'static str, fn() -> Verdict);

fn record(rows: &mut Vec<Row>, n: u32, title: &str, v: Verdict, secs: f64) {
    println!(
        "criterion {n:>2} {}: {title}: {} ({secs:.0}s)",
        if v.passed { "PASS" } else { "FAIL" },
        v.summary
    );
    rows.push((n, v));
}

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |n: u32| wanted.is_empty() || wanted.contains(&n);
    let mut rows = Vec::new();
    let single: [Criterion; 2] = [(1, "kernel properties", criterion_1), (2, "conjugate correctness", criterion_2)];
    for (n, title, f) in single {
        if want(n) {
            let t = Instant::now();
            let v = f();
            record(&mut rows, n, title, v, t.elapsed().as_secs_f64());
        }
    }
    if want(3) || want(5) {
        let t = Instant::now();
        let (three, five) = criterion_3_and_5();
        let secs = t.elapsed().as_secs_f64();
        if want(3) {
            record(&mut rows, 3, "entropic-mean equivalence", three, secs);
        }
        if want(5) {
            record(&mut rows, 5, "oracle equivalence", five, secs);
        }
    }
    let rest: [Criterion; 7] = [
        (4, "concentration", criterion_4),
        (6, "frozenlake ordering", criterion_6),
        (7, "copy 144 actions", criterion_7),
        (8, "synthetic regularizer trends", criterion_8),
        (9, "alpha sweep", criterion_9),
        (10, "POMDP reduction", criterion_10),
        (11, "determinism", criterion_11),
    ];
    for (n, title, f) in rest {
        if want(n) {
            let t = Instant::now();
            let v = f();
            record(&mut rows, n, title, v, t.elapsed().as_secs_f64());
        }
    }

    let failed: Vec<u32> = rows.iter().filter(|r| !r.1.passed).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria pass{}",
        rows.len() - failed.len(),
        rows.len(),
        if failed.is_empty() { String::new() } else { format!("; failing: {failed:?}") }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
