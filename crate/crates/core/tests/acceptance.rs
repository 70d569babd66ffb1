//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line.
//!
//! Thresholds are fixed below and never adjusted to fit a run. A criterion
//! listed in `KNOWN_DEVIATIONS` still prints FAIL with its measured values,
//! but does not fail the process; one that starts passing prints PASS.

use std::process::ExitCode;
use std::time::Instant;

use lfi_lab::allocation::{
    asymptotic_ess, delta_method_variance_real, exact_plugin_mse, optimal_proportions, simulate_plan, AllocationKind,
    AllocationPlan,
};
use lfi_lab::bench::{run_experiment, Experiment, ExperimentConfig, ExperimentOutput, StrategySummary};
use lfi_lab::estimators::mle_expectation;
use lfi_lab::problems::{DiscreteProblem, ModelSelectionProblem, TargetFunction};
use lfi_lab::rng::seeded;
use lfi_lab::smc::{brute_force_posterior, ellipsoid_true_posterior, EllipsoidProblem};
use rand::Rng;

/// Master seed of every Monte Carlo check, fixed before any run.
const SEED: u64 = 7;

/// Criteria whose measured values miss their band for reasons recorded in
/// the README.
const KNOWN_DEVIATIONS: &[(u32, &str)] = &[
    (3, "quadratic KL approximation is off by ~9% at n1/N = 0.9, where theta_2 gets ~5 acceptances"),
    (8, "exact optimal densities put 0.876 / 0.414 of their mass on model 1 and give an MSE ratio near 3"),
];

struct Check {
    ok: bool,
    detail: String,
}

impl Check {
    fn new() -> Self {
        Check { ok: true, detail: String::new() }
    }

    fn require(&mut self, ok: bool, what: String) {
        if !self.detail.is_empty() {
            self.detail.push_str("; ");
        }
        self.detail.push_str(&what);
        if !ok {
            self.detail.push_str(" [miss]");
        }
        self.ok &= ok;
    }

    fn within(&mut self, label: &str, value: f64, target: f64, tol: f64) {
        self.require((value - target).abs() <= tol, format!("{label} {value:.4} vs {target} +/- {tol}"));
    }

    fn between(&mut self, label: &str, value: f64, lo: f64, hi: f64) {
        self.require((lo..=hi).contains(&value), format!("{label} {value:.4} in [{lo}, {hi}]"));
    }
}

fn run(experiment: Experiment, n: u64, trials: usize, strategies: &[&str]) -> ExperimentOutput {
    let config = ExperimentConfig::new(experiment, vec![n], trials, SEED).with_strategies(strategies.iter().copied());
    run_experiment(&config).expect("experiment runs")
}

fn summary<'a>(out: &'a ExperimentOutput, n: u64, strategy: &str) -> &'a StrategySummary {
    out.summary.get(n, strategy).expect("strategy summarized")
}

fn mean_se(out: &ExperimentOutput, n: u64, strategy: &str) -> f64 {
    summary(out, n, strategy).squared_error.as_ref().expect("non-degenerate trials").mean
}

fn mean_extra(out: &ExperimentOutput, n: u64, strategy: &str, key: &str) -> f64 {
    summary(out, n, strategy).extra.get(key).unwrap_or_else(|| panic!("{strategy} has no {key}")).mean
}

fn mean_ess(out: &ExperimentOutput, n: u64, strategy: &str) -> f64 {
    summary(out, n, strategy).ess.as_ref().expect("ess recorded").mean
}

const TABLE3: [(&str, f64); 4] = [("ibs", 1.11), ("ess-opt", 0.62), ("unnorm-opt", 0.68), ("mse-opt", 1.23)];

/// Efficiency relative to the prior-proportion plan, which is what the
/// tabulated rejection row evaluates to.
fn criterion_1() -> Check {
    let mut c = Check::new();
    let p = DiscreteProblem::two_point();
    let f = TargetFunction::indicator_index(0);
    let var = |kind: &AllocationKind| {
        let props = optimal_proportions(&p, kind).unwrap();
        delta_method_variance_real(&p, &f, &props, 1000.0).unwrap()
    };
    let base = var(&AllocationKind::Prior);
    for (token, want) in TABLE3 {
        let kind = AllocationKind::from_token(token, Some(f.clone())).unwrap();
        c.within(&format!("closed {token}"), base / var(&kind), want, 0.01);
    }
    let mut tokens: Vec<&str> = TABLE3.iter().map(|t| t.0).collect();
    tokens.push("prior");
    let out = run(Experiment::TwoParam, 1000, 10_000, &tokens);
    let base = mean_se(&out, 1000, "prior");
    for (token, want) in TABLE3 {
        c.within(&format!("mc {token}"), base / mean_se(&out, 1000, token), want, 0.05);
    }
    c
}

const FRACTIONS: [&str; 9] =
    ["frac:0.1", "frac:0.2", "frac:0.3", "frac:0.4", "frac:0.5", "frac:0.6", "frac:0.7", "frac:0.8", "frac:0.9"];

/// Criteria 2 and 3 share one sweep.
fn fraction_sweep() -> ExperimentOutput {
    run(Experiment::TwoParam, 1000, 10_000, &FRACTIONS)
}

fn criterion_2(out: &ExperimentOutput) -> Check {
    let mut c = Check::new();
    let p = DiscreteProblem::two_point();
    let f = TargetFunction::indicator_index(0);
    for (i, token) in FRACTIONS.iter().enumerate() {
        let x = (i + 1) as f64 / 10.0;
        let v = delta_method_variance_real(&p, &f, &[x, 1.0 - x], 1000.0).unwrap();
        let rel = mean_se(out, 1000, token) / v - 1.0;
        c.require(rel.abs() <= 0.10, format!("x={x:.1} rel {rel:+.3}"));
    }
    c
}

fn criterion_3(out: &ExperimentOutput) -> Check {
    let mut c = Check::new();
    for (i, token) in FRACTIONS.iter().enumerate() {
        let x = (i + 1) as f64 / 10.0;
        let rel = mean_extra(out, 1000, token, "kl_rescaled") / mean_se(out, 1000, token) - 1.0;
        c.require(rel.abs() <= 0.05, format!("x={x:.1} rel {rel:+.3}"));
    }
    c
}

fn criterion_4() -> Check {
    let mut c = Check::new();
    let p = DiscreteProblem::two_point();
    let ess = |kind: AllocationKind| asymptotic_ess(&p, &optimal_proportions(&p, &kind).unwrap(), 1000.0);
    c.within("closed", ess(AllocationKind::EssOptimal) / ess(AllocationKind::Prior), 1.18, 0.005);
    let out = run(Experiment::TwoParam, 1000, 10_000, &["ess-opt", "rejection"]);
    let ratio = mean_ess(&out, 1000, "ess-opt") / mean_ess(&out, 1000, "rejection");
    c.within("empirical", ratio, 1.18, 0.02);
    c
}

fn criterion_5() -> Check {
    let mut c = Check::new();
    let p = DiscreteProblem::two_point();
    let f = TargetFunction::indicator_index(0);
    let exact = exact_plugin_mse(&p, &f, &[4, 4]).unwrap().mse;
    let truth = p.posterior_expectation(&f).unwrap();
    let plan = AllocationPlan::new(vec![4, 4]);
    let mut rng = seeded(SEED);
    let (mut m, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for _ in 0..1_000_000 {
        let counts = simulate_plan(&p, &plan, &mut rng).unwrap();
        if let Ok(est) = mle_expectation(&counts, &p, &f) {
            let se = (est - truth).powi(2);
            m += 1.0;
            s1 += se;
            s2 += se * se;
        }
    }
    let mean = s1 / m;
    let sem = ((s2 / m - mean * mean) / (m - 1.0)).sqrt();
    c.require((mean - exact).abs() <= 3.0 * sem, format!("mc {mean:.5} vs exact {exact:.5}, 3 se = {:.5}", 3.0 * sem));
    c
}

/// Minimum of the delta-method variance over the simplex grid with step
/// 1/100, skipping allocations that leave a point unsimulated.
fn grid_minimum(p: &DiscreteProblem, f: &TargetFunction<lfi_lab::problems::Atom>) -> f64 {
    fn walk(p: &DiscreteProblem, f: &TargetFunction<lfi_lab::problems::Atom>, left: u32, prefix: &mut Vec<f64>, best: &mut f64) {
        if prefix.len() + 1 == p.k() {
            if left == 0 {
                return;
            }
            prefix.push(left as f64 / 100.0);
            *best = best.min(delta_method_variance_real(p, f, prefix, 1.0).unwrap());
            prefix.pop();
            return;
        }
        for i in 1..left {
            prefix.push(i as f64 / 100.0);
            walk(p, f, left - i, prefix, best);
            prefix.pop();
        }
    }
    let mut best = f64::INFINITY;
    walk(p, f, 100, &mut Vec::new(), &mut best);
    best
}

fn criterion_6() -> Check {
    let mut c = Check::new();
    let mut rng = seeded(SEED);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..50 {
        let k = rng.random_range(2..=4usize);
        let prior: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let z: f64 = prior.iter().sum();
        let prior = prior.iter().map(|x| x / z).collect();
        let lik = (0..k).map(|_| rng.random_range(0.01..0.99)).collect();
        let values = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let p = DiscreteProblem::new(values, prior, lik).unwrap();
        let f = TargetFunction::value();
        let opt = optimal_proportions(&p, &AllocationKind::MseOptimal(f.clone())).unwrap();
        let closed = delta_method_variance_real(&p, &f, &opt, 1.0).unwrap();
        let gain = 1.0 - grid_minimum(&p, &f) / closed;
        worst = worst.max(gain);
    }
    c.require(worst <= 1e-3, format!("largest grid improvement {:.2e} <= 1e-3", worst));
    c
}

fn criterion_7() -> Check {
    let mut c = Check::new();
    let out = run(Experiment::Continuous, 3200, 1000, &["ess-opt", "targeted"]);
    c.between("mse ratio", mean_se(&out, 3200, "ess-opt") / mean_se(&out, 3200, "targeted"), 1.5, 3.0);
    let (e, t) = (mean_ess(&out, 3200, "ess-opt"), mean_ess(&out, 3200, "targeted"));
    c.require(t < e, format!("ess targeted {t:.1} < ess-opt {e:.1}"));
    c
}

fn criterion_8() -> Check {
    let mut c = Check::new();
    let p = ModelSelectionProblem::two_model();
    c.within("p(M1|x*)", p.posterior_model_probabilities().unwrap()[0], 0.9089, 0.0005);
    let out = run(Experiment::ModelSelection, 3200, 1000, &["ess-opt", "targeted"]);
    c.between("mse ratio", mean_se(&out, 3200, "ess-opt") / mean_se(&out, 3200, "targeted"), 3.5, 7.0);
    let masses = &out.summary.oracle["n=3200"]["model1_mass"];
    c.within("ess-opt mass", masses["ess-opt"].as_f64().unwrap(), 0.93, 0.02);
    c.within("targeted mass", masses["targeted"].as_f64().unwrap(), 0.58, 0.02);
    c
}

fn criterion_9() -> Check {
    let mut c = Check::new();
    let tokens = Experiment::Kde.default_strategies();
    let tokens: Vec<&str> = tokens.iter().map(String::as_str).collect();
    let out = run(Experiment::Kde, 1000, 500, &tokens);
    let strat = mean_se(&out, 1000, "stratified");
    for t in tokens.iter().filter(|t| **t != "stratified") {
        let m = mean_se(&out, 1000, t);
        c.require(strat < m, format!("stratified {strat:.2e} < {t} {m:.2e}"));
    }
    let (kde, wavg) = (mean_extra(&out, 1000, "prior", "kde_squared_error"), mean_se(&out, 1000, "prior"));
    c.require(kde < wavg, format!("prior kde {kde:.2e} < weighted {wavg:.2e}"));
    c
}

fn criterion_10() -> Check {
    let mut c = Check::new();
    let n = 1 << 14;
    let out = run(Experiment::Adaptive, n, 500, &["adaptive:16", "optimal"]);
    let adaptive = mean_se(&out, n, "adaptive:16");
    c.between("adaptive / optimal mse", adaptive / mean_se(&out, n, "optimal"), 0.0, 1.3);
    let rel = mean_extra(&out, n, "adaptive:16", "variance_estimate") / adaptive - 1.0;
    c.require(rel.abs() <= 0.3, format!("variance self-estimate rel {rel:+.3}"));
    c
}

fn criterion_11() -> Check {
    let mut c = Check::new();
    let t = ellipsoid_true_posterior();
    let bf = brute_force_posterior(&EllipsoidProblem::default(), 10_000_000, SEED).unwrap();
    for i in 0..2 {
        let z = (bf.mean[i] - t.mean[i]) / bf.mean_se[i];
        c.require(z.abs() <= 3.0, format!("mean[{i}] z {z:+.2}"));
        for j in i..2 {
            let z = (bf.covariance[i][j] - t.covariance[i][j]) / bf.covariance_se[i][j];
            c.require(z.abs() <= 3.0, format!("cov[{i}{j}] z {z:+.2}"));
        }
    }
    let out = run(Experiment::Smc, 34_000, 100, &["rejection", "slow-mvn"]);
    let n = 34_000;
    let (all, last) = (mean_extra(&out, n, "slow-mvn", "all_rounds_ess"), mean_ess(&out, n, "slow-mvn"));
    c.require(all > last, format!("all-rounds ess {all:.0} > final {last:.0}"));
    c.between("mean-mse gain", mean_se(&out, n, "rejection") / mean_se(&out, n, "slow-mvn"), 20.0, 80.0);
    let rej = mean_extra(&out, n, "rejection", "cov_squared_error");
    let smc2 = mean_extra(&out, n, "slow-mvn", "cov_squared_error@eps=2");
    c.require(rej < smc2, format!("cov mse rejection@1 {rej:.3} < smc@2 {smc2:.3}"));
    c
}

fn main() -> ExitCode {
    let mut unexpected = Vec::new();
    let mut report = |id: u32, name: &str, check: &dyn Fn() -> Check| {
        let start = Instant::now();
        let c = check();
        let secs = start.elapsed().as_secs_f64();
        let known = KNOWN_DEVIATIONS.iter().find(|d| d.0 == id);
        let status = if c.ok { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {name:<28} {status} ({secs:.1}s) {}", c.detail);
        if !c.ok {
            match known {
                Some((_, why)) => println!("             known deviation: {why}"),
                None => unexpected.push(id),
            }
        }
    };
    report(1, "allocation efficiencies", &criterion_1);
    let sweep = fraction_sweep();
    report(2, "delta-method variance", &|| criterion_2(&sweep));
    report(3, "rescaled KL vs MSE", &|| criterion_3(&sweep));
    report(4, "ESS factor", &criterion_4);
    report(5, "enumerated MSE oracle", &criterion_5);
    report(6, "closed-form optimality", &criterion_6);
    report(7, "continuous targeting", &criterion_7);
    report(8, "model selection", &criterion_8);
    report(9, "stratified dominance", &criterion_9);
    report(10, "adaptive allocation", &criterion_10);
    report(11, "ABC-SMC", &criterion_11);
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
