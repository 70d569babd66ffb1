use serde_json::json;

use super::{unknown_strategy, Experiment, Outcome, TrialRunner};
use crate::allocation::{
    adaptive_allocate, asymptotic_ess, delta_method_variance_real, estimate_variance, integerize_with_floor,
    optimal_proportions, simulate_plan, AdaptiveConfig, AdaptiveRule, AllocationKind,
};
use crate::error::{LfiError, Result};
use crate::estimators::{mle_expectation, mle_posterior, weighted_expectation, CountTable};
use crate::problems::{Atom, DiscreteProblem, TargetFunction};
use crate::rng::LabRng;
use crate::samplers::rejection_sampling;
use crate::scores::{kl_divergence, phi_quadratic_approx, score_battery_discrete, two_point_kl_rescale};

/// Importance-weighted ESS of a fixed allocation's accepted simulations:
/// each acceptance at point `i` carries weight `π_i / n_i`.
pub(crate) fn plan_ess(counts: &CountTable, prior: &[f64]) -> Option<f64> {
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for ((&n, &s), &pi) in counts.n().iter().zip(counts.n_star()).zip(prior) {
        if s > 0 {
            let w = pi / n as f64;
            s1 += w * s as f64;
            s2 += w * w * s as f64;
        }
    }
    (s2 > 0.0).then(|| s1 * s1 / s2)
}

fn counts_csv(problem: &DiscreteProblem, counts: &CountTable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["theta", "n", "n_star"])?;
    for (i, (&n, &s)) in counts.n().iter().zip(counts.n_star()).enumerate() {
        w.write_record(&[problem.values()[i].to_string(), n.to_string(), s.to_string()])?;
    }
    w.into_inner().map_err(|e| LfiError::InvalidInput(e.to_string()))
}

/// Runs a fixed allocation and scores the plug-in estimate of `f`.
fn plan_outcome(
    problem: &DiscreteProblem,
    f: &TargetFunction<Atom>,
    truth: f64,
    proportions: &[f64],
    n: u64,
    floor: u64,
    rng: &mut LabRng,
    dump: bool,
) -> Result<(Outcome, CountTable)> {
    let plan = integerize_with_floor(proportions, n, floor)?;
    let counts = simulate_plan(problem, &plan, rng)?;
    let mut out = Outcome::scored(mle_expectation(&counts, problem, f).ok(), truth);
    out.ess = plan_ess(&counts, problem.prior());
    out.acceptance_rate = Some(counts.total_accepted() as f64 / counts.total() as f64);
    if let (Ok(q_hat), Ok(q)) = (mle_posterior(&counts, problem), problem.exact_posterior()) {
        out.put("kl", kl_divergence(&q_hat, &q)?);
        out.put("kl_quadratic", phi_quadratic_approx(&q_hat, &q, 1.0)?);
    }
    if dump {
        out.particles = Some(counts_csv(problem, &counts)?);
    }
    Ok((out, counts))
}

enum TwoParamStrategy {
    Plan(Vec<f64>),
    /// Parameters drawn from the prior, as in the textbook algorithm.
    Rejection,
}

pub(crate) struct TwoParam {
    problem: DiscreteProblem,
    f: TargetFunction<Atom>,
    truth: f64,
    n: u64,
    strategies: Vec<TwoParamStrategy>,
}

impl TwoParam {
    pub(crate) fn new(n: u64, tokens: &[String]) -> Result<Self> {
        let problem = DiscreteProblem::two_point();
        let f = TargetFunction::indicator_index(0);
        let strategies = tokens
            .iter()
            .map(|t| {
                if t == "rejection" {
                    return Ok(TwoParamStrategy::Rejection);
                }
                if let Some(x) = t.strip_prefix("frac:") {
                    let x: f64 = x.parse().map_err(|_| unknown_strategy(Experiment::TwoParam, t))?;
                    if !(0.0..=1.0).contains(&x) {
                        return Err(LfiError::InvalidInput(format!("fraction {x} is outside [0, 1]")));
                    }
                    return Ok(TwoParamStrategy::Plan(vec![x, 1.0 - x]));
                }
                let kind = AllocationKind::from_token(t, Some(f.clone()))?;
                Ok(TwoParamStrategy::Plan(optimal_proportions(&problem, &kind)?))
            })
            .collect::<Result<_>>()?;
        Ok(TwoParam { truth: problem.posterior_expectation(&f)?, problem, f, n, strategies })
    }
}

impl TrialRunner for TwoParam {
    fn trial(&self, strategy: usize, rng: &mut LabRng, dump: bool) -> Result<Outcome> {
        let q1 = self.truth;
        let mut out = match &self.strategies[strategy] {
            TwoParamStrategy::Plan(props) => {
                plan_outcome(&self.problem, &self.f, self.truth, props, self.n, 0, rng, dump)?.0
            }
            TwoParamStrategy::Rejection => {
                let parts = rejection_sampling(&self.problem, self.n as usize, rng)?;
                let report = score_battery_discrete(&parts, &self.problem, &self.f, self.truth);
                let mut out = Outcome {
                    estimate: weighted_expectation(&parts, &self.f).ok(),
                    squared_error: report.mse,
                    ess: report.ess,
                    acceptance_rate: Some(report.acceptance_rate),
                    ..Outcome::default()
                };
                if let (Some(kl), Some(quad)) = (report.kl, report.kl_quadratic) {
                    out.put("kl", kl);
                    out.put("kl_quadratic", quad);
                }
                if dump {
                    let mut buf = Vec::new();
                    parts.write_csv(&mut buf)?;
                    out.particles = Some(buf);
                }
                out
            }
        };
        if let Some(kl) = out.extra.get("kl").map(|s| s.0) {
            out.put("kl_rescaled", two_point_kl_rescale(q1) * kl);
        }
        Ok(out)
    }
}

/// Exact values for the two-point problem: posterior, allocations, and the
/// asymptotic variance and ESS of each allocation relative to the prior
/// allocation.
pub(crate) fn two_param_oracle(n: u64) -> Result<serde_json::Value> {
    let p = DiscreteProblem::two_point();
    let f = TargetFunction::indicator_index(0);
    let nf = n as f64;
    let prior = optimal_proportions(&p, &AllocationKind::Prior)?;
    let v_prior = delta_method_variance_real(&p, &f, &prior, nf)?;
    let ess_prior = asymptotic_ess(&p, &prior, nf);
    let mut kinds = serde_json::Map::new();
    for t in AllocationKind::TOKENS {
        let props = optimal_proportions(&p, &AllocationKind::from_token(t, Some(f.clone()))?)?;
        let v = delta_method_variance_real(&p, &f, &props, nf)?;
        let ess = asymptotic_ess(&p, &props, nf);
        kinds.insert(
            t.to_string(),
            json!({
                "n1_fraction": props[0],
                "variance": v,
                "efficiency_vs_prior": v_prior / v,
                "asymptotic_ess": ess,
                "ess_ratio_vs_prior": ess / ess_prior,
            }),
        );
    }
    Ok(json!({
        "evidence": p.evidence(),
        "posterior": p.exact_posterior()?,
        "truth": p.posterior_expectation(&f)?,
        "allocations": kinds,
    }))
}

/// Targets of the discrete-Gaussian experiment.
fn gaussian_targets() -> [(&'static str, TargetFunction<Atom>); 3] {
    [
        ("mean", TargetFunction::value()),
        ("second-moment", TargetFunction::of_value("theta^2", |t| t * t)),
        ("ci95", TargetFunction::of_value("1(|theta|<2)", |t| if t.abs() < 2.0 { 1.0 } else { 0.0 })),
    ]
}

fn gaussian_problem() -> DiscreteProblem {
    DiscreteProblem::gaussian_grid(101, -5.0, 5.0).expect("valid preset")
}

pub(crate) struct DiscreteGaussian {
    problem: DiscreteProblem,
    targets: Vec<(&'static str, TargetFunction<Atom>, f64)>,
    n: u64,
    proportions: Vec<Vec<f64>>,
}

impl DiscreteGaussian {
    pub(crate) fn new(n: u64, tokens: &[String]) -> Result<Self> {
        let problem = gaussian_problem();
        let targets: Vec<_> = gaussian_targets()
            .into_iter()
            .map(|(name, f)| problem.posterior_expectation(&f).map(|t| (name, f, t)))
            .collect::<Result<_>>()?;
        if n < problem.k() as u64 {
            return Err(LfiError::InfeasibleAllocation { needed: problem.k(), budget: n });
        }
        let proportions = tokens
            .iter()
            .map(|t| {
                let (head, target) = t.split_once(':').unwrap_or((t.as_str(), "mean"));
                let f = if head == "mse-opt" {
                    let (_, f, _) = targets.iter().find(|(name, _, _)| *name == target).ok_or_else(|| unknown_strategy(Experiment::DiscreteGaussian, t))?;
                    Some(f.clone())
                } else if t.contains(':') {
                    return Err(unknown_strategy(Experiment::DiscreteGaussian, t));
                } else {
                    None
                };
                optimal_proportions(&problem, &AllocationKind::from_token(head, f)?)
            })
            .collect::<Result<_>>()?;
        Ok(DiscreteGaussian { problem, targets, n, proportions })
    }
}

impl TrialRunner for DiscreteGaussian {
    /// Every point gets one simulation before the allocation is rounded.
    fn trial(&self, strategy: usize, rng: &mut LabRng, dump: bool) -> Result<Outcome> {
        let (mean_f, mean_truth) = (&self.targets[0].1, self.targets[0].2);
        let (mut out, counts) = plan_outcome(&self.problem, mean_f, mean_truth, &self.proportions[strategy], self.n, 1, rng, dump)?;
        for (name, f, truth) in &self.targets[1..] {
            if let Ok(e) = mle_expectation(&counts, &self.problem, f) {
                out.put(format!("squared_error_{name}"), (e - truth).powi(2));
            }
        }
        Ok(out)
    }
}

pub(crate) fn discrete_gaussian_oracle(n: u64) -> Result<serde_json::Value> {
    let p = gaussian_problem();
    let nf = n as f64;
    let mut truths = serde_json::Map::new();
    let mut variances = serde_json::Map::new();
    for (name, f) in gaussian_targets() {
        truths.insert(name.into(), json!(p.posterior_expectation(&f)?));
        let mut row = serde_json::Map::new();
        for t in AllocationKind::TOKENS {
            let kind = AllocationKind::from_token(t, Some(f.clone()))?;
            let props = optimal_proportions(&p, &kind)?;
            row.insert(t.into(), json!(delta_method_variance_real(&p, &f, &props, nf)?));
        }
        variances.insert(name.into(), serde_json::Value::Object(row));
    }
    Ok(json!({ "evidence": p.evidence(), "truth": truths, "variance": variances }))
}

enum AdaptiveStrategy {
    Adaptive(AdaptiveConfig),
    Fixed(Vec<f64>),
}

pub(crate) struct Adaptive {
    problem: DiscreteProblem,
    f: TargetFunction<Atom>,
    truth: f64,
    n: u64,
    strategies: Vec<AdaptiveStrategy>,
}

impl Adaptive {
    pub(crate) fn new(n: u64, tokens: &[String]) -> Result<Self> {
        let problem = DiscreteProblem::ten_point();
        let f = TargetFunction::value();
        let strategies = tokens
            .iter()
            .map(|t| {
                let (head, arg) = match t.split_once(':') {
                    Some((h, a)) => (h, Some(a)),
                    None => (t.as_str(), None),
                };
                let rounds = match arg {
                    Some(a) => a.parse().map_err(|_| unknown_strategy(Experiment::Adaptive, t))?,
                    None => AdaptiveConfig::default().rounds,
                };
                Ok(match head {
                    "adaptive" => AdaptiveStrategy::Adaptive(AdaptiveConfig { rounds, rule: AdaptiveRule::MseOptimal }),
                    "adaptive-posterior" => AdaptiveStrategy::Adaptive(AdaptiveConfig { rounds, rule: AdaptiveRule::Posterior }),
                    "optimal" if arg.is_none() => {
                        AdaptiveStrategy::Fixed(optimal_proportions(&problem, &AllocationKind::MseOptimal(f.clone()))?)
                    }
                    _ if arg.is_none() => {
                        AdaptiveStrategy::Fixed(optimal_proportions(&problem, &AllocationKind::from_token(head, Some(f.clone()))?)?)
                    }
                    _ => return Err(unknown_strategy(Experiment::Adaptive, t)),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Adaptive { truth: problem.posterior_expectation(&f)?, problem, f, n, strategies })
    }
}

impl TrialRunner for Adaptive {
    fn trial(&self, strategy: usize, rng: &mut LabRng, dump: bool) -> Result<Outcome> {
        let (mut out, counts) = match &self.strategies[strategy] {
            AdaptiveStrategy::Adaptive(cfg) => {
                let r = adaptive_allocate(&self.problem, &self.f, self.n, *cfg, rng)?;
                let mut out = Outcome::scored(r.estimate, self.truth);
                out.ess = plan_ess(&r.counts, self.problem.prior());
                out.acceptance_rate = Some(r.counts.total_accepted() as f64 / r.counts.total() as f64);
                if dump {
                    out.particles = Some(counts_csv(&self.problem, &r.counts)?);
                }
                (out, r.counts)
            }
            AdaptiveStrategy::Fixed(props) => plan_outcome(&self.problem, &self.f, self.truth, props, self.n, 0, rng, dump)?,
        };
        if let Ok(v) = estimate_variance(&counts, &self.problem, &self.f) {
            out.put("variance_estimate", v.value);
            out.put("single_atom", if v.single_atom { 1.0 } else { 0.0 });
        }
        Ok(out)
    }
}

pub(crate) fn adaptive_oracle(n: u64) -> Result<serde_json::Value> {
    let p = DiscreteProblem::ten_point();
    let f = TargetFunction::value();
    let opt = optimal_proportions(&p, &AllocationKind::MseOptimal(f.clone()))?;
    let prior = optimal_proportions(&p, &AllocationKind::Prior)?;
    Ok(json!({
        "truth": p.posterior_expectation(&f)?,
        "optimal_proportions": opt,
        "optimal_variance": delta_method_variance_real(&p, &f, &opt, n as f64)?,
        "prior_variance": delta_method_variance_real(&p, &f, &prior, n as f64)?,
    }))
}
