//! Asymptotic variance of plug-in posterior expectations over a discrete
//! grid, score-optimal simulation allocations, integer rounding of
//! allocations, and a multi-round adaptive allocator.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{LfiError, Result};
use crate::estimators::{mle_posterior, CountTable};
use crate::problems::{Atom, DiscreteProblem, TargetFunction};

/// Integer simulation counts per grid point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub counts: Vec<u64>,
    pub budget: u64,
}

impl AllocationPlan {
    pub fn new(counts: Vec<u64>) -> Self {
        let budget = counts.iter().sum();
        AllocationPlan { counts, budget }
    }

    pub fn proportions(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.budget as f64).collect()
    }
}

/// Which score an allocation optimizes, or a fixed reference allocation.
#[derive(Clone)]
pub enum AllocationKind {
    /// Minimizes the asymptotic variance of the plug-in estimate of `E[f]`.
    MseOptimal(TargetFunction<Atom>),
    /// Maximizes the asymptotic effective sample size.
    EssOptimal,
    /// Minimizes the squared error of the unnormalized posterior.
    UnnormalizedMseOptimal,
    /// `n_i ∝ 1/p_i*`.
    InverseBinomial,
    Prior,
    Posterior,
    Uniform,
}

impl AllocationKind {
    pub const TOKENS: [&'static str; 7] = ["mse-opt", "ess-opt", "unnorm-opt", "ibs", "prior", "posterior", "uniform"];

    /// Parses a token; `mse-opt` needs the target function.
    pub fn from_token(token: &str, f: Option<TargetFunction<Atom>>) -> Result<Self> {
        Ok(match token {
            "mse-opt" => AllocationKind::MseOptimal(f.ok_or_else(|| {
                LfiError::InvalidInput("mse-opt allocation needs a target function".into())
            })?),
            other => other.parse::<FixedKind>()?.into(),
        })
    }

    pub fn token(&self) -> &'static str {
        match self {
            AllocationKind::MseOptimal(_) => "mse-opt",
            AllocationKind::EssOptimal => "ess-opt",
            AllocationKind::UnnormalizedMseOptimal => "unnorm-opt",
            AllocationKind::InverseBinomial => "ibs",
            AllocationKind::Prior => "prior",
            AllocationKind::Posterior => "posterior",
            AllocationKind::Uniform => "uniform",
        }
    }
}

impl fmt::Debug for AllocationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AllocationKind::MseOptimal(t) => write!(f, "MseOptimal({})", t.label()),
            other => f.write_str(other.token()),
        }
    }
}

/// The allocation kinds that do not carry a target function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FixedKind {
    Ess,
    Unnorm,
    Ibs,
    Prior,
    Posterior,
    Uniform,
}

impl FromStr for FixedKind {
    type Err = LfiError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ess-opt" => FixedKind::Ess,
            "unnorm-opt" => FixedKind::Unnorm,
            "ibs" => FixedKind::Ibs,
            "prior" => FixedKind::Prior,
            "posterior" => FixedKind::Posterior,
            "uniform" => FixedKind::Uniform,
            other => return Err(LfiError::UnknownToken { what: "allocation kind", token: other.to_string() }),
        })
    }
}

impl From<FixedKind> for AllocationKind {
    fn from(k: FixedKind) -> Self {
        match k {
            FixedKind::Ess => AllocationKind::EssOptimal,
            FixedKind::Unnorm => AllocationKind::UnnormalizedMseOptimal,
            FixedKind::Ibs => AllocationKind::InverseBinomial,
            FixedKind::Prior => AllocationKind::Prior,
            FixedKind::Posterior => AllocationKind::Posterior,
            FixedKind::Uniform => AllocationKind::Uniform,
        }
    }
}

/// Per-point numerators `π_i² p_i(1-p_i)(f_i - f̄)² / p(x*)²` of the
/// delta-method variance; the variance is `Σ c_i / n_i`.
fn variance_coefficients(prior: &[f64], lik: &[f64], fvals: &[f64]) -> Result<Vec<f64>> {
    let z: f64 = prior.iter().zip(lik).map(|(a, b)| a * b).sum();
    if z <= 0.0 {
        return Err(LfiError::DegenerateProblem);
    }
    let fbar: f64 = prior.iter().zip(lik).zip(fvals).map(|((a, b), f)| a * b * f).sum::<f64>() / z;
    Ok(prior
        .iter()
        .zip(lik)
        .zip(fvals)
        .map(|((&pi, &p), &f)| {
            let d = f - fbar;
            pi * pi * p * (1.0 - p) * d * d / (z * z)
        })
        .collect())
}

fn variance_from(coeffs: &[f64], n: impl Iterator<Item = f64>) -> f64 {
    coeffs
        .iter()
        .zip(n)
        .map(|(&c, n)| {
            if c == 0.0 {
                0.0
            } else if n <= 0.0 {
                f64::INFINITY
            } else {
                c / n
            }
        })
        .sum()
}

/// Asymptotic variance of the plug-in estimate of `E[f]` under `plan`;
/// infinite when a point that contributes variance gets no simulations.
pub fn delta_method_variance(problem: &DiscreteProblem, f: &TargetFunction<Atom>, plan: &AllocationPlan) -> Result<f64> {
    if plan.counts.len() != problem.k() {
        return Err(LfiError::InvalidInput("plan does not match the problem".into()));
    }
    let c = variance_coefficients(problem.prior(), problem.likelihood_values(), &problem.target_values(f))?;
    Ok(variance_from(&c, plan.counts.iter().map(|&n| n as f64)))
}

/// The same variance for real-valued counts `N · proportions`.
pub fn delta_method_variance_real(
    problem: &DiscreteProblem,
    f: &TargetFunction<Atom>,
    proportions: &[f64],
    n: f64,
) -> Result<f64> {
    if proportions.len() != problem.k() {
        return Err(LfiError::InvalidInput("proportions do not match the problem".into()));
    }
    let c = variance_coefficients(problem.prior(), problem.likelihood_values(), &problem.target_values(f))?;
    Ok(variance_from(&c, proportions.iter().map(|p| p * n)))
}

/// Asymptotic expected ESS `p(x*)² / Σ π_i² p_i / n_i` of the weighted
/// accepted simulations under real-valued counts `N · proportions`.
pub fn asymptotic_ess(problem: &DiscreteProblem, proportions: &[f64], n: f64) -> f64 {
    let z = problem.evidence();
    let denom: f64 = problem
        .prior()
        .iter()
        .zip(problem.likelihood_values())
        .zip(proportions)
        .map(|((&pi, &p), &q)| {
            if pi * p == 0.0 {
                0.0
            } else if q <= 0.0 {
                f64::INFINITY
            } else {
                pi * pi * p / (q * n)
            }
        })
        .sum();
    z * z / denom
}

fn normalize(raw: Vec<f64>) -> Option<Vec<f64>> {
    let s: f64 = raw.iter().sum();
    (s > 0.0 && s.is_finite()).then(|| raw.iter().map(|x| x / s).collect())
}

/// Proportions from arbitrary prior/likelihood vectors; shared by the exact
/// and plug-in code paths.
fn proportions_for(prior: &[f64], lik: &[f64], fvals: Option<&[f64]>, kind: &AllocationKind) -> Result<Vec<f64>> {
    let k = prior.len();
    let raw: Vec<f64> = match kind {
        AllocationKind::MseOptimal(_) => {
            let fvals = fvals.expect("target values supplied for mse-opt");
            let z: f64 = prior.iter().zip(lik).map(|(a, b)| a * b).sum();
            if z <= 0.0 {
                return Err(LfiError::DegenerateProblem);
            }
            let fbar: f64 = prior.iter().zip(lik).zip(fvals).map(|((a, b), f)| a * b * f).sum::<f64>() / z;
            let raw: Vec<f64> = (0..k)
                .map(|i| prior[i] * (lik[i] * (1.0 - lik[i])).sqrt() * (fvals[i] - fbar).abs())
                .collect();
            return normalize(raw).ok_or(LfiError::DegenerateTarget);
        }
        AllocationKind::EssOptimal => (0..k).map(|i| prior[i] * lik[i].sqrt()).collect(),
        AllocationKind::UnnormalizedMseOptimal => (0..k).map(|i| prior[i] * (lik[i] * (1.0 - lik[i])).sqrt()).collect(),
        AllocationKind::InverseBinomial => {
            if let Some(i) = lik.iter().position(|&p| p == 0.0) {
                return Err(LfiError::UndefinedAllocation(format!("inverse binomial needs p_{} > 0", i + 1)));
            }
            lik.iter().map(|p| 1.0 / p).collect()
        }
        AllocationKind::Prior => prior.to_vec(),
        AllocationKind::Posterior => (0..k).map(|i| prior[i] * lik[i]).collect(),
        AllocationKind::Uniform => vec![1.0; k],
    };
    normalize(raw).ok_or_else(|| LfiError::UndefinedAllocation(format!("{kind:?} has no positive mass")))
}

/// Score-optimal (or reference) simulation proportions, summing to one.
pub fn optimal_proportions(problem: &DiscreteProblem, kind: &AllocationKind) -> Result<Vec<f64>> {
    let fvals = match kind {
        AllocationKind::MseOptimal(f) => Some(problem.target_values(f)),
        _ => None,
    };
    proportions_for(problem.prior(), problem.likelihood_values(), fvals.as_deref(), kind)
}

/// Largest-remainder rounding of `n · proportions`; ties go to the lowest
/// index.
pub fn integerize(proportions: &[f64], n: u64) -> Result<AllocationPlan> {
    integerize_with_floor(proportions, n, 0)
}

/// Like [`integerize`], but every point receives at least `floor`
/// simulations, including points with zero proportion; the rest of the
/// budget is rounded as usual.
pub fn integerize_with_floor(proportions: &[f64], n: u64, floor: u64) -> Result<AllocationPlan> {
    if proportions.is_empty() {
        return Err(LfiError::InvalidInput("no proportions".into()));
    }
    let s: f64 = proportions.iter().sum();
    if (s - 1.0).abs() > 1e-9 || proportions.iter().any(|p| !(*p >= 0.0)) {
        return Err(LfiError::InvalidInput(format!("proportions must be non-negative and sum to 1 (got {s})")));
    }
    let k = proportions.len();
    let reserved = floor * k as u64;
    if reserved > n {
        return Err(LfiError::InfeasibleAllocation { needed: k, budget: n });
    }
    let free = n - reserved;
    let exact: Vec<f64> = proportions.iter().map(|p| p * free as f64).collect();
    let mut counts: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(free.saturating_sub(assigned) as usize) {
        counts[i] += 1;
    }
    for c in &mut counts {
        *c += floor;
    }
    Ok(AllocationPlan::new(counts))
}

/// Runs `plan.counts[i]` simulations at every grid point, returning the
/// acceptance counts.
pub fn simulate_plan<R: Rng + ?Sized>(problem: &DiscreteProblem, plan: &AllocationPlan, rng: &mut R) -> Result<CountTable> {
    let mut table = CountTable::zeros(problem.k());
    for (i, &n) in plan.counts.iter().enumerate() {
        table.record(i, n, binomial(n, problem.likelihood_values()[i], rng));
    }
    Ok(table)
}

fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p == 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial parameters").sample(rng)
}

/// A variance self-estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub value: f64,
    /// Only one grid point had accepted simulations, so the plug-in
    /// posterior is a point mass and the estimate is zero.
    pub single_atom: bool,
}

/// Delta-method variance with `p̂_i* = n_i*/n_i` substituted for `p_i*`.
pub fn estimate_variance(counts: &CountTable, problem: &DiscreteProblem, f: &TargetFunction<Atom>) -> Result<VarianceEstimate> {
    if counts.n().len() != problem.k() {
        return Err(LfiError::InvalidInput("count table does not match the problem".into()));
    }
    let p_hat = counts.likelihood_estimates()?;
    let c = variance_coefficients(problem.prior(), &p_hat, &problem.target_values(f))
        .map_err(|_| LfiError::DegenerateEstimate)?;
    let value = variance_from(&c, counts.n().iter().map(|&n| n as f64));
    let single_atom = counts.n_star().iter().filter(|&&s| s > 0).count() == 1;
    Ok(VarianceEstimate { value, single_atom })
}

/// Which proportions the adaptive allocator chases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdaptiveRule {
    /// Plug-in estimate of the MSE-optimal allocation.
    MseOptimal,
    /// Plug-in estimate of the posterior.
    Posterior,
}

/// Settings of [`adaptive_allocate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveConfig {
    pub rounds: usize,
    pub rule: AdaptiveRule,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig { rounds: 16, rule: AdaptiveRule::MseOptimal }
    }
}

/// Output of the adaptive allocator.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveOutcome {
    /// Plug-in estimate of `E[f]`; `None` when nothing was accepted.
    pub estimate: Option<f64>,
    pub counts: CountTable,
    pub variance_estimate: Option<VarianceEstimate>,
    pub degenerate: bool,
}

/// Adds `1/√N` to every proportion and renormalizes, which keeps roughly
/// `√N` simulations on every grid point.
pub fn with_sqrt_floor(proportions: &[f64], n: u64) -> Vec<f64> {
    let add = 1.0 / (n as f64).sqrt();
    normalize(proportions.iter().map(|p| p + add).collect()).expect("positive after floor")
}

/// Multi-round allocation. Round one follows the prior; every later round
/// recomputes the target proportions from all simulations so far, adds the
/// `1/√N` floor, scales them to the cumulative budget `round(mN/M)`, and
/// spends the round's simulations in proportion to each point's shortfall
/// against that target. Simulations already spent are never taken back.
pub fn adaptive_allocate<R: Rng + ?Sized>(
    problem: &DiscreteProblem,
    f: &TargetFunction<Atom>,
    n: u64,
    config: AdaptiveConfig,
    rng: &mut R,
) -> Result<AdaptiveOutcome> {
    let k = problem.k();
    let m_rounds = config.rounds as u64;
    if m_rounds < 2 {
        return Err(LfiError::InvalidInput("adaptive allocation needs at least two rounds".into()));
    }
    if n < m_rounds * k as u64 {
        return Err(LfiError::InvalidInput(format!("budget {n} is below rounds x grid size = {}", m_rounds * k as u64)));
    }
    let fvals = problem.target_values(f);
    let kind = match config.rule {
        AdaptiveRule::MseOptimal => AllocationKind::MseOptimal(f.clone()),
        AdaptiveRule::Posterior => AllocationKind::Posterior,
    };
    let mut counts = CountTable::zeros(k);
    let cumulative = |m: u64| ((m as f64) * n as f64 / m_rounds as f64).round() as u64;

    for m in 1..=m_rounds {
        let target_total = cumulative(m);
        let round_budget = target_total - counts.total();
        let base = if m == 1 {
            problem.prior().to_vec()
        } else {
            let p_hat: Vec<f64> = counts
                .n()
                .iter()
                .zip(counts.n_star())
                .map(|(&a, &b)| if a == 0 { 0.0 } else { b as f64 / a as f64 })
                .collect();
            // Before any acceptance there is nothing to adapt to.
            proportions_for(problem.prior(), &p_hat, Some(&fvals), &kind).unwrap_or_else(|_| problem.prior().to_vec())
        };
        let target = with_sqrt_floor(&base, n);
        let gaps: Vec<f64> = target
            .iter()
            .zip(counts.n())
            .map(|(t, &have)| (t * target_total as f64 - have as f64).max(0.0))
            .collect();
        let shares = normalize(gaps).unwrap_or_else(|| vec![1.0 / k as f64; k]);
        let plan = integerize(&shares, round_budget)?;
        for (i, &c) in plan.counts.iter().enumerate() {
            counts.record(i, c, binomial(c, problem.likelihood_values()[i], rng));
        }
    }

    let estimate = mle_posterior(&counts, problem)
        .ok()
        .map(|post| post.iter().zip(&fvals).map(|(w, v)| w * v).sum::<f64>());
    let variance_estimate = estimate_variance(&counts, problem, f).ok();
    Ok(AdaptiveOutcome { degenerate: estimate.is_none(), estimate, counts, variance_estimate })
}

/// Exact mean squared error of the plug-in estimate of `E[f]` under fixed
/// counts, by enumerating every acceptance outcome with its binomial
/// probability. Outcomes with no acceptance at all are excluded and the
/// result is conditioned on at least one acceptance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactMse {
    pub mse: f64,
    /// Probability that at least one simulation is accepted.
    pub p_nonzero: f64,
}

pub fn exact_plugin_mse(problem: &DiscreteProblem, f: &TargetFunction<Atom>, counts: &[u64]) -> Result<ExactMse> {
    let k = problem.k();
    if counts.len() != k || counts.iter().any(|&c| c == 0) {
        return Err(LfiError::InvalidInput("every grid point needs at least one simulation".into()));
    }
    let outcomes: u128 = counts.iter().map(|&c| c as u128 + 1).product();
    if outcomes > 50_000_000 {
        return Err(LfiError::InvalidInput(format!("{outcomes} outcomes are too many to enumerate")));
    }
    let truth = problem.posterior_expectation(f)?;
    let fvals = problem.target_values(f);
    let pmfs: Vec<Vec<f64>> = counts
        .iter()
        .zip(problem.likelihood_values())
        .map(|(&n, &p)| binomial_pmf(n, p))
        .collect();
    let mut idx = vec![0u64; k];
    let mut total_p = 0.0;
    let mut total_se = 0.0;
    loop {
        let prob: f64 = (0..k).map(|i| pmfs[i][idx[i] as usize]).product();
        let z: f64 = (0..k).map(|i| problem.prior()[i] * idx[i] as f64 / counts[i] as f64).sum();
        if z > 0.0 && prob > 0.0 {
            let est: f64 = (0..k)
                .map(|i| problem.prior()[i] * idx[i] as f64 / counts[i] as f64 * fvals[i])
                .sum::<f64>()
                / z;
            total_p += prob;
            total_se += prob * (est - truth) * (est - truth);
        }
        // Odometer increment.
        let mut d = 0;
        loop {
            if d == k {
                if total_p <= 0.0 {
                    return Err(LfiError::DegenerateProblem);
                }
                return Ok(ExactMse { mse: total_se / total_p, p_nonzero: total_p });
            }
            idx[d] += 1;
            if idx[d] <= counts[d] {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

fn binomial_pmf(n: u64, p: f64) -> Vec<f64> {
    // Log-space to stay finite for large n.
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=n).scan(0.0, |acc, i| {
            *acc += (i as f64).ln();
            Some(*acc)
        }))
        .collect();
    (0..=n)
        .map(|s| {
            let (sf, nf) = (s as f64, n as f64);
            let lc = ln_fact[n as usize] - ln_fact[s as usize] - ln_fact[(n - s) as usize];
            let lp = if sf > 0.0 { sf * p.ln() } else { 0.0 };
            let lq = if nf - sf > 0.0 { (nf - sf) * (1.0 - p).ln() } else { 0.0 };
            (lc + lp + lq).exp()
        })
        .collect()
}
