use rand::{Rng, RngCore};

use super::{GridDensity, ImportanceDensity};
use crate::error::{LfiError, Result};
use crate::estimators::{weighted_expectation, Particle, WeightedParticles};
use crate::problems::{accept, IntervalProblem, Problem, TargetFunction};

/// A partition of the base density's support into strata, with the number
/// of simulations drawn in each.
#[derive(Debug, Clone, PartialEq)]
pub struct StrataSpec {
    /// Stratum edges in parameter space, `K + 1` points.
    pub boundaries: Vec<f64>,
    /// Base-density CDF at each edge.
    pub probabilities: Vec<f64>,
    /// `n_k` for each stratum.
    pub per_stratum: Vec<usize>,
}

impl StrataSpec {
    /// `k` strata of equal probability under `base`, one draw each.
    pub fn equal_probability(base: &GridDensity, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(LfiError::InvalidInput("need at least one stratum".into()));
        }
        let probabilities: Vec<f64> = (0..=k).map(|i| i as f64 / k as f64).collect();
        Ok(StrataSpec {
            boundaries: probabilities.iter().map(|&u| base.quantile(u)).collect(),
            probabilities,
            per_stratum: vec![1; k],
        })
    }

    pub fn strata(&self) -> usize {
        self.per_stratum.len()
    }

    pub fn total(&self) -> usize {
        self.per_stratum.iter().sum()
    }
}

/// Draws `n_k` parameters from the base density restricted to each stratum
/// and simulates each once. Accepted draws get weight `p / (n_k q_k)`, where
/// `q_k` is the renormalized base density on stratum `k`.
pub fn stratified_particles_with<R: RngCore>(
    problem: &IntervalProblem,
    base: &GridDensity,
    strata: &StrataSpec,
    rng: &mut R,
) -> Result<WeightedParticles<f64>> {
    let k = strata.strata();
    if strata.probabilities.len() != k + 1 || strata.total() == 0 {
        return Err(LfiError::InvalidInput("malformed strata".into()));
    }
    let mut entries = Vec::with_capacity(strata.total());
    for s in 0..k {
        let (a, b) = (strata.probabilities[s], strata.probabilities[s + 1]);
        let mass = b - a;
        let n_k = strata.per_stratum[s];
        if n_k == 0 {
            continue;
        }
        if !(mass > 0.0) {
            return Err(LfiError::InvalidInput(format!("stratum {} has no base mass", s + 1)));
        }
        for _ in 0..n_k {
            let u = rng.random::<f64>();
            let theta = base.quantile(a + mass * u);
            let q_k = base.pdf(&theta) / mass;
            if !(q_k > 0.0) {
                return Err(LfiError::ZeroProposalDensity);
            }
            let accepted = accept(problem.likelihood(&theta), rng);
            let weight = if accepted { problem.prior_density(&theta) / (q_k * n_k as f64) } else { 0.0 };
            entries.push(Particle { theta, weight, round: 0, accepted });
        }
    }
    WeightedParticles::new(entries)
}

/// Stratified draws with `K = n` equal-probability strata of `base` and one
/// simulation per stratum. With `n = 1` this consumes the random stream
/// exactly like importance sampling from `base`.
pub fn stratified_particles<R: RngCore>(
    problem: &IntervalProblem,
    base: &GridDensity,
    n: usize,
    rng: &mut R,
) -> Result<WeightedParticles<f64>> {
    stratified_particles_with(problem, base, &StrataSpec::equal_probability(base, n)?, rng)
}

/// Stratified estimate `Σ_k R_k / Σ_k S_k` of the posterior expectation.
pub fn stratified_sampling<R: RngCore>(
    problem: &IntervalProblem,
    base: &GridDensity,
    n: usize,
    rng: &mut R,
    f: &TargetFunction<f64>,
) -> Result<f64> {
    weighted_expectation(&stratified_particles(problem, base, n, rng)?, f)
}

/// Midpoint approximation of the stratified-estimator variance,
/// `P⁻² Σ_k V_k² (f(θ_k) - f̄)² p(θ_k)² L(θ_k)(1 - L(θ_k)) / n_k`, where
/// `V_k` is the stratum width and `θ_k` its midpoint. For diagnostics only:
/// it ignores within-stratum variation of `f` and `p`.
pub fn stratified_variance_approx(
    problem: &IntervalProblem,
    strata: &StrataSpec,
    f: &TargetFunction<f64>,
    fbar: f64,
) -> Result<f64> {
    let z = problem.evidence();
    let mut v = 0.0;
    for s in 0..strata.strata() {
        let n_k = strata.per_stratum[s];
        if n_k == 0 {
            continue;
        }
        let (a, b) = (strata.boundaries[s], strata.boundaries[s + 1]);
        let mid = 0.5 * (a + b);
        let l = problem.likelihood(&mid);
        let p = problem.prior_density(&mid);
        v += (b - a).powi(2) * (f.eval(&mid) - fbar).powi(2) * p * p * l * (1.0 - l) / n_k as f64;
    }
    Ok(v / (z * z))
}
