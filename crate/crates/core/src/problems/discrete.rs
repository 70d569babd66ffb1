use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{Problem, TargetFunction, PROB_TOL};
use crate::error::{LfiError, Result};

/// One point of a discrete parameter grid: its index and numeric label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub index: usize,
    pub value: f64,
}

/// A finite parameter grid with prior `π_i` and acceptance probabilities
/// `p_i* = p(x*|θ_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteProblem {
    values: Vec<f64>,
    prior: Vec<f64>,
    likelihood: Vec<f64>,
    cumulative_prior: Vec<f64>,
}

impl DiscreteProblem {
    pub fn new(values: Vec<f64>, prior: Vec<f64>, likelihood: Vec<f64>) -> Result<Self> {
        let k = values.len();
        if k == 0 {
            return Err(LfiError::InvalidProblem("need at least one parameter value".into()));
        }
        if prior.len() != k || likelihood.len() != k {
            return Err(LfiError::InvalidProblem(format!(
                "lengths differ: {k} values, {} prior, {} likelihood",
                prior.len(),
                likelihood.len()
            )));
        }
        if prior.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(LfiError::InvalidProblem("prior probabilities must be non-negative".into()));
        }
        let total: f64 = prior.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(LfiError::InvalidProblem(format!("prior sums to {total}, not 1")));
        }
        if likelihood.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(LfiError::InvalidProblem("likelihood values must lie in [0, 1]".into()));
        }
        if likelihood.iter().all(|&p| p == 0.0) {
            return Err(LfiError::InvalidProblem("at least one likelihood value must be positive".into()));
        }
        let cumulative_prior = cumulative(&prior);
        Ok(DiscreteProblem { values, prior, likelihood, cumulative_prior })
    }

    /// Grid with a uniform prior.
    pub fn uniform(values: Vec<f64>, likelihood: Vec<f64>) -> Result<Self> {
        let k = values.len().max(1);
        Self::new(values, vec![1.0 / k as f64; k], likelihood)
    }

    /// Two parameter values with equal prior mass and acceptance
    /// probabilities 0.3 and 0.05.
    pub fn two_point() -> Self {
        Self::new(vec![1.0, 2.0], vec![0.5, 0.5], vec![0.3, 0.05]).expect("valid preset")
    }

    /// `n` evenly spaced points on `[lo, hi]`, uniform prior, likelihood
    /// `exp(-θ²/2)`.
    pub fn gaussian_grid(n: usize, lo: f64, hi: f64) -> Result<Self> {
        if n < 2 {
            return Err(LfiError::InvalidProblem("grid needs at least two points".into()));
        }
        let values: Vec<f64> = (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect();
        let likelihood = values.iter().map(|t| (-0.5 * t * t).exp()).collect();
        Self::uniform(values, likelihood)
    }

    /// Integers 1..=10, uniform prior, likelihood `exp(-(θ - 5.5)²/2)`.
    pub fn ten_point() -> Self {
        let values: Vec<f64> = (1..=10).map(f64::from).collect();
        let likelihood = values.iter().map(|t| (-0.5 * (t - 5.5) * (t - 5.5)).exp()).collect();
        Self::uniform(values, likelihood).expect("valid preset")
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn likelihood_values(&self) -> &[f64] {
        &self.likelihood
    }

    pub fn atom(&self, index: usize) -> Atom {
        Atom { index, value: self.values[index] }
    }

    pub fn atoms(&self) -> impl Iterator<Item = Atom> + '_ {
        (0..self.k()).map(|i| self.atom(i))
    }

    /// `p(x*) = Σ π_i p_i*`.
    pub fn evidence(&self) -> f64 {
        self.prior.iter().zip(&self.likelihood).map(|(p, l)| p * l).sum()
    }

    /// `p(θ_i|x*) = π_i p_i* / Σ_j π_j p_j*`.
    pub fn exact_posterior(&self) -> Result<Vec<f64>> {
        let z = self.evidence();
        if z <= 0.0 {
            return Err(LfiError::DegenerateProblem);
        }
        Ok(self.prior.iter().zip(&self.likelihood).map(|(p, l)| p * l / z).collect())
    }

    /// `f̄ = Σ_i f(θ_i) p(θ_i|x*)`.
    pub fn posterior_expectation(&self, f: &TargetFunction<Atom>) -> Result<f64> {
        let post = self.exact_posterior()?;
        Ok(self.atoms().zip(&post).map(|(a, w)| w * f.eval(&a)).sum())
    }

    /// Target values `f(θ_i)` for every grid point.
    pub fn target_values(&self, f: &TargetFunction<Atom>) -> Vec<f64> {
        self.atoms().map(|a| f.eval(&a)).collect()
    }

    /// Samples an index from arbitrary probabilities over the grid.
    pub(crate) fn sample_index(cumulative: &[f64], rng: &mut dyn RngCore) -> usize {
        let total = *cumulative.last().expect("non-empty");
        let u = rng.random::<f64>() * total;
        cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
    }
}

pub(crate) fn cumulative(p: &[f64]) -> Vec<f64> {
    p.iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

impl Problem for DiscreteProblem {
    type Param = Atom;

    fn prior_density(&self, theta: &Atom) -> f64 {
        self.prior.get(theta.index).copied().unwrap_or(0.0)
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> Atom {
        self.atom(Self::sample_index(&self.cumulative_prior, rng))
    }

    fn likelihood(&self, theta: &Atom) -> f64 {
        self.likelihood.get(theta.index).copied().unwrap_or(0.0)
    }

    fn contains(&self, theta: &Atom) -> bool {
        theta.index < self.k()
    }
}

impl TargetFunction<Atom> {
    /// `1(θ = θ_j)`.
    pub fn indicator_index(j: usize) -> Self {
        Self::new(format!("1(theta=theta_{})", j + 1), move |a: &Atom| {
            if a.index == j {
                1.0
            } else {
                0.0
            }
        })
    }

    /// The numeric label `θ_i` itself.
    pub fn value() -> Self {
        Self::new("theta", |a: &Atom| a.value)
    }

    /// Applies `g` to the numeric label.
    pub fn of_value(label: impl Into<String>, g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(label, move |a: &Atom| g(a.value))
    }
}
