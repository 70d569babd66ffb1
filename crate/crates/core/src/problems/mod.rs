//! Inference problems: priors, acceptance-probability likelihoods and exact
//! posterior ground truth.
//!
//! Every simulation is reduced to an acceptance indicator: running the
//! simulator at `θ` reproduces the observed data with probability
//! `likelihood(θ)`. Estimators only ever consume those indicators.

mod discrete;
mod interval;
mod model_selection;
mod spec;

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{LfiError, Result};

pub use discrete::{Atom, DiscreteProblem};
pub(crate) use discrete::cumulative;
pub use interval::IntervalProblem;
pub use model_selection::{ModelSelectionProblem, ModelSpec, ModelTheta};
pub use spec::{AnyProblem, ProblemSpec};

/// Tolerance for probability normalization checks.
pub const PROB_TOL: f64 = 1e-12;

/// A prior together with a simulation oracle.
pub trait Problem: Send + Sync {
    type Param: Clone + fmt::Debug + Send + Sync;

    /// Prior density (probability mass for discrete parameters).
    fn prior_density(&self, theta: &Self::Param) -> f64;

    fn sample_prior(&self, rng: &mut dyn RngCore) -> Self::Param;

    /// Probability that one simulation at `theta` reproduces the data.
    fn likelihood(&self, theta: &Self::Param) -> f64;

    fn contains(&self, theta: &Self::Param) -> bool;
}

/// Outcome of one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutcome<P> {
    pub theta: P,
    pub accepted: bool,
}

/// Runs the simulator once at `theta`.
pub fn simulate<P, R>(problem: &P, theta: &P::Param, rng: &mut R) -> Result<SimulationOutcome<P::Param>>
where
    P: Problem + ?Sized,
    R: Rng + ?Sized,
{
    if !problem.contains(theta) {
        return Err(LfiError::OutsideSupport(format!("{theta:?}")));
    }
    Ok(SimulationOutcome {
        theta: theta.clone(),
        accepted: accept(problem.likelihood(theta), rng),
    })
}

/// Bernoulli draw shared by every sampler so that paired runs consume the
/// random stream identically.
#[inline]
pub(crate) fn accept<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    rng.random::<f64>() < p
}

/// A real-valued function of the parameter whose posterior expectation is
/// the estimation target.
#[derive(Clone)]
pub struct TargetFunction<P> {
    label: String,
    eval: Arc<dyn Fn(&P) -> f64 + Send + Sync>,
    breakpoints: Vec<f64>,
}

impl<P> TargetFunction<P> {
    pub fn new(label: impl Into<String>, eval: impl Fn(&P) -> f64 + Send + Sync + 'static) -> Self {
        TargetFunction {
            label: label.into(),
            eval: Arc::new(eval),
            breakpoints: Vec::new(),
        }
    }

    /// Declares points where the function jumps or kinks, used by
    /// quadrature over one-dimensional supports.
    pub fn with_breakpoints(mut self, breakpoints: Vec<f64>) -> Self {
        self.breakpoints = breakpoints;
        self
    }

    pub fn eval(&self, theta: &P) -> f64 {
        (self.eval)(theta)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("const({c})"), move |_| c)
    }
}

impl<P> fmt::Debug for TargetFunction<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetFunction").field("label", &self.label).finish()
    }
}

impl TargetFunction<f64> {
    pub fn identity() -> Self {
        Self::new("theta", |t: &f64| *t)
    }

    /// `1(θ < c)`.
    pub fn indicator_below(c: f64) -> Self {
        Self::new(format!("1(theta<{c})"), move |t: &f64| if *t < c { 1.0 } else { 0.0 })
            .with_breakpoints(vec![c])
    }

    pub fn power(k: i32) -> Self {
        Self::new(format!("theta^{k}"), move |t: &f64| t.powi(k))
    }
}

/// Closed-form one-dimensional likelihood shapes. Each maps into [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum LikelihoodShape {
    /// `exp(-rate |θ - center|)`.
    #[serde(rename = "laplace_likelihood")]
    Laplace { center: f64, rate: f64 },
    /// `exp(-(θ - center)² / (2 sd²))`.
    #[serde(rename = "gaussian_likelihood")]
    Gaussian { center: f64, sd: f64 },
    /// `θ`, for supports inside [0, 1].
    #[serde(rename = "linear_likelihood")]
    Linear,
    #[serde(rename = "constant_likelihood")]
    Constant { value: f64 },
}

impl LikelihoodShape {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            LikelihoodShape::Laplace { center, rate } => (-rate * (x - center).abs()).exp(),
            LikelihoodShape::Gaussian { center, sd } => {
                let z = (x - center) / sd;
                (-0.5 * z * z).exp()
            }
            LikelihoodShape::Linear => x,
            LikelihoodShape::Constant { value } => value,
        }
    }

    /// Points where the shape is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            LikelihoodShape::Laplace { center, .. } => vec![center],
            _ => Vec::new(),
        }
    }

    fn validate(&self, lo: f64, hi: f64) -> Result<()> {
        let bad = |msg: &str| Err(LfiError::InvalidProblem(msg.to_string()));
        match *self {
            LikelihoodShape::Laplace { rate, .. } if !(rate >= 0.0 && rate.is_finite()) => {
                bad("laplace rate must be finite and non-negative")
            }
            LikelihoodShape::Gaussian { sd, .. } if !(sd > 0.0 && sd.is_finite()) => {
                bad("gaussian sd must be positive")
            }
            LikelihoodShape::Linear if lo < 0.0 || hi > 1.0 => {
                bad("linear likelihood needs a support inside [0, 1]")
            }
            LikelihoodShape::Constant { value } if !(0.0..=1.0).contains(&value) => {
                bad("constant likelihood must lie in [0, 1]")
            }
            _ => Ok(()),
        }
    }
}

pub(crate) fn check_interval(lo: f64, hi: f64) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && lo < hi {
        Ok(())
    } else {
        Err(LfiError::InvalidProblem(format!("support [{lo}, {hi}] must be a finite, non-empty interval")))
    }
}
