use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};

use super::{check_interval, LikelihoodShape, Problem, TargetFunction};
use crate::error::{LfiError, Result};
use crate::quadrature::Integrator;

/// Acceptance probability as a function of a scalar parameter.
#[derive(Clone)]
pub enum Likelihood {
    Shape(LikelihoodShape),
    Custom {
        label: String,
        eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        breakpoints: Vec<f64>,
    },
}

impl Likelihood {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Likelihood::Shape(s) => s.eval(x),
            Likelihood::Custom { eval, .. } => eval(x),
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Likelihood::Shape(s) => s.breakpoints(),
            Likelihood::Custom { breakpoints, .. } => breakpoints.clone(),
        }
    }
}

impl fmt::Debug for Likelihood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Likelihood::Shape(s) => s.fmt(f),
            Likelihood::Custom { label, .. } => write!(f, "Custom({label})"),
        }
    }
}

/// Scalar parameter with a uniform prior on `[lo, hi]`.
#[derive(Debug, Clone)]
pub struct IntervalProblem {
    lo: f64,
    hi: f64,
    likelihood: Likelihood,
}

impl IntervalProblem {
    pub fn uniform(lo: f64, hi: f64, shape: LikelihoodShape) -> Result<Self> {
        check_interval(lo, hi)?;
        shape.validate(lo, hi)?;
        Self::checked(lo, hi, Likelihood::Shape(shape))
    }

    /// Uniform prior with an arbitrary likelihood; `breakpoints` lists
    /// points where it is not smooth.
    pub fn with_likelihood(
        lo: f64,
        hi: f64,
        label: impl Into<String>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        breakpoints: Vec<f64>,
    ) -> Result<Self> {
        check_interval(lo, hi)?;
        Self::checked(
            lo,
            hi,
            Likelihood::Custom { label: label.into(), eval: Arc::new(eval), breakpoints },
        )
    }

    fn checked(lo: f64, hi: f64, likelihood: Likelihood) -> Result<Self> {
        let n = 10_000;
        let mut any_positive = false;
        for i in 0..=n {
            let x = lo + (hi - lo) * i as f64 / n as f64;
            let l = likelihood.eval(x);
            if !(0.0..=1.0).contains(&l) {
                return Err(LfiError::InvalidProblem(format!("likelihood {l} at {x} is not a probability")));
            }
            any_positive |= l > 0.0;
        }
        if !any_positive {
            return Err(LfiError::InvalidProblem("likelihood vanishes on the support".into()));
        }
        Ok(IntervalProblem { lo, hi, likelihood })
    }

    /// Prior uniform on [-40, 60], likelihood `exp(-|θ|)`.
    pub fn laplace() -> Self {
        Self::uniform(-40.0, 60.0, LikelihoodShape::Laplace { center: 0.0, rate: 1.0 }).expect("valid preset")
    }

    /// Prior uniform on [0, 1], likelihood `θ`.
    pub fn linear() -> Self {
        Self::uniform(0.0, 1.0, LikelihoodShape::Linear).expect("valid preset")
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn likelihood_fn(&self) -> &Likelihood {
        &self.likelihood
    }

    pub fn prior_pdf(&self) -> f64 {
        1.0 / (self.hi - self.lo)
    }

    /// Breakpoints of the likelihood together with those of `extra`.
    pub fn breakpoints_with(&self, extra: &[f64]) -> Vec<f64> {
        let mut b = self.likelihood.breakpoints();
        b.extend_from_slice(extra);
        b
    }

    pub(crate) fn integrator() -> Integrator {
        Integrator::new(20).with_tolerance(0.0, 1e-12).with_max_segments(20_000)
    }

    /// `p(x*) = ∫ p(θ) L(θ) dθ`.
    pub fn evidence(&self) -> f64 {
        let pdf = self.prior_pdf();
        Self::integrator()
            .integrate_scalar(|x| pdf * self.likelihood.eval(x), self.lo, self.hi, &self.likelihood.breakpoints())
            .value[0]
    }

    /// `f̄ = ∫ f p L / ∫ p L` by adaptive quadrature.
    pub fn posterior_expectation(&self, f: &TargetFunction<f64>) -> Result<f64> {
        let pdf = self.prior_pdf();
        let r = Self::integrator().integrate(
            |x| {
                let w = pdf * self.likelihood.eval(x);
                [w * f.eval(&x), w]
            },
            self.lo,
            self.hi,
            &self.breakpoints_with(f.breakpoints()),
        );
        if r.value[1] <= 0.0 {
            return Err(LfiError::DegenerateProblem);
        }
        Ok(r.value[0] / r.value[1])
    }
}

impl Problem for IntervalProblem {
    type Param = f64;

    fn prior_density(&self, theta: &f64) -> f64 {
        if self.contains(theta) {
            self.prior_pdf()
        } else {
            0.0
        }
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> f64 {
        self.lo + (self.hi - self.lo) * rng.random::<f64>()
    }

    fn likelihood(&self, theta: &f64) -> f64 {
        self.likelihood.eval(*theta)
    }

    fn contains(&self, theta: &f64) -> bool {
        *theta >= self.lo && *theta <= self.hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn prior_integrates_to_one() {
        let p = IntervalProblem::laplace();
        let r = IntervalProblem::integrator().integrate_scalar(|x| p.prior_density(&x), -40.0, 60.0, &[]);
        assert_relative_eq!(r.value[0], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn laplace_evidence_and_mean() {
        let p = IntervalProblem::laplace();
        let z = (2.0 - (-40.0f64).exp() - (-60.0f64).exp()) / 100.0;
        assert_relative_eq!(p.evidence(), z, max_relative = 1e-12);
        // ∫ θ e^{-|θ|} over [-40, 60] is tiny but not exactly zero.
        let mean = p.posterior_expectation(&TargetFunction::identity()).unwrap();
        assert!(mean.abs() < 1e-10, "{mean}");
    }

    #[test]
    fn linear_indicator_truth() {
        let p = IntervalProblem::linear();
        let v = p.posterior_expectation(&TargetFunction::indicator_below(0.5)).unwrap();
        assert_relative_eq!(v, 0.25, epsilon = 1e-13);
    }

    #[test]
    fn rejects_non_probability_likelihood() {
        assert!(IntervalProblem::with_likelihood(0.0, 2.0, "x", |x| x, vec![]).is_err());
        assert!(IntervalProblem::with_likelihood(0.0, 1.0, "zero", |_| 0.0, vec![]).is_err());
        assert!(IntervalProblem::uniform(1.0, 0.0, LikelihoodShape::Linear).is_err());
    }
}
