use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::discrete::cumulative;
use super::{check_interval, DiscreteProblem, LikelihoodShape, Problem, TargetFunction, PROB_TOL};
use crate::error::{LfiError, Result};
use crate::quadrature::Integrator;

/// One candidate model: its prior probability and a likelihood factor per
/// coordinate. The model likelihood is the product of its factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub prior: f64,
    pub factors: Vec<LikelihoodShape>,
}

/// Model index together with the continuous coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTheta {
    pub model: usize,
    pub coords: Vec<f64>,
}

/// A discrete model index crossed with a box of coordinates, each uniform
/// a priori and independent of the model.
#[derive(Debug, Clone)]
pub struct ModelSelectionProblem {
    bounds: Vec<(f64, f64)>,
    models: Vec<ModelSpec>,
    cumulative_prior: Vec<f64>,
}

impl ModelSelectionProblem {
    pub fn new(bounds: Vec<(f64, f64)>, models: Vec<ModelSpec>) -> Result<Self> {
        if bounds.is_empty() || models.is_empty() {
            return Err(LfiError::InvalidProblem("need at least one model and one coordinate".into()));
        }
        for &(lo, hi) in &bounds {
            check_interval(lo, hi)?;
        }
        let total: f64 = models.iter().map(|m| m.prior).sum();
        if models.iter().any(|m| !(m.prior >= 0.0)) || (total - 1.0).abs() > PROB_TOL {
            return Err(LfiError::InvalidProblem(format!("model priors must be non-negative and sum to 1, got {total}")));
        }
        for (i, m) in models.iter().enumerate() {
            if m.factors.len() != bounds.len() {
                return Err(LfiError::InvalidProblem(format!(
                    "model {i} has {} factors for {} coordinates",
                    m.factors.len(),
                    bounds.len()
                )));
            }
            for (f, &(lo, hi)) in m.factors.iter().zip(&bounds) {
                f.validate(lo, hi)?;
            }
        }
        let cumulative_prior = cumulative(&models.iter().map(|m| m.prior).collect::<Vec<_>>());
        let problem = ModelSelectionProblem { bounds, models, cumulative_prior };
        if problem.evidence() <= 0.0 {
            return Err(LfiError::InvalidProblem("likelihood vanishes on the support".into()));
        }
        Ok(problem)
    }

    /// Two equally likely models over `(θ1, θ2) ∈ [-10, 15]²`: model 1 has
    /// likelihood `exp(-θ1²/2)`, model 2 `exp(-(θ1² + θ2²)/2)`.
    pub fn two_model() -> Self {
        let g = LikelihoodShape::Gaussian { center: 0.0, sd: 1.0 };
        let one = LikelihoodShape::Constant { value: 1.0 };
        Self::new(
            vec![(-10.0, 15.0); 2],
            vec![
                ModelSpec { prior: 0.5, factors: vec![g, one] },
                ModelSpec { prior: 0.5, factors: vec![g, g] },
            ],
        )
        .expect("valid preset")
    }

    pub fn dims(&self) -> usize {
        self.bounds.len()
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn models(&self) -> &[ModelSpec] {
        &self.models
    }

    /// Prior density of the coordinates, identical under every model.
    pub fn coord_prior_pdf(&self) -> f64 {
        self.bounds.iter().map(|(lo, hi)| 1.0 / (hi - lo)).product()
    }

    fn integrator() -> Integrator {
        Integrator::new(20).with_tolerance(0.0, 1e-12).with_max_segments(5_000)
    }

    /// `∫ g(L_c(x)) / (hi - lo) dx` for coordinate `c` of model `m`.
    pub fn factor_integral(&self, m: usize, c: usize, g: impl Fn(f64) -> f64) -> f64 {
        let (lo, hi) = self.bounds[c];
        let factor = self.models[m].factors[c];
        Self::integrator()
            .integrate_scalar(|x| g(factor.eval(x)) / (hi - lo), lo, hi, &factor.breakpoints())
            .value[0]
    }

    /// Prior-weighted likelihood mass of each model, `π_m ∫ p(θ|m) L_m(θ)`.
    pub fn model_evidence(&self) -> Vec<f64> {
        (0..self.n_models())
            .map(|m| {
                self.models[m].prior * (0..self.dims()).map(|c| self.factor_integral(m, c, |l| l)).product::<f64>()
            })
            .collect()
    }

    pub fn evidence(&self) -> f64 {
        self.model_evidence().iter().sum()
    }

    /// Exact posterior probability of each model.
    pub fn posterior_model_probabilities(&self) -> Result<Vec<f64>> {
        let ev = self.model_evidence();
        let z: f64 = ev.iter().sum();
        if z <= 0.0 {
            return Err(LfiError::DegenerateProblem);
        }
        Ok(ev.iter().map(|e| e / z).collect())
    }

    /// Posterior model probabilities as a discrete problem over the model
    /// index, with each model's marginal likelihood as acceptance
    /// probability.
    pub fn model_marginal(&self) -> Result<DiscreteProblem> {
        let ev = self.model_evidence();
        let lik = ev.iter().zip(&self.models).map(|(e, m)| if m.prior > 0.0 { e / m.prior } else { 0.0 }).collect();
        DiscreteProblem::new(
            (0..self.n_models()).map(|m| m as f64).collect(),
            self.models.iter().map(|m| m.prior).collect(),
            lik,
        )
    }

    /// `f̄` by nested adaptive quadrature over the coordinates of each model.
    pub fn posterior_expectation(&self, f: &TargetFunction<ModelTheta>) -> Result<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        let pdf = self.coord_prior_pdf();
        for m in 0..self.n_models() {
            let mut theta = ModelTheta { model: m, coords: vec![0.0; self.dims()] };
            let [a, b] = self.nested(m, 0, &mut theta, f);
            num += self.models[m].prior * pdf * a;
            den += self.models[m].prior * pdf * b;
        }
        if den <= 0.0 {
            return Err(LfiError::DegenerateProblem);
        }
        Ok(num / den)
    }

    fn nested(&self, m: usize, c: usize, theta: &mut ModelTheta, f: &TargetFunction<ModelTheta>) -> [f64; 2] {
        let (lo, hi) = self.bounds[c];
        let factor = self.models[m].factors[c];
        let last = c + 1 == self.dims();
        let integ = Integrator::new(10).with_tolerance(0.0, 1e-10).with_max_segments(500);
        let r = integ.integrate(
            |x| {
                theta.coords[c] = x;
                let l = factor.eval(x);
                if l == 0.0 {
                    return [0.0, 0.0];
                }
                if last {
                    [l * f.eval(theta), l]
                } else {
                    let [a, b] = self.nested(m, c + 1, theta, f);
                    [l * a, l * b]
                }
            },
            lo,
            hi,
            &factor.breakpoints(),
        );
        r.value
    }
}

impl Problem for ModelSelectionProblem {
    type Param = ModelTheta;

    fn prior_density(&self, theta: &ModelTheta) -> f64 {
        if !self.contains(theta) {
            return 0.0;
        }
        self.models[theta.model].prior * self.coord_prior_pdf()
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> ModelTheta {
        let model = DiscreteProblem::sample_index(&self.cumulative_prior, rng);
        let coords = self.bounds.iter().map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>()).collect();
        ModelTheta { model, coords }
    }

    fn likelihood(&self, theta: &ModelTheta) -> f64 {
        self.models[theta.model]
            .factors
            .iter()
            .zip(&theta.coords)
            .map(|(f, &x)| f.eval(x))
            .product()
    }

    fn contains(&self, theta: &ModelTheta) -> bool {
        theta.model < self.n_models()
            && theta.coords.len() == self.dims()
            && theta.coords.iter().zip(&self.bounds).all(|(x, (lo, hi))| x >= lo && x <= hi)
    }
}

impl TargetFunction<ModelTheta> {
    /// `1(M = m)`, with models numbered from zero.
    pub fn model_indicator(m: usize) -> Self {
        Self::new(format!("1(M={})", m + 1), move |t: &ModelTheta| if t.model == m { 1.0 } else { 0.0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::function::erf::erf;

    fn gauss_mass() -> f64 {
        // ∫_{-10}^{15} e^{-x²/2} dx
        (std::f64::consts::PI / 2.0).sqrt() * (erf(15.0 / 2f64.sqrt()) + erf(10.0 / 2f64.sqrt()))
    }

    #[test]
    fn model_one_posterior() {
        let p = ModelSelectionProblem::two_model();
        let post = p.posterior_model_probabilities().unwrap();
        let expected = 1.0 / (1.0 + gauss_mass() / 25.0);
        assert_relative_eq!(post[0], expected, epsilon = 1e-12);
        assert!((post[0] - 0.9089).abs() < 5e-4);
    }

    #[test]
    fn nested_quadrature_agrees_with_factorised_masses() {
        let p = ModelSelectionProblem::two_model();
        let post = p.posterior_model_probabilities().unwrap();
        let v = p.posterior_expectation(&TargetFunction::model_indicator(0)).unwrap();
        assert_relative_eq!(v, post[0], epsilon = 1e-9);
        // E[θ2] under the posterior mixes model 1's flat θ2 (mean 2.5) and
        // model 2's centred θ2.
        let f = TargetFunction::new("theta2", |t: &ModelTheta| t.coords[1]);
        assert_relative_eq!(p.posterior_expectation(&f).unwrap(), post[0] * 2.5, epsilon = 1e-8);
    }

    #[test]
    fn marginal_problem_reproduces_model_posterior() {
        let p = ModelSelectionProblem::two_model();
        let d = p.model_marginal().unwrap();
        let a = d.exact_posterior().unwrap();
        let b = p.posterior_model_probabilities().unwrap();
        assert_relative_eq!(a[0], b[0], epsilon = 1e-12);
    }

    #[test]
    fn factor_count_checked() {
        let g = LikelihoodShape::Gaussian { center: 0.0, sd: 1.0 };
        let bad = ModelSelectionProblem::new(vec![(-1.0, 1.0); 2], vec![ModelSpec { prior: 1.0, factors: vec![g] }]);
        assert!(bad.is_err());
    }
}
