use rand::RngCore;

use super::{check_n, DensityKind, GridDensity, ImportanceDensity, SamplingSetting, GRID_CELLS};
use crate::error::{LfiError, Result};
use crate::problems::{cumulative, DiscreteProblem, ModelSelectionProblem, ModelTheta, TargetFunction};
use crate::quadrature::Integrator;

/// A mixture over models whose components are products of one-dimensional
/// grid densities, one per coordinate. Used for model-selection problems
/// whose likelihood factorizes over coordinates.
#[derive(Debug, Clone)]
pub struct ProductMixtureDensity {
    label: String,
    masses: Vec<f64>,
    cumulative: Vec<f64>,
    grids: Vec<Vec<GridDensity>>,
}

impl ProductMixtureDensity {
    pub fn new(label: impl Into<String>, masses: Vec<f64>, grids: Vec<Vec<GridDensity>>) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if masses.len() != grids.len() || masses.iter().any(|m| !(*m >= 0.0 && m.is_finite())) || total <= 0.0 {
            return Err(LfiError::InvalidInput("mixture masses must be non-negative with positive sum".into()));
        }
        let masses: Vec<f64> = masses.iter().map(|m| m / total).collect();
        Ok(ProductMixtureDensity { label: label.into(), cumulative: cumulative(&masses), masses, grids })
    }

    /// Normalized model masses.
    pub fn model_masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn coordinate_density(&self, model: usize, coord: usize) -> &GridDensity {
        &self.grids[model][coord]
    }
}

impl ImportanceDensity<ModelTheta> for ProductMixtureDensity {
    fn pdf(&self, theta: &ModelTheta) -> f64 {
        let Some(grids) = self.grids.get(theta.model) else {
            return 0.0;
        };
        if grids.len() != theta.coords.len() {
            return 0.0;
        }
        self.masses[theta.model] * grids.iter().zip(&theta.coords).map(|(g, x)| g.pdf(x)).product::<f64>()
    }

    fn sample(&self, rng: &mut dyn RngCore) -> ModelTheta {
        let model = DiscreteProblem::sample_index(&self.cumulative, rng);
        let coords = self.grids[model].iter().map(|g| g.sample(rng)).collect();
        ModelTheta { model, coords }
    }

    fn label(&self) -> &str {
        &self.label
    }
}

/// Value of `f` on each model, provided `f` ignores the coordinates. The
/// mixture densities only separate for such targets.
fn model_values(problem: &ModelSelectionProblem, f: &TargetFunction<ModelTheta>) -> Result<Vec<f64>> {
    const PROBES: [f64; 5] = [0.0, 0.13, 0.5, 0.71, 1.0];
    (0..problem.n_models())
        .map(|m| {
            let at = |t: &[f64]| {
                let coords = problem.bounds().iter().zip(t).map(|((lo, hi), u)| lo + (hi - lo) * u).collect();
                f.eval(&ModelTheta { model: m, coords })
            };
            let d = problem.dims();
            let base = at(&vec![0.5; d]);
            for (i, &u) in PROBES.iter().enumerate() {
                let t: Vec<f64> = (0..d).map(|c| PROBES[(i + 2 * c) % PROBES.len()]).collect();
                if at(&t) != base || at(&vec![u; d]) != base {
                    return Err(LfiError::InvalidInput(format!(
                        "target {} depends on the coordinates; model-selection densities need a model-only target",
                        f.label()
                    )));
                }
            }
            Ok(base)
        })
        .collect()
}

impl SamplingSetting for ModelSelectionProblem {
    type Density = ProductMixtureDensity;

    fn truth(&self, f: &TargetFunction<ModelTheta>) -> Result<f64> {
        self.posterior_expectation(f)
    }

    fn build_density(&self, kind: DensityKind, f: &TargetFunction<ModelTheta>, fbar: f64) -> Result<ProductMixtureDensity> {
        let coord_shape = |l: f64| match kind {
            DensityKind::Prior => 1.0,
            DensityKind::Posterior => l,
            _ => l.sqrt(),
        };
        if kind == DensityKind::StratifiedTargeted {
            return Err(LfiError::InvalidInput("stratified-targeted does not factorize over coordinates".into()));
        }
        let fv = if kind == DensityKind::Targeted { Some(model_values(self, f)?) } else { None };
        let mut masses = Vec::with_capacity(self.n_models());
        let mut grids = Vec::with_capacity(self.n_models());
        for (m, spec) in self.models().iter().enumerate() {
            let mut mass = spec.prior;
            if let Some(fv) = &fv {
                mass *= (fv[m] - fbar).abs();
            }
            let mut row = Vec::with_capacity(self.dims());
            for (c, factor) in spec.factors.iter().enumerate() {
                mass *= self.factor_integral(m, c, coord_shape);
                let (lo, hi) = self.bounds()[c];
                row.push(GridDensity::from_fn(
                    kind.token(),
                    lo,
                    hi,
                    GRID_CELLS,
                    |x| coord_shape(factor.eval(x)),
                    &factor.breakpoints(),
                )?);
            }
            masses.push(mass);
            grids.push(row);
        }
        if masses.iter().all(|m| *m <= 0.0) {
            return Err(LfiError::DegenerateTarget);
        }
        ProductMixtureDensity::new(kind.token(), masses, grids)
    }

    fn sampling_variance(&self, q: &ProductMixtureDensity, f: &TargetFunction<ModelTheta>, n: usize) -> Result<f64> {
        let n = check_n(n)?;
        let fv = model_values(self, f)?;
        let fbar = self.truth(f)?;
        let z = self.evidence();
        let mut total = 0.0;
        for (m, spec) in self.models().iter().enumerate() {
            let lead = (fv[m] - fbar).powi(2) * spec.prior * spec.prior;
            if lead <= 0.0 {
                continue;
            }
            let w = q.masses[m];
            if w <= 0.0 {
                return Err(LfiError::DivergentIntegral(format!("model {} has zero sampling mass", m + 1)));
            }
            let mut prod = lead / w;
            for (c, factor) in spec.factors.iter().enumerate() {
                let (lo, hi) = self.bounds()[c];
                let g = &q.grids[m][c];
                let mut divergent = false;
                let mut bps = g.edges();
                bps.extend(factor.breakpoints());
                let r = Integrator::new(7).with_tolerance(0.0, 1e-9).with_max_segments(4 * bps.len() + 1000).integrate_scalar(
                    |x| {
                        let l = factor.eval(x);
                        if l <= 0.0 {
                            return 0.0;
                        }
                        let qx = g.pdf(&x);
                        if qx <= 0.0 {
                            divergent = true;
                            return 0.0;
                        }
                        l / ((hi - lo) * (hi - lo) * qx)
                    },
                    lo,
                    hi,
                    &bps,
                );
                if divergent || !r.value[0].is_finite() {
                    return Err(LfiError::DivergentIntegral(format!("coordinate {} of model {}", c + 1, m + 1)));
                }
                prod *= r.value[0];
            }
            total += prod;
        }
        Ok(total / (n * z * z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::weighted_expectation;
    use crate::samplers::importance_sampling;
    use crate::rng::seeded;
    use approx::assert_relative_eq;
    use statrs::function::erf::erf;

    /// `∫_{-10}^{15} e^{-x²/4} dx`, the mass of `√L` for a unit Gaussian factor.
    fn sqrt_gauss_mass() -> f64 {
        let s = std::f64::consts::PI.sqrt();
        s * (erf(7.5) + erf(5.0))
    }

    #[test]
    fn model_masses_match_closed_form() {
        let p = ModelSelectionProblem::two_model();
        let f = TargetFunction::model_indicator(0);
        let fbar = p.truth(&f).unwrap();
        let a = sqrt_gauss_mass() / 25.0;
        // ESS-optimal: model 1 gets a·1, model 2 gets a².
        let ess = p.build_density(DensityKind::EssOptimal, &f, fbar).unwrap();
        assert_relative_eq!(ess.model_masses()[0], 1.0 / (1.0 + a), max_relative = 1e-9);
        // Targeted: |f - f̄| is 1 - f̄ on model 1 and f̄ on model 2.
        let tgt = p.build_density(DensityKind::Targeted, &f, fbar).unwrap();
        let w1 = (1.0 - fbar) * a;
        let w2 = fbar * a * a;
        assert_relative_eq!(tgt.model_masses()[0], w1 / (w1 + w2), max_relative = 1e-9);
    }

    #[test]
    fn coordinate_dependent_target_is_rejected() {
        let p = ModelSelectionProblem::two_model();
        let f = TargetFunction::new("theta1", |t: &ModelTheta| t.coords[0]);
        assert!(matches!(p.build_density(DensityKind::Targeted, &f, 0.0), Err(LfiError::InvalidInput(_))));
        let q = p.build_density(DensityKind::Prior, &f, 0.0).unwrap();
        assert!(p.sampling_variance(&q, &f, 1).is_err());
        assert!(p.build_density(DensityKind::StratifiedTargeted, &TargetFunction::model_indicator(0), 0.5).is_err());
    }

    #[test]
    fn prior_variance_is_bernoulli_over_evidence() {
        // Prior sampling: Σ_m π_m (f_m - f̄)² Z_m / Z² with Z_m the model
        // evidence, which for an indicator is f̄(1 - f̄) / Z.
        let p = ModelSelectionProblem::two_model();
        let f = TargetFunction::model_indicator(0);
        let fbar = p.truth(&f).unwrap();
        let q = p.build_density(DensityKind::Prior, &f, fbar).unwrap();
        let v = p.sampling_variance(&q, &f, 1).unwrap();
        assert_relative_eq!(v, fbar * (1.0 - fbar) / p.evidence(), max_relative = 1e-6);
    }

    #[test]
    fn mixture_importance_estimate_is_consistent() {
        let p = ModelSelectionProblem::two_model();
        let f = TargetFunction::model_indicator(0);
        let fbar = p.truth(&f).unwrap();
        let q = p.build_density(DensityKind::Targeted, &f, fbar).unwrap();
        let parts = importance_sampling(&p, &q, 100_000, &mut seeded(12)).unwrap();
        let est = weighted_expectation(&parts, &f).unwrap();
        assert!((est - fbar).abs() < 0.01, "{est} vs {fbar}");
    }
}
