//! Parameter samplers: rejection sampling from the prior, importance
//! sampling from a chosen density, and stratified sampling on one
//! continuous coordinate.

mod grid;
mod mixture;
mod stratified;

use std::fmt;
use std::str::FromStr;

use rand::RngCore;

use crate::error::{LfiError, Result};
use crate::estimators::{Particle, WeightedParticles};
use crate::problems::cumulative;
use crate::problems::{accept, Atom, DiscreteProblem, IntervalProblem, Problem, TargetFunction};
use crate::quadrature::Integrator;

pub use grid::{GridDensity, GRID_CELLS};
pub use mixture::ProductMixtureDensity;
pub use stratified::{stratified_particles, stratified_particles_with, stratified_sampling, stratified_variance_approx, StrataSpec};

/// A normalized sampling density. `pdf` must be the density that `sample`
/// actually draws from, since it is used in the importance weights.
pub trait ImportanceDensity<P>: Send + Sync {
    fn pdf(&self, theta: &P) -> f64;
    fn sample(&self, rng: &mut dyn RngCore) -> P;
    fn label(&self) -> &str;
}

/// The prior of a problem used as a sampling density. Draws consume the
/// random stream exactly like [`rejection_sampling`].
#[derive(Debug, Clone)]
pub struct PriorDensity<'a, Pr> {
    problem: &'a Pr,
}

impl<'a, Pr: Problem> PriorDensity<'a, Pr> {
    pub fn new(problem: &'a Pr) -> Self {
        PriorDensity { problem }
    }
}

impl<Pr: Problem> ImportanceDensity<Pr::Param> for PriorDensity<'_, Pr> {
    fn pdf(&self, theta: &Pr::Param) -> f64 {
        self.problem.prior_density(theta)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Pr::Param {
        self.problem.sample_prior(rng)
    }

    fn label(&self) -> &str {
        "prior"
    }
}

/// A probability vector over the atoms of a discrete problem.
#[derive(Debug, Clone)]
pub struct CategoricalDensity {
    label: String,
    values: Vec<f64>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl CategoricalDensity {
    /// Normalizes `weights` over the atoms of `problem`.
    pub fn new(label: impl Into<String>, problem: &DiscreteProblem, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != problem.k() || weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(LfiError::InvalidInput("categorical weights must be finite, non-negative, one per atom".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(LfiError::DegenerateTarget);
        }
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        Ok(CategoricalDensity {
            label: label.into(),
            values: problem.values().to_vec(),
            cumulative: cumulative(&probs),
            probs,
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }
}

impl ImportanceDensity<Atom> for CategoricalDensity {
    fn pdf(&self, theta: &Atom) -> f64 {
        self.probs.get(theta.index).copied().unwrap_or(0.0)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Atom {
        let index = DiscreteProblem::sample_index(&self.cumulative, rng);
        Atom { index, value: self.values[index] }
    }

    fn label(&self) -> &str {
        &self.label
    }
}

/// Which sampling density to build for a problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DensityKind {
    Prior,
    /// `∝ p L`.
    Posterior,
    /// `∝ p √L`, maximizing the asymptotic effective sample size.
    EssOptimal,
    /// `∝ p √L |f - f̄|`, minimizing the estimator variance.
    Targeted,
    /// `∝ p √(L(1-L)) |f - f̄|`, the base density for stratification.
    StratifiedTargeted,
}

impl DensityKind {
    pub const TOKENS: [&'static str; 5] = ["prior", "posterior", "ess-opt", "targeted", "stratified-targeted"];

    pub fn token(self) -> &'static str {
        match self {
            DensityKind::Prior => "prior",
            DensityKind::Posterior => "posterior",
            DensityKind::EssOptimal => "ess-opt",
            DensityKind::Targeted => "targeted",
            DensityKind::StratifiedTargeted => "stratified-targeted",
        }
    }

    /// Unnormalized density in terms of the likelihood and `|f - f̄|`.
    fn shape(self, lik: f64, dev: f64) -> f64 {
        match self {
            DensityKind::Prior => 1.0,
            DensityKind::Posterior => lik,
            DensityKind::EssOptimal => lik.sqrt(),
            DensityKind::Targeted => lik.sqrt() * dev,
            DensityKind::StratifiedTargeted => (lik * (1.0 - lik)).max(0.0).sqrt() * dev,
        }
    }
}

impl fmt::Display for DensityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for DensityKind {
    type Err = LfiError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "prior" => DensityKind::Prior,
            "posterior" => DensityKind::Posterior,
            "ess-opt" => DensityKind::EssOptimal,
            "targeted" => DensityKind::Targeted,
            "stratified-targeted" => DensityKind::StratifiedTargeted,
            _ => return Err(LfiError::UnknownToken { what: "density", token: s.to_string() }),
        })
    }
}

/// A problem for which the lab can build sampling densities and evaluate
/// their exact asymptotic variance.
pub trait SamplingSetting: Problem {
    type Density: ImportanceDensity<Self::Param>;

    /// Exact posterior expectation of `f`.
    fn truth(&self, f: &TargetFunction<Self::Param>) -> Result<f64>;

    /// Builds the density of the given kind. `fbar` is the centering value
    /// used by the targeted kinds (the truth or a pilot estimate).
    fn build_density(&self, kind: DensityKind, f: &TargetFunction<Self::Param>, fbar: f64) -> Result<Self::Density>;

    /// `(1 / (N P²)) ∫ (f - f̄)² p² L / q`, the large-N variance of the
    /// self-normalized importance estimate with `n` draws from `q`.
    fn sampling_variance(&self, q: &Self::Density, f: &TargetFunction<Self::Param>, n: usize) -> Result<f64>;
}

/// Free-function form of [`SamplingSetting::sampling_variance`].
pub fn independent_sampling_variance<S: SamplingSetting>(
    problem: &S,
    q: &S::Density,
    f: &TargetFunction<S::Param>,
    n: usize,
) -> Result<f64> {
    problem.sampling_variance(q, f, n)
}

/// Draws `n` parameters from the prior and simulates each once. Accepted
/// draws get weight 1.
pub fn rejection_sampling<P: Problem + ?Sized, R: RngCore>(
    problem: &P,
    n: usize,
    rng: &mut R,
) -> Result<WeightedParticles<P::Param>> {
    if n == 0 {
        return Err(LfiError::InvalidInput("need at least one simulation".into()));
    }
    let entries = (0..n)
        .map(|_| {
            let theta = problem.sample_prior(rng);
            let accepted = accept(problem.likelihood(&theta), rng);
            Particle { theta, weight: if accepted { 1.0 } else { 0.0 }, round: 0, accepted }
        })
        .collect();
    WeightedParticles::new(entries)
}

/// Draws `n` parameters from `q` and simulates each once. Accepted draws
/// get weight `p(θ) / q(θ)`.
pub fn importance_sampling<P: Problem + ?Sized, R: RngCore>(
    problem: &P,
    q: &dyn ImportanceDensity<P::Param>,
    n: usize,
    rng: &mut R,
) -> Result<WeightedParticles<P::Param>> {
    if n == 0 {
        return Err(LfiError::InvalidInput("need at least one simulation".into()));
    }
    let mut entries = Vec::with_capacity(n);
    for _ in 0..n {
        let theta = q.sample(rng);
        let density = q.pdf(&theta);
        if !(density > 0.0) {
            return Err(LfiError::ZeroProposalDensity);
        }
        if !problem.contains(&theta) {
            return Err(LfiError::OutsideSupport(format!("{theta:?}")));
        }
        let accepted = accept(problem.likelihood(&theta), rng);
        let weight = if accepted { problem.prior_density(&theta) / density } else { 0.0 };
        entries.push(Particle { theta, weight, round: 0, accepted });
    }
    WeightedParticles::new(entries)
}

/// Convenience for the variance-optimal density on an interval problem.
pub fn targeted_density(problem: &IntervalProblem, f: &TargetFunction<f64>, fbar: f64) -> Result<GridDensity> {
    problem.build_density(DensityKind::Targeted, f, fbar)
}

/// Convenience for the ESS-optimal density `∝ p √L` on an interval problem.
pub fn ess_optimal_density(problem: &IntervalProblem) -> Result<GridDensity> {
    problem.build_density(DensityKind::EssOptimal, &TargetFunction::constant(0.0), 0.0)
}

fn check_n(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(LfiError::InvalidInput("need at least one simulation".into()));
    }
    Ok(n as f64)
}

impl SamplingSetting for DiscreteProblem {
    type Density = CategoricalDensity;

    fn truth(&self, f: &TargetFunction<Atom>) -> Result<f64> {
        self.posterior_expectation(f)
    }

    fn build_density(&self, kind: DensityKind, f: &TargetFunction<Atom>, fbar: f64) -> Result<CategoricalDensity> {
        let fv = self.target_values(f);
        let w = self
            .prior()
            .iter()
            .zip(self.likelihood_values())
            .zip(&fv)
            .map(|((pi, p), fi)| pi * kind.shape(*p, (fi - fbar).abs()))
            .collect();
        CategoricalDensity::new(kind.token(), self, w)
    }

    fn sampling_variance(&self, q: &CategoricalDensity, f: &TargetFunction<Atom>, n: usize) -> Result<f64> {
        let n = check_n(n)?;
        let fbar = self.truth(f)?;
        let z = self.evidence();
        let mut sum = 0.0;
        for a in self.atoms() {
            let num = (f.eval(&a) - fbar).powi(2) * self.prior()[a.index].powi(2) * self.likelihood_values()[a.index];
            if num > 0.0 {
                let qi = q.pdf(&a);
                if qi <= 0.0 {
                    return Err(LfiError::DivergentIntegral(format!("q vanishes at atom {}", a.index + 1)));
                }
                sum += num / qi;
            }
        }
        Ok(sum / (n * z * z))
    }
}

impl SamplingSetting for IntervalProblem {
    type Density = GridDensity;

    fn truth(&self, f: &TargetFunction<f64>) -> Result<f64> {
        self.posterior_expectation(f)
    }

    fn build_density(&self, kind: DensityKind, f: &TargetFunction<f64>, fbar: f64) -> Result<GridDensity> {
        let lik = self.likelihood_fn();
        GridDensity::from_fn(
            kind.token(),
            self.lo(),
            self.hi(),
            GRID_CELLS,
            |x| kind.shape(lik.eval(x), (f.eval(&x) - fbar).abs()),
            &self.breakpoints_with(f.breakpoints()),
        )
    }

    fn sampling_variance(&self, q: &GridDensity, f: &TargetFunction<f64>, n: usize) -> Result<f64> {
        let n = check_n(n)?;
        if q.lo() > self.lo() || q.hi() < self.hi() {
            return Err(LfiError::DivergentIntegral("q does not cover the prior support".into()));
        }
        let fbar = self.truth(f)?;
        let z = self.evidence();
        let pdf = self.prior_pdf();
        let lik = self.likelihood_fn();
        let mut divergent = false;
        let mut bps = q.edges();
        bps.extend(self.breakpoints_with(f.breakpoints()));
        let r = Integrator::new(7).with_tolerance(0.0, 1e-9).with_max_segments(4 * bps.len() + 1000).integrate_scalar(
            |x| {
                let num = (f.eval(&x) - fbar).powi(2) * pdf * pdf * lik.eval(x);
                if num <= 0.0 {
                    return 0.0;
                }
                let qx = q.pdf(&x);
                if qx <= 0.0 {
                    divergent = true;
                    return 0.0;
                }
                num / qx
            },
            self.lo(),
            self.hi(),
            &bps,
        );
        if divergent || !r.value[0].is_finite() {
            return Err(LfiError::DivergentIntegral(format!("{} has zero density where the integrand is positive", q.label())));
        }
        Ok(r.value[0] / (n * z * z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::weighted_expectation;
    use crate::problems::{LikelihoodShape, ModelSelectionProblem};
    use crate::rng::seeded;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::RngCore;

    #[test]
    fn prior_importance_matches_rejection_bitwise() {
        let p = IntervalProblem::laplace();
        let a = rejection_sampling(&p, 2000, &mut seeded(5)).unwrap();
        let b = importance_sampling(&p, &PriorDensity::new(&p), 2000, &mut seeded(5)).unwrap();
        assert_eq!(a.entries().len(), b.entries().len());
        for (x, y) in a.entries().iter().zip(b.entries()) {
            assert_eq!(x.theta, y.theta);
            assert_eq!(x.accepted, y.accepted);
            if x.accepted {
                assert_relative_eq!(y.weight, 1.0, epsilon = 1e-15);
            }
        }
        let m = ModelSelectionProblem::two_model();
        let a = rejection_sampling(&m, 500, &mut seeded(6)).unwrap();
        let b = importance_sampling(&m, &PriorDensity::new(&m), 500, &mut seeded(6)).unwrap();
        assert!(a.entries().iter().zip(b.entries()).all(|(x, y)| x.theta == y.theta && x.accepted == y.accepted));
    }

    #[test]
    fn posterior_sampling_weights_are_inverse_likelihood() {
        let p = DiscreteProblem::ten_point();
        let q = p.build_density(DensityKind::Posterior, &TargetFunction::value(), 0.0).unwrap();
        let parts = importance_sampling(&p, &q, 5000, &mut seeded(9)).unwrap();
        let z = p.evidence();
        for e in parts.accepted() {
            assert_relative_eq!(e.weight, z / p.likelihood_values()[e.theta.index], max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_density_draw_is_an_error() {
        struct Bad;
        impl ImportanceDensity<f64> for Bad {
            fn pdf(&self, _: &f64) -> f64 {
                0.0
            }
            fn sample(&self, _: &mut dyn RngCore) -> f64 {
                0.5
            }
            fn label(&self) -> &str {
                "bad"
            }
        }
        let p = IntervalProblem::linear();
        assert!(matches!(importance_sampling(&p, &Bad, 3, &mut seeded(1)), Err(LfiError::ZeroProposalDensity)));
    }

    #[test]
    fn laplace_variances_match_closed_forms() {
        // Uniform prior on [-40, 60], L = e^{-|θ|}, f = θ. The ESS-optimal
        // density gives 32/N and the targeted density 16/N.
        let p = IntervalProblem::laplace();
        let f = TargetFunction::identity();
        let fbar = p.truth(&f).unwrap();
        assert!(fbar.abs() < 1e-9);
        let ess = ess_optimal_density(&p).unwrap();
        let tgt = targeted_density(&p, &f, fbar).unwrap();
        let v_ess = p.sampling_variance(&ess, &f, 1).unwrap();
        let v_tgt = p.sampling_variance(&tgt, &f, 1).unwrap();
        assert_relative_eq!(v_ess, 32.0, max_relative = 1e-3);
        assert_relative_eq!(v_tgt, 16.0, max_relative = 1e-3);
        let prior = p.build_density(DensityKind::Prior, &f, fbar).unwrap();
        // Prior sampling: ∫ θ² e^{-|θ|} / 100 / P² = 4 / 100 / 4e-4 = 100.
        assert_relative_eq!(p.sampling_variance(&prior, &f, 10).unwrap(), 100.0 / 10.0, max_relative = 1e-6);
    }

    #[test]
    fn credible_interval_indicator_variance() {
        // With prior or posterior sampling a 50% credible-interval indicator
        // has variance 1 / (4 N p(x*)).
        let shape = LikelihoodShape::Gaussian { center: 0.0, sd: 1.0 };
        let p = IntervalProblem::uniform(-10.0, 10.0, shape).unwrap();
        let f = TargetFunction::indicator_below(0.0);
        let z = p.evidence();
        for kind in [DensityKind::Prior, DensityKind::Posterior] {
            let q = p.build_density(kind, &f, 0.5).unwrap();
            let v = p.sampling_variance(&q, &f, 100).unwrap();
            assert_relative_eq!(v, 1.0 / (4.0 * 100.0 * z), max_relative = 1e-4);
        }
    }

    #[test]
    fn targeted_constant_target_is_degenerate() {
        let p = IntervalProblem::linear();
        let r = p.build_density(DensityKind::Targeted, &TargetFunction::constant(1.0), 1.0);
        assert!(matches!(r, Err(LfiError::DegenerateTarget)));
    }

    #[test]
    fn discrete_targeted_density_is_optimal() {
        let p = DiscreteProblem::ten_point();
        let f = TargetFunction::value();
        let fbar = p.truth(&f).unwrap();
        let best = p.sampling_variance(&p.build_density(DensityKind::Targeted, &f, fbar).unwrap(), &f, 1).unwrap();
        for kind in [DensityKind::Prior, DensityKind::Posterior, DensityKind::EssOptimal] {
            let v = p.sampling_variance(&p.build_density(kind, &f, fbar).unwrap(), &f, 1).unwrap();
            assert!(v >= best * (1.0 - 1e-12), "{kind}: {v} < {best}");
        }
    }

    #[test]
    fn density_tokens_round_trip() {
        for t in DensityKind::TOKENS {
            assert_eq!(t.parse::<DensityKind>().unwrap().token(), t);
        }
        assert!("wat".parse::<DensityKind>().is_err());
    }

    #[test]
    fn importance_estimate_is_consistent() {
        let p = IntervalProblem::linear();
        let f = TargetFunction::indicator_below(0.5);
        let q = p.build_density(DensityKind::Targeted, &f, 0.25).unwrap();
        let parts = importance_sampling(&p, &q, 200_000, &mut seeded(3)).unwrap();
        let est = weighted_expectation(&parts, &f).unwrap();
        assert!((est - 0.25).abs() < 0.005, "{est}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn targeted_is_no_worse_than_posterior(c in -3.0f64..3.0, sd in 0.5f64..3.0) {
            let shape = LikelihoodShape::Gaussian { center: c, sd };
            let p = IntervalProblem::uniform(-10.0, 10.0, shape).unwrap();
            let f = TargetFunction::identity();
            let fbar = p.truth(&f).unwrap();
            let t = p.sampling_variance(&p.build_density(DensityKind::Targeted, &f, fbar).unwrap(), &f, 1).unwrap();
            let post = p.sampling_variance(&p.build_density(DensityKind::Posterior, &f, fbar).unwrap(), &f, 1).unwrap();
            prop_assert!(t <= post * (1.0 + 1e-6));
        }

        #[test]
        fn weights_are_finite_and_non_negative(seed in 0u64..1000) {
            let p = IntervalProblem::laplace();
            let q = ess_optimal_density(&p).unwrap();
            let parts = importance_sampling(&p, &q, 200, &mut seeded(seed)).unwrap();
            prop_assert!(parts.entries().iter().all(|e| e.weight.is_finite() && e.weight >= 0.0));
            prop_assert!(parts.entries().iter().all(|e| e.accepted || e.weight == 0.0));
        }
    }
}
