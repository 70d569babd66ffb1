use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{LfiError, Result};
use crate::problems::Problem;
use crate::quadrature::Integrator;
use crate::rng::StreamKey;

/// `J⁻¹ J⁻ᵀ` for the map `u = J (θ - μ)`.
const SHAPE: [[f64; 2]; 2] = [[5.0, 2.0], [2.0, 1.0]];

/// Posterior mode and center.
pub const ELLIPSOID_CENTER: [f64; 2] = [8.0, 4.0];

/// Two parameters with uniform priors on a square; one simulation yields
/// `y ~ N((θ1 - 2θ2)² + (θ2 - 4)², 1)` and the data are `y* = 0`, observed
/// through the tolerance `|y| < ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidProblem {
    pub lo: f64,
    pub hi: f64,
    pub epsilon: f64,
}

impl Default for EllipsoidProblem {
    fn default() -> Self {
        EllipsoidProblem { lo: -50.0, hi: 50.0, epsilon: 1.0 }
    }
}

impl EllipsoidProblem {
    pub fn new(lo: f64, hi: f64, epsilon: f64) -> Result<Self> {
        if !(lo < hi && lo.is_finite() && hi.is_finite()) || !(epsilon > 0.0) {
            return Err(LfiError::InvalidProblem(format!("bad ellipsoid problem [{lo}, {hi}], ε = {epsilon}")));
        }
        Ok(EllipsoidProblem { lo, hi, epsilon })
    }

    pub fn with_epsilon(self, epsilon: f64) -> Self {
        EllipsoidProblem { epsilon, ..self }
    }

    /// Mean of the simulated statistic, `(θ1 - 2θ2)² + (θ2 - 4)²`.
    pub fn discrepancy_mean(theta: &[f64; 2]) -> f64 {
        let u1 = theta[0] - 2.0 * theta[1];
        let u2 = theta[1] - 4.0;
        u1 * u1 + u2 * u2
    }

    /// One simulation, returning `|y|`.
    pub fn simulate_discrepancy<R: Rng + ?Sized>(&self, theta: &[f64; 2], rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        (Self::discrepancy_mean(theta) + z).abs()
    }

    /// `P(|y| < ε | θ) = Φ(ε - m) - Φ(-ε - m)`.
    pub fn acceptance_probability(epsilon: f64, theta: &[f64; 2]) -> f64 {
        let m = Self::discrepancy_mean(theta);
        let n = std_normal();
        (n.cdf(epsilon - m) - n.cdf(-epsilon - m)).max(0.0)
    }

    pub fn prior_pdf(&self) -> f64 {
        let w = self.hi - self.lo;
        1.0 / (w * w)
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

impl Problem for EllipsoidProblem {
    type Param = [f64; 2];

    fn prior_density(&self, theta: &[f64; 2]) -> f64 {
        if self.contains(theta) {
            self.prior_pdf()
        } else {
            0.0
        }
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> [f64; 2] {
        let w = self.hi - self.lo;
        [self.lo + w * rng.random::<f64>(), self.lo + w * rng.random::<f64>()]
    }

    fn likelihood(&self, theta: &[f64; 2]) -> f64 {
        Self::acceptance_probability(self.epsilon, theta)
    }

    fn contains(&self, theta: &[f64; 2]) -> bool {
        theta.iter().all(|x| *x >= self.lo && *x <= self.hi)
    }
}

/// Exact moments of the posterior given `y = 0` exactly, treating the prior
/// as flat on the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidPosterior {
    pub mean: [f64; 2],
    pub covariance: [[f64; 2]; 2],
    /// `∫ exp(-m(θ)²/2) dθ`.
    pub normalizer: f64,
}

pub fn ellipsoid_true_posterior() -> EllipsoidPosterior {
    let c = (2.0 * PI).powf(-0.5);
    EllipsoidPosterior {
        mean: ELLIPSOID_CENTER,
        covariance: scaled_shape(c),
        normalizer: (PI.powi(3) / 2.0).sqrt(),
    }
}

fn scaled_shape(c: f64) -> [[f64; 2]; 2] {
    [[c * SHAPE[0][0], c * SHAPE[0][1]], [c * SHAPE[1][0], c * SHAPE[1][1]]]
}

/// Covariance of the ε-tolerance ABC posterior for a flat prior on the
/// plane. With `s = m(θ)` and `g(s) = Φ(ε - s) - Φ(-ε - s)` it is
/// `½ ∫ s g / ∫ g` times `J⁻¹ J⁻ᵀ`; `∫₀^∞ g = ε`. Valid while the
/// tolerance region sits well inside the prior square.
pub fn abc_covariance_exact(epsilon: f64) -> Result<[[f64; 2]; 2]> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(LfiError::InvalidInput(format!("ε = {epsilon} must be positive")));
    }
    let n = std_normal();
    let r = Integrator::new(10).with_tolerance(0.0, 1e-12).integrate(
        |s| {
            let g = n.cdf(epsilon - s) - n.cdf(-epsilon - s);
            [s * g, g]
        },
        0.0,
        epsilon + 40.0,
        &[epsilon],
    );
    Ok(scaled_shape(0.5 * r.value[0] / r.value[1]))
}

/// Self-normalized importance-sampling moments with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloMoments {
    pub mean: [f64; 2],
    pub covariance: [[f64; 2]; 2],
    pub mean_se: [f64; 2],
    pub covariance_se: [[f64; 2]; 2],
    pub draws: u64,
    pub seed: u64,
}

const CHUNK: u64 = 1 << 18;
const SLOTS: usize = 11;

/// Prior draws weighted by `weight(θ)`, split into fixed chunks with their
/// own streams so the result does not depend on the thread count.
fn weighted_prior_moments(
    problem: &EllipsoidProblem,
    draws: u64,
    seed: u64,
    tag: &str,
    weight: impl Fn(&[f64; 2]) -> f64 + Sync,
) -> Result<MonteCarloMoments> {
    if draws == 0 {
        return Err(LfiError::InvalidInput("need at least one draw".into()));
    }
    let chunks = draws.div_ceil(CHUNK);
    // Each pass regenerates the same draws: the first finds the mean, the
    // second centred second moments and standard errors.
    let pass = |acc: &(dyn Fn(&mut [f64; SLOTS], [f64; 2], f64) + Sync)| -> [f64; SLOTS] {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = StreamKey::new(seed, tag, c, 0).rng();
                let n = CHUNK.min(draws - c * CHUNK);
                let mut s = [0.0; SLOTS];
                for _ in 0..n {
                    let t = problem.sample_prior(&mut rng);
                    let w = weight(&t);
                    if w > 0.0 {
                        acc(&mut s, t, w);
                    }
                }
                s
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold([0.0; SLOTS], |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            })
    };
    let first = pass(&|s, t, w| {
        s[0] += w;
        s[1] += w * t[0];
        s[2] += w * t[1];
    });
    if !(first[0] > 0.0) {
        return Err(LfiError::ZeroTotalWeight);
    }
    let mean = [first[1] / first[0], first[2] / first[0]];
    // Slots: Σw, Σw g_ij, Σw² g_ij, Σw² g_ij², Σw² for g = (d0², d0 d1, d1²).
    let s = pass(&|s, t, w| {
        let d = [t[0] - mean[0], t[1] - mean[1]];
        let g = [d[0] * d[0], d[0] * d[1], d[1] * d[1]];
        s[0] += w;
        for k in 0..3 {
            s[1 + k] += w * g[k];
            s[4 + k] += w * w * g[k];
            s[7 + k] += w * w * g[k] * g[k];
        }
        s[10] += w * w;
    });
    let total = s[0];
    let ghat = [s[1] / total, s[2] / total, s[3] / total];
    // SE of Σ w g / Σ w is √(Σ w² (g - ĝ)²) / Σ w.
    let se = |k: usize| (s[7 + k] - 2.0 * ghat[k] * s[4 + k] + ghat[k] * ghat[k] * s[10]).max(0.0).sqrt() / total;
    Ok(MonteCarloMoments {
        mean,
        covariance: [[ghat[0], ghat[1]], [ghat[1], ghat[2]]],
        mean_se: [s[4].sqrt() / total, s[6].sqrt() / total],
        covariance_se: [[se(0), se(1)], [se(1), se(2)]],
        draws,
        seed,
    })
}

/// Brute-force check of [`ellipsoid_true_posterior`]: prior draws weighted
/// by the exact likelihood `exp(-m(θ)²/2)`.
pub fn brute_force_posterior(problem: &EllipsoidProblem, draws: u64, seed: u64) -> Result<MonteCarloMoments> {
    weighted_prior_moments(problem, draws, seed, "ellipsoid-posterior", |t| {
        let m = EllipsoidProblem::discrepancy_mean(t);
        (-0.5 * m * m).exp()
    })
}

/// ABC-posterior moments at tolerance `problem.epsilon` by importance
/// sampling from the prior with weights `P(|y| < ε | θ)`.
pub fn abc_covariance_reference(problem: &EllipsoidProblem, draws: u64, seed: u64) -> Result<MonteCarloMoments> {
    let eps = problem.epsilon;
    weighted_prior_moments(problem, draws, seed, "ellipsoid-abc", move |t| {
        EllipsoidProblem::acceptance_probability(eps, t)
    })
}

/// JSON sidecar caching [`abc_covariance_reference`] results by ε.
#[derive(Debug, Clone)]
pub struct AbcCovarianceCache {
    path: PathBuf,
}

impl AbcCovarianceCache {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        AbcCovarianceCache { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn load(&self) -> Result<BTreeMap<String, MonteCarloMoments>> {
        if !self.path.exists() {
            return Ok(BTreeMap::new());
        }
        let text = std::fs::read_to_string(&self.path).map_err(|e| LfiError::io(&self.path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Returns the cached entry for `problem.epsilon` if it was computed
    /// with the same draw count and seed, otherwise computes and stores it.
    pub fn get_or_compute(&self, problem: &EllipsoidProblem, draws: u64, seed: u64) -> Result<MonteCarloMoments> {
        let key = format!("{}", problem.epsilon);
        let mut map = self.load()?;
        if let Some(hit) = map.get(&key).filter(|m| m.draws == draws && m.seed == seed) {
            return Ok(*hit);
        }
        let fresh = abc_covariance_reference(problem, draws, seed)?;
        map.insert(key, fresh);
        let text = serde_json::to_string_pretty(&map)?;
        std::fs::write(&self.path, text).map_err(|e| LfiError::io(&self.path, e))?;
        Ok(fresh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn closed_form_values() {
        let p = ellipsoid_true_posterior();
        assert_eq!(p.mean, [8.0, 4.0]);
        assert_relative_eq!(p.covariance[1][1], 0.398_942_280_401_432_7, epsilon = 1e-15);
        assert_relative_eq!(p.covariance[0][0], 1.994_711_402_007_163_5, epsilon = 1e-14);
        assert_relative_eq!(p.covariance[0][1], 0.797_884_560_802_865_4, epsilon = 1e-14);
        assert_relative_eq!(p.normalizer, 3.937_402_486_430_582, epsilon = 1e-12);
    }

    #[test]
    fn exact_abc_covariance_matches_quadrature_oracle() {
        // Factors ½∫s g / ∫g from an independent SciPy quadrature.
        for (eps, c) in [(1.0, 0.462_330_108_328_114_6), (2.0, 0.623_557_818_321_371_4), (8.0, 2.031_25)] {
            let cov = abc_covariance_exact(eps).unwrap();
            assert_relative_eq!(cov[1][1], c, max_relative = 1e-9);
            assert_relative_eq!(cov[0][0], 5.0 * c, max_relative = 1e-9);
        }
    }

    #[test]
    fn abc_covariance_shrinks_monotonically_toward_truth() {
        let truth = ellipsoid_true_posterior().covariance[1][1];
        let mut prev = f64::INFINITY;
        for eps in [8.0, 4.0, 2.0, 1.0, 0.5] {
            let c = abc_covariance_exact(eps).unwrap()[1][1];
            assert!(c < prev && c > truth);
            prev = c;
        }
    }

    #[test]
    fn huge_tolerance_gives_prior_covariance() {
        let p = EllipsoidProblem::default().with_epsilon(1e7);
        let m = abc_covariance_reference(&p, 200_000, 1).unwrap();
        assert!((m.covariance[0][0] - 10_000.0 / 12.0).abs() < 10.0, "{m:?}");
        assert!(m.covariance[0][1].abs() < 10.0);
    }

    #[test]
    fn cache_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cache = AbcCovarianceCache::new(dir.path().join("abc.json"));
        let p = EllipsoidProblem::default().with_epsilon(30.0);
        let a = cache.get_or_compute(&p, 50_000, 3).unwrap();
        let b = cache.get_or_compute(&p, 50_000, 3).unwrap();
        assert_eq!(a, b);
        let text = std::fs::read_to_string(cache.path()).unwrap();
        assert!(text.contains("\"30\""));
    }
}
