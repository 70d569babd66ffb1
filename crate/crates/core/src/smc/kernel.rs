use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LfiError, Result};

/// Perturbation kernel family and its tuning constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelSpec {
    /// Gaussian perturbation with covariance `scale` times the weighted
    /// covariance of the previous round's accepted particles.
    LocalMvn { scale: f64 },
    /// Uniform box with per-coordinate half-width `width` times the range of
    /// the previous round's accepted particles.
    UniformBox { width: f64 },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::LocalMvn { scale: 2.0 }
    }
}

/// A kernel fitted to one round of particles.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedKernel {
    Mvn {
        cov: [[f64; 2]; 2],
        /// Lower Cholesky factor of `cov`.
        chol: [[f64; 2]; 2],
        inv: [[f64; 2]; 2],
        log_norm: f64,
    },
    Box { half: [f64; 2] },
}

impl FittedKernel {
    pub fn mvn(cov: [[f64; 2]; 2]) -> Result<Self> {
        let a = cov[0][0];
        let b = cov[1][0];
        let d = cov[1][1];
        let det = a * d - b * b;
        if !(a > 0.0 && det > 0.0 && det.is_finite()) || (cov[0][1] - b).abs() > 1e-12 * a.max(d) {
            return Err(LfiError::InvalidInput(format!("kernel covariance {cov:?} is not positive definite")));
        }
        let l00 = a.sqrt();
        let l10 = b / l00;
        let l11 = (d - l10 * l10).sqrt();
        Ok(FittedKernel::Mvn {
            cov,
            chol: [[l00, 0.0], [l10, l11]],
            inv: [[d / det, -b / det], [-b / det, a / det]],
            log_norm: -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln(),
        })
    }

    pub fn uniform_box(half: [f64; 2]) -> Result<Self> {
        if half.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(LfiError::InvalidInput(format!("box half-widths {half:?} must be positive")));
        }
        Ok(FittedKernel::Box { half })
    }

    /// Fits `spec` to weighted points.
    pub fn fit(spec: KernelSpec, points: &[[f64; 2]], weights: &[f64]) -> Result<Self> {
        match spec {
            KernelSpec::LocalMvn { scale } => {
                let (_, cov) = weighted_moments(points, weights)?;
                FittedKernel::mvn([[scale * cov[0][0], scale * cov[0][1]], [scale * cov[1][0], scale * cov[1][1]]])
            }
            KernelSpec::UniformBox { width } => {
                let mut half = [0.0; 2];
                for (c, h) in half.iter_mut().enumerate() {
                    let lo = points.iter().map(|p| p[c]).fold(f64::INFINITY, f64::min);
                    let hi = points.iter().map(|p| p[c]).fold(f64::NEG_INFINITY, f64::max);
                    *h = width * (hi - lo);
                }
                FittedKernel::uniform_box(half)
            }
        }
    }

    pub fn log_density(&self, x: [f64; 2], center: [f64; 2]) -> f64 {
        let d0 = x[0] - center[0];
        let d1 = x[1] - center[1];
        match self {
            FittedKernel::Mvn { inv, log_norm, .. } => {
                let q = inv[0][0] * d0 * d0 + 2.0 * inv[0][1] * d0 * d1 + inv[1][1] * d1 * d1;
                log_norm - 0.5 * q
            }
            FittedKernel::Box { half } => {
                if d0.abs() <= half[0] && d1.abs() <= half[1] {
                    -(4.0 * half[0] * half[1]).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn perturb<R: Rng + ?Sized>(&self, center: [f64; 2], rng: &mut R) -> [f64; 2] {
        match self {
            FittedKernel::Mvn { chol, .. } => {
                let z0: f64 = rng.sample(StandardNormal);
                let z1: f64 = rng.sample(StandardNormal);
                [center[0] + chol[0][0] * z0, center[1] + chol[1][0] * z0 + chol[1][1] * z1]
            }
            FittedKernel::Box { half } => [
                center[0] + half[0] * (2.0 * rng.random::<f64>() - 1.0),
                center[1] + half[1] * (2.0 * rng.random::<f64>() - 1.0),
            ],
        }
    }
}

/// Weighted mean and covariance `Σ w (θ-μ)(θ-μ)ᵀ / Σ w`.
pub fn weighted_moments(points: &[[f64; 2]], weights: &[f64]) -> Result<([f64; 2], [[f64; 2]; 2])> {
    if points.len() != weights.len() {
        return Err(LfiError::InvalidInput("points and weights differ in length".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(LfiError::ZeroTotalWeight);
    }
    let mut mean = [0.0; 2];
    for (p, w) in points.iter().zip(weights) {
        mean[0] += w * p[0];
        mean[1] += w * p[1];
    }
    mean[0] /= total;
    mean[1] /= total;
    let mut cov = [[0.0; 2]; 2];
    for (p, w) in points.iter().zip(weights) {
        let d = [p[0] - mean[0], p[1] - mean[1]];
        for i in 0..2 {
            for j in 0..2 {
                cov[i][j] += w * d[i] * d[j];
            }
        }
    }
    for row in &mut cov {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok((mean, cov))
}

/// The importance density of one round: the previous round's accepted
/// particles, resampled by weight and perturbed by a kernel.
#[derive(Debug, Clone)]
pub struct Proposal {
    centers: Vec<[f64; 2]>,
    log_weights: Vec<f64>,
    cumulative: Vec<f64>,
    kernel: FittedKernel,
}

impl Proposal {
    pub fn new(centers: Vec<[f64; 2]>, weights: Vec<f64>, kernel: FittedKernel) -> Result<Arc<Self>> {
        if centers.is_empty() || centers.len() != weights.len() {
            return Err(LfiError::InvalidInput("proposal needs one weight per center".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) || weights.iter().any(|w| *w < 0.0) {
            return Err(LfiError::ZeroTotalWeight);
        }
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        Ok(Arc::new(Proposal {
            log_weights: weights.iter().map(|w| (w / total).ln()).collect(),
            centers,
            cumulative,
            kernel,
        }))
    }

    pub fn kernel(&self) -> &FittedKernel {
        &self.kernel
    }

    pub fn centers(&self) -> &[[f64; 2]] {
        &self.centers
    }

    /// `log Σ_j (w_j / W) K(x | θ_j)`, before truncation to the prior support.
    pub fn log_density(&self, x: [f64; 2]) -> f64 {
        // Streaming log-sum-exp.
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for (c, lw) in self.centers.iter().zip(&self.log_weights) {
            let t = lw + self.kernel.log_density(x, *c);
            if t == f64::NEG_INFINITY {
                continue;
            }
            if t > max {
                sum = sum * (max - t).exp() + 1.0;
                max = t;
            } else {
                sum += (t - max).exp();
            }
        }
        if max == f64::NEG_INFINITY {
            return max;
        }
        max + sum.ln()
    }

    /// Resamples a center by weight and perturbs it.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let u = rng.random::<f64>();
        let j = self.cumulative.partition_point(|&c| c <= u).min(self.centers.len() - 1);
        self.kernel.perturb(self.centers[j], rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_relative_eq;

    #[test]
    fn mvn_density_matches_closed_form() {
        let k = FittedKernel::mvn([[2.0, 0.5], [0.5, 1.0]]).unwrap();
        let det: f64 = 2.0 - 0.25;
        let x = [1.0, -0.5];
        let q = (1.0 * 1.0 - 2.0 * 0.5 * 1.0 * -0.5 + 2.0 * 0.25) / det;
        let want = (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt());
        assert_relative_eq!(k.log_density(x, [0.0, 0.0]).exp(), want, max_relative = 1e-12);
        assert!(FittedKernel::mvn([[1.0, 2.0], [2.0, 1.0]]).is_err());
    }

    #[test]
    fn mvn_draws_have_the_kernel_covariance() {
        let cov = [[2.0, 0.5], [0.5, 1.0]];
        let k = FittedKernel::mvn(cov).unwrap();
        let mut rng = seeded(2);
        let pts: Vec<[f64; 2]> = (0..100_000).map(|_| k.perturb([1.0, 2.0], &mut rng)).collect();
        let (m, c) = weighted_moments(&pts, &vec![1.0; pts.len()]).unwrap();
        assert!((m[0] - 1.0).abs() < 0.02 && (m[1] - 2.0).abs() < 0.02);
        for i in 0..2 {
            for j in 0..2 {
                assert!((c[i][j] - cov[i][j]).abs() < 0.03, "{c:?}");
            }
        }
    }

    #[test]
    fn box_kernel_fits_to_range() {
        let pts = [[0.0, 0.0], [4.0, 1.0], [2.0, 3.0]];
        let k = FittedKernel::fit(KernelSpec::UniformBox { width: 0.5 }, &pts, &[1.0; 3]).unwrap();
        assert_eq!(k, FittedKernel::Box { half: [2.0, 1.5] });
        assert_relative_eq!(k.log_density([1.0, 1.0], [0.0, 0.0]).exp(), 1.0 / 12.0, max_relative = 1e-12);
        assert_eq!(k.log_density([2.5, 0.0], [0.0, 0.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn mixture_integrates_to_one() {
        let centers = vec![[0.0, 0.0], [1.0, 1.0], [-1.0, 2.0]];
        let p = Proposal::new(centers, vec![1.0, 2.0, 3.0], FittedKernel::mvn([[0.5, 0.1], [0.1, 0.4]]).unwrap()).unwrap();
        // Midpoint rule on a 100 x 100 grid over [-6, 6] x [-5, 7].
        let n = 100;
        let h = 12.0 / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = [-6.0 + h * (i as f64 + 0.5), -5.0 + h * (j as f64 + 0.5)];
                total += p.log_density(x).exp() * h * h;
            }
        }
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }
}
