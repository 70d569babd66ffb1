//! Accuracy scores: expectation squared error, acceptance rate, effective
//! sample size, KL divergence and its quadratic approximation.

use serde::{Deserialize, Serialize};

use crate::error::{LfiError, Result};
use crate::estimators::{weighted_expectation, WeightedParticles};
use crate::problems::{Atom, DiscreteProblem, TargetFunction};

/// `(estimate - truth)²`.
pub fn squared_error(estimate: f64, truth: f64) -> f64 {
    let d = estimate - truth;
    d * d
}

/// `‖estimate - truth‖²`.
pub fn squared_error_vec(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(LfiError::InvalidInput(format!(
            "dimension mismatch: {} vs {}",
            estimate.len(),
            truth.len()
        )));
    }
    Ok(estimate.iter().zip(truth).map(|(a, b)| squared_error(*a, *b)).sum())
}

/// `(Σ w)² / Σ w²`.
pub fn effective_sample_size(weights: &[f64]) -> Result<f64> {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s <= 0.0 || s2 <= 0.0 {
        return Err(LfiError::ZeroTotalWeight);
    }
    Ok(s * s / s2)
}

fn check_pair(q_hat: &[f64], q: &[f64]) -> Result<()> {
    if q_hat.len() != q.len() || q.is_empty() {
        return Err(LfiError::InvalidInput("distributions differ in length".into()));
    }
    for d in [q_hat, q] {
        let s: f64 = d.iter().sum();
        if (s - 1.0).abs() > 1e-9 || d.iter().any(|x| !(*x >= 0.0)) {
            return Err(LfiError::InvalidInput(format!("not a probability vector (sum {s})")));
        }
    }
    Ok(())
}

/// `Σ q̂_i log(q̂_i / q_i)`, infinite when `q̂` puts mass where `q` has none.
pub fn kl_divergence(q_hat: &[f64], q: &[f64]) -> Result<f64> {
    check_pair(q_hat, q)?;
    let mut total = 0.0;
    for (&a, &b) in q_hat.iter().zip(q) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Ok(f64::INFINITY);
        }
        total += a * (a / b).ln();
    }
    Ok(total.max(0.0))
}

/// Quadratic approximation `(φ''(1)/2) Σ (q̂_i - q_i)² / q_i` of a
/// φ-divergence; `φ''(1) = 1` for KL.
pub fn phi_quadratic_approx(q_hat: &[f64], q: &[f64], phi_second_deriv_at_1: f64) -> Result<f64> {
    check_pair(q_hat, q)?;
    let mut total = 0.0;
    for (&a, &b) in q_hat.iter().zip(q) {
        let d = a - b;
        if b == 0.0 {
            if d != 0.0 {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        total += d * d / b;
    }
    Ok(0.5 * phi_second_deriv_at_1 * total)
}

/// Factor turning KL between two-point distributions into the squared error
/// of the indicator of the first point: `MSE ≈ 2 q₁ q₂ · KL`.
pub fn two_point_kl_rescale(q1: f64) -> f64 {
    2.0 * q1 * (1.0 - q1)
}

/// Serializes `f64` with infinities as the strings `"inf"` / `"-inf"`.
pub mod inf_as_string {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    fn parse(r: Repr) -> Result<f64, String> {
        match r {
            Repr::Num(x) => Ok(x),
            Repr::Text(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(format!("expected a number or \"inf\", got {other:?}")),
            },
        }
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_infinite() {
            s.serialize_str(if *x > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*x)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        parse(Repr::deserialize(d)?).map_err(D::Error::custom)
    }

    /// The same convention for optional values; `None` is `null`.
    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            match x {
                Some(v) => super::serialize(v, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            match Option::<Repr>::deserialize(d)? {
                Some(r) => parse(r).map(Some).map_err(D::Error::custom),
                None => Ok(None),
            }
        }
    }
}

/// Scores of one trial, or averages over `n_trials` trials. `None` marks a
/// score that could not be computed (e.g. no accepted simulation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    #[serde(with = "inf_as_string::option")]
    pub mse: Option<f64>,
    pub acceptance_rate: f64,
    #[serde(with = "inf_as_string::option")]
    pub ess: Option<f64>,
    #[serde(with = "inf_as_string::option")]
    pub kl: Option<f64>,
    #[serde(with = "inf_as_string::option")]
    pub kl_quadratic: Option<f64>,
    pub n_trials: usize,
}

/// Scores one trial's particles against the true expectation `truth`.
pub fn score_battery<P>(particles: &WeightedParticles<P>, f: &TargetFunction<P>, truth: f64) -> ScoreReport {
    let mse = weighted_expectation(particles, f).ok().map(|e| squared_error(e, truth));
    ScoreReport {
        mse,
        acceptance_rate: particles.acceptance_rate(),
        ess: effective_sample_size(&particles.weights()).ok(),
        kl: None,
        kl_quadratic: None,
        n_trials: 1,
    }
}

/// Weighted particle posterior over the atoms of a discrete problem.
pub fn particle_posterior(particles: &WeightedParticles<Atom>, k: usize) -> Result<Vec<f64>> {
    let mut mass = vec![0.0; k];
    for p in particles.accepted() {
        if p.theta.index >= k {
            return Err(LfiError::OutsideSupport(format!("{:?}", p.theta)));
        }
        mass[p.theta.index] += p.weight;
    }
    let z: f64 = mass.iter().sum();
    if z <= 0.0 {
        return Err(LfiError::ZeroTotalWeight);
    }
    Ok(mass.iter().map(|m| m / z).collect())
}

/// [`score_battery`] plus the KL divergence of the particle posterior from
/// the exact posterior and its quadratic approximation.
pub fn score_battery_discrete(
    particles: &WeightedParticles<Atom>,
    problem: &DiscreteProblem,
    f: &TargetFunction<Atom>,
    truth: f64,
) -> ScoreReport {
    let mut report = score_battery(particles, f, truth);
    if let (Ok(q_hat), Ok(q)) = (particle_posterior(particles, problem.k()), problem.exact_posterior()) {
        report.kl = kl_divergence(&q_hat, &q).ok();
        report.kl_quadratic = phi_quadratic_approx(&q_hat, &q, 1.0).ok();
    }
    report
}
