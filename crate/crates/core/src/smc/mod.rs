//! ABC sequential Monte Carlo on the ellipsoid problem, with reuse of
//! particles from every round and analytic and brute-force oracles.

mod ellipsoid;
mod kernel;

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{LfiError, Result};
use crate::estimators::{weighted_expectation, Particle, WeightedParticles};
use crate::problems::{Problem, TargetFunction};
use crate::scores::effective_sample_size;

pub use ellipsoid::{
    abc_covariance_exact, abc_covariance_reference, brute_force_posterior, ellipsoid_true_posterior, AbcCovarianceCache,
    EllipsoidPosterior, EllipsoidProblem, MonteCarloMoments, ELLIPSOID_CENTER,
};
pub use kernel::{weighted_moments, FittedKernel, KernelSpec, Proposal};

/// Maximum redraws of a proposal that falls outside the prior support.
pub const MAX_REDRAWS: usize = 1000;

/// How long each round runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundTarget {
    /// Simulate until this many particles are accepted.
    Acceptances(usize),
    /// Run exactly this many simulations.
    Simulations(usize),
}

/// Tolerance schedule, kernel and budget for one ABC-SMC run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmcConfig {
    pub epsilon_schedule: Vec<f64>,
    #[serde(default)]
    pub kernel: KernelSpec,
    pub per_round_target: RoundTarget,
    pub total_budget: u64,
}

impl SmcConfig {
    pub const SLOW: [f64; 8] = [30.0, 16.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0];
    pub const FAST: [f64; 3] = [30.0, 5.0, 1.0];

    pub fn new(epsilon_schedule: Vec<f64>, kernel: KernelSpec, per_round_target: RoundTarget, total_budget: u64) -> Result<Self> {
        let c = SmcConfig { epsilon_schedule, kernel, per_round_target, total_budget };
        c.validate()?;
        Ok(c)
    }

    /// Slowly shrinking tolerance, ending at 1.
    pub fn slow(kernel: KernelSpec, per_round_target: RoundTarget, total_budget: u64) -> Self {
        Self::new(Self::SLOW.to_vec(), kernel, per_round_target, total_budget).expect("valid preset")
    }

    /// Rapidly shrinking tolerance, ending at 1.
    pub fn fast(kernel: KernelSpec, per_round_target: RoundTarget, total_budget: u64) -> Self {
        Self::new(Self::FAST.to_vec(), kernel, per_round_target, total_budget).expect("valid preset")
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.epsilon_schedule;
        if s.is_empty() || s.iter().any(|e| !(*e > 0.0 && e.is_finite())) || s.windows(2).any(|w| w[1] >= w[0]) {
            return Err(LfiError::InvalidInput(format!("ε schedule {s:?} must be positive and strictly decreasing")));
        }
        if self.total_budget == 0 {
            return Err(LfiError::InvalidInput("budget must be positive".into()));
        }
        let per = match self.per_round_target {
            RoundTarget::Acceptances(n) | RoundTarget::Simulations(n) => n,
        };
        if per == 0 {
            return Err(LfiError::InvalidInput("per-round target must be positive".into()));
        }
        match self.kernel {
            KernelSpec::LocalMvn { scale: x } | KernelSpec::UniformBox { width: x } if !(x > 0.0 && x.is_finite()) => {
                Err(LfiError::InvalidInput(format!("kernel constant {x} must be positive")))
            }
            _ => Ok(()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: SmcConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }
}

/// One round of ABC-SMC. `particles` holds every simulation of the round;
/// rejected ones carry zero weight.
#[derive(Debug, Clone)]
pub struct SmcRound {
    pub epsilon: f64,
    pub particles: WeightedParticles<[f64; 2]>,
    /// `|y|` for each particle.
    pub discrepancies: Vec<f64>,
    /// `None` in the first round, which samples the prior.
    pub proposal: Option<Arc<Proposal>>,
    pub n_sims: usize,
    pub n_acc: usize,
}

impl SmcRound {
    pub fn acceptance_rate(&self) -> f64 {
        self.n_acc as f64 / self.n_sims as f64
    }

    /// ESS of this round's weights among particles with `|y| < eps`.
    pub fn ess_at(&self, eps: f64) -> f64 {
        let w: Vec<f64> = self.qualifying(eps).map(|(p, _)| p.weight).collect();
        effective_sample_size(&w).unwrap_or(0.0)
    }

    fn qualifying(&self, eps: f64) -> impl Iterator<Item = (&Particle<[f64; 2]>, f64)> {
        self.particles
            .entries()
            .iter()
            .zip(&self.discrepancies)
            .filter(move |(p, d)| p.accepted && **d < eps)
            .map(|(p, d)| (p, *d))
    }
}

/// Why a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    ScheduleComplete,
    BudgetExhausted { round: usize },
    NoAcceptances { round: usize },
    DegenerateKernel { round: usize },
}

#[derive(Debug, Clone)]
pub struct SmcRun {
    pub rounds: Vec<SmcRound>,
    pub stop: StopReason,
}

impl SmcRun {
    pub fn total_simulations(&self) -> usize {
        self.rounds.iter().map(|r| r.n_sims).sum()
    }

    /// The last round that accepted anything.
    pub fn final_round(&self) -> Option<&SmcRound> {
        self.rounds.iter().rev().find(|r| r.n_acc > 0)
    }

    pub fn completed(&self) -> bool {
        self.stop == StopReason::ScheduleComplete
    }
}

/// ABC rejection sampling at `epsilon` with the same random-stream layout as
/// the first round of [`run_smc`].
pub fn abc_rejection<R: RngCore>(problem: &EllipsoidProblem, epsilon: f64, n: usize, rng: &mut R) -> Result<SmcRound> {
    let config = SmcConfig::new(vec![epsilon], KernelSpec::default(), RoundTarget::Simulations(n), n as u64)?;
    let run = run_smc(problem, &config, rng)?;
    Ok(run.rounds.into_iter().next().expect("one round"))
}

/// Runs ABC-SMC. Round 1 samples the prior at `ε_1`; later rounds resample
/// the previous round's accepted particles by weight and perturb them,
/// redrawing proposals that leave the prior square. Accepted particles
/// get weight `p(θ) / q_k(θ)` with `q_k` the untruncated kernel mixture;
/// truncation changes `q_k` only by a constant factor within a round.
pub fn run_smc<R: RngCore>(problem: &EllipsoidProblem, config: &SmcConfig, rng: &mut R) -> Result<SmcRun> {
    config.validate()?;
    let mut rounds: Vec<SmcRound> = Vec::with_capacity(config.epsilon_schedule.len());
    let mut used: u64 = 0;
    let prior = problem.prior_pdf();
    for (k, &eps) in config.epsilon_schedule.iter().enumerate() {
        if used >= config.total_budget {
            return Ok(SmcRun { rounds, stop: StopReason::BudgetExhausted { round: k } });
        }
        let proposal = match rounds.last() {
            None => None,
            Some(prev) => {
                let (pts, w): (Vec<[f64; 2]>, Vec<f64>) = prev.particles.accepted().map(|p| (p.theta, p.weight)).unzip();
                match FittedKernel::fit(config.kernel, &pts, &w) {
                    Ok(kernel) => Some(Proposal::new(pts, w, kernel)?),
                    Err(_) => return Ok(SmcRun { rounds, stop: StopReason::DegenerateKernel { round: k } }),
                }
            }
        };
        let mut entries = Vec::new();
        let mut discrepancies = Vec::new();
        let mut n_acc = 0;
        let mut budget_hit = false;
        loop {
            let done = match config.per_round_target {
                RoundTarget::Acceptances(a) => n_acc >= a,
                RoundTarget::Simulations(s) => entries.len() >= s,
            };
            if done {
                break;
            }
            if used >= config.total_budget {
                budget_hit = true;
                break;
            }
            let theta = match &proposal {
                None => problem.sample_prior(rng),
                Some(q) => draw_in_support(problem, q, rng)?,
            };
            let d = problem.simulate_discrepancy(&theta, rng);
            used += 1;
            let accepted = d < eps;
            let weight = if !accepted {
                0.0
            } else if let Some(q) = &proposal {
                let lq = q.log_density(theta);
                if lq == f64::NEG_INFINITY {
                    return Err(LfiError::MixtureUnderflow);
                }
                (prior.ln() - lq).exp()
            } else {
                1.0
            };
            if accepted {
                n_acc += 1;
            }
            entries.push(Particle { theta, weight, round: k, accepted });
            discrepancies.push(d);
        }
        let n_sims = entries.len();
        rounds.push(SmcRound {
            epsilon: eps,
            particles: WeightedParticles::new(entries)?,
            discrepancies,
            proposal,
            n_sims,
            n_acc,
        });
        if n_acc == 0 {
            return Ok(SmcRun { rounds, stop: StopReason::NoAcceptances { round: k } });
        }
        if budget_hit {
            return Ok(SmcRun { rounds, stop: StopReason::BudgetExhausted { round: k } });
        }
    }
    Ok(SmcRun { rounds, stop: StopReason::ScheduleComplete })
}

fn draw_in_support<R: Rng + ?Sized>(problem: &EllipsoidProblem, q: &Proposal, rng: &mut R) -> Result<[f64; 2]> {
    for _ in 0..MAX_REDRAWS {
        let t = q.draw(rng);
        if problem.contains(&t) {
            return Ok(t);
        }
    }
    Err(LfiError::ProposalRejected(MAX_REDRAWS))
}

/// Particles from every round with `|y| < ε_K` (the last round's
/// tolerance). Round `k` particles get weight `α_k w / W_k`, where `W_k` is
/// the round's qualifying weight and `α_k` its ESS, so the weighted average
/// is `Σ α_k f̄_k / Σ α_k`. Non-qualifying particles carry zero weight.
pub fn all_rounds_particles(rounds: &[SmcRound]) -> Result<WeightedParticles<[f64; 2]>> {
    let eps = rounds.last().ok_or_else(|| LfiError::InvalidInput("no rounds".into()))?.epsilon;
    let mut entries = Vec::new();
    let mut any = false;
    for r in rounds {
        let total: f64 = r.qualifying(eps).map(|(p, _)| p.weight).sum();
        let alpha = r.ess_at(eps);
        for (p, d) in r.particles.entries().iter().zip(&r.discrepancies) {
            let keep = p.accepted && *d < eps && total > 0.0 && alpha > 0.0;
            any |= keep;
            entries.push(Particle {
                theta: p.theta,
                weight: if keep { alpha * p.weight / total } else { 0.0 },
                round: p.round,
                accepted: keep,
            });
        }
    }
    if !any {
        return Err(LfiError::ZeroTotalWeight);
    }
    WeightedParticles::new(entries)
}

/// `Σ_k α_k f̄_k / Σ_k α_k` with `α_k` the ESS of round `k` at `ε_K`.
pub fn all_rounds_estimate(rounds: &[SmcRound], f: &TargetFunction<[f64; 2]>) -> Result<f64> {
    weighted_expectation(&all_rounds_particles(rounds)?, f)
}

/// Weighted mean and covariance of the accepted particles.
pub fn particle_moments(particles: &WeightedParticles<[f64; 2]>) -> Result<([f64; 2], [[f64; 2]; 2])> {
    let (pts, w): (Vec<[f64; 2]>, Vec<f64>) = particles.accepted().map(|p| (p.theta, p.weight)).unzip();
    weighted_moments(&pts, &w)
}

/// Squared error of a mean vector, summed over coordinates.
pub fn mean_squared_error(est: [f64; 2], truth: [f64; 2]) -> f64 {
    (est[0] - truth[0]).powi(2) + (est[1] - truth[1]).powi(2)
}

/// Squared error of a covariance matrix, summed over all four entries.
pub fn covariance_squared_error(est: [[f64; 2]; 2], truth: [[f64; 2]; 2]) -> f64 {
    (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| (est[i][j] - truth[i][j]).powi(2)).sum()
}

/// Writes `theta1,theta2,weight,discrepancy,round` for every simulation.
pub fn write_rounds_csv<W: Write>(rounds: &[SmcRound], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["theta1", "theta2", "weight", "discrepancy", "round"])?;
    for r in rounds {
        for (p, d) in r.particles.entries().iter().zip(&r.discrepancies) {
            w.write_record(&[
                p.theta[0].to_string(),
                p.theta[1].to_string(),
                p.weight.to_string(),
                d.to_string(),
                (p.round + 1).to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| LfiError::io(Path::new("<csv>"), e))?;
    Ok(())
}
