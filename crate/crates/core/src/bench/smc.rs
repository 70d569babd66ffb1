use serde_json::json;

use super::{unknown_strategy, Experiment, Outcome, TrialRunner};
use crate::error::{LfiError, Result};
use crate::rng::LabRng;
use crate::scores::effective_sample_size;
use crate::smc::{
    abc_covariance_exact, abc_rejection, all_rounds_particles, covariance_squared_error, ellipsoid_true_posterior,
    mean_squared_error, particle_moments, run_smc, write_rounds_csv, EllipsoidPosterior, EllipsoidProblem, KernelSpec,
    RoundTarget, SmcConfig, SmcRound,
};

/// Tolerance of the rejection baseline and last tolerance of both presets.
pub const REJECTION_EPSILON: f64 = 1.0;

/// Box half-width as a fraction of the previous round's particle range.
pub const BOX_WIDTH: f64 = 0.5;

enum SmcStrategy {
    Rejection,
    Smc(SmcConfig),
}

/// `slow-mvn`, `fast-box`, ...: schedule preset and kernel. The budget is
/// split evenly across rounds as a per-round simulation count.
fn preset(token: &str, n: u64) -> Option<SmcConfig> {
    let (schedule, kernel) = token.split_once('-')?;
    let kernel = match kernel {
        "mvn" => KernelSpec::default(),
        "box" => KernelSpec::UniformBox { width: BOX_WIDTH },
        _ => return None,
    };
    let eps: &[f64] = match schedule {
        "slow" => &SmcConfig::SLOW,
        "fast" => &SmcConfig::FAST,
        _ => return None,
    };
    let per_round = (n / eps.len() as u64).max(1) as usize;
    SmcConfig::new(eps.to_vec(), kernel, RoundTarget::Simulations(per_round), n).ok()
}

pub(crate) struct SmcBench {
    problem: EllipsoidProblem,
    truth: EllipsoidPosterior,
    n: u64,
    strategies: Vec<SmcStrategy>,
}

fn round_scores(out: &mut Outcome, r: &SmcRound, truth: &EllipsoidPosterior) -> Result<Option<f64>> {
    let eps = r.epsilon;
    out.put(format!("acceptance_rate@eps={eps}"), r.acceptance_rate());
    if r.n_acc == 0 {
        return Ok(None);
    }
    let (mean, cov) = particle_moments(&r.particles)?;
    let se = mean_squared_error(mean, truth.mean);
    out.put(format!("squared_error@eps={eps}"), se);
    out.put(format!("cov_squared_error@eps={eps}"), covariance_squared_error(cov, truth.covariance));
    out.put(format!("abc_cov_squared_error@eps={eps}"), covariance_squared_error(cov, abc_covariance_exact(eps)?));
    Ok(Some(se))
}

impl SmcBench {
    pub(crate) fn new(n: u64, tokens: &[String]) -> Result<Self> {
        let strategies = tokens
            .iter()
            .map(|t| {
                if t == "rejection" {
                    Ok(SmcStrategy::Rejection)
                } else {
                    preset(t, n).map(SmcStrategy::Smc).ok_or_else(|| unknown_strategy(Experiment::Smc, t))
                }
            })
            .collect::<Result<_>>()?;
        Ok(SmcBench { problem: EllipsoidProblem::default(), truth: ellipsoid_true_posterior(), n, strategies })
    }
}

impl TrialRunner for SmcBench {
    fn trial(&self, strategy: usize, rng: &mut LabRng, dump: bool) -> Result<Outcome> {
        let mut rounds = match &self.strategies[strategy] {
            SmcStrategy::Rejection => vec![abc_rejection(&self.problem, REJECTION_EPSILON, self.n as usize, rng)?],
            SmcStrategy::Smc(cfg) => run_smc(&self.problem, cfg, rng)?.rounds,
        };
        // A run that ended on a round without acceptances is scored on the
        // rounds before it.
        if rounds.last().is_some_and(|r| r.n_acc == 0) {
            rounds.pop();
        }
        let mut out = Outcome::default();
        let sims: usize = rounds.iter().map(|r| r.n_sims).sum();
        let accepted: usize = rounds.iter().map(|r| r.n_acc).sum();
        out.acceptance_rate = (sims > 0).then(|| accepted as f64 / sims as f64);
        out.put("total_simulations", sims as f64);
        let Some(last) = rounds.last() else {
            return Ok(out);
        };
        out.put("final_epsilon", last.epsilon);
        if let SmcStrategy::Smc(cfg) = &self.strategies[strategy] {
            let done = rounds.len() == cfg.epsilon_schedule.len();
            out.put("completed", if done { 1.0 } else { 0.0 });
        }
        for r in &rounds {
            out.squared_error = round_scores(&mut out, r, &self.truth)?;
        }
        if last.n_acc > 0 {
            let (_, cov) = particle_moments(&last.particles)?;
            out.put("cov_squared_error", covariance_squared_error(cov, self.truth.covariance));
            out.put("abc_cov_squared_error", covariance_squared_error(cov, abc_covariance_exact(last.epsilon)?));
            out.ess = Some(last.ess_at(last.epsilon));
        }
        match all_rounds_particles(&rounds) {
            Ok(all) => {
                let (mean, cov) = particle_moments(&all)?;
                out.put("all_rounds_squared_error", mean_squared_error(mean, self.truth.mean));
                out.put("all_rounds_cov_squared_error", covariance_squared_error(cov, self.truth.covariance));
                out.put("all_rounds_abc_cov_squared_error", covariance_squared_error(cov, abc_covariance_exact(last.epsilon)?));
                out.put("all_rounds_ess", effective_sample_size(&all.weights())?);
                out.put("all_rounds_qualifying", all.n_accepted() as f64);
            }
            Err(LfiError::ZeroTotalWeight) => {}
            Err(e) => return Err(e),
        }
        if dump {
            let mut buf = Vec::new();
            write_rounds_csv(&rounds, &mut buf)?;
            out.particles = Some(buf);
        }
        Ok(out)
    }
}

pub(crate) fn smc_oracle() -> Result<serde_json::Value> {
    let t = ellipsoid_true_posterior();
    let mut abc = serde_json::Map::new();
    for eps in SmcConfig::SLOW {
        abc.insert(format!("{eps}"), json!(abc_covariance_exact(eps)?));
    }
    Ok(json!({
        "mean": t.mean,
        "covariance": t.covariance,
        "normalizer": t.normalizer,
        "abc_covariance": abc,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_split_the_budget_evenly() {
        let c = preset("slow-mvn", 34_000).unwrap();
        assert_eq!(c.per_round_target, RoundTarget::Simulations(4250));
        assert_eq!(c.epsilon_schedule.len(), 8);
        let c = preset("fast-box", 34_000).unwrap();
        assert_eq!(c.per_round_target, RoundTarget::Simulations(11_333));
        assert_eq!(c.kernel, KernelSpec::UniformBox { width: BOX_WIDTH });
        assert!(preset("medium-mvn", 100).is_none());
        assert!(preset("slow-gauss", 100).is_none());
        assert!(SmcBench::new(100, &["slow".into()]).is_err());
    }
}
