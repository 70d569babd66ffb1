//! ABC-SMC on the ellipsoid problem with the slow schedule, reporting each
//! round and the all-rounds estimate.

use lfi_lab::rng::seeded;
use lfi_lab::smc::{
    all_rounds_particles, ellipsoid_true_posterior, particle_moments, run_smc, EllipsoidProblem, KernelSpec, RoundTarget,
    SmcConfig,
};

fn main() -> lfi_lab::Result<()> {
    let problem = EllipsoidProblem::default();
    let config = SmcConfig::slow(KernelSpec::default(), RoundTarget::Simulations(4250), 34_000);
    let run = run_smc(&problem, &config, &mut seeded(3))?;
    println!("stop: {:?}", run.stop);
    println!("{:>5} {:>8} {:>9} {:>8} {:>16}", "eps", "sims", "accepted", "ess", "mean");
    for r in &run.rounds {
        let mean = particle_moments(&r.particles).map(|m| m.0).unwrap_or([f64::NAN; 2]);
        println!("{:>5} {:>8} {:>9} {:>8.1} ({:>6.3}, {:>6.3})", r.epsilon, r.n_sims, r.n_acc, r.ess_at(r.epsilon), mean[0], mean[1]);
    }
    let (mean, cov) = particle_moments(&all_rounds_particles(&run.rounds)?)?;
    let t = ellipsoid_true_posterior();
    println!("all rounds mean {mean:.3?} cov {cov:.3?}");
    println!("exact      mean {:.3?} cov {:.3?}", t.mean, t.covariance);
    Ok(())
}
