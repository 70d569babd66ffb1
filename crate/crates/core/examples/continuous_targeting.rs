//! Importance densities for a Laplace likelihood on [-40, 60]: the
//! ESS-optimal density versus one targeted at E[θ].

use lfi_lab::problems::{IntervalProblem, TargetFunction};
use lfi_lab::rng::seeded;
use lfi_lab::samplers::{
    ess_optimal_density, importance_sampling, independent_sampling_variance, rejection_sampling, targeted_density,
};
use lfi_lab::scores::score_battery;

fn main() -> lfi_lab::Result<()> {
    let p = IntervalProblem::laplace();
    let f = TargetFunction::identity();
    let truth = p.posterior_expectation(&f)?;
    println!("p(x*) = {:.4}, E[theta | x*] = {truth:.4}", p.evidence());
    let n = 3200;
    let ess_opt = ess_optimal_density(&p)?;
    let targeted = targeted_density(&p, &f, truth)?;
    for (name, q) in [("ess-opt", &ess_opt), ("targeted", &targeted)] {
        let v = independent_sampling_variance(&p, q, &f, n)?;
        let parts = importance_sampling(&p, q, n, &mut seeded(9))?;
        let r = score_battery(&parts, &f, truth);
        println!("{name:<10} asymptotic var {v:.3e}  squared error {:.3e}  ess {:.1}", r.mse.unwrap_or(f64::NAN), r.ess.unwrap_or(0.0));
    }
    let parts = rejection_sampling(&p, n, &mut seeded(9))?;
    let r = score_battery(&parts, &f, truth);
    println!("{:<10} accepted {:.4} of draws, ess {:.1}", "rejection", r.acceptance_rate, r.ess.unwrap_or(0.0));
    Ok(())
}
