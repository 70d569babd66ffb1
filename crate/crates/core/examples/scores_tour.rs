//! The accuracy scores on a single rejection-sampling run.

use lfi_lab::problems::{DiscreteProblem, TargetFunction};
use lfi_lab::rng::seeded;
use lfi_lab::samplers::rejection_sampling;
use lfi_lab::scores::{effective_sample_size, kl_divergence, phi_quadratic_approx, score_battery_discrete};

fn main() -> lfi_lab::Result<()> {
    let p = DiscreteProblem::two_point();
    let f = TargetFunction::indicator_index(0);
    let truth = p.posterior_expectation(&f)?;
    let parts = rejection_sampling(&p, 500, &mut seeded(8))?;
    let report = score_battery_discrete(&parts, &p, &f, truth);
    println!("{}", serde_json::to_string_pretty(&report)?);

    println!("ess of weights (1, 1, 2) = {:.3}", effective_sample_size(&[1.0, 1.0, 2.0])?);
    let q = [0.5, 0.5];
    for q_hat in [[0.5, 0.5], [0.6, 0.4], [0.9, 0.1], [1.0, 0.0]] {
        println!(
            "KL({q_hat:?} || {q:?}) = {:.5}, quadratic approximation {:.5}",
            kl_divergence(&q_hat, &q)?,
            phi_quadratic_approx(&q_hat, &q, 1.0)?
        );
    }
    Ok(())
}
