//! Smoothing acceptance indicators with a Gaussian kernel before
//! integrating, compared with the plain weighted average, plus stratified
//! sampling on the same problem.

use lfi_lab::estimators::{default_bandwidth, kernel_posterior_expectation, weighted_expectation, DEFAULT_KERNEL_QUAD_ORDER};
use lfi_lab::problems::{IntervalProblem, TargetFunction};
use lfi_lab::rng::seeded;
use lfi_lab::samplers::{rejection_sampling, stratified_sampling, targeted_density};

fn main() -> lfi_lab::Result<()> {
    let p = IntervalProblem::linear();
    let f = TargetFunction::indicator_below(0.5);
    let truth = p.posterior_expectation(&f)?;
    let n = 1000;
    let parts = rejection_sampling(&p, n, &mut seeded(2))?;
    let avg = weighted_expectation(&parts, &f)?;
    let kde = kernel_posterior_expectation(&parts, &p, &f, default_bandwidth(n), DEFAULT_KERNEL_QUAD_ORDER)?;
    let base = targeted_density(&p, &f, truth)?;
    let strat = stratified_sampling(&p, &base, n, &mut seeded(2), &f)?;
    println!("truth               {truth:.4}");
    println!("weighted average    {avg:.4}");
    println!("kernel regression   {:.4}  (h = {:.4})", kde.value, default_bandwidth(n));
    println!("stratified          {strat:.4}");
    Ok(())
}
