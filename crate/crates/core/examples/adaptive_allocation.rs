//! Learning the allocation while simulating: sixteen rounds, each spending
//! its share of the budget according to the current plug-in estimates.

use lfi_lab::allocation::{adaptive_allocate, AdaptiveConfig};
use lfi_lab::problems::{DiscreteProblem, TargetFunction};
use lfi_lab::rng::seeded;

fn main() -> lfi_lab::Result<()> {
    let p = DiscreteProblem::ten_point();
    let f = TargetFunction::value();
    let truth = p.posterior_expectation(&f)?;
    let mut rng = seeded(5);
    let out = adaptive_allocate(&p, &f, 1 << 14, AdaptiveConfig::default(), &mut rng)?;
    println!("truth {truth:.5}, estimate {:.5}", out.estimate.unwrap_or(f64::NAN));
    if let Some(v) = out.variance_estimate {
        println!("self-estimated variance {:.3e}", v.value);
    }
    println!("theta  sims  accepted");
    for (i, (n, s)) in out.counts.n().iter().zip(out.counts.n_star()).enumerate() {
        println!("{:>5}  {n:>5}  {s:>8}", p.values()[i]);
    }
    Ok(())
}
