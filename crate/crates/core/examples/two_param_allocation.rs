//! Allocating simulations between two parameter values: closed-form
//! efficiencies of each rule, then a Monte Carlo check at N = 1000.

use lfi_lab::allocation::{asymptotic_ess, delta_method_variance_real, optimal_proportions, AllocationKind};
use lfi_lab::bench::{run_experiment, Experiment, ExperimentConfig};
use lfi_lab::problems::{DiscreteProblem, TargetFunction};

fn main() -> lfi_lab::Result<()> {
    let p = DiscreteProblem::two_point();
    let f = TargetFunction::indicator_index(0);
    let n = 1000.0;
    let base = delta_method_variance_real(&p, &f, &[0.5, 0.5], n)?;
    println!("{:<12} {:>8} {:>12} {:>10} {:>8}", "rule", "n1/N", "variance", "efficiency", "ESS");
    for token in ["prior", "mse-opt", "ess-opt", "unnorm-opt", "ibs", "posterior"] {
        let kind = AllocationKind::from_token(token, Some(f.clone()))?;
        let props = optimal_proportions(&p, &kind)?;
        let v = delta_method_variance_real(&p, &f, &props, n)?;
        let ess = asymptotic_ess(&p, &props, n);
        println!("{token:<12} {:>8.4} {v:>12.4e} {:>10.3} {ess:>8.1}", props[0], base / v);
    }

    let config = ExperimentConfig::new(Experiment::TwoParam, vec![1000], 2000, 1)
        .with_strategies(["prior", "mse-opt", "ess-opt", "rejection"]);
    let out = run_experiment(&config)?;
    println!("\nMonte Carlo, {} trials:", config.trials);
    for s in &out.summary.strategies {
        let m = s.squared_error.as_ref().expect("no degenerate trials at N = 1000");
        println!("{:<12} mse {:.3e} +/- {:.1e}", s.strategy, m.mean, m.se);
    }
    Ok(())
}
