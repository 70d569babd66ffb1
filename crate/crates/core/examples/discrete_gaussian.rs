//! A 101-point grid with Gaussian likelihood: the best allocation depends on
//! which posterior expectation is wanted.

use lfi_lab::bench::{oracle_values, run_experiment, Experiment, ExperimentConfig};

fn main() -> lfi_lab::Result<()> {
    let oracle = oracle_values(Experiment::DiscreteGaussian, 10_000)?;
    println!("{}", serde_json::to_string_pretty(&oracle)?);

    let config = ExperimentConfig::new(Experiment::DiscreteGaussian, vec![10_000], 200, 3);
    let out = run_experiment(&config)?;
    // The mean is the headline score; the other targets ride along as extras.
    println!("\n{:<24}{:>14}{:>14}{:>14}", "strategy", "mean", "second-moment", "ci95");
    let cell = |m: Option<&lfi_lab::bench::Moments>| m.map_or(format!("{:>14}", "-"), |m| format!("{:>14.3e}", m.mean));
    for s in &out.summary.strategies {
        println!(
            "{:<24}{}{}{}",
            s.strategy,
            cell(s.squared_error.as_ref()),
            cell(s.extra.get("squared_error_second-moment")),
            cell(s.extra.get("squared_error_ci95")),
        );
    }
    Ok(())
}
