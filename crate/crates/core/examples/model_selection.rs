//! Two competing models over shared coordinates: exact model posterior and
//! how much simulation each density spends on model 1.

use lfi_lab::bench::{oracle_values, run_experiment, Experiment, ExperimentConfig};
use lfi_lab::problems::ModelSelectionProblem;

fn main() -> lfi_lab::Result<()> {
    let p = ModelSelectionProblem::two_model();
    println!("posterior model probabilities {:?}", p.posterior_model_probabilities()?);
    let oracle = oracle_values(Experiment::ModelSelection, 3200)?;
    println!("model-1 mass by density {}", oracle["model1_mass"]);
    println!("N x variance {}", oracle["n_times_variance"]);

    let out = run_experiment(&ExperimentConfig::new(Experiment::ModelSelection, vec![3200], 200, 4))?;
    for s in &out.summary.strategies {
        let se = s.squared_error.as_ref().map_or(f64::NAN, |m| m.mean);
        let frac = s.extra.get("model1_fraction").map_or(f64::NAN, |m| m.mean);
        println!("{:<10} mse {se:.3e}  sims on model 1 {frac:.3}", s.strategy);
    }
    Ok(())
}
