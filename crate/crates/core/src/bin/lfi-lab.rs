use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lfi_lab::bench::{oracle_values, run_experiment, Experiment, ExperimentConfig, FbarMode};

#[derive(Parser)]
#[command(name = "lfi-lab", version, about = "Desk-scale likelihood-free inference experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run trials of an experiment and write trials.jsonl and summary.json.
    Run {
        /// two-param | discrete-gaussian | adaptive | continuous | kde | model-selection | smc
        experiment: Experiment,
        /// Simulation budget, or a comma-separated sweep.
        #[arg(long, value_delimiter = ',')]
        n: Vec<u64>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated strategy tokens; defaults depend on the experiment.
        #[arg(long, value_delimiter = ',')]
        strategies: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the particles of trial 0 under out/particles/.
        #[arg(long)]
        dump_particles: bool,
        /// Centering of targeted densities: oracle | pilot.
        #[arg(long, default_value = "oracle")]
        fbar: FbarMode,
    },
    /// Print exact ground-truth values as JSON.
    Oracle {
        experiment: Experiment,
        #[arg(long)]
        n: Option<u64>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> lfi_lab::Result<()> {
    match cli.command {
        Command::Run { experiment, n, trials, seed, strategies, out, dump_particles, fbar } => {
            let config = ExperimentConfig {
                n: if n.is_empty() { vec![experiment.default_n()] } else { n },
                strategies,
                fbar,
                dump_particles,
                out: Some(out.clone()),
                ..ExperimentConfig::new(experiment, Vec::new(), trials, seed)
            };
            let output = run_experiment(&config)?;
            println!("{:<24} {:>8} {:>6} {:>12} {:>12} {:>10}", "strategy", "n", "degen", "mean_se", "se_of_mean", "mean_ess");
            for s in &output.summary.strategies {
                let (m, e) = match &s.squared_error {
                    Some(m) => (format!("{:.4e}", m.mean), format!("{:.2e}", m.se)),
                    None => ("-".into(), "-".into()),
                };
                let ess = s.ess.as_ref().map_or("-".into(), |m| format!("{:.1}", m.mean));
                println!("{:<24} {:>8} {:>6} {:>12} {:>12} {:>10}", s.strategy, s.n, s.degenerate, m, e, ess);
            }
            println!("wrote {}", out.display());
        }
        Command::Oracle { experiment, n } => {
            let v = oracle_values(experiment, n.unwrap_or_else(|| experiment.default_n()))?;
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
    }
    Ok(())
}
