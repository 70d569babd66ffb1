//! Experiment harness: runs independent trials of a registered experiment
//! under every requested strategy, aggregates the scores and writes
//! machine-readable results.
//!
//! Each `(budget, trial, strategy)` triple draws from its own counter-based
//! stream, so outputs are bit-identical for a given config and seed however
//! rayon schedules the work.

mod continuous;
mod discrete;
mod smc;
mod summary;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LfiError, Result};
use crate::rng::{tag_hash, LabRng, StreamKey};

pub use summary::{nearest_rank, summarize, Moments, StrategySummary, PERCENTILE_CONVENTION, STANDARD_ERROR_NOTE};

pub const SCHEMA_VERSION: u32 = 1;

/// The registered experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// Two grid points, acceptance probabilities 0.3 and 0.05.
    TwoParam,
    /// 101 points on [-5, 5] with a Gaussian likelihood.
    DiscreteGaussian,
    /// Multi-round allocation on the 10-point grid.
    Adaptive,
    /// Uniform prior on [-40, 60], Laplace likelihood, target `θ`.
    Continuous,
    /// Uniform prior on [0, 1], likelihood `θ`, target `1(θ < 1/2)`; weighted
    /// and kernel-regression estimates of the same particles.
    Kde,
    /// Two nested Gaussian models, target `1(M = 1)`.
    ModelSelection,
    /// ABC-SMC on the ellipsoid problem.
    Smc,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::TwoParam,
        Experiment::DiscreteGaussian,
        Experiment::Adaptive,
        Experiment::Continuous,
        Experiment::Kde,
        Experiment::ModelSelection,
        Experiment::Smc,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Experiment::TwoParam => "two-param",
            Experiment::DiscreteGaussian => "discrete-gaussian",
            Experiment::Adaptive => "adaptive",
            Experiment::Continuous => "continuous",
            Experiment::Kde => "kde",
            Experiment::ModelSelection => "model-selection",
            Experiment::Smc => "smc",
        }
    }

    /// Strategies run when the config names none.
    pub fn default_strategies(self) -> Vec<String> {
        let v: &[&str] = match self {
            Experiment::TwoParam => &["prior", "mse-opt", "ess-opt", "unnorm-opt", "ibs", "posterior", "uniform", "rejection"],
            Experiment::DiscreteGaussian => {
                &["prior", "posterior", "ess-opt", "unnorm-opt", "mse-opt:mean", "mse-opt:second-moment", "mse-opt:ci95"]
            }
            Experiment::Adaptive => &["adaptive", "optimal", "prior"],
            Experiment::Continuous => &["prior", "posterior", "ess-opt", "targeted"],
            Experiment::Kde => &["stratified", "posterior", "stratified-targeted", "prior", "ess-opt", "targeted"],
            Experiment::ModelSelection => &["prior", "posterior", "ess-opt", "targeted"],
            Experiment::Smc => &["rejection", "slow-mvn", "fast-mvn", "slow-box", "fast-box"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }

    /// Budget used when the config names none.
    pub fn default_n(self) -> u64 {
        match self {
            Experiment::TwoParam | Experiment::Kde => 1000,
            Experiment::DiscreteGaussian => 10_000,
            Experiment::Adaptive => 1 << 14,
            Experiment::Continuous | Experiment::ModelSelection => 3200,
            Experiment::Smc => 34_000,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Experiment {
    type Err = LfiError;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.token() == s)
            .ok_or_else(|| LfiError::UnknownToken { what: "experiment", token: s.to_string() })
    }
}

/// Where the centering value `f̄` of targeted densities comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FbarMode {
    /// The exact posterior expectation.
    #[default]
    Oracle,
    /// A rejection-sampling pilot spending 10% of the budget; the remaining
    /// 90% is drawn from the density centered on the pilot estimate.
    Pilot,
}

impl FromStr for FbarMode {
    type Err = LfiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(FbarMode::Oracle),
            "pilot" => Ok(FbarMode::Pilot),
            _ => Err(LfiError::UnknownToken { what: "f-bar mode", token: s.to_string() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// One or more simulation budgets.
    pub n: Vec<u64>,
    pub trials: usize,
    pub seed: u64,
    /// Strategy tokens; empty means [`Experiment::default_strategies`].
    #[serde(default)]
    pub strategies: Vec<String>,
    #[serde(default)]
    pub fbar: FbarMode,
    /// Write the particles of trial 0 for every strategy and budget.
    #[serde(default)]
    pub dump_particles: bool,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment, n: Vec<u64>, trials: usize, seed: u64) -> Self {
        ExperimentConfig { experiment, n, trials, seed, strategies: Vec::new(), fbar: FbarMode::Oracle, dump_particles: false, out: None }
    }

    pub fn with_strategies<S: Into<String>>(mut self, strategies: impl IntoIterator<Item = S>) -> Self {
        self.strategies = strategies.into_iter().map(Into::into).collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(LfiError::InvalidInput("trials must be at least 1".into()));
        }
        if self.n.is_empty() || self.n.contains(&0) {
            return Err(LfiError::InvalidInput("budgets must be positive".into()));
        }
        Ok(())
    }

    pub fn strategy_tokens(&self) -> Vec<String> {
        if self.strategies.is_empty() {
            self.experiment.default_strategies()
        } else {
            self.strategies.clone()
        }
    }
}

/// A score that serializes infinities as `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Score(#[serde(with = "crate::scores::inf_as_string")] pub f64);

/// One trial of one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub n: u64,
    pub trial: usize,
    pub strategy: String,
    #[serde(with = "crate::scores::inf_as_string::option")]
    pub estimate: Option<f64>,
    #[serde(with = "crate::scores::inf_as_string::option")]
    pub squared_error: Option<f64>,
    #[serde(with = "crate::scores::inf_as_string::option")]
    pub ess: Option<f64>,
    pub acceptance_rate: Option<f64>,
    /// The estimator could not produce a value (no accepted simulation or
    /// an undefined plug-in likelihood).
    pub degenerate: bool,
    /// Experiment-specific scores.
    pub extra: BTreeMap<String, Score>,
}

/// What a trial hands back to the runner.
#[derive(Debug, Clone, Default)]
pub(crate) struct Outcome {
    pub estimate: Option<f64>,
    pub squared_error: Option<f64>,
    pub ess: Option<f64>,
    pub acceptance_rate: Option<f64>,
    pub extra: BTreeMap<String, Score>,
    /// CSV bytes, produced only when particles are requested.
    pub particles: Option<Vec<u8>>,
}

impl Outcome {
    pub(crate) fn scored(estimate: Option<f64>, truth: f64) -> Self {
        Outcome { estimate, squared_error: estimate.map(|e| (e - truth).powi(2)), ..Outcome::default() }
    }

    pub(crate) fn put(&mut self, key: impl Into<String>, value: f64) {
        self.extra.insert(key.into(), Score(value));
    }
}

/// A prepared experiment at one budget: problem, oracle values and densities
/// built once and shared by every trial.
pub(crate) trait TrialRunner: Sync {
    fn trial(&self, strategy: usize, rng: &mut LabRng, dump: bool) -> Result<Outcome>;
}

fn prepare(config: &ExperimentConfig, n: u64, strategies: &[String]) -> Result<Box<dyn TrialRunner>> {
    Ok(match config.experiment {
        Experiment::TwoParam => Box::new(discrete::TwoParam::new(n, strategies)?),
        Experiment::DiscreteGaussian => Box::new(discrete::DiscreteGaussian::new(n, strategies)?),
        Experiment::Adaptive => Box::new(discrete::Adaptive::new(n, strategies)?),
        Experiment::Continuous => Box::new(continuous::Continuous::new(n, strategies, config.fbar)?),
        Experiment::Kde => Box::new(continuous::Kde::new(n, strategies, config.fbar)?),
        Experiment::ModelSelection => Box::new(continuous::ModelSelection::new(n, strategies, config.fbar)?),
        Experiment::Smc => Box::new(smc::SmcBench::new(n, strategies)?),
    })
}

/// The stream of one trial. The budget is part of the tag so that sweeps
/// over `n` use unrelated streams; the strategy index is the hash of its
/// token so adding a strategy leaves the others' streams untouched.
pub fn trial_stream(config: &ExperimentConfig, n: u64, trial: usize, strategy: &str) -> StreamKey {
    StreamKey::new(config.seed, &format!("{}/n={n}", config.experiment), trial as u64, tag_hash(strategy))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub seed: u64,
    pub trials: usize,
    pub n: Vec<u64>,
    pub fbar: FbarMode,
    pub percentile_convention: String,
    pub standard_error_note: String,
    /// Exact ground truth at each budget.
    pub oracle: serde_json::Value,
    pub strategies: Vec<StrategySummary>,
}

impl Summary {
    pub fn get(&self, n: u64, strategy: &str) -> Option<&StrategySummary> {
        self.strategies.iter().find(|s| s.n == n && s.strategy == strategy)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<TrialRecord>,
    pub summary: Summary,
    /// `(file name, CSV bytes)` for `particles/`.
    pub particles: Vec<(String, Vec<u8>)>,
}

/// Runs every trial, aggregates, and writes the outputs when `config.out`
/// is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let strategies = config.strategy_tokens();
    let mut records = Vec::with_capacity(config.n.len() * config.trials * strategies.len());
    let mut particles = Vec::new();
    let mut oracle = serde_json::Map::new();
    for &n in &config.n {
        let runner = prepare(config, n, &strategies)?;
        oracle.insert(format!("n={n}"), oracle_values(config.experiment, n)?);
        let tasks: Vec<(usize, usize)> = (0..config.trials).flat_map(|t| (0..strategies.len()).map(move |s| (t, s))).collect();
        let results: Vec<Result<(TrialRecord, Option<Vec<u8>>)>> = tasks
            .par_iter()
            .map(|&(t, s)| {
                let mut rng = trial_stream(config, n, t, &strategies[s]).rng();
                let out = runner.trial(s, &mut rng, config.dump_particles && t == 0)?;
                let record = TrialRecord {
                    n,
                    trial: t,
                    strategy: strategies[s].clone(),
                    degenerate: out.squared_error.is_none(),
                    estimate: out.estimate,
                    squared_error: out.squared_error,
                    ess: out.ess,
                    acceptance_rate: out.acceptance_rate,
                    extra: out.extra,
                };
                Ok((record, out.particles))
            })
            .collect();
        for r in results {
            let (record, csv) = r?;
            if let Some(csv) = csv {
                particles.push((format!("{}_n{n}.csv", record.strategy.replace([':', '/'], "_")), csv));
            }
            records.push(record);
        }
    }
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        experiment: config.experiment,
        seed: config.seed,
        trials: config.trials,
        n: config.n.clone(),
        fbar: config.fbar,
        percentile_convention: PERCENTILE_CONVENTION.into(),
        standard_error_note: STANDARD_ERROR_NOTE.into(),
        oracle: serde_json::Value::Object(oracle),
        strategies: summarize(&records)?,
    };
    let output = ExperimentOutput { records, summary, particles };
    if let Some(dir) = &config.out {
        write_outputs(&output, dir)?;
    }
    Ok(output)
}

/// Writes `trials.jsonl`, `summary.json` and `particles/*.csv` under `dir`.
pub fn write_outputs(output: &ExperimentOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| LfiError::io(dir, e))?;
    let path = dir.join("trials.jsonl");
    let mut buf = Vec::new();
    for r in &output.records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    fs::write(&path, buf).map_err(|e| LfiError::io(&path, e))?;
    let path = dir.join("summary.json");
    let mut text = serde_json::to_vec_pretty(&output.summary)?;
    text.push(b'\n');
    fs::write(&path, text).map_err(|e| LfiError::io(&path, e))?;
    if !output.particles.is_empty() {
        let pdir = dir.join("particles");
        fs::create_dir_all(&pdir).map_err(|e| LfiError::io(&pdir, e))?;
        for (name, bytes) in &output.particles {
            let path = pdir.join(name);
            let mut f = fs::File::create(&path).map_err(|e| LfiError::io(&path, e))?;
            f.write_all(bytes).map_err(|e| LfiError::io(&path, e))?;
        }
    }
    Ok(())
}

/// Exact ground truth for an experiment at budget `n`.
pub fn oracle_values(experiment: Experiment, n: u64) -> Result<serde_json::Value> {
    match experiment {
        Experiment::TwoParam => discrete::two_param_oracle(n),
        Experiment::DiscreteGaussian => discrete::discrete_gaussian_oracle(n),
        Experiment::Adaptive => discrete::adaptive_oracle(n),
        Experiment::Continuous => continuous::continuous_oracle(n),
        Experiment::Kde => continuous::kde_oracle(n),
        Experiment::ModelSelection => continuous::model_selection_oracle(n),
        Experiment::Smc => smc::smc_oracle(),
    }
}

/// Rejects a strategy token the experiment does not know.
pub(crate) fn unknown_strategy(experiment: Experiment, token: &str) -> LfiError {
    LfiError::UnknownToken { what: if experiment == Experiment::Smc { "smc strategy" } else { "strategy" }, token: token.to_string() }
}
