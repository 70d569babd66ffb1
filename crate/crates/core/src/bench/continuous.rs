use serde_json::json;

use super::{unknown_strategy, Experiment, FbarMode, Outcome, TrialRunner};
use crate::error::{LfiError, Result};
use crate::estimators::{
    default_bandwidth, kernel_posterior_expectation, weighted_expectation, ParamColumns, WeightedParticles,
    DEFAULT_KERNEL_QUAD_ORDER,
};
use crate::problems::{IntervalProblem, ModelSelectionProblem, ModelTheta, TargetFunction};
use crate::rng::LabRng;
use crate::samplers::{importance_sampling, rejection_sampling, stratified_particles, DensityKind, SamplingSetting};
use crate::scores::effective_sample_size;

fn needs_fbar(kind: DensityKind) -> bool {
    matches!(kind, DensityKind::Targeted | DensityKind::StratifiedTargeted)
}

/// The density a trial samples from, with the budget left for it. In pilot
/// mode a tenth of the budget goes to a rejection run whose estimate
/// centers the density; `None` means the pilot accepted nothing.
fn trial_density<S: SamplingSetting>(
    problem: &S,
    f: &TargetFunction<S::Param>,
    kind: DensityKind,
    prebuilt: Option<&S::Density>,
    n: u64,
    rng: &mut LabRng,
) -> Result<Option<(Option<S::Density>, u64)>> {
    if prebuilt.is_some() {
        return Ok(Some((None, n)));
    }
    let pilot = (n / 10).max(1);
    if pilot >= n {
        return Err(LfiError::InvalidInput(format!("budget {n} leaves nothing after the pilot")));
    }
    let parts = rejection_sampling(problem, pilot as usize, rng)?;
    let Ok(fbar) = weighted_expectation(&parts, f) else {
        return Ok(None);
    };
    match problem.build_density(kind, f, fbar) {
        Ok(q) => Ok(Some((Some(q), n - pilot))),
        Err(LfiError::DegenerateTarget) => Ok(None),
        Err(e) => Err(e),
    }
}

fn score_particles<P: ParamColumns>(
    parts: &WeightedParticles<P>,
    f: &TargetFunction<P>,
    truth: f64,
    dump: bool,
) -> Result<Outcome> {
    let mut out = Outcome::scored(weighted_expectation(parts, f).ok(), truth);
    out.ess = effective_sample_size(&parts.weights()).ok();
    out.acceptance_rate = Some(parts.acceptance_rate());
    if dump {
        let mut buf = Vec::new();
        parts.write_csv(&mut buf)?;
        out.particles = Some(buf);
    }
    Ok(out)
}

/// Independent importance sampling from one of the density kinds.
struct DensityStrategies<S: SamplingSetting> {
    problem: S,
    f: TargetFunction<S::Param>,
    truth: f64,
    n: u64,
    kinds: Vec<DensityKind>,
    /// Built once in oracle mode; `None` for kinds centered per trial.
    densities: Vec<Option<S::Density>>,
}

impl<S: SamplingSetting> DensityStrategies<S> {
    fn new(problem: S, f: TargetFunction<S::Param>, n: u64, kinds: Vec<DensityKind>, mode: FbarMode) -> Result<Self> {
        let truth = problem.truth(&f)?;
        let densities = kinds
            .iter()
            .map(|&k| {
                if mode == FbarMode::Pilot && needs_fbar(k) {
                    Ok(None)
                } else {
                    problem.build_density(k, &f, truth).map(Some)
                }
            })
            .collect::<Result<_>>()?;
        Ok(DensityStrategies { problem, f, truth, n, kinds, densities })
    }

    fn particles(&self, strategy: usize, rng: &mut LabRng) -> Result<Option<WeightedParticles<S::Param>>> {
        let prebuilt = self.densities[strategy].as_ref();
        let Some((own, budget)) = trial_density(&self.problem, &self.f, self.kinds[strategy], prebuilt, self.n, rng)? else {
            return Ok(None);
        };
        let q = own.as_ref().or(prebuilt).expect("a density is available");
        importance_sampling(&self.problem, q, budget as usize, rng).map(Some)
    }
}

fn parse_kinds(experiment: Experiment, tokens: &[String], allowed: &[DensityKind]) -> Result<Vec<DensityKind>> {
    tokens
        .iter()
        .map(|t| match t.parse::<DensityKind>() {
            Ok(k) if allowed.contains(&k) => Ok(k),
            _ => Err(unknown_strategy(experiment, t)),
        })
        .collect()
}

const INDEPENDENT: [DensityKind; 4] = [DensityKind::Prior, DensityKind::Posterior, DensityKind::EssOptimal, DensityKind::Targeted];

pub(crate) struct Continuous(DensityStrategies<IntervalProblem>);

impl Continuous {
    pub(crate) fn new(n: u64, tokens: &[String], mode: FbarMode) -> Result<Self> {
        let kinds = parse_kinds(Experiment::Continuous, tokens, &INDEPENDENT)?;
        Ok(Continuous(DensityStrategies::new(IntervalProblem::laplace(), TargetFunction::identity(), n, kinds, mode)?))
    }
}

impl TrialRunner for Continuous {
    fn trial(&self, strategy: usize, rng: &mut LabRng, dump: bool) -> Result<Outcome> {
        match self.0.particles(strategy, rng)? {
            Some(parts) => score_particles(&parts, &self.0.f, self.0.truth, dump),
            None => Ok(Outcome::default()),
        }
    }
}

/// Large-N variance of every independent density, in units of `1/N`.
fn unit_variances<S: SamplingSetting>(problem: &S, f: &TargetFunction<S::Param>, kinds: &[DensityKind]) -> Result<serde_json::Value> {
    let truth = problem.truth(f)?;
    let mut m = serde_json::Map::new();
    for &k in kinds {
        let q = problem.build_density(k, f, truth)?;
        let v = match problem.sampling_variance(&q, f, 1) {
            Ok(v) => json!(v),
            Err(LfiError::DivergentIntegral(_)) => json!("inf"),
            Err(e) => return Err(e),
        };
        m.insert(k.token().into(), v);
    }
    Ok(serde_json::Value::Object(m))
}

pub(crate) fn continuous_oracle(n: u64) -> Result<serde_json::Value> {
    let p = IntervalProblem::laplace();
    let f = TargetFunction::identity();
    Ok(json!({
        "evidence": p.evidence(),
        "truth": p.posterior_expectation(&f)?,
        "n_times_variance": unit_variances(&p, &f, &INDEPENDENT)?,
        "n": n,
    }))
}

pub(crate) struct ModelSelection(DensityStrategies<ModelSelectionProblem>);

impl ModelSelection {
    pub(crate) fn new(n: u64, tokens: &[String], mode: FbarMode) -> Result<Self> {
        let kinds = parse_kinds(Experiment::ModelSelection, tokens, &INDEPENDENT)?;
        Ok(ModelSelection(DensityStrategies::new(
            ModelSelectionProblem::two_model(),
            TargetFunction::model_indicator(0),
            n,
            kinds,
            mode,
        )?))
    }
}

impl TrialRunner for ModelSelection {
    fn trial(&self, strategy: usize, rng: &mut LabRng, dump: bool) -> Result<Outcome> {
        let Some(parts) = self.0.particles(strategy, rng)? else {
            return Ok(Outcome::default());
        };
        let mut out = score_particles(&parts, &self.0.f, self.0.truth, dump)?;
        let on_first = parts.entries().iter().filter(|p| p.theta.model == 0).count();
        out.put("model1_fraction", on_first as f64 / parts.len() as f64);
        Ok(out)
    }
}

pub(crate) fn model_selection_oracle(n: u64) -> Result<serde_json::Value> {
    let p = ModelSelectionProblem::two_model();
    let f = TargetFunction::<ModelTheta>::model_indicator(0);
    let truth = p.truth(&f)?;
    let mut mass = serde_json::Map::new();
    for k in INDEPENDENT {
        mass.insert(k.token().into(), json!(p.build_density(k, &f, truth)?.model_masses()[0]));
    }
    Ok(json!({
        "posterior_model_probabilities": p.posterior_model_probabilities()?,
        "truth": truth,
        "model1_mass": mass,
        "n_times_variance": unit_variances(&p, &f, &INDEPENDENT)?,
        "n": n,
    }))
}

/// Weighted and kernel-regression estimates from the same particles, for
/// independent sampling from five densities and for stratified sampling.
pub(crate) struct Kde {
    inner: DensityStrategies<IntervalProblem>,
    /// Strategy `i` is stratified rather than independent.
    stratified: Vec<bool>,
}

impl Kde {
    pub(crate) fn new(n: u64, tokens: &[String], mode: FbarMode) -> Result<Self> {
        let mut kinds = Vec::with_capacity(tokens.len());
        let mut stratified = Vec::with_capacity(tokens.len());
        let allowed = [INDEPENDENT.as_slice(), &[DensityKind::StratifiedTargeted]].concat();
        for t in tokens {
            if t == "stratified" {
                kinds.push(DensityKind::StratifiedTargeted);
                stratified.push(true);
            } else {
                kinds.extend(parse_kinds(Experiment::Kde, std::slice::from_ref(t), &allowed)?);
                stratified.push(false);
            }
        }
        let inner = DensityStrategies::new(IntervalProblem::linear(), TargetFunction::indicator_below(0.5), n, kinds, mode)?;
        Ok(Kde { inner, stratified })
    }
}

impl TrialRunner for Kde {
    fn trial(&self, strategy: usize, rng: &mut LabRng, dump: bool) -> Result<Outcome> {
        let s = &self.inner;
        let parts = if self.stratified[strategy] {
            let prebuilt = s.densities[strategy].as_ref();
            match trial_density(&s.problem, &s.f, s.kinds[strategy], prebuilt, s.n, rng)? {
                Some((own, budget)) => {
                    let base = own.as_ref().or(prebuilt).expect("a density is available");
                    Some(stratified_particles(&s.problem, base, budget as usize, rng)?)
                }
                None => None,
            }
        } else {
            s.particles(strategy, rng)?
        };
        let Some(parts) = parts else {
            return Ok(Outcome::default());
        };
        let mut out = score_particles(&parts, &s.f, s.truth, dump)?;
        match kernel_posterior_expectation(&parts, &s.problem, &s.f, default_bandwidth(parts.len()), DEFAULT_KERNEL_QUAD_ORDER) {
            Ok(k) => {
                out.put("kde_squared_error", (k.value - s.truth).powi(2));
                out.put("kde_underflow", if k.underflow { 1.0 } else { 0.0 });
            }
            Err(LfiError::ZeroTotalWeight) => {}
            Err(e) => return Err(e),
        }
        Ok(out)
    }
}

pub(crate) fn kde_oracle(n: u64) -> Result<serde_json::Value> {
    let p = IntervalProblem::linear();
    let f = TargetFunction::indicator_below(0.5);
    let kinds = [INDEPENDENT.as_slice(), &[DensityKind::StratifiedTargeted]].concat();
    Ok(json!({
        "evidence": p.evidence(),
        "truth": p.posterior_expectation(&f)?,
        "n_times_variance": unit_variances(&p, &f, &kinds)?,
        "n": n,
    }))
}
