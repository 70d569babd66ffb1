//! Posterior-expectation estimators: weighted particle averages, plug-in
//! posteriors over discrete grids, and numerically integrated kernel
//! regression.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LfiError, Result};
use crate::problems::{Atom, DiscreteProblem, IntervalProblem, ModelTheta, TargetFunction};
use crate::quadrature::Integrator;

/// One simulated parameter with its importance weight and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle<P> {
    pub theta: P,
    pub weight: f64,
    pub round: usize,
    pub accepted: bool,
}

/// A non-empty particle population. Rejected particles carry zero weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedParticles<P> {
    entries: Vec<Particle<P>>,
}

impl<P> WeightedParticles<P> {
    pub fn new(entries: Vec<Particle<P>>) -> Result<Self> {
        if entries.is_empty() {
            return Err(LfiError::InvalidInput("particle population is empty".into()));
        }
        for (i, p) in entries.iter().enumerate() {
            if !(p.weight.is_finite() && p.weight >= 0.0) {
                return Err(LfiError::InvalidInput(format!("particle {i} has weight {}", p.weight)));
            }
            if !p.accepted && p.weight != 0.0 {
                return Err(LfiError::InvalidInput(format!("rejected particle {i} has nonzero weight")));
            }
        }
        Ok(WeightedParticles { entries })
    }

    pub fn entries(&self) -> &[Particle<P>] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<Particle<P>> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.entries.iter().map(|p| p.weight).collect()
    }

    pub fn n_accepted(&self) -> usize {
        self.entries.iter().filter(|p| p.accepted).count()
    }

    pub fn total_weight(&self) -> f64 {
        self.entries.iter().map(|p| p.weight).sum()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.n_accepted() as f64 / self.len() as f64
    }

    pub fn accepted(&self) -> impl Iterator<Item = &Particle<P>> {
        self.entries.iter().filter(|p| p.accepted)
    }

    /// Multiplies every weight by `c > 0`.
    pub fn scaled(mut self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(LfiError::InvalidInput(format!("scale {c} must be positive")));
        }
        for p in &mut self.entries {
            p.weight *= c;
        }
        Ok(self)
    }
}

/// Parameter types that can be written as CSV columns.
pub trait ParamColumns: Sized {
    fn headers(dims: usize) -> Vec<String>;
    fn dims(&self) -> usize;
    fn to_columns(&self) -> Vec<f64>;
    fn from_columns(cols: &[f64]) -> Option<Self>;
}

impl ParamColumns for f64 {
    fn headers(_: usize) -> Vec<String> {
        vec!["theta".into()]
    }
    fn dims(&self) -> usize {
        1
    }
    fn to_columns(&self) -> Vec<f64> {
        vec![*self]
    }
    fn from_columns(cols: &[f64]) -> Option<Self> {
        cols.first().copied()
    }
}

impl ParamColumns for Atom {
    fn headers(_: usize) -> Vec<String> {
        vec!["index".into(), "theta".into()]
    }
    fn dims(&self) -> usize {
        1
    }
    fn to_columns(&self) -> Vec<f64> {
        vec![self.index as f64, self.value]
    }
    fn from_columns(cols: &[f64]) -> Option<Self> {
        match cols {
            [i, v, ..] => Some(Atom { index: *i as usize, value: *v }),
            _ => None,
        }
    }
}

impl ParamColumns for [f64; 2] {
    fn headers(_: usize) -> Vec<String> {
        vec!["theta1".into(), "theta2".into()]
    }
    fn dims(&self) -> usize {
        2
    }
    fn to_columns(&self) -> Vec<f64> {
        self.to_vec()
    }
    fn from_columns(cols: &[f64]) -> Option<Self> {
        match cols {
            [a, b, ..] => Some([*a, *b]),
            _ => None,
        }
    }
}

impl ParamColumns for ModelTheta {
    fn headers(dims: usize) -> Vec<String> {
        std::iter::once("model".to_string())
            .chain((1..=dims).map(|i| format!("theta{i}")))
            .collect()
    }
    fn dims(&self) -> usize {
        self.coords.len()
    }
    fn to_columns(&self) -> Vec<f64> {
        std::iter::once(self.model as f64).chain(self.coords.iter().copied()).collect()
    }
    fn from_columns(cols: &[f64]) -> Option<Self> {
        let (m, rest) = cols.split_first()?;
        Some(ModelTheta { model: *m as usize, coords: rest.to_vec() })
    }
}

impl<P: ParamColumns> WeightedParticles<P> {
    /// Writes columns `theta.., weight, round, accepted`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let dims = self.entries[0].theta.dims();
        let mut w = csv::Writer::from_writer(writer);
        let mut header = P::headers(dims);
        header.extend(["weight", "round", "accepted"].map(String::from));
        w.write_record(&header)?;
        for p in &self.entries {
            let mut row: Vec<String> = p.theta.to_columns().iter().map(|x| format!("{x:?}")).collect();
            row.push(format!("{:?}", p.weight));
            row.push(p.round.to_string());
            row.push(if p.accepted { "1" } else { "0" }.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| LfiError::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| LfiError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut entries = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let n = rec.len();
            if n < 4 {
                return Err(LfiError::InvalidInput("particle CSV needs at least four columns".into()));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| LfiError::InvalidInput(format!("bad number `{s}` in particle CSV")))
            };
            let cols = rec.iter().take(n - 3).map(parse).collect::<Result<Vec<_>>>()?;
            let theta = P::from_columns(&cols)
                .ok_or_else(|| LfiError::InvalidInput("malformed parameter columns".into()))?;
            entries.push(Particle {
                theta,
                weight: parse(&rec[n - 3])?,
                round: parse(&rec[n - 2])? as usize,
                accepted: parse(&rec[n - 1])? != 0.0,
            });
        }
        Self::new(entries)
    }
}

/// `Σ w_i f(θ_i) / Σ w_i`.
pub fn weighted_expectation<P>(particles: &WeightedParticles<P>, f: &TargetFunction<P>) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for p in particles.accepted() {
        num += p.weight * f.eval(&p.theta);
        den += p.weight;
    }
    if den <= 0.0 {
        return Err(LfiError::ZeroTotalWeight);
    }
    Ok(num / den)
}

/// Per-parameter simulation counts `n_i` and acceptance counts `n_i*`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTable {
    n: Vec<u64>,
    n_star: Vec<u64>,
}

impl CountTable {
    pub fn new(n: Vec<u64>, n_star: Vec<u64>) -> Result<Self> {
        if n.len() != n_star.len() {
            return Err(LfiError::InvalidInput("count vectors differ in length".into()));
        }
        if n.iter().zip(&n_star).any(|(a, b)| b > a) {
            return Err(LfiError::InvalidInput("acceptances exceed simulations".into()));
        }
        Ok(CountTable { n, n_star })
    }

    pub fn zeros(k: usize) -> Self {
        CountTable { n: vec![0; k], n_star: vec![0; k] }
    }

    pub fn n(&self) -> &[u64] {
        &self.n
    }

    pub fn n_star(&self) -> &[u64] {
        &self.n_star
    }

    pub fn total(&self) -> u64 {
        self.n.iter().sum()
    }

    pub fn total_accepted(&self) -> u64 {
        self.n_star.iter().sum()
    }

    /// Adds `sims` simulations with `hits` acceptances at parameter `i`.
    pub fn record(&mut self, i: usize, sims: u64, hits: u64) {
        debug_assert!(hits <= sims);
        self.n[i] += sims;
        self.n_star[i] += hits;
    }

    /// `p̂_i* = n_i*/n_i`.
    pub fn likelihood_estimates(&self) -> Result<Vec<f64>> {
        self.n
            .iter()
            .zip(&self.n_star)
            .enumerate()
            .map(|(i, (&n, &s))| {
                if n == 0 {
                    Err(LfiError::UndefinedLikelihood { index: i })
                } else {
                    Ok(s as f64 / n as f64)
                }
            })
            .collect()
    }
}

/// Plug-in posterior `π_i p̂_i* / Σ_j π_j p̂_j*`.
pub fn mle_posterior(counts: &CountTable, problem: &DiscreteProblem) -> Result<Vec<f64>> {
    if counts.n.len() != problem.k() {
        return Err(LfiError::InvalidInput("count table does not match the problem".into()));
    }
    let p_hat = counts.likelihood_estimates()?;
    let raw: Vec<f64> = problem.prior().iter().zip(&p_hat).map(|(a, b)| a * b).collect();
    let z: f64 = raw.iter().sum();
    if z <= 0.0 {
        return Err(LfiError::DegenerateEstimate);
    }
    Ok(raw.iter().map(|r| r / z).collect())
}

/// `Σ_i f(θ_i) p̂(θ_i|x*)`.
pub fn mle_expectation(counts: &CountTable, problem: &DiscreteProblem, f: &TargetFunction<Atom>) -> Result<f64> {
    let post = mle_posterior(counts, problem)?;
    Ok(problem.atoms().zip(&post).map(|(a, w)| w * f.eval(&a)).sum())
}

/// Result of the kernel-regression estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelEstimate {
    pub value: f64,
    /// Set when the kernel denominator underflowed somewhere and the local
    /// likelihood estimate was taken as zero there.
    pub underflow: bool,
}

/// Beyond this many bandwidths the Gaussian kernel is exactly zero in f64.
const KERNEL_CUTOFF: f64 = 38.7;

/// Bandwidth rule `h = N^{-1/2}`.
pub fn default_bandwidth(n: usize) -> f64 {
    1.0 / (n.max(1) as f64).sqrt()
}

/// Default quadrature order for the kernel estimator.
pub const DEFAULT_KERNEL_QUAD_ORDER: usize = 20;

/// Nadaraya–Watson estimate of the likelihood integrated against the prior:
/// `∫ f p̂ p / ∫ p̂ p` with `p̂(θ) = Σ a_i K_h(θ-θ_i) / Σ K_h(θ-θ_i)`, where
/// `a_i` is the acceptance indicator and `K` is Gaussian. Integrals use
/// adaptive Gauss–Kronrod with `quad_order` Gauss points per panel.
pub fn kernel_posterior_expectation(
    particles: &WeightedParticles<f64>,
    problem: &IntervalProblem,
    f: &TargetFunction<f64>,
    bandwidth: f64,
    quad_order: usize,
) -> Result<KernelEstimate> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(LfiError::InvalidInput(format!("bandwidth {bandwidth} must be positive")));
    }
    if quad_order == 0 {
        return Err(LfiError::InvalidInput("quadrature order must be positive".into()));
    }
    let mut pts: Vec<(f64, f64)> = particles
        .entries()
        .iter()
        .map(|p| (p.theta, if p.accepted { 1.0 } else { 0.0 }))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.first().map(|p| p.0) == pts.last().map(|p| p.0) {
        return Err(LfiError::InvalidInput("kernel regression needs two distinct parameter values".into()));
    }
    let thetas: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let reach = KERNEL_CUTOFF * bandwidth;
    let inv_h = 1.0 / bandwidth;
    let mut underflow = false;

    let mut local = |x: f64| -> f64 {
        let lo = thetas.partition_point(|&t| t < x - reach);
        let hi = thetas.partition_point(|&t| t <= x + reach);
        let mut num = 0.0;
        let mut den = 0.0;
        for &(t, a) in &pts[lo..hi] {
            let z = (x - t) * inv_h;
            let k = (-0.5 * z * z).exp();
            num += a * k;
            den += k;
        }
        if den > 0.0 {
            num / den
        } else {
            underflow = true;
            0.0
        }
    };

    let pdf = problem.prior_pdf();
    let integ = Integrator::new(quad_order).with_tolerance(0.0, 1e-7).with_max_segments(400);
    let r = integ.integrate(
        |x| {
            let w = local(x) * pdf;
            [w * f.eval(&x), w]
        },
        problem.lo(),
        problem.hi(),
        f.breakpoints(),
    );
    if r.value[1] <= 0.0 {
        return Err(LfiError::ZeroTotalWeight);
    }
    Ok(KernelEstimate { value: r.value[0] / r.value[1], underflow })
}

/// Builds particles from parallel parameter/weight/acceptance sequences,
/// all tagged with `round`.
pub fn particles_from<P: Clone>(draws: &[(P, bool)], weight: impl Fn(&P) -> f64, round: usize) -> Result<WeightedParticles<P>> {
    WeightedParticles::new(
        draws
            .iter()
            .map(|(t, acc)| Particle {
                theta: t.clone(),
                weight: if *acc { weight(t) } else { 0.0 },
                round,
                accepted: *acc,
            })
            .collect(),
    )
}

/// Convenience: rejection-style particles with unit weight on acceptance.
pub fn unit_particles<P: Clone>(draws: &[(P, bool)]) -> Result<WeightedParticles<P>> {
    particles_from(draws, |_| 1.0, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn pts(v: &[(f64, f64)]) -> WeightedParticles<f64> {
        WeightedParticles::new(
            v.iter()
                .map(|&(t, w)| Particle { theta: t, weight: w, round: 0, accepted: w > 0.0 })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn weighted_means() {
        let id = TargetFunction::identity();
        assert_eq!(weighted_expectation(&pts(&[(1.0, 1.0), (3.0, 1.0)]), &id).unwrap(), 2.0);
        assert_eq!(weighted_expectation(&pts(&[(1.0, 3.0), (0.0, 1.0)]), &id).unwrap(), 0.75);
        assert!(matches!(
            weighted_expectation(&pts(&[(1.0, 0.0)]), &id),
            Err(LfiError::ZeroTotalWeight)
        ));
    }

    #[test]
    fn invalid_populations() {
        assert!(WeightedParticles::<f64>::new(vec![]).is_err());
        let bad = Particle { theta: 0.0, weight: 1.0, round: 0, accepted: false };
        assert!(WeightedParticles::new(vec![bad]).is_err());
        let nan = Particle { theta: 0.0, weight: f64::NAN, round: 0, accepted: true };
        assert!(WeightedParticles::new(vec![nan]).is_err());
    }

    #[test]
    fn mle_posterior_examples() {
        let p = DiscreteProblem::two_point();
        let c = CountTable::new(vec![10, 10], vec![3, 0]).unwrap();
        assert_eq!(mle_posterior(&c, &p).unwrap(), vec![1.0, 0.0]);
        let c = CountTable::new(vec![10, 10], vec![10, 10]).unwrap();
        assert_eq!(mle_posterior(&c, &p).unwrap(), vec![0.5, 0.5]);
        let c = CountTable::new(vec![100, 100], vec![30, 5]).unwrap();
        let post = mle_posterior(&c, &p).unwrap();
        assert_relative_eq!(post[0], 6.0 / 7.0, epsilon = 1e-15);
        assert_relative_eq!(post[1], 1.0 / 7.0, epsilon = 1e-15);
        let c = CountTable::new(vec![0, 10], vec![0, 1]).unwrap();
        assert!(matches!(mle_posterior(&c, &p), Err(LfiError::UndefinedLikelihood { index: 0 })));
        let c = CountTable::new(vec![5, 10], vec![0, 0]).unwrap();
        assert!(matches!(mle_posterior(&c, &p), Err(LfiError::DegenerateEstimate)));
        assert!(CountTable::new(vec![1], vec![2]).is_err());
    }

    #[test]
    fn mle_with_exact_counts_matches_truth() {
        let p = DiscreteProblem::new(vec![0.0, 1.0, 2.0], vec![0.25, 0.25, 0.5], vec![0.5, 0.25, 0.75]).unwrap();
        let c = CountTable::new(vec![100, 200, 40], vec![50, 50, 30]).unwrap();
        let a = mle_posterior(&c, &p).unwrap();
        let b = p.exact_posterior().unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x, y, epsilon = 1e-14);
        }
    }

    #[test]
    fn kernel_estimator_all_accepted_constant_target() {
        let p = IntervalProblem::linear();
        let parts = pts(&[(0.1, 1.0), (0.4, 1.0), (0.9, 1.0)]);
        let e = kernel_posterior_expectation(&parts, &p, &TargetFunction::constant(2.5), 0.1, 20).unwrap();
        assert_relative_eq!(e.value, 2.5, epsilon = 1e-12);
        assert!(!e.underflow);
    }

    #[test]
    fn kernel_estimator_flags_underflow() {
        let p = IntervalProblem::linear();
        let parts = pts(&[(0.0, 1.0), (0.01, 0.0)]);
        let e = kernel_posterior_expectation(&parts, &p, &TargetFunction::identity(), 0.001, 20).unwrap();
        assert!(e.underflow);
        assert!(kernel_posterior_expectation(&pts(&[(0.3, 1.0), (0.3, 1.0)]), &p, &TargetFunction::identity(), 0.1, 20).is_err());
    }

    #[test]
    fn kernel_estimator_recovers_smooth_likelihood() {
        // Dense exact acceptance probabilities stand in for indicators: the
        // estimator is linear in the a_i so their expectation is recovered.
        let p = IntervalProblem::linear();
        let mut rng = seeded(5);
        let n = 4000;
        let entries: Vec<Particle<f64>> = (0..n)
            .map(|_| {
                let t: f64 = rng.random();
                let acc = rng.random::<f64>() < t;
                Particle { theta: t, weight: if acc { 1.0 } else { 0.0 }, round: 0, accepted: acc }
            })
            .collect();
        let parts = WeightedParticles::new(entries).unwrap();
        let e = kernel_posterior_expectation(&parts, &p, &TargetFunction::indicator_below(0.5), default_bandwidth(n), 20).unwrap();
        assert!((e.value - 0.25).abs() < 0.03, "{}", e.value);
    }

    #[test]
    fn csv_round_trip() {
        let parts = pts(&[(0.1, 1.0), (0.4, 0.0), (0.9, 2.5)]);
        let mut buf = Vec::new();
        parts.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("theta,weight,round,accepted\n"));
        let back = WeightedParticles::<f64>::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, parts);
    }

    proptest! {
        #[test]
        fn expectation_scale_invariant_and_bounded(
            v in prop::collection::vec((-10.0f64..10.0, 0.0f64..5.0), 1..40),
            c in 0.01f64..100.0,
        ) {
            prop_assume!(v.iter().any(|x| x.1 > 0.0));
            let parts = pts(&v);
            let id = TargetFunction::identity();
            let a = weighted_expectation(&parts, &id).unwrap();
            let b = weighted_expectation(&parts.clone().scaled(c).unwrap(), &id).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
            let acc: Vec<f64> = v.iter().filter(|x| x.1 > 0.0).map(|x| x.0).collect();
            let lo = acc.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = acc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(a >= lo - 1e-9 && a <= hi + 1e-9);
            let ind = TargetFunction::indicator_below(0.0);
            let q = weighted_expectation(&parts, &ind).unwrap();
            prop_assert!((0.0..=1.0).contains(&q));
        }
    }
}
