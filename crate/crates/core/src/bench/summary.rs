use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::TrialRecord;
use crate::error::{LfiError, Result};

/// How quartiles are read off the sorted sample.
pub const PERCENTILE_CONVENTION: &str = "nearest-rank: q(p) = sorted[ceil((n - 1) p)], zero-based";

pub const STANDARD_ERROR_NOTE: &str = "standard errors are the naive sd/sqrt(n) across trials; for ratio \
     estimators with heavy-tailed errors they likely underestimate variability";

/// Nearest-rank percentile of an ascending sample.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "percentile of an empty sample");
    let idx = ((n - 1) as f64 * p).ceil() as usize;
    sorted[idx.min(n - 1)]
}

/// Location and spread of one score across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: usize,
    #[serde(with = "crate::scores::inf_as_string")]
    pub mean: f64,
    #[serde(with = "crate::scores::inf_as_string")]
    pub se: f64,
    #[serde(with = "crate::scores::inf_as_string")]
    pub q25: f64,
    #[serde(with = "crate::scores::inf_as_string")]
    pub median: f64,
    #[serde(with = "crate::scores::inf_as_string")]
    pub q75: f64,
}

impl Moments {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let se = if values.len() > 1 && mean.is_finite() {
            // Shifted by the first value, so constant samples give exactly 0.
            let d: Vec<f64> = values.iter().map(|v| v - values[0]).collect();
            let s1: f64 = d.iter().sum();
            let s2: f64 = d.iter().map(|x| x * x).sum();
            let var = ((s2 - s1 * s1 / n) / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        } else if mean.is_finite() {
            0.0
        } else {
            f64::NAN
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Moments {
            count: values.len(),
            mean,
            se,
            q25: nearest_rank(&sorted, 0.25),
            median: nearest_rank(&sorted, 0.5),
            q75: nearest_rank(&sorted, 0.75),
        })
    }
}

/// Scores of one strategy at one budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: String,
    pub n: u64,
    pub trials: usize,
    /// Trials whose estimator signalled zero total weight or an undefined
    /// estimate. They are excluded from every statistic below.
    pub degenerate: usize,
    /// Every trial was degenerate.
    pub empty: bool,
    pub squared_error: Option<Moments>,
    pub ess: Option<Moments>,
    pub acceptance_rate: Option<Moments>,
    pub extra: BTreeMap<String, Moments>,
}

/// Aggregates records into one summary per `(n, strategy)` pair, in order of
/// first appearance.
pub fn summarize(records: &[TrialRecord]) -> Result<Vec<StrategySummary>> {
    if records.is_empty() {
        return Err(LfiError::InvalidInput("no trial records to summarize".into()));
    }
    let mut order: Vec<(u64, &str)> = Vec::new();
    let mut groups: BTreeMap<(u64, &str), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.n, r.strategy.as_str());
        groups
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r);
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let rs = &groups[&key];
            let ok: Vec<&&TrialRecord> = rs.iter().filter(|r| !r.degenerate).collect();
            let collect = |get: &dyn Fn(&TrialRecord) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| get(r)).collect() };
            let mut extra_keys: Vec<&str> = ok.iter().flat_map(|r| r.extra.keys().map(String::as_str)).collect();
            extra_keys.sort_unstable();
            extra_keys.dedup();
            let extra = extra_keys
                .into_iter()
                .filter_map(|k| Moments::of(&collect(&|r| r.extra.get(k).map(|s| s.0))).map(|m| (k.to_string(), m)))
                .collect();
            StrategySummary {
                strategy: key.1.to_string(),
                n: key.0,
                trials: rs.len(),
                degenerate: rs.len() - ok.len(),
                empty: ok.is_empty(),
                squared_error: Moments::of(&collect(&|r| r.squared_error)),
                ess: Moments::of(&collect(&|r| r.ess)),
                acceptance_rate: Moments::of(&collect(&|r| r.acceptance_rate)),
                extra,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::Score;
    use proptest::prelude::*;

    fn record(strategy: &str, se: Option<f64>) -> TrialRecord {
        TrialRecord {
            n: 10,
            trial: 0,
            strategy: strategy.into(),
            estimate: se,
            squared_error: se,
            ess: se.map(|_| 3.0),
            acceptance_rate: Some(0.5),
            degenerate: se.is_none(),
            extra: BTreeMap::from([("x".to_string(), Score(1.0))]),
        }
    }

    #[test]
    fn small_sample_quartiles() {
        let m = Moments::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(m.mean, 2.5);
        assert_eq!((m.q25, m.median, m.q75), (2.0, 3.0, 4.0));
    }

    #[test]
    fn constant_sample_has_zero_se() {
        let m = Moments::of(&[0.7; 9]).unwrap();
        assert_eq!(m.se, 0.0);
        let one = Moments::of(&[0.3]).unwrap();
        assert_eq!((one.q25, one.median, one.q75, one.se), (0.3, 0.3, 0.3, 0.0));
    }

    #[test]
    fn degenerate_trials_are_counted_not_averaged() {
        let rs = vec![record("a", Some(1.0)), record("a", None), record("b", None), record("a", Some(3.0))];
        let s = summarize(&rs).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].strategy, "a");
        assert_eq!((s[0].trials, s[0].degenerate), (3, 1));
        assert_eq!(s[0].squared_error.as_ref().unwrap().mean, 2.0);
        assert!(s[1].empty && s[1].squared_error.is_none());
        assert!(summarize(&[]).is_err());
    }

    proptest! {
        #[test]
        fn quartiles_are_ordered(v in prop::collection::vec(-1e3f64..1e3, 1..60)) {
            let m = Moments::of(&v).unwrap();
            prop_assert!(m.q25 <= m.median && m.median <= m.q75);
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m.mean >= lo - 1e-9 && m.mean <= hi + 1e-9);
        }
    }
}
