use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DiscreteProblem, IntervalProblem, LikelihoodShape, ModelSelectionProblem, ModelSpec};
use crate::error::{LfiError, Result};

/// JSON description of a problem.
///
/// ```json
/// {"kind": "discrete", "values": [1, 2], "prior": [0.5, 0.5], "likelihood": [0.3, 0.05]}
/// {"kind": "interval", "lo": -40, "hi": 60, "prior": "uniform",
///  "likelihood": {"name": "laplace_likelihood", "center": 0, "rate": 1}}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSpec {
    Discrete {
        values: Vec<f64>,
        prior: Vec<f64>,
        likelihood: Vec<f64>,
    },
    Interval {
        lo: f64,
        hi: f64,
        #[serde(default)]
        prior: PriorName,
        likelihood: LikelihoodShape,
    },
    ModelSelection {
        bounds: Vec<(f64, f64)>,
        models: Vec<ModelSpec>,
    },
}

/// Built-in prior densities. Only the uniform prior is provided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorName {
    #[default]
    Uniform,
}

/// A constructed problem of any kind.
#[derive(Debug, Clone)]
pub enum AnyProblem {
    Discrete(DiscreteProblem),
    Interval(IntervalProblem),
    ModelSelection(ModelSelectionProblem),
}

impl ProblemSpec {
    pub fn build(&self) -> Result<AnyProblem> {
        Ok(match self {
            ProblemSpec::Discrete { values, prior, likelihood } => {
                AnyProblem::Discrete(DiscreteProblem::new(values.clone(), prior.clone(), likelihood.clone())?)
            }
            ProblemSpec::Interval { lo, hi, prior: PriorName::Uniform, likelihood } => {
                AnyProblem::Interval(IntervalProblem::uniform(*lo, *hi, *likelihood)?)
            }
            ProblemSpec::ModelSelection { bounds, models } => {
                AnyProblem::ModelSelection(ModelSelectionProblem::new(bounds.clone(), models.clone())?)
            }
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LfiError::io(path, e))?;
        Self::from_json(&text)
    }
}

impl From<&DiscreteProblem> for ProblemSpec {
    fn from(p: &DiscreteProblem) -> Self {
        ProblemSpec::Discrete {
            values: p.values().to_vec(),
            prior: p.prior().to_vec(),
            likelihood: p.likelihood_values().to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrete_round_trip() {
        let p = DiscreteProblem::two_point();
        let text = serde_json::to_string(&ProblemSpec::from(&p)).unwrap();
        assert!(text.contains("\"kind\":\"discrete\""));
        match ProblemSpec::from_json(&text).unwrap().build().unwrap() {
            AnyProblem::Discrete(q) => assert_eq!(p, q),
            other => panic!("wrong kind {other:?}"),
        }
    }

    #[test]
    fn interval_from_named_builtins() {
        let text = r#"{"kind":"interval","lo":-40,"hi":60,"prior":"uniform",
            "likelihood":{"name":"laplace_likelihood","center":0,"rate":1}}"#;
        let AnyProblem::Interval(p) = ProblemSpec::from_json(text).unwrap().build().unwrap() else {
            panic!("expected interval problem");
        };
        assert!((p.evidence() - 0.02).abs() < 1e-12);
        let g = r#"{"kind":"interval","lo":-5,"hi":5,"likelihood":{"name":"gaussian_likelihood","center":0,"sd":1}}"#;
        assert!(ProblemSpec::from_json(g).unwrap().build().is_ok());
    }

    #[test]
    fn model_selection_from_json() {
        let text = r#"{"kind":"model_selection","bounds":[[-10,15],[-10,15]],"models":[
            {"prior":0.5,"factors":[{"name":"gaussian_likelihood","center":0,"sd":1},{"name":"constant_likelihood","value":1}]},
            {"prior":0.5,"factors":[{"name":"gaussian_likelihood","center":0,"sd":1},{"name":"gaussian_likelihood","center":0,"sd":1}]}]}"#;
        let AnyProblem::ModelSelection(p) = ProblemSpec::from_json(text).unwrap().build().unwrap() else {
            panic!("expected model selection problem");
        };
        let q = ModelSelectionProblem::two_model();
        assert_eq!(p.models(), q.models());
    }

    #[test]
    fn invalid_json_problem_is_rejected() {
        let text = r#"{"kind":"discrete","values":[1],"prior":[0.5],"likelihood":[0.3]}"#;
        assert!(ProblemSpec::from_json(text).unwrap().build().is_err());
        assert!(ProblemSpec::from_json(r#"{"kind":"nope"}"#).is_err());
    }
}
