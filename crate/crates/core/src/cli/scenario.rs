//! Strict JSON scenario files and their resolution into a [`Scenario`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{
    AgentModel, ClSource, ControlError, ControllerConfig, Plant, RegressorSpec, SwarmModel,
    SwarmState, UpdateMode, EPS_ADD, RANK_TOL,
};
use crate::graph::{alpha_lower_bound, GraphError, UndirectedGraph};
use crate::linalg::{LinalgError, Matrix, RiccatiOptions};
use crate::quantize::{QuantizeError, QuantizerConfig};
use crate::sim::{HistoryConfig, IntegratorConfig, Scenario};

/// Half-width of the uniform box used for seeded initial states.
pub const X_INIT_RANGE: f64 = 10.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at `{path}` (line {line}, column {column}): {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub graph: GraphSection,
    pub dynamics: DynamicsSection,
    pub parameters: ParametersSection,
    #[serde(default)]
    pub controller: ControllerSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub seed: u64,
}

/// Either a full weight matrix or `n` plus 1-based `[i, j, w]` edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub regressor: RegressorSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegressorSection {
    /// Per-agent `γ_d + β_d e^{−d} x_{d,k}` rows.
    #[serde(rename = "paper_phi")]
    Exponential { gamma: Vec<f64>, beta: Vec<f64> },
    Zero {
        #[serde(default = "one")]
        m: usize,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AutoKeyword {
    #[serde(rename = "auto")]
    Auto,
}

/// A number or the string `"auto"`, meaning `1/(2λ₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSpec {
    Value(f64),
    Auto(AutoKeyword),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParametersSection {
    /// One row per agent.
    pub theta_true: Vec<Vec<f64>>,
    pub theta_hat_init: Vec<Vec<f64>>,
    /// One row per agent; drawn from `seed` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_init: Option<Vec<Vec<f64>>>,
    pub alpha: AlphaSpec,
    /// ARE state weight; identity when absent.
    #[serde(default, rename = "Q", skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSection {
    pub update_mode: UpdateMode,
    pub cl_source: ClSource,
    /// History stack capacity.
    pub r: usize,
    pub t_record: f64,
    pub sigma: f64,
    pub eps_add: f64,
    pub rank_tol: f64,
    pub theorem_grade: bool,
}

impl Default for ControllerSection {
    fn default() -> Self {
        Self {
            update_mode: UpdateMode::ConcurrentLearning,
            cl_source: ClSource::Oracle,
            r: 20,
            t_record: 0.5,
            sigma: 0.0,
            eps_add: EPS_ADD,
            rank_tol: RANK_TOL,
            theorem_grade: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    pub step_h: f64,
    pub t_final: f64,
    pub sample_every: usize,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let d = IntegratorConfig::default();
        Self {
            step_h: d.step_h,
            t_final: d.t_final,
            sample_every: d.sample_every,
        }
    }
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<Matrix, ScenarioError> {
    Matrix::from_rows(rows).map_err(|e| ScenarioError::Invalid(format!("{name}: {e}")))
}

fn per_agent(name: &str, rows: &[Vec<f64>], n: usize, width: usize) -> Result<Vec<f64>, ScenarioError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != width) {
        return Err(ScenarioError::Invalid(format!(
            "{name} must have {n} rows of length {width}"
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(ScenarioError::Invalid(format!("{name} has non-finite entries")));
    }
    Ok(flat)
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            ScenarioError::Parse {
                path,
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn graph(&self) -> Result<UndirectedGraph, ScenarioError> {
        let g = &self.graph;
        match (&g.weights, g.n, &g.edges) {
            (Some(w), None, None) => Ok(UndirectedGraph::from_weights(matrix("graph.weights", w)?)?),
            (None, Some(n), Some(edges)) => Ok(UndirectedGraph::from_weighted_edges(n, edges)?),
            (None, Some(n), None) => Ok(UndirectedGraph::from_weighted_edges(n, &[])?),
            _ => Err(ScenarioError::Invalid(
                "graph needs either `weights` or `n` with `edges`".into(),
            )),
        }
    }

    /// Builds the in-memory scenario, solving the ARE.
    pub fn resolve(&self) -> Result<Scenario, ScenarioError> {
        let graph = self.graph()?;
        let n = graph.n();
        let plant = Plant::new(matrix("dynamics.A", &self.dynamics.a)?, matrix("dynamics.B", &self.dynamics.b)?)?;
        let (p, q_in) = (plant.state_dim(), plant.input_dim());

        let specs: Vec<RegressorSpec> = match &self.dynamics.regressor {
            RegressorSection::Exponential { gamma, beta } => {
                if gamma.len() != n || beta.len() != n {
                    return Err(ScenarioError::Invalid(format!(
                        "paper_phi needs {n} gamma and beta values"
                    )));
                }
                (0..n)
                    .map(|i| RegressorSpec::Exponential {
                        q_in,
                        gamma: gamma[i],
                        beta: beta[i],
                        d: i + 1,
                    })
                    .collect()
            }
            RegressorSection::Zero { m } => vec![RegressorSpec::Zero { q_in, m: *m }; n],
        };
        let m = specs[0].param_dim();
        let params = &self.parameters;
        let theta = per_agent("parameters.theta_true", &params.theta_true, n, m)?;
        let theta_hat = per_agent("parameters.theta_hat_init", &params.theta_hat_init, n, m)?;
        let agents = specs
            .into_iter()
            .enumerate()
            .map(|(i, phi)| AgentModel {
                phi,
                theta_true: theta[i * m..(i + 1) * m].to_vec(),
            })
            .collect();
        let model = SwarmModel::new(plant, agents)?;

        let x = match &params.x_init {
            Some(rows) => per_agent("parameters.x_init", rows, n, p)?,
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                (0..n * p).map(|_| rng.gen_range(-X_INIT_RANGE..X_INIT_RANGE)).collect()
            }
        };

        let alpha = match params.alpha {
            AlphaSpec::Value(a) if a > 0.0 && a.is_finite() => a,
            AlphaSpec::Value(a) => return Err(ScenarioError::Invalid(format!("alpha = {a} must be positive"))),
            AlphaSpec::Auto(_) => alpha_lower_bound(&graph.laplacian())?,
        };
        let q = match &params.q {
            Some(rows) => matrix("parameters.Q", rows)?,
            None => Matrix::identity(p),
        };

        let c = &self.controller;
        if c.r == 0 {
            return Err(ScenarioError::Invalid("controller.r must be at least 1".into()));
        }
        if c.sigma.is_nan() || c.sigma < 0.0 {
            return Err(ScenarioError::Invalid(format!("controller.sigma = {} must be ≥ 0", c.sigma)));
        }
        let controller = ControllerConfig::design(&model.plant, &q, alpha, &RiccatiOptions::default())?
            .with_mode(c.update_mode)
            .with_source(c.cl_source)
            .with_quantizer(QuantizerConfig::with_sigma(c.sigma)?)
            .with_theorem_grade(c.theorem_grade);

        let integ = &self.integrator;
        let integrator = IntegratorConfig {
            step_h: integ.step_h,
            t_final: integ.t_final,
            sample_every: integ.sample_every,
        };
        integrator
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;

        Ok(Scenario {
            model,
            graph,
            controller,
            initial: SwarmState::new(0.0, x, theta_hat),
            integrator,
            history: HistoryConfig {
                capacity: c.r,
                t_record: c.t_record,
                eps_add: c.eps_add,
                rank_tol: c.rank_tol,
            },
        })
    }
}
