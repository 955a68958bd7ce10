//! Agent models, the adaptive consensus controller, history stacks and the
//! Lyapunov diagnostics used to certify exponential decay.
//!
//! Agent `i` evolves as `ẋᵢ = A xᵢ + B (uᵢ + Φᵢ(t, xᵢ) θᵢ)`. The controller
//! applies
//!
//! ```text
//! uᵢ  = α K Σⱼ aᵢⱼ (x̃ᵢ − x̃ⱼ) − Φᵢ(t, xᵢ) θ̂ᵢ,        K = −BᵀP
//! θ̂̇ᵢ = Φᵢᵀ BᵀP Σⱼ aᵢⱼ (x̃ᵢ − x̃ⱼ) − Σₖ Φᵢₖᵀ (Φᵢₖ θ̂ᵢ − Φᵢₖ θᵢ)
//! ```
//!
//! where `x̃` is the transmitted (possibly quantized) state and the second sum
//! runs over the agent's history stack. The baseline law drops that sum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{algebraic_connectivity, GraphError, UndirectedGraph};
use crate::linalg::{
    care_residual, eig_symmetric, kron, solve_care, solve_linear, spectral_norm_psd, LinalgError,
    Matrix, RiccatiOptions, EIG_TOL,
};
use crate::quantize::QuantizerConfig;

/// Default λ_min threshold for the rank condition.
pub const RANK_TOL: f64 = 1e-6;
/// Default relative novelty gate for history admission.
pub const EPS_ADD: f64 = 1e-3;
/// Largest ARE residual accepted for a controller.
pub const ARE_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("agent index {0} out of range for {1} agents")]
    AgentIndex(usize, usize),
    #[error("history stack of agent {0} is empty")]
    EmptyStack(usize),
    #[error("B does not have full column rank; cannot reconstruct Φθ")]
    RankDeficientB,
    #[error("non-finite value in the closed-loop vector field at t = {0}")]
    NonFinite(f64),
    #[error("pair (A, B) is not stabilizable: {0}")]
    NotStabilizable(LinalgError),
    #[error("history stack of agent {agent} fails the rank condition (q = {q:.3e})")]
    Uncertified { agent: usize, q: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Regressor `Φᵢ(t, x) ∈ R^{q×m}` for one agent.
#[derive(Debug, Clone, PartialEq)]
pub enum RegressorSpec {
    Zero { q_in: usize, m: usize },
    /// `Φ = [γ + β e^{−d} x₁, …, γ + β e^{−d} x_q]ᵀ` with `m = 1`; `d` is the
    /// 1-based agent index.
    Exponential { q_in: usize, gamma: f64, beta: f64, d: usize },
    Constant(Matrix),
}

impl RegressorSpec {
    pub fn input_dim(&self) -> usize {
        match self {
            Self::Zero { q_in, .. } | Self::Exponential { q_in, .. } => *q_in,
            Self::Constant(m) => m.rows(),
        }
    }

    pub fn param_dim(&self) -> usize {
        match self {
            Self::Zero { m, .. } => *m,
            Self::Exponential { .. } => 1,
            Self::Constant(m) => m.cols(),
        }
    }

    /// Smallest state dimension the regressor can read.
    pub fn min_state_dim(&self) -> usize {
        match self {
            Self::Exponential { q_in, .. } => *q_in,
            _ => 1,
        }
    }

    pub fn evaluate(&self, _t: f64, x: &[f64]) -> Matrix {
        match self {
            Self::Zero { q_in, m } => Matrix::zeros(*q_in, *m),
            Self::Exponential { q_in, gamma, beta, d } => {
                let c = beta * (-(*d as f64)).exp();
                let mut out = Matrix::zeros(*q_in, 1);
                for k in 0..*q_in {
                    out[(k, 0)] = gamma + c * x[k];
                }
                out
            }
            Self::Constant(m) => m.clone(),
        }
    }
}

/// Shared linear dynamics `(A, B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub a: Matrix,
    pub b: Matrix,
}

impl Plant {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self, ControlError> {
        if !a.is_square() || a.rows() != b.rows() {
            return Err(ControlError::Dimension(format!(
                "A is {:?}, B is {:?}",
                a.shape(),
                b.shape()
            )));
        }
        Ok(Self { a, b })
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.cols()
    }

    /// Left pseudo-inverse `(BᵀB)⁻¹Bᵀ`.
    pub fn b_pinv(&self) -> Result<Matrix, ControlError> {
        let bt = self.b.transpose();
        let btb = &bt * &self.b;
        solve_linear(&btb, &bt).map_err(|_| ControlError::RankDeficientB)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentModel {
    pub phi: RegressorSpec,
    /// True parameter, visible to the simulator and to oracle-mode learning.
    pub theta_true: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmModel {
    pub plant: Plant,
    pub agents: Vec<AgentModel>,
}

/// `(n, p, q, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub p: usize,
    pub q_in: usize,
    pub m: usize,
}

impl SwarmModel {
    pub fn new(plant: Plant, agents: Vec<AgentModel>) -> Result<Self, ControlError> {
        let first = agents
            .first()
            .ok_or_else(|| ControlError::Dimension("swarm has no agents".into()))?;
        let m = first.phi.param_dim();
        for (i, agent) in agents.iter().enumerate() {
            if agent.phi.input_dim() != plant.input_dim() {
                return Err(ControlError::Dimension(format!(
                    "agent {}: regressor has {} rows but B has {} columns",
                    i + 1,
                    agent.phi.input_dim(),
                    plant.input_dim()
                )));
            }
            if agent.phi.min_state_dim() > plant.state_dim() {
                return Err(ControlError::Dimension(format!(
                    "agent {}: regressor reads {} state coordinates but p = {}",
                    i + 1,
                    agent.phi.min_state_dim(),
                    plant.state_dim()
                )));
            }
            if agent.phi.param_dim() != m || agent.theta_true.len() != m {
                return Err(ControlError::Dimension(format!(
                    "agent {}: parameter dimension must be {m}",
                    i + 1
                )));
            }
        }
        Ok(Self { plant, agents })
    }

    pub fn dims(&self) -> Dims {
        Dims {
            n: self.agents.len(),
            p: self.plant.state_dim(),
            q_in: self.plant.input_dim(),
            m: self.agents[0].phi.param_dim(),
        }
    }

    pub fn theta_true(&self) -> Vec<f64> {
        self.agents.iter().flat_map(|a| a.theta_true.iter().copied()).collect()
    }
}

/// Stacked states and estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub t: f64,
    pub x: Vec<f64>,
    pub theta_hat: Vec<f64>,
}

impl SwarmState {
    pub fn new(t: f64, x: Vec<f64>, theta_hat: Vec<f64>) -> Self {
        Self { t, x, theta_hat }
    }

    pub fn agent_x(&self, i: usize, p: usize) -> &[f64] {
        &self.x[i * p..(i + 1) * p]
    }

    pub fn agent_theta(&self, i: usize, m: usize) -> &[f64] {
        &self.theta_hat[i * m..(i + 1) * m]
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.theta_hat).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    Baseline,
    ConcurrentLearning,
}

/// Where the concurrent-learning term gets `Φ(x_k) θ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClSource {
    /// From the true parameter.
    Oracle,
    /// Recovered from recorded `(x, u, ẋ)` through the pseudo-inverse of B.
    Reconstructed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub alpha: f64,
    pub p: Matrix,
    pub k: Matrix,
    pub update_mode: UpdateMode,
    pub cl_source: ClSource,
    pub quantizer: QuantizerConfig,
    /// Refuse to run concurrent learning on an empty history stack.
    pub theorem_grade: bool,
    /// `‖AᵀP + PA − PBBᵀP + Q‖_F` for the stored `P`.
    pub are_residual: f64,
}

impl ControllerConfig {
    /// Solves the ARE for `plant` with state weight `q` and builds `K = −BᵀP`.
    pub fn design(plant: &Plant, q: &Matrix, alpha: f64, opts: &RiccatiOptions) -> Result<Self, ControlError> {
        let p = solve_care(&plant.a, &plant.b, q, opts).map_err(|e| match e {
            LinalgError::RiccatiNotConverged { .. } | LinalgError::NotStabilizing => {
                ControlError::NotStabilizable(e)
            }
            other => ControlError::Linalg(other),
        })?;
        Self::with_p(plant, q, p, alpha)
    }

    /// Uses a caller-supplied `P`; its residual is recorded, not enforced.
    pub fn with_p(plant: &Plant, q: &Matrix, p: Matrix, alpha: f64) -> Result<Self, ControlError> {
        let p = p.require_symmetric()?;
        if p.shape() != plant.a.shape() {
            return Err(ControlError::Dimension(format!("P is {:?}", p.shape())));
        }
        let k = -&(&plant.b.transpose() * &p);
        let are_residual = care_residual(&plant.a, &plant.b, q, &p).frobenius_norm();
        Ok(Self {
            alpha,
            p,
            k,
            update_mode: UpdateMode::ConcurrentLearning,
            cl_source: ClSource::Oracle,
            quantizer: QuantizerConfig::off(),
            theorem_grade: true,
            are_residual,
        })
    }

    pub fn with_mode(mut self, mode: UpdateMode) -> Self {
        self.update_mode = mode;
        self
    }

    pub fn with_source(mut self, source: ClSource) -> Self {
        self.cl_source = source;
        self
    }

    pub fn with_quantizer(mut self, quantizer: QuantizerConfig) -> Self {
        self.quantizer = quantizer;
        self
    }

    pub fn with_theorem_grade(mut self, on: bool) -> Self {
        self.theorem_grade = on;
        self
    }
}

/// One recorded regressor evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRecord {
    pub t: f64,
    pub x: Vec<f64>,
    pub phi: Matrix,
    /// `Φ(x) θ`, exact in oracle mode, reconstructed otherwise.
    pub phi_theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentHistory {
    records: Vec<HistoryRecord>,
    gram: Matrix,
    /// `Σₖ Φₖᵀ (Φθ)ₖ`, used by reconstructed-mode learning.
    phi_theta_sum: Vec<f64>,
}

impl AgentHistory {
    fn new(m: usize) -> Self {
        Self {
            records: Vec::new(),
            gram: Matrix::zeros(m, m),
            phi_theta_sum: vec![0.0; m],
        }
    }

    pub fn records(&self) -> &[HistoryRecord] {
        &self.records
    }

    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn rebuild(&mut self) {
        let m = self.gram.rows();
        self.gram = gram_of(self.records.iter().map(|r| &r.phi), m);
        let mut sum = vec![0.0; m];
        for r in &self.records {
            for (s, v) in sum.iter_mut().zip(r.phi.tr_mul_vec(&r.phi_theta)) {
                *s += v;
            }
        }
        self.phi_theta_sum = sum;
    }
}

fn gram_of<'a>(phis: impl Iterator<Item = &'a Matrix>, m: usize) -> Matrix {
    let mut g = Matrix::zeros(m, m);
    for phi in phis {
        g = &g + &(&phi.transpose() * phi);
    }
    g
}

fn lambda_min(g: &Matrix) -> f64 {
    eig_symmetric(g, EIG_TOL).map(|s| s.min()).unwrap_or(0.0)
}

/// Per-agent recorded regressor data for concurrent learning.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryStack {
    agents: Vec<AgentHistory>,
    pub capacity: usize,
    pub eps_add: f64,
    pub rank_tol: f64,
}

/// Outcome of offering a point to the stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Appended,
    Replaced(usize),
    Rejected,
}

impl HistoryStack {
    pub fn new(n: usize, m: usize, capacity: usize) -> Self {
        Self {
            agents: (0..n).map(|_| AgentHistory::new(m)).collect(),
            capacity,
            eps_add: EPS_ADD,
            rank_tol: RANK_TOL,
        }
    }

    pub fn agent(&self, i: usize) -> &AgentHistory {
        &self.agents[i]
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    /// Offers `(x_i, u_i, ẋ_i)` captured at time `t` to agent `i`'s stack.
    ///
    /// Not full: append when `Φ` differs from the last record by at least
    /// `eps_add · max(1, ‖Φ‖_F)`. Full: swap out the record whose replacement
    /// maximizes `λ_min` of the Gram matrix, only if that strictly raises it.
    #[allow(clippy::too_many_arguments)]
    pub fn record_history_point(
        &mut self,
        i: usize,
        t: f64,
        x_i: &[f64],
        u_i: &[f64],
        xdot_i: &[f64],
        model: &SwarmModel,
        source: ClSource,
    ) -> Result<Admission, ControlError> {
        let dims = model.dims();
        if i >= dims.n || i >= self.agents.len() {
            return Err(ControlError::AgentIndex(i, dims.n));
        }
        if x_i.len() != dims.p || xdot_i.len() != dims.p || u_i.len() != dims.q_in {
            return Err(ControlError::Dimension("history point has wrong lengths".into()));
        }
        if x_i.iter().chain(u_i).chain(xdot_i).any(|v| !v.is_finite()) {
            return Err(ControlError::NonFinite(t));
        }
        let agent = &model.agents[i];
        let phi = agent.phi.evaluate(t, x_i);
        let phi_theta = match source {
            ClSource::Oracle => phi.mul_vec(&agent.theta_true),
            ClSource::Reconstructed => {
                let plant = &model.plant;
                let ax = plant.a.mul_vec(x_i);
                let resid: Vec<f64> = xdot_i.iter().zip(&ax).map(|(d, a)| d - a).collect();
                plant
                    .b_pinv()?
                    .mul_vec(&resid)
                    .iter()
                    .zip(u_i)
                    .map(|(w, u)| w - u)
                    .collect()
            }
        };
        let record = HistoryRecord {
            t,
            x: x_i.to_vec(),
            phi,
            phi_theta,
        };
        let capacity = self.capacity;
        let eps = self.eps_add;
        let hist = &mut self.agents[i];

        if hist.records.len() < capacity {
            let novel = match hist.records.last() {
                None => true,
                Some(last) => {
                    (&record.phi - &last.phi).frobenius_norm()
                        >= eps * record.phi.frobenius_norm().max(1.0)
                }
            };
            if !novel {
                return Ok(Admission::Rejected);
            }
            hist.records.push(record);
            hist.rebuild();
            return Ok(Admission::Appended);
        }
        if capacity == 0 {
            return Ok(Admission::Rejected);
        }

        let current = lambda_min(&hist.gram);
        let added = &record.phi.transpose() * &record.phi;
        let mut best: Option<(usize, f64)> = None;
        for (j, old) in hist.records.iter().enumerate() {
            let candidate = &(&hist.gram - &(&old.phi.transpose() * &old.phi)) + &added;
            let lmin = lambda_min(&candidate);
            if best.is_none_or(|(_, b)| lmin > b) {
                best = Some((j, lmin));
            }
        }
        match best {
            Some((j, lmin)) if lmin > current => {
                hist.records[j] = record;
                hist.rebuild();
                Ok(Admission::Replaced(j))
            }
            _ => Ok(Admission::Rejected),
        }
    }

    /// `(λ_min(Gram) > rank_tol, λ_min(Gram))`; `(false, 0)` when empty.
    pub fn condition1_certificate(&self, i: usize) -> (bool, f64) {
        let hist = &self.agents[i];
        if hist.is_empty() {
            return (false, 0.0);
        }
        let q = lambda_min(&hist.gram).max(0.0);
        (q > self.rank_tol, q)
    }

    /// `min_i q_i`.
    pub fn min_q(&self) -> f64 {
        (0..self.agents.len())
            .map(|i| self.condition1_certificate(i).1)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn all_certified(&self) -> bool {
        (0..self.agents.len()).all(|i| self.condition1_certificate(i).0)
    }
}

/// The closed-loop system: model, graph and controller, with cached products.
#[derive(Debug, Clone)]
pub struct ClosedLoop<'a> {
    pub model: &'a SwarmModel,
    pub graph: &'a UndirectedGraph,
    pub cfg: &'a ControllerConfig,
    dims: Dims,
    /// αK
    alpha_k: Matrix,
    /// BᵀP
    btp: Matrix,
}

/// Time derivative of a [`SwarmState`].
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmDerivative {
    pub dx: Vec<f64>,
    pub dtheta: Vec<f64>,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(
        model: &'a SwarmModel,
        graph: &'a UndirectedGraph,
        cfg: &'a ControllerConfig,
    ) -> Result<Self, ControlError> {
        let dims = model.dims();
        if graph.n() != dims.n {
            return Err(ControlError::Dimension(format!(
                "graph has {} vertices but swarm has {} agents",
                graph.n(),
                dims.n
            )));
        }
        if cfg.p.shape() != (dims.p, dims.p) {
            return Err(ControlError::Dimension(format!("P is {:?}, p = {}", cfg.p.shape(), dims.p)));
        }
        let btp = &model.plant.b.transpose() * &cfg.p;
        Ok(Self {
            model,
            graph,
            cfg,
            dims,
            alpha_k: cfg.k.scale(cfg.alpha),
            btp,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    fn check_state(&self, state: &SwarmState) -> Result<(), ControlError> {
        let d = self.dims;
        if state.x.len() != d.n * d.p || state.theta_hat.len() != d.n * d.m {
            return Err(ControlError::Dimension(format!(
                "state has {} + {} entries, expected {} + {}",
                state.x.len(),
                state.theta_hat.len(),
                d.n * d.p,
                d.n * d.m
            )));
        }
        Ok(())
    }

    fn check_agent(&self, i: usize) -> Result<(), ControlError> {
        if i >= self.dims.n {
            return Err(ControlError::AgentIndex(i, self.dims.n));
        }
        Ok(())
    }

    /// `Σⱼ aᵢⱼ (x̃ᵢ − x̃ⱼ)` over an already-transmitted stacked state.
    fn relative_sum_from(&self, i: usize, transmitted: &[f64]) -> Vec<f64> {
        let p = self.dims.p;
        let xi = &transmitted[i * p..(i + 1) * p];
        let mut s = vec![0.0; p];
        for (j, w) in self.graph.neighbors(i) {
            let xj = &transmitted[j * p..(j + 1) * p];
            for k in 0..p {
                s[k] += w * (xi[k] - xj[k]);
            }
        }
        s
    }

    /// Relative term for agent `i`, quantizing transmitted states if enabled.
    pub fn relative_sum(&self, i: usize, state: &SwarmState) -> Vec<f64> {
        let p = self.dims.p;
        let q = &self.cfg.quantizer;
        let xi = q.transmit(state.agent_x(i, p));
        let mut s = vec![0.0; p];
        for (j, w) in self.graph.neighbors(i) {
            let xj = q.transmit(state.agent_x(j, p));
            for k in 0..p {
                s[k] += w * (xi[k] - xj[k]);
            }
        }
        s
    }

    fn input_from(&self, i: usize, state: &SwarmState, phi: &Matrix, s: &[f64]) -> Vec<f64> {
        let coupling = self.alpha_k.mul_vec(s);
        let cancel = phi.mul_vec(state.agent_theta(i, self.dims.m));
        coupling.iter().zip(&cancel).map(|(c, f)| c - f).collect()
    }

    fn baseline_from(&self, phi: &Matrix, s: &[f64]) -> Vec<f64> {
        phi.tr_mul_vec(&self.btp.mul_vec(s))
    }

    fn cl_term(&self, i: usize, state: &SwarmState, stacks: &HistoryStack) -> Result<Vec<f64>, ControlError> {
        let hist = stacks.agent(i);
        if hist.is_empty() && self.cfg.theorem_grade {
            return Err(ControlError::EmptyStack(i));
        }
        let m = self.dims.m;
        let theta_hat = state.agent_theta(i, m);
        let g_hat = hist.gram.mul_vec(theta_hat);
        let target = match self.cfg.cl_source {
            ClSource::Oracle => hist.gram.mul_vec(&self.model.agents[i].theta_true),
            ClSource::Reconstructed => hist.phi_theta_sum.clone(),
        };
        Ok(g_hat.iter().zip(&target).map(|(a, b)| -(a - b)).collect())
    }

    /// `uᵢ = αK Σⱼ aᵢⱼ (x̃ᵢ − x̃ⱼ) − Φᵢ(t, xᵢ) θ̂ᵢ`.
    pub fn control_input(&self, i: usize, state: &SwarmState) -> Result<Vec<f64>, ControlError> {
        self.check_state(state)?;
        self.check_agent(i)?;
        let phi = self.model.agents[i].phi.evaluate(state.t, state.agent_x(i, self.dims.p));
        let s = self.relative_sum(i, state);
        Ok(self.input_from(i, state, &phi, &s))
    }

    /// `Φᵢᵀ BᵀP Σⱼ aᵢⱼ (x̃ᵢ − x̃ⱼ)`.
    pub fn update_baseline(&self, i: usize, state: &SwarmState) -> Result<Vec<f64>, ControlError> {
        self.check_state(state)?;
        self.check_agent(i)?;
        let phi = self.model.agents[i].phi.evaluate(state.t, state.agent_x(i, self.dims.p));
        Ok(self.baseline_from(&phi, &self.relative_sum(i, state)))
    }

    /// Baseline term minus `Σₖ Φₖᵀ (Φₖ θ̂ᵢ − (Φθ)ₖ)`.
    pub fn update_concurrent_learning(
        &self,
        i: usize,
        state: &SwarmState,
        stacks: &HistoryStack,
    ) -> Result<Vec<f64>, ControlError> {
        let base = self.update_baseline(i, state)?;
        let cl = self.cl_term(i, state, stacks)?;
        Ok(base.iter().zip(&cl).map(|(a, b)| a + b).collect())
    }

    /// Exact `ẋᵢ` for the current input, used when recording history.
    pub fn agent_derivative(&self, i: usize, state: &SwarmState, u: &[f64]) -> Vec<f64> {
        let p = self.dims.p;
        let xi = state.agent_x(i, p);
        let agent = &self.model.agents[i];
        let phi = agent.phi.evaluate(state.t, xi);
        let forcing: Vec<f64> = u.iter().zip(phi.mul_vec(&agent.theta_true)).map(|(a, b)| a + b).collect();
        let ax = self.model.plant.a.mul_vec(xi);
        let bu = self.model.plant.b.mul_vec(&forcing);
        ax.iter().zip(&bu).map(|(a, b)| a + b).collect()
    }

    /// The full closed-loop vector field for `(x, θ̂)`.
    pub fn closed_loop_rhs(&self, state: &SwarmState, stacks: &HistoryStack) -> Result<SwarmDerivative, ControlError> {
        self.check_state(state)?;
        let Dims { n, p, m, .. } = self.dims;
        let plant = &self.model.plant;
        let transmitted = self.cfg.quantizer.transmit(&state.x);
        let mut dx = vec![0.0; n * p];
        let mut dtheta = vec![0.0; n * m];
        for i in 0..n {
            let agent = &self.model.agents[i];
            let xi = state.agent_x(i, p);
            let phi = agent.phi.evaluate(state.t, xi);
            let s = self.relative_sum_from(i, &transmitted);
            let u = self.input_from(i, state, &phi, &s);
            let forcing: Vec<f64> = u.iter().zip(phi.mul_vec(&agent.theta_true)).map(|(a, b)| a + b).collect();
            let ax = plant.a.mul_vec(xi);
            let bu = plant.b.mul_vec(&forcing);
            for k in 0..p {
                dx[i * p + k] = ax[k] + bu[k];
            }
            let mut th = self.baseline_from(&phi, &s);
            if self.cfg.update_mode == UpdateMode::ConcurrentLearning {
                for (a, b) in th.iter_mut().zip(self.cl_term(i, state, stacks)?) {
                    *a += b;
                }
            }
            dtheta[i * m..(i + 1) * m].copy_from_slice(&th);
        }
        if dx.iter().chain(&dtheta).any(|v| !v.is_finite()) {
            return Err(ControlError::NonFinite(state.t));
        }
        Ok(SwarmDerivative { dx, dtheta })
    }

    /// `ẋ = (Iₙ⊗A)x + α(L⊗BK)x − (Iₙ⊗B) Φ Θ̃`, assembled from Kronecker
    /// products. Ignores quantization; only `ẋ` is returned.
    pub fn vector_form_rhs(&self, state: &SwarmState) -> Result<Vec<f64>, ControlError> {
        self.check_state(state)?;
        let Dims { n, p, q_in, m } = self.dims;
        let plant = &self.model.plant;
        let l = self.graph.laplacian();
        let drift = &kron(&Matrix::identity(n), &plant.a) + &kron(&l, &(&plant.b * &self.cfg.k)).scale(self.cfg.alpha);
        let mut phi_big = Matrix::zeros(n * q_in, n * m);
        let mut theta_tilde = vec![0.0; n * m];
        for i in 0..n {
            let phi = self.model.agents[i].phi.evaluate(state.t, state.agent_x(i, p));
            for r in 0..q_in {
                for c in 0..m {
                    phi_big[(i * q_in + r, i * m + c)] = phi[(r, c)];
                }
            }
            for c in 0..m {
                theta_tilde[i * m + c] = state.theta_hat[i * m + c] - self.model.agents[i].theta_true[c];
            }
        }
        let ib = kron(&Matrix::identity(n), &plant.b);
        let lhs = drift.mul_vec(&state.x);
        let rhs = ib.mul_vec(&phi_big.mul_vec(&theta_tilde));
        Ok(lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect())
    }

    /// `xᵀ(L⊗P)x + ½ Σᵢ ‖θ̃ᵢ‖²`.
    pub fn lyapunov_value(&self, state: &SwarmState) -> f64 {
        lyapunov_value(state, &self.graph.laplacian(), &self.cfg.p, &self.model.theta_true())
    }

    /// The closed form `−xᵀ{(L⊗I) + (2αL²−L)⊗PBBᵀP}x − Σᵢ θ̃ᵢᵀ Gᵢ θ̃ᵢ`
    /// obtained by assuming the adaptation cross terms cancel.
    pub fn lyapunov_derivative_closed_form(&self, state: &SwarmState, stacks: &HistoryStack) -> f64 {
        let Dims { n, p, m, .. } = self.dims;
        let l = self.graph.laplacian();
        let pb = &self.cfg.p * &self.model.plant.b;
        let pbbp = &pb * &pb.transpose();
        let l2 = &l * &l;
        let outer = &l2.scale(2.0 * self.cfg.alpha) - &l;
        let eye = Matrix::identity(p);
        let mut quad = 0.0;
        for i in 0..n {
            let xi = state.agent_x(i, p);
            for j in 0..n {
                let xj = state.agent_x(j, p);
                let mut w = Matrix::zeros(p, p);
                if l[(i, j)] != 0.0 {
                    w = &w + &eye.scale(l[(i, j)]);
                }
                if outer[(i, j)] != 0.0 {
                    w = &w + &pbbp.scale(outer[(i, j)]);
                }
                quad += dot(xi, &w.mul_vec(xj));
            }
        }
        let mut learn = 0.0;
        if self.cfg.update_mode == UpdateMode::ConcurrentLearning {
            for i in 0..n {
                let tt = self.theta_tilde(state, i);
                learn += dot(&tt, &stacks.agent(i).gram.mul_vec(&tt));
            }
        }
        let _ = m;
        -quad - learn
    }

    /// `−Σᵢ θ̃ᵢᵀ Φᵢᵀ BᵀP Σⱼ aᵢⱼ(xᵢ − xⱼ)`: the part of `V̇` the closed form
    /// above leaves out. Unquantized only.
    pub fn lyapunov_cross_term(&self, state: &SwarmState) -> f64 {
        let p = self.dims.p;
        (0..self.dims.n)
            .map(|i| {
                let phi = self.model.agents[i].phi.evaluate(state.t, state.agent_x(i, p));
                let s = self.relative_sum_from(i, &state.x);
                -dot(&self.theta_tilde(state, i), &self.baseline_from(&phi, &s))
            })
            .sum()
    }

    /// Chain-rule `V̇ = 2xᵀ(L⊗P)ẋ + Σᵢ θ̃ᵢᵀ θ̂̇ᵢ` along the actual vector field.
    pub fn lyapunov_derivative(&self, state: &SwarmState, stacks: &HistoryStack) -> Result<f64, ControlError> {
        let d = self.closed_loop_rhs(state, stacks)?;
        let Dims { n, p, m, .. } = self.dims;
        let lp = lp_apply(&self.graph.laplacian(), &self.cfg.p, &state.x, n, p);
        let mut v = 2.0 * dot(&lp, &d.dx);
        for i in 0..n {
            v += dot(&self.theta_tilde(state, i), &d.dtheta[i * m..(i + 1) * m]);
        }
        Ok(v)
    }

    fn theta_tilde(&self, state: &SwarmState, i: usize) -> Vec<f64> {
        let m = self.dims.m;
        state
            .agent_theta(i, m)
            .iter()
            .zip(&self.model.agents[i].theta_true)
            .map(|(h, t)| h - t)
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(L⊗P) x` without forming the Kronecker product.
fn lp_apply(l: &Matrix, p_mat: &Matrix, x: &[f64], n: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * p];
    let px: Vec<Vec<f64>> = (0..n).map(|j| p_mat.mul_vec(&x[j * p..(j + 1) * p])).collect();
    for i in 0..n {
        for (j, pxj) in px.iter().enumerate() {
            let lij = l[(i, j)];
            if lij == 0.0 {
                continue;
            }
            for k in 0..p {
                out[i * p + k] += lij * pxj[k];
            }
        }
    }
    out
}

/// `xᵀ(L⊗P)x + ½ Σᵢ tr(θ̃ᵢᵀθ̃ᵢ)` for stacked `theta_true`.
pub fn lyapunov_value(state: &SwarmState, l: &Matrix, p: &Matrix, theta_true: &[f64]) -> f64 {
    let n = l.rows();
    let pd = p.rows();
    let quad = dot(&state.x, &lp_apply(l, p, &state.x, n, pd));
    let err: f64 = state
        .theta_hat
        .iter()
        .zip(theta_true)
        .map(|(h, t)| (h - t) * (h - t))
        .sum();
    quad + 0.5 * err
}

/// `Σ_{i,j} ‖xᵢ − xⱼ‖²` over ordered pairs.
pub fn consensus_error(x: &[f64], n: usize, p: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            total += (0..p).map(|k| (x[i * p + k] - x[j * p + k]).powi(2)).sum::<f64>();
        }
    }
    total
}

/// Decay-rate and offset constants of the exponential bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateCertificate {
    pub lambda2: f64,
    pub lambda_max_l: f64,
    pub lambda_max_p: f64,
    /// `λ_max(L) λ_max(P)`.
    pub c: f64,
    /// `λ₂ / C`.
    pub gamma: f64,
    /// `min_i λ_min(Gramᵢ)`.
    pub q: f64,
    pub decay_unquantized: f64,
    pub decay_quantized: f64,
    /// `‖L² ⊗ PBBᵀP‖`.
    pub d: f64,
    /// `α² D² / λ₂`.
    pub j: f64,
    pub sigma: f64,
    /// `J σ² / min{γ/2, q}`; zero for `σ = 0`.
    pub offset: f64,
    pub certified: bool,
}

impl RateCertificate {
    /// Rate used by the bound curve: quantized when `σ > 0`.
    pub fn decay(&self) -> f64 {
        if self.sigma > 0.0 {
            self.decay_quantized
        } else {
            self.decay_unquantized
        }
    }

    /// `e^{−decay·t} V(0) + offset`.
    pub fn bound(&self, t: f64, v0: f64) -> f64 {
        (-self.decay() * t).exp() * v0 + self.offset
    }

    pub fn require_certified(&self) -> Result<(), ControlError> {
        if self.certified {
            Ok(())
        } else {
            Err(ControlError::Uncertified { agent: 0, q: self.q })
        }
    }
}

pub fn rate_certificate(
    l: &Matrix,
    p: &Matrix,
    b: &Matrix,
    alpha: f64,
    sigma: f64,
    stacks: &HistoryStack,
) -> Result<RateCertificate, ControlError> {
    let lambda2 = algebraic_connectivity(l)?;
    let lambda_max_l = spectral_norm_psd(l)?;
    let lambda_max_p = spectral_norm_psd(p)?;
    let c = lambda_max_l * lambda_max_p;
    let gamma = lambda2 / c;
    let certified = stacks.all_certified();
    let q = if stacks.n() == 0 { 0.0 } else { stacks.min_q() };
    let decay_unquantized = gamma.min(q);
    let decay_quantized = (gamma / 2.0).min(q);
    let pb = p * b;
    let pbbp = &pb * &pb.transpose();
    let d = spectral_norm_psd(&kron(&(l * l), &pbbp))?;
    let j = alpha * alpha * d * d / lambda2;
    let offset = if sigma > 0.0 {
        if decay_quantized > 0.0 {
            j * sigma * sigma / decay_quantized
        } else {
            f64::INFINITY
        }
    } else {
        0.0
    };
    Ok(RateCertificate {
        lambda2,
        lambda_max_l,
        lambda_max_p,
        c,
        gamma,
        q,
        decay_unquantized,
        decay_quantized,
        d,
        j,
        sigma,
        offset,
        certified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// n = 2, p = q = 1, A = 0, B = 1, a₁₂ = 1, α = 1.
    fn scalar_setup(phi: RegressorSpec, theta: f64) -> (SwarmModel, UndirectedGraph, ControllerConfig) {
        let plant = Plant::new(Matrix::zeros(1, 1), Matrix::identity(1)).unwrap();
        let agents = vec![
            AgentModel { phi: phi.clone(), theta_true: vec![theta] },
            AgentModel { phi, theta_true: vec![theta] },
        ];
        let model = SwarmModel::new(plant.clone(), agents).unwrap();
        let graph = UndirectedGraph::from_edges(2, &[(1, 2)]).unwrap();
        let cfg = ControllerConfig::design(&plant, &Matrix::identity(1), 1.0, &RiccatiOptions::default()).unwrap();
        (model, graph, cfg)
    }

    fn zero_phi() -> RegressorSpec {
        RegressorSpec::Zero { q_in: 1, m: 1 }
    }

    #[test]
    fn scalar_controller_gain() {
        let (_, _, cfg) = scalar_setup(zero_phi(), 0.0);
        assert_abs_diff_eq!(cfg.p[(0, 0)], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(cfg.k[(0, 0)], -1.0, epsilon = 1e-10);
        assert!(cfg.are_residual <= ARE_RESIDUAL_TOL);
    }

    #[test]
    fn control_input_examples() {
        let (model, graph, cfg) = scalar_setup(zero_phi(), 0.0);
        let cl = ClosedLoop::new(&model, &graph, &cfg).unwrap();
        let same = SwarmState::new(0.0, vec![2.5, 2.5], vec![0.0, 0.0]);
        assert_eq!(cl.control_input(0, &same).unwrap(), vec![0.0]);
        let s = SwarmState::new(0.0, vec![1.0, 0.0], vec![0.0, 0.0]);
        assert_abs_diff_eq!(cl.control_input(0, &s).unwrap()[0], -1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(cl.control_input(1, &s).unwrap()[0], 1.0, epsilon = 1e-10);

        let qcfg = cfg.clone().with_quantizer(QuantizerConfig::with_sigma(1.0).unwrap());
        let qcl = ClosedLoop::new(&model, &graph, &qcfg).unwrap();
        let s = SwarmState::new(0.0, vec![1.4, 0.0], vec![0.0, 0.0]);
        assert_eq!(qcl.relative_sum(0, &s), vec![1.0]);
        assert_abs_diff_eq!(qcl.control_input(0, &s).unwrap()[0], -1.0, epsilon = 1e-10);
    }

    #[test]
    fn control_input_errors() {
        let (model, graph, cfg) = scalar_setup(zero_phi(), 0.0);
        let cl = ClosedLoop::new(&model, &graph, &cfg).unwrap();
        let s = SwarmState::new(0.0, vec![1.0], vec![0.0, 0.0]);
        assert!(matches!(cl.control_input(0, &s), Err(ControlError::Dimension(_))));
        let s = SwarmState::new(0.0, vec![1.0, 0.0], vec![0.0, 0.0]);
        assert!(matches!(cl.control_input(2, &s), Err(ControlError::AgentIndex(2, 2))));
        let g3 = UndirectedGraph::from_edges(3, &[(1, 2)]).unwrap();
        assert!(ClosedLoop::new(&model, &g3, &cfg).is_err());
    }

    #[test]
    fn baseline_update_examples() {
        let one = RegressorSpec::Constant(Matrix::identity(1));
        let (model, graph, cfg) = scalar_setup(one, 0.0);
        let cl = ClosedLoop::new(&model, &graph, &cfg).unwrap();
        let s = SwarmState::new(0.0, vec![1.0, 0.0], vec![0.0, 0.0]);
        assert_abs_diff_eq!(cl.update_baseline(0, &s).unwrap()[0], 1.0, epsilon = 1e-10);
        let same = SwarmState::new(0.0, vec![3.0, 3.0], vec![0.7, -2.0]);
        assert_eq!(cl.update_baseline(0, &same).unwrap(), vec![0.0]);

        let (model, graph, cfg) = scalar_setup(zero_phi(), 0.0);
        let cl = ClosedLoop::new(&model, &graph, &cfg).unwrap();
        let s = SwarmState::new(0.0, vec![5.0, -3.0], vec![1.0, 2.0]);
        assert_eq!(cl.update_baseline(0, &s).unwrap(), vec![0.0]);
    }

    fn stack_with(model: &SwarmModel, points: &[(usize, f64)]) -> HistoryStack {
        let mut st = HistoryStack::new(model.agents.len(), model.dims().m, 20);
        st.eps_add = 0.0;
        for &(i, x) in points {
            st.agents[i].records.push(HistoryRecord {
                t: 0.0,
                x: vec![x],
                phi: model.agents[i].phi.evaluate(0.0, &[x]),
                phi_theta: model.agents[i].phi.evaluate(0.0, &[x]).mul_vec(&model.agents[i].theta_true),
            });
            st.agents[i].rebuild();
        }
        st
    }

    #[test]
    fn concurrent_learning_examples() {
        let one = RegressorSpec::Constant(Matrix::identity(1));
        let (model, graph, cfg) = scalar_setup(one, 1.0);
        let cl = ClosedLoop::new(&model, &graph, &cfg).unwrap();
        let st = stack_with(&model, &[(0, 0.0), (0, 1.0), (0, 2.0), (1, 0.0)]);
        // equilibrium
        let eq = SwarmState::new(0.0, vec![4.0, 4.0], vec![1.0, 1.0]);
        assert_eq!(cl.update_concurrent_learning(0, &eq, &st).unwrap(), vec![0.0]);
        // constant regressor: −r·θ̃ with r = 3
        let s = SwarmState::new(0.0, vec![4.0, 4.0], vec![2.5, 1.0]);
        assert_abs_diff_eq!(cl.update_concurrent_learning(0, &s, &st).unwrap()[0], -4.5, epsilon = 1e-12);

        let two = RegressorSpec::Constant(Matrix::identity(1).scale(2.0));
        let (model, graph, cfg) = scalar_setup(two, 1.0);
        let cl = ClosedLoop::new(&model, &graph, &cfg).unwrap();
        let st = stack_with(&model, &[(0, 0.0), (1, 0.0)]);
        let s = SwarmState::new(0.0, vec![0.0, 0.0], vec![3.0, 1.0]);
        assert_abs_diff_eq!(cl.update_concurrent_learning(0, &s, &st).unwrap()[0], -8.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_stack_rejected_in_theorem_grade() {
        let (model, graph, cfg) = scalar_setup(zero_phi(), 0.0);
        let cl = ClosedLoop::new(&model, &graph, &cfg).unwrap();
        let st = HistoryStack::new(2, 1, 5);
        let s = SwarmState::new(0.0, vec![0.0, 0.0], vec![0.0, 0.0]);
        assert_eq!(cl.update_concurrent_learning(0, &s, &st), Err(ControlError::EmptyStack(0)));
        let loose = cfg.clone().with_theorem_grade(false);
        let cl = ClosedLoop::new(&model, &graph, &loose).unwrap();
        assert_eq!(cl.update_concurrent_learning(0, &s, &st).unwrap(), vec![0.0]);
    }

    fn offer_phi(st: &mut HistoryStack, model: &SwarmModel, value: f64) -> Admission {
        let agent = AgentModel {
            phi: RegressorSpec::Constant(Matrix::identity(1).scale(value)),
            theta_true: vec![0.0],
        };
        let m = SwarmModel::new(model.plant.clone(), vec![agent]).unwrap();
        st.record_history_point(0, 0.0, &[0.0], &[0.0], &[0.0], &m, ClSource::Oracle).unwrap()
    }

    #[test]
    fn history_admission() {
        let (model, _, _) = scalar_setup(zero_phi(), 0.0);
        let mut st = HistoryStack::new(1, 1, 2);
        assert_eq!(offer_phi(&mut st, &model, 1.0), Admission::Appended);
        assert_abs_diff_eq!(st.agent(0).gram()[(0, 0)], 1.0);
        assert_eq!(offer_phi(&mut st, &model, 1.0), Admission::Rejected);
        assert_eq!(offer_phi(&mut st, &model, 0.1), Admission::Appended);
        assert_abs_diff_eq!(st.condition1_certificate(0).1, 1.01, epsilon = 1e-12);
        // Full: Φ = 2 replaces Φ = 0.1 (λ_min 1.01 → 5) rather than Φ = 1 (→ 4.01).
        assert_eq!(offer_phi(&mut st, &model, 2.0), Admission::Replaced(1));
        assert_abs_diff_eq!(st.condition1_certificate(0).1, 5.0, epsilon = 1e-12);
        // A weaker candidate cannot improve λ_min.
        assert_eq!(offer_phi(&mut st, &model, 0.5), Admission::Rejected);
    }

    #[test]
    fn reconstructed_phi_theta_matches_oracle() {
        let plant = Plant::new(
            Matrix::from_rows(&[[0.0, 1.0], [-1.0, -0.5]]).unwrap(),
            Matrix::from_rows(&[[0.3], [1.0]]).unwrap(),
        )
        .unwrap();
        let agent = AgentModel {
            phi: RegressorSpec::Exponential { q_in: 1, gamma: 0.4, beta: 0.9, d: 1 },
            theta_true: vec![2.5],
        };
        let model = SwarmModel::new(plant.clone(), vec![agent.clone()]).unwrap();
        let x = [0.7, -1.2];
        let u = [0.35];
        let forcing = u[0] + agent.phi.evaluate(0.0, &x)[(0, 0)] * 2.5;
        let xdot: Vec<f64> = plant
            .a
            .mul_vec(&x)
            .iter()
            .zip(plant.b.mul_vec(&[forcing]))
            .map(|(a, b)| a + b)
            .collect();
        let mut st = HistoryStack::new(1, 1, 4);
        st.record_history_point(0, 0.0, &x, &u, &xdot, &model, ClSource::Reconstructed).unwrap();
        let rec = &st.agent(0).records()[0];
        let oracle = agent.phi.evaluate(0.0, &x).mul_vec(&[2.5]);
        assert_abs_diff_eq!(rec.phi_theta[0], oracle[0], epsilon = 1e-12);
    }

    #[test]
    fn reconstructed_requires_full_rank_b() {
        let plant = Plant::new(Matrix::identity(2), Matrix::zeros(2, 1)).unwrap();
        let agent = AgentModel { phi: RegressorSpec::Zero { q_in: 1, m: 1 }, theta_true: vec![0.0] };
        let model = SwarmModel::new(plant, vec![agent]).unwrap();
        let mut st = HistoryStack::new(1, 1, 4);
        let err = st.record_history_point(0, 0.0, &[0.0, 0.0], &[0.0], &[0.0, 0.0], &model, ClSource::Reconstructed);
        assert_eq!(err, Err(ControlError::RankDeficientB));
    }

    #[test]
    fn condition1_examples() {
        let st = HistoryStack::new(1, 1, 3);
        assert_eq!(st.condition1_certificate(0), (false, 0.0));

        let plant = Plant::new(Matrix::identity(2).scale(-1.0), Matrix::identity(2)).unwrap();
        let half = Matrix::from_rows(&[[0.5], [0.5]]).unwrap();
        let model = SwarmModel::new(
            plant.clone(),
            vec![AgentModel { phi: RegressorSpec::Constant(half), theta_true: vec![1.0] }],
        )
        .unwrap();
        let mut st = HistoryStack::new(1, 1, 3);
        st.record_history_point(0, 0.0, &[0.0; 2], &[0.0; 2], &[0.0; 2], &model, ClSource::Oracle).unwrap();
        let (ok, q) = st.condition1_certificate(0);
        assert!(ok);
        assert_abs_diff_eq!(q, 0.5, epsilon = 1e-14);

        // m = 2 with every record a multiple of the same pattern: rank 1.
        let mut st = HistoryStack::new(1, 2, 5);
        st.eps_add = 0.0;
        for s in [1.0, 2.0, -0.5] {
            let phi = Matrix::from_rows(&[[s, 2.0 * s], [0.5 * s, s]]).unwrap();
            let model = SwarmModel::new(
                plant.clone(),
                vec![AgentModel { phi: RegressorSpec::Constant(phi), theta_true: vec![0.0, 0.0] }],
            )
            .unwrap();
            st.record_history_point(0, 0.0, &[0.0; 2], &[0.0; 2], &[0.0; 2], &model, ClSource::Oracle).unwrap();
        }
        let (ok, q) = st.condition1_certificate(0);
        assert!(!ok, "rank-deficient stack certified with q = {q}");
    }

    #[test]
    fn rhs_examples() {
        let (model, graph, cfg) = scalar_setup(zero_phi(), 0.0);
        let cl = ClosedLoop::new(&model, &graph, &cfg).unwrap();
        let st = stack_with(&model, &[(0, 0.0), (1, 0.0)]);
        let eq = SwarmState::new(0.0, vec![2.0, 2.0], vec![0.0, 0.0]);
        let d = cl.closed_loop_rhs(&eq, &st).unwrap();
        assert_eq!(d.dx, vec![0.0, 0.0]);
        assert_eq!(d.dtheta, vec![0.0, 0.0]);
        let s = SwarmState::new(0.0, vec![1.0, 0.0], vec![0.0, 0.0]);
        let d = cl.closed_loop_rhs(&s, &st).unwrap();
        assert_abs_diff_eq!(d.dx[0], -1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(d.dx[1], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn rhs_reports_non_finite() {
        let (model, graph, cfg) = scalar_setup(zero_phi(), 0.0);
        let cl = ClosedLoop::new(&model, &graph, &cfg).unwrap();
        let st = stack_with(&model, &[(0, 0.0), (1, 0.0)]);
        let s = SwarmState::new(1.5, vec![f64::INFINITY, 0.0], vec![0.0, 0.0]);
        assert_eq!(cl.closed_loop_rhs(&s, &st), Err(ControlError::NonFinite(1.5)));
    }

    #[test]
    fn lyapunov_examples() {
        let l = Matrix::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]).unwrap();
        let p = Matrix::identity(1);
        let s = SwarmState::new(0.0, vec![3.0, 3.0], vec![1.0, 2.0]);
        assert_eq!(lyapunov_value(&s, &l, &p, &[1.0, 2.0]), 0.0);
        let s = SwarmState::new(0.0, vec![3.0, 3.0], vec![3.0, 2.0]);
        assert_eq!(lyapunov_value(&s, &l, &p, &[1.0, 2.0]), 2.0);
    }

    #[test]
    fn consensus_error_examples() {
        assert_eq!(consensus_error(&[1.0, 1.0, 1.0, 1.0], 2, 2), 0.0);
        assert_eq!(consensus_error(&[1.0, 0.0], 2, 1), 2.0);
    }

    #[test]
    fn certificate_min_composition() {
        let (model, graph, cfg) = scalar_setup(RegressorSpec::Constant(Matrix::identity(1)), 1.0);
        let st = stack_with(&model, &[(0, 0.0), (0, 1.0), (1, 0.0), (1, 1.0)]);
        let l = graph.laplacian();
        let cert = rate_certificate(&l, &cfg.p, &model.plant.b, cfg.alpha, 0.0, &st).unwrap();
        assert_eq!(cert.offset, 0.0);
        assert_abs_diff_eq!(cert.q, 2.0, epsilon = 1e-12);
        // λ₂ = λ_max(L) = 2, λ_max(P) = 1 ⇒ γ = 1.
        assert_abs_diff_eq!(cert.gamma, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(cert.decay_unquantized, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(cert.decay_quantized, 0.5, epsilon = 1e-9);
        assert_eq!(cert.decay(), cert.decay_unquantized);
        assert!(cert.certified);

        let empty = HistoryStack::new(2, 1, 3);
        let cert = rate_certificate(&l, &cfg.p, &model.plant.b, cfg.alpha, 1.0, &empty).unwrap();
        assert!(!cert.certified);
        assert_eq!(cert.decay_quantized, 0.0);
        assert!(cert.require_certified().is_err());
    }

    #[test]
    fn non_stabilizable_design_fails() {
        let plant = Plant::new(Matrix::zeros(1, 1), Matrix::zeros(1, 1)).unwrap();
        let err = ControllerConfig::design(&plant, &Matrix::identity(1), 1.0, &RiccatiOptions::default());
        assert!(matches!(err, Err(ControlError::NotStabilizable(_))));
    }
}
