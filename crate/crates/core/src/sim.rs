//! Fixed-step RK4 integration of the closed loop and trajectory logging.
//!
//! The quantized vector field is discontinuous; the integrator samples it at
//! the RK4 stages without event detection.

use log::warn;
use thiserror::Error;

use crate::control::{
    consensus_error, rate_certificate, ClosedLoop, ControlError, ControllerConfig, HistoryStack,
    RateCertificate, SwarmModel, SwarmState, UpdateMode, ARE_RESIDUAL_TOL, EPS_ADD, RANK_TOL,
};
use crate::graph::{GraphError, LaplacianFacts, UndirectedGraph};

/// `‖x‖` above which a run is declared divergent.
pub const BLOW_UP_NORM: f64 = 1e12;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid integrator settings: {0}")]
    BadIntegrator(String),
    #[error("non-finite RK4 stage at t = {0}")]
    NonFiniteStage(f64),
    #[error("state blew up at t = {t:.4} (‖x‖ = {norm:.3e}); {} samples kept", log.samples.len())]
    BlowUp {
        t: f64,
        norm: f64,
        log: Box<TrajectoryLog>,
    },
    #[error("ARE residual {0:.3e} exceeds {ARE_RESIDUAL_TOL:e}")]
    AreResidual(f64),
    #[error("history stacks uncertified after recording: {0}")]
    Uncertified(ControlError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub step_h: f64,
    pub t_final: f64,
    /// Integrator steps between logged samples.
    pub sample_every: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            step_h: 1e-3,
            t_final: 20.0,
            sample_every: 10,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.step_h > 0.0 && self.step_h.is_finite()) {
            return Err(SimError::BadIntegrator(format!("step_h = {}", self.step_h)));
        }
        if !(self.t_final >= self.step_h && self.t_final.is_finite()) {
            return Err(SimError::BadIntegrator(format!(
                "t_final = {} < step_h = {}",
                self.t_final, self.step_h
            )));
        }
        if self.sample_every == 0 {
            return Err(SimError::BadIntegrator("sample_every = 0".into()));
        }
        Ok(())
    }

    /// Number of RK4 steps covering `[0, t_final]`.
    pub fn steps(&self) -> usize {
        (self.t_final / self.step_h * (1.0 + 1e-12)).floor() as usize
    }

    /// Number of logged samples, including `t = 0`.
    pub fn samples(&self) -> usize {
        1 + self.steps() / self.sample_every
    }
}

/// History recording schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryConfig {
    pub capacity: usize,
    /// Recording window `[0, t_record]`, offered at every logged sample; the
    /// stacks are frozen afterwards.
    pub t_record: f64,
    pub eps_add: f64,
    pub rank_tol: f64,
}

impl Default for HistoryConfig {
    fn default() -> Self {
        Self {
            capacity: 20,
            t_record: 0.5,
            eps_add: EPS_ADD,
            rank_tol: RANK_TOL,
        }
    }
}

/// Everything needed for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub model: SwarmModel,
    pub graph: UndirectedGraph,
    pub controller: ControllerConfig,
    pub initial: SwarmState,
    pub integrator: IntegratorConfig,
    pub history: HistoryConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub v: f64,
    pub consensus_error: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub samples: Vec<Sample>,
    pub certificate: RateCertificate,
    /// Recorded stacks as frozen at the end of the window.
    pub stacks: HistoryStack,
}

impl TrajectoryLog {
    pub fn first(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("log has at least one sample")
    }

    /// Mean of `f` over the final `fraction` of samples (at least one).
    pub fn tail_mean(&self, fraction: f64, f: impl Fn(&Sample) -> f64) -> f64 {
        let n = self.samples.len();
        let k = ((n as f64 * fraction).ceil() as usize).clamp(1, n);
        self.samples[n - k..].iter().map(f).sum::<f64>() / k as f64
    }
}

/// One classical Runge–Kutta step of `ẏ = f(t, y)`.
pub fn rk4_step<F, E>(mut f: F, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>, E>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, E>,
    E: From<SimError>,
{
    let axpy = |a: &[f64], k: &[f64], s: f64| -> Vec<f64> { a.iter().zip(k).map(|(y, k)| y + s * k).collect() };
    let check = |k: Vec<f64>| -> Result<Vec<f64>, E> {
        if k.iter().all(|v| v.is_finite()) {
            Ok(k)
        } else {
            Err(SimError::NonFiniteStage(t).into())
        }
    };
    let k1 = check(f(t, y)?)?;
    let k2 = check(f(t + 0.5 * h, &axpy(y, &k1, 0.5 * h))?)?;
    let k3 = check(f(t + 0.5 * h, &axpy(y, &k2, 0.5 * h))?)?;
    let k4 = check(f(t + h, &axpy(y, &k3, h))?)?;
    let out: Vec<f64> = (0..y.len())
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    check(out)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Offers the current point of every agent to its stack.
fn record_all(cl: &ClosedLoop<'_>, state: &SwarmState, stacks: &mut HistoryStack) -> Result<(), ControlError> {
    for i in 0..cl.dims().n {
        let u = cl.control_input(i, state)?;
        let xdot = cl.agent_derivative(i, state, &u);
        let p = cl.dims().p;
        stacks.record_history_point(i, state.t, state.agent_x(i, p), &u, &xdot, cl.model, cl.cfg.cl_source)?;
    }
    Ok(())
}

/// Checks run before integrating. Returns the Laplacian facts.
pub fn validate(scenario: &Scenario) -> Result<LaplacianFacts, SimError> {
    scenario.integrator.validate()?;
    let facts = LaplacianFacts::of(&scenario.graph)?;
    if scenario.controller.are_residual.is_nan() || scenario.controller.are_residual > ARE_RESIDUAL_TOL {
        return Err(SimError::AreResidual(scenario.controller.are_residual));
    }
    if scenario.controller.alpha < facts.alpha_min {
        warn!(
            "coupling gain α = {} is below 1/(2λ₂) = {:.6}",
            scenario.controller.alpha, facts.alpha_min
        );
    }
    Ok(facts)
}

/// Integrates `(x, θ̂)` over `[0, t_final]`.
pub fn simulate(scenario: &Scenario) -> Result<TrajectoryLog, SimError> {
    let facts = validate(scenario)?;
    let cfg = &scenario.controller;
    let cl = ClosedLoop::new(&scenario.model, &scenario.graph, cfg)?;
    let dims = cl.dims();
    let integ = scenario.integrator;
    let h = integ.step_h;
    let hist = scenario.history;

    let mut stacks = HistoryStack::new(dims.n, dims.m, hist.capacity);
    stacks.eps_add = hist.eps_add;
    stacks.rank_tol = hist.rank_tol;

    let theta_true = scenario.model.theta_true();
    let p_mat = &cfg.p;
    let sample_of = |s: &SwarmState| Sample {
        t: s.t,
        x: s.x.clone(),
        theta_hat: s.theta_hat.clone(),
        v: crate::control::lyapunov_value(s, &facts.laplacian, p_mat, &theta_true),
        consensus_error: consensus_error(&s.x, dims.n, dims.p),
        bound: 0.0,
    };

    let nx = dims.n * dims.p;
    let mut state = scenario.initial.clone();
    state.t = 0.0;
    let mut samples = Vec::with_capacity(integ.samples());
    samples.push(sample_of(&state));
    let mut recording = true;

    let finish = |samples: Vec<Sample>, stacks: HistoryStack| -> Result<TrajectoryLog, SimError> {
        let l = &facts.laplacian;
        let certificate = rate_certificate(l, p_mat, &scenario.model.plant.b, cfg.alpha, cfg.quantizer.level(), &stacks)?;
        let v0 = samples[0].v;
        let mut samples = samples;
        for s in &mut samples {
            s.bound = certificate.bound(s.t, v0);
        }
        Ok(TrajectoryLog {
            samples,
            certificate,
            stacks,
        })
    };

    for k in 0..integ.steps() {
        if recording {
            if state.t <= hist.t_record {
                if k % integ.sample_every == 0 {
                    record_all(&cl, &state, &mut stacks)?;
                }
            } else {
                recording = false;
                if cfg.theorem_grade && cfg.update_mode == UpdateMode::ConcurrentLearning {
                    if let Some(i) = (0..dims.n).find(|&i| !stacks.condition1_certificate(i).0) {
                        return Err(SimError::Uncertified(ControlError::Uncertified {
                            agent: i + 1,
                            q: stacks.condition1_certificate(i).1,
                        }));
                    }
                }
            }
        }

        let mut y = Vec::with_capacity(state.x.len() + state.theta_hat.len());
        y.extend_from_slice(&state.x);
        y.extend_from_slice(&state.theta_hat);
        let field = |t: f64, y: &[f64]| -> Result<Vec<f64>, SimError> {
            let s = SwarmState::new(t, y[..nx].to_vec(), y[nx..].to_vec());
            let d = cl.closed_loop_rhs(&s, &stacks)?;
            let mut out = d.dx;
            out.extend(d.dtheta);
            Ok(out)
        };
        let t_next = (k + 1) as f64 * h;
        let stepped = match rk4_step(field, state.t, &y, h) {
            Ok(y) => Some(y),
            Err(SimError::NonFiniteStage(_)) | Err(SimError::Control(ControlError::NonFinite(_))) => None,
            Err(e) => return Err(e),
        };
        let size = stepped.as_ref().map_or(f64::INFINITY, |y| norm(&y[..nx]));
        match stepped {
            Some(y) if size <= BLOW_UP_NORM && y.iter().all(|v| v.is_finite()) => {
                state = SwarmState::new(t_next, y[..nx].to_vec(), y[nx..].to_vec());
            }
            _ => {
                let log = finish(samples, stacks)?;
                return Err(SimError::BlowUp {
                    t: t_next,
                    norm: size,
                    log: Box::new(log),
                });
            }
        }
        if (k + 1) % integ.sample_every == 0 {
            samples.push(sample_of(&state));
        }
    }
    finish(samples, stacks)
}
