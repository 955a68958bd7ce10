//! Experiment commands behind the `acl` binary: certificate checks, single
//! runs and quantization sweeps, with CSV and SVG output.

pub mod plot;
pub mod scenario;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::control::{RateCertificate, UpdateMode, ARE_RESIDUAL_TOL};
use crate::graph::{alpha_certificate, LaplacianFacts};
use crate::quantize::QuantizerConfig;
use crate::sim::{simulate, Scenario, SimError, TrajectoryLog};
use plot::{LinePlot, Series};
pub use scenario::{ScenarioError, ScenarioFile};

/// Fraction of trailing samples averaged for steady-state figures.
pub const STEADY_STATE_FRACTION: f64 = 0.1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("precondition failed: {0} (use --force to run anyway)")]
    Precondition(String),
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    /// Failing blocks `run` and `sweep` unless forced.
    Gate,
    /// Reported only.
    Advisory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub severity: Severity,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub checks: Vec<Check>,
    pub are_residual: f64,
    pub lambda2: f64,
    pub lambda_max: f64,
    pub alpha: f64,
    pub alpha_min: f64,
    pub per_agent_q: Vec<f64>,
    pub certificate: Option<RateCertificate>,
    pub outputs: Vec<PathBuf>,
}

impl RunReport {
    /// True when no gating check failed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || c.severity == Severity::Advisory)
    }

    fn check(&mut self, name: &'static str, passed: bool, severity: Severity, detail: String) {
        self.checks.push(Check {
            name,
            passed,
            severity,
            detail,
        });
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let mark = match (c.passed, c.severity) {
                (true, _) => "ok  ",
                (false, Severity::Gate) => "FAIL",
                (false, Severity::Advisory) => "warn",
            };
            writeln!(f, "[{mark}] {}: {}", c.name, c.detail)?;
        }
        if !self.per_agent_q.is_empty() {
            let qs: Vec<String> = self.per_agent_q.iter().map(|q| format!("{q:.6e}")).collect();
            writeln!(f, "history q per agent: [{}]", qs.join(", "))?;
        }
        if let Some(c) = &self.certificate {
            writeln!(f, "rate certificate:")?;
            writeln!(f, "  lambda2            = {:.6}", c.lambda2)?;
            writeln!(f, "  C = lmax(L)lmax(P) = {:.6}", c.c)?;
            writeln!(f, "  gamma              = {:.6e}", c.gamma)?;
            writeln!(f, "  q                  = {:.6e}", c.q)?;
            writeln!(f, "  decay (sigma = 0)  = {:.6e}", c.decay_unquantized)?;
            writeln!(f, "  decay (sigma > 0)  = {:.6e}", c.decay_quantized)?;
            writeln!(f, "  D                  = {:.6e}", c.d)?;
            writeln!(f, "  J                  = {:.6e}", c.j)?;
            writeln!(f, "  sigma              = {}", c.sigma)?;
            writeln!(f, "  offset             = {:.6e}", c.offset)?;
        }
        for p in &self.outputs {
            writeln!(f, "wrote {}", p.display())?;
        }
        Ok(())
    }
}

/// Certificate checks without integrating the full horizon. The history window
/// is dry-run to measure the rank condition.
pub fn cmd_verify(scenario: &Scenario) -> Result<RunReport, CliError> {
    let mut report = RunReport::default();
    let cfg = &scenario.controller;
    report.are_residual = cfg.are_residual;
    report.alpha = cfg.alpha;
    report.check(
        "stabilizable",
        cfg.are_residual <= ARE_RESIDUAL_TOL,
        Severity::Gate,
        format!("ARE residual {:.3e} (limit {ARE_RESIDUAL_TOL:e})", cfg.are_residual),
    );

    let facts = LaplacianFacts::of(&scenario.graph).map_err(SimError::from)?;
    report.lambda2 = facts.lambda2;
    report.lambda_max = facts.lambda_max;
    report.alpha_min = facts.alpha_min;
    report.check("connected", true, Severity::Gate, format!("lambda2 = {:.6}", facts.lambda2));
    report.check(
        "coupling gain",
        cfg.alpha >= facts.alpha_min,
        Severity::Advisory,
        format!("alpha = {} vs 1/(2 lambda2) = {:.6}", cfg.alpha, facts.alpha_min),
    );
    let psd = alpha_certificate(&facts.laplacian, cfg.alpha).map_err(SimError::from)?;
    report.check(
        "2 alpha L^2 - L psd",
        psd.passes,
        Severity::Advisory,
        format!("min eigenvalue {:.6e}", psd.min_eigenvalue),
    );

    let mut dry = scenario.clone();
    let h = dry.integrator.step_h;
    dry.integrator.t_final = (scenario.history.t_record + h).max(h);
    dry.integrator.sample_every = 1;
    dry.controller.theorem_grade = false;
    let log = match simulate(&dry) {
        Ok(log) => log,
        Err(SimError::BlowUp { log, .. }) => *log,
        Err(e) => return Err(e.into()),
    };
    report.per_agent_q = (0..log.stacks.n()).map(|i| log.stacks.condition1_certificate(i).1).collect();
    let needs_rank = cfg.update_mode == UpdateMode::ConcurrentLearning && cfg.theorem_grade;
    report.check(
        "rank condition",
        log.stacks.all_certified(),
        if needs_rank { Severity::Gate } else { Severity::Advisory },
        format!("min q = {:.6e} (tolerance {:e})", log.certificate.q, log.stacks.rank_tol),
    );
    report.certificate = Some(log.certificate);
    Ok(report)
}

fn write_file(path: &Path, contents: &str) -> Result<PathBuf, CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(path.to_path_buf())
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// `t,consensus_error,V,bound,theta_hat_1..,x_1..` with one row per sample.
pub fn trajectory_csv(log: &TrajectoryLog) -> String {
    let first = log.first();
    let mut header = vec!["t".to_string(), "consensus_error".into(), "V".into(), "bound".into()];
    header.extend((1..=first.theta_hat.len()).map(|k| format!("theta_hat_{k}")));
    header.extend((1..=first.x.len()).map(|k| format!("x_{k}")));
    let mut out = header.join(",");
    out.push('\n');
    for s in &log.samples {
        let mut row = vec![s.t, s.consensus_error, s.v, s.bound];
        row.extend(&s.theta_hat);
        row.extend(&s.x);
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn consensus_plot(title: &str, series: Vec<Series>) -> String {
    LinePlot {
        title: title.into(),
        x_label: "t [s]".into(),
        y_label: "sum of squared pairwise distances".into(),
        log_y: true,
        series,
    }
    .render()
}

fn consensus_series(log: &TrajectoryLog, label: String, color: usize) -> Series {
    Series::new(label, log.samples.iter().map(|s| (s.t, s.consensus_error)).collect(), color)
}

/// Writes the CSV and the three plots for one run.
pub fn write_run_outputs(
    scenario: &Scenario,
    log: &TrajectoryLog,
    out: &Path,
    coords: &[usize],
) -> Result<Vec<PathBuf>, CliError> {
    ensure_dir(out)?;
    let dims = scenario.model.dims();
    let mut written = vec![write_file(&out.join("trajectory.csv"), &trajectory_csv(log))?];

    written.push(write_file(
        &out.join("consensus_error.svg"),
        &consensus_plot("Consensus error", vec![consensus_series(log, "error".into(), 0)]),
    )?);

    let t_end = log.last().t;
    let mut theta = Vec::new();
    for k in 0..dims.n * dims.m {
        let est = log.samples.iter().map(|s| (s.t, s.theta_hat[k])).collect();
        theta.push(Series::new(format!("theta_hat_{}", k + 1), est, k));
        let truth = scenario.model.agents[k / dims.m].theta_true[k % dims.m];
        theta.push(Series::new(format!("theta_{}", k + 1), vec![(0.0, truth), (t_end, truth)], k).dashed());
    }
    let theta_plot = LinePlot {
        title: "Parameter estimates".into(),
        x_label: "t [s]".into(),
        y_label: "theta".into(),
        log_y: false,
        series: theta,
    };
    written.push(write_file(&out.join("theta.svg"), &theta_plot.render())?);

    let mut states = Vec::new();
    for (c, &coord) in coords.iter().enumerate() {
        for i in 0..dims.n {
            let pts = log.samples.iter().map(|s| (s.t, s.x[i * dims.p + coord - 1])).collect();
            let mut s = Series::new(format!("x_{},{}", i + 1, coord), pts, i);
            s.dashed = c % 2 == 1;
            states.push(s);
        }
    }
    let state_plot = LinePlot {
        title: format!(
            "State coordinates {}",
            coords.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" and ")
        ),
        x_label: "t [s]".into(),
        y_label: "x".into(),
        log_y: false,
        series: states,
    };
    written.push(write_file(&out.join("state_coord.svg"), &state_plot.render())?);
    Ok(written)
}

fn check_coords(scenario: &Scenario, coords: &[usize]) -> Result<(), CliError> {
    let p = scenario.model.dims().p;
    if let Some(bad) = coords.iter().find(|&&c| c == 0 || c > p) {
        return Err(CliError::Usage(format!("state coordinate {bad} is outside 1..={p}")));
    }
    Ok(())
}

/// Verifies, simulates and writes outputs. A divergent run still writes the
/// samples logged before the abort, then reports the failure.
pub fn cmd_run(scenario: &Scenario, out: &Path, force: bool, coords: &[usize]) -> Result<RunReport, CliError> {
    check_coords(scenario, coords)?;
    let mut report = cmd_verify(scenario)?;
    if !report.passed() && !force {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed && c.severity == Severity::Gate).map(|c| c.name).collect();
        return Err(CliError::Precondition(failed.join(", ")));
    }
    match simulate(scenario) {
        Ok(log) => {
            report.certificate = Some(log.certificate);
            report.outputs = write_run_outputs(scenario, &log, out, coords)?;
            Ok(report)
        }
        Err(SimError::BlowUp { t, norm, log }) => {
            write_run_outputs(scenario, &log, out, coords)?;
            Err(SimError::BlowUp { t, norm, log }.into())
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub sigma: f64,
    pub steady_state_consensus_error: f64,
    pub steady_state_v: f64,
    pub offset: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("sigma,steady_state_consensus_error,steady_state_V,theorem2_offset\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.sigma, r.steady_state_consensus_error, r.steady_state_v, r.offset
        ));
    }
    out
}

/// Runs every σ (in parallel threads); logs are returned in input order.
pub fn sweep_logs(scenario: &Scenario, sigmas: &[f64]) -> Result<Vec<TrajectoryLog>, CliError> {
    let mut variants = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(CliError::Usage(format!("sigma = {sigma} must be finite and ≥ 0")));
        }
        let mut s = scenario.clone();
        s.controller.quantizer = QuantizerConfig::with_sigma(sigma).map_err(ScenarioError::from)?;
        variants.push(s);
    }
    let results: Vec<Result<TrajectoryLog, SimError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = variants.iter().map(|s| scope.spawn(move || simulate(s))).collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    results.into_iter().map(|r| r.map_err(CliError::from)).collect()
}

pub fn sweep_row(sigma: f64, log: &TrajectoryLog) -> SweepRow {
    SweepRow {
        sigma,
        steady_state_consensus_error: log.tail_mean(STEADY_STATE_FRACTION, |s| s.consensus_error),
        steady_state_v: log.tail_mean(STEADY_STATE_FRACTION, |s| s.v),
        offset: log.certificate.offset,
    }
}

pub fn cmd_sweep(scenario: &Scenario, sigmas: &[f64], out: &Path) -> Result<(RunReport, Vec<SweepRow>), CliError> {
    if sigmas.is_empty() {
        return Err(CliError::Usage("no sigma values given".into()));
    }
    let mut report = cmd_verify(scenario)?;
    if !report.passed() {
        return Err(CliError::Precondition("verify failed".into()));
    }
    let logs = sweep_logs(scenario, sigmas)?;
    let rows: Vec<SweepRow> = sigmas.iter().zip(&logs).map(|(s, l)| sweep_row(*s, l)).collect();
    ensure_dir(out)?;
    report.outputs.push(write_file(&out.join("sweep.csv"), &sweep_csv(&rows))?);
    let series = sigmas
        .iter()
        .zip(&logs)
        .enumerate()
        .map(|(k, (s, l))| consensus_series(l, format!("sigma = {s}"), k))
        .collect();
    report.outputs.push(write_file(
        &out.join("sweep_consensus_error.svg"),
        &consensus_plot("Consensus error by quantization level", series),
    )?);
    Ok((report, rows))
}

/// Loads and resolves a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    Ok(ScenarioFile::load(path)?.resolve()?)
}
