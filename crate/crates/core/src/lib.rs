//! Adaptive consensus control with concurrent learning for uncertain linear
//! multi-agent systems.
//!
//! Each agent follows `ẋᵢ = A xᵢ + B (uᵢ + Φᵢ(t, xᵢ) θᵢ)` with an unknown
//! constant parameter `θᵢ`. The controller couples agents through an
//! undirected graph Laplacian, cancels the matched uncertainty with an
//! adaptive estimate `θ̂ᵢ`, and (optionally) drives the estimate with a
//! recorded history stack so that the Lyapunov function decays at an explicit
//! exponential rate. Transmitted states may pass through a uniform quantizer.
//!
//! Module map:
//!
//! * [`linalg`]: small dense matrix kernels (Jacobi eigensolver, Lyapunov and
//!   Riccati solvers, Kronecker products).
//! * [`graph`]: undirected graphs, Laplacians, algebraic connectivity.
//! * [`quantize`]: the uniform quantizer.
//! * [`control`]: agent models, control and update laws, history stacks,
//!   Lyapunov diagnostics and the rate certificate.
//! * [`sim`]: fixed-step RK4 integration and trajectory logging.
//! * [`cli`]: scenario files, experiment commands, CSV and SVG output.

pub mod cli;
pub mod control;
pub mod fixtures;
pub mod graph;
pub mod linalg;
pub mod quantize;
pub mod sim;

pub use control::{
    ClSource, ClosedLoop, ControllerConfig, HistoryStack, Plant, RateCertificate, RegressorSpec,
    SwarmModel, SwarmState, UpdateMode,
};
pub use graph::UndirectedGraph;
pub use linalg::Matrix;
pub use quantize::QuantizerConfig;
pub use sim::{simulate, IntegratorConfig, Scenario, TrajectoryLog};
