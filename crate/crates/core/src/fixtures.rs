//! Built-in scenarios: a five-agent swarm of four-state agents with two
//! inputs and one uncertain parameter each.

use crate::cli::scenario::{
    AlphaSpec, ControllerSection, DynamicsSection, GraphSection, IntegratorSection, ParametersSection,
    RegressorSection, ScenarioFile,
};
use crate::control::{ClSource, UpdateMode};
use crate::graph::UndirectedGraph;

/// Drift matrix with `A₁₁ = +0.8`, the value for which the published
/// Riccati solution satisfies the ARE.
pub const A: [[f64; 4]; 4] = [
    [0.8, 0.3, 0.2, 1.1],
    [0.4, -0.5, 1.2, 0.6],
    [0.7, 0.9, 0.2, 0.5],
    [1.3, 1.1, 0.4, -0.1],
];

/// The drift matrix as typeset, with `A₁₁ = −0.8`.
pub const A_PRINTED: [[f64; 4]; 4] = [
    [-0.8, 0.3, 0.2, 1.1],
    [0.4, -0.5, 1.2, 0.6],
    [0.7, 0.9, 0.2, 0.5],
    [1.3, 1.1, 0.4, -0.1],
];

pub const B: [[f64; 2]; 4] = [[1.2, 0.7], [0.6, 1.3], [1.1, 1.4], [0.9, 1.2]];

/// Published four-digit Riccati solution.
pub const P_PRINTED: [[f64; 4]; 4] = [
    [2.8917, -0.3741, -1.8010, 1.2765],
    [-0.3741, 0.5278, 0.3487, -0.0738],
    [-1.8010, 0.3487, 2.1217, -1.0746],
    [1.27656, -0.0738, -1.0746, 1.1882],
];

/// 1-based weighted edges of the five-vertex communication graph.
pub const EDGES: [(usize, usize, f64); 5] = [
    (1, 2, 1.037),
    (1, 4, 0.865),
    (1, 5, 0.266),
    (3, 4, 1.651),
    (4, 5, 0.347),
];

pub const GAMMA: [f64; 5] = [0.4157, 0.4017, 0.0302, 0.1996, 0.2634];
pub const BETA: [f64; 5] = [0.3437, 0.5474, 0.5233, 0.2433, 0.3597];
pub const THETA: [f64; 5] = [3.0, 6.0, 1.5, 5.5, 0.5];
pub const THETA_HAT_INIT: [f64; 5] = [1.0, 1.0, 3.0, 2.0, 5.0];

pub const X_INIT: [[f64; 4]; 5] = [
    [-6.125, 4.375, 9.875, -8.125],
    [1.0, -8.5, -2.5, 10.0],
    [-5.0, 7.5, -3.5, 1.0],
    [10.125, -3.875, -2.875, -3.375],
    [1.125, 0.125, -0.875, -0.375],
];

pub const ALPHA: f64 = 0.8019;

/// Quantization levels compared in the sweep.
pub const SIGMAS: [f64; 3] = [5.0, 10.0, 15.0];

fn rows<const N: usize>(m: &[[f64; N]]) -> Vec<Vec<f64>> {
    m.iter().map(|r| r.to_vec()).collect()
}

pub fn graph() -> UndirectedGraph {
    UndirectedGraph::from_weighted_edges(5, &EDGES).expect("fixture graph is valid")
}

/// The five-agent scenario, unquantized, concurrent learning with oracle
/// regressor targets.
pub fn five_agent() -> ScenarioFile {
    ScenarioFile {
        graph: GraphSection {
            weights: None,
            n: Some(5),
            edges: Some(EDGES.to_vec()),
        },
        dynamics: DynamicsSection {
            a: rows(&A),
            b: rows(&B),
            regressor: RegressorSection::Exponential {
                gamma: GAMMA.to_vec(),
                beta: BETA.to_vec(),
            },
        },
        parameters: ParametersSection {
            theta_true: THETA.iter().map(|t| vec![*t]).collect(),
            theta_hat_init: THETA_HAT_INIT.iter().map(|t| vec![*t]).collect(),
            x_init: Some(rows(&X_INIT)),
            alpha: AlphaSpec::Value(ALPHA),
            q: None,
        },
        controller: ControllerSection {
            update_mode: UpdateMode::ConcurrentLearning,
            cl_source: ClSource::Oracle,
            ..ControllerSection::default()
        },
        integrator: IntegratorSection::default(),
        seed: 0,
    }
}

/// [`five_agent`] with the drift matrix exactly as typeset.
pub fn five_agent_printed_a() -> ScenarioFile {
    let mut s = five_agent();
    s.dynamics.a = rows(&A_PRINTED);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_laplacian_matches_published() {
        let l = graph().laplacian();
        let expected = [
            [2.168, -1.037, 0.0, -0.865, -0.266],
            [-1.037, 1.037, 0.0, 0.0, 0.0],
            [0.0, 0.0, 1.651, -1.651, 0.0],
            [-0.865, 0.0, -1.651, 2.863, -0.347],
            [-0.266, 0.0, 0.0, -0.347, 0.613],
        ];
        for (i, row) in expected.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((l[(i, j)] - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fixture_resolves() {
        let s = five_agent().resolve().unwrap();
        assert_eq!(s.model.dims().n, 5);
        assert_eq!(s.initial.x.len(), 20);
        assert!(s.controller.are_residual <= 1e-8);
    }
}
