//! Undirected, optionally weighted communication graphs.

use std::collections::VecDeque;

use thiserror::Error;

use crate::linalg::{eig_symmetric, LinalgError, Matrix, EIG_TOL};

/// λ₂ at or below this value means the graph is disconnected.
pub const DISCONNECTED_TOL: f64 = 1e-8;

/// Eigenvalue floor for the `2αL² − L ⪰ 0` certificate.
pub const PSD_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph needs at least one vertex")]
    Empty,
    #[error("weight matrix must be square, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error("weights must be symmetric: a[{i}][{j}] = {a_ij} but a[{j}][{i}] = {a_ji}")]
    Asymmetric { i: usize, j: usize, a_ij: f64, a_ji: f64 },
    #[error("weight a[{i}][{j}] = {value} is negative or non-finite")]
    BadWeight { i: usize, j: usize, value: f64 },
    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),
    #[error("edge ({0}, {1}) references a vertex outside 1..={2}")]
    EdgeOutOfRange(usize, usize, usize),
    #[error("matrix is not a graph Laplacian: {0}")]
    NotLaplacian(String),
    #[error("graph is disconnected (lambda_2 = {0:.3e})")]
    Disconnected(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Symmetric nonnegative weights with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct UndirectedGraph {
    weights: Matrix,
}

impl UndirectedGraph {
    pub fn from_weights(weights: Matrix) -> Result<Self, GraphError> {
        let (r, c) = weights.shape();
        if r != c {
            return Err(GraphError::NotSquare(r, c));
        }
        for i in 0..r {
            if weights[(i, i)] != 0.0 {
                return Err(GraphError::SelfLoop(i + 1));
            }
            for j in 0..r {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(GraphError::BadWeight { i: i + 1, j: j + 1, value: w });
                }
                if w != weights[(j, i)] {
                    return Err(GraphError::Asymmetric {
                        i: i + 1,
                        j: j + 1,
                        a_ij: w,
                        a_ji: weights[(j, i)],
                    });
                }
            }
        }
        Ok(Self { weights })
    }

    /// Unit-weight graph from 1-based edges.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let weighted: Vec<_> = edges.iter().map(|&(i, j)| (i, j, 1.0)).collect();
        Self::from_weighted_edges(n, &weighted)
    }

    /// Graph from 1-based `(i, j, weight)` triples. Repeated edges overwrite.
    pub fn from_weighted_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut w = Matrix::zeros(n, n);
        for &(i, j, value) in edges {
            if i == 0 || j == 0 || i > n || j > n {
                return Err(GraphError::EdgeOutOfRange(i, j, n));
            }
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            w[(i - 1, j - 1)] = value;
            w[(j - 1, i - 1)] = value;
        }
        Self::from_weights(w)
    }

    /// Recovers the weights `a_ij = −L_ij` from a Laplacian matrix.
    ///
    /// Diagonal entries must equal the off-diagonal row sums to within
    /// `1e−9 · max(1, |L_ii|)`.
    pub fn from_laplacian(l: &Matrix) -> Result<Self, GraphError> {
        if !l.is_square() {
            return Err(GraphError::NotSquare(l.rows(), l.cols()));
        }
        let n = l.rows();
        let mut w = Matrix::zeros(n, n);
        for i in 0..n {
            let mut degree = 0.0;
            for j in 0..n {
                if i != j {
                    w[(i, j)] = -l[(i, j)];
                    degree += w[(i, j)];
                }
            }
            if (degree - l[(i, i)]).abs() > 1e-9 * l[(i, i)].abs().max(1.0) {
                return Err(GraphError::NotLaplacian(format!(
                    "row {} sums to {:.3e}",
                    i + 1,
                    l[(i, i)] - degree
                )));
            }
        }
        Self::from_weights(w)
    }

    pub fn n(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    /// Neighbours of `i` (0-based) with their weights.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights
            .row(i)
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(j, w)| (j, *w))
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.weights.row(i).iter().sum()
    }

    /// Degree matrix minus adjacency.
    pub fn laplacian(&self) -> Matrix {
        let n = self.n();
        let mut l = -&self.weights;
        for i in 0..n {
            l[(i, i)] = self.degree(i);
        }
        l
    }

    /// Breadth-first reachability from the first vertex.
    pub fn is_connected(&self) -> bool {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for (j, _) in self.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == n
    }
}

/// Second-smallest Laplacian eigenvalue (Fiedler value).
pub fn algebraic_connectivity(l: &Matrix) -> Result<f64, GraphError> {
    let spec = eig_symmetric(l, EIG_TOL)?;
    let lambda2 = spec.eigenvalues.get(1).copied().unwrap_or(0.0);
    if lambda2 <= DISCONNECTED_TOL {
        return Err(GraphError::Disconnected(lambda2));
    }
    Ok(lambda2)
}

/// Smallest coupling gain `1 / (2 λ₂)` for which `2αL² − L ⪰ 0`.
pub fn alpha_lower_bound(l: &Matrix) -> Result<f64, GraphError> {
    Ok(0.5 / algebraic_connectivity(l)?)
}

/// Outcome of checking `2αL² − L ⪰ 0` numerically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdCertificate {
    pub alpha: f64,
    pub min_eigenvalue: f64,
    pub passes: bool,
}

pub fn alpha_certificate(l: &Matrix, alpha: f64) -> Result<PsdCertificate, GraphError> {
    let l2 = l * l;
    let m = &l2.scale(2.0 * alpha) - l;
    let min_eigenvalue = eig_symmetric(&m, EIG_TOL)?.min();
    Ok(PsdCertificate {
        alpha,
        min_eigenvalue,
        passes: min_eigenvalue >= -PSD_TOL,
    })
}

/// λ₂, the α bound and the Laplacian in one bundle.
#[derive(Debug, Clone)]
pub struct LaplacianFacts {
    pub laplacian: Matrix,
    pub lambda2: f64,
    pub lambda_max: f64,
    pub alpha_min: f64,
}

impl LaplacianFacts {
    pub fn of(g: &UndirectedGraph) -> Result<Self, GraphError> {
        let laplacian = g.laplacian();
        let spec = eig_symmetric(&laplacian, EIG_TOL)?;
        let lambda2 = spec.eigenvalues.get(1).copied().unwrap_or(0.0);
        if lambda2 <= DISCONNECTED_TOL {
            return Err(GraphError::Disconnected(lambda2));
        }
        Ok(Self {
            lambda_max: spec.max(),
            alpha_min: 0.5 / lambda2,
            lambda2,
            laplacian,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn figure1() -> UndirectedGraph {
        UndirectedGraph::from_edges(5, &[(1, 2), (1, 5), (4, 5), (3, 4), (1, 4)]).unwrap()
    }

    fn complete(n: usize) -> UndirectedGraph {
        let mut edges = vec![];
        for i in 1..=n {
            for j in (i + 1)..=n {
                edges.push((i, j));
            }
        }
        UndirectedGraph::from_edges(n, &edges).unwrap()
    }

    #[test]
    fn single_edge_laplacian() {
        let g = UndirectedGraph::from_edges(2, &[(1, 2)]).unwrap();
        assert_eq!(g.laplacian(), Matrix::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]).unwrap());
    }

    #[test]
    fn figure1_laplacian() {
        let l = figure1().laplacian();
        let degrees: Vec<f64> = (0..5).map(|i| l[(i, i)]).collect();
        assert_eq!(degrees, vec![3.0, 1.0, 1.0, 3.0, 2.0]);
        for (i, j) in [(1, 2), (1, 5), (4, 5), (3, 4), (1, 4)] {
            assert_eq!(l[(i - 1, j - 1)], -1.0);
            assert_eq!(l[(j - 1, i - 1)], -1.0);
        }
        let off_edges: usize = (0..5)
            .flat_map(|i| (0..5).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && l[(i, j)] != 0.0)
            .count();
        assert_eq!(off_edges, 10);
    }

    #[test]
    fn edgeless_laplacian_is_zero() {
        let g = UndirectedGraph::from_edges(3, &[]).unwrap();
        assert_eq!(g.laplacian(), Matrix::zeros(3, 3));
    }

    #[test]
    fn connectivity() {
        assert!(figure1().is_connected());
        assert!(!UndirectedGraph::from_edges(2, &[]).unwrap().is_connected());
        assert!(!UndirectedGraph::from_edges(4, &[(1, 2), (3, 4)]).unwrap().is_connected());
    }

    #[test]
    fn complete_graph_connectivity() {
        assert_abs_diff_eq!(algebraic_connectivity(&complete(2).laplacian()).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(algebraic_connectivity(&complete(5).laplacian()).unwrap(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn disconnected_is_an_error() {
        let l = UndirectedGraph::from_edges(4, &[(1, 2), (3, 4)]).unwrap().laplacian();
        assert!(matches!(algebraic_connectivity(&l), Err(GraphError::Disconnected(_))));
        assert!(alpha_lower_bound(&l).is_err());
    }

    #[test]
    fn k2_alpha_bound_and_certificate() {
        let l = complete(2).laplacian();
        assert_abs_diff_eq!(alpha_lower_bound(&l).unwrap(), 0.25, epsilon = 1e-14);
        let cert = alpha_certificate(&l, 0.25).unwrap();
        assert!(cert.passes);
        assert_abs_diff_eq!(cert.min_eigenvalue, 0.0, epsilon = 1e-12);
        assert!(alpha_certificate(&l, 0.5).unwrap().passes);
        assert!(!alpha_certificate(&l, 0.025).unwrap().passes);
    }

    #[test]
    fn validation() {
        let w = Matrix::from_rows(&[[0.0, 1.0], [2.0, 0.0]]).unwrap();
        assert!(matches!(UndirectedGraph::from_weights(w), Err(GraphError::Asymmetric { .. })));
        let w = Matrix::from_rows(&[[0.0, -1.0], [-1.0, 0.0]]).unwrap();
        assert!(matches!(UndirectedGraph::from_weights(w), Err(GraphError::BadWeight { .. })));
        assert!(matches!(UndirectedGraph::from_edges(2, &[(1, 1)]), Err(GraphError::SelfLoop(1))));
        assert!(matches!(UndirectedGraph::from_edges(2, &[(1, 3)]), Err(GraphError::EdgeOutOfRange(1, 3, 2))));
        let bad = Matrix::from_rows(&[[1.0, -2.0], [-2.0, 1.0]]).unwrap();
        assert!(matches!(UndirectedGraph::from_laplacian(&bad), Err(GraphError::NotLaplacian(_))));
    }

    #[test]
    fn laplacian_round_trip() {
        let g = figure1();
        assert_eq!(UndirectedGraph::from_laplacian(&g.laplacian()).unwrap(), g);
    }
}
