//! Dense real-matrix kernels for small systems.
//!
//! Everything here is sized for state dimensions up to a few dozen: a cyclic
//! Jacobi eigensolver for symmetric matrices, a Kronecker-vectorized Lyapunov
//! solver, and a continuous algebraic Riccati solver that integrates the
//! differential Riccati equation to steady state. Tolerances are relative to
//! `max(1, ‖·‖_F)`.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use thiserror::Error;

/// Relative asymmetry accepted (and silently removed) by symmetric routines.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Default off-diagonal stopping tolerance for [`eig_symmetric`].
pub const EIG_TOL: f64 = 1e-15;

const MAX_JACOBI_SWEEPS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("invalid shape {rows}x{cols} with {len} entries")]
    InvalidShape { rows: usize, cols: usize, len: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    Asymmetric(f64),
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("linear system is singular to working precision")]
    Singular,
    #[error("matrix is not Hurwitz")]
    NotHurwitz,
    #[error("Jacobi iteration did not converge after {0} sweeps")]
    EigenNotConverged(usize),
    #[error("Riccati iteration did not converge after {steps} steps (residual {residual:.3e})")]
    RiccatiNotConverged { steps: usize, residual: f64 },
    #[error("Riccati solution is not stabilizing")]
    NotStabilizing,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Row-major dense matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(LinalgError::InvalidShape {
                rows,
                cols,
                len: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.as_ref().len());
        if rows.iter().any(|row| row.as_ref().len() != c) {
            return Err(LinalgError::InvalidShape {
                rows: r,
                cols: c,
                len: rows.iter().map(|row| row.as_ref().len()).sum(),
            });
        }
        let data = rows.iter().flat_map(|row| row.as_ref().iter().copied()).collect();
        Self::new(r, c, data)
    }

    pub fn column(values: &[f64]) -> Result<Self> {
        Self::new(values.len(), 1, values.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// `‖M − Mᵀ‖_F / max(1, ‖M‖_F)`; infinite for non-square input.
    pub fn relative_asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut acc = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let d = self[(i, j)] - self[(j, i)];
                acc += d * d;
            }
        }
        acc.sqrt() / self.frobenius_norm().max(1.0)
    }

    /// `(M + Mᵀ) / 2`.
    pub fn symmetrized(&self) -> Self {
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    /// Checks squareness and symmetry within [`SYMMETRY_TOL`], returning the
    /// symmetrized copy.
    pub fn require_symmetric(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(LinalgError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let asym = self.relative_asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(LinalgError::Asymmetric(asym));
        }
        Ok(self.symmetrized())
    }

    pub fn try_mul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(LinalgError::DimensionMismatch {
                op: "mul",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[k * rhs.cols + j];
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product. Panics on length mismatch.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "mul_vec length mismatch");
        self.data
            .chunks(self.cols)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Transposed matrix-vector product `Mᵀ v`. Panics on length mismatch.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows, "tr_mul_vec length mismatch");
        let mut out = vec![0.0; self.cols];
        for (row, vi) in self.data.chunks(self.cols).zip(v) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * vi;
            }
        }
        out
    }

    fn zip_with(&self, rhs: &Matrix, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Matrix {
        assert_eq!(
            self.shape(),
            rhs.shape(),
            "dimension mismatch in {op}: {:?} vs {:?}",
            self.shape(),
            rhs.shape()
        );
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| f(*a, *b)).collect(),
        }
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for row in self.data.chunks(self.cols) {
            write!(f, "  ")?;
            for v in row {
                write!(f, "{v:>12.6} ")?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &Matrix {
    type Output = Matrix;
    fn add(self, rhs: &Matrix) -> Matrix {
        self.zip_with(rhs, "add", |a, b| a + b)
    }
}

impl Sub for &Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &Matrix) -> Matrix {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }
}

impl Neg for &Matrix {
    type Output = Matrix;
    fn neg(self) -> Matrix {
        self.scale(-1.0)
    }
}

/// Panics on inner-dimension mismatch; use [`Matrix::try_mul`] at API edges.
impl Mul for &Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &Matrix) -> Matrix {
        match self.try_mul(rhs) {
            Ok(m) => m,
            Err(e) => panic!("{e}"),
        }
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the unit eigenvector for `eigenvalues[k]`.
    pub eigenvectors: Matrix,
}

impl SpectralResult {
    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }
}

/// Cyclic Jacobi eigensolver.
///
/// Sweeps rotate away every off-diagonal entry until all of them are at most
/// `tol · ‖M‖_F`.
pub fn eig_symmetric(m: &Matrix, tol: f64) -> Result<SpectralResult> {
    let mut a = m.require_symmetric()?;
    let n = a.rows;
    let mut v = Matrix::identity(n);
    let threshold = tol * a.frobenius_norm();

    let off_max = |a: &Matrix| {
        let mut best = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                best = best.max(a[(i, j)].abs());
            }
        }
        best
    };

    let mut sweeps = 0;
    while off_max(&a) > threshold {
        if sweeps == MAX_JACOBI_SWEEPS {
            return Err(LinalgError::EigenNotConverged(sweeps));
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= threshold {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            eigenvectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok(SpectralResult {
        eigenvalues,
        eigenvectors,
    })
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix, which is
/// its spectral norm.
pub fn spectral_norm_psd(m: &Matrix) -> Result<f64> {
    Ok(eig_symmetric(m, EIG_TOL)?.max())
}

/// Kronecker product `left ⊗ right`.
pub fn kron(left: &Matrix, right: &Matrix) -> Matrix {
    let (lr, lc) = left.shape();
    let (rr, rc) = right.shape();
    let mut out = Matrix::zeros(lr * rr, lc * rc);
    for i in 0..lr {
        for j in 0..lc {
            let a = left[(i, j)];
            if a == 0.0 {
                continue;
            }
            for k in 0..rr {
                for l in 0..rc {
                    out[(i * rr + k, j * rc + l)] = a * right[(k, l)];
                }
            }
        }
    }
    out
}

/// Solves `A X = B` by Gaussian elimination with partial pivoting.
pub fn solve_linear(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    if a.rows != b.rows {
        return Err(LinalgError::DimensionMismatch {
            op: "solve_linear",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let n = a.rows;
    let m = b.cols;
    let mut lu = a.clone();
    let mut x = b.clone();
    let scale = a.max_abs();
    if scale == 0.0 {
        return Err(LinalgError::Singular);
    }
    let pivot_floor = scale * f64::EPSILON * n as f64;

    for col in 0..n {
        let (piv, piv_abs) = (col..n)
            .map(|r| (r, lu[(r, col)].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv_abs <= pivot_floor {
            return Err(LinalgError::Singular);
        }
        if piv != col {
            for j in 0..n {
                lu.data.swap(col * n + j, piv * n + j);
            }
            for j in 0..m {
                x.data.swap(col * m + j, piv * m + j);
            }
        }
        let d = lu[(col, col)];
        for r in (col + 1)..n {
            let f = lu[(r, col)] / d;
            if f == 0.0 {
                continue;
            }
            lu[(r, col)] = 0.0;
            for j in (col + 1)..n {
                lu.data[r * n + j] -= f * lu.data[col * n + j];
            }
            for j in 0..m {
                x.data[r * m + j] -= f * x.data[col * m + j];
            }
        }
    }
    for col in (0..n).rev() {
        let d = lu[(col, col)];
        for j in 0..m {
            let mut acc = x[(col, j)];
            for k in (col + 1)..n {
                acc -= lu[(col, k)] * x[(k, j)];
            }
            x[(col, j)] = acc / d;
        }
    }
    Ok(x)
}

fn vec_columns(m: &Matrix) -> Matrix {
    let mut v = Matrix::zeros(m.rows * m.cols, 1);
    for j in 0..m.cols {
        for i in 0..m.rows {
            v.data[j * m.rows + i] = m[(i, j)];
        }
    }
    v
}

fn unvec_columns(v: &Matrix, rows: usize, cols: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = v.data[j * rows + i];
        }
    }
    m
}

/// `AᵀP + PA + Q`.
pub fn lyapunov_residual(a: &Matrix, p: &Matrix, q: &Matrix) -> Matrix {
    let at = a.transpose();
    &(&(&at * p) + &(p * a)) + q
}

/// Kronecker-vectorized solve of `AᵀP + PA + Q = 0` with no Hurwitz check.
fn lyapunov_vectorized(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    let n = a.rows;
    let at = a.transpose();
    let eye = Matrix::identity(n);
    let op = &kron(&eye, &at) + &kron(&at, &eye);
    let rhs = -&vec_columns(q);
    let mut x = solve_linear(&op, &rhs)?;
    // One step of iterative refinement on the vectorized system.
    let r = &rhs - &(&op * &x);
    let dx = solve_linear(&op, &r)?;
    x = &x + &dx;
    Ok(unvec_columns(&x, n, n).symmetrized())
}

/// Certifies that every eigenvalue of `a` has negative real part.
///
/// Lyapunov's theorem: `a` is Hurwitz iff `aᵀX + Xa + I = 0` has a positive
/// definite solution.
pub fn is_hurwitz(a: &Matrix) -> Result<bool> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    let x = match lyapunov_vectorized(a, &Matrix::identity(a.rows)) {
        Ok(x) => x,
        Err(LinalgError::Singular) => return Ok(false),
        Err(e) => return Err(e),
    };
    let spec = eig_symmetric(&x, EIG_TOL)?;
    Ok(spec.min() > 0.0)
}

/// Solves the continuous Lyapunov equation `AᵀP + PA + Q = 0` for Hurwitz `A`.
pub fn solve_lyapunov(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    if q.shape() != a.shape() {
        return Err(LinalgError::DimensionMismatch {
            op: "solve_lyapunov",
            left: a.shape(),
            right: q.shape(),
        });
    }
    let q = q.require_symmetric()?;
    if !is_hurwitz(a)? {
        return Err(LinalgError::NotHurwitz);
    }
    lyapunov_vectorized(a, &q)
}

/// Knobs for [`solve_care`].
#[derive(Debug, Clone)]
pub struct RiccatiOptions {
    /// RK4 step for the differential Riccati equation.
    pub step_h: f64,
    pub max_iters: usize,
    /// Starting point; identity when `None`.
    pub initial: Option<Matrix>,
    /// Apply one Newton (Kleinman) step after convergence.
    pub refine: bool,
    /// Steps per progress window; the residual must halve over each window.
    pub stall_window: usize,
}

impl Default for RiccatiOptions {
    fn default() -> Self {
        Self {
            step_h: 1e-3,
            max_iters: 10_000_000,
            initial: None,
            refine: true,
            stall_window: 100_000,
        }
    }
}

/// `AᵀP + PA − PBBᵀP + Q`.
pub fn care_residual(a: &Matrix, b: &Matrix, q: &Matrix, p: &Matrix) -> Matrix {
    let pb = p * b;
    let pbbp = &pb * &pb.transpose();
    &lyapunov_residual(a, p, q) - &pbbp
}

/// Flat-buffer evaluation of the Riccati vector field, reused by the RK4 loop.
struct RiccatiField {
    n: usize,
    a: Vec<f64>,
    s: Vec<f64>,
    q: Vec<f64>,
    ap: Vec<f64>,
    sp: Vec<f64>,
}

impl RiccatiField {
    fn new(a: &Matrix, b: &Matrix, q: &Matrix) -> Self {
        let s = b * &b.transpose();
        let n = a.rows;
        Self {
            n,
            a: a.data.clone(),
            s: s.data,
            q: q.data.clone(),
            ap: vec![0.0; n * n],
            sp: vec![0.0; n * n],
        }
    }

    /// out = AᵀP + PA − P S P + Q for symmetric P.
    fn eval(&mut self, p: &[f64], out: &mut [f64]) {
        let n = self.n;
        // ap = Aᵀ P, sp = S P
        for i in 0..n {
            for j in 0..n {
                let mut acc_ap = 0.0;
                let mut acc_sp = 0.0;
                for k in 0..n {
                    acc_ap += self.a[k * n + i] * p[k * n + j];
                    acc_sp += self.s[i * n + k] * p[k * n + j];
                }
                self.ap[i * n + j] = acc_ap;
                self.sp[i * n + j] = acc_sp;
            }
        }
        for i in 0..n {
            for j in 0..n {
                let mut psp = 0.0;
                for k in 0..n {
                    psp += p[i * n + k] * self.sp[k * n + j];
                }
                // PA = (AᵀP)ᵀ for symmetric P.
                out[i * n + j] = self.ap[i * n + j] + self.ap[j * n + i] - psp + self.q[i * n + j];
            }
        }
    }
}

fn flat_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Stabilizing solution of `AᵀP + PA − PBBᵀP + Q = 0`.
///
/// Integrates `Ṗ = AᵀP + PA − PBBᵀP + Q` with RK4 until the algebraic
/// residual drops below `1e−10 · max(1, ‖Q‖_F)`, then optionally polishes with
/// a Newton step. The closed loop `A − BBᵀP` is certified Hurwitz.
pub fn solve_care(a: &Matrix, b: &Matrix, q: &Matrix, opts: &RiccatiOptions) -> Result<Matrix> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    if b.rows != a.rows {
        return Err(LinalgError::DimensionMismatch {
            op: "solve_care(A, B)",
            left: a.shape(),
            right: b.shape(),
        });
    }
    if q.shape() != a.shape() {
        return Err(LinalgError::DimensionMismatch {
            op: "solve_care(A, Q)",
            left: a.shape(),
            right: q.shape(),
        });
    }
    let q = q.require_symmetric()?;
    let n = a.rows;
    let tol = 1e-10 * q.frobenius_norm().max(1.0);
    let h = opts.step_h;

    let p0 = match &opts.initial {
        Some(p0) if p0.shape() != a.shape() => {
            return Err(LinalgError::DimensionMismatch {
                op: "solve_care(initial)",
                left: a.shape(),
                right: p0.shape(),
            })
        }
        Some(p0) => p0.require_symmetric()?,
        None => Matrix::identity(n),
    };

    let mut field = RiccatiField::new(a, b, &q);
    let nn = n * n;
    let mut p = p0.data;
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; nn], vec![0.0; nn], vec![0.0; nn], vec![0.0; nn]);
    let mut stage = vec![0.0; nn];
    let mut converged = false;
    let mut residual = f64::INFINITY;
    let mut checkpoint = f64::INFINITY;
    let mut steps = 0;

    while steps <= opts.max_iters {
        field.eval(&p, &mut k1);
        residual = flat_norm(&k1);
        if !residual.is_finite() {
            break;
        }
        if residual <= tol {
            converged = true;
            break;
        }
        if opts.stall_window > 0 && steps % opts.stall_window == 0 {
            if steps > 0 && residual > 0.5 * checkpoint {
                break;
            }
            checkpoint = residual;
        }
        if steps == opts.max_iters {
            break;
        }
        for i in 0..nn {
            stage[i] = p[i] + 0.5 * h * k1[i];
        }
        field.eval(&stage, &mut k2);
        for i in 0..nn {
            stage[i] = p[i] + 0.5 * h * k2[i];
        }
        field.eval(&stage, &mut k3);
        for i in 0..nn {
            stage[i] = p[i] + h * k3[i];
        }
        field.eval(&stage, &mut k4);
        for i in 0..nn {
            p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        // Keep the iterate exactly symmetric.
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (p[i * n + j] + p[j * n + i]);
                p[i * n + j] = v;
                p[j * n + i] = v;
            }
        }
        steps += 1;
    }
    if !converged {
        return Err(LinalgError::RiccatiNotConverged { steps, residual });
    }

    let mut p = Matrix { rows: n, cols: n, data: p };
    let bbt = b * &b.transpose();
    if opts.refine {
        let closed = a - &(&bbt * &p);
        let rhs = &(&(&p * &bbt) * &p) + &q;
        if let Ok(candidate) = lyapunov_vectorized(&closed, &rhs) {
            let before = care_residual(a, b, &q, &p).frobenius_norm();
            let after = care_residual(a, b, &q, &candidate).frobenius_norm();
            if after < before {
                p = candidate;
            }
        }
    }
    if !is_hurwitz(&(a - &(&bbt * &p)))? {
        return Err(LinalgError::NotStabilizing);
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::new(0, 1, vec![]).is_err());
        assert_eq!(Matrix::new(1, 1, vec![f64::NAN]), Err(LinalgError::NonFinite));
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn eig_identity_and_two_by_two() {
        let r = eig_symmetric(&Matrix::identity(3), EIG_TOL).unwrap();
        assert_eq!(r.eigenvalues, vec![1.0, 1.0, 1.0]);
        let r = eig_symmetric(&m(&[&[2.0, 1.0], &[1.0, 2.0]]), EIG_TOL).unwrap();
        assert_abs_diff_eq!(r.eigenvalues[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.eigenvalues[1], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn eig_errors() {
        assert!(matches!(
            eig_symmetric(&Matrix::zeros(2, 3), EIG_TOL),
            Err(LinalgError::NotSquare { .. })
        ));
        assert!(matches!(
            eig_symmetric(&m(&[&[1.0, 2.0], &[0.0, 1.0]]), EIG_TOL),
            Err(LinalgError::Asymmetric(_))
        ));
        // Below the asymmetry threshold the input is symmetrized silently.
        assert!(eig_symmetric(&m(&[&[1.0, 2.0], &[2.0 + 1e-12, 1.0]]), EIG_TOL).is_ok());
    }

    #[test]
    fn eig_reconstructs() {
        let a = m(&[
            &[4.0, 1.0, -2.0, 0.5],
            &[1.0, 3.0, 0.0, 1.5],
            &[-2.0, 0.0, 5.0, -1.0],
            &[0.5, 1.5, -1.0, 2.0],
        ]);
        let r = eig_symmetric(&a, EIG_TOL).unwrap();
        let q = &r.eigenvectors;
        let recon = &(q * &Matrix::diag(&r.eigenvalues)) * &q.transpose();
        assert!((&recon - &a).frobenius_norm() <= 1e-10 * a.frobenius_norm().max(1.0));
        let qtq = &q.transpose() * q;
        assert!((&qtq - &Matrix::identity(4)).frobenius_norm() <= 1e-10);
        assert!(r.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn lyapunov_closed_forms() {
        let p = solve_lyapunov(&Matrix::identity(2).scale(-1.0), &Matrix::identity(2)).unwrap();
        assert!((&p - &Matrix::identity(2).scale(0.5)).max_abs() < 1e-14);
        let p = solve_lyapunov(&Matrix::diag(&[-1.0, -2.0]), &Matrix::identity(2)).unwrap();
        assert!((&p - &Matrix::diag(&[0.5, 0.25])).max_abs() < 1e-14);
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        assert_eq!(
            solve_lyapunov(&Matrix::diag(&[1.0, -1.0]), &Matrix::identity(2)),
            Err(LinalgError::NotHurwitz)
        );
        // Eigenvalues ±1: the vectorized operator is nonsingular but A is not Hurwitz.
        assert!(!is_hurwitz(&m(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap());
        assert!(matches!(
            solve_lyapunov(&Matrix::identity(2), &Matrix::identity(3)),
            Err(LinalgError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn care_scalar_roots() {
        let opts = RiccatiOptions::default();
        let one = Matrix::identity(1);
        let p = solve_care(&Matrix::zeros(1, 1), &one, &one, &opts).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 1.0, epsilon = 1e-10);
        let p = solve_care(&one, &one, &one, &opts).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 1.0 + 2f64.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn care_non_stabilizable_fails() {
        let z = Matrix::zeros(1, 1);
        let err = solve_care(&z, &z, &Matrix::identity(1), &RiccatiOptions::default()).unwrap_err();
        assert!(matches!(err, LinalgError::RiccatiNotConverged { .. }));
    }

    #[test]
    fn care_rejects_asymmetric_q() {
        let q = m(&[&[1.0, 1.0], &[0.0, 1.0]]);
        let err = solve_care(&Matrix::zeros(2, 2), &Matrix::identity(2), &q, &RiccatiOptions::default());
        assert!(matches!(err, Err(LinalgError::Asymmetric(_))));
    }

    #[test]
    fn kron_blocks() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let k = kron(&Matrix::identity(2), &a);
        assert_eq!(
            k,
            m(&[
                &[1.0, 2.0, 0.0, 0.0],
                &[3.0, 4.0, 0.0, 0.0],
                &[0.0, 0.0, 1.0, 2.0],
                &[0.0, 0.0, 3.0, 4.0],
            ])
        );
        let k = kron(&m(&[&[0.0, 1.0], &[0.0, 0.0]]), &Matrix::identity(2));
        let mut expected = Matrix::zeros(4, 4);
        expected[(0, 2)] = 1.0;
        expected[(1, 3)] = 1.0;
        assert_eq!(k, expected);
    }

    #[test]
    fn spectral_norm_simple() {
        assert_abs_diff_eq!(spectral_norm_psd(&Matrix::identity(4)).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(spectral_norm_psd(&Matrix::diag(&[0.0, 3.0, 7.0])).unwrap(), 7.0);
        assert!(spectral_norm_psd(&m(&[&[1.0, 2.0], &[0.0, 1.0]])).is_err());
    }

    #[test]
    fn linear_solve_detects_singular() {
        let a = m(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert_eq!(solve_linear(&a, &Matrix::identity(2)), Err(LinalgError::Singular));
    }
}
