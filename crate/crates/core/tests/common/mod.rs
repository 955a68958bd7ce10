//! Independent reference implementations used only by the test suites.
#![allow(dead_code, clippy::needless_range_loop)]

use acl_core::cli::scenario::{AlphaSpec, AutoKeyword, RegressorSection};
use acl_core::cli::ScenarioFile;
use acl_core::fixtures;
use acl_core::sim::Scenario;
use rand::Rng;

pub type Dense = Vec<Vec<f64>>;

pub fn dense(m: &acl_core::Matrix) -> Dense {
    m.to_rows()
}

/// Determinant by Laplace expansion along the first row.
pub fn det_cofactor(m: &Dense) -> f64 {
    let n = m.len();
    match n {
        0 => 1.0,
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        _ => (0..n)
            .map(|j| {
                let minor: Dense = m[1..]
                    .iter()
                    .map(|row| row.iter().enumerate().filter(|(c, _)| *c != j).map(|(_, v)| *v).collect())
                    .collect();
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * m[0][j] * det_cofactor(&minor)
            })
            .sum(),
    }
}

/// `det(M − λI)` by cofactor expansion.
pub fn char_poly_at(m: &Dense, lambda: f64) -> f64 {
    let shifted: Dense = m
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().enumerate().map(|(j, v)| if i == j { v - lambda } else { *v }).collect())
        .collect();
    det_cofactor(&shifted)
}

/// Roots of the characteristic polynomial of a symmetric matrix with simple
/// eigenvalues: grid scan for sign changes, then bisection.
pub fn char_poly_roots(m: &Dense) -> Vec<f64> {
    let bound = 1.0 + m.iter().flatten().map(|v| v.abs()).sum::<f64>();
    let steps = 20_000;
    let mut roots = Vec::new();
    let mut lo = -bound;
    let mut f_lo = char_poly_at(m, lo);
    for k in 1..=steps {
        let hi = -bound + 2.0 * bound * k as f64 / steps as f64;
        let f_hi = char_poly_at(m, hi);
        if f_lo == 0.0 {
            roots.push(lo);
        } else if f_lo * f_hi < 0.0 {
            let (mut a, mut b, mut fa) = (lo, hi, f_lo);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                let fm = char_poly_at(m, mid);
                if fm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if fa * fm < 0.0 {
                    b = mid;
                } else {
                    a = mid;
                    fa = fm;
                }
            }
            roots.push(0.5 * (a + b));
        }
        lo = hi;
        f_lo = f_hi;
    }
    roots
}

/// Closed-form eigenvalues of a symmetric 2×2, ascending.
pub fn eig2(m: &Dense) -> Vec<f64> {
    let (a, b, d) = (m[0][0], m[0][1], m[1][1]);
    let mean = 0.5 * (a + d);
    let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    vec![mean - r, mean + r]
}

/// Trigonometric solution of the symmetric 3×3 characteristic cubic, ascending.
pub fn eig3(m: &Dense) -> Vec<f64> {
    let p1 = m[0][1].powi(2) + m[0][2].powi(2) + m[1][2].powi(2);
    let tr = m[0][0] + m[1][1] + m[2][2];
    let q = tr / 3.0;
    if p1 == 0.0 {
        let mut v = vec![m[0][0], m[1][1], m[2][2]];
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        return v;
    }
    let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let bm: Dense = (0..3)
        .map(|i| (0..3).map(|j| (m[i][j] - if i == j { q } else { 0.0 }) / p).collect())
        .collect();
    let r = (det_cofactor(&bm) / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let e2 = 3.0 * q - e1 - e3;
    let mut v = vec![e1, e2, e3];
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// Gauss–Jordan elimination with full pivoting.
pub fn solve_full_pivot(mut a: Dense, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (mut pr, mut pc, mut best) = (k, k, 0.0);
        for (i, row) in a.iter().enumerate().skip(k) {
            for (j, v) in row.iter().enumerate().skip(k) {
                if v.abs() > best {
                    best = v.abs();
                    pr = i;
                    pc = j;
                }
            }
        }
        assert!(best > 0.0, "singular oracle system");
        a.swap(k, pr);
        b.swap(k, pr);
        for row in a.iter_mut() {
            row.swap(k, pc);
        }
        perm.swap(k, pc);
        let piv = a[k][k];
        for j in 0..n {
            a[k][j] /= piv;
        }
        b[k] /= piv;
        for i in 0..n {
            if i != k {
                let f = a[i][k];
                if f != 0.0 {
                    for j in 0..n {
                        a[i][j] -= f * a[k][j];
                    }
                    b[i] -= f * b[k];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in 0..n {
        x[perm[k]] = b[k];
    }
    x
}

/// Solves `AᵀX + XA + Q = 0` through the explicitly assembled Kronecker sum,
/// indexing `vec(X)` row-major.
pub fn lyapunov_oracle(a: &Dense, q: &Dense) -> Dense {
    let n = a.len();
    let mut big = vec![vec![0.0; n * n]; n * n];
    // Row (i, j) of AᵀX + XA: Σ_k A[k][i] X[k][j] + Σ_k X[i][k] A[k][j].
    for i in 0..n {
        for j in 0..n {
            let r = i * n + j;
            for k in 0..n {
                big[r][k * n + j] += a[k][i];
                big[r][i * n + k] += a[k][j];
            }
        }
    }
    let rhs: Vec<f64> = q.iter().flatten().map(|v| -v).collect();
    let x = solve_full_pivot(big, rhs);
    (0..n).map(|i| x[i * n..(i + 1) * n].to_vec()).collect()
}

/// Random `n×n` matrix shifted so its spectrum lies left of `−margin`.
pub fn random_hurwitz(rng: &mut impl Rng, n: usize, margin: f64) -> Dense {
    let mut m: Dense = (0..n).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let fro = m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] -= fro + margin;
    }
    m
}

pub fn random_symmetric(rng: &mut impl Rng, n: usize) -> Dense {
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = rng.gen_range(-2.0..2.0);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

/// `xᵀ(L⊗P)x` from the entrywise Kronecker definition.
pub fn kron_quadratic_form(x: &[f64], l: &Dense, p: &Dense) -> f64 {
    let n = l.len();
    let d = p.len();
    let mut total = 0.0;
    for r in 0..n * d {
        for c in 0..n * d {
            total += x[r] * l[r / d][c / d] * p[r % d][c % d] * x[c];
        }
    }
    total
}

/// The five-agent scenario with the drift shifted by `−3I`, which makes `A`
/// Hurwitz and keeps every trajectory bounded, and the coupling gain set to
/// `1/(2λ₂)`.
pub fn companion_file() -> ScenarioFile {
    let mut file = fixtures::five_agent();
    file.parameters.alpha = AlphaSpec::Auto(AutoKeyword::Auto);
    for (i, row) in file.dynamics.a.iter_mut().enumerate() {
        row[i] -= 3.0;
    }
    file
}

pub fn companion() -> Scenario {
    companion_file().resolve().expect("companion scenario resolves")
}

pub fn five_agent() -> Scenario {
    fixtures::five_agent().resolve().expect("fixture resolves")
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Companion scenario with Φ ≡ 0 and θ = θ̂ = 0: pure linear consensus.
pub fn linear_consensus_file(mut file: ScenarioFile) -> ScenarioFile {
    file.dynamics.regressor = RegressorSection::Zero { m: 1 };
    file.parameters.theta_true = vec![vec![0.0]; 5];
    file.parameters.theta_hat_init = vec![vec![0.0]; 5];
    file.controller.update_mode = acl_core::UpdateMode::Baseline;
    file
}
