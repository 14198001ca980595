//! Dense real-matrix primitives with explicit numerical tolerances.
//!
//! Rank and pseudoinverse go through the SVD with a relative singular-value
//! cutoff. Spectra come from the real Schur form. Detectability and
//! stabilizability are Popov-Belevitch-Hautus tests restricted to eigenvalues
//! on or outside the circle of radius `1 - schur_margin`. Stabilizing gains
//! come from fixed-point iteration of the discrete algebraic Riccati equation
//! with identity weights.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{infeasible, invalid, Error, Result};
use crate::index_set::IndexSet;

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Numerical tolerances shared by every synthesis routine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Singular values at or below `rank_tol * sigma_max` count as zero.
    pub rank_tol: f64,
    /// A matrix is Schur when its spectral radius is at most `1 - schur_margin`.
    pub schur_margin: f64,
    /// Maximum absolute residual accepted for observer design equations.
    pub residual_tol: f64,
    /// Riccati iteration stops when successive iterates differ by less than
    /// `iter_tol * max(1, max|P|)`.
    pub iter_tol: f64,
    pub iter_max: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_tol: 1e-9,
            schur_margin: 1e-6,
            residual_tol: 1e-8,
            iter_tol: 1e-12,
            iter_max: 10_000,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.rank_tol) || !positive(self.residual_tol) || !positive(self.iter_tol) {
            return Err(invalid("tolerances must be finite and strictly positive"));
        }
        if !positive(self.schur_margin) || self.schur_margin >= 1.0 {
            return Err(invalid("schur_margin must lie in (0, 1)"));
        }
        if self.iter_max == 0 {
            return Err(invalid("iter_max must be at least 1"));
        }
        Ok(())
    }

    /// Spectral radius bound below which a matrix is treated as Schur.
    pub fn schur_bound(&self) -> f64 {
        1.0 - self.schur_margin
    }
}

pub fn check_finite(m: &Mat, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(invalid(format!("{what} contains non-finite entries")))
    }
}

fn check_square(m: &Mat, what: &str) -> Result<()> {
    if m.nrows() == m.ncols() && m.nrows() > 0 {
        Ok(())
    } else {
        Err(invalid(format!(
            "{what} must be square and non-empty, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
}

/// Rows of `m` picked by a 1-based index set (`C^J`).
pub fn select_rows(m: &Mat, set: &IndexSet) -> Mat {
    m.select_rows(set.positions().collect::<Vec<_>>().iter())
}

/// Columns of `m` picked by a 1-based index set (`b_J`).
pub fn select_cols(m: &Mat, set: &IndexSet) -> Mat {
    m.select_columns(set.positions().collect::<Vec<_>>().iter())
}

/// Entries of `v` picked by a 1-based index set (`v^J`).
pub fn select_entries(v: &Vector, set: &IndexSet) -> Vector {
    Vector::from_iterator(set.len(), set.positions().map(|p| v[p]))
}

/// Singular values in descending order.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

pub fn rank_tol(m: &Mat, tol: &Tolerances) -> Result<usize> {
    if m.is_empty() {
        return Err(invalid("rank of an empty matrix"));
    }
    check_finite(m, "matrix")?;
    Ok(rank_of(&singular_values(m), tol.rank_tol))
}

fn rank_of(sv: &[f64], rel: f64) -> usize {
    let smax = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > rel * smax).count()
}

/// Moore-Penrose pseudoinverse with the default relative cutoff.
pub fn pinv(m: &Mat) -> Mat {
    pinv_with(m, Tolerances::default().rank_tol)
}

pub fn pinv_with(m: &Mat, rel_cutoff: f64) -> Mat {
    if m.is_empty() {
        return Mat::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let (u, v_t) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let mut out = Mat::zeros(m.ncols(), m.nrows());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > rel_cutoff * smax && s > 0.0 {
            out += v_t.row(i).transpose() * u.column(i).transpose() / s;
        }
    }
    out
}

pub fn eigenvalues(m: &Mat) -> Result<Vec<Complex64>> {
    check_square(m, "matrix")?;
    check_finite(m, "matrix")?;
    Ok(m.complex_eigenvalues().iter().copied().collect())
}

pub fn spectral_radius(m: &Mat) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|l| l.norm()).fold(0.0, f64::max))
}

pub fn is_schur(m: &Mat, tol: &Tolerances) -> Result<bool> {
    Ok(spectral_radius(m)? <= tol.schur_bound())
}

/// PBH detectability of the pair `(A, C)`: every eigenvalue with
/// `|lambda| >= 1 - schur_margin` must leave `[A - lambda I; C]` with full column rank.
pub fn is_detectable(a: &Mat, c: &Mat, tol: &Tolerances) -> Result<bool> {
    check_square(a, "A")?;
    if c.ncols() != a.nrows() {
        return Err(invalid(format!(
            "C has {} columns but A is {}x{}",
            c.ncols(),
            a.nrows(),
            a.ncols()
        )));
    }
    check_finite(c, "C")?;
    let n = a.nrows();
    let p = c.nrows();
    for lambda in eigenvalues(a)? {
        if lambda.norm() < tol.schur_bound() {
            continue;
        }
        let mut stacked = DMatrix::<Complex64>::zeros(n + p, n);
        for i in 0..n {
            for j in 0..n {
                stacked[(i, j)] = Complex64::new(a[(i, j)], 0.0);
            }
            stacked[(i, i)] -= lambda;
        }
        for i in 0..p {
            for j in 0..n {
                stacked[(n + i, j)] = Complex64::new(c[(i, j)], 0.0);
            }
        }
        let sv: Vec<f64> = stacked.svd(false, false).singular_values.iter().copied().collect();
        if rank_of(&sv, tol.rank_tol) < n {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Dual PBH test: `(A, B)` is stabilizable iff `(A^T, B^T)` is detectable.
pub fn is_stabilizable(a: &Mat, b: &Mat, tol: &Tolerances) -> Result<bool> {
    check_square(a, "A")?;
    if b.nrows() != a.nrows() {
        return Err(invalid(format!(
            "B has {} rows but A is {}x{}",
            b.nrows(),
            a.nrows(),
            a.ncols()
        )));
    }
    is_detectable(&a.transpose(), &b.transpose(), tol)
}

/// State-feedback gain `K` with `A + B K` Schur, from the stabilizing solution
/// of the DARE with `Q = I`, `R = I`.
pub fn stabilizing_state_gain(a: &Mat, b: &Mat, tol: &Tolerances) -> Result<Mat> {
    if !is_stabilizable(a, b, tol)? {
        return Err(infeasible("(A, B) is not stabilizable"));
    }
    let n = a.nrows();
    let m = b.ncols();
    if m == 0 {
        // Nothing to actuate; stabilizable means A is already Schur.
        return Ok(Mat::zeros(0, n));
    }
    let q = Mat::identity(n, n);
    let r = Mat::identity(m, m);
    let a_t = a.transpose();
    let b_t = b.transpose();

    let mut p = q.clone();
    let mut converged = false;
    for _ in 0..tol.iter_max {
        let bt_p = &b_t * &p;
        let s = &r + &bt_p * b;
        let g = &bt_p * a;
        let s_inv_g = s
            .cholesky()
            .ok_or_else(|| Error::InternalInconsistency("R + B'PB lost definiteness".into()))?
            .solve(&g);
        let mut next = &a_t * &p * a - g.transpose() * s_inv_g + &q;
        next = (&next + next.transpose()) * 0.5;
        check_finite(&next, "Riccati iterate")?;
        let diff = max_abs(&(&next - &p));
        let scale = max_abs(&next).max(1.0);
        p = next;
        if diff <= tol.iter_tol * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: tol.iter_max,
        });
    }

    let bt_p = &b_t * &p;
    let s = &r + &bt_p * b;
    let k = -s
        .cholesky()
        .ok_or_else(|| Error::InternalInconsistency("R + B'PB lost definiteness".into()))?
        .solve(&(&bt_p * a));
    let closed = a + b * &k;
    let radius = spectral_radius(&closed)?;
    if radius > tol.schur_bound() {
        return Err(infeasible(format!(
            "Riccati gain leaves spectral radius {radius} above {}",
            tol.schur_bound()
        )));
    }
    Ok(k)
}

/// Output-injection gain `K1` with `A1 - K1 C` Schur, via the dual state-feedback problem.
pub fn stabilizing_observer_gain(a1: &Mat, c: &Mat, tol: &Tolerances) -> Result<Mat> {
    if !is_detectable(a1, c, tol)? {
        return Err(infeasible("(C, A1) is not detectable"));
    }
    let k_dual = stabilizing_state_gain(&a1.transpose(), &c.transpose(), tol)?;
    Ok(-k_dual.transpose())
}

/// Solves `X = M^T X M + Q` for Schur `M` via the Kronecker form.
pub fn solve_discrete_lyapunov(m: &Mat, q: &Mat) -> Result<Mat> {
    check_square(m, "M")?;
    let n = m.nrows();
    if q.shape() != (n, n) {
        return Err(invalid("Q must match the dimension of M"));
    }
    let m_t = m.transpose();
    let lhs = Mat::identity(n * n, n * n) - m_t.kronecker(&m_t);
    let rhs = Vector::from_column_slice(q.as_slice());
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| infeasible("discrete Lyapunov equation is singular (M not Schur)"))?;
    let x = Mat::from_column_slice(n, n, sol.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &Mat) -> Result<Vec<f64>> {
    check_square(m, "matrix")?;
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}
