//! Static estimate feedback and the actuator-switching supervisor.
//!
//! Switching gains are designed per actuator subset with the Riccati gain
//! designer. Stability under arbitrary switching is not implied by that; it
//! is certified separately by a common quadratic Lyapunov function when one
//! can be found.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{infeasible, invalid, Error, Result};
use crate::index_set::IndexSet;
use crate::linalg::{self, Mat, Tolerances, Vector};
use crate::plant::PlantModel;

/// `K` with `A + B K` Schur.
pub fn design_static(plant: &PlantModel, tol: &Tolerances) -> Result<Mat> {
    linalg::stabilizing_state_gain(plant.a(), plant.b(), tol)
}

/// Largest `q*` in `(0, n_u)` such that `(A, b_J)` is stabilizable for every
/// actuator set with `|J| >= n_u - q*`; 0 if there is none.
pub fn max_qstar(plant: &PlantModel, tol: &Tolerances) -> usize {
    let n_u = plant.n_u();
    let level_ok = |size: usize| {
        IndexSet::combinations(n_u, size)
            .iter()
            .all(|j| linalg::is_stabilizable(plant.a(), &linalg::select_cols(plant.b(), j), tol).unwrap_or(false))
    };
    if !level_ok(n_u) {
        return 0;
    }
    (1..n_u).take_while(|&q| level_ok(n_u - q)).last().unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchingMode {
    pub actuators: IndexSet,
    /// `|J| x n` gain driving the switched-on actuators.
    #[serde(with = "crate::serde_mat")]
    pub gain: Mat,
    /// `A + b_J K_J`.
    #[serde(skip)]
    pub closed_loop: Mat,
}

/// Per-subset gains for every admissible set of switched-on actuators
/// (`|J| >= n_u - bound`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainTable {
    pub n_u: usize,
    pub bound: usize,
    pub modes: Vec<SwitchingMode>,
    #[serde(skip)]
    lookup: BTreeMap<IndexSet, usize>,
}

impl GainTable {
    fn from_modes(n_u: usize, bound: usize, modes: Vec<SwitchingMode>) -> Self {
        let lookup = modes
            .iter()
            .enumerate()
            .map(|(i, m)| (m.actuators.clone(), i))
            .collect();
        Self {
            n_u,
            bound,
            modes,
            lookup,
        }
    }

    pub fn mode(&self, actuators: &IndexSet) -> Option<&SwitchingMode> {
        self.lookup.get(actuators).map(|&i| &self.modes[i])
    }

    pub fn is_admissible(&self, actuators: &IndexSet) -> bool {
        !actuators.is_empty() && actuators.len() + self.bound >= self.n_u
    }

    pub fn closed_loops(&self) -> Vec<Mat> {
        self.modes.iter().map(|m| m.closed_loop.clone()).collect()
    }
}

pub fn design_switching_gains(plant: &PlantModel, bound: usize, tol: &Tolerances) -> Result<GainTable> {
    let n_u = plant.n_u();
    if bound >= n_u {
        return Err(invalid(format!("switching bound {bound} must be below n_u = {n_u}")));
    }
    let mut modes = Vec::new();
    for size in (n_u - bound..=n_u).rev() {
        for actuators in IndexSet::combinations(n_u, size) {
            let b_j = linalg::select_cols(plant.b(), &actuators);
            let gain = linalg::stabilizing_state_gain(plant.a(), &b_j, tol).map_err(|e| match e {
                Error::DesignInfeasible(msg) => infeasible(format!("actuators {{{actuators}}}: {msg}")),
                other => other,
            })?;
            let closed_loop = plant.a() + &b_j * &gain;
            modes.push(SwitchingMode {
                actuators,
                gain,
                closed_loop,
            });
        }
    }
    Ok(GainTable::from_modes(n_u, bound, modes))
}

/// A common quadratic Lyapunov function `V(x) = x' P x` for every mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovCertificate {
    #[serde(with = "crate::serde_mat")]
    pub p: Mat,
    pub margin: f64,
}

/// True iff `P` is positive definite and `M' P M - P <= -margin I` for every mode.
pub fn validate_modes(modes: &[Mat], p: &Mat, margin: f64) -> Result<bool> {
    let n = p.nrows();
    if p.ncols() != n || modes.iter().any(|m| m.shape() != (n, n)) {
        return Err(invalid("certificate and mode dimensions do not match"));
    }
    if linalg::max_abs(&(p - p.transpose())) > 1e-9 * linalg::max_abs(p).max(1.0) {
        return Err(invalid("certificate matrix must be symmetric"));
    }
    if linalg::symmetric_eigenvalues(p)?[0] <= 0.0 {
        return Ok(false);
    }
    for m in modes {
        let decrease = m.transpose() * p * m - p;
        let worst = *linalg::symmetric_eigenvalues(&decrease)?.last().unwrap();
        if worst > -margin {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn validate_certificate(table: &GainTable, p: &Mat, margin: f64) -> Result<bool> {
    validate_modes(&table.closed_loops(), p, margin)
}

fn normalized(p: Mat) -> Result<Mat> {
    let top = *linalg::symmetric_eigenvalues(&p)?.last().unwrap();
    if !(top.is_finite() && top > 0.0) {
        return Err(infeasible("candidate is not positive"));
    }
    Ok(p / top)
}

/// Searches for a common quadratic Lyapunov function. Two candidates are tried:
///
/// 1. averaged Lyapunov solutions, starting from `avg_J X_J` with
///    `X_J = M_J' X_J M_J + I` and re-solving with the normalized average as
///    the right-hand side, up to `iter_max` rounds (capped at 200);
/// 2. the joint solution of `P = I + sum_J M_J' P M_J`, which, when it exists
///    and is positive definite, gives every mode a strict decrease.
///
/// Returns `None` when neither validates. Candidates are normalized to unit
/// largest eigenvalue and checked with `margin = schur_margin`.
pub fn search_modes(modes: &[Mat], tol: &Tolerances) -> Option<LyapunovCertificate> {
    let first = modes.first()?;
    let n = first.nrows();
    if modes.iter().any(|m| !linalg::is_schur(m, tol).unwrap_or(false)) {
        return None;
    }
    let margin = tol.schur_margin;
    let accept = |p: Mat| -> Option<LyapunovCertificate> {
        let p = normalized(p).ok()?;
        validate_modes(modes, &p, margin)
            .ok()
            .filter(|ok| *ok)
            .map(|_| LyapunovCertificate { p, margin })
    };
    let average = |q: &Mat| -> Option<Mat> {
        let mut acc = Mat::zeros(n, n);
        for m in modes {
            acc += linalg::solve_discrete_lyapunov(m, q).ok()?;
        }
        Some(acc / modes.len() as f64)
    };

    let mut p = average(&Mat::identity(n, n))?;
    for _ in 0..tol.iter_max.min(200) {
        if let Some(cert) = accept(p.clone()) {
            return Some(cert);
        }
        let rhs = normalized(p).ok()? + Mat::identity(n, n) * margin;
        p = average(&rhs)?;
    }

    let mut lhs = Mat::identity(n * n, n * n);
    for m in modes {
        let m_t = m.transpose();
        lhs -= m_t.kronecker(&m_t);
    }
    let rhs = Vector::from_column_slice(Mat::identity(n, n).as_slice());
    let sol = lhs.lu().solve(&rhs)?;
    let joint = Mat::from_column_slice(n, n, sol.as_slice());
    accept((&joint + joint.transpose()) * 0.5)
}

pub fn search_certificate(table: &GainTable, tol: &Tolerances) -> Option<LyapunovCertificate> {
    search_modes(&table.closed_loops(), tol)
}

/// Switches off the isolated actuators: `rho = {1..n_u} \ W_u_hat`,
/// `u^rho = K_rho x_hat`, and `u_i = 0` for every switched-off actuator.
pub fn supervisor_step(isolated: &IndexSet, table: &GainTable, x_hat: &Vector) -> Result<(IndexSet, Vector)> {
    if isolated.universe() != table.n_u {
        return Err(invalid("isolated actuator set does not match n_u"));
    }
    let rho = isolated.complement();
    if !table.is_admissible(&rho) {
        return Err(Error::UnstabilizableConfiguration(format!(
            "{} actuators isolated ({{{isolated}}}), at most {} can be switched off",
            isolated.len(),
            table.bound
        )));
    }
    let mode = table
        .mode(&rho)
        .ok_or_else(|| Error::UnstabilizableConfiguration(format!("no gain designed for actuators {{{rho}}}")))?;
    let on = &mode.gain * x_hat;
    let mut u = Vector::zeros(table.n_u);
    for (slot, pos) in rho.positions().enumerate() {
        u[pos] = on[slot];
    }
    Ok((rho, u))
}
