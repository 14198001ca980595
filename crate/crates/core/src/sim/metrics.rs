//! Summary figures derived from a trace.

use serde::Serialize;

use super::trace::{RunInfo, Trace};
use crate::index_set::IndexSet;

/// Steps used by the log-linear decay fit.
pub const DECAY_FIT_STEPS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub steps: usize,
    pub initial_state_norm: f64,
    pub terminal_state_norm: f64,
    /// `|x_hat(k) - x(k)|` per step; empty without an estimator.
    pub error_norms: Vec<f64>,
    /// `exp(slope)` of a least-squares fit of `ln |e(k)|` over the first
    /// decade of steps; `None` when fewer than two errors are nonzero.
    pub decay_rate: Option<f64>,
    /// First step from which the isolation sets stay at their final value.
    pub isolation_settle_step: Option<usize>,
    pub final_w_u: Option<IndexSet>,
    pub final_w_y: Option<IndexSet>,
    pub info: RunInfo,
}

pub fn metrics(trace: &Trace) -> Summary {
    let first = trace.records.first().expect("traces are never empty");
    let last = trace.records.last().expect("traces are never empty");
    let error_norms: Vec<f64> = trace.records.iter().filter_map(|r| r.error_norm()).collect();

    let isolation: Vec<_> = trace
        .records
        .iter()
        .filter_map(|r| Some((r.k, r.w_u_hat.as_ref()?, r.w_y_hat.as_ref()?)))
        .collect();
    let settle = isolation.last().map(|&(_, wu, wy)| {
        isolation
            .iter()
            .rev()
            .take_while(|(_, u, y)| *u == wu && *y == wy)
            .last()
            .map(|(k, ..)| *k)
            .expect("the last entry always matches itself")
    });

    Summary {
        steps: last.k,
        initial_state_norm: first.x.norm(),
        terminal_state_norm: last.x.norm(),
        decay_rate: decay_rate(&error_norms),
        error_norms,
        isolation_settle_step: settle,
        final_w_u: last.w_u_hat.clone(),
        final_w_y: last.w_y_hat.clone(),
        info: trace.info.clone(),
    }
}

fn decay_rate(errors: &[f64]) -> Option<f64> {
    let points: Vec<(f64, f64)> = errors
        .iter()
        .take(DECAY_FIT_STEPS + 1)
        .enumerate()
        .filter(|(_, e)| **e > 0.0 && e.is_finite())
        .map(|(k, e)| (k as f64, e.ln()))
        .collect();
    if points.len() < 2 {
        return None;
    }
    let m = points.len() as f64;
    let mean_k = points.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_l = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_k).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_k) * (p.1 - mean_l)).sum();
    Some((sxy / sxx).exp())
}

/// Exponential envelope `c * lambda^k * max(1, |e(0)|)` with
/// `lambda = (1 + rho_max) / 2` and `c` the smallest constant covering the
/// first `fit_steps + 1` errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Envelope {
    pub lambda: f64,
    pub c: f64,
    /// Steps where the error exceeds the envelope.
    pub violations: Vec<usize>,
}

pub fn decay_envelope(errors: &[f64], rho_max: f64, fit_steps: usize) -> Envelope {
    let lambda = (1.0 + rho_max) / 2.0;
    let scale = errors.first().copied().unwrap_or(0.0).max(1.0);
    let bound = |k: usize| lambda.powi(k as i32) * scale;
    let c = errors
        .iter()
        .take(fit_steps + 1)
        .enumerate()
        .map(|(k, e)| e / bound(k))
        .fold(0.0, f64::max);
    let violations = errors
        .iter()
        .enumerate()
        .filter(|&(k, e)| e.is_nan() || *e > c * bound(k))
        .map(|(k, _)| k)
        .collect();
    Envelope { lambda, c, violations }
}
