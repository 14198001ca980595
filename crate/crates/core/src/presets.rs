//! Built-in reference plants and the six reproducible scenarios built on them.
//!
//! | id | plant | estimator | input | attacks |
//! |----|-------|-----------|-------|---------|
//! | 1 | 2 states, 1 actuator, 4 sensors | complete | `u ~ U(-1,1)` | `a_u`, `a_y3 ~ U(-10,10)` |
//! | 2 | 3 states, 3 actuators, 4 sensors | partial | `u ~ U(-1,1)` | `a_u3`, `a_y2 ~ U(-10,10)` |
//! | 3 | plant 1 | complete | `u ~ U(-1,1)` | `a_u1`, `a_y3 ~ U(-10,10)` |
//! | 4 | plant 2 | partial | `u ~ U(-1,1)` | `a_u3`, `a_y2 ~ U(-10,10)` |
//! | 5 | unstable, 2 actuators | complete | `u = K x_hat` | `a_y2 ~ U(-10,10)` |
//! | 6 | unstable, 3 actuators | partial | switching | `a_u3`, `a_y2 ~ U(-10,10)` |
//!
//! Initial states are `N(0, 1)` per component and every observer starts at zero.
//!
//! The partial examples run with `(q1, q2) = (1, 1)`. On both three-actuator
//! plants some members of that bank admit no unknown input observer, so those
//! scenarios omit them (see [`crate::uio::InfeasibleMembers::Omit`]).

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::index_set::IndexSet;
use crate::linalg::{Mat, Tolerances, Vector};
use crate::plant::PlantModel;
use crate::sim::{
    self, AttackSignal, AttackTarget, ChannelSignal, EstimatorSpec, Generator, InitialState, InputPolicy, Scenario,
    Summary, Trace,
};
use crate::uio::InfeasibleMembers;

pub const EXAMPLE_IDS: std::ops::RangeInclusive<usize> = 1..=6;

pub const DEFAULT_SEED: u64 = 1;

/// Steps after which estimation errors are compared with the absolute bound.
pub const ESTIMATION_CHECK_STEP: usize = 40;
pub const ESTIMATION_BOUND: f64 = 1e-6;
pub const RECONSTRUCTION_WINDOW: (usize, usize) = (40, 60);
pub const RECONSTRUCTION_BOUND: f64 = 1e-5;
pub const SENSOR_ONLY_BOUND: f64 = 1e-6;
pub const MIXED_BOUND: f64 = 1e-3;
pub const ENVELOPE_FIT_STEPS: usize = 5;

const REFERENCE_PARTIAL: EstimatorSpec = EstimatorSpec::Partial {
    q1: Some(1),
    q2: Some(1),
};

fn m(rows: usize, cols: usize, data: &[f64]) -> Mat {
    Mat::from_row_slice(rows, cols, data)
}

const C_FOUR_BY_TWO: [f64; 8] = [1.0, 3.0, 1.0, 1.0, 3.0, 2.0, 2.0, 1.0];
const C_FOUR_BY_THREE: [f64; 12] = [1.0, 2.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 2.0, 1.0, 1.0, 1.0];

/// Reference static gain for the sensor-only example; its closed loop is nilpotent.
pub fn sensor_only_gain() -> Mat {
    m(2, 2, &[-1.2, 0.7, -0.2, -0.7])
}

/// Plant used by example `id`.
///
/// # Panics
/// If `id` is outside `1..=6`.
pub fn plant(id: usize) -> PlantModel {
    let (a, b, c) = match id {
        1 | 3 => (
            m(2, 2, &[0.2, 0.5, 0.2, 0.7]),
            m(2, 1, &[1.0, 2.0]),
            m(4, 2, &C_FOUR_BY_TWO),
        ),
        2 | 4 => (
            m(3, 3, &[0.5, 0.0, 0.1, 0.2, 0.7, 0.0, 1.0, 0.0, 0.3]),
            m(3, 3, &[0.5, 0.0, 0.5, 1.0, 1.0, 0.1, 0.0, 0.0, 0.5]),
            m(4, 3, &C_FOUR_BY_THREE),
        ),
        5 => (
            m(2, 2, &[1.2, 0.5, 0.2, 0.7]),
            Mat::identity(2, 2),
            m(4, 2, &C_FOUR_BY_TWO),
        ),
        6 => (
            m(3, 3, &[0.5, 0.0, 0.1, 0.2, 1.7, 0.0, 1.0, 0.0, 0.3]),
            m(3, 3, &[0.5, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0]),
            m(4, 3, &C_FOUR_BY_THREE),
        ),
        _ => panic!("no built-in plant {id}"),
    };
    PlantModel::new(a, b, c, &Tolerances::default()).expect("built-in plants are valid")
}

fn uniform(channel: usize, bound: f64) -> ChannelSignal {
    ChannelSignal {
        channel,
        signal: Generator::Uniform {
            low: -bound,
            high: bound,
        },
        active_from: 0,
    }
}

fn attack(target: AttackTarget, channel: usize) -> AttackSignal {
    AttackSignal {
        target,
        signal: uniform(channel, 10.0),
    }
}

/// Expected isolation sets `(W_u, W_y)` for example `id`.
pub fn expected_supports(id: usize) -> Result<(IndexSet, IndexSet)> {
    let (u, y, n_u) = match id {
        1 | 3 => (vec![1], vec![3], 1),
        2 | 4 | 6 => (vec![3], vec![2], 3),
        5 => (vec![], vec![2], 2),
        _ => return Err(invalid(format!("example id must be in 1..=6, got {id}"))),
    };
    Ok((IndexSet::new(u, n_u)?, IndexSet::new(y, 4)?))
}

pub fn scenario(id: usize, seed: u64) -> Result<Scenario> {
    let (w_u, w_y) = expected_supports(id)?;
    let plant = plant(id);
    let n_u = plant.n_u();
    let attacks = w_u
        .indices()
        .iter()
        .map(|&i| attack(AttackTarget::Actuator, i))
        .chain(w_y.indices().iter().map(|&i| attack(AttackTarget::Sensor, i)))
        .collect();
    let open_loop = InputPolicy::OpenLoop {
        signals: (1..=n_u).map(|i| uniform(i, 1.0)).collect(),
    };
    let (input, estimator, horizon) = match id {
        1 | 3 => (open_loop, EstimatorSpec::Complete { q: None }, 100),
        2 | 4 => (open_loop, REFERENCE_PARTIAL, 100),
        5 => (
            InputPolicy::StaticFeedback {
                gain: Some(sensor_only_gain()),
            },
            EstimatorSpec::Complete { q: None },
            60,
        ),
        _ => (InputPolicy::Switching { bound: None }, REFERENCE_PARTIAL, 100),
    };
    Ok(Scenario {
        name: format!("example-{id}"),
        plant,
        x0: InitialState::Gaussian { mean: 0.0, std: 1.0 },
        x_hat0: None,
        input,
        estimator,
        attacks,
        horizon,
        seed,
        tolerances: Tolerances::default(),
        isolation: Default::default(),
        priority: Default::default(),
        bank_cap: crate::uio::DEFAULT_BANK_CAP,
        infeasible_members: match estimator {
            EstimatorSpec::Partial { .. } => InfeasibleMembers::Omit,
            _ => InfeasibleMembers::Reject,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub property: String,
    pub passed: bool,
    pub detail: String,
}

impl PropertyCheck {
    fn new(property: &str, passed: bool, detail: String) -> Self {
        Self {
            property: property.into(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reproduction {
    pub id: usize,
    pub seed: u64,
    pub checks: Vec<PropertyCheck>,
    pub summary: Summary,
}

impl Reproduction {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn reproduce(id: usize, seed: u64) -> Result<(Scenario, Trace, Reproduction)> {
    let s = scenario(id, seed)?;
    let trace = sim::simulate(&s)?;
    let checks = check(id, &s, &trace)?;
    let summary = sim::metrics(&trace);
    Ok((
        s,
        trace,
        Reproduction {
            id,
            seed,
            checks,
            summary,
        },
    ))
}

/// The properties example `id` is expected to exhibit on `trace`.
pub fn check(id: usize, s: &Scenario, trace: &Trace) -> Result<Vec<PropertyCheck>> {
    let mut out = vec![PropertyCheck::new(
        "replay",
        sim::replay_check(trace, s),
        "recorded transitions reproduce the plant equations".into(),
    )];
    match id {
        1 | 2 => out.extend(estimation_checks(trace)),
        3 | 4 => {
            out.push(isolation_check(id, s, trace)?);
            out.extend(reconstruction_checks(trace));
        }
        5 => out.push(terminal_check(trace, SENSOR_ONLY_BOUND)),
        6 => {
            out.push(isolation_check(id, s, trace)?);
            out.push(switch_off_check(trace, s));
            out.push(terminal_check(trace, MIXED_BOUND));
            if let Some(check) = lyapunov_check(trace, s) {
                out.push(check);
            }
        }
        _ => return Err(invalid(format!("example id must be in 1..=6, got {id}"))),
    }
    Ok(out)
}

fn estimation_checks(trace: &Trace) -> Vec<PropertyCheck> {
    let errors: Vec<f64> = trace.records.iter().filter_map(|r| r.error_norm()).collect();
    let rho_max = trace.info.rho_max.unwrap_or(1.0);
    let env = sim::decay_envelope(&errors, rho_max, ENVELOPE_FIT_STEPS);
    let scale = errors[0].max(1.0);
    let e40 = errors.get(ESTIMATION_CHECK_STEP).copied().unwrap_or(f64::INFINITY);
    vec![
        PropertyCheck::new(
            "decay envelope",
            env.violations.is_empty(),
            format!(
                "lambda = {:.4}, c = {:.3e}, violations at {:?}",
                env.lambda, env.c, env.violations
            ),
        ),
        PropertyCheck::new(
            "estimation error at k = 40",
            e40 <= ESTIMATION_BOUND * scale,
            format!("|e(40)| = {e40:.3e}, bound {:.3e}", ESTIMATION_BOUND * scale),
        ),
    ]
}

fn isolation_check(id: usize, s: &Scenario, trace: &Trace) -> Result<PropertyCheck> {
    let (w_u, w_y) = expected_supports(id)?;
    let warmup = s.isolation.warmup;
    let wrong: Vec<usize> = trace
        .records
        .iter()
        .filter(|r| r.k >= warmup)
        .filter(|r| r.w_u_hat.as_ref() != Some(&w_u) || r.w_y_hat.as_ref() != Some(&w_y))
        .map(|r| r.k)
        .collect();
    let evaluated = trace.records.iter().any(|r| r.k >= warmup);
    Ok(PropertyCheck::new(
        "isolation",
        evaluated && wrong.is_empty(),
        format!("expected actuators {{{w_u}}}, sensors {{{w_y}}} from k = {warmup}; mismatches at {wrong:?}"),
    ))
}

/// `max_k |estimate(k) - truth(k)|` over the reconstruction window; infinite
/// when the trace does not cover the window or an estimate is missing.
fn window_error(trace: &Trace, get: impl Fn(usize) -> Option<(Vector, Vector)>) -> f64 {
    let (lo, hi) = RECONSTRUCTION_WINDOW;
    if trace.records.len() <= hi {
        return f64::INFINITY;
    }
    (lo..=hi)
        .map(|k| get(k).map_or(f64::INFINITY, |(est, truth)| (est - truth).norm()))
        .fold(0.0, f64::max)
}

fn reconstruction_checks(trace: &Trace) -> Vec<PropertyCheck> {
    let r = &trace.records;
    let max_au = r.iter().map(|r| r.a_u.amax()).fold(0.0, f64::max);
    let max_ay = r.iter().map(|r| r.a_y.amax()).fold(0.0, f64::max);
    let err_u = window_error(trace, |k| Some((r[k].a_u_hat.clone()?, r[k - 1].a_u.clone())));
    let err_y = window_error(trace, |k| Some((r[k].a_y_hat.clone()?, r[k].a_y.clone())));
    vec![
        PropertyCheck::new(
            "actuator reconstruction",
            err_u <= RECONSTRUCTION_BOUND * (1.0 + max_au),
            format!("max error {err_u:.3e} over k in [40, 60]"),
        ),
        PropertyCheck::new(
            "sensor reconstruction",
            err_y <= RECONSTRUCTION_BOUND * (1.0 + max_ay),
            format!("max error {err_y:.3e} over k in [40, 60]"),
        ),
    ]
}

fn terminal_check(trace: &Trace, bound: f64) -> PropertyCheck {
    let first = trace.records[0].x.norm();
    let last = trace.records.last().expect("non-empty trace");
    let limit = bound * first.max(1.0);
    PropertyCheck::new(
        "terminal state",
        last.x.norm() <= limit,
        format!("|x({})| = {:.3e}, bound {limit:.3e}", last.k, last.x.norm()),
    )
}

fn switch_off_check(trace: &Trace, s: &Scenario) -> PropertyCheck {
    let bad: Vec<usize> = trace
        .records
        .iter()
        .filter(|r| r.k >= s.isolation.warmup)
        .filter(|r| {
            let isolated = r.w_u_hat.clone().unwrap_or_else(|| IndexSet::empty(trace.n_u));
            r.rho != isolated.complement() || isolated.positions().any(|i| r.u[i] != 0.0 || r.a_u[i] != 0.0)
        })
        .map(|r| r.k)
        .collect();
    PropertyCheck::new(
        "isolated actuators switched off",
        bad.is_empty(),
        format!("violations at {bad:?}"),
    )
}

/// Monotone decrease of `x' P x` once isolation has settled, when a common
/// quadratic Lyapunov function was found.
fn lyapunov_check(trace: &Trace, s: &Scenario) -> Option<PropertyCheck> {
    let cert = trace.info.certificate.as_ref()?;
    let settle = sim::metrics(trace).isolation_settle_step.unwrap_or(s.isolation.warmup);
    let v: Vec<(usize, f64)> = trace
        .records
        .iter()
        .filter(|r| r.k >= settle)
        .map(|r| (r.k, r.x.dot(&(&cert.p * &r.x))))
        .collect();
    let rises: Vec<usize> = v.windows(2).filter(|w| w[1].1 > w[0].1).map(|w| w[1].0).collect();
    Some(PropertyCheck::new(
        "Lyapunov decrease after isolation",
        rises.is_empty(),
        format!("from k = {settle}; increases at {rises:?}"),
    ))
}
