//! Seeded simulation of the attacked plant in open or closed loop.
//!
//! Per step `k`:
//! 1. read `y(k) = C x(k) + a_y(k)`;
//! 2. advance the observer bank with `(u(k-1), y(k-1))` and select `x_hat(k)`;
//! 3. reconstruct `a_u(k-1)`, `a_y(k)` and update isolation;
//! 4. compute `u(k)` from the input policy;
//! 5. advance the plant, `x(k+1) = A x(k) + B (u(k) + a_u(k))`.
//!
//! Switched-off actuators receive neither input nor attack, and the trace
//! records what the plant actually received.

mod metrics;
mod scenario;
mod signal;
mod trace;

pub use metrics::{decay_envelope, metrics, Envelope, Summary, DECAY_FIT_STEPS};
pub use scenario::{AttackSignal, AttackTarget, ChannelSignal, EstimatorSpec, InitialState, InputPolicy, Scenario};
pub use signal::{Generator, SignalSource};
pub use trace::{RunInfo, StepRecord, Trace};

use rand_distr::{Distribution, Normal};

use crate::attack::{Isolator, Reconstructor};
use crate::control::{self, GainTable};
use crate::error::{infeasible, Error, Result};
use crate::index_set::IndexSet;
use crate::linalg::{Mat, Vector};
use crate::observer::ObserverBank;
use crate::plant::PlantModel;
use crate::uio::{self, BankIndices, BankSpec};

/// States with a norm above this abort the run.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Largest state or output mismatch accepted by [`replay_check`].
pub const REPLAY_TOL: f64 = 1e-10;

enum Controller {
    OpenLoop(Vec<Option<SignalSource>>),
    Static { gain: Mat, from_estimate: bool },
    Switching(GainTable),
}

fn sources(signals: &[ChannelSignal], channels: usize, seed: u64, base: u64) -> Result<Vec<Option<SignalSource>>> {
    let mut out: Vec<Option<SignalSource>> = (0..channels).map(|_| None).collect();
    for s in signals {
        out[s.channel - 1] = Some(SignalSource::new(
            s.signal.clone(),
            s.active_from,
            seed,
            base + s.channel as u64,
        )?);
    }
    Ok(out)
}

fn sample(sources: &mut [Option<SignalSource>], k: usize) -> Vector {
    Vector::from_iterator(
        sources.len(),
        sources.iter_mut().map(|s| s.as_mut().map_or(0.0, |s| s.sample(k))),
    )
}

fn initial_state(s: &Scenario) -> Vector {
    let n = s.plant.n();
    match &s.x0 {
        InitialState::Zero => Vector::zeros(n),
        InitialState::Fixed { values } => Vector::from_column_slice(values),
        InitialState::Gaussian { mean, std } => {
            let mut rng = signal::stream(s.seed, signal::STREAM_INITIAL_STATE);
            let dist = Normal::new(*mean, *std).expect("validated parameters");
            Vector::from_iterator(n, (0..n).map(|_| dist.sample(&mut rng)))
        }
    }
}

fn build_bank(s: &Scenario) -> Result<Option<BankSpec>> {
    let (plant, tol) = (&s.plant, &s.tolerances);
    let indices = match s.estimator {
        EstimatorSpec::None => return Ok(None),
        EstimatorSpec::Complete { q } => {
            let q = match q {
                Some(q) => q,
                None => match uio::max_q(plant, tol) {
                    0 => return Err(infeasible("no complete observer bank exists for this plant (q = 0)")),
                    q => q,
                },
            };
            BankIndices::Complete { q }
        }
        EstimatorSpec::Partial { q1, q2 } => {
            let (d1, d2) = uio::max_q1_q2(plant, tol, s.priority);
            let q2 = q2.unwrap_or(d2);
            if q2 == 0 {
                return Err(infeasible("no partial observer bank exists for this plant (q2 = 0)"));
            }
            BankIndices::Partial {
                q1: q1.unwrap_or(d1),
                q2,
            }
        }
    };
    uio::enumerate_bank_with(plant, indices, tol, s.bank_cap, s.infeasible_members).map(Some)
}

fn build_controller(s: &Scenario, bank: Option<&BankSpec>, info: &mut RunInfo) -> Result<Controller> {
    let (plant, tol) = (&s.plant, &s.tolerances);
    Ok(match &s.input {
        InputPolicy::OpenLoop { signals } => {
            Controller::OpenLoop(sources(signals, plant.n_u(), s.seed, signal::STREAM_INPUT)?)
        }
        InputPolicy::StaticFeedback { gain } => {
            let gain = match gain {
                Some(k) => k.clone(),
                None => control::design_static(plant, tol)?,
            };
            info.static_gain = Some(gain.clone());
            Controller::Static {
                gain,
                from_estimate: bank.is_some(),
            }
        }
        InputPolicy::Switching { bound } => {
            let qstar = control::max_qstar(plant, tol);
            let bound = match (bound, bank.map(|b| b.indices)) {
                (Some(b), _) => *b,
                (None, Some(BankIndices::Partial { q1, .. })) => q1,
                (None, _) => qstar,
            };
            if bound > qstar {
                return Err(Error::UnstabilizableConfiguration(format!(
                    "switching bound {bound} exceeds q* = {qstar}"
                )));
            }
            let table = control::design_switching_gains(plant, bound, tol)?;
            info.certificate = control::search_certificate(&table, tol);
            info.gains = Some(table.clone());
            Controller::Switching(table)
        }
    })
}

fn assumption_warnings(s: &Scenario, bank: Option<&BankSpec>) -> Vec<String> {
    let (w_u, w_y) = s.attack_supports();
    let mut out = Vec::new();
    match bank.map(|b| b.indices) {
        Some(BankIndices::Complete { q }) if w_y.len() > q => {
            out.push(format!(
                "{} sensors attacked, the complete bank tolerates at most q = {q}",
                w_y.len()
            ));
        }
        Some(BankIndices::Partial { q1, q2 }) => {
            if w_u.len() > q1 {
                out.push(format!(
                    "{} actuators attacked, the partial bank tolerates at most q1 = {q1}",
                    w_u.len()
                ));
            }
            if w_y.len() > q2 {
                out.push(format!(
                    "{} sensors attacked, the partial bank tolerates at most q2 = {q2}",
                    w_y.len()
                ));
            }
        }
        _ => {}
    }
    out
}

fn restrict(v: &Vector, on: &IndexSet) -> Vector {
    Vector::from_iterator(
        v.len(),
        v.iter()
            .enumerate()
            .map(|(i, x)| if on.contains(i + 1) { *x } else { 0.0 }),
    )
}

pub fn simulate(s: &Scenario) -> Result<Trace> {
    s.validate()?;
    let plant: &PlantModel = &s.plant;
    let (n, n_u, n_y) = (plant.n(), plant.n_u(), plant.n_y());
    let policy = s.isolation;

    let spec = build_bank(s)?;
    let mut info = RunInfo {
        bank: spec.as_ref().map(|b| b.indices),
        bank_size: spec.as_ref().map_or(0, |b| b.len()),
        omitted: spec.as_ref().map_or_else(Vec::new, |b| b.omitted.clone()),
        rho_max: spec.as_ref().map(|b| b.max_spectral_radius()).transpose()?,
        warnings: assumption_warnings(s, spec.as_ref()),
        ..RunInfo::default()
    };
    let mut controller = build_controller(s, spec.as_ref(), &mut info)?;

    let attacks_on = |target| -> Vec<ChannelSignal> {
        s.attacks
            .iter()
            .filter(|a| a.target == target)
            .map(|a| a.signal.clone())
            .collect()
    };
    let (act, sen) = (attacks_on(AttackTarget::Actuator), attacks_on(AttackTarget::Sensor));
    let mut act_sources = sources(&act, n_u, s.seed, signal::STREAM_ACTUATOR_ATTACK)?;
    let mut sen_sources = sources(&sen, n_y, s.seed, signal::STREAM_SENSOR_ATTACK)?;

    let reconstructor = Reconstructor::new(plant);
    let mut isolator = Isolator::new(policy, n_u, n_y)?;
    let x_hat0 = s
        .x_hat0
        .as_ref()
        .map_or_else(|| Vector::zeros(n), |v| Vector::from_column_slice(v));

    let mut x = initial_state(s);
    let mut bank: Option<ObserverBank> = None;
    let mut records: Vec<StepRecord> = Vec::with_capacity(s.horizon + 1);

    for k in 0..=s.horizon {
        let a_y = sample(&mut sen_sources, k);
        let a_u_requested = sample(&mut act_sources, k);
        let y = plant.c() * &x + &a_y;

        let selection = match (&spec, bank.as_mut(), records.last()) {
            (None, ..) => None,
            (Some(spec), None, _) => {
                let b = ObserverBank::init(spec, &x_hat0, &y)?;
                let rec = b.record()?;
                bank = Some(b);
                Some(rec)
            }
            (Some(_), Some(b), Some(prev)) => Some(b.step(&prev.u, &y)?),
            (Some(_), Some(_), None) => unreachable!("bank exists only after the first step"),
        };
        let x_hat = selection.as_ref().map(|r| r.estimate.clone());

        let a_u_hat = match (&x_hat, records.last()) {
            (Some(xh), Some(prev)) => {
                let xh_prev = prev.x_hat.as_ref().expect("estimator runs every step");
                Some(reconstructor.actuator(xh, xh_prev, &prev.u))
            }
            _ => None,
        };
        let a_y_hat = x_hat.as_ref().map(|xh| reconstructor.sensor(&y, xh));
        let isolation = match (&a_u_hat, &a_y_hat) {
            (Some(au), Some(ay)) if k >= policy.warmup => {
                let in_service = records.last().map_or_else(|| IndexSet::full(n_u), |r| r.rho.clone());
                Some(isolator.update(k, au, ay, &in_service)?)
            }
            _ => None,
        };

        let (rho, u) = match &mut controller {
            Controller::OpenLoop(inputs) => (IndexSet::full(n_u), sample(inputs, k)),
            Controller::Static { gain, from_estimate } => {
                let basis = if *from_estimate {
                    x_hat.as_ref().expect("estimator present")
                } else {
                    &x
                };
                (IndexSet::full(n_u), &*gain * basis)
            }
            Controller::Switching(table) => {
                let isolated = isolation
                    .as_ref()
                    .map_or_else(|| IndexSet::empty(n_u), |(wu, _)| wu.clone());
                control::supervisor_step(&isolated, table, x_hat.as_ref().expect("estimator present"))?
            }
        };
        let a_u = restrict(&a_u_requested, &rho);

        let next = (k < s.horizon).then(|| plant.a() * &x + plant.b() * (&u + &a_u));
        let (w_u_hat, w_y_hat) = isolation.map_or((None, None), |(u, y)| (Some(u), Some(y)));
        let (sigma, pis) = selection.map_or((None, Vec::new()), |r| (Some(r.sigma), r.pis));
        records.push(StepRecord {
            k,
            x,
            u,
            a_u,
            a_y,
            y,
            x_hat,
            sigma,
            pis,
            a_u_hat,
            a_y_hat,
            w_u_hat,
            w_y_hat,
            rho,
        });
        match next {
            Some(nx) => {
                let norm = nx.norm();
                if norm.is_nan() || norm > DIVERGENCE_LIMIT {
                    return Err(Error::Diverged { step: k + 1, norm });
                }
                x = nx;
            }
            None => break,
        }
    }
    Ok(Trace {
        n,
        n_u,
        n_y,
        records,
        info,
    })
}

/// Re-derives every transition and output from the recorded signals.
pub fn replay_check(trace: &Trace, s: &Scenario) -> bool {
    let plant = &s.plant;
    let dims = (plant.n(), plant.n_u(), plant.n_y());
    if (trace.n, trace.n_u, trace.n_y) != dims || trace.records.is_empty() {
        return false;
    }
    let shapes_ok = trace
        .records
        .iter()
        .all(|r| (r.x.len(), r.u.len(), r.y.len()) == dims && r.a_u.len() == dims.1 && r.a_y.len() == dims.2);
    if !shapes_ok {
        return false;
    }
    let outputs_ok = trace
        .records
        .iter()
        .all(|r| (plant.c() * &r.x + &r.a_y - &r.y).amax() <= REPLAY_TOL);
    let transitions_ok = trace.records.windows(2).all(|w| {
        let predicted = plant.a() * &w[0].x + plant.b() * (&w[0].u + &w[0].a_u);
        (predicted - &w[1].x).amax() <= REPLAY_TOL
    });
    outputs_ok && transitions_ok
}
