//! Runtime of an observer bank: per-step updates, deviation scores and selection.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::index_set::IndexSet;
use crate::linalg::{self, Vector};
use crate::uio::{BankIndices, BankSpec, ObserverKey, UioDesign};

/// One observer's internal state `z`.
#[derive(Debug, Clone)]
pub struct ObserverState {
    design: UioDesign,
    z: Vector,
}

impl ObserverState {
    /// Picks `z(0) = x_hat0 - E y0^J` so that the initial estimate equals `x_hat0`.
    pub fn init(design: UioDesign, x_hat0: &Vector, y0: &Vector) -> Result<Self> {
        let n = design.n().nrows();
        if x_hat0.len() != n {
            return Err(invalid(format!(
                "initial estimate has length {}, expected {n}",
                x_hat0.len()
            )));
        }
        check_output(&design, y0)?;
        let z = x_hat0 - design.e() * linalg::select_entries(y0, design.sensors());
        Ok(Self { design, z })
    }

    pub fn design(&self) -> &UioDesign {
        &self.design
    }

    pub fn z(&self) -> &Vector {
        &self.z
    }

    /// `z+ = N z + L y^J` (complete) or `z+ = N z + T B u + L y^J` (partial).
    /// Complete observers ignore `u`.
    pub fn advance(&mut self, u: &Vector, y: &Vector) -> Result<()> {
        check_output(&self.design, y)?;
        let mut next = self.design.n() * &self.z + self.design.l() * linalg::select_entries(y, self.design.sensors());
        if let Some(tb) = self.design.known_input_gain() {
            if u.len() != tb.ncols() {
                return Err(invalid(format!(
                    "input has length {}, expected {}",
                    u.len(),
                    tb.ncols()
                )));
            }
            next += tb * u;
        }
        self.z = next;
        Ok(())
    }

    /// `x_hat = z + E y^J`.
    pub fn estimate(&self, y: &Vector) -> Result<Vector> {
        check_output(&self.design, y)?;
        Ok(&self.z + self.design.e() * linalg::select_entries(y, self.design.sensors()))
    }

    /// Consumes `(u(k), y(k))`, moves to `k + 1` and returns the estimate formed with `y(k + 1)`.
    pub fn step(&mut self, u: &Vector, y: &Vector, y_next: &Vector) -> Result<Vector> {
        self.advance(u, y)?;
        self.estimate(y_next)
    }
}

fn check_output(design: &UioDesign, y: &Vector) -> Result<()> {
    let n_y = design.sensors().universe();
    if y.len() != n_y {
        return Err(invalid(format!("output has length {}, expected {n_y}", y.len())));
    }
    Ok(())
}

/// Selection bookkeeping at one time step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionRecord {
    pub k: usize,
    /// Deviation score of every primary observer.
    pub pis: Vec<(ObserverKey, f64)>,
    pub sigma: ObserverKey,
    #[serde(with = "crate::serde_mat::vector")]
    pub estimate: Vector,
}

impl SelectionRecord {
    pub fn pi_min(&self) -> f64 {
        self.pis
            .iter()
            .find(|(key, _)| *key == self.sigma)
            .map(|(_, pi)| *pi)
            .unwrap_or(f64::NAN)
    }
}

fn lookup<'a>(estimates: &'a BTreeMap<ObserverKey, Vector>, key: &ObserverKey) -> Result<&'a Vector> {
    estimates
        .get(key)
        .ok_or_else(|| Error::InternalInconsistency(format!("no estimate for observer {key}")))
}

/// Which family members a score may skip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    /// Every member must have an estimate.
    Complete,
    /// Members without an estimate are skipped; an empty family scores `+inf`.
    Available,
}

fn max_deviation(
    estimates: &BTreeMap<ObserverKey, Vector>,
    primary: &ObserverKey,
    family: impl Iterator<Item = ObserverKey>,
    mode: Family,
) -> Result<f64> {
    let center = lookup(estimates, primary)?;
    let mut seen = false;
    let mut worst = 0.0f64;
    for key in family {
        let other = match (estimates.get(&key), mode) {
            (Some(v), _) => v,
            (None, Family::Available) => continue,
            (None, Family::Complete) => lookup(estimates, &key)?,
        };
        seen = true;
        worst = worst.max((other - center).norm());
    }
    Ok(if seen || mode == Family::Complete {
        worst
    } else {
        f64::INFINITY
    })
}

fn complete_family(sensors: &IndexSet, secondary_size: usize) -> impl Iterator<Item = ObserverKey> {
    sensors.subsets(secondary_size).into_iter().map(ObserverKey::Complete)
}

fn partial_family(
    actuators: &IndexSet,
    sensors: &IndexSet,
    actuator_size: usize,
    sensor_size: usize,
) -> impl Iterator<Item = ObserverKey> {
    let sensor_subsets = sensors.subsets(sensor_size);
    actuators.supersets(actuator_size).into_iter().flat_map(move |su| {
        sensor_subsets.clone().into_iter().map(move |ss| ObserverKey::Partial {
            actuators: su.clone(),
            sensors: ss,
        })
    })
}

/// Largest Euclidean deviation between the estimate for `sensors` and those
/// of its subsets of size `secondary_size`.
pub fn pi_complete(
    estimates: &BTreeMap<ObserverKey, Vector>,
    sensors: &IndexSet,
    secondary_size: usize,
) -> Result<f64> {
    max_deviation(
        estimates,
        &ObserverKey::Complete(sensors.clone()),
        complete_family(sensors, secondary_size),
        Family::Complete,
    )
}

/// Largest Euclidean deviation between the estimate for `(actuators, sensors)`
/// and those of every `(S_u, S_s)` with `S_u` a superset of `actuators` of size
/// `actuator_size` and `S_s` a subset of `sensors` of size `sensor_size`.
pub fn pi_partial(
    estimates: &BTreeMap<ObserverKey, Vector>,
    actuators: &IndexSet,
    sensors: &IndexSet,
    actuator_size: usize,
    sensor_size: usize,
) -> Result<f64> {
    max_deviation(
        estimates,
        &ObserverKey::Partial {
            actuators: actuators.clone(),
            sensors: sensors.clone(),
        },
        partial_family(actuators, sensors, actuator_size, sensor_size),
        Family::Complete,
    )
}

/// Argmin of the scores; ties go to the lexicographically smallest key.
/// NaN scores never win against a finite one.
pub fn select(pis: &[(ObserverKey, f64)]) -> Option<&ObserverKey> {
    pis.iter()
        .min_by(|(ka, a), (kb, b)| {
            let a = if a.is_nan() { f64::INFINITY } else { *a };
            let b = if b.is_nan() { f64::INFINITY } else { *b };
            a.total_cmp(&b).then_with(|| ka.cmp(kb))
        })
        .map(|(k, _)| k)
}

/// A running observer bank advanced once per time step.
#[derive(Debug, Clone)]
pub struct ObserverBank {
    indices: BankIndices,
    n_y: usize,
    primary: Vec<ObserverState>,
    secondary: Vec<ObserverState>,
    estimates: BTreeMap<ObserverKey, Vector>,
    last_output: Vector,
    k: usize,
    family: Family,
}

impl ObserverBank {
    /// Initializes every observer so that all estimates equal `x_hat0` at `k = 0`.
    pub fn init(bank: &BankSpec, x_hat0: &Vector, y0: &Vector) -> Result<Self> {
        let first = bank.designs().next().ok_or_else(|| invalid("observer bank is empty"))?;
        let n_y = first.sensors().universe();
        let build = |designs: &[UioDesign]| -> Result<Vec<ObserverState>> {
            designs
                .iter()
                .map(|d| ObserverState::init(d.clone(), x_hat0, y0))
                .collect()
        };
        let mut out = Self {
            indices: bank.indices,
            n_y,
            primary: build(&bank.primary)?,
            secondary: build(&bank.secondary)?,
            estimates: BTreeMap::new(),
            last_output: y0.clone(),
            k: 0,
            family: if bank.omitted.is_empty() {
                Family::Complete
            } else {
                Family::Available
            },
        };
        out.refresh_estimates(y0)?;
        Ok(out)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn estimates(&self) -> &BTreeMap<ObserverKey, Vector> {
        &self.estimates
    }

    pub fn observers(&self) -> impl Iterator<Item = &ObserverState> {
        self.primary.iter().chain(&self.secondary)
    }

    fn refresh_estimates(&mut self, y: &Vector) -> Result<()> {
        self.estimates.clear();
        for obs in self.primary.iter().chain(&self.secondary) {
            self.estimates.insert(obs.design().key(), obs.estimate(y)?);
        }
        Ok(())
    }

    /// Scores and selection for the current estimates.
    pub fn record(&self) -> Result<SelectionRecord> {
        let pis = self
            .primary
            .iter()
            .map(|obs| {
                let key = obs.design().key();
                let pi = match (&key, self.indices) {
                    (ObserverKey::Complete(js), BankIndices::Complete { q }) => max_deviation(
                        &self.estimates,
                        &key,
                        complete_family(js, self.n_y - 2 * q),
                        self.family,
                    )?,
                    (ObserverKey::Partial { actuators, sensors }, BankIndices::Partial { q1, q2 }) => max_deviation(
                        &self.estimates,
                        &key,
                        partial_family(actuators, sensors, 2 * q1, self.n_y - 2 * q2),
                        self.family,
                    )?,
                    _ => {
                        return Err(Error::InternalInconsistency(format!(
                            "observer {key} does not match the bank kind"
                        )))
                    }
                };
                Ok((key, pi))
            })
            .collect::<Result<Vec<_>>>()?;
        let sigma = select(&pis)
            .cloned()
            .ok_or_else(|| Error::InternalInconsistency("bank has no primary observers".into()))?;
        let estimate = lookup(&self.estimates, &sigma)?.clone();
        Ok(SelectionRecord {
            k: self.k,
            pis,
            sigma,
            estimate,
        })
    }

    /// Advances every observer with `(u(k-1), y(k-1))`, forms estimates with
    /// `y(k)`, and returns the selection at the new step `k`.
    pub fn step(&mut self, u_prev: &Vector, y: &Vector) -> Result<SelectionRecord> {
        if y.len() != self.n_y {
            return Err(invalid(format!("output has length {}, expected {}", y.len(), self.n_y)));
        }
        let y_prev = std::mem::replace(&mut self.last_output, y.clone());
        for obs in self.primary.iter_mut().chain(self.secondary.iter_mut()) {
            obs.advance(u_prev, &y_prev)?;
        }
        self.k += 1;
        self.refresh_estimates(y)?;
        self.record()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Mat, Tolerances};
    use crate::presets;
    use crate::uio::{self, DEFAULT_BANK_CAP};

    fn set(ix: &[usize], universe: usize) -> IndexSet {
        IndexSet::new(ix.iter().copied(), universe).unwrap()
    }

    fn v(x: &[f64]) -> Vector {
        Vector::from_vec(x.to_vec())
    }

    fn bank1() -> BankSpec {
        uio::enumerate_bank(
            &presets::plant(1),
            BankIndices::Complete { q: 1 },
            &Tolerances::default(),
            DEFAULT_BANK_CAP,
        )
        .unwrap()
    }

    #[test]
    fn zero_initialization() {
        let bank = ObserverBank::init(&bank1(), &v(&[0.0, 0.0]), &Vector::zeros(4)).unwrap();
        assert!(bank.observers().all(|o| o.z().amax() == 0.0));
        assert_eq!(bank.estimates().len(), 10);
        assert!(bank.estimates().values().all(|e| e.amax() == 0.0));
        let rec = bank.record().unwrap();
        assert!(rec.pis.iter().all(|(_, pi)| *pi == 0.0));
    }

    #[test]
    fn consistent_initial_output_reproduces_initial_estimate() {
        let plant = presets::plant(1);
        let x0 = v(&[0.7, -1.3]);
        let y0 = plant.c() * &x0;
        let bank = ObserverBank::init(&bank1(), &x0, &y0).unwrap();
        for est in bank.estimates().values() {
            assert!((est - &x0).amax() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch() {
        assert!(ObserverBank::init(&bank1(), &v(&[0.0]), &Vector::zeros(4)).is_err());
        let mut bank = ObserverBank::init(&bank1(), &v(&[0.0, 0.0]), &Vector::zeros(4)).unwrap();
        assert!(bank.step(&v(&[0.0]), &Vector::zeros(3)).is_err());
    }

    #[test]
    fn zero_dynamics_stay_at_zero() {
        let d = uio::design_complete(&presets::plant(1), &set(&[1, 2, 3], 4), &Tolerances::default()).unwrap();
        let mut st = ObserverState::init(UioDesign::Complete(d), &Vector::zeros(2), &Vector::zeros(4)).unwrap();
        let est = st.step(&v(&[0.0]), &Vector::zeros(4), &Vector::zeros(4)).unwrap();
        assert_eq!(st.z().amax(), 0.0);
        assert_eq!(est.amax(), 0.0);
    }

    #[test]
    fn pi_is_max_deviation() {
        let js = set(&[1, 2, 3], 4);
        let mut est = BTreeMap::new();
        est.insert(ObserverKey::Complete(js.clone()), v(&[0.0, 0.0]));
        est.insert(ObserverKey::Complete(set(&[1, 2], 4)), v(&[1.0, 0.0]));
        est.insert(ObserverKey::Complete(set(&[1, 3], 4)), v(&[0.0, 3.0]));
        est.insert(ObserverKey::Complete(set(&[2, 3], 4)), v(&[0.0, 0.0]));
        assert_eq!(pi_complete(&est, &js, 2).unwrap(), 3.0);
        est.remove(&ObserverKey::Complete(set(&[2, 3], 4)));
        assert!(matches!(
            pi_complete(&est, &js, 2),
            Err(Error::InternalInconsistency(_))
        ));
    }

    #[test]
    fn pi_partial_family() {
        let ju = set(&[3], 3);
        let js = set(&[1, 3, 4], 4);
        let mut est = BTreeMap::new();
        est.insert(
            ObserverKey::Partial {
                actuators: ju.clone(),
                sensors: js.clone(),
            },
            v(&[1.0, 1.0, 1.0]),
        );
        for su in ju.supersets(2) {
            for ss in js.subsets(2) {
                est.insert(
                    ObserverKey::Partial {
                        actuators: su.clone(),
                        sensors: ss,
                    },
                    v(&[1.0, 1.0, 1.0]),
                );
            }
        }
        assert_eq!(pi_partial(&est, &ju, &js, 2, 2).unwrap(), 0.0);
        est.insert(
            ObserverKey::Partial {
                actuators: set(&[1, 3], 3),
                sensors: set(&[1, 4], 4),
            },
            v(&[1.0, 3.0, 1.0]),
        );
        assert_eq!(pi_partial(&est, &ju, &js, 2, 2).unwrap(), 2.0);
    }

    #[test]
    fn selection_and_ties() {
        let a = ObserverKey::Complete(set(&[1, 2, 3], 4));
        let b = ObserverKey::Complete(set(&[1, 2, 4], 4));
        assert_eq!(select(&[(a.clone(), 2.0)]), Some(&a));
        assert_eq!(select(&[(a.clone(), 2.0), (b.clone(), 1.0)]), Some(&b));
        assert_eq!(select(&[(b.clone(), 1.0), (a.clone(), 1.0)]), Some(&a));
        assert_eq!(select(&[(a.clone(), f64::NAN), (b.clone(), 5.0)]), Some(&b));
        assert_eq!(select(&[]), None);
    }

    #[test]
    fn attack_free_exact_initialization_stays_exact() {
        let plant = presets::plant(1);
        let mut x = v(&[0.4, -0.2]);
        let y0 = plant.c() * &x;
        let mut bank = ObserverBank::init(&bank1(), &x, &y0).unwrap();
        for k in 0..50 {
            let u = v(&[(k as f64).cos()]);
            x = plant.a() * &x + plant.b() * &u;
            let rec = bank.step(&u, &(plant.c() * &x)).unwrap();
            assert!((rec.estimate - &x).amax() < 1e-12);
        }
    }

    #[test]
    fn partial_observer_uses_known_input() {
        let plant = presets::plant(2);
        let d = uio::design_partial(&plant, &set(&[3], 3), &set(&[1, 3, 4], 4), &Tolerances::default()).unwrap();
        let mut x = v(&[1.0, 0.5, -0.5]);
        let mut st = ObserverState::init(UioDesign::Partial(d), &x, &(plant.c() * &x)).unwrap();
        for k in 0..20 {
            let u = v(&[1.0, -1.0, 0.0]);
            let attack = v(&[0.0, 0.0, 10.0 * (k as f64).sin()]);
            let y = plant.c() * &x;
            let x_next = plant.a() * &x + plant.b() * (&u + &attack);
            let est = st.step(&u, &y, &(plant.c() * &x_next)).unwrap();
            assert!((est - &x_next).amax() < 1e-10);
            x = x_next;
        }
        let _ = Mat::zeros(1, 1);
    }
}
