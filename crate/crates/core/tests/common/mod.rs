//! Independent reference implementations and fixtures shared by the
//! integration tests. Nothing here calls the library's rank, detectability or
//! index routines: ranks come from column-pivoted QR and detectability from the
//! unobservable subspace of the observability matrix.

#![allow(dead_code)]

use itertools::Itertools;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uiobank::sim::{self, Trace};
use uiobank::uio::{self, BankSpec, InfeasibleMembers, ObserverKey};
use uiobank::{Mat, ObserverBank, PlantModel, Priority, Scenario, Tolerances, Vector};

const RANK_TOL: f64 = 1e-9;
const STABLE_RADIUS: f64 = 1.0 - 1e-6;

pub fn qr_rank(m: &Mat) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let r = m.clone().col_piv_qr().r();
    let diag: Vec<f64> = (0..r.nrows().min(r.ncols())).map(|i| r[(i, i)].abs()).collect();
    let top = diag.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    diag.iter().filter(|&&d| d > RANK_TOL * top).count()
}

fn rows(m: &Mat, set: &[usize]) -> Mat {
    Mat::from_fn(set.len(), m.ncols(), |i, j| m[(set[i], j)])
}

fn cols(m: &Mat, set: &[usize]) -> Mat {
    Mat::from_fn(m.nrows(), set.len(), |i, j| m[(i, set[j])])
}

fn radius(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Detectable iff the dynamics restricted to the unobservable subspace are Schur.
pub fn detectable(a: &Mat, c: &Mat) -> bool {
    let n = a.nrows();
    let mut obs = Mat::zeros(c.nrows() * n, n);
    let mut block = c.clone();
    for i in 0..n {
        obs.view_mut((i * c.nrows(), 0), (c.nrows(), n)).copy_from(&block);
        block = &block * a;
    }
    let r = qr_rank(&obs);
    if r == n {
        return true;
    }
    let svd = obs.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    // Right singular vectors ordered by decreasing singular value; the last
    // n - r span the kernel.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let kernel = Mat::from_fn(n, n - r, |i, j| v_t[(order[r + j], i)]);
    radius(&(kernel.transpose() * a * &kernel)) < STABLE_RADIUS
}

pub fn stabilizable(a: &Mat, b: &Mat) -> bool {
    detectable(&a.transpose(), &b.transpose())
}

/// Existence of an observer decoupled from the columns `unknown` of `B` using
/// the sensors `sensors` (zero-based).
pub fn decouplable(plant: &PlantModel, unknown: &[usize], sensors: &[usize]) -> bool {
    if sensors.is_empty() {
        return false;
    }
    let n = plant.n();
    let cj = rows(plant.c(), sensors);
    let a1 = if unknown.is_empty() {
        plant.a().clone()
    } else {
        let b = cols(plant.b(), unknown);
        let cb = &cj * &b;
        if qr_rank(&cb) < unknown.len() {
            return false;
        }
        let gram = cb.transpose() * &cb;
        let left_inverse = gram.try_inverse().expect("full column rank") * cb.transpose();
        (Mat::identity(n, n) - b * left_inverse * &cj) * plant.a()
    };
    detectable(&a1, &cj)
}

fn subsets(universe: usize, size: usize) -> Vec<Vec<usize>> {
    (0..universe).combinations(size).collect()
}

fn all_sensor_sets_from(n_y: usize, min_size: usize) -> Vec<Vec<usize>> {
    (min_size..=n_y).flat_map(|s| subsets(n_y, s)).collect()
}

pub fn oracle_q(plant: &PlantModel) -> usize {
    let n_y = plant.n_y();
    (1..)
        .take_while(|q| n_y > 2 * q)
        .filter(|q| {
            all_sensor_sets_from(n_y, n_y - 2 * q)
                .iter()
                .all(|js| decouplable(plant, &(0..plant.n_u()).collect::<Vec<_>>(), js))
        })
        .max()
        .unwrap_or(0)
}

fn partial_condition(plant: &PlantModel, q1: usize, q2: usize) -> bool {
    let (n_u, n_y) = (plant.n_u(), plant.n_y());
    if 2 * q1 >= n_u || 2 * q2 >= n_y {
        return false;
    }
    let actuator_sets: Vec<Vec<usize>> = if q1 == 0 {
        vec![vec![]]
    } else {
        (1..=2 * q1).flat_map(|s| subsets(n_u, s)).collect()
    };
    let sensor_sets = all_sensor_sets_from(n_y, n_y - 2 * q2);
    actuator_sets
        .iter()
        .all(|ju| sensor_sets.iter().all(|js| decouplable(plant, ju, js)))
}

pub fn oracle_q1_q2(plant: &PlantModel, priority: Priority) -> (usize, usize) {
    let best = |cap: usize, ok: &dyn Fn(usize) -> bool| (0..=cap).filter(|&v| ok(v)).max().unwrap_or(0);
    let (n_u, n_y) = (plant.n_u(), plant.n_y());
    match priority {
        Priority::Q1 => {
            let q1 = best(n_u, &|v| partial_condition(plant, v, 0));
            (q1, best(n_y, &|v| partial_condition(plant, q1, v)))
        }
        Priority::Q2 => {
            let q2 = best(n_y, &|v| partial_condition(plant, 0, v));
            (best(n_u, &|v| partial_condition(plant, v, q2)), q2)
        }
    }
}

pub fn oracle_qstar(plant: &PlantModel) -> usize {
    let n_u = plant.n_u();
    let level = |size: usize| {
        subsets(n_u, size)
            .iter()
            .all(|j| stabilizable(plant.a(), &cols(plant.b(), j)))
    };
    if !level(n_u) {
        return 0;
    }
    (1..n_u).filter(|&q| (n_u - q..=n_u).all(level)).max().unwrap_or(0)
}

const ENTRIES: [f64; 8] = [-1.0, -0.5, 0.0, 0.0, 0.5, 1.0, 1.0, 2.0];

fn structured(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Mat {
    Mat::from_fn(r, c, |_, _| scale * ENTRIES[rng.random_range(0..ENTRIES.len())])
}

/// Small random plant with repeated and zero entries so that rank and
/// detectability failures occur regularly. Retries until the plant invariants hold.
pub fn random_plant(rng: &mut ChaCha8Rng, max_n: usize) -> PlantModel {
    loop {
        let n = rng.random_range(1..=max_n);
        let n_u = rng.random_range(1..=n.min(3));
        let n_y = rng.random_range(2..=4);
        let a = structured(rng, n, n, 0.6);
        let b = structured(rng, n, n_u, 1.0);
        let c = structured(rng, n_y, n, 1.0);
        if let Ok(p) = PlantModel::new(a, b, c, &Tolerances::default()) {
            return p;
        }
    }
}

pub fn random_plants(count: usize, max_n: usize, seed: u64) -> Vec<PlantModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_plant(&mut rng, max_n)).collect()
}

/// The bank a preset scenario runs with.
pub fn scenario_bank(s: &Scenario) -> BankSpec {
    let tol = Tolerances::default();
    let indices = match s.estimator {
        sim::EstimatorSpec::Complete { q } => uiobank::BankIndices::Complete {
            q: q.unwrap_or_else(|| uio::max_q(&s.plant, &tol)),
        },
        sim::EstimatorSpec::Partial { q1, q2 } => uiobank::BankIndices::Partial {
            q1: q1.expect("explicit"),
            q2: q2.expect("explicit"),
        },
        sim::EstimatorSpec::None => panic!("scenario has no estimator"),
    };
    uio::enumerate_bank_with(&s.plant, indices, &tol, s.bank_cap, InfeasibleMembers::Omit).unwrap()
}

/// Reruns every observer of `bank` on the recorded inputs and outputs and
/// returns each member's estimation-error trace.
pub fn member_errors(bank: &BankSpec, trace: &Trace) -> Vec<(ObserverKey, Vec<Vector>)> {
    let r = &trace.records;
    let mut running = ObserverBank::init(bank, &Vector::zeros(trace.n), &r[0].y).unwrap();
    let mut out: Vec<(ObserverKey, Vec<Vector>)> = running
        .estimates()
        .iter()
        .map(|(k, e)| (k.clone(), vec![e - &r[0].x]))
        .collect();
    for k in 1..r.len() {
        running.step(&r[k - 1].u, &r[k].y).unwrap();
        for (key, errs) in out.iter_mut() {
            errs.push(&running.estimates()[key] - &r[k].x);
        }
    }
    out
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.amax()
}
