//! Unknown input observer synthesis.
//!
//! A complete observer for sensor set `J_s` treats the whole actuation
//! `u + a_u` as unknown:
//!
//! ```text
//! z+ = N z + L y^J,        x_hat = z + E y^J
//! ```
//!
//! A partial observer for `(J_u, J_s)` is decoupled only from the columns
//! `b_{J_u}` and consumes the remaining commanded input through `T B u`.
//!
//! Both are parametrized the same way: `E = b (C^J b)^+`, `A1 = (I - E C^J) A`,
//! `K1` a detectability gain for `(C^J, A1)`, `N = A1 - K1 C^J`,
//! `L = K1 + N E`, and for partial observers `T = I - E C^J`.

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use crate::error::{infeasible, invalid, Error, Result};
use crate::index_set::IndexSet;
use crate::linalg::{self, Mat, Tolerances};
use crate::plant::PlantModel;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompleteUioDesign {
    pub sensors: IndexSet,
    #[serde(with = "crate::serde_mat")]
    pub n: Mat,
    #[serde(with = "crate::serde_mat")]
    pub l: Mat,
    #[serde(with = "crate::serde_mat")]
    pub e: Mat,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialUioDesign {
    pub actuators: IndexSet,
    pub sensors: IndexSet,
    #[serde(with = "crate::serde_mat")]
    pub n: Mat,
    #[serde(with = "crate::serde_mat")]
    pub l: Mat,
    #[serde(with = "crate::serde_mat")]
    pub e: Mat,
    #[serde(with = "crate::serde_mat")]
    pub t: Mat,
    /// Cached `T B`, the known-input gain.
    #[serde(skip)]
    pub tb: Mat,
}

impl CompleteUioDesign {
    /// Max-abs residuals of `N(I - E C) + L C + (E C - I) A = 0` and `(E C - I) B = 0`.
    pub fn residuals(&self, plant: &PlantModel) -> [f64; 2] {
        let n = plant.n();
        let cj = linalg::select_rows(plant.c(), &self.sensors);
        let ec_minus_i = &self.e * &cj - Mat::identity(n, n);
        let first = &self.n * (Mat::identity(n, n) - &self.e * &cj) + &self.l * &cj + &ec_minus_i * plant.a();
        let second = &ec_minus_i * plant.b();
        [linalg::max_abs(&first), linalg::max_abs(&second)]
    }
}

impl PartialUioDesign {
    /// Max-abs residuals of the three partial design equations:
    /// `N(I - E C) + L C + (E C - I) A = 0`, `(T + E C - I) B = 0`, `(E C - I) b_{J_u} = 0`.
    pub fn residuals(&self, plant: &PlantModel) -> [f64; 3] {
        let n = plant.n();
        let cj = linalg::select_rows(plant.c(), &self.sensors);
        let ec = &self.e * &cj;
        let ec_minus_i = &ec - Mat::identity(n, n);
        let first = &self.n * (Mat::identity(n, n) - &ec) + &self.l * &cj + &ec_minus_i * plant.a();
        let second = (&self.t + &ec_minus_i) * plant.b();
        let third = &ec_minus_i * linalg::select_cols(plant.b(), &self.actuators);
        [
            linalg::max_abs(&first),
            linalg::max_abs(&second),
            linalg::max_abs(&third),
        ]
    }
}

/// Identifies an observer in a bank. Orders lexicographically by actuator
/// set, then sensor set, which is the selection tie-break order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObserverKey {
    Complete(IndexSet),
    Partial { actuators: IndexSet, sensors: IndexSet },
}

impl ObserverKey {
    pub fn sensors(&self) -> &IndexSet {
        match self {
            ObserverKey::Complete(s) => s,
            ObserverKey::Partial { sensors, .. } => sensors,
        }
    }

    pub fn actuators(&self) -> Option<&IndexSet> {
        match self {
            ObserverKey::Complete(_) => None,
            ObserverKey::Partial { actuators, .. } => Some(actuators),
        }
    }
}

/// `1;2;4` for complete observers, `3/1;3;4` (actuators/sensors) for partial ones.
impl fmt::Display for ObserverKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObserverKey::Complete(s) => write!(f, "{s}"),
            ObserverKey::Partial { actuators, sensors } => write!(f, "{actuators}/{sensors}"),
        }
    }
}

/// Serialized as its display form.
impl Serialize for ObserverKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum UioDesign {
    Complete(CompleteUioDesign),
    Partial(PartialUioDesign),
}

impl UioDesign {
    pub fn key(&self) -> ObserverKey {
        match self {
            UioDesign::Complete(d) => ObserverKey::Complete(d.sensors.clone()),
            UioDesign::Partial(d) => ObserverKey::Partial {
                actuators: d.actuators.clone(),
                sensors: d.sensors.clone(),
            },
        }
    }

    pub fn sensors(&self) -> &IndexSet {
        match self {
            UioDesign::Complete(d) => &d.sensors,
            UioDesign::Partial(d) => &d.sensors,
        }
    }

    pub fn n(&self) -> &Mat {
        match self {
            UioDesign::Complete(d) => &d.n,
            UioDesign::Partial(d) => &d.n,
        }
    }

    pub fn l(&self) -> &Mat {
        match self {
            UioDesign::Complete(d) => &d.l,
            UioDesign::Partial(d) => &d.l,
        }
    }

    pub fn e(&self) -> &Mat {
        match self {
            UioDesign::Complete(d) => &d.e,
            UioDesign::Partial(d) => &d.e,
        }
    }

    /// `T B` for partial observers; complete observers ignore the input.
    pub fn known_input_gain(&self) -> Option<&Mat> {
        match self {
            UioDesign::Complete(_) => None,
            UioDesign::Partial(d) => Some(&d.tb),
        }
    }

    pub fn max_residual(&self, plant: &PlantModel) -> f64 {
        match self {
            UioDesign::Complete(d) => d.residuals(plant).into_iter().fold(0.0, f64::max),
            UioDesign::Partial(d) => d.residuals(plant).into_iter().fold(0.0, f64::max),
        }
    }
}

struct Parametrization {
    e: Mat,
    a1: Mat,
    cj: Mat,
}

/// Rank and detectability conditions for decoupling the columns `b_unknown`
/// from sensor set `sensors`. On success returns `E`, `A1` and `C^J`.
fn parametrize(plant: &PlantModel, b_unknown: &Mat, sensors: &IndexSet, tol: &Tolerances) -> Result<Parametrization> {
    let n = plant.n();
    if sensors.is_empty() {
        return Err(infeasible("sensor set is empty"));
    }
    if sensors.universe() != plant.n_y() {
        return Err(invalid("sensor set universe does not match n_y"));
    }
    let cj = linalg::select_rows(plant.c(), sensors);
    let width = b_unknown.ncols();
    let e = if width == 0 {
        Mat::zeros(n, sensors.len())
    } else {
        let cb = &cj * b_unknown;
        let rank_b = linalg::rank_tol(b_unknown, tol)?;
        let rank_cb = linalg::rank_tol(&cb, tol)?;
        if rank_b != width || rank_cb != width {
            return Err(infeasible(format!(
                "rank condition fails for sensors {{{sensors}}}: rank(C^J b) = {rank_cb}, rank(b) = {rank_b}, required {width}"
            )));
        }
        b_unknown * linalg::pinv_with(&cb, tol.rank_tol)
    };
    let a1 = (Mat::identity(n, n) - &e * &cj) * plant.a();
    if !linalg::is_detectable(&a1, &cj, tol)? {
        return Err(infeasible(format!(
            "(C^J, A - E C^J A) is not detectable for sensors {{{sensors}}}"
        )));
    }
    Ok(Parametrization { e, a1, cj })
}

fn observer_matrices(p: &Parametrization, tol: &Tolerances) -> Result<(Mat, Mat)> {
    let k1 = linalg::stabilizing_observer_gain(&p.a1, &p.cj, tol)?;
    let n = &p.a1 - &k1 * &p.cj;
    let l = &k1 + &n * &p.e;
    Ok((n, l))
}

fn check_schur(n: &Mat, key: &dyn fmt::Display, tol: &Tolerances) -> Result<()> {
    let radius = linalg::spectral_radius(n)?;
    if radius > tol.schur_bound() {
        return Err(infeasible(format!(
            "observer {key}: spectral radius of N is {radius}, above {}",
            tol.schur_bound()
        )));
    }
    Ok(())
}

fn check_residuals(residuals: &[f64], key: &dyn fmt::Display, tol: &Tolerances) -> Result<()> {
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    if worst > tol.residual_tol {
        return Err(infeasible(format!(
            "observer {key}: design residual {worst:e} exceeds {:e}",
            tol.residual_tol
        )));
    }
    Ok(())
}

/// Rank condition `rank(C^J B) = rank(B) = n_u` and detectability of `(C^J, A - E C^J A)`.
pub fn complete_feasible(plant: &PlantModel, sensors: &IndexSet, tol: &Tolerances) -> bool {
    parametrize(plant, plant.b(), sensors, tol).is_ok()
}

pub fn design_complete(plant: &PlantModel, sensors: &IndexSet, tol: &Tolerances) -> Result<CompleteUioDesign> {
    let p = parametrize(plant, plant.b(), sensors, tol)?;
    let (n, l) = observer_matrices(&p, tol)?;
    let design = CompleteUioDesign {
        sensors: sensors.clone(),
        n,
        l,
        e: p.e,
    };
    check_residuals(&design.residuals(plant), sensors, tol)?;
    check_schur(&design.n, sensors, tol)?;
    Ok(design)
}

fn check_actuators(plant: &PlantModel, actuators: &IndexSet) -> Result<()> {
    if actuators.universe() != plant.n_u() {
        return Err(invalid("actuator set universe does not match n_u"));
    }
    Ok(())
}

/// Rank condition `rank(C^J b_{J_u}) = rank(b_{J_u}) = |J_u|` and detectability
/// of `(C^J, A - E C^J A)` with `E = b_{J_u} (C^J b_{J_u})^+`.
///
/// An empty actuator set is accepted and degenerates to a Luenberger observer
/// using the full known input.
pub fn partial_feasible(plant: &PlantModel, actuators: &IndexSet, sensors: &IndexSet, tol: &Tolerances) -> bool {
    check_actuators(plant, actuators).is_ok()
        && parametrize(plant, &linalg::select_cols(plant.b(), actuators), sensors, tol).is_ok()
}

pub fn design_partial(
    plant: &PlantModel,
    actuators: &IndexSet,
    sensors: &IndexSet,
    tol: &Tolerances,
) -> Result<PartialUioDesign> {
    check_actuators(plant, actuators)?;
    let b_unknown = linalg::select_cols(plant.b(), actuators);
    let p = parametrize(plant, &b_unknown, sensors, tol)?;
    let (n, l) = observer_matrices(&p, tol)?;
    let dim = plant.n();
    let t = Mat::identity(dim, dim) - &p.e * &p.cj;
    let tb = &t * plant.b();
    let design = PartialUioDesign {
        actuators: actuators.clone(),
        sensors: sensors.clone(),
        n,
        l,
        e: p.e,
        t,
        tb,
    };
    let key = ObserverKey::Partial {
        actuators: actuators.clone(),
        sensors: sensors.clone(),
    };
    check_residuals(&design.residuals(plant), &key, tol)?;
    check_schur(&design.n, &key, tol)?;
    Ok(design)
}

/// Largest `q` with `n_y - 2q > 0` such that every sensor set of size at
/// least `n_y - 2q` admits a complete observer. Every cardinality is checked.
pub fn max_q(plant: &PlantModel, tol: &Tolerances) -> usize {
    let n_y = plant.n_y();
    let level_ok = |size: usize| {
        IndexSet::combinations(n_y, size)
            .iter()
            .all(|js| complete_feasible(plant, js, tol))
    };
    let mut q = 0;
    // Sizes already verified: (lowest_checked..=n_y).
    let mut lowest_checked = n_y + 1;
    while n_y > 2 * (q + 1) {
        let target = n_y - 2 * (q + 1);
        let mut ok = true;
        for size in (target..lowest_checked).rev() {
            if !level_ok(size) {
                ok = false;
                break;
            }
        }
        if !ok {
            break;
        }
        lowest_checked = target;
        q += 1;
    }
    q
}

/// Which index is maximized first when `(q1, q2)` cannot both be maximal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Priority {
    /// Actuator redundancy first.
    #[default]
    Q1,
    /// Sensor redundancy first.
    Q2,
}

/// Memoized partial-feasibility verdicts per `(|J_u|, |J_s|)` cardinality level.
struct PartialLevels<'a> {
    plant: &'a PlantModel,
    tol: &'a Tolerances,
    cache: HashMap<(usize, usize), bool>,
}

impl PartialLevels<'_> {
    fn level(&mut self, nu: usize, ns: usize) -> bool {
        let (plant, tol) = (self.plant, self.tol);
        *self.cache.entry((nu, ns)).or_insert_with(|| {
            let sensor_sets = IndexSet::combinations(plant.n_y(), ns);
            IndexSet::combinations(plant.n_u(), nu)
                .iter()
                .all(|ju| sensor_sets.iter().all(|js| partial_feasible(plant, ju, js, tol)))
        })
    }

    fn admissible(&mut self, q1: usize, q2: usize) -> bool {
        let (n_u, n_y) = (self.plant.n_u(), self.plant.n_y());
        if 2 * q1 >= n_u || 2 * q2 >= n_y {
            return false;
        }
        let actuator_sizes: Vec<usize> = if q1 == 0 { vec![0] } else { (1..=2 * q1).collect() };
        for nu in actuator_sizes {
            for ns in (n_y - 2 * q2)..=n_y {
                if !self.level(nu, ns) {
                    return false;
                }
            }
        }
        true
    }
}

/// Largest `(q1, q2)` under `priority` such that partial observers exist for
/// every `(J_u, J_s)` with `|J_u| <= 2 q1 < n_u` and `|J_s| >= n_y - 2 q2 > 0`.
/// With `q1 = 0` the actuator family is the empty set, so `q2` measures the
/// sensor redundancy reachable with Luenberger observers.
pub fn max_q1_q2(plant: &PlantModel, tol: &Tolerances, priority: Priority) -> (usize, usize) {
    let mut levels = PartialLevels {
        plant,
        tol,
        cache: HashMap::new(),
    };
    let q1_cap = (plant.n_u() - 1) / 2;
    let q2_cap = (plant.n_y() - 1) / 2;
    match priority {
        Priority::Q1 => {
            let q1 = largest(q1_cap, |v| levels.admissible(v, 0));
            let q2 = largest(q2_cap, |v| levels.admissible(q1, v));
            (q1, q2)
        }
        Priority::Q2 => {
            let q2 = largest(q2_cap, |v| levels.admissible(0, v));
            let q1 = largest(q1_cap, |v| levels.admissible(v, q2));
            (q1, q2)
        }
    }
}

/// Largest `v` in `1..=cap` such that `ok` holds for all of `1..=v`, or 0.
fn largest(cap: usize, mut ok: impl FnMut(usize) -> bool) -> usize {
    (1..=cap).take_while(|&v| ok(v)).last().unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BankIndices {
    Complete { q: usize },
    Partial { q1: usize, q2: usize },
}

/// Default cap on the number of observers a bank may contain.
pub const DEFAULT_BANK_CAP: usize = 10_000;

/// A synthesized observer bank: the `primary` observers (`|J| = n_y - q`,
/// or `(q1, n_y - q2)`) whose estimates are candidates for selection, and
/// the `secondary` observers (`n_y - 2q`, or `(2 q1, n_y - 2 q2)`) used to
/// score them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BankSpec {
    pub indices: BankIndices,
    pub primary: Vec<UioDesign>,
    pub secondary: Vec<UioDesign>,
    /// Members left out under [`InfeasibleMembers::Omit`], with the reason.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub omitted: Vec<OmittedMember>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmittedMember {
    pub key: ObserverKey,
    pub reason: String,
}

/// What bank enumeration does with a member that has no observer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasibleMembers {
    /// Fail with `DesignInfeasible` naming the member.
    #[default]
    Reject,
    /// Leave the member out and record it. Deviation scores then range over
    /// the members that exist; a candidate with none left scores `+inf`.
    Omit,
}

impl BankSpec {
    pub fn len(&self) -> usize {
        self.primary.len() + self.secondary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn designs(&self) -> impl Iterator<Item = &UioDesign> {
        self.primary.iter().chain(&self.secondary)
    }

    /// Largest spectral radius over every `N` in the bank.
    pub fn max_spectral_radius(&self) -> Result<f64> {
        self.designs()
            .map(|d| linalg::spectral_radius(d.n()))
            .try_fold(0.0, |acc: f64, r| Ok(acc.max(r?)))
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Number of observers `enumerate_bank` would synthesize.
pub fn bank_size(n_u: usize, n_y: usize, indices: BankIndices) -> usize {
    match indices {
        BankIndices::Complete { q } => binomial(n_y, n_y - q.min(n_y)) + binomial(n_y, n_y.saturating_sub(2 * q)),
        BankIndices::Partial { q1, q2 } => {
            binomial(n_u, q1) * binomial(n_y, n_y - q2.min(n_y))
                + binomial(n_u, 2 * q1) * binomial(n_y, n_y.saturating_sub(2 * q2))
        }
    }
}

pub fn enumerate_bank(plant: &PlantModel, indices: BankIndices, tol: &Tolerances, bank_cap: usize) -> Result<BankSpec> {
    enumerate_bank_with(plant, indices, tol, bank_cap, InfeasibleMembers::Reject)
}

pub fn enumerate_bank_with(
    plant: &PlantModel,
    indices: BankIndices,
    tol: &Tolerances,
    bank_cap: usize,
    policy: InfeasibleMembers,
) -> Result<BankSpec> {
    let (n_u, n_y) = (plant.n_u(), plant.n_y());
    match indices {
        BankIndices::Complete { q } => {
            if q == 0 || 2 * q >= n_y {
                return Err(invalid(format!("complete bank needs 1 <= q < n_y/2, got q = {q}")));
            }
        }
        BankIndices::Partial { q1, q2 } => {
            if q2 == 0 || 2 * q2 >= n_y || 2 * q1 >= n_u {
                return Err(invalid(format!(
                    "partial bank needs 2 q1 < n_u and 1 <= q2 < n_y/2, got ({q1}, {q2})"
                )));
            }
        }
    }
    let size = bank_size(n_u, n_y, indices);
    if size > bank_cap {
        return Err(invalid(format!(
            "bank of {size} observers exceeds the cap of {bank_cap}"
        )));
    }

    let mut omitted = Vec::new();
    let mut keep = |key: ObserverKey, design: Result<UioDesign>, out: &mut Vec<UioDesign>| -> Result<()> {
        match (design, policy) {
            (Ok(d), _) => out.push(d),
            (Err(Error::DesignInfeasible(reason)), InfeasibleMembers::Omit) => {
                omitted.push(OmittedMember { key, reason })
            }
            (Err(e), _) => return Err(e),
        }
        Ok(())
    };
    let mut primary = Vec::new();
    let mut secondary = Vec::new();
    match indices {
        BankIndices::Complete { q } => {
            for (size, out) in [(n_y - q, &mut primary), (n_y - 2 * q, &mut secondary)] {
                for js in IndexSet::combinations(n_y, size) {
                    let design = design_complete(plant, &js, tol).map(UioDesign::Complete);
                    keep(ObserverKey::Complete(js), design, out)?;
                }
            }
        }
        BankIndices::Partial { q1, q2 } => {
            for (nu, ns, out) in [(q1, n_y - q2, &mut primary), (2 * q1, n_y - 2 * q2, &mut secondary)] {
                for ju in IndexSet::combinations(n_u, nu) {
                    for js in IndexSet::combinations(n_y, ns) {
                        let design = design_partial(plant, &ju, &js, tol).map(UioDesign::Partial);
                        let key = ObserverKey::Partial {
                            actuators: ju.clone(),
                            sensors: js,
                        };
                        keep(key, design, out)?;
                    }
                }
            }
        }
    }
    if primary.is_empty() {
        return Err(infeasible("no candidate observer in the bank is feasible"));
    }
    Ok(BankSpec {
        indices,
        primary,
        secondary,
        omitted,
    })
}
