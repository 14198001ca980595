//! Attack reconstruction from the selected estimate, and isolation by thresholded support.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::index_set::IndexSet;
use crate::linalg::{self, Mat, Vector};
use crate::plant::PlantModel;

/// `B^+ (x_hat(k) - A x_hat(k-1)) - u(k-1)`, an estimate of `a_u(k-1)`.
pub fn reconstruct_actuator(x_hat: &Vector, x_hat_prev: &Vector, u_prev: &Vector, plant: &PlantModel) -> Vector {
    Reconstructor::new(plant).actuator(x_hat, x_hat_prev, u_prev)
}

/// `y(k) - C x_hat(k)`, an estimate of `a_y(k)`.
pub fn reconstruct_sensor(y: &Vector, x_hat: &Vector, plant: &PlantModel) -> Vector {
    y - plant.c() * x_hat
}

/// Holds `B^+` so that per-step reconstruction does not recompute an SVD.
#[derive(Debug, Clone)]
pub struct Reconstructor {
    a: Mat,
    c: Mat,
    b_pinv: Mat,
}

impl Reconstructor {
    pub fn new(plant: &PlantModel) -> Self {
        Self {
            a: plant.a().clone(),
            c: plant.c().clone(),
            b_pinv: linalg::pinv(plant.b()),
        }
    }

    pub fn actuator(&self, x_hat: &Vector, x_hat_prev: &Vector, u_prev: &Vector) -> Vector {
        &self.b_pinv * (x_hat - &self.a * x_hat_prev) - u_prev
    }

    pub fn sensor(&self, y: &Vector, x_hat: &Vector) -> Vector {
        y - &self.c * x_hat
    }
}

/// How an isolated channel returns to service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deisolation {
    /// Leave after `window` consecutive sub-threshold steps.
    TrailingWindow,
    /// Same, but steps during which an actuator was switched off do not count:
    /// its reconstruction carries no information while it is off.
    #[default]
    HoldWhileOff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IsolationPolicy {
    /// Magnitudes strictly above this count as nonzero.
    pub threshold: f64,
    /// First step at which isolation is evaluated.
    pub warmup: usize,
    /// Persistence window length; 1 reproduces instantaneous support.
    pub window: usize,
    pub deisolation: Deisolation,
}

impl Default for IsolationPolicy {
    fn default() -> Self {
        Self {
            threshold: 1e-3,
            warmup: 20,
            window: 5,
            deisolation: Deisolation::default(),
        }
    }
}

impl IsolationPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(invalid("isolation threshold must be finite and positive"));
        }
        if self.warmup == 0 || self.window == 0 {
            return Err(invalid("isolation warmup and window must be at least 1"));
        }
        Ok(())
    }
}

/// Reconstructed attacks at step `k`; isolation sets are `None` before warmup.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackEstimate {
    pub k: usize,
    #[serde(with = "crate::serde_mat::vector")]
    pub a_u_hat: Vector,
    #[serde(with = "crate::serde_mat::vector")]
    pub a_y_hat: Vector,
    pub w_u_hat: Option<IndexSet>,
    pub w_y_hat: Option<IndexSet>,
}

#[derive(Debug, Clone)]
struct ChannelTracker {
    flagged: Vec<bool>,
    quiet: Vec<usize>,
}

impl ChannelTracker {
    fn new(len: usize) -> Self {
        Self {
            flagged: vec![false; len],
            quiet: vec![0; len],
        }
    }

    fn update(&mut self, values: &Vector, counts: impl Fn(usize) -> bool, threshold: f64) {
        for (i, v) in values.iter().enumerate() {
            if !counts(i) {
                continue;
            }
            if v.abs() > threshold {
                self.flagged[i] = true;
                self.quiet[i] = 0;
            } else if self.flagged[i] {
                self.quiet[i] += 1;
            }
        }
    }

    fn support(&self, window: usize) -> Result<IndexSet> {
        IndexSet::from_zero_based(
            (0..self.flagged.len()).filter(|&i| self.flagged[i] && self.quiet[i] < window),
            self.flagged.len(),
        )
    }
}

/// Stateful persistence filter over the reconstructed attack streams.
#[derive(Debug, Clone)]
pub struct Isolator {
    policy: IsolationPolicy,
    actuators: ChannelTracker,
    sensors: ChannelTracker,
}

impl Isolator {
    pub fn new(policy: IsolationPolicy, n_u: usize, n_y: usize) -> Result<Self> {
        policy.validate()?;
        Ok(Self {
            policy,
            actuators: ChannelTracker::new(n_u),
            sensors: ChannelTracker::new(n_y),
        })
    }

    pub fn policy(&self) -> &IsolationPolicy {
        &self.policy
    }

    /// Feeds the estimates of step `k`. `in_service` lists the actuators that
    /// were switched on when `a_u_hat` was produced (i.e. at `k - 1`).
    /// Returns `(W_u_hat, W_y_hat)`, or `NotReady` before warmup.
    pub fn update(
        &mut self,
        k: usize,
        a_u_hat: &Vector,
        a_y_hat: &Vector,
        in_service: &IndexSet,
    ) -> Result<(IndexSet, IndexSet)> {
        if a_u_hat.len() != self.actuators.flagged.len() || a_y_hat.len() != self.sensors.flagged.len() {
            return Err(invalid("attack estimate dimensions do not match the isolator"));
        }
        if k < self.policy.warmup {
            return Err(Error::NotReady {
                step: k,
                warmup: self.policy.warmup,
            });
        }
        let hold = self.policy.deisolation == Deisolation::HoldWhileOff;
        self.actuators
            .update(a_u_hat, |i| !hold || in_service.contains(i + 1), self.policy.threshold);
        self.sensors.update(a_y_hat, |_| true, self.policy.threshold);
        Ok((
            self.actuators.support(self.policy.window)?,
            self.sensors.support(self.policy.window)?,
        ))
    }
}

/// Isolation sets at the last step of the given histories (indexed from `k = 0`),
/// with every actuator in service throughout.
pub fn isolate(
    a_u_history: &[Vector],
    a_y_history: &[Vector],
    policy: &IsolationPolicy,
) -> Result<(IndexSet, IndexSet)> {
    if a_u_history.len() != a_y_history.len() || a_u_history.is_empty() {
        return Err(invalid("attack histories must be non-empty and of equal length"));
    }
    let k_last = a_u_history.len() - 1;
    if k_last < policy.warmup {
        return Err(Error::NotReady {
            step: k_last,
            warmup: policy.warmup,
        });
    }
    let n_u = a_u_history[0].len();
    let mut isolator = Isolator::new(*policy, n_u, a_y_history[0].len())?;
    let all = IndexSet::full(n_u);
    let mut out = None;
    for k in policy.warmup..=k_last {
        out = Some(isolator.update(k, &a_u_history[k], &a_y_history[k], &all)?);
    }
    Ok(out.expect("warmup <= k_last"))
}
