//! Declarative experiment description, deserialized from JSON.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::signal::Generator;
use crate::attack::IsolationPolicy;
use crate::error::{invalid, Result};
use crate::index_set::IndexSet;
use crate::linalg::{Mat, Tolerances};
use crate::plant::PlantModel;
use crate::uio::{InfeasibleMembers, Priority, DEFAULT_BANK_CAP};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialState {
    #[default]
    Zero,
    Fixed {
        values: Vec<f64>,
    },
    /// Independent `N(mean, std^2)` per state.
    Gaussian {
        mean: f64,
        std: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSignal {
    /// 1-based channel index.
    pub channel: usize,
    pub signal: Generator,
    #[serde(default)]
    pub active_from: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackTarget {
    Actuator,
    Sensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSignal {
    pub target: AttackTarget,
    #[serde(flatten)]
    pub signal: ChannelSignal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputPolicy {
    /// Per-channel generators; channels without one receive zero.
    OpenLoop {
        #[serde(default)]
        signals: Vec<ChannelSignal>,
    },
    /// `u = K x_hat`, or `u = K x` without an estimator. The gain defaults to
    /// the Riccati design.
    StaticFeedback {
        #[serde(default, with = "crate::serde_mat::option")]
        gain: Option<Mat>,
    },
    /// Switches off isolated actuators. `bound` defaults to `q1` for a partial
    /// estimator and to `q*` for a complete one.
    Switching {
        #[serde(default)]
        bound: Option<usize>,
    },
}

impl Default for InputPolicy {
    fn default() -> Self {
        InputPolicy::OpenLoop { signals: Vec::new() }
    }
}

/// Which multi-observer runs. Unset indices default to the plant's largest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorSpec {
    None,
    Complete {
        #[serde(default)]
        q: Option<usize>,
    },
    Partial {
        #[serde(default)]
        q1: Option<usize>,
        #[serde(default)]
        q2: Option<usize>,
    },
}

fn default_bank_cap() -> usize {
    DEFAULT_BANK_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub plant: PlantModel,
    #[serde(default)]
    pub x0: InitialState,
    /// Common initial estimate; zero when absent.
    #[serde(default)]
    pub x_hat0: Option<Vec<f64>>,
    #[serde(default)]
    pub input: InputPolicy,
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub attacks: Vec<AttackSignal>,
    /// Number of transitions; the trace holds `horizon + 1` samples.
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub isolation: IsolationPolicy,
    #[serde(default)]
    pub priority: Priority,
    #[serde(default = "default_bank_cap")]
    pub bank_cap: usize,
    #[serde(default)]
    pub infeasible_members: InfeasibleMembers,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid(format!("scenario: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let (n, n_u, n_y) = (self.plant.n(), self.plant.n_u(), self.plant.n_y());
        if self.horizon == 0 {
            return Err(invalid("horizon must be at least 1"));
        }
        self.tolerances.validate()?;
        self.isolation.validate()?;
        if self.bank_cap == 0 {
            return Err(invalid("bank cap must be at least 1"));
        }
        match &self.x0 {
            InitialState::Fixed { values } if values.len() != n || values.iter().any(|v| !v.is_finite()) => {
                return Err(invalid(format!("x0 must hold {n} finite values")));
            }
            InitialState::Gaussian { mean, std } if !(mean.is_finite() && std.is_finite() && *std >= 0.0) => {
                return Err(invalid("x0 gaussian parameters must be finite with std >= 0"));
            }
            _ => {}
        }
        if let Some(x) = &self.x_hat0 {
            if x.len() != n || x.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("x_hat0 must hold {n} finite values")));
            }
        }
        match &self.input {
            InputPolicy::OpenLoop { signals } => {
                check_channels(signals.iter().map(|s| (AttackTarget::Actuator, s)), n_u, n_y)?
            }
            InputPolicy::StaticFeedback { gain: Some(k) } if k.shape() != (n_u, n) => {
                return Err(invalid(format!("feedback gain must be {n_u}x{n}")));
            }
            InputPolicy::Switching { .. } if self.estimator == EstimatorSpec::None => {
                return Err(invalid("switching control needs an estimator to isolate actuators"));
            }
            _ => {}
        }
        check_channels(self.attacks.iter().map(|a| (a.target, &a.signal)), n_u, n_y)
    }

    /// Declared attack supports `(W_u, W_y)`.
    pub fn attack_supports(&self) -> (IndexSet, IndexSet) {
        let pick = |target| {
            self.attacks
                .iter()
                .filter(|a| a.target == target && a.signal.signal != Generator::Zero)
                .map(|a| a.signal.channel)
                .collect::<BTreeSet<_>>()
        };
        let n_u = self.plant.n_u();
        let n_y = self.plant.n_y();
        (
            IndexSet::new(pick(AttackTarget::Actuator), n_u).unwrap_or_else(|_| IndexSet::empty(n_u)),
            IndexSet::new(pick(AttackTarget::Sensor), n_y).unwrap_or_else(|_| IndexSet::empty(n_y)),
        )
    }
}

fn check_channels<'a>(
    signals: impl Iterator<Item = (AttackTarget, &'a ChannelSignal)>,
    n_u: usize,
    n_y: usize,
) -> Result<()> {
    let mut seen = BTreeSet::new();
    for (target, s) in signals {
        let limit = match target {
            AttackTarget::Actuator => n_u,
            AttackTarget::Sensor => n_y,
        };
        if s.channel == 0 || s.channel > limit {
            return Err(invalid(format!("{target:?} channel {} outside 1..={limit}", s.channel)));
        }
        if !seen.insert((target, s.channel)) {
            return Err(invalid(format!(
                "{target:?} channel {} has more than one signal",
                s.channel
            )));
        }
        s.signal.validate()?;
    }
    Ok(())
}
