//! Per-channel signal generators with portable, seeded random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Stream offsets inside the scenario seed. Every random signal draws from its
/// own ChaCha8 stream, so adding a channel never perturbs the others.
pub(crate) const STREAM_INITIAL_STATE: u64 = 0;
pub(crate) const STREAM_INPUT: u64 = 1_000;
pub(crate) const STREAM_ACTUATOR_ATTACK: u64 = 2_000;
pub(crate) const STREAM_SENSOR_ATTACK: u64 = 3_000;

pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Zero,
    Constant {
        value: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    Gaussian {
        mean: f64,
        std: f64,
    },
    /// `value` at step `step`, zero elsewhere.
    Impulse {
        step: usize,
        value: f64,
    },
    /// Explicit samples from `k = 0`; zero past the end.
    Samples {
        values: Vec<f64>,
    },
}

impl Generator {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64| v.is_finite();
        let ok = match self {
            Generator::Zero => true,
            Generator::Constant { value } | Generator::Impulse { value, .. } => finite(*value),
            Generator::Uniform { low, high } => finite(*low) && finite(*high) && low < high,
            Generator::Gaussian { mean, std } => finite(*mean) && finite(*std) && *std >= 0.0,
            Generator::Samples { values } => values.iter().all(|v| v.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid generator parameters: {self:?}")))
        }
    }

    fn is_random(&self) -> bool {
        matches!(self, Generator::Uniform { .. } | Generator::Gaussian { .. })
    }
}

/// A running generator. Random generators draw exactly one sample per step,
/// including steps before `active_from`, so a channel's realization does not
/// depend on when it becomes active.
#[derive(Debug, Clone)]
pub struct SignalSource {
    generator: Generator,
    active_from: usize,
    rng: Option<ChaCha8Rng>,
}

impl SignalSource {
    pub fn new(generator: Generator, active_from: usize, seed: u64, stream_id: u64) -> Result<Self> {
        generator.validate()?;
        let rng = generator.is_random().then(|| stream(seed, stream_id));
        Ok(Self {
            generator,
            active_from,
            rng,
        })
    }

    /// Sample for step `k`; must be called once per step in increasing order.
    pub fn sample(&mut self, k: usize) -> f64 {
        let raw = match (&self.generator, self.rng.as_mut()) {
            (Generator::Uniform { low, high }, Some(rng)) => {
                Uniform::new(*low, *high).expect("validated bounds").sample(rng)
            }
            (Generator::Gaussian { mean, std }, Some(rng)) => {
                Normal::new(*mean, *std).expect("validated std").sample(rng)
            }
            (Generator::Zero, _) => 0.0,
            (Generator::Constant { value }, _) => *value,
            (Generator::Impulse { step, value }, _) => {
                if k == *step {
                    *value
                } else {
                    0.0
                }
            }
            (Generator::Samples { values }, _) => values.get(k).copied().unwrap_or(0.0),
            _ => unreachable!("random generators always own a stream"),
        };
        if k >= self.active_from {
            raw
        } else {
            0.0
        }
    }
}
