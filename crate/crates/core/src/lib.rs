//! Unknown input multi-observer banks for discrete-time LTI plants under
//! false data injection on sensors and actuators.
//!
//! The plant is `x+ = A x + B (u + a_u)`, `y = C x + a_y`. A bank of unknown
//! input observers, each decoupled from a different subset of channels,
//! yields a selected state estimate that converges despite the attacks. From
//! it the attacks are reconstructed, attacked channels isolated, and the
//! plant stabilized by switching off isolated actuators.

pub mod attack;
pub mod control;
mod error;
mod index_set;
pub mod linalg;
pub mod observer;
mod plant;
pub mod presets;
pub mod serde_mat;
pub mod sim;
pub mod uio;

pub use attack::{AttackEstimate, Deisolation, IsolationPolicy, Isolator};
pub use control::{GainTable, LyapunovCertificate};
pub use error::{Error, Result};
pub use index_set::IndexSet;
pub use linalg::{Mat, Tolerances, Vector};
pub use observer::{ObserverBank, SelectionRecord};
pub use plant::{PlantDocument, PlantModel};
pub use sim::{Scenario, Summary, Trace};
pub use uio::{BankIndices, BankSpec, ObserverKey, Priority, UioDesign};
