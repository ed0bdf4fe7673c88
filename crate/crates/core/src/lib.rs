//! Open-system optimal control of a driven atom–cavity–mechanical-oscillator
//! system.
//!
//! The crate builds the transformed-frame model from device constants,
//! vectorizes its Lindblad master equation into a bilinear control system,
//! optimizes piecewise-constant control pulses with projected BFGS and
//! evaluates the resulting states (fidelity, Wigner negativity, logarithmic
//! negativity) against a three-segment π-pulse baseline.

pub mod analysis;
pub mod baseline;
pub mod bfgs;
pub mod dynamics;
pub mod error;
pub mod hilbert;
pub mod linalg;
pub mod liouville;
pub mod model;
pub mod optimize;
pub mod problem;
pub mod reference;
pub mod sparse;
pub mod units;

pub use error::{Error, Result};
pub use hilbert::{Operator, SpaceSpec, Subsystem};
pub use linalg::{CMatrix, CVector, C64};
pub use model::{FrameParams, PhysicalParams, ThermalParams};
