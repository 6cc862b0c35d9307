//! Pulse-level simulation of deterministic trapped-ion teleportation and the
//! tomography toolkit used to characterize the resulting qubit channel.
//!
//! The crate is organized bottom-up:
//!
//! - [`quantum`]: complex linear algebra and qubit/qudit state primitives.
//! - [`trap`]: three-level ions coupled to one truncated motional mode, with
//!   carrier, blue-sideband and hide pulses and projective fluorescence
//!   detection.
//! - [`noise`]: quasi-static dephasing, pulse-area errors, depolarizing and
//!   detection errors.
//! - [`protocol`]: the 35-step teleportation pulse sequence, shot-by-shot and
//!   exact (infinite statistics) execution, fidelity estimation and phase
//!   calibration.
//! - [`tomography`]: maximum-likelihood state and process reconstruction,
//!   fidelity metrics and the affine Bloch-sphere decomposition.
//!
//! The computational basis convention used everywhere is `|0> = |S>`,
//! `|1> = |D>`, with `|S>` at the north pole of the Bloch sphere. See
//! `docs/CONVENTIONS.md` for the rotation and phase conventions.

pub mod error;
pub mod noise;
pub mod protocol;
pub mod quadrature;
pub mod quantum;
pub mod tomography;
pub mod trap;

pub use error::{Error, Result};
pub use noise::{NoiseConfig, PulseDurations, ShotNoise};
pub use protocol::{
    FidelityEstimate, FidelityMode, InputStateSpec, ProtocolOptions, SequenceMode, SequenceStep,
    ShotRecord,
};
pub use quantum::{ComplexMatrix, DensityMatrix, PureState, C64};
pub use tomography::{AffineMap, Basis, CountsTable, ProcessMatrix};
pub use trap::{IonLevel, Outcome, Pulse, RegisterDims, TrapRegister};
