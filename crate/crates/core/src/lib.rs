//! Design and simulation of unambiguous-state-discrimination (USD) mode
//! sorters built from multi-plane light converters.
//!
//! * [`optics`]: grids, sampled fields, Hermite-Gauss modes and spots.
//! * [`propagation`]: angular-spectrum free-space propagation.
//! * [`usd`]: symmetric state sets and their USD measurement.
//! * [`mplc`]: phase-mask stacks and wavefront-matching training.
//! * [`experiment`]: end-to-end virtual experiments and data processing.

pub mod error;
pub mod experiment;
mod fft;
pub mod mplc;
pub mod optics;
pub mod outcome;
pub mod propagation;
mod serde_c64;
pub mod usd;

pub use error::{Error, Result};
pub use mplc::{MplcSystem, WfmOptions, WfmReport};
pub use optics::{Field, Grid, ModeBasis, StateVec, C64};
pub use outcome::OutcomeMatrix;
pub use usd::{SymmetricStateSet, UsdMeasurement};
