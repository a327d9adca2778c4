//! Linear non-Markovian quantum state diffusion for a system particle coupled
//! to a finite bath of harmonic oscillators.
//!
//! The crate is organised bottom-up:
//!
//! - [`spectra`] builds the system eigenbasis (analytic harmonic oscillator,
//!   Numerov shooting for the Morse potential).
//! - [`bath`] holds the frozen bath frequencies, the driving noise, the memory
//!   kernel and the closed-form memory operator.
//! - [`dynamics`] integrates the coefficient equation for one noise
//!   realization and provides an exact full-Hilbert-space reference for tiny
//!   baths.
//! - [`ensemble`] averages many realizations into observables.
//! - [`fitting`] extracts exponential / power-law regimes from the averages.
//! - [`config`] parses and serializes experiment descriptions.
//!
//! Units: ħ = 1 throughout.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bath;
pub mod config;
pub mod dynamics;
pub mod ensemble;
mod error;
pub mod fitting;
pub mod linalg;
#[cfg(test)]
mod proptests;
pub mod spectra;

pub use num_complex::Complex64;

pub use bath::{BathSpec, MemoryTable, NoiseRealization};
pub use config::{ExperimentConfig, InitialChoice};
pub use dynamics::{
    InitialState, IntegratorConfig, NormalizationPolicy, TrajectorySeries, TrajectoryState,
};
pub use ensemble::{EnsembleConfig, ObservableSeries, ReducedDensity};
pub use error::{Error, Result};
pub use fitting::{FitModel, FitResult, RegimeSegmentation};
pub use spectra::{PotentialKind, PotentialSpec, Provenance, SystemSpectrum};
