//! Coefficient dynamics for one noise realization.
//!
//! In the eigenbasis of the system Hamiltonian the linear stochastic equation
//! reads
//!
//! ```text
//! ċ_n = -i ε_n c_n - i A(t) Σ q_nm q_mm' c_m' + z*_t Σ q_nm c_m - Σ q_nm Ō_mm'(t) c_m'
//! ```
//!
//! [`derivative`] evaluates it literally. The integrator removes the free
//! phases first (`c_n = exp(-i ε_n t) d_n`) and applies classic RK4 to `d`,
//! which makes free evolution exact and leaves only the weak bath terms to the
//! stepper.

mod propagator;
mod reference;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::bath::{counterterm, noise_value, BathSpec, MemoryTable, NoiseRealization};
use crate::error::{Error, Result};
use crate::spectra::SystemSpectrum;

pub use propagator::{Propagator, OVERFLOW_LIMIT};
pub use reference::exact_small_bath_reference;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalizationPolicy {
    /// Observables from the unnormalised coefficients.
    #[default]
    Raw,
    /// Observables divided by the trace of the averaged density matrix.
    TraceNormalized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_max: f64,
    /// Store every `sample_stride`-th step.
    pub sample_stride: usize,
    pub normalization: NormalizationPolicy,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_max: 500.0,
            sample_stride: 10,
            normalization: NormalizationPolicy::Raw,
        }
    }
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_max: f64, sample_stride: usize) -> Result<Self> {
        let cfg = Self {
            dt,
            t_max,
            sample_stride,
            normalization: NormalizationPolicy::Raw,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_max >= 0.0) {
            return Err(Error::invalid("dt must be positive and t_max non-negative"));
        }
        if self.sample_stride == 0 {
            return Err(Error::invalid("sample_stride must be at least 1"));
        }
        let steps = self.t_max / self.dt;
        if (steps - steps.round()).abs() > 1e-6 * steps.max(1.0) {
            return Err(Error::invalid(format!(
                "t_max = {} is not a whole number of steps of {}",
                self.t_max, self.dt
            )));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    /// Times at which states are stored.
    pub fn sample_times(&self) -> Vec<f64> {
        (0..=self.n_steps())
            .step_by(self.sample_stride)
            .map(|s| s as f64 * self.dt)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    pub t: f64,
    pub c: Vec<Complex64>,
}

impl TrajectoryState {
    pub fn norm_sqr(&self) -> f64 {
        self.c.iter().map(|x| x.norm_sqr()).sum()
    }
}

/// Sampled coefficient vectors of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySeries {
    pub states: Vec<TrajectoryState>,
}

impl TrajectorySeries {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    /// `Σ|c_n|²` per sample; the linear equation lets it drift.
    pub fn norms(&self) -> Vec<f64> {
        self.states.iter().map(TrajectoryState::norm_sqr).collect()
    }

    pub fn last(&self) -> &TrajectoryState {
        self.states.last().expect("series always holds the initial state")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialKind {
    /// `c_n = 1/√n_max` for every level.
    UniformEntangled,
    /// Real Gaussian in the level index, `exp(-(n - center)² / σ²)`, restricted
    /// to the one-based window `lo..=hi`.
    GaussianPacket {
        center: f64,
        sigma: f64,
        window: (usize, usize),
    },
}

impl InitialKind {
    /// Packet centred on level 16 with σ = 3 over levels 9..=23.
    pub fn morse_packet() -> Self {
        InitialKind::GaussianPacket {
            center: 16.0,
            sigma: 3.0,
            window: (9, 23),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub kind: InitialKind,
    pub(crate) coefficients: Vec<Complex64>,
}

impl InitialState {
    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn n_max(&self) -> usize {
        self.coefficients.len()
    }

    /// Same state multiplied by a complex constant. Only meaningful for
    /// linearity checks; the result is not normalised.
    pub fn scaled(&self, alpha: Complex64) -> Self {
        Self {
            kind: self.kind,
            coefficients: self.coefficients.iter().map(|c| c * alpha).collect(),
        }
    }

    /// Arbitrary normalised coefficients.
    pub fn from_coefficients(kind: InitialKind, mut c: Vec<Complex64>) -> Result<Self> {
        let norm: f64 = c.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if c.is_empty() || !(norm > 0.0) {
            return Err(Error::invalid("initial state must be nonzero"));
        }
        c.iter_mut().for_each(|x| *x /= norm);
        Ok(Self {
            kind,
            coefficients: c,
        })
    }
}

pub fn initial_state(kind: InitialKind, n_max: usize) -> Result<InitialState> {
    if n_max == 0 {
        return Err(Error::invalid("n_max must be at least 1"));
    }
    let coefficients = match kind {
        InitialKind::UniformEntangled => {
            vec![Complex64::new(1.0 / (n_max as f64).sqrt(), 0.0); n_max]
        }
        InitialKind::GaussianPacket {
            center,
            sigma,
            window: (lo, hi),
        } => {
            if lo == 0 || lo > hi || hi > n_max {
                return Err(Error::invalid(format!(
                    "packet window {lo}..={hi} is empty or outside 1..={n_max}"
                )));
            }
            if !(sigma > 0.0) {
                return Err(Error::invalid("packet width must be positive"));
            }
            let mut c = vec![Complex64::new(0.0, 0.0); n_max];
            for n in lo..=hi {
                let x = (n as f64 - center) / sigma;
                c[n - 1] = Complex64::new((-x * x).exp(), 0.0);
            }
            let norm = c.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            c.iter_mut().for_each(|x| *x /= norm);
            c
        }
    };
    Ok(InitialState {
        kind,
        coefficients,
    })
}

/// Right-hand side of the coefficient equation at time `t`, evaluated directly
/// from its definition.
pub fn derivative(
    state: &TrajectoryState,
    bath: &BathSpec,
    spectrum: &SystemSpectrum,
    noise: &NoiseRealization,
    t: f64,
) -> Vec<Complex64> {
    let n = spectrum.n_max();
    assert_eq!(state.c.len(), n, "state length must match the spectrum");
    let c = nalgebra::DVector::from_column_slice(&state.c);
    let q: DMatrix<Complex64> = spectrum.q_matrix().map(|x| Complex64::new(x, 0.0));
    let qc = &q * &c;
    let eps = spectrum.energies();
    let mut out: Vec<Complex64> = (0..n).map(|k| -I * eps[k] * state.c[k]).collect();
    if bath.is_empty() {
        return out;
    }
    let a = counterterm(bath, t);
    let z = noise_value(noise, bath, t);
    let qqc = &q * &qc;
    let obar = MemoryTable::new(bath, spectrum).obar_matrix(t);
    let memory = &q * (&obar * &c);
    for k in 0..n {
        out[k] += -I * a * qqc[k] + z * qc[k] - memory[k];
    }
    out
}

/// Integrates one realization with RK4 and returns the sampled states.
pub fn integrate_trajectory(
    init: &InitialState,
    bath: &BathSpec,
    spectrum: &SystemSpectrum,
    noise: &NoiseRealization,
    cfg: &IntegratorConfig,
) -> Result<TrajectorySeries> {
    let prop = Propagator::new(spectrum, bath, *cfg)?;
    let mut states = Vec::with_capacity(cfg.sample_times().len());
    prop.run(
        init.coefficients(),
        std::slice::from_ref(noise),
        |_, t, _, c| {
            states.push(TrajectoryState { t, c: c.to_vec() });
        },
    )?;
    Ok(TrajectorySeries { states })
}

#[cfg(test)]
mod tests;
