//! Exact reference for one or two bath oscillators: the full system + bath
//! Schrödinger equation in a truncated Fock basis.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::bath::BathSpec;
use crate::dynamics::{InitialState, IntegratorConfig};
use crate::ensemble::{observables_from_density, ObservableSeries};
use crate::error::{Error, Result};
use crate::spectra::SystemSpectrum;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Relative change of the final energy tolerated when the Fock cutoff grows by 2.
pub const FOCK_CONVERGENCE_TOL: f64 = 1e-4;

/// Coupling `g q (a_λ + a_λ†)` stored as a list of `(row, col, value)`.
struct Coupling {
    entries: Vec<(usize, usize, f64)>,
}

struct ProductBasis {
    n_sys: usize,
    n_bath_states: usize,
    energies: Vec<f64>,
    coupling: Coupling,
}

impl ProductBasis {
    fn new(spectrum: &SystemSpectrum, bath: &BathSpec, fock_cut: usize) -> Self {
        let n_sys = spectrum.n_max();
        let modes = bath.len();
        let levels = fock_cut + 1;
        let n_bath_states = levels.pow(modes as u32);
        let occupation = |b: usize, l: usize| (b / levels.pow(l as u32)) % levels;
        let eps = spectrum.energies();
        let w = bath.frequencies();
        let mut energies = Vec::with_capacity(n_sys * n_bath_states);
        for e in eps {
            for b in 0..n_bath_states {
                let bath_e: f64 = (0..modes).map(|l| w[l] * occupation(b, l) as f64).sum();
                energies.push(e + bath_e);
            }
        }
        let q = spectrum.q_matrix();
        let mut entries = Vec::new();
        for r in 0..n_sys {
            for c in 0..n_sys {
                let qv = q[(r, c)];
                if qv == 0.0 {
                    continue;
                }
                for b in 0..n_bath_states {
                    for l in 0..modes {
                        let stride = levels.pow(l as u32);
                        let k = occupation(b, l);
                        // <b'| a_λ + a_λ† |b>
                        if k + 1 < levels {
                            let amp = ((k + 1) as f64).sqrt();
                            entries.push((r * n_bath_states + b + stride, c * n_bath_states + b, bath.coupling * qv * amp));
                        }
                        if k > 0 {
                            let amp = (k as f64).sqrt();
                            entries.push((r * n_bath_states + b - stride, c * n_bath_states + b, bath.coupling * qv * amp));
                        }
                    }
                }
            }
        }
        Self {
            n_sys,
            n_bath_states,
            energies,
            coupling: Coupling { entries },
        }
    }

    fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Interaction-picture derivative `ḋ = -i e^{iH₀t} V e^{-iH₀t} d`.
    fn rhs(&self, t: f64, d: &[Complex64], x: &mut [Complex64], out: &mut [Complex64]) {
        let phases: Vec<Complex64> = self
            .energies
            .iter()
            .map(|e| Complex64::from_polar(1.0, -e * t))
            .collect();
        for i in 0..d.len() {
            x[i] = phases[i] * d[i];
        }
        out.iter_mut().for_each(|o| *o = ZERO);
        for &(r, c, v) in &self.coupling.entries {
            out[r] += x[c] * v;
        }
        for i in 0..d.len() {
            out[i] = -I * phases[i].conj() * out[i];
        }
    }

    fn reduced_density(&self, t: f64, d: &[Complex64]) -> DMatrix<Complex64> {
        let psi: Vec<Complex64> = self
            .energies
            .iter()
            .zip(d)
            .map(|(e, d)| Complex64::from_polar(1.0, -e * t) * d)
            .collect();
        let nb = self.n_bath_states;
        DMatrix::from_fn(self.n_sys, self.n_sys, |n, m| {
            (0..nb)
                .map(|b| psi[n * nb + b] * psi[m * nb + b].conj())
                .sum()
        })
    }
}

fn evolve(
    init: &InitialState,
    bath: &BathSpec,
    spectrum: &SystemSpectrum,
    fock_cut: usize,
    cfg: &IntegratorConfig,
) -> (Vec<f64>, Vec<DMatrix<Complex64>>) {
    let basis = ProductBasis::new(spectrum, bath, fock_cut);
    let dim = basis.dim();
    let nb = basis.n_bath_states;
    // bath starts in its ground state
    let mut d = vec![ZERO; dim];
    for (n, c) in init.coefficients().iter().enumerate() {
        d[n * nb] = *c;
    }
    let dt = cfg.dt;
    let mut times = vec![0.0];
    let mut rhos = vec![basis.reduced_density(0.0, &d)];
    let mut k1 = vec![ZERO; dim];
    let mut k2 = vec![ZERO; dim];
    let mut k3 = vec![ZERO; dim];
    let mut k4 = vec![ZERO; dim];
    let mut tmp = vec![ZERO; dim];
    let mut x = vec![ZERO; dim];
    for step in 0..cfg.n_steps() {
        let t = step as f64 * dt;
        basis.rhs(t, &d, &mut x, &mut k1);
        for i in 0..dim {
            tmp[i] = d[i] + k1[i] * (0.5 * dt);
        }
        basis.rhs(t + 0.5 * dt, &tmp, &mut x, &mut k2);
        for i in 0..dim {
            tmp[i] = d[i] + k2[i] * (0.5 * dt);
        }
        basis.rhs(t + 0.5 * dt, &tmp, &mut x, &mut k3);
        for i in 0..dim {
            tmp[i] = d[i] + k3[i] * dt;
        }
        basis.rhs(t + dt, &tmp, &mut x, &mut k4);
        for i in 0..dim {
            d[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (dt / 6.0);
        }
        if (step + 1) % cfg.sample_stride == 0 {
            let ts = (step + 1) as f64 * dt;
            times.push(ts);
            rhos.push(basis.reduced_density(ts, &d));
        }
    }
    (times, rhos)
}

/// Exact system observables for a bath of at most two oscillators, obtained by
/// integrating the full conservative dynamics
/// `H = H_sys + Σ_λ g q (a_λ + a_λ†) + Σ_λ ω_λ a_λ† a_λ`
/// with every oscillator initially in its ground state.
///
/// The run is repeated with `fock_cut + 2` quanta per mode; if the final
/// energy moves by more than [`FOCK_CONVERGENCE_TOL`] (relative) the result is
/// rejected.
pub fn exact_small_bath_reference(
    init: &InitialState,
    bath: &BathSpec,
    spectrum: &SystemSpectrum,
    fock_cut: usize,
    cfg: &IntegratorConfig,
) -> Result<ObservableSeries> {
    cfg.validate()?;
    if bath.len() > 2 {
        return Err(Error::invalid(format!(
            "exact reference supports at most 2 bath modes, got {}",
            bath.len()
        )));
    }
    if fock_cut < 4 {
        return Err(Error::invalid("Fock cutoff must be at least 4"));
    }
    if init.n_max() != spectrum.n_max() {
        return Err(Error::invalid("initial state and spectrum disagree on n_max"));
    }
    let (times, rhos) = evolve(init, bath, spectrum, fock_cut, cfg);
    let coarse = observables_from_density(&times, &rhos, spectrum, cfg.normalization);
    if !bath.is_empty() {
        let (t2, r2) = evolve(init, bath, spectrum, fock_cut + 2, cfg);
        let fine = observables_from_density(&t2, &r2, spectrum, cfg.normalization);
        let (a, b) = (
            *coarse.energy.last().unwrap(),
            *fine.energy.last().unwrap(),
        );
        let change = (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
        if change > FOCK_CONVERGENCE_TOL {
            return Err(Error::NotConverged { change });
        }
    }
    Ok(coarse)
}
