//! Finite discrete bath of harmonic oscillators at zero temperature.
//!
//! Frequencies are drawn once and frozen; each noise realization only redraws
//! the Gaussian pairs `(x_λ, y_λ)`. The memory operator has a closed form per
//! energy gap of the system, which [`MemoryTable`] evaluates once per gap.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::spectra::SystemSpectrum;

/// Below this `|θ|` the memory factor switches to its Taylor series.
pub const THETA_TOL: f64 = 1e-6;

/// Two gaps closer than this (relative) share one table entry.
const GAP_MERGE_TOL: f64 = 1e-12;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct BathSpec {
    /// Spectral exponent `s` of `J(ω) ∝ ω^s`.
    pub spectral_exponent: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    /// Uniform coupling `g_λ = g`.
    pub coupling: f64,
    pub frequency_seed: u64,
    frequencies: Vec<f64>,
}

impl BathSpec {
    /// Samples `n` frozen frequencies from the `ω^(s+1)` density.
    pub fn sampled(
        n: usize,
        spectral_exponent: f64,
        omega_window: (f64, f64),
        coupling: f64,
        frequency_seed: u64,
    ) -> Result<Self> {
        check_coupling(coupling)?;
        let frequencies = sample_frequencies(
            n,
            spectral_exponent,
            omega_window.0,
            omega_window.1,
            frequency_seed,
        )?;
        Ok(Self {
            spectral_exponent,
            omega_min: omega_window.0,
            omega_max: omega_window.1,
            coupling,
            frequency_seed,
            frequencies,
        })
    }

    /// Bath with explicitly pinned frequencies. The window is widened to
    /// contain them if necessary.
    pub fn with_frequencies(frequencies: Vec<f64>, coupling: f64) -> Result<Self> {
        check_coupling(coupling)?;
        if frequencies.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("bath frequencies must be positive"));
        }
        let lo = frequencies.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = frequencies.iter().cloned().fold(0.0, f64::max);
        Ok(Self {
            spectral_exponent: 1.0,
            omega_min: if lo.is_finite() { lo * (1.0 - 1e-12) } else { 1.1 },
            omega_max: if hi > 0.0 { hi * (1.0 + 1e-12) } else { 2.1 },
            coupling,
            frequency_seed: 0,
            frequencies,
        })
    }

    /// The isolated system: no oscillators.
    pub fn empty() -> Self {
        Self {
            spectral_exponent: 1.0,
            omega_min: 1.1,
            omega_max: 2.1,
            coupling: 0.0,
            frequency_seed: 0,
            frequencies: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn g_squared(&self) -> f64 {
        self.coupling * self.coupling
    }
}

fn check_coupling(g: f64) -> Result<()> {
    if g > 0.0 && g.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("coupling must be positive, got {g}")))
    }
}

/// Draws `n` frequencies with density `∝ ω^(s+1)` on `(omega_min, omega_max)`
/// by inverting the CDF. Returned sorted ascending.
pub fn sample_frequencies(
    n: usize,
    s: f64,
    omega_min: f64,
    omega_max: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(0.0..=2.0).contains(&s) {
        return Err(Error::invalid(format!(
            "spectral exponent must lie in [0, 2], got {s}"
        )));
    }
    if !(omega_min > 0.0 && omega_min < omega_max) {
        return Err(Error::invalid(format!(
            "frequency window ({omega_min}, {omega_max}) is invalid"
        )));
    }
    let p = s + 2.0;
    let lo = omega_min.powf(p);
    let hi = omega_max.powf(p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let u: f64 = rng.random();
        let w = (lo + u * (hi - lo)).powf(1.0 / p);
        if w > omega_min && w < omega_max {
            out.push(w);
        }
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Gaussian pairs `(x_λ, y_λ)` of one realization of the driving noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    pub pairs: Vec<(f64, f64)>,
    pub realization_seed: u64,
}

impl NoiseRealization {
    /// Realization `index` of the ensemble seeded by `master_seed`.
    ///
    /// Each index gets its own ChaCha stream, so any realization can be
    /// regenerated on its own.
    pub fn draw(n: usize, master_seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(index);
        let pairs = (0..n)
            .map(|_| {
                let x: f64 = rng.sample(StandardNormal);
                let y: f64 = rng.sample(StandardNormal);
                (x, y)
            })
            .collect();
        Self {
            pairs,
            realization_seed: index,
        }
    }

    /// `z*_λ = (x_λ + i y_λ) / √2`
    pub fn z_conj(&self, lambda: usize) -> Complex64 {
        let (x, y) = self.pairs[lambda];
        Complex64::new(x, y) * FRAC_1_SQRT_2
    }
}

/// `z*_t = -i Σ_λ g z*_λ exp(i ω_λ t)`
pub fn noise_value(noise: &NoiseRealization, bath: &BathSpec, t: f64) -> Complex64 {
    let sum: Complex64 = bath
        .frequencies
        .iter()
        .enumerate()
        .map(|(l, w)| noise.z_conj(l) * Complex64::from_polar(1.0, w * t))
        .sum();
    -I * bath.coupling * sum
}

/// Zero-temperature memory kernel `K(τ) = Σ_λ g² exp(-i ω_λ τ)`.
pub fn kernel(bath: &BathSpec, tau: f64) -> Complex64 {
    let g2 = bath.g_squared();
    bath.frequencies
        .iter()
        .map(|w| Complex64::from_polar(g2, -w * tau))
        .sum()
}

/// Counterterm `A(t) = Σ_λ (g² / ω_λ)(cos ω_λ t - 1)`.
pub fn counterterm(bath: &BathSpec, t: f64) -> f64 {
    let g2 = bath.g_squared();
    bath.frequencies
        .iter()
        .map(|w| g2 / w * ((w * t).cos() - 1.0))
        .sum()
}

/// `(exp(-iθt) - 1) / (-iθ)`, the time integral of `exp(-iθτ)` over `[0, t]`.
///
/// Written with half-angle identities so there is no cancellation; the series
/// branch handles the removable singularity at `θ = 0`.
#[inline]
pub fn memory_factor(theta: f64, t: f64) -> Complex64 {
    if theta.abs() < THETA_TOL {
        memory_factor_series(theta, t)
    } else {
        memory_factor_direct(theta, t)
    }
}

#[inline]
pub fn memory_factor_direct(theta: f64, t: f64) -> Complex64 {
    let x = theta * t;
    let half = (0.5 * x).sin();
    Complex64::new(x.sin() / theta, -2.0 * half * half / theta)
}

#[inline]
pub fn memory_factor_series(theta: f64, t: f64) -> Complex64 {
    let x = theta * t;
    let x2 = x * x;
    t * Complex64::new(1.0 - x2 / 6.0, -0.5 * x + x2 * x / 24.0)
}

/// One matrix element `Ō_{mm'}(t)` evaluated straight from its closed form.
/// `m` and `m_prime` are zero-based.
pub fn obar_element(
    bath: &BathSpec,
    spectrum: &SystemSpectrum,
    m: usize,
    m_prime: usize,
    t: f64,
) -> Complex64 {
    let q = spectrum.q_matrix()[(m, m_prime)];
    if q == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let e = spectrum.energies();
    let gap = e[m] - e[m_prime];
    let g2 = bath.g_squared();
    let sum: Complex64 = bath
        .frequencies
        .iter()
        .map(|w| memory_factor(w + gap, t))
        .sum();
    sum * (q * g2)
}

/// Shifted denominators `θ_λ = ω_λ + Δ` for every distinct energy gap `Δ`.
///
/// The memory operator depends on `(m, m')` only through `q_{mm'}` and the gap
/// `ε_m - ε_{m'}`, so one sum over the bath per gap and time serves all pairs.
#[derive(Debug, Clone)]
pub struct MemoryTable {
    gaps: Vec<f64>,
    /// `gap_index[(m, m')]` indexes `gaps`.
    gap_index: DMatrix<usize>,
    /// Gaps reached by at least one nonzero `q_{mm'}`.
    active: Vec<bool>,
    thetas: Vec<Vec<f64>>,
    small: Vec<Vec<bool>>,
    /// `g² / (-iθ_λ)` per gap and mode, zero where `θ_λ` is small.
    weights: Vec<Vec<Complex64>>,
    q: DMatrix<f64>,
    frequencies: Vec<f64>,
    g2: f64,
}

impl MemoryTable {
    pub fn new(bath: &BathSpec, spectrum: &SystemSpectrum) -> Self {
        let e = spectrum.energies();
        let n = e.len();
        let mut raw: Vec<f64> = Vec::with_capacity(n * n);
        for a in e {
            for b in e {
                raw.push(a - b);
            }
        }
        raw.sort_by(f64::total_cmp);
        let scale = e.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
        let mut gaps: Vec<f64> = Vec::new();
        for d in raw {
            match gaps.last() {
                Some(&last) if (d - last).abs() <= GAP_MERGE_TOL * scale => {}
                _ => gaps.push(d),
            }
        }
        let lookup = |d: f64| -> usize {
            let i = gaps.partition_point(|&g| g < d - GAP_MERGE_TOL * scale);
            i.min(gaps.len() - 1)
        };
        let gap_index = DMatrix::from_fn(n, n, |r, c| lookup(e[r] - e[c]));
        let q = spectrum.q_matrix().clone();
        let mut active = vec![false; gaps.len()];
        for r in 0..n {
            for c in 0..n {
                if q[(r, c)] != 0.0 {
                    active[gap_index[(r, c)]] = true;
                }
            }
        }
        let g2 = bath.g_squared();
        let frequencies = bath.frequencies().to_vec();
        let thetas: Vec<Vec<f64>> = gaps
            .iter()
            .map(|d| frequencies.iter().map(|w| w + d).collect())
            .collect();
        let small: Vec<Vec<bool>> = thetas
            .iter()
            .map(|row| row.iter().map(|th| th.abs() < THETA_TOL).collect())
            .collect();
        let weights = thetas
            .iter()
            .zip(&small)
            .map(|(row, flags)| {
                row.iter()
                    .zip(flags)
                    .map(|(th, &s)| {
                        if s {
                            Complex64::new(0.0, 0.0)
                        } else {
                            I * (g2 / th)
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            gaps,
            gap_index,
            active,
            thetas,
            small,
            weights,
            q,
            frequencies,
            g2,
        }
    }

    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    pub fn gap_count(&self) -> usize {
        self.gaps.len()
    }

    pub(crate) fn gap_index_of(&self, m: usize, m_prime: usize) -> usize {
        self.gap_index[(m, m_prime)]
    }

    pub fn thetas(&self, gap: usize) -> &[f64] {
        &self.thetas[gap]
    }

    pub fn small_flags(&self, gap: usize) -> &[bool] {
        &self.small[gap]
    }

    /// `Σ_λ g² (exp(-iθ_λ t) - 1)/(-iθ_λ)` for every gap (zero for inactive ones).
    ///
    /// Uses `exp(-iθ_λ t) = exp(-iω_λ t) exp(-iΔ t)` so the bath phases are
    /// computed once per time instead of once per gap.
    pub fn gap_sums(&self, t: f64) -> Vec<Complex64> {
        let phases: Vec<Complex64> = self
            .frequencies
            .iter()
            .map(|w| Complex64::from_polar(1.0, -w * t))
            .collect();
        self.gap_sums_with_phases(t, &phases)
    }

    pub(crate) fn gap_sums_with_phases(&self, t: f64, bath_phases: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.gaps.len()];
        for (k, gap) in self.gaps.iter().enumerate() {
            if !self.active[k] {
                continue;
            }
            let shift = Complex64::from_polar(1.0, -gap * t);
            let mut acc = Complex64::new(0.0, 0.0);
            for (l, &w) in self.weights[k].iter().enumerate() {
                if self.small[k][l] {
                    acc += memory_factor_series(self.thetas[k][l], t) * self.g2;
                } else {
                    acc += w * (bath_phases[l] * shift - 1.0);
                }
            }
            out[k] = acc;
        }
        out
    }

    /// Full `Ō(t)` matrix, zero-based indices.
    pub fn obar_matrix(&self, t: f64) -> DMatrix<Complex64> {
        let sums = self.gap_sums(t);
        let n = self.q.nrows();
        DMatrix::from_fn(n, n, |r, c| sums[self.gap_index[(r, c)]] * self.q[(r, c)])
    }

    /// Single element via the shared per-gap sums.
    pub fn obar_element(&self, m: usize, m_prime: usize, t: f64) -> Complex64 {
        let q = self.q[(m, m_prime)];
        if q == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        self.gap_sums(t)[self.gap_index[(m, m_prime)]] * q
    }
}
