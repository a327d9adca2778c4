//! Ensemble averages over noise realizations.
//!
//! The reduced density matrix is the average of the raw outer products
//! `c c†`; every observable is read off it. Realizations are integrated in
//! parallel but summed in realization order, so results do not depend on the
//! number of threads.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::bath::{BathSpec, NoiseRealization};
use crate::dynamics::{InitialState, IntegratorConfig, NormalizationPolicy, Propagator};
use crate::error::{Error, Result};
use crate::spectra::SystemSpectrum;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnsembleConfig {
    pub n_realizations: usize,
    pub master_seed: u64,
    /// Worker threads; `None` uses rayon's global pool.
    pub parallel_degree: Option<usize>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_realizations: 500,
            master_seed: 1,
            parallel_degree: None,
        }
    }
}

/// Ensemble-averaged observables on the sample grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub position: Vec<f64>,
    /// Present when the spectrum carries momentum matrix elements.
    pub momentum: Option<Vec<f64>>,
    /// `M[|c_n|²] ε_n`, indexed `[time][level]`.
    pub level_energies: Vec<Vec<f64>>,
    pub trace: Vec<f64>,
    /// `Σ |ρ_nm|²` of the raw averaged density matrix.
    pub purity: Vec<f64>,
    /// `purity / trace²`
    pub purity_normalized: Vec<f64>,
    /// Standard error of the energy average (zero for a single realization
    /// or for deterministic series).
    pub energy_stderr: Vec<f64>,
}

impl ObservableSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// `ρ(t) = M[c c†]` at each sample time.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedDensity {
    pub times: Vec<f64>,
    pub rho: Vec<DMatrix<Complex64>>,
}

/// `Σ_n |c_n|² ε_n`, optionally divided by `Σ|c_n|²`.
pub fn energy_expectation(c: &[Complex64], spectrum: &SystemSpectrum, policy: NormalizationPolicy) -> f64 {
    let e: f64 = c
        .iter()
        .zip(spectrum.energies())
        .map(|(c, e)| c.norm_sqr() * e)
        .sum();
    match policy {
        NormalizationPolicy::Raw => e,
        NormalizationPolicy::TraceNormalized => e / c.iter().map(|c| c.norm_sqr()).sum::<f64>(),
    }
}

/// `Σ_nm c_n* c_m q_nm`
pub fn position_expectation(c: &[Complex64], spectrum: &SystemSpectrum) -> f64 {
    let q = spectrum.q_matrix();
    let mut acc = Complex64::new(0.0, 0.0);
    for (n, cn) in c.iter().enumerate() {
        for (m, cm) in c.iter().enumerate() {
            let v = q[(n, m)];
            if v != 0.0 {
                acc += cn.conj() * cm * v;
            }
        }
    }
    acc.re
}

/// `Σ_nm c_n* c_m p_nm`, if the spectrum has momentum elements.
pub fn momentum_expectation(c: &[Complex64], spectrum: &SystemSpectrum) -> Option<f64> {
    let p = spectrum.p_matrix()?;
    let mut acc = Complex64::new(0.0, 0.0);
    for (n, cn) in c.iter().enumerate() {
        for (m, cm) in c.iter().enumerate() {
            acc += cn.conj() * cm * p[(n, m)];
        }
    }
    Some(acc.re)
}

/// `Σ_nm ρ_nm ρ_mn`
pub fn purity(rho: &DMatrix<Complex64>) -> f64 {
    let n = rho.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for a in 0..n {
        for b in 0..n {
            acc += rho[(a, b)] * rho[(b, a)];
        }
    }
    acc.re
}

/// `M[|c_n(t)|²] ε_n` for every sample and level.
pub fn level_energy_series(rho: &ReducedDensity, spectrum: &SystemSpectrum) -> Vec<Vec<f64>> {
    rho.rho
        .iter()
        .map(|r| {
            spectrum
                .energies()
                .iter()
                .enumerate()
                .map(|(n, e)| r[(n, n)].re * e)
                .collect()
        })
        .collect()
}

fn trace(rho: &DMatrix<Complex64>) -> f64 {
    rho.diagonal().iter().map(|c| c.re).sum()
}

fn operator_average(rho: &DMatrix<Complex64>, op: &DMatrix<Complex64>) -> f64 {
    // Tr(ρ A) = Σ_nm ρ_nm A_mn
    let n = rho.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for a in 0..n {
        for b in 0..n {
            acc += rho[(a, b)] * op[(b, a)];
        }
    }
    acc.re
}

/// Observables from a density-matrix series.
pub fn observables_from_density(
    times: &[f64],
    rhos: &[DMatrix<Complex64>],
    spectrum: &SystemSpectrum,
    policy: NormalizationPolicy,
) -> ObservableSeries {
    let q = spectrum.q_matrix().map(|x| Complex64::new(x, 0.0));
    let p = spectrum.p_matrix();
    let eps = spectrum.energies();
    let mut out = ObservableSeries {
        times: times.to_vec(),
        energy: Vec::with_capacity(rhos.len()),
        position: Vec::with_capacity(rhos.len()),
        momentum: p.map(|_| Vec::with_capacity(rhos.len())),
        level_energies: Vec::with_capacity(rhos.len()),
        trace: Vec::with_capacity(rhos.len()),
        purity: Vec::with_capacity(rhos.len()),
        purity_normalized: Vec::with_capacity(rhos.len()),
        energy_stderr: vec![0.0; rhos.len()],
    };
    for rho in rhos {
        let tr = trace(rho);
        let scale = match policy {
            NormalizationPolicy::Raw => 1.0,
            NormalizationPolicy::TraceNormalized => 1.0 / tr,
        };
        let levels: Vec<f64> = eps
            .iter()
            .enumerate()
            .map(|(n, e)| rho[(n, n)].re * e)
            .collect();
        out.energy.push(levels.iter().sum::<f64>() * scale);
        out.level_energies.push(levels);
        out.position.push(operator_average(rho, &q) * scale);
        if let (Some(m), Some(p)) = (out.momentum.as_mut(), p) {
            m.push(operator_average(rho, p) * scale);
        }
        let pur = purity(rho);
        out.trace.push(tr);
        out.purity.push(pur);
        out.purity_normalized.push(pur / (tr * tr));
    }
    out
}

/// Integrates `n_realizations` trajectories and averages them.
pub fn run_ensemble(
    init: &InitialState,
    bath: &BathSpec,
    spectrum: &SystemSpectrum,
    integrator: &IntegratorConfig,
    ensemble: &EnsembleConfig,
) -> Result<(ObservableSeries, ReducedDensity)> {
    if ensemble.n_realizations == 0 {
        return Err(Error::invalid("need at least one realization"));
    }
    let noises: Vec<NoiseRealization> = (0..ensemble.n_realizations as u64)
        .map(|k| NoiseRealization::draw(bath.len(), ensemble.master_seed, k))
        .collect();
    let prop = Propagator::new(spectrum, bath, *integrator)?;
    let times = integrator.sample_times();
    let n = spectrum.n_max();
    let zero = Complex64::new(0.0, 0.0);
    let mut rho_sum = vec![DMatrix::from_element(n, n, zero); times.len()];
    let mut e_sum = vec![0.0; times.len()];
    let mut e_sq = vec![0.0; times.len()];

    let mut drive = || {
        prop.run(init.coefficients(), &noises, |k, _t, _r, c| {
            let rho = &mut rho_sum[k];
            for b in 0..n {
                let cb = c[b].conj();
                for a in 0..n {
                    rho[(a, b)] += c[a] * cb;
                }
            }
            let e = energy_expectation(c, spectrum, NormalizationPolicy::Raw);
            e_sum[k] += e;
            e_sq[k] += e * e;
        })
    };
    match ensemble.parallel_degree {
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            pool.install(drive)?;
        }
        None => drive()?,
    }

    let r = ensemble.n_realizations as f64;
    let rho: Vec<DMatrix<Complex64>> = rho_sum.into_iter().map(|m| m / Complex64::new(r, 0.0)).collect();
    let mut obs = observables_from_density(&times, &rho, spectrum, integrator.normalization);
    if ensemble.n_realizations > 1 {
        obs.energy_stderr = e_sum
            .iter()
            .zip(&e_sq)
            .map(|(s, sq)| {
                let mean = s / r;
                let var = (sq / r - mean * mean).max(0.0) * r / (r - 1.0);
                (var / r).sqrt()
            })
            .collect();
    }
    Ok((obs, ReducedDensity { times, rho }))
}
