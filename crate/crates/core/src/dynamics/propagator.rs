use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::bath::{counterterm, BathSpec, MemoryTable, NoiseRealization};
use crate::dynamics::IntegratorConfig;
use crate::error::{Error, Result};
use crate::linalg::SparsityPattern;
use crate::spectra::SystemSpectrum;

/// Any `|c_n|` above this aborts the trajectory.
pub const OVERFLOW_LIMIT: f64 = 1e6;

/// Budget for the per-block tables shared by all realizations.
const BLOCK_BYTES: usize = 48 << 20;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Everything that is the same for every noise realization at one time.
struct Slice {
    /// `exp(-i ε_n t)`
    free_phase: Vec<Complex64>,
    /// `exp(i ω_λ t)`
    bath_phase: Vec<Complex64>,
    /// Values of `-i A(t) q² - q Ō(t)` on the memory pattern.
    memory: Vec<Complex64>,
}

/// RK4 integrator for many realizations sharing one bath and spectrum.
///
/// The deterministic part of the generator (counterterm and memory operator)
/// does not depend on the noise, so it is tabulated once per block of time
/// steps at the half-step grid and reused by every realization.
pub struct Propagator<'a> {
    spectrum: &'a SystemSpectrum,
    bath: &'a BathSpec,
    cfg: IntegratorConfig,
    table: MemoryTable,
    q_pattern: SparsityPattern,
    q_vals: Vec<f64>,
    memory_pattern: SparsityPattern,
    q_squared: DMatrix<f64>,
    /// For each memory-pattern entry `(r, c)`: the `(k, q_rk)` with `q_rk ≠ 0`.
    contraction: Vec<Vec<(usize, f64)>>,
}

struct Worker {
    d: Vec<Complex64>,
    noise_amp: Vec<Complex64>,
    samples: Vec<Vec<Complex64>>,
    scratch: Scratch,
    failure: Option<(f64, f64)>,
}

struct Scratch {
    k: [Vec<Complex64>; 4],
    tmp: Vec<Complex64>,
    x: Vec<Complex64>,
    qx: Vec<Complex64>,
    y: Vec<Complex64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        let v = || vec![ZERO; n];
        Self {
            k: [v(), v(), v(), v()],
            tmp: v(),
            x: v(),
            qx: v(),
            y: v(),
        }
    }
}

impl<'a> Propagator<'a> {
    pub fn new(
        spectrum: &'a SystemSpectrum,
        bath: &'a BathSpec,
        cfg: IntegratorConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let n = spectrum.n_max();
        let q = spectrum.q_matrix();
        let q_pattern = SparsityPattern::from_fn(n, |r, c| q[(r, c)] != 0.0);
        let q_vals = q_pattern.gather_real(q);
        let q_squared = q * q;
        // structure of q·q covers both q² and q·Ō (Ō shares q's structure)
        let memory_pattern = SparsityPattern::from_fn(n, |r, c| {
            (0..n).any(|k| q[(r, k)] != 0.0 && q[(k, c)] != 0.0)
        });
        let contraction = memory_pattern
            .entries()
            .map(|(r, c)| {
                (0..n)
                    .filter(|&k| q[(r, k)] != 0.0 && q[(k, c)] != 0.0)
                    .map(|k| (k, q[(r, k)]))
                    .collect()
            })
            .collect();
        Ok(Self {
            spectrum,
            bath,
            cfg,
            table: MemoryTable::new(bath, spectrum),
            q_pattern,
            q_vals,
            memory_pattern,
            q_squared,
            contraction,
        })
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.cfg
    }

    fn slice(&self, t: f64) -> Slice {
        let free_phase = self
            .spectrum
            .energies()
            .iter()
            .map(|e| Complex64::from_polar(1.0, -e * t))
            .collect();
        let bath_phase: Vec<Complex64> = self
            .bath
            .frequencies()
            .iter()
            .map(|w| Complex64::from_polar(1.0, w * t))
            .collect();
        let memory = if self.bath.is_empty() {
            vec![ZERO; self.memory_pattern.nnz()]
        } else {
            let a = counterterm(self.bath, t);
            let conj_phase: Vec<Complex64> = bath_phase.iter().map(|p| p.conj()).collect();
            let sums = self.table.gap_sums_with_phases(t, &conj_phase);
            let gap_of = |k: usize, c: usize| sums[self.gap_index(k, c)];
            let q = self.spectrum.q_matrix();
            self.memory_pattern
                .entries()
                .zip(&self.contraction)
                .map(|((r, c), terms)| {
                    let mut acc = -I * (a * self.q_squared[(r, c)]);
                    for &(k, q_rk) in terms {
                        // (q Ō)_rc = Σ_k q_rk q_kc S_gap(k,c)
                        acc -= gap_of(k, c) * (q_rk * q[(k, c)]);
                    }
                    acc
                })
                .collect()
        };
        Slice {
            free_phase,
            bath_phase,
            memory,
        }
    }

    fn gap_index(&self, k: usize, c: usize) -> usize {
        self.table.gap_index_of(k, c)
    }

    /// Interaction-picture derivative `ḋ = e^{iεt} K(t) e^{-iεt} d`.
    #[inline]
    fn rhs(&self, s: &Slice, noise_amp: &[Complex64], d: &[Complex64], out: &mut [Complex64], w: &mut RhsBuf) {
        for ((x, &u), &dv) in w.x.iter_mut().zip(&s.free_phase).zip(d) {
            *x = u * dv;
        }
        self.memory_pattern.matvec_complex(&s.memory, w.x, w.y);
        if !noise_amp.is_empty() {
            let z: Complex64 = noise_amp
                .iter()
                .zip(&s.bath_phase)
                .map(|(a, p)| a * p)
                .sum();
            self.q_pattern.matvec_real(&self.q_vals, w.x, w.qx);
            for (y, qx) in w.y.iter_mut().zip(w.qx.iter()) {
                *y += z * qx;
            }
        }
        for ((o, &u), &y) in out.iter_mut().zip(&s.free_phase).zip(w.y.iter()) {
            *o = u.conj() * y;
        }
    }

    /// Integrates every realization from `init`, calling
    /// `sink(sample_index, t, realization_index, c)` for each stored sample.
    ///
    /// Calls arrive in time order and, within one time, in realization order,
    /// independent of how rayon schedules the work.
    pub fn run<F>(&self, init: &[Complex64], noises: &[NoiseRealization], mut sink: F) -> Result<()>
    where
        F: FnMut(usize, f64, usize, &[Complex64]),
    {
        let n = self.spectrum.n_max();
        if init.len() != n {
            return Err(Error::invalid(format!(
                "initial state has {} levels, spectrum has {n}",
                init.len()
            )));
        }
        let n_bath = self.bath.len();
        if let Some(bad) = noises.iter().position(|z| z.pairs.len() != n_bath) {
            return Err(Error::invalid(format!(
                "noise realization {bad} has {} modes, bath has {n_bath}",
                noises[bad].pairs.len()
            )));
        }
        let dt = self.cfg.dt;
        let stride = self.cfg.sample_stride;
        let total = self.cfg.n_steps();

        let mut workers: Vec<Worker> = noises
            .iter()
            .map(|z| Worker {
                d: init.to_vec(),
                noise_amp: (0..n_bath)
                    .map(|l| -I * self.bath.coupling * z.z_conj(l))
                    .collect(),
                samples: Vec::new(),
                scratch: Scratch::new(n),
                failure: None,
            })
            .collect();

        for (r, w) in workers.iter().enumerate() {
            sink(0, 0.0, r, &w.d);
        }

        let per_slice = 16 * (self.memory_pattern.nnz() + n + n_bath) + 64;
        let mut block = (BLOCK_BYTES / (2 * per_slice)).max(1);
        if block > stride {
            block -= block % stride;
        }
        let half = 0.5 * dt;
        let mut sample_index = 1;
        let mut start = 0;
        while start < total {
            let end = (start + block).min(total);
            let slices: Vec<Slice> = (2 * start..=2 * end)
                .into_par_iter()
                .map(|j| self.slice(j as f64 * half))
                .collect();
            workers.par_iter_mut().for_each(|w| {
                if w.failure.is_some() {
                    return;
                }
                w.samples.clear();
                for step in start..end {
                    let base = 2 * (step - start);
                    self.rk4_step(&slices[base], &slices[base + 1], &slices[base + 2], w);
                    let peak = w.d.iter().fold(0.0f64, |m, x| m.max(x.norm()));
                    if !(peak <= OVERFLOW_LIMIT) {
                        w.failure = Some(((step + 1) as f64 * dt, peak));
                        return;
                    }
                    if (step + 1) % stride == 0 {
                        let phase = &slices[base + 2].free_phase;
                        w.samples
                            .push(w.d.iter().zip(phase).map(|(d, u)| d * u).collect());
                    }
                }
            });
            if let Some((r, (time, magnitude))) = workers
                .iter()
                .enumerate()
                .find_map(|(r, w)| w.failure.map(|f| (r, f)))
            {
                return Err(Error::Overflow {
                    realization: noises[r].realization_seed as usize,
                    time,
                    magnitude,
                });
            }
            let stored = (start + 1..=end).filter(|s| s % stride == 0).count();
            for k in 0..stored {
                let step = (start + 1..=end).filter(|s| s % stride == 0).nth(k).unwrap();
                let t = step as f64 * dt;
                for (r, w) in workers.iter().enumerate() {
                    sink(sample_index, t, r, &w.samples[k]);
                }
                sample_index += 1;
            }
            start = end;
        }
        Ok(())
    }

    fn rk4_step(&self, s0: &Slice, s_half: &Slice, s1: &Slice, w: &mut Worker) {
        let dt = self.cfg.dt;
        let Worker {
            d,
            noise_amp,
            scratch,
            ..
        } = w;
        let Scratch { k, tmp, x, qx, y } = scratch;
        let mut buf = RhsBuf { x, qx, y };
        let [k1, k2, k3, k4] = k;
        self.rhs(s0, noise_amp, d, k1, &mut buf);
        for ((t, &dv), &kv) in tmp.iter_mut().zip(d.iter()).zip(k1.iter()) {
            *t = dv + kv * (0.5 * dt);
        }
        self.rhs(s_half, noise_amp, tmp, k2, &mut buf);
        for ((t, &dv), &kv) in tmp.iter_mut().zip(d.iter()).zip(k2.iter()) {
            *t = dv + kv * (0.5 * dt);
        }
        self.rhs(s_half, noise_amp, tmp, k3, &mut buf);
        for ((t, &dv), &kv) in tmp.iter_mut().zip(d.iter()).zip(k3.iter()) {
            *t = dv + kv * dt;
        }
        self.rhs(s1, noise_amp, tmp, k4, &mut buf);
        let sixth = dt / 6.0;
        for i in 0..d.len() {
            d[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * sixth;
        }
    }

    /// Lab-frame generator applied to `c` at time `t` (test hook).
    #[cfg(test)]
    pub(crate) fn lab_rhs(&self, noise: &NoiseRealization, c: &[Complex64], t: f64) -> Vec<Complex64> {
        let s = self.slice(t);
        let n = c.len();
        let amp: Vec<Complex64> = (0..self.bath.len())
            .map(|l| -I * self.bath.coupling * noise.z_conj(l))
            .collect();
        let d: Vec<Complex64> = c.iter().zip(&s.free_phase).map(|(c, u)| c * u.conj()).collect();
        let (mut x, mut qx, mut y) = (vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]);
        let mut out = vec![ZERO; n];
        self.rhs(&s, &amp, &d, &mut out, &mut RhsBuf { x: &mut x, qx: &mut qx, y: &mut y });
        // back to the lab frame: ċ = -iεc + u ḋ
        out.iter()
            .zip(&s.free_phase)
            .zip(c)
            .zip(self.spectrum.energies())
            .map(|(((o, u), c), e)| u * o - I * e * c)
            .collect()
    }
}

struct RhsBuf<'b> {
    x: &'b mut Vec<Complex64>,
    qx: &'b mut Vec<Complex64>,
    y: &'b mut Vec<Complex64>,
}
