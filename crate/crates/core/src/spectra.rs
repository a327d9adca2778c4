//! System eigenbasis: energies and position/momentum matrix elements.
//!
//! The harmonic oscillator is analytic. The Morse potential is solved with the
//! Numerov three-term recurrence: levels are bracketed by Sturm node counting
//! and refined by bisection on the logarithmic-derivative mismatch at the outer
//! classical turning point.

use std::ops::RangeInclusive;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::simpson;

/// Relative tolerance used when checking matrix symmetries of a spectrum.
pub const SYMMETRY_TOL: f64 = 1e-8;

const OVERFLOW_GUARD: f64 = 1e10;
const SEED_VALUE: f64 = 1e-10;
/// WKB decay (in e-folds) required of the padding added around the Morse grid.
const PADDING_DECAY: f64 = 40.0;
const SCAN_STEP: f64 = 0.05;
const ENERGY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialKind {
    Harmonic { omega: f64 },
    /// `V(r) = depth * (1 - exp(-width * (r - r_e)))^2`
    Morse { depth: f64, width: f64, r_e: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub r_min: f64,
    pub r_max: f64,
    pub step: f64,
}

impl Grid {
    pub fn new(r_min: f64, r_max: f64, step: f64) -> Self {
        Self { r_min, r_max, step }
    }

    /// Number of grid points; the step is adjusted so that both ends are hit.
    pub fn len(&self) -> usize {
        ((self.r_max - self.r_min) / self.step).round() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> f64 {
        (self.r_max - self.r_min) / (self.len() - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.r_min + i as f64 * self.spacing()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub mass: f64,
    pub grid: Grid,
}

impl PotentialSpec {
    pub fn harmonic(omega: f64, mass: f64, grid: Grid) -> Result<Self> {
        let spec = Self {
            kind: PotentialKind::Harmonic { omega },
            mass,
            grid,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn morse(depth: f64, width: f64, r_e: f64, mass: f64, grid: Grid) -> Result<Self> {
        let spec = Self {
            kind: PotentialKind::Morse { depth, width, r_e },
            mass,
            grid,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Morse oscillator with `D_e = 30, a = 0.08, r_e = 0, m = 1` on `[-7.4, 20]`.
    pub fn morse_default() -> Self {
        Self {
            kind: PotentialKind::Morse {
                depth: 30.0,
                width: 0.08,
                r_e: 0.0,
            },
            mass: 1.0,
            grid: Grid::new(-7.4, 20.0, 1e-3),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::invalid(format!("mass must be positive, got {}", self.mass)));
        }
        let g = &self.grid;
        if !(g.step > 0.0) || !(g.r_min < g.r_max) {
            return Err(Error::invalid(format!(
                "grid [{}, {}] with step {} is empty",
                g.r_min, g.r_max, g.step
            )));
        }
        if g.len() < 8 {
            return Err(Error::invalid("grid needs at least 8 points"));
        }
        match self.kind {
            PotentialKind::Harmonic { omega } => {
                if !(omega > 0.0) {
                    return Err(Error::invalid(format!("omega must be positive, got {omega}")));
                }
                if !(g.r_min < 0.0 && 0.0 < g.r_max) {
                    return Err(Error::invalid("grid must contain the oscillator centre"));
                }
            }
            PotentialKind::Morse { depth, width, r_e } => {
                if !(depth > 0.0) || !(width > 0.0) {
                    return Err(Error::invalid("Morse depth and width must be positive"));
                }
                if !(g.r_min < r_e && r_e < g.r_max) {
                    return Err(Error::invalid("grid must contain the Morse equilibrium"));
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, r: f64) -> f64 {
        match self.kind {
            PotentialKind::Harmonic { omega } => 0.5 * self.mass * omega * omega * r * r,
            PotentialKind::Morse { depth, width, r_e } => {
                let x = 1.0 - (-width * (r - r_e)).exp();
                depth * x * x
            }
        }
    }

    fn minimum(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    AnalyticHO,
    Numerov,
}

/// Energies and matrix elements of the retained system levels.
///
/// Levels are labelled `1..=n_max` in the physics but stored zero-based.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpectrum {
    energies: Vec<f64>,
    q_matrix: DMatrix<f64>,
    p_matrix: Option<DMatrix<Complex64>>,
    provenance: Provenance,
}

impl SystemSpectrum {
    /// Builds a spectrum, checking ordering and operator symmetries.
    pub fn new(
        energies: Vec<f64>,
        q_matrix: DMatrix<f64>,
        p_matrix: Option<DMatrix<Complex64>>,
        provenance: Provenance,
    ) -> Result<Self> {
        let n = energies.len();
        if n == 0 {
            return Err(Error::invalid("spectrum needs at least one level"));
        }
        if energies.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("energies must be strictly ascending"));
        }
        if q_matrix.shape() != (n, n) {
            return Err(Error::invalid("q matrix shape does not match level count"));
        }
        let q_scale = q_matrix.amax().max(f64::MIN_POSITIVE);
        let q_asym = (&q_matrix - q_matrix.transpose()).amax();
        if q_asym > SYMMETRY_TOL * q_scale {
            return Err(Error::invalid(format!("q matrix not symmetric ({q_asym:e})")));
        }
        if let Some(p) = &p_matrix {
            if p.shape() != (n, n) {
                return Err(Error::invalid("p matrix shape does not match level count"));
            }
            let p_scale = p.iter().map(|c| c.norm()).fold(f64::MIN_POSITIVE, f64::max);
            let p_err = (p - p.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
            if p_err > SYMMETRY_TOL * p_scale {
                return Err(Error::invalid(format!("p matrix not Hermitian ({p_err:e})")));
            }
        }
        Ok(Self {
            energies,
            q_matrix,
            p_matrix,
            provenance,
        })
    }

    pub fn n_max(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn q_matrix(&self) -> &DMatrix<f64> {
        &self.q_matrix
    }

    pub fn p_matrix(&self) -> Option<&DMatrix<Complex64>> {
        self.p_matrix.as_ref()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Keeps only the levels with zero-based indices in `range`.
    pub fn truncate(&self, range: RangeInclusive<usize>) -> Result<Self> {
        let (lo, hi) = (*range.start(), *range.end());
        if lo > hi || hi >= self.n_max() {
            return Err(Error::invalid("level window outside the spectrum"));
        }
        let k = hi - lo + 1;
        Self::new(
            self.energies[lo..=hi].to_vec(),
            self.q_matrix.view((lo, lo), (k, k)).into_owned(),
            self.p_matrix
                .as_ref()
                .map(|p| p.view((lo, lo), (k, k)).into_owned()),
            self.provenance,
        )
    }
}

/// Analytic harmonic-oscillator spectrum `E_n = omega (n - 1/2)` with ladder
/// operator matrix elements.
pub fn ho_spectrum(omega: f64, mass: f64, n_max: usize) -> Result<SystemSpectrum> {
    if !(omega > 0.0) || !(mass > 0.0) || n_max == 0 {
        return Err(Error::invalid(format!(
            "harmonic spectrum needs omega > 0, mass > 0, n_max >= 1 (got {omega}, {mass}, {n_max})"
        )));
    }
    let energies = (1..=n_max).map(|n| omega * (n as f64 - 0.5)).collect();
    let mut q = DMatrix::zeros(n_max, n_max);
    let mut p = DMatrix::from_element(n_max, n_max, Complex64::new(0.0, 0.0));
    for k in 0..n_max.saturating_sub(1) {
        // level label n = k + 1
        let n = (k + 1) as f64;
        let qe = (n / (2.0 * mass * omega)).sqrt();
        let pe = (n * mass * omega / 2.0).sqrt();
        q[(k, k + 1)] = qe;
        q[(k + 1, k)] = qe;
        p[(k, k + 1)] = Complex64::new(0.0, -pe);
        p[(k + 1, k)] = Complex64::new(0.0, pe);
    }
    SystemSpectrum::new(energies, q, Some(p), Provenance::AnalyticHO)
}

/// Closed-form Morse level energy for the one-based label `n`.
pub fn morse_energy_analytic(n: usize, potential: &PotentialSpec) -> Result<f64> {
    let PotentialKind::Morse { depth, width, .. } = potential.kind else {
        return Err(Error::invalid("analytic Morse energies need a Morse potential"));
    };
    if n == 0 {
        return Err(Error::invalid("level labels start at 1"));
    }
    let max_level = morse_bound_levels(depth, width, potential.mass);
    if n > max_level {
        return Err(Error::LevelOutOfRange {
            level: n,
            max_level,
        });
    }
    let quantum = (n - 1) as f64;
    let x = width * (2.0 * depth / potential.mass).sqrt() * (quantum + 0.5);
    Ok(x - x * x / (4.0 * depth))
}

/// Number of levels before the analytic expression turns over.
fn morse_bound_levels(depth: f64, width: f64, mass: f64) -> usize {
    let omega = width * (2.0 * depth / mass).sqrt();
    let top = 2.0 * depth / omega - 0.5;
    top.floor() as usize + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    LeftToRight,
    RightToLeft,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumerovSolution {
    /// Solution on the grid, ordered from `r_min` to `r_max` regardless of direction.
    pub wavefunction: Vec<f64>,
    /// Sign changes between the starting end and the far classical turning point.
    pub node_count: usize,
}

/// Potential sampled on a uniform grid.
#[derive(Debug, Clone)]
struct SampledPotential {
    r0: f64,
    h: f64,
    mass: f64,
    v: Vec<f64>,
}

impl SampledPotential {
    fn on_grid(potential: &PotentialSpec, grid: &Grid) -> Self {
        let n = grid.len();
        let h = grid.spacing();
        let v = (0..n).map(|i| potential.value(grid.r_min + i as f64 * h)).collect();
        Self {
            r0: grid.r_min,
            h,
            mass: potential.mass,
            v,
        }
    }

    fn len(&self) -> usize {
        self.v.len()
    }

    /// Numerov weights `f_i = 1 + h^2 k_i / 12`, `k_i = 2m (E - V_i)`.
    fn weights(&self, energy: f64) -> Vec<f64> {
        let c = self.h * self.h / 12.0 * 2.0 * self.mass;
        self.v.iter().map(|v| 1.0 + c * (energy - v)).collect()
    }

    /// Last index (scanning in `dir`) where the energy is classically allowed.
    fn far_turning_point(&self, energy: f64, dir: Direction) -> Option<usize> {
        match dir {
            Direction::LeftToRight => self.v.iter().rposition(|&v| v <= energy),
            Direction::RightToLeft => self.v.iter().position(|&v| v <= energy),
        }
    }
}

/// Runs the recurrence along `f` (already oriented) from index 0 up to `last`.
///
/// Values are renormalised whenever they exceed the overflow guard; the
/// already-computed prefix is rescaled with them so the result is one solution.
fn numerov_run(f: &[f64], last: usize, out: &mut Vec<f64>) {
    out.clear();
    out.resize(last + 1, 0.0);
    if last == 0 {
        return;
    }
    out[1] = SEED_VALUE;
    for i in 1..last {
        let next = ((12.0 - 10.0 * f[i]) * out[i] - f[i - 1] * out[i - 1]) / f[i + 1];
        out[i + 1] = next;
        if next.abs() > OVERFLOW_GUARD {
            let scale = 1.0 / next.abs();
            out[..=i + 1].iter_mut().for_each(|x| *x *= scale);
        }
    }
}

/// Sign changes over the whole grid of the solution started at the left end.
///
/// For the discrete Numerov problem this counts eigenvalues below `energy`.
fn sturm_count(f: &[f64]) -> usize {
    let n = f.len();
    let mut prev = 0.0;
    let mut cur = SEED_VALUE;
    let mut last_sign = 1.0f64;
    let mut count = 0;
    for i in 1..n - 1 {
        let mut next = ((12.0 - 10.0 * f[i]) * cur - f[i - 1] * prev) / f[i + 1];
        if next.abs() > OVERFLOW_GUARD {
            let scale = 1.0 / next.abs();
            next *= scale;
            cur *= scale;
        }
        if next != 0.0 {
            let s = next.signum();
            if s != last_sign {
                count += 1;
                last_sign = s;
            }
        }
        prev = cur;
        cur = next;
    }
    count
}

fn sign_changes(values: &[f64]) -> usize {
    let mut count = 0;
    let mut last = 0.0f64;
    for &v in values {
        if v != 0.0 {
            if last != 0.0 && v.signum() != last {
                count += 1;
            }
            last = v.signum();
        }
    }
    count
}

/// Integrates the stationary Schrödinger equation at fixed `energy` with the
/// Numerov recurrence, starting from a zero boundary value at one grid end.
pub fn numerov_integrate(
    potential: &PotentialSpec,
    energy: f64,
    direction: Direction,
) -> Result<NumerovSolution> {
    potential.validate()?;
    let sampled = SampledPotential::on_grid(potential, &potential.grid);
    let n = sampled.len();
    if !(energy < sampled.v[0] && energy < sampled.v[n - 1]) {
        return Err(Error::EnergyNotBound { energy });
    }
    let mut f = sampled.weights(energy);
    let mut psi = Vec::new();
    if direction == Direction::RightToLeft {
        f.reverse();
    }
    numerov_run(&f, n - 1, &mut psi);
    let turning = sampled.far_turning_point(energy, direction);
    let node_count = match (turning, direction) {
        (None, _) => 0,
        (Some(tp), Direction::LeftToRight) => sign_changes(&psi[..=tp]),
        (Some(tp), Direction::RightToLeft) => sign_changes(&psi[..=(n - 1 - tp)]),
    };
    if direction == Direction::RightToLeft {
        psi.reverse();
    }
    Ok(NumerovSolution {
        wavefunction: psi,
        node_count,
    })
}

/// Bound eigenstates on a uniform grid.
#[derive(Debug, Clone)]
pub struct Eigenstates {
    pub energies: Vec<f64>,
    /// Grid origin and spacing of `wavefunctions`.
    pub r0: f64,
    pub step: f64,
    /// Normalised eigenfunctions, one row per level.
    pub wavefunctions: Vec<Vec<f64>>,
    /// Node count of each eigenfunction inside its classically allowed region.
    pub node_counts: Vec<usize>,
}

impl Eigenstates {
    pub fn r(&self, i: usize) -> f64 {
        self.r0 + i as f64 * self.step
    }

    /// Overlap matrix `∫ φ_n φ_m dr` by Simpson quadrature.
    pub fn overlaps(&self) -> DMatrix<f64> {
        let k = self.wavefunctions.len();
        let mut s = DMatrix::zeros(k, k);
        let mut buf = Vec::new();
        for a in 0..k {
            for b in a..k {
                buf.clear();
                buf.extend(
                    self.wavefunctions[a]
                        .iter()
                        .zip(&self.wavefunctions[b])
                        .map(|(x, y)| x * y),
                );
                let v = simpson(&buf, self.step);
                s[(a, b)] = v;
                s[(b, a)] = v;
            }
        }
        s
    }

    /// Energies plus `q_nm = ∫ φ_n r φ_m` and `p_nm = -i ∫ φ_n φ_m'`.
    pub fn to_spectrum(&self) -> Result<SystemSpectrum> {
        let k = self.wavefunctions.len();
        let npts = self.wavefunctions.first().map_or(0, Vec::len);
        let derivs: Vec<Vec<f64>> = self
            .wavefunctions
            .iter()
            .map(|w| central_derivative(w, self.step))
            .collect();
        let rs: Vec<f64> = (0..npts).map(|i| self.r(i)).collect();
        let mut q = DMatrix::zeros(k, k);
        let mut p = DMatrix::from_element(k, k, Complex64::new(0.0, 0.0));
        let mut buf = vec![0.0; npts];
        for a in 0..k {
            for b in a..k {
                let (wa, wb) = (&self.wavefunctions[a], &self.wavefunctions[b]);
                for i in 0..npts {
                    buf[i] = wa[i] * rs[i] * wb[i];
                }
                let qv = simpson(&buf, self.step);
                q[(a, b)] = qv;
                q[(b, a)] = qv;
            }
            for b in 0..k {
                let (wa, db) = (&self.wavefunctions[a], &derivs[b]);
                for i in 0..npts {
                    buf[i] = wa[i] * db[i];
                }
                p[(a, b)] = Complex64::new(0.0, -simpson(&buf, self.step));
            }
        }
        SystemSpectrum::new(self.energies.clone(), q, Some(p), Provenance::Numerov)
    }
}

/// Fourth-order central differences; second order at the two outermost points
/// on each side.
fn central_derivative(w: &[f64], h: f64) -> Vec<f64> {
    let n = w.len();
    let mut d = vec![0.0; n];
    if n < 5 {
        return d;
    }
    for i in 2..n - 2 {
        d[i] = (w[i - 2] - 8.0 * w[i - 1] + 8.0 * w[i + 1] - w[i + 2]) / (12.0 * h);
    }
    d[0] = (w[1] - w[0]) / h;
    d[1] = (w[2] - w[0]) / (2.0 * h);
    d[n - 2] = (w[n - 1] - w[n - 3]) / (2.0 * h);
    d[n - 1] = (w[n - 1] - w[n - 2]) / h;
    d
}

/// How the integration grid is chosen for the eigenvalue search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Zero boundary values exactly at the ends of the potential's grid.
    HardWalls,
    /// The grid is padded outward until every retained level has decayed by
    /// many e-folds, so the ends behave like the open problem. Levels are
    /// still selected by their turning points lying inside the original grid.
    Padded,
}

/// Finds every bound level whose classical turning points lie inside the
/// potential's grid, using the Numerov method.
pub fn numerov_eigenstates(potential: &PotentialSpec, boundary: Boundary) -> Result<Eigenstates> {
    potential.validate()?;
    let grid = potential.grid;
    let ceiling = potential.value(grid.r_min).min(potential.value(grid.r_max));
    let integration_grid = match boundary {
        Boundary::HardWalls => grid,
        Boundary::Padded => padded_grid(potential, ceiling),
    };
    let sampled = SampledPotential::on_grid(potential, &integration_grid);
    let count = |e: f64| sturm_count(&sampled.weights(e));

    let floor = potential.minimum();
    let total = count(ceiling);
    let brackets = bracket_levels(floor, ceiling, total, &count)?;

    let mut energies = Vec::with_capacity(total);
    let mut wavefunctions = Vec::with_capacity(total);
    let mut node_counts = Vec::with_capacity(total);
    for (level, (lo, hi)) in brackets.into_iter().enumerate() {
        let energy = refine_level(&sampled, level, lo, hi, &count);
        let psi = eigenfunction(&sampled, energy);
        let tp = sampled
            .far_turning_point(energy, Direction::LeftToRight)
            .unwrap_or(sampled.len() - 1);
        let nodes = sign_changes(&psi[..=tp]);
        if nodes != level {
            return Err(Error::MissingLevel {
                from: level,
                to: nodes,
            });
        }
        energies.push(energy);
        wavefunctions.push(psi);
        node_counts.push(nodes);
    }
    Ok(Eigenstates {
        energies,
        r0: sampled.r0,
        step: sampled.h,
        wavefunctions,
        node_counts,
    })
}

/// Numerov spectrum of a Morse potential. `level_window` selects one-based
/// level labels; by default every level inside the grid is kept.
pub fn morse_eigensolve(
    potential: &PotentialSpec,
    level_window: Option<RangeInclusive<usize>>,
) -> Result<SystemSpectrum> {
    if !matches!(potential.kind, PotentialKind::Morse { .. }) {
        return Err(Error::invalid("morse_eigensolve needs a Morse potential"));
    }
    let states = numerov_eigenstates(potential, Boundary::Padded)?;
    let spectrum = states.to_spectrum()?;
    match level_window {
        None => Ok(spectrum),
        Some(w) => {
            if *w.start() == 0 {
                return Err(Error::invalid("level labels start at 1"));
            }
            spectrum.truncate(w.start() - 1..=w.end() - 1)
        }
    }
}

fn padded_grid(potential: &PotentialSpec, ceiling: f64) -> Grid {
    let g = potential.grid;
    let h = g.spacing();
    let span = g.r_max - g.r_min;
    let reach = |sign: f64, start: f64| -> usize {
        let mut acc = 0.0;
        let mut j = 0usize;
        while acc < PADDING_DECAY && (j as f64) * h < 4.0 * span {
            j += 1;
            let r = start + sign * j as f64 * h;
            let excess = potential.value(r) - ceiling;
            acc += (2.0 * potential.mass * excess.max(0.0)).sqrt() * h;
        }
        j
    };
    let left = reach(-1.0, g.r_min);
    let right = reach(1.0, g.r_max);
    Grid::new(g.r_min - left as f64 * h, g.r_max + right as f64 * h, h)
}

/// Scans `[floor, ceiling]` and returns one energy bracket per level, each
/// containing exactly one eigenvalue.
fn bracket_levels(
    floor: f64,
    ceiling: f64,
    total: usize,
    count: &impl Fn(f64) -> usize,
) -> Result<Vec<(f64, f64)>> {
    let mut brackets = vec![(f64::NAN, f64::NAN); total];
    if total == 0 {
        return Ok(Vec::new());
    }
    let mut e0 = floor;
    let mut c0 = count(e0);
    if c0 != 0 {
        return Err(Error::MissingLevel { from: 0, to: c0 });
    }
    let mut step = SCAN_STEP;
    while c0 < total {
        let e1 = (e0 + step).min(ceiling);
        let c1 = count(e1);
        if c1 > c0 + 1 {
            // two levels closer than the step: refine
            step /= 4.0;
            if step < 1e-12 {
                return Err(Error::GridTooCoarse { energy: e0 });
            }
            continue;
        }
        if c1 == c0 + 1 {
            brackets[c0] = (e0, e1);
        } else if c1 < c0 {
            return Err(Error::MissingLevel { from: c0, to: c1 });
        }
        e0 = e1;
        c0 = c1;
        step = SCAN_STEP;
        if e1 >= ceiling && c0 < total {
            return Err(Error::MissingLevel {
                from: c0,
                to: total,
            });
        }
    }
    Ok(brackets)
}

fn refine_level(
    sampled: &SampledPotential,
    level: usize,
    mut lo: f64,
    mut hi: f64,
    count: &impl Fn(f64) -> usize,
) -> f64 {
    // node-count bisection to a narrow bracket
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        if count(mid) > level {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    let matching = matching_index(sampled, mid);
    let mut f_lo = mismatch(sampled, lo, matching);
    let f_hi = mismatch(sampled, hi, matching);
    let use_mismatch = f_lo.is_finite() && f_hi.is_finite() && f_lo.signum() != f_hi.signum();
    while hi - lo > ENERGY_TOL {
        let mid = 0.5 * (lo + hi);
        if use_mismatch {
            let f_mid = mismatch(sampled, mid, matching);
            if f_mid.signum() == f_lo.signum() {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
            }
        } else if count(mid) > level {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Outer classical turning point, kept away from the grid ends.
fn matching_index(sampled: &SampledPotential, energy: f64) -> usize {
    let n = sampled.len();
    let tp = sampled
        .far_turning_point(energy, Direction::LeftToRight)
        .unwrap_or(n / 2);
    tp.clamp(2, n - 3)
}

/// Jump of the logarithmic derivative at `m` between the inward solutions.
fn mismatch(sampled: &SampledPotential, energy: f64, m: usize) -> f64 {
    let (left, right) = shoot_both(sampled, energy, m);
    let dl = (left[m + 1] - left[m - 1]) / (2.0 * sampled.h * left[m]);
    let dr = (right[m + 1] - right[m - 1]) / (2.0 * sampled.h * right[m]);
    dl - dr
}

/// Left solution on `0..=m+1` and right solution on `m-1..n`, both indexed on
/// the full grid (entries outside their range are zero).
fn shoot_both(sampled: &SampledPotential, energy: f64, m: usize) -> (Vec<f64>, Vec<f64>) {
    let n = sampled.len();
    let mut f = sampled.weights(energy);
    let mut left = Vec::new();
    numerov_run(&f, m + 1, &mut left);
    left.resize(n, 0.0);
    f.reverse();
    let mut right = Vec::new();
    numerov_run(&f, n - m, &mut right);
    right.resize(n, 0.0);
    right.reverse();
    (left, right)
}

fn eigenfunction(sampled: &SampledPotential, energy: f64) -> Vec<f64> {
    let n = sampled.len();
    let m = matching_index(sampled, energy);
    let (left, right) = shoot_both(sampled, energy, m);
    let scale = left[m] / right[m];
    let mut psi: Vec<f64> = (0..n)
        .map(|i| if i <= m { left[i] } else { right[i] * scale })
        .collect();
    let sq: Vec<f64> = psi.iter().map(|x| x * x).collect();
    let norm = simpson(&sq, sampled.h).sqrt();
    let peak = psi.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    // first significant lobe from the left is positive
    let sign = psi
        .iter()
        .find(|x| x.abs() > 1e-6 * peak)
        .map_or(1.0, |x| x.signum());
    psi.iter_mut().for_each(|x| *x *= sign / norm);
    psi
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ho_ground_state_and_ladder_elements() {
        let s = ho_spectrum(1.0, 1.0, 15).unwrap();
        assert_eq!(s.energies()[0], 0.5);
        assert_eq!(s.energies()[14], 14.5);
        let mean: f64 = s.energies().iter().sum::<f64>() / 15.0;
        assert_abs_diff_eq!(mean, 7.5, epsilon = 1e-14);
        assert_abs_diff_eq!(s.q_matrix()[(0, 1)], 1.0 / 2f64.sqrt(), epsilon = 1e-15);
        for r in 0..15usize {
            for c in 0..15 {
                if r.abs_diff(c) != 1 {
                    assert_eq!(s.q_matrix()[(r, c)], 0.0);
                }
            }
        }
        for w in s.energies().windows(2) {
            assert_eq!(w[1] - w[0], 1.0);
        }
        let p = s.p_matrix().unwrap();
        assert_abs_diff_eq!(p[(0, 1)].im, -(0.5f64).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(p[(1, 0)].im, (0.5f64).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn ho_rejects_bad_input() {
        assert!(ho_spectrum(0.0, 1.0, 3).is_err());
        assert!(ho_spectrum(1.0, -1.0, 3).is_err());
        assert!(ho_spectrum(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn morse_analytic_values() {
        let m = PotentialSpec::morse_default();
        assert_abs_diff_eq!(morse_energy_analytic(1, &m).unwrap(), 0.3090387, epsilon = 1e-7);
        assert_abs_diff_eq!(morse_energy_analytic(9, &m).unwrap(), 5.036, epsilon = 1e-3);
        assert_abs_diff_eq!(morse_energy_analytic(23, &m).unwrap(), 12.323, epsilon = 1e-3);
        assert!(morse_energy_analytic(0, &m).is_err());
        assert!(matches!(
            morse_energy_analytic(200, &m),
            Err(Error::LevelOutOfRange { .. })
        ));
    }

    #[test]
    fn numerov_harmonic_node_counts() {
        let ho = PotentialSpec::harmonic(1.0, 1.0, Grid::new(-10.0, 10.0, 1e-3)).unwrap();
        let ground = numerov_integrate(&ho, 0.5, Direction::LeftToRight).unwrap();
        assert_eq!(ground.node_count, 0);
        let fifth = numerov_integrate(&ho, 5.5, Direction::LeftToRight).unwrap();
        assert_eq!(fifth.node_count, 5);
        let back = numerov_integrate(&ho, 5.5, Direction::RightToLeft).unwrap();
        assert_eq!(back.node_count, 5);
    }

    #[test]
    fn numerov_rejects_unbound_energy() {
        let ho = PotentialSpec::harmonic(1.0, 1.0, Grid::new(-3.0, 3.0, 1e-2)).unwrap();
        assert!(matches!(
            numerov_integrate(&ho, 10.0, Direction::LeftToRight),
            Err(Error::EnergyNotBound { .. })
        ));
    }

    #[test]
    fn numerov_survives_deep_forbidden_regions() {
        // growth over the right tail is far beyond f64 range without renormalisation
        let ho = PotentialSpec::harmonic(1.0, 1.0, Grid::new(-30.0, 30.0, 1e-2)).unwrap();
        let sol = numerov_integrate(&ho, 0.7, Direction::LeftToRight).unwrap();
        assert!(sol.wavefunction.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn harmonic_eigenstates_via_numerov() {
        let ho = PotentialSpec::harmonic(1.0, 1.0, Grid::new(-8.0, 8.0, 5e-3)).unwrap();
        let states = numerov_eigenstates(&ho, Boundary::Padded).unwrap();
        for (k, e) in states.energies.iter().take(10).enumerate() {
            assert_abs_diff_eq!(*e, k as f64 + 0.5, epsilon = 1e-7);
        }
        let spec = states.to_spectrum().unwrap();
        let q = spec.q_matrix();
        assert_abs_diff_eq!(q[(0, 1)].abs(), 1.0 / 2f64.sqrt(), epsilon = 1e-6);
        assert_abs_diff_eq!(q[(0, 0)], 0.0, epsilon = 1e-8);
        let p = spec.p_matrix().unwrap();
        assert_abs_diff_eq!(p[(0, 1)].norm(), 0.5f64.sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn truncate_keeps_sub_block() {
        let s = ho_spectrum(1.0, 1.0, 6).unwrap();
        let t = s.truncate(2..=4).unwrap();
        assert_eq!(t.energies(), &[2.5, 3.5, 4.5]);
        assert_eq!(t.q_matrix()[(0, 1)], s.q_matrix()[(2, 3)]);
        assert!(s.truncate(4..=9).is_err());
    }

    #[test]
    fn spectrum_constructor_checks_invariants() {
        let q = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        assert!(SystemSpectrum::new(vec![0.0, 1.0], q, None, Provenance::Numerov).is_err());
        let q = DMatrix::zeros(2, 2);
        assert!(SystemSpectrum::new(vec![1.0, 1.0], q, None, Provenance::Numerov).is_err());
    }
}
