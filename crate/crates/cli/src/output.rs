//! CSV emission. Every file opens with a `#` line naming its kind and schema
//! version, followed by an ordinary CSV header.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use qsd_core::fitting::FitResult;
use qsd_core::{BathSpec, ObservableSeries, ReducedDensity, SystemSpectrum};

pub const SCHEMA_VERSION: u32 = 1;

pub type CsvWriter = csv::Writer<BufWriter<File>>;

/// Opens `path`, writes the metadata line and the column header.
pub fn create(path: &Path, kind: &str, columns: &[&str]) -> std::io::Result<CsvWriter> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(
        file,
        "# qsd {kind} schema={SCHEMA_VERSION} version={}",
        env!("CARGO_PKG_VERSION")
    )?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(columns)?;
    Ok(w)
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub const OBSERVABLE_COLUMNS: [&str; 7] =
    ["t", "energy", "position", "momentum", "trace", "purity", "purity_normalized"];

pub fn write_observables(path: &Path, kind: &str, obs: &ObservableSeries) -> std::io::Result<()> {
    let mut w = create(path, kind, &OBSERVABLE_COLUMNS)?;
    for k in 0..obs.len() {
        let p = obs.momentum.as_ref().map_or(f64::NAN, |m| m[k]);
        w.write_record([
            num(obs.times[k]),
            num(obs.energy[k]),
            num(obs.position[k]),
            num(p),
            num(obs.trace[k]),
            num(obs.purity[k]),
            num(obs.purity_normalized[k]),
        ])?;
    }
    w.flush()
}

pub fn write_levels(path: &Path, obs: &ObservableSeries) -> std::io::Result<()> {
    let mut w = create(path, "levels", &["t", "n", "level_energy"])?;
    for (t, row) in obs.times.iter().zip(&obs.level_energies) {
        for (n, v) in row.iter().enumerate() {
            w.write_record([num(*t), n.to_string(), num(*v)])?;
        }
    }
    w.flush()
}

pub fn write_phase(path: &Path, obs: &ObservableSeries) -> std::io::Result<()> {
    let mut w = create(path, "phase", &["t", "q", "p"])?;
    for k in 0..obs.len() {
        let p = obs.momentum.as_ref().map_or(f64::NAN, |m| m[k]);
        w.write_record([num(obs.times[k]), num(obs.position[k]), num(p)])?;
    }
    w.flush()
}

pub fn write_rho(path: &Path, rho: &ReducedDensity) -> std::io::Result<()> {
    let mut w = create(path, "rho", &["t", "n", "m", "re", "im"])?;
    for (t, r) in rho.times.iter().zip(&rho.rho) {
        for n in 0..r.nrows() {
            for m in 0..r.ncols() {
                let v = r[(n, m)];
                w.write_record([num(*t), n.to_string(), m.to_string(), num(v.re), num(v.im)])?;
            }
        }
    }
    w.flush()
}

pub fn write_frequencies(path: &Path, bath: &BathSpec) -> std::io::Result<()> {
    let mut w = create(path, "frequencies", &["lambda", "omega"])?;
    for (l, omega) in bath.frequencies().iter().enumerate() {
        w.write_record([l.to_string(), num(*omega)])?;
    }
    w.flush()
}

pub fn write_energies(path: &Path, spectrum: &SystemSpectrum) -> std::io::Result<()> {
    let mut w = create(path, "energies", &["n", "energy"])?;
    for (n, e) in spectrum.energies().iter().enumerate() {
        w.write_record([n.to_string(), num(*e)])?;
    }
    w.flush()
}

pub fn write_matrix_elements(path: &Path, spectrum: &SystemSpectrum) -> std::io::Result<()> {
    let mut w = create(path, "matrix_elements", &["n", "m", "q_nm", "re_p_nm", "im_p_nm"])?;
    let q = spectrum.q_matrix();
    let p = spectrum.p_matrix();
    for n in 0..spectrum.n_max() {
        for m in 0..spectrum.n_max() {
            let (re, im) = p.map_or((f64::NAN, f64::NAN), |p| (p[(n, m)].re, p[(n, m)].im));
            w.write_record([n.to_string(), m.to_string(), num(q[(n, m)]), num(re), num(im)])?;
        }
    }
    w.flush()
}

pub const FIT_COLUMNS: [&str; 7] = ["segment", "model", "t_lo", "t_hi", "exponent", "prefactor", "sse"];

pub fn write_fits(path: &Path, fits: &[FitResult]) -> std::io::Result<()> {
    let mut w = create(path, "fits", &FIT_COLUMNS)?;
    for (i, f) in fits.iter().enumerate() {
        w.write_record([
            i.to_string(),
            f.model.name().to_string(),
            num(f.window.0),
            num(f.window.1),
            num(f.exponent),
            num(f.prefactor),
            num(f.sse),
        ])?;
    }
    w.flush()
}

/// `key,value` pairs.
pub fn write_manifest(path: &Path, entries: &[(String, String)]) -> std::io::Result<()> {
    let mut w = create(path, "manifest", &["key", "value"])?;
    for (k, v) in entries {
        w.write_record([k, v])?;
    }
    w.flush()
}
