//! Command-line front end: config loading, flag overrides, subcommand
//! dispatch and exit-code mapping. `main.rs` only forwards to [`run`].

// `!(lo < hi)` rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod output;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use qsd_core::config::{parse_config, ExperimentConfig, SystemKind};
use qsd_core::dynamics::{exact_small_bath_reference, initial_state};
use qsd_core::ensemble::run_ensemble;
use qsd_core::fitting::{detect_regimes, fit_exponential, fit_powerlaw, FitModel, FitResult};
use qsd_core::spectra::{ho_spectrum, morse_eigensolve};
use qsd_core::{BathSpec, ObservableSeries, PotentialKind, SystemSpectrum};

use output::OBSERVABLE_COLUMNS;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O failure on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 4,
        }
    }
}

impl From<qsd_core::Error> for CliError {
    fn from(e: qsd_core::Error) -> Self {
        use qsd_core::Error as E;
        match e {
            E::Config { .. } | E::InvalidParameter(_) => CliError::Config(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Parser)]
#[command(name = "qsd", version, about = "Linear non-Markovian QSD with a finite discrete bath")]
pub struct Cli {
    /// Worker threads for the ensemble (default: all available cores).
    #[arg(long, global = true, env = "QSD_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write energies, matrix elements and bath frequencies.
    Spectrum(ExperimentArgs),
    /// Run one ensemble and write observables, levels, phase and fits.
    Run(ExperimentArgs),
    /// Repeat `run` over bath sizes and/or spectral exponents.
    Sweep(SweepArgs),
    /// Fit decay laws to a column of an observables file.
    Fit(FitArgs),
    /// Exact reference for a bath of at most two oscillators.
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    /// Experiment description file.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// harmonic or morse; defaults for the kind fill anything not given.
    #[arg(long)]
    pub system: Option<String>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[command(flatten)]
    pub bath: BathArgs,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub sample_stride: Option<usize>,
    #[arg(long)]
    pub realizations: Option<usize>,
    /// Master seed for the noise realizations.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Also write the averaged density matrix.
    #[arg(long)]
    pub rho: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BathArgs {
    #[arg(long)]
    pub n_bath: Option<usize>,
    #[arg(long)]
    pub spectral_exponent: Option<f64>,
    /// Frequency window as `lo,hi`.
    #[arg(long, value_parser = parse_pair)]
    pub omega_window: Option<(f64, f64)>,
    #[arg(long)]
    pub coupling: Option<f64>,
    #[arg(long)]
    pub freq_seed: Option<u64>,
    /// Comma-separated frequencies used instead of sampling.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub freq_override: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Bath sizes, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub n_values: Option<Vec<usize>>,
    /// Spectral exponents, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub s_values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Quanta kept per bath mode.
    #[arg(long, default_value_t = 6)]
    pub fock_cut: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Column {
    Energy,
    Purity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelChoice {
    Exp,
    Pow,
    Auto,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// observables.csv produced by `run` or `oracle`.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "energy")]
    pub column: Column,
    #[arg(long, value_enum, default_value = "auto")]
    pub model: ModelChoice,
    /// Restrict to `lo,hi` before fitting.
    #[arg(long, value_parser = parse_pair)]
    pub window: Option<(f64, f64)>,
    /// 1 to 3; defaults to 3 for `auto` and 1 otherwise.
    #[arg(long)]
    pub max_segments: Option<usize>,
    /// Destination; defaults to fits.csv next to the input.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(format!("expected lo,hi but got {s:?}"));
    }
    let lo = parts[0].parse::<f64>().map_err(|e| format!("{:?}: {e}", parts[0]))?;
    let hi = parts[1].parse::<f64>().map_err(|e| format!("{:?}: {e}", parts[1]))?;
    Ok((lo, hi))
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cli: &Cli) -> CliResult<()> {
    if cli.threads == Some(0) {
        return Err(CliError::Config("threads must be at least 1".into()));
    }
    match &cli.command {
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::Run(a) => {
            let cfg = load_config(a)?;
            run_experiment(&cfg, &cfg.output_dir, cli.threads)
        }
        Command::Sweep(a) => cmd_sweep(a, cli.threads),
        Command::Fit(a) => cmd_fit(a),
        Command::Oracle(a) => cmd_oracle(a),
    }
}

/// Reads the config file (if any), applies flag overrides and validates.
pub fn load_config(a: &ExperimentArgs) -> CliResult<ExperimentConfig> {
    let mut text = match &a.config {
        Some(p) => fs::read_to_string(p).map_err(io_err(p))?,
        None => String::new(),
    };
    if let Some(kind) = &a.system {
        // qualified key ahead of any section; clashes with a kind in the file
        // surface as a duplicate-key error
        text = format!("system.kind = {kind}\n{text}");
    }
    let mut cfg = if text.trim().is_empty() {
        ExperimentConfig::default_for(SystemKind::Harmonic)
    } else {
        parse_config(&text)?
    };
    if let Some(n) = a.n_max {
        cfg.system.n_max = n;
    }
    let b = &a.bath;
    if let Some(n) = b.n_bath {
        cfg.bath.n_oscillators = n;
    }
    if let Some(s) = b.spectral_exponent {
        cfg.bath.spectral_exponent = s;
    }
    if let Some(w) = b.omega_window {
        cfg.bath.omega_window = w;
    }
    if let Some(g) = b.coupling {
        cfg.bath.coupling = g;
    }
    if let Some(seed) = b.freq_seed {
        cfg.bath.frequency_seed = seed;
    }
    if let Some(f) = &b.freq_override {
        cfg.bath.n_oscillators = f.len();
        cfg.bath.frequency_override = Some(f.clone());
    }
    if let Some(dt) = a.dt {
        cfg.integrator.dt = dt;
    }
    if let Some(t) = a.t_max {
        cfg.integrator.t_max = t;
    }
    if let Some(k) = a.sample_stride {
        cfg.integrator.sample_stride = k;
    }
    if let Some(r) = a.realizations {
        cfg.ensemble.n_realizations = r;
    }
    if let Some(seed) = a.seed {
        cfg.ensemble.master_seed = seed;
    }
    if let Some(out) = &a.out {
        cfg.output_dir = out.clone();
    }
    if a.rho {
        cfg.write_rho = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn build_spectrum(cfg: &ExperimentConfig) -> CliResult<SystemSpectrum> {
    let p = &cfg.system.potential;
    let spectrum = match p.kind {
        PotentialKind::Harmonic { omega } => ho_spectrum(omega, p.mass, cfg.system.n_max)?,
        PotentialKind::Morse { .. } => morse_eigensolve(p, Some(1..=cfg.system.n_max))?,
    };
    Ok(spectrum)
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_with<F>(path: PathBuf, f: F) -> CliResult<()>
where
    F: FnOnce(&Path) -> std::io::Result<()>,
{
    f(&path).map_err(|source| CliError::Io { path, source })
}

fn cmd_spectrum(a: &ExperimentArgs) -> CliResult<()> {
    let cfg = load_config(a)?;
    let spectrum = build_spectrum(&cfg)?;
    let bath = cfg.bath.build()?;
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    write_with(dir.join("energies.csv"), |p| output::write_energies(p, &spectrum))?;
    write_with(dir.join("matrix_elements.csv"), |p| output::write_matrix_elements(p, &spectrum))?;
    write_with(dir.join("frequencies.csv"), |p| output::write_frequencies(p, &bath))?;
    Ok(())
}

fn manifest(cfg: &ExperimentConfig, bath: &BathSpec) -> Vec<(String, String)> {
    let kind = match cfg.system_kind() {
        SystemKind::Harmonic => "harmonic",
        SystemKind::Morse => "morse",
    };
    let mut m: Vec<(String, String)> = vec![
        ("schema_version".into(), output::SCHEMA_VERSION.to_string()),
        ("qsd_version".into(), env!("CARGO_PKG_VERSION").into()),
        ("system".into(), kind.into()),
        ("n_max".into(), cfg.system.n_max.to_string()),
        ("n_bath".into(), bath.len().to_string()),
        ("spectral_exponent".into(), output::num(cfg.bath.spectral_exponent)),
        ("coupling".into(), output::num(cfg.bath.coupling)),
        ("frequency_seed".into(), cfg.bath.frequency_seed.to_string()),
        ("frequencies_pinned".into(), cfg.bath.frequency_override.is_some().to_string()),
        ("master_seed".into(), cfg.ensemble.master_seed.to_string()),
        ("realizations".into(), cfg.ensemble.n_realizations.to_string()),
        (
            "realization_seeding".into(),
            "ChaCha8 seeded with master_seed, stream = realization index".into(),
        ),
        ("dt".into(), output::num(cfg.integrator.dt)),
        ("t_max".into(), output::num(cfg.integrator.t_max)),
        ("sample_stride".into(), cfg.integrator.sample_stride.to_string()),
    ];
    for (l, w) in bath.frequencies().iter().enumerate() {
        m.push((format!("omega.{l}"), output::num(*w)));
    }
    m
}

/// Energy fits written next to every run. Segmentation failure is not fatal:
/// the file then holds only its header.
fn energy_fits(obs: &ObservableSeries) -> Vec<FitResult> {
    let seq = [FitModel::Exponential, FitModel::Exponential, FitModel::PowerLaw];
    match detect_regimes(&obs.times, &obs.energy, 3, &seq) {
        Ok(seg) => seg.segments,
        Err(e) => {
            eprintln!("warning: energy segmentation skipped: {e}");
            Vec::new()
        }
    }
}

/// Full pipeline for one configuration, writing into `dir`.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path, threads: Option<usize>) -> CliResult<()> {
    let spectrum = build_spectrum(cfg)?;
    let bath = cfg.bath.build()?;
    let init = initial_state(cfg.system.initial, cfg.system.n_max)?;
    let mut ensemble = cfg.ensemble;
    if threads.is_some() {
        ensemble.parallel_degree = threads;
    }
    let (obs, rho) = run_ensemble(&init, &bath, &spectrum, &cfg.integrator, &ensemble)?;

    ensure_dir(dir)?;
    write_with(dir.join("observables.csv"), |p| output::write_observables(p, "observables", &obs))?;
    write_with(dir.join("levels.csv"), |p| output::write_levels(p, &obs))?;
    write_with(dir.join("phase.csv"), |p| output::write_phase(p, &obs))?;
    if cfg.write_rho {
        write_with(dir.join("rho.csv"), |p| output::write_rho(p, &rho))?;
    }
    let fits = energy_fits(&obs);
    write_with(dir.join("fits.csv"), |p| output::write_fits(p, &fits))?;
    write_with(dir.join("frequencies.csv"), |p| output::write_frequencies(p, &bath))?;
    write_with(dir.join("manifest.csv"), |p| output::write_manifest(p, &manifest(cfg, &bath)))?;
    let echo = dir.join("config.txt");
    fs::write(&echo, cfg.serialize()).map_err(io_err(&echo))?;
    Ok(())
}

fn cmd_sweep(a: &SweepArgs, threads: Option<usize>) -> CliResult<()> {
    let cfg = load_config(&a.experiment)?;
    let n_values = a.n_values.clone().unwrap_or_else(|| cfg.sweep.n_values.clone());
    let s_values = a.s_values.clone().unwrap_or_else(|| cfg.sweep.s_values.clone());
    if n_values.is_empty() && s_values.is_empty() {
        return Err(CliError::Config("sweep needs --n-values and/or --s-values".into()));
    }
    if let Some(s) = s_values.iter().find(|s| !(0.0..=2.0).contains(*s)) {
        return Err(CliError::Config(format!("sweep spectral exponent {s} outside [0, 2]")));
    }
    let ns: Vec<Option<usize>> = if n_values.is_empty() {
        vec![None]
    } else {
        n_values.iter().copied().map(Some).collect()
    };
    let ss: Vec<Option<f64>> = if s_values.is_empty() {
        vec![None]
    } else {
        s_values.iter().copied().map(Some).collect()
    };
    let root = cfg.output_dir.clone();
    ensure_dir(&root)?;
    let index_path = root.join("sweep.csv");
    let mut index = output::create(&index_path, "sweep", &["n_bath", "spectral_exponent", "dir"])
        .map_err(io_err(&index_path))?;
    for n in &ns {
        for s in &ss {
            let mut point = cfg.clone();
            let mut name = Vec::new();
            if let Some(n) = n {
                point.bath.n_oscillators = *n;
                point.bath.frequency_override = None;
                name.push(format!("N{n}"));
            }
            if let Some(s) = s {
                point.bath.spectral_exponent = *s;
                name.push(format!("s{s}"));
            }
            let name = name.join("_");
            let dir = root.join(&name);
            point.output_dir = dir.clone();
            run_experiment(&point, &dir, threads)?;
            index
                .write_record([
                    point.bath.len().to_string(),
                    output::num(point.bath.spectral_exponent),
                    name,
                ])
                .map_err(|e| CliError::Io { path: index_path.clone(), source: e.into() })?;
        }
    }
    index.flush().map_err(io_err(&index_path))
}

fn cmd_oracle(a: &OracleArgs) -> CliResult<()> {
    let cfg = load_config(&a.experiment)?;
    let spectrum = build_spectrum(&cfg)?;
    let bath = cfg.bath.build()?;
    if bath.len() > 2 {
        return Err(CliError::Config(format!(
            "oracle handles at most 2 bath oscillators, got {}",
            bath.len()
        )));
    }
    let init = initial_state(cfg.system.initial, cfg.system.n_max)?;
    let obs = exact_small_bath_reference(&init, &bath, &spectrum, a.fock_cut, &cfg.integrator)?;
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    write_with(dir.join("oracle.csv"), |p| output::write_observables(p, "oracle", &obs))?;
    write_with(dir.join("frequencies.csv"), |p| output::write_frequencies(p, &bath))?;
    let mut m = manifest(&cfg, &bath);
    m.push(("fock_cut".into(), a.fock_cut.to_string()));
    write_with(dir.join("manifest.csv"), |p| output::write_manifest(p, &m))?;
    Ok(())
}

/// Reads `(t, column)` from an observables or oracle file.
pub fn read_column(path: &Path, column: &str) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .flat_map(|l| [l, "\n"])
        .collect();
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("no column {name:?}; expected {}", OBSERVABLE_COLUMNS.join(","))))
    };
    let (it, iy) = (find("t")?, find(column)?);
    let (mut t, mut y) = (Vec::new(), Vec::new());
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let get = |i: usize| {
            rec.get(i)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| bad(format!("row {}: unreadable value", row + 1)))
        };
        t.push(get(it)?);
        y.push(get(iy)?);
    }
    Ok((t, y))
}

fn cmd_fit(a: &FitArgs) -> CliResult<()> {
    let column = match a.column {
        Column::Energy => "energy",
        Column::Purity => "purity",
    };
    let (mut t, mut y) = read_column(&a.input, column)?;
    if let Some((lo, hi)) = a.window {
        if !(lo < hi) {
            return Err(CliError::Config(format!("window ({lo}, {hi}) is empty")));
        }
        let keep: Vec<usize> = (0..t.len()).filter(|&i| t[i] >= lo && t[i] <= hi).collect();
        t = keep.iter().map(|&i| t[i]).collect();
        y = keep.iter().map(|&i| y[i]).collect();
    }
    let (seq, default_max) = match a.model {
        ModelChoice::Auto => (vec![FitModel::Exponential, FitModel::Exponential, FitModel::PowerLaw], 3),
        ModelChoice::Exp => (vec![FitModel::Exponential], 1),
        ModelChoice::Pow => (vec![FitModel::PowerLaw], 1),
    };
    let max = a.max_segments.unwrap_or(default_max);
    if !(1..=3).contains(&max) {
        return Err(CliError::Config(format!("--max-segments must be 1 to 3, got {max}")));
    }
    if t.is_empty() {
        return Err(CliError::Config("no samples to fit".into()));
    }
    let fits = if max == 1 && a.model != ModelChoice::Auto {
        let whole = (t[0], t[t.len() - 1]);
        let f = match a.model {
            ModelChoice::Exp => fit_exponential(&t, &y, whole)?,
            // t = 0 has no logarithm; start at the first positive time
            _ => match t.iter().position(|&x| x > 0.0) {
                Some(i) => fit_powerlaw(&t, &y, (t[i], whole.1))?,
                None => return Err(CliError::Config("power law needs samples with t > 0".into())),
            },
        };
        vec![f]
    } else {
        detect_regimes(&t, &y, max, &seq)?.segments
    };
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| a.input.parent().unwrap_or(Path::new(".")).join("fits.csv"));
    write_with(out, |p| output::write_fits(p, &fits))
}
