//! Plain-text experiment descriptions.
//!
//! The format is a small INI dialect:
//!
//! ```text
//! # comment
//! [system]
//! kind = morse
//! n_max = 38
//!
//! [bath]
//! n = 10
//! omega_window = 1.1, 2.1
//! ```
//!
//! Keys may also be written fully qualified (`system.kind = harmonic`) outside
//! any section. Anything not given takes the default for the chosen system
//! kind. [`ExperimentConfig::serialize`] writes every field, so a serialized
//! config parses back to an identical value.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::bath::BathSpec;
use crate::dynamics::{InitialKind, IntegratorConfig, NormalizationPolicy};
use crate::ensemble::EnsembleConfig;
use crate::error::{Error, Result};
use crate::spectra::{Grid, PotentialKind, PotentialSpec};

/// How the initial coefficients are chosen.
pub type InitialChoice = InitialKind;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub potential: PotentialSpec,
    pub n_max: usize,
    pub initial: InitialChoice,
}

/// Bath parameters; the frequencies themselves are drawn by [`BathConfig::build`].
#[derive(Debug, Clone, PartialEq)]
pub struct BathConfig {
    pub n_oscillators: usize,
    pub spectral_exponent: f64,
    pub omega_window: (f64, f64),
    pub coupling: f64,
    pub frequency_seed: u64,
    /// Pinned frequencies; when set they replace the sampled ones.
    pub frequency_override: Option<Vec<f64>>,
}

impl BathConfig {
    pub fn build(&self) -> Result<BathSpec> {
        if let Some(w) = &self.frequency_override {
            if w.is_empty() {
                return Ok(BathSpec::empty());
            }
            return BathSpec::with_frequencies(w.clone(), self.coupling);
        }
        if self.n_oscillators == 0 {
            return Ok(BathSpec::empty());
        }
        BathSpec::sampled(
            self.n_oscillators,
            self.spectral_exponent,
            self.omega_window,
            self.coupling,
            self.frequency_seed,
        )
    }

    /// Number of oscillators the built bath will hold.
    pub fn len(&self) -> usize {
        self.frequency_override
            .as_ref()
            .map_or(self.n_oscillators, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepConfig {
    pub n_values: Vec<usize>,
    pub s_values: Vec<f64>,
}

impl SweepConfig {
    pub fn is_empty(&self) -> bool {
        self.n_values.is_empty() && self.s_values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub bath: BathConfig,
    pub integrator: IntegratorConfig,
    pub ensemble: EnsembleConfig,
    pub sweep: SweepConfig,
    pub output_dir: PathBuf,
    /// Also write the full reduced density matrix.
    pub write_rho: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    Harmonic,
    Morse,
}

impl ExperimentConfig {
    /// Uniform superposition of 15 oscillator levels, ω = 1, g = 0.01,
    /// frequencies in (1.1, 2.1), 500 realizations.
    pub fn harmonic_default() -> Self {
        Self {
            system: SystemConfig {
                potential: PotentialSpec {
                    kind: PotentialKind::Harmonic { omega: 1.0 },
                    mass: 1.0,
                    grid: Grid::new(-10.0, 10.0, 1e-3),
                },
                n_max: 15,
                initial: InitialKind::UniformEntangled,
            },
            bath: BathConfig {
                n_oscillators: 10,
                spectral_exponent: 1.0,
                omega_window: (1.1, 2.1),
                coupling: 0.01,
                frequency_seed: 1,
                frequency_override: None,
            },
            integrator: IntegratorConfig::default(),
            ensemble: EnsembleConfig::default(),
            sweep: SweepConfig::default(),
            output_dir: PathBuf::from("out"),
            write_rho: false,
        }
    }

    /// Morse oscillator `D_e = 30, a = 0.08, r_e = 0, m = 1` with all 38 bound
    /// levels, a Gaussian packet on levels 9..=23 and g = 0.001.
    pub fn morse_default() -> Self {
        let mut cfg = Self::harmonic_default();
        cfg.system = SystemConfig {
            potential: PotentialSpec::morse_default(),
            n_max: 38,
            initial: InitialKind::morse_packet(),
        };
        cfg.bath.coupling = 0.001;
        cfg
    }

    pub fn default_for(kind: SystemKind) -> Self {
        match kind {
            SystemKind::Harmonic => Self::harmonic_default(),
            SystemKind::Morse => Self::morse_default(),
        }
    }

    pub fn system_kind(&self) -> SystemKind {
        match self.system.potential.kind {
            PotentialKind::Harmonic { .. } => SystemKind::Harmonic,
            PotentialKind::Morse { .. } => SystemKind::Morse,
        }
    }

    /// Cross-field consistency checks.
    pub fn validate(&self) -> Result<()> {
        self.system.potential.validate()?;
        if self.system.n_max == 0 {
            return Err(Error::invalid("n_max must be at least 1"));
        }
        if let InitialKind::GaussianPacket { sigma, window: (lo, hi), .. } = self.system.initial {
            if lo == 0 || lo > hi || hi > self.system.n_max {
                return Err(Error::invalid(format!(
                    "packet window {lo}..={hi} must lie inside 1..={}",
                    self.system.n_max
                )));
            }
            if !(sigma > 0.0) {
                return Err(Error::invalid("packet sigma must be positive"));
            }
        }
        let b = &self.bath;
        if !(0.0..=2.0).contains(&b.spectral_exponent) {
            return Err(Error::invalid(format!(
                "spectral exponent must lie in [0, 2], got {}",
                b.spectral_exponent
            )));
        }
        if !(b.omega_window.0 > 0.0 && b.omega_window.0 < b.omega_window.1) {
            return Err(Error::invalid(format!(
                "frequency window ({}, {}) is invalid",
                b.omega_window.0, b.omega_window.1
            )));
        }
        if !(b.coupling > 0.0 && b.coupling.is_finite()) {
            return Err(Error::invalid(format!("coupling must be positive, got {}", b.coupling)));
        }
        if let Some(w) = &b.frequency_override {
            if w.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
                return Err(Error::invalid("pinned frequencies must be positive"));
            }
        }
        self.integrator.validate()?;
        if self.ensemble.n_realizations == 0 {
            return Err(Error::invalid("need at least one realization"));
        }
        if self.ensemble.parallel_degree == Some(0) {
            return Err(Error::invalid("threads must be at least 1"));
        }
        if let Some(s) = self.sweep.s_values.iter().find(|s| !(0.0..=2.0).contains(*s)) {
            return Err(Error::invalid(format!("sweep spectral exponent {s} outside [0, 2]")));
        }
        Ok(())
    }

    /// Writes every field in the format read by [`parse_config`].
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let p = &self.system.potential;
        s.push_str("[system]\n");
        match p.kind {
            PotentialKind::Harmonic { omega } => {
                s.push_str("kind = harmonic\n");
                let _ = writeln!(s, "omega = {omega:?}");
            }
            PotentialKind::Morse { depth, width, r_e } => {
                s.push_str("kind = morse\n");
                let _ = writeln!(s, "depth = {depth:?}");
                let _ = writeln!(s, "width = {width:?}");
                let _ = writeln!(s, "r_e = {r_e:?}");
            }
        }
        let _ = writeln!(s, "mass = {:?}", p.mass);
        let _ = writeln!(s, "grid = {:?}, {:?}, {:?}", p.grid.r_min, p.grid.r_max, p.grid.step);
        let _ = writeln!(s, "n_max = {}", self.system.n_max);
        match self.system.initial {
            InitialKind::UniformEntangled => s.push_str("initial = uniform\n"),
            InitialKind::GaussianPacket { center, sigma, window } => {
                s.push_str("initial = packet\n");
                let _ = writeln!(s, "packet_center = {center:?}");
                let _ = writeln!(s, "packet_sigma = {sigma:?}");
                let _ = writeln!(s, "packet_window = {}, {}", window.0, window.1);
            }
        }
        let b = &self.bath;
        s.push_str("\n[bath]\n");
        let _ = writeln!(s, "n = {}", b.n_oscillators);
        let _ = writeln!(s, "spectral_exponent = {:?}", b.spectral_exponent);
        let _ = writeln!(s, "omega_window = {:?}, {:?}", b.omega_window.0, b.omega_window.1);
        let _ = writeln!(s, "coupling = {:?}", b.coupling);
        let _ = writeln!(s, "frequency_seed = {}", b.frequency_seed);
        if let Some(w) = &b.frequency_override {
            let _ = writeln!(s, "frequencies = {}", join_f64(w));
        }
        let i = &self.integrator;
        s.push_str("\n[integrator]\n");
        let _ = writeln!(s, "dt = {:?}", i.dt);
        let _ = writeln!(s, "t_max = {:?}", i.t_max);
        let _ = writeln!(s, "sample_stride = {}", i.sample_stride);
        let _ = writeln!(
            s,
            "normalization = {}",
            match i.normalization {
                NormalizationPolicy::Raw => "raw",
                NormalizationPolicy::TraceNormalized => "trace",
            }
        );
        let e = &self.ensemble;
        s.push_str("\n[ensemble]\n");
        let _ = writeln!(s, "realizations = {}", e.n_realizations);
        let _ = writeln!(s, "seed = {}", e.master_seed);
        if let Some(t) = e.parallel_degree {
            let _ = writeln!(s, "threads = {t}");
        }
        if !self.sweep.is_empty() {
            s.push_str("\n[sweep]\n");
            if !self.sweep.n_values.is_empty() {
                let v: Vec<String> = self.sweep.n_values.iter().map(|n| n.to_string()).collect();
                let _ = writeln!(s, "n_values = {}", v.join(", "));
            }
            if !self.sweep.s_values.is_empty() {
                let _ = writeln!(s, "s_values = {}", join_f64(&self.sweep.s_values));
            }
        }
        s.push_str("\n[output]\n");
        let _ = writeln!(s, "dir = {}", self.output_dir.display());
        let _ = writeln!(s, "rho = {}", self.write_rho);
        s
    }
}

fn join_f64(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

struct Entries {
    map: BTreeMap<String, Entry>,
}

fn config_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map: BTreeMap<String, Entry> = BTreeMap::new();
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| config_err(line, "unterminated section header"))?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(config_err(line, format!("unknown section [{name}]")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| config_err(line, format!("expected `key = value`, got `{content}`")))?;
            let key = key.trim();
            let full = match (&section, key.contains('.')) {
                (_, true) => key.to_string(),
                (Some(s), false) => format!("{s}.{key}"),
                (None, false) => {
                    return Err(config_err(line, format!("key `{key}` outside any section")))
                }
            };
            if !KEYS.contains(&full.as_str()) {
                return Err(config_err(line, format!("unknown key `{full}`")));
            }
            if let Some(prev) = map.get(&full) {
                return Err(config_err(
                    line,
                    format!("duplicate key `{full}` (first set on line {})", prev.line),
                ));
            }
            map.insert(
                full,
                Entry {
                    value: value.trim().to_string(),
                    line,
                    used: false,
                },
            );
        }
        Ok(Self { map })
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.map.get_mut(key).map(|e| {
            e.used = true;
            (e.value.clone(), e.line)
        })
    }

    fn get<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Result<Option<(T, usize)>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse::<T>()
                .map(|x| Some((x, line)))
                .map_err(|_| config_err(line, format!("`{key}`: expected {what}, got `{v}`"))),
        }
    }

    fn f64(&mut self, key: &str, slot: &mut f64) -> Result<()> {
        if let Some((v, line)) = self.get::<f64>(key, "a number")? {
            if !v.is_finite() {
                return Err(config_err(line, format!("`{key}` must be finite")));
            }
            *slot = v;
        }
        Ok(())
    }

    fn usize(&mut self, key: &str, slot: &mut usize) -> Result<()> {
        if let Some((v, _)) = self.get::<usize>(key, "a non-negative integer")? {
            *slot = v;
        }
        Ok(())
    }

    fn list<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Result<Option<(Vec<T>, usize)>> {
        let Some((v, line)) = self.take(key) else {
            return Ok(None);
        };
        if v.is_empty() {
            return Ok(Some((Vec::new(), line)));
        }
        v.split(',')
            .map(|x| {
                x.trim()
                    .parse::<T>()
                    .map_err(|_| config_err(line, format!("`{key}`: expected {what}, got `{}`", x.trim())))
            })
            .collect::<Result<Vec<T>>>()
            .map(|l| Some((l, line)))
    }

    fn line_of(&self, key: &str) -> usize {
        self.map.get(key).map_or(0, |e| e.line)
    }
}

const SECTIONS: &[&str] = &["system", "bath", "integrator", "ensemble", "sweep", "output"];

const KEYS: &[&str] = &[
    "system.kind",
    "system.omega",
    "system.depth",
    "system.width",
    "system.r_e",
    "system.mass",
    "system.grid",
    "system.n_max",
    "system.initial",
    "system.packet_center",
    "system.packet_sigma",
    "system.packet_window",
    "bath.n",
    "bath.spectral_exponent",
    "bath.omega_window",
    "bath.coupling",
    "bath.frequency_seed",
    "bath.frequencies",
    "integrator.dt",
    "integrator.t_max",
    "integrator.sample_stride",
    "integrator.normalization",
    "ensemble.realizations",
    "ensemble.seed",
    "ensemble.threads",
    "sweep.n_values",
    "sweep.s_values",
    "output.dir",
    "output.rho",
];

fn pair<T: Copy>(v: Vec<T>, key: &str, line: usize) -> Result<(T, T)> {
    match v.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(config_err(line, format!("`{key}` takes two values"))),
    }
}

/// Parses a config, filling unspecified fields with the defaults of the
/// selected system kind (harmonic when `system.kind` is absent).
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut e = Entries::parse(text)?;
    let kind = match e.take("system.kind") {
        None => SystemKind::Harmonic,
        Some((v, line)) => match v.as_str() {
            "harmonic" | "ho" => SystemKind::Harmonic,
            "morse" => SystemKind::Morse,
            other => return Err(config_err(line, format!("unknown system kind `{other}`"))),
        },
    };
    let mut cfg = ExperimentConfig::default_for(kind);

    let pot = &mut cfg.system.potential;
    match &mut pot.kind {
        PotentialKind::Harmonic { omega } => {
            e.f64("system.omega", omega)?;
            for k in ["system.depth", "system.width", "system.r_e"] {
                if e.map.contains_key(k) {
                    return Err(config_err(e.line_of(k), format!("`{k}` applies to the Morse potential only")));
                }
            }
        }
        PotentialKind::Morse { depth, width, r_e } => {
            e.f64("system.depth", depth)?;
            e.f64("system.width", width)?;
            e.f64("system.r_e", r_e)?;
            if e.map.contains_key("system.omega") {
                return Err(config_err(e.line_of("system.omega"), "`system.omega` applies to the harmonic potential only"));
            }
        }
    }
    e.f64("system.mass", &mut pot.mass)?;
    if let Some((g, line)) = e.list::<f64>("system.grid", "a number")? {
        match g.as_slice() {
            [a, b, h] => pot.grid = Grid::new(*a, *b, *h),
            _ => return Err(config_err(line, "`system.grid` takes r_min, r_max, step")),
        }
    }
    e.usize("system.n_max", &mut cfg.system.n_max)?;
    let packet_line = e.line_of("system.initial");
    if let Some((v, line)) = e.take("system.initial") {
        cfg.system.initial = match v.as_str() {
            "uniform" => InitialKind::UniformEntangled,
            "packet" => match cfg.system.initial {
                p @ InitialKind::GaussianPacket { .. } => p,
                InitialKind::UniformEntangled => InitialKind::morse_packet(),
            },
            other => return Err(config_err(line, format!("unknown initial state `{other}`"))),
        };
    }
    let packet_keys = ["system.packet_center", "system.packet_sigma", "system.packet_window"];
    match &mut cfg.system.initial {
        InitialKind::GaussianPacket { center, sigma, window } => {
            e.f64("system.packet_center", center)?;
            e.f64("system.packet_sigma", sigma)?;
            if let Some((w, line)) = e.list::<usize>("system.packet_window", "a level index")? {
                *window = pair(w, "system.packet_window", line)?;
            }
        }
        InitialKind::UniformEntangled => {
            if let Some(k) = packet_keys.iter().find(|k| e.map.contains_key(**k)) {
                return Err(config_err(e.line_of(k), format!("`{k}` requires `initial = packet`")));
            }
        }
    }

    let b = &mut cfg.bath;
    e.usize("bath.n", &mut b.n_oscillators)?;
    e.f64("bath.spectral_exponent", &mut b.spectral_exponent)?;
    if let Some((w, line)) = e.list::<f64>("bath.omega_window", "a number")? {
        b.omega_window = pair(w, "bath.omega_window", line)?;
    }
    e.f64("bath.coupling", &mut b.coupling)?;
    if let Some((s, _)) = e.get::<u64>("bath.frequency_seed", "a non-negative integer")? {
        b.frequency_seed = s;
    }
    if let Some((w, _)) = e.list::<f64>("bath.frequencies", "a number")? {
        b.frequency_override = Some(w);
    }

    let i = &mut cfg.integrator;
    e.f64("integrator.dt", &mut i.dt)?;
    e.f64("integrator.t_max", &mut i.t_max)?;
    e.usize("integrator.sample_stride", &mut i.sample_stride)?;
    if let Some((v, line)) = e.take("integrator.normalization") {
        i.normalization = match v.as_str() {
            "raw" => NormalizationPolicy::Raw,
            "trace" => NormalizationPolicy::TraceNormalized,
            other => return Err(config_err(line, format!("unknown normalization `{other}`"))),
        };
    }

    e.usize("ensemble.realizations", &mut cfg.ensemble.n_realizations)?;
    if let Some((s, _)) = e.get::<u64>("ensemble.seed", "a non-negative integer")? {
        cfg.ensemble.master_seed = s;
    }
    if let Some((t, _)) = e.get::<usize>("ensemble.threads", "a positive integer")? {
        cfg.ensemble.parallel_degree = Some(t);
    }

    if let Some((v, _)) = e.list::<usize>("sweep.n_values", "a non-negative integer")? {
        cfg.sweep.n_values = v;
    }
    if let Some((v, _)) = e.list::<f64>("sweep.s_values", "a number")? {
        cfg.sweep.s_values = v;
    }
    if let Some((v, _)) = e.take("output.dir") {
        cfg.output_dir = PathBuf::from(v);
    }
    if let Some((v, _)) = e.get::<bool>("output.rho", "true or false")? {
        cfg.write_rho = v;
    }
    debug_assert!(e.map.values().all(|x| x.used));

    cfg.validate().map_err(|err| {
        let line = blame(&err, &e, packet_line);
        match err {
            Error::InvalidParameter(m) => config_err(line, m),
            other => config_err(line, other.to_string()),
        }
    })?;
    Ok(cfg)
}

/// Best guess at the line responsible for a validation failure.
fn blame(err: &Error, e: &Entries, packet_line: usize) -> usize {
    let msg = err.to_string();
    let candidates: &[(&str, &str)] = &[
        ("sweep spectral", "sweep.s_values"),
        ("spectral exponent", "bath.spectral_exponent"),
        ("frequency window", "bath.omega_window"),
        ("coupling", "bath.coupling"),
        ("pinned", "bath.frequencies"),
        ("packet window", "system.packet_window"),
        ("packet sigma", "system.packet_sigma"),
        ("n_max", "system.n_max"),
        ("mass", "system.mass"),
        ("grid", "system.grid"),
        ("omega", "system.omega"),
        ("Morse", "system.depth"),
        ("whole number of steps", "integrator.t_max"),
        ("dt must", "integrator.dt"),
        ("sample_stride", "integrator.sample_stride"),
        ("realization", "ensemble.realizations"),
        ("threads", "ensemble.threads"),
    ];
    for (needle, key) in candidates {
        if msg.contains(needle) {
            let line = e.line_of(key);
            if line > 0 {
                return line;
            }
        }
    }
    if msg.contains("packet") {
        return packet_line;
    }
    0
}
