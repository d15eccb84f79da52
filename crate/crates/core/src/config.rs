//! Flat `key = value` run configuration with dotted keys.
//!
//! ```text
//! # comment
//! grid.n = 128
//! geometry.kind = flat
//! initial.profile = mode
//! ```

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::dno::Geometry;
use crate::error::{Error, Result};
use crate::evolution::{Model, Regularity, Scheme, System, WaveState};
use crate::field::{Field, Grid};
use crate::smoothing::{packet_state, PacketParams};

/// Raw key/value pairs in file order, duplicates rejected.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '.' || c == '_') {
                return Err(Error::Config(format!("line {}: bad key `{k}`", i + 1)));
            }
            if entries.insert(k.to_string(), (i + 1, v.to_string())).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", i + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    fn typed<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.entries.get(key) {
            None => Ok(default),
            Some((line, v)) => v
                .parse()
                .map_err(|_| Error::Config(format!("line {line}: cannot parse `{v}` for {key}"))),
        }
    }

    fn keys(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum InitialData {
    Zero,
    /// `eta = a cos(k x)`, `psi = 0`; `k` counts periods in the box.
    Mode { k: u32, amplitude: f64 },
    /// Gaussian hump at rest.
    Gaussian { amplitude: f64, width: f64, center: f64 },
    /// Fixed two-field mix of the first few box modes.
    Multimode { amplitude: f64 },
    /// `sech^2` hump at rest.
    Solitary { amplitude: f64, width: f64 },
    /// Right-moving lacunary packet used for the smoothing runs.
    Packet { amplitude: f64, width: f64 },
}

impl InitialData {
    pub fn build(&self, grid: &Grid, cfg: &RunConfig) -> Result<WaveState> {
        let k0 = 2.0 * PI / grid.length();
        let zero = Field::zeros(grid);
        let (eta, psi) = match *self {
            InitialData::Zero => (zero.clone(), zero),
            InitialData::Mode { k, amplitude } => {
                let k = k as f64 * k0;
                (Field::from_fn(grid, |x| amplitude * (k * x).cos()), zero)
            }
            InitialData::Gaussian { amplitude, width, center } => (
                Field::from_fn(grid, |x| amplitude * (-(x - center).powi(2) / (2.0 * width * width)).exp()),
                zero,
            ),
            InitialData::Multimode { amplitude: a } => (
                Field::from_fn(grid, |x| a * ((k0 * x).cos() + 0.4 * (2.0 * k0 * x + 0.3).sin())),
                Field::from_fn(grid, |x| a * (0.7 * (k0 * x).sin() - 0.3 * (3.0 * k0 * x).cos())),
            ),
            InitialData::Solitary { amplitude, width } => {
                (Field::from_fn(grid, |x| amplitude / (x / width).cosh().powi(2)), zero)
            }
            InitialData::Packet { amplitude, width } => {
                return packet_state(grid, &cfg.packet_params(amplitude, width));
            }
        };
        WaveState::new(0.0, eta, psi)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub n: usize,
    pub length: f64,
    pub geometry: Geometry,
    pub nz: usize,
    pub initial: InitialData,
    pub scheme: Scheme,
    /// `None` picks the stepper default.
    pub dt: Option<f64>,
    pub t_final: f64,
    pub epsilon: f64,
    pub s: f64,
    pub delta: f64,
    pub sample_stride: usize,
    pub snapshot_stride: usize,
    pub eps_doi: f64,
    pub sweep: Vec<usize>,
    pub garding_budget: f64,
    pub output: PathBuf,
}

const KNOWN: &[&str] = &[
    "seed",
    "grid.n",
    "grid.length",
    "geometry.kind",
    "geometry.depth",
    "geometry.g",
    "geometry.kappa",
    "geometry.nz",
    "initial.profile",
    "initial.amplitude",
    "initial.k",
    "initial.width",
    "initial.center",
    "evolution.scheme",
    "evolution.dt",
    "evolution.T",
    "evolution.epsilon",
    "diagnostics.s",
    "diagnostics.delta",
    "diagnostics.sample_stride",
    "diagnostics.snapshot_stride",
    "smoothing.eps_doi",
    "smoothing.sweep",
    "smoothing.garding_budget",
    "output.dir",
];

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        if let Some(k) = kv.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key `{k}`")));
        }
        let depth = kv.typed("geometry.depth", 1.0)?;
        let geometry = match kv.get("geometry.kind").unwrap_or("flat") {
            "flat" => Geometry::flat(depth),
            "strip" | "parallel_strip" => Geometry::strip(depth),
            other => return Err(Error::Config(format!("unknown geometry kind `{other}`"))),
        }
        .with_gravity(kv.typed("geometry.g", 1.0)?)
        .with_kappa(kv.typed("geometry.kappa", 1.0)?);
        let amplitude = kv.typed("initial.amplitude", 0.01)?;
        let width = kv.typed("initial.width", 1.0)?;
        let initial = match kv.get("initial.profile").unwrap_or("zero") {
            "zero" => InitialData::Zero,
            "mode" => InitialData::Mode {
                k: kv.typed("initial.k", 1)?,
                amplitude,
            },
            "gaussian" => InitialData::Gaussian {
                amplitude,
                width,
                center: kv.typed("initial.center", 0.0)?,
            },
            "multimode" => InitialData::Multimode { amplitude },
            "solitary" => InitialData::Solitary { amplitude, width },
            "packet" => InitialData::Packet { amplitude, width },
            other => return Err(Error::Config(format!("unknown initial profile `{other}`"))),
        };
        let dt = match kv.get("evolution.dt") {
            None | Some("auto") => None,
            Some(_) => Some(kv.typed("evolution.dt", 0.0)?),
        };
        let sweep = match kv.get("smoothing.sweep") {
            None | Some("") | Some("none") => vec![],
            Some(v) => v
                .split(',')
                .map(|p| p.trim().parse().map_err(|_| Error::Config(format!("bad sweep entry `{p}`"))))
                .collect::<Result<_>>()?,
        };
        let cfg = Self {
            seed: kv.typed("seed", 0)?,
            n: kv.typed("grid.n", 128)?,
            length: kv.typed("grid.length", 2.0 * PI)?,
            geometry,
            nz: kv.typed("geometry.nz", 24)?,
            initial,
            scheme: kv.typed("evolution.scheme", Scheme::Etdrk4)?,
            dt,
            t_final: kv.typed("evolution.T", 1.0)?,
            epsilon: kv.typed("evolution.epsilon", 0.0)?,
            s: kv.typed("diagnostics.s", 2.75)?,
            delta: kv.typed("diagnostics.delta", 0.1)?,
            sample_stride: kv.typed("diagnostics.sample_stride", 1)?,
            snapshot_stride: kv.typed("diagnostics.snapshot_stride", 0)?,
            eps_doi: kv.typed("smoothing.eps_doi", 0.05)?,
            sweep,
            garding_budget: kv.typed("smoothing.garding_budget", 1.0)?,
            output: PathBuf::from(kv.get("output.dir").unwrap_or("out")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every field against the preconditions of the modules it feeds.
    pub fn validate(&self) -> Result<()> {
        Grid::new(self.n, self.length)?;
        Model::new(self.geometry, self.nz)?;
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad("evolution.dt must be positive");
            }
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return bad("evolution.T must be non-negative");
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad("evolution.epsilon must be non-negative");
        }
        if !(self.delta > 0.0) {
            return bad("diagnostics.delta must be positive");
        }
        if !self.s.is_finite() {
            return bad("diagnostics.s must be finite");
        }
        if self.sample_stride == 0 {
            return bad("diagnostics.sample_stride must be at least 1");
        }
        if !(self.eps_doi > 0.0 && self.eps_doi < 0.5) {
            return bad("smoothing.eps_doi must lie in (0, 1/2)");
        }
        if !(self.garding_budget >= 0.0) {
            return bad("smoothing.garding_budget must be non-negative");
        }
        for &n in &self.sweep {
            Grid::new(n, self.length)?;
        }
        match self.initial {
            InitialData::Mode { k, amplitude } => {
                if k == 0 || k as usize >= self.n / 2 {
                    return bad("initial.k must lie in 1..n/2");
                }
                if !amplitude.is_finite() {
                    return bad("initial.amplitude must be finite");
                }
            }
            InitialData::Gaussian { width, .. } | InitialData::Solitary { width, .. } | InitialData::Packet { width, .. } => {
                if !(width > 0.0) {
                    return bad("initial.width must be positive");
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n, self.length)
    }

    pub fn model(&self) -> Result<Model> {
        Model::new(self.geometry, self.nz)
    }

    pub fn system(&self) -> System {
        if self.epsilon > 0.0 {
            System::Mollified { eps: self.epsilon }
        } else {
            System::Zakharov
        }
    }

    pub fn regularity(&self) -> Regularity {
        Regularity {
            s: self.s,
            delta: self.delta,
        }
    }

    pub fn packet_params(&self, amplitude: f64, width: f64) -> PacketParams {
        PacketParams {
            length: self.length,
            s: self.s,
            delta: self.delta,
            amp: amplitude,
            width,
            t_final: self.t_final,
            depth: self.geometry.depth(),
            nz: self.nz,
            cfl: PacketParams::default().cfl,
        }
    }

    pub fn initial_state(&self) -> Result<WaveState> {
        self.initial.build(&self.grid()?, self)
    }
}
