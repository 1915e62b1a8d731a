//! Run configuration: flat `section.key = value` lines with `#` comments,
//! overridden by `--set section.key=value` flags.
//!
//! Precedence from lowest to highest: built-in defaults, the
//! `YMLAB_OUTPUT_DIR` environment variable (for `output.dir` only), the
//! config file, then `--set` flags in command-line order.

use std::path::{Path, PathBuf};

use serde::Serialize;
use ymlab_core::cone::{BallGrid, BUILTIN_FIELDS};
use ymlab_core::GroupId;

pub const OUTPUT_DIR_ENV: &str = "YMLAB_OUTPUT_DIR";

#[derive(Debug, thiserror::Error)]
#[error("config key `{key}`: {reason}")]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

fn err(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError { key: key.to_owned(), reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowStart {
    Flat,
    Random,
    NegativeMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Background {
    Flat,
    Flux,
}

#[derive(Debug, Clone, Serialize)]
pub struct LatticeSection {
    pub dim: usize,
    pub extent: usize,
    pub spacing: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowSection {
    pub dt: f64,
    pub t_max: f64,
    pub grad_tol: f64,
    pub energy_drop_eps: f64,
    pub start: FlowStart,
    pub amplitude: f64,
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GaugeSection {
    pub newton_tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSection {
    pub count: usize,
    pub background: Background,
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticsSection {
    #[serde(rename = "window_L")]
    pub window_l: f64,
    pub delta: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub eta: f64,
    pub e0: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConeSection {
    pub n: usize,
    pub field: String,
    pub lambda: f64,
    pub rho_min: f64,
    pub radial_intervals: usize,
    pub angular_order: usize,
}

/// Every setting a command can read. Serializes in key order for the
/// metadata block of JSON reports; `output.dir` is left out so that reports
/// do not depend on where they were written.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub lattice: LatticeSection,
    #[serde(serialize_with = "group_name")]
    pub group: GroupId,
    pub seed: u64,
    pub flow: FlowSection,
    pub gauge: GaugeSection,
    pub spectrum: SpectrumSection,
    pub asymptotics: AsymptoticsSection,
    pub cone: ConeSection,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

fn group_name<S: serde::Serializer>(g: &GroupId, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(match g {
        GroupId::U1 => "u1",
        GroupId::Su2 => "su2",
    })
}

pub const KEYS: [&str; 28] = [
    "lattice.dim",
    "lattice.extent",
    "lattice.spacing",
    "group",
    "seed",
    "flow.dt",
    "flow.t_max",
    "flow.grad_tol",
    "flow.energy_drop_eps",
    "flow.start",
    "flow.amplitude",
    "flow.checkpoint_every",
    "gauge.newton_tol",
    "spectrum.count",
    "spectrum.background",
    "asymptotics.window_L",
    "asymptotics.delta",
    "asymptotics.delta1",
    "asymptotics.delta2",
    "asymptotics.eta",
    "asymptotics.e0",
    "cone.n",
    "cone.field",
    "cone.lambda",
    "cone.rho_min",
    "cone.radial_intervals",
    "cone.angular_order",
    "output.dir",
];

impl Default for RunConfig {
    fn default() -> Self {
        let grid = BallGrid::default();
        RunConfig {
            lattice: LatticeSection { dim: 4, extent: 4, spacing: 1.0 },
            group: GroupId::Su2,
            seed: 0,
            flow: FlowSection {
                dt: 0.05,
                t_max: 100.0,
                grad_tol: 1e-6,
                energy_drop_eps: 1e-3,
                start: FlowStart::Random,
                amplitude: 0.05,
                checkpoint_every: 0,
            },
            gauge: GaugeSection { newton_tol: 1e-10 },
            spectrum: SpectrumSection { count: 8, background: Background::Flat },
            asymptotics: AsymptoticsSection { window_l: 1.0, delta: 0.1, delta1: 1.0, delta2: 1.0, eta: 0.1, e0: 0.0 },
            cone: ConeSection {
                n: 5,
                field: "abelian_cone".into(),
                lambda: 0.5,
                rho_min: grid.rho_min,
                radial_intervals: grid.radial_intervals,
                angular_order: grid.angular_order,
            },
            output_dir: PathBuf::from("ymlab-out"),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| err(key, format!("cannot parse {value:?}: {e}")))
}

impl RunConfig {
    /// Defaults with the environment applied.
    pub fn from_env() -> Self {
        let mut cfg = RunConfig::default();
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
            cfg.output_dir = PathBuf::from(dir);
        }
        cfg
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "lattice.dim" => self.lattice.dim = parse(key, v)?,
            "lattice.extent" => self.lattice.extent = parse(key, v)?,
            "lattice.spacing" => self.lattice.spacing = parse(key, v)?,
            "group" => {
                self.group = match v.to_ascii_lowercase().as_str() {
                    "u1" => GroupId::U1,
                    "su2" => GroupId::Su2,
                    _ => return Err(err(key, format!("{v:?} is not u1 or su2"))),
                }
            }
            "seed" => self.seed = parse(key, v)?,
            "flow.dt" => self.flow.dt = parse(key, v)?,
            "flow.t_max" => self.flow.t_max = parse(key, v)?,
            "flow.grad_tol" => self.flow.grad_tol = parse(key, v)?,
            "flow.energy_drop_eps" => self.flow.energy_drop_eps = parse(key, v)?,
            "flow.start" => {
                self.flow.start = match v {
                    "flat" => FlowStart::Flat,
                    "random" => FlowStart::Random,
                    "negative_mode" => FlowStart::NegativeMode,
                    _ => return Err(err(key, format!("{v:?} is not flat, random or negative_mode"))),
                }
            }
            "flow.amplitude" => self.flow.amplitude = parse(key, v)?,
            "flow.checkpoint_every" => self.flow.checkpoint_every = parse(key, v)?,
            "gauge.newton_tol" => self.gauge.newton_tol = parse(key, v)?,
            "spectrum.count" => self.spectrum.count = parse(key, v)?,
            "spectrum.background" => {
                self.spectrum.background = match v {
                    "flat" => Background::Flat,
                    "flux" => Background::Flux,
                    _ => return Err(err(key, format!("{v:?} is not flat or flux"))),
                }
            }
            "asymptotics.window_L" => self.asymptotics.window_l = parse(key, v)?,
            "asymptotics.delta" => self.asymptotics.delta = parse(key, v)?,
            "asymptotics.delta1" => self.asymptotics.delta1 = parse(key, v)?,
            "asymptotics.delta2" => self.asymptotics.delta2 = parse(key, v)?,
            "asymptotics.eta" => self.asymptotics.eta = parse(key, v)?,
            "asymptotics.e0" => self.asymptotics.e0 = parse(key, v)?,
            "cone.n" => self.cone.n = parse(key, v)?,
            "cone.field" => self.cone.field = v.to_owned(),
            "cone.lambda" => self.cone.lambda = parse(key, v)?,
            "cone.rho_min" => self.cone.rho_min = parse(key, v)?,
            "cone.radial_intervals" => self.cone.radial_intervals = parse(key, v)?,
            "cone.angular_order" => self.cone.angular_order = parse(key, v)?,
            "output.dir" => {
                if v.is_empty() {
                    return Err(err(key, "empty path"));
                }
                self.output_dir = PathBuf::from(v)
            }
            _ => return Err(err(key, format!("unknown key (known keys: {})", KEYS.join(", ")))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of a config file.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(line, "expected `section.key = value`"))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err("--config", format!("cannot read {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    /// Applies one `--set key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| err(assignment, "override must read `section.key=value`"))?;
        self.set(key.trim(), value)
    }

    /// Range checks run before any computation.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let l = &self.lattice;
        if !(2..=4).contains(&l.dim) {
            return Err(err("lattice.dim", format!("{} is not 2, 3 or 4", l.dim)));
        }
        if l.extent < 2 {
            return Err(err("lattice.extent", "must be at least 2"));
        }
        if !(l.spacing > 0.0 && l.spacing.is_finite()) {
            return Err(err("lattice.spacing", "must be positive"));
        }
        let f = &self.flow;
        let bound = 0.1 * l.spacing * l.spacing;
        if !(f.dt > 0.0) || f.dt > bound * (1.0 + 1e-12) {
            return Err(err("flow.dt", format!("{} must lie in (0, 0.1 * spacing^2 = {bound}]", f.dt)));
        }
        if !(f.t_max >= 0.0 && f.t_max.is_finite()) {
            return Err(err("flow.t_max", "must be finite and non-negative"));
        }
        if !(f.grad_tol > 0.0) {
            return Err(err("flow.grad_tol", "must be positive"));
        }
        if !(f.energy_drop_eps > 0.0) {
            return Err(err("flow.energy_drop_eps", "must be positive"));
        }
        if !(f.amplitude >= 0.0 && f.amplitude.is_finite()) {
            return Err(err("flow.amplitude", "must be finite and non-negative"));
        }
        if !(self.gauge.newton_tol > 0.0) {
            return Err(err("gauge.newton_tol", "must be positive"));
        }
        if self.spectrum.count == 0 {
            return Err(err("spectrum.count", "must be at least 1"));
        }
        let a = &self.asymptotics;
        if !(a.window_l > 0.0) {
            return Err(err("asymptotics.window_L", "must be positive"));
        }
        if !(a.delta >= 0.0) {
            return Err(err("asymptotics.delta", "must be non-negative"));
        }
        if !(a.eta > 0.0) {
            return Err(err("asymptotics.eta", "must be positive"));
        }
        if !a.e0.is_finite() {
            return Err(err("asymptotics.e0", "must be finite"));
        }
        let c = &self.cone;
        if !(5..=12).contains(&c.n) {
            return Err(err("cone.n", format!("{} is outside 5..=12", c.n)));
        }
        if !BUILTIN_FIELDS.contains(&c.field.as_str()) {
            return Err(err("cone.field", format!("{:?} is not one of {}", c.field, BUILTIN_FIELDS.join(", "))));
        }
        if !(c.lambda > 0.0 && c.lambda <= 1.0) {
            return Err(err("cone.lambda", "must lie in (0, 1]"));
        }
        if !(c.rho_min > 0.0 && c.rho_min < 1.0) {
            return Err(err("cone.rho_min", "must lie in (0, 1)"));
        }
        if c.radial_intervals < 2 || !c.radial_intervals.is_multiple_of(2) {
            return Err(err("cone.radial_intervals", "must be even and at least 2"));
        }
        if c.angular_order < 2 {
            return Err(err("cone.angular_order", "must be at least 2"));
        }
        Ok(())
    }

    pub fn ball_grid(&self) -> BallGrid {
        BallGrid {
            rho_min: self.cone.rho_min,
            rho_max: 1.0,
            radial_intervals: self.cone.radial_intervals,
            angular_order: self.cone.angular_order,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_lines_and_overrides() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\nlattice.extent = 6  # trailing\n\ngroup = U1\nasymptotics.window_L=2.5\n")
            .unwrap();
        cfg.apply_override("seed=17").unwrap();
        assert_eq!(cfg.lattice.extent, 6);
        assert_eq!(cfg.group, GroupId::U1);
        assert_eq!(cfg.asymptotics.window_l, 2.5);
        assert_eq!(cfg.seed, 17);
        cfg.validate().unwrap();
    }

    #[test]
    fn errors_name_the_key() {
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.apply_text("flow.bogus = 1").unwrap_err().key, "flow.bogus");
        assert_eq!(cfg.apply_override("lattice.dim=four").unwrap_err().key, "lattice.dim");
        assert_eq!(cfg.apply_text("just words").unwrap_err().key, "just words");
        cfg.set("flow.dt", "0.5").unwrap();
        assert_eq!(cfg.validate().unwrap_err().key, "flow.dt");
        let mut cfg = RunConfig::default();
        cfg.set("cone.field", "torus").unwrap();
        assert_eq!(cfg.validate().unwrap_err().key, "cone.field");
    }

    #[test]
    fn every_listed_key_is_accepted() {
        let mut cfg = RunConfig::default();
        let samples = [
            ("group", "su2"),
            ("flow.start", "flat"),
            ("spectrum.background", "flux"),
            ("cone.field", "constant"),
            ("output.dir", "out"),
        ];
        for key in KEYS {
            let value = samples.iter().find(|s| s.0 == key).map_or("2", |s| s.1);
            cfg.set(key, value).unwrap_or_else(|e| panic!("{e}"));
        }
    }

    #[test]
    fn metadata_omits_output_dir() {
        let mut cfg = RunConfig::default();
        cfg.set("output.dir", "/somewhere").unwrap();
        let v = serde_json::to_value(&cfg).unwrap();
        assert!(v.get("output").is_none() && v.get("output_dir").is_none());
        assert_eq!(v["group"], "su2");
        assert_eq!(v["asymptotics"]["window_L"], 1.0);
    }
}
