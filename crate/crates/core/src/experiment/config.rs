//! Flat `key = value` scenario files.
//!
//! Blank lines and lines starting with `#` or `;` are ignored, as are
//! `[section]` headers. Values are parsed by key; unknown keys are errors so
//! that typos do not silently fall back to defaults.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::covariates::DEFAULT_GRID;
use crate::criteria::Criterion;
use crate::error::{Error, Result};
use crate::geometry::Window;
use crate::selection::PcfFitting;
use crate::simulate::ThomasParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Process {
    Poisson,
    Thomas,
}

impl FromStr for Process {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "poisson" => Ok(Process::Poisson),
            "thomas" => Ok(Process::Thomas),
            other => Err(Error::Config(format!("unknown process `{other}`"))),
        }
    }
}

impl fmt::Display for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Process::Poisson => "poisson",
            Process::Thomas => "thomas",
        })
    }
}

/// Number of dummy points, either fixed or as a multiple of the target mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DummyCount {
    Absolute(usize),
    PerMu(f64),
}

impl DummyCount {
    pub fn resolve(&self, mu: f64) -> usize {
        match *self {
            DummyCount::Absolute(m) => m,
            DummyCount::PerMu(k) => (k * mu).round().max(1.0) as usize,
        }
    }
}

impl FromStr for DummyCount {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("bad dummy count `{s}` (expected e.g. `1600` or `4x`)"));
        if let Some(k) = s.strip_suffix(['x', 'X']) {
            let k: f64 = k.trim().parse().map_err(|_| bad())?;
            if !(k > 0.0 && k.is_finite()) {
                return Err(bad());
            }
            Ok(DummyCount::PerMu(k))
        } else {
            let m: usize = s.parse().map_err(|_| bad())?;
            if m == 0 {
                return Err(bad());
            }
            Ok(DummyCount::Absolute(m))
        }
    }
}

impl fmt::Display for DummyCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DummyCount::Absolute(m) => write!(f, "{m}"),
            DummyCount::PerMu(k) => write!(f, "{k}x"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub name: String,
    pub process: Process,
    pub window: Window,
    pub mu: f64,
    pub beta: Vec<f64>,
    pub thomas: Option<ThomasParams>,
    pub replicates: usize,
    pub m: DummyCount,
    pub r_max: f64,
    pub master_seed: u64,
    pub covariate_seed: u64,
    pub covariate_grid: (usize, usize),
    /// Covariate rasters; synthetic covariates are drawn when empty.
    pub covariate_files: Vec<PathBuf>,
    pub criteria: Vec<Criterion>,
    pub pcf_fitting: PcfFitting,
    pub estimate_once: bool,
    pub write_patterns: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            process: Process::Poisson,
            window: Window::rect(1000.0, 500.0).expect("valid"),
            mu: 800.0,
            beta: vec![0.5, -0.25, 0.0, 0.0, 0.0, 0.0],
            thomas: None,
            replicates: 100,
            m: DummyCount::PerMu(4.0),
            r_max: 20.0,
            master_seed: 1,
            covariate_seed: 1,
            covariate_grid: DEFAULT_GRID,
            covariate_files: Vec::new(),
            criteria: Criterion::ALL.to_vec(),
            pcf_fitting: PcfFitting::Poisson,
            estimate_once: false,
            write_patterns: false,
        }
    }
}

fn list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, T::Err> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(T::from_str).collect()
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Config(format!("bad value for `{key}`: `{v}`")))
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean for `{key}`: `{v}`"))),
    }
}

impl ScenarioConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text)?;
        // relative raster paths are resolved against the config's directory
        if let Some(dir) = path.parent() {
            for f in &mut cfg.covariate_files {
                if f.is_relative() {
                    *f = dir.join(&*f);
                }
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let (mut kappa, mut gamma) = (None, None);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') || line.starts_with('[') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "kappa" => kappa = Some(num(key, value)?),
                "gamma" => gamma = Some(num(key, value)?),
                _ => cfg.set(key, value)?,
            }
        }
        if let (Some(k), Some(g)) = (kappa, gamma) {
            cfg.thomas = Some(ThomasParams::new(k, g)?);
        } else if kappa.is_some() || gamma.is_some() {
            return Err(Error::Config("kappa and gamma must be given together".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply one override; `kappa`/`gamma` update the existing Thomas pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "name" => self.name = value.to_string(),
            "process" => self.process = value.parse()?,
            "window" => {
                let v: Vec<f64> = list(value).map_err(|_| Error::Config(format!("bad window `{value}`")))?;
                self.window = match v.as_slice() {
                    [w, h] => Window::rect(*w, *h)?,
                    [x0, x1, y0, y1] => Window::new(*x0, *x1, *y0, *y1)?,
                    _ => return Err(Error::Config(format!("window needs 2 or 4 numbers, got `{value}`"))),
                };
            }
            "mu" => self.mu = num(key, value)?,
            "beta" => self.beta = list(value).map_err(|_| Error::Config(format!("bad beta `{value}`")))?,
            "kappa" | "gamma" => {
                let x: f64 = num(key, value)?;
                let (k, g) = self.thomas.map(|t| (t.kappa, t.gamma)).unwrap_or((f64::NAN, f64::NAN));
                let (k, g) = if key == "kappa" { (x, g) } else { (k, x) };
                self.thomas = if k.is_nan() || g.is_nan() {
                    return Err(Error::Config(format!("`{key}` override needs the other Thomas parameter set")));
                } else {
                    Some(ThomasParams::new(k, g)?)
                };
            }
            "replicates" => self.replicates = num(key, value)?,
            "m" => self.m = value.parse()?,
            "r_max" => self.r_max = num(key, value)?,
            "master_seed" | "seed" => self.master_seed = num(key, value)?,
            "covariate_seed" => self.covariate_seed = num(key, value)?,
            "covariate_grid" => {
                let v: Vec<usize> = list(value).map_err(|_| Error::Config(format!("bad covariate_grid `{value}`")))?;
                match v.as_slice() {
                    [nx, ny] => self.covariate_grid = (*nx, *ny),
                    _ => return Err(Error::Config(format!("covariate_grid needs 2 integers, got `{value}`"))),
                }
            }
            "covariate_files" => self.covariate_files = value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(PathBuf::from).collect(),
            "criteria" => {
                self.criteria = if value.trim().eq_ignore_ascii_case("all") {
                    Criterion::ALL.to_vec()
                } else {
                    list(value)?
                }
            }
            "pcf_fitting" => self.pcf_fitting = value.parse()?,
            "estimate_once" => self.estimate_once = boolean(key, value)?,
            "write_patterns" => self.write_patterns = boolean(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::Config(format!("mu must be positive, got {}", self.mu)));
        }
        if self.beta.is_empty() || self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Config("beta must be a non-empty list of finite numbers".into()));
        }
        if self.process == Process::Thomas && self.thomas.is_none() {
            return Err(Error::Config("thomas process requires kappa and gamma".into()));
        }
        if !(self.r_max > 0.0 && self.r_max.is_finite()) {
            return Err(Error::Config(format!("r_max must be positive, got {}", self.r_max)));
        }
        if self.criteria.is_empty() {
            return Err(Error::Config("at least one criterion is required".into()));
        }
        if !self.covariate_files.is_empty() && self.covariate_files.len() != self.beta.len() {
            return Err(Error::DimensionMismatch { expected: self.beta.len(), got: self.covariate_files.len() });
        }
        Ok(())
    }

    pub fn dummy_count(&self) -> usize {
        self.m.resolve(self.mu)
    }

    /// Canonical text form; parsing it yields an equal configuration.
    pub fn to_text(&self) -> String {
        let join = |v: &[String]| v.join(", ");
        let w = &self.window;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        kv("name", self.name.clone());
        kv("process", self.process.to_string());
        kv("window", format!("{}, {}, {}, {}", w.x_min(), w.x_max(), w.y_min(), w.y_max()));
        kv("mu", self.mu.to_string());
        kv("beta", join(&self.beta.iter().map(f64::to_string).collect::<Vec<_>>()));
        if let Some(t) = self.thomas {
            kv("kappa", t.kappa.to_string());
            kv("gamma", t.gamma.to_string());
        }
        kv("replicates", self.replicates.to_string());
        kv("m", self.m.to_string());
        kv("r_max", self.r_max.to_string());
        kv("master_seed", self.master_seed.to_string());
        kv("covariate_seed", self.covariate_seed.to_string());
        kv("covariate_grid", format!("{}, {}", self.covariate_grid.0, self.covariate_grid.1));
        if !self.covariate_files.is_empty() {
            kv("covariate_files", join(&self.covariate_files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>()));
        }
        kv("criteria", join(&self.criteria.iter().map(|c| c.name().to_string()).collect::<Vec<_>>()));
        kv("pcf_fitting", self.pcf_fitting.to_string());
        kv("estimate_once", self.estimate_once.to_string());
        kv("write_patterns", self.write_patterns.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const THOMAS: &str = "
# small window, strong clustering
[scenario]
name = thomas-small-g5
process = thomas
window = 500, 250
mu = 400
beta = 2, -1, 0, 0, 0, 0
kappa = 4e-4
gamma = 5
replicates = 100
m = 16x
r_max = 20
pcf_fitting = thomas
criteria = aic, bic_n, cic, cbic
";

    #[test]
    fn parses_thomas_scenario() {
        let c = ScenarioConfig::parse(THOMAS).unwrap();
        assert_eq!(c.process, Process::Thomas);
        assert_eq!(c.window.area(), 125_000.0);
        assert_eq!(c.thomas.unwrap().gamma, 5.0);
        assert_eq!(c.dummy_count(), 6400);
        assert_eq!(c.criteria, vec![Criterion::Aic, Criterion::BicN, Criterion::Cic, Criterion::Cbic]);
        assert_eq!(c.pcf_fitting, PcfFitting::Thomas);
    }

    #[test]
    fn round_trips_through_text() {
        let c = ScenarioConfig::parse(THOMAS).unwrap();
        let d = ScenarioConfig::parse(&c.to_text()).unwrap();
        assert_eq!(c.to_text(), d.to_text());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ScenarioConfig::parse("process = thomas").is_err());
        assert!(ScenarioConfig::parse("replicates = 0").is_err());
        assert!(ScenarioConfig::parse("mu = -1").is_err());
        assert!(ScenarioConfig::parse("colour = red").is_err());
        assert!(ScenarioConfig::parse("just words").is_err());
        assert!(ScenarioConfig::parse("kappa = 1e-3").is_err());
        assert!(ScenarioConfig::parse("m = 0").is_err());
    }

    #[test]
    fn overrides() {
        let mut c = ScenarioConfig::parse(THOMAS).unwrap();
        c.set("gamma", "15").unwrap();
        c.set("replicates", "3").unwrap();
        assert_eq!(c.thomas.unwrap().gamma, 15.0);
        assert_eq!(c.replicates, 3);
        assert_eq!(DummyCount::PerMu(400.0).resolve(50.0), 20_000);
    }
}
