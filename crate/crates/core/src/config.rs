//! Plain-text `key = value` configuration files.
//!
//! ```text
//! # monomorphic run
//! kernel = tanh
//! g = 1
//! tau = 1
//! epsilon = 1e-2
//! L = auto
//! solver = eno2, full-scan
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grid::HamiltonianScheme;
use crate::kernels::{GrowthProfile, TransferKernel};
use crate::model::{ModelConfig, SolverOptions};
use crate::parallel::Parallelism;

pub const KEYS: [&str; 11] = ["kernel", "g", "tau", "epsilon", "z0", "c", "L", "N", "dt", "T", "solver"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("override `{0}`: {1}")]
    Override(String, String),
    #[error("{0}")]
    Build(String),
}

/// Unresolved settings; `None` means "derive from the others".
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSpec {
    pub kernel: String,
    pub g: f64,
    pub tau: f64,
    pub eps: f64,
    pub z0: f64,
    pub c: f64,
    pub half_width: Option<f64>,
    pub n: usize,
    pub dt: Option<f64>,
    pub t_end: f64,
    pub solver: Vec<String>,
    /// Directory that relative table paths are resolved against.
    pub base_dir: Option<PathBuf>,
}

impl Default for ConfigSpec {
    fn default() -> Self {
        ConfigSpec {
            kernel: "tanh".into(),
            g: 1.0,
            tau: 1.0,
            eps: 1e-2,
            z0: 0.0,
            c: 1.0,
            half_width: None,
            n: 1025,
            dt: None,
            t_end: 20.0,
            solver: Vec::new(),
            base_dir: None,
        }
    }
}

fn parse_f64(v: &str) -> Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("`{v}` is not a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("`{v}` is not finite"))
    }
}

fn parse_auto(v: &str) -> Result<Option<f64>, String> {
    if v.eq_ignore_ascii_case("auto") {
        Ok(None)
    } else {
        parse_f64(v).map(Some)
    }
}

impl ConfigSpec {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut spec = ConfigSpec::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ConfigError::Line { line: idx + 1, message };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got `{line}`")))?;
            spec.set(k.trim(), v.trim()).map_err(err)?;
        }
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Build(format!("cannot read {}: {e}", path.display())))?;
        let mut spec = Self::parse(&text)?;
        spec.base_dir = path.parent().map(Path::to_path_buf);
        Ok(spec)
    }

    /// Applies one `KEY=VALUE` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), ConfigError> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ConfigError::Override(kv.into(), "expected KEY=VALUE".into()))?;
        self.set(k.trim(), v.trim())
            .map_err(|m| ConfigError::Override(kv.into(), m))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "kernel" => self.kernel = value.to_string(),
            "g" => self.g = parse_f64(value)?,
            "tau" => self.tau = parse_f64(value)?,
            "epsilon" => self.eps = parse_f64(value)?,
            "z0" => self.z0 = parse_f64(value)?,
            "c" => self.c = parse_f64(value)?,
            "L" => self.half_width = parse_auto(value)?,
            "N" => self.n = value.parse().map_err(|_| format!("`{value}` is not a node count"))?,
            "dt" => self.dt = parse_auto(value)?,
            "T" => self.t_end = parse_f64(value)?,
            "solver" => {
                let items: Vec<String> = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                for it in &items {
                    parse_switch(it, &mut SolverOptions::default())?;
                }
                self.solver = items;
            }
            other => return Err(format!("unknown key `{other}` (expected one of {})", KEYS.join(", "))),
        }
        Ok(())
    }

    fn load_kernel(&self) -> Result<TransferKernel, ConfigError> {
        if let Some(path) = self.kernel.strip_prefix("table:") {
            let mut p = PathBuf::from(path.trim());
            if p.is_relative() {
                if let Some(base) = &self.base_dir {
                    p = base.join(p);
                }
            }
            TransferKernel::load_table(&p).map_err(|e| ConfigError::Build(e.to_string()))
        } else {
            TransferKernel::by_name(&self.kernel).map_err(|e| ConfigError::Build(e.to_string()))
        }
    }

    /// Resolves defaults and loads the kernel. Structural checks are left to
    /// [`ModelConfig::validate`].
    pub fn build(&self) -> Result<ModelConfig, ConfigError> {
        let mut cfg = ModelConfig::new(self.g, self.tau);
        cfg.kernel = self.load_kernel()?;
        cfg.growth = GrowthProfile::quadratic(self.g);
        cfg.eps = self.eps;
        cfg.z0 = self.z0;
        cfg.c = self.c;
        cfg.n = self.n;
        cfg.t_end = self.t_end;
        let mut options = SolverOptions::default();
        for s in &self.solver {
            parse_switch(s, &mut options).map_err(ConfigError::Build)?;
        }
        cfg.options = options;
        cfg.half_width = self.half_width.unwrap_or_else(|| cfg.default_half_width());
        cfg.dt = match self.dt {
            Some(dt) => dt,
            None if cfg.n >= 2 => cfg.default_dt(),
            None => f64::NAN,
        };
        Ok(cfg)
    }
}

fn parse_switch(s: &str, o: &mut SolverOptions) -> Result<(), String> {
    match s {
        "eno2" => o.hamiltonian = HamiltonianScheme::Eno2,
        "upwind1" => o.hamiltonian = HamiltonianScheme::Upwind1,
        "raw-mass" => o.normalize_mass = false,
        "normalized-mass" => o.normalize_mass = true,
        "full-scan" => o.full_scan = true,
        "windowed" => o.full_scan = false,
        "sequential" => o.parallelism = Parallelism::Sequential,
        "parallel" => o.parallelism = Parallelism::default(),
        other => {
            return Err(format!(
                "unknown solver switch `{other}` (eno2, upwind1, raw-mass, normalized-mass, full-scan, windowed, sequential, parallel)"
            ))
        }
    }
    Ok(())
}

/// Canonical resolved form: one `key=value` line per key in [`KEYS`] order.
pub fn canonical(cfg: &ModelConfig, kernel_label: &str) -> String {
    let o = &cfg.options;
    let mut solver = vec![o.hamiltonian.name()];
    solver.push(if o.normalize_mass { "normalized-mass" } else { "raw-mass" });
    solver.push(if o.full_scan { "full-scan" } else { "windowed" });
    let mut s = String::new();
    let _ = writeln!(s, "kernel={kernel_label}");
    let _ = writeln!(s, "g={:?}", cfg.g);
    let _ = writeln!(s, "tau={:?}", cfg.tau);
    let _ = writeln!(s, "epsilon={:?}", cfg.eps);
    let _ = writeln!(s, "z0={:?}", cfg.z0);
    let _ = writeln!(s, "c={:?}", cfg.c);
    let _ = writeln!(s, "L={:?}", cfg.half_width);
    let _ = writeln!(s, "N={}", cfg.n);
    let _ = writeln!(s, "dt={:?}", cfg.dt);
    let _ = writeln!(s, "T={:?}", cfg.t_end);
    let _ = writeln!(s, "solver={}", solver.join(","));
    s
}

/// SHA-256 of [`canonical`], hex encoded.
pub fn config_hash(cfg: &ModelConfig, kernel_label: &str) -> String {
    hex::encode(Sha256::digest(canonical(cfg, kernel_label).as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_keys_and_comments() {
        let text = "# header\nkernel = arctan\ng=0.5\ntau = 0.25 # trailing\nepsilon=1e-3\nz0=-0.2\nc=2\nL=auto\nN=513\ndt=1e-3\nT=5\nsolver = upwind1, raw-mass\n";
        let spec = ConfigSpec::parse(text).unwrap();
        assert_eq!(spec.kernel, "arctan");
        assert_eq!(spec.half_width, None);
        assert_eq!(spec.dt, Some(1e-3));
        let cfg = spec.build().unwrap();
        assert_eq!(cfg.options.hamiltonian, HamiltonianScheme::Upwind1);
        assert!(!cfg.options.normalize_mass);
        assert_eq!(cfg.n, 513);
        assert_eq!(cfg.half_width, (3.0 / 0.5f64.sqrt()).max(5.2).max(5.25));
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = ConfigSpec::parse("g=1\n\nfoo=2\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::Line {
                line: 3,
                message: format!("unknown key `foo` (expected one of {})", KEYS.join(", "))
            }
        );
    }

    #[test]
    fn bad_number_reports_line() {
        assert!(matches!(ConfigSpec::parse("tau=abc"), Err(ConfigError::Line { line: 1, .. })));
        assert!(matches!(ConfigSpec::parse("g 1"), Err(ConfigError::Line { line: 1, .. })));
    }

    #[test]
    fn overrides_apply_after_parse() {
        let mut spec = ConfigSpec::parse("g=1\ntau=1\n").unwrap();
        spec.apply_override("tau=2.2").unwrap();
        assert_eq!(spec.tau, 2.2);
        assert!(spec.apply_override("nope=1").is_err());
        assert!(spec.apply_override("tau").is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ConfigSpec::default().build().unwrap();
        let mut b = a.clone();
        assert_eq!(config_hash(&a, "tanh"), config_hash(&b, "tanh"));
        b.tau = 1.0000001;
        assert_ne!(config_hash(&a, "tanh"), config_hash(&b, "tanh"));
        assert_eq!(config_hash(&a, "tanh").len(), 64);
    }
}
