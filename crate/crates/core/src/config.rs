//! Run configuration: every experiment parameter is nameable in a JSON
//! document, and derived quantities are computed, never user-set.

use crate::error::{Error, Result};
use crate::interface::CurveSpec;
use serde::{Deserialize, Serialize};

fn default_gamma() -> f64 {
    10.0
}

fn default_total_len() -> f64 {
    1.0
}

/// Configuration of one dynamic run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Background cells per side (h = 1/n_cells).
    pub n_cells: usize,
    /// Interface segments; when absent the smallest count satisfying the
    /// max-chord < h/2 rule is chosen.
    #[serde(default)]
    pub m: Option<usize>,
    pub dt: f64,
    pub t_final: f64,
    pub mu: f64,
    pub kappa: f64,
    #[serde(default = "default_gamma")]
    pub gamma1: f64,
    #[serde(default = "default_gamma")]
    pub gamma2: f64,
    /// 0 = explicit membrane force, 1 = semi-implicit.
    pub nu: u8,
    pub curve: CurveSpec,
    /// Reference interval length L.
    #[serde(default = "default_total_len")]
    pub total_len: f64,
    /// Physical times at which interface snapshots are written.
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub output_dir: Option<String>,
    /// Optional velocity/pressure dumps at snapshot times: "csv" or "vtk".
    #[serde(default)]
    pub field_dump: Option<String>,
    /// Write the step-1 system in MatrixMarket coordinate format.
    #[serde(default)]
    pub dump_matrix: bool,
    /// Write the step-1 quadrature point sets as CSV.
    #[serde(default)]
    pub dump_quadrature: bool,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
            Error::Config(format!(
                "config parse error at line {}, column {}: {e}",
                e.line(),
                e.column()
            ))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("t_final", self.t_final),
            ("mu", self.mu),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("total_len", self.total_len),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("field {name} must be positive, got {v}")));
            }
        }
        if self.kappa < 0.0 || !self.kappa.is_finite() {
            return Err(Error::Config(format!(
                "field kappa must be nonnegative, got {}",
                self.kappa
            )));
        }
        if self.n_cells < 2 {
            return Err(Error::Config(format!(
                "field n_cells must be at least 2, got {}",
                self.n_cells
            )));
        }
        if self.nu > 1 {
            return Err(Error::Config(format!(
                "field nu must be 0 or 1, got {}",
                self.nu
            )));
        }
        if let Some(m) = self.m {
            if m < 8 {
                return Err(Error::Config(format!("field m must be at least 8, got {m}")));
            }
        }
        if let Some(f) = &self.field_dump {
            if f != "csv" && f != "vtk" {
                return Err(Error::Config(format!(
                    "field field_dump must be \"csv\" or \"vtk\", got {f:?}"
                )));
            }
        }
        for &t in &self.snapshot_times {
            if t < 0.0 || t > self.t_final + 1e-12 {
                return Err(Error::Config(format!(
                    "snapshot time {t} outside [0, t_final]"
                )));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round().max(1.0) as usize
    }
}

/// Configuration of a temporal-order study: the same flow re-run under
/// repeated time-step halving, compared at a probe time.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RichardsonConfig {
    pub n_cells: usize,
    #[serde(default)]
    pub m: Option<usize>,
    pub base_dt: f64,
    /// Number of halvings (at least 2, giving at least one ratio).
    pub halvings: usize,
    pub t_probe: f64,
    pub mu: f64,
    pub kappa: f64,
    #[serde(default = "default_gamma")]
    pub gamma1: f64,
    #[serde(default = "default_gamma")]
    pub gamma2: f64,
    pub curve: CurveSpec,
    #[serde(default = "default_total_len")]
    pub total_len: f64,
    #[serde(default)]
    pub output_dir: Option<String>,
}

impl RichardsonConfig {
    pub fn from_json(text: &str) -> Result<RichardsonConfig> {
        let cfg: RichardsonConfig = serde_json::from_str(text).map_err(|e| {
            Error::Config(format!(
                "config parse error at line {}, column {}: {e}",
                e.line(),
                e.column()
            ))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.halvings < 2 {
            return Err(Error::Config(format!(
                "field halvings must be at least 2, got {}",
                self.halvings
            )));
        }
        if !(self.base_dt > 0.0) || !(self.t_probe > 0.0) {
            return Err(Error::Config("base_dt and t_probe must be positive".into()));
        }
        let steps = self.t_probe / self.base_dt;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "t_probe = {} is not a multiple of base_dt = {}",
                self.t_probe, self.base_dt
            )));
        }
        Ok(())
    }

    /// The run configuration of one halving level.
    pub fn run_config(&self, level: usize) -> RunConfig {
        RunConfig {
            n_cells: self.n_cells,
            m: self.m,
            dt: self.base_dt / (1u64 << level) as f64,
            t_final: self.t_probe,
            mu: self.mu,
            kappa: self.kappa,
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            nu: 1,
            curve: self.curve.clone(),
            total_len: self.total_len,
            snapshot_times: Vec::new(),
            output_dir: None,
            field_dump: None,
            dump_matrix: false,
            dump_quadrature: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let text = r#"{
            "n_cells": 32, "dt": 0.01, "t_final": 1.0,
            "mu": 1.0, "kappa": 6.0, "nu": 1,
            "curve": {"type": "ellipse", "a": 0.3, "b": 0.4, "center": [0.5, 0.5]}
        }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        assert_eq!(cfg.gamma1, 10.0);
        assert_eq!(cfg.gamma2, 10.0);
        assert_eq!(cfg.steps(), 100);
        assert!(cfg.m.is_none());
    }

    #[test]
    fn rejects_bad_fields_with_diagnostics() {
        let text = r#"{"n_cells": 32, "dt": -0.01, "t_final": 1.0,
            "mu": 1.0, "kappa": 6.0, "nu": 1,
            "curve": {"type": "heart"}}"#;
        let err = RunConfig::from_json(text).unwrap_err();
        assert!(err.to_string().contains("dt"), "{err}");

        let text = r#"{"n_cells": 32, "dt": 0.01, "t_final": 1.0, "typo": 3,
            "mu": 1.0, "kappa": 6.0, "nu": 1,
            "curve": {"type": "heart"}}"#;
        let err = RunConfig::from_json(text).unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
    }

    #[test]
    fn heart_default_scale() {
        let text = r#"{"n_cells": 32, "dt": 0.01, "t_final": 0.1,
            "mu": 1.0, "kappa": 6.0, "nu": 1, "curve": {"type": "heart"}}"#;
        let cfg = RunConfig::from_json(text).unwrap();
        match cfg.curve {
            CurveSpec::Heart { scale } => assert_eq!(scale, 1.0 / 40.0),
            _ => panic!("expected heart"),
        }
    }
}
