//! Run configuration: flat `key = value` TOML with unknown keys rejected.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::path::Path;

use crate::data::{DataSpec, Family};
use crate::error::{Error, Result};
use crate::grid::{make_domain, DerivativeNorm, DomainSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    GaussianBump,
    ClPower,
    HxyLog,
    AlfvenLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub d: usize,
    pub k: usize,
    pub box_length: f64,
    pub n: usize,
    pub mu: f64,
    pub order: u32,
    /// Multiplicity convention inside `|∇^j z|²`.
    pub norm: DerivativeNorm,
    pub dt: f64,
    pub t_end: f64,
    /// Solver steps between recorded samples.
    pub sample_stride: usize,
    pub family: FamilyName,
    pub delta: f64,
    pub big_r: f64,
    pub amplitude: f64,
    pub separation: f64,
    pub vortical_weight: f64,
    pub shear_weight: f64,
    pub auto_small: bool,
    pub seed: u64,
    /// Scales the nonlinear terms; 0 runs the linear drift-diffusion system.
    pub coupling: f64,
    /// Also runs at `2n` and compares the measured constants.
    pub resolution_check: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            d: 2,
            k: 1,
            box_length: 16.0 * PI,
            n: 256,
            mu: 0.05,
            order: 3,
            norm: DerivativeNorm::Frobenius,
            dt: 0.05,
            t_end: 10.0,
            sample_stride: 20,
            family: FamilyName::GaussianBump,
            delta: 2.0,
            big_r: 100.0,
            amplitude: 0.1,
            separation: 4.0,
            vortical_weight: 0.5,
            shear_weight: 1.0,
            auto_small: true,
            seed: 0,
            coupling: 1.0,
            resolution_check: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        RunConfig::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Canonical TOML text. Panics on a seed above `i64::MAX`, which `validate` rejects.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("validated config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn domain(&self) -> Result<DomainSpec> {
        make_domain(self.d, self.k, self.box_length, self.n)
    }

    pub fn data_spec(&self) -> DataSpec {
        let family = match self.family {
            FamilyName::GaussianBump => Family::GaussianBump,
            FamilyName::ClPower => Family::ClPower { delta: self.delta },
            FamilyName::HxyLog => Family::HxyLog { big_r: self.big_r },
            FamilyName::AlfvenLinear => Family::AlfvenLinear,
        };
        DataSpec {
            family,
            amplitude: self.amplitude,
            separation: self.separation,
            vortical_weight: self.vortical_weight,
            shear_weight: self.shear_weight,
            seed: self.seed,
        }
    }

    /// Number of recorded samples after `t = 0`.
    pub fn sample_count(&self) -> usize {
        let steps = (self.t_end / self.dt).round() as usize;
        steps / self.sample_stride
    }

    pub fn sample_times(&self) -> Vec<f64> {
        let every = self.sample_stride as f64 * self.dt;
        (1..=self.sample_count()).map(|i| i as f64 * every).collect()
    }

    /// Checks every solver precondition that does not need the initial data.
    pub fn validate(&self) -> Result<()> {
        let domain = self.domain()?;
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return bad(format!("mu = {} must be finite and >= 0", self.mu));
        }
        if self.order == 0 {
            return bad("order must be at least 1".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt = {} must be positive", self.dt));
        }
        // the CFL limit for data of unit amplitude bounds the admissible step
        let limit = 0.5 * domain.min_spacing();
        if self.dt > limit {
            return bad(format!("dt = {} exceeds the CFL limit {limit:.4} for this grid", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end = {} must be finite and >= 0", self.t_end));
        }
        if self.seed > i64::MAX as u64 {
            return bad(format!("seed {} exceeds the TOML integer range", self.seed));
        }
        if self.sample_stride == 0 {
            return bad("sample_stride must be positive".into());
        }
        let steps = self.t_end / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return bad(format!("t_end = {} is not a multiple of dt = {}", self.t_end, self.dt));
        }
        if self.sample_stride as f64 * self.dt <= crate::comparison::TIME_DIFFERENCE {
            return bad("samples closer than the time-difference offset".into());
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return bad(format!("amplitude = {} must be >= 0", self.amplitude));
        }
        if self.family == FamilyName::ClPower && !(self.delta > 1.0) {
            return bad(format!("cl_power needs delta > 1, got {}", self.delta));
        }
        if self.family == FamilyName::HxyLog && self.big_r < 100.0 {
            return bad(format!("hxy_log needs big_r >= 100, got {}", self.big_r));
        }
        if !(0.0..=1.0).contains(&self.coupling) {
            return bad(format!("coupling = {} must lie in [0, 1]", self.coupling));
        }
        if self.separation.abs() > 0.25 * self.box_length {
            return bad(format!("separation {} too large for box {}", self.separation, self.box_length));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_defaults() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        let partial = RunConfig::from_toml("n = 256\nmu = 0.2\nfamily = \"cl_power\"").unwrap();
        assert_eq!(partial.n, 256);
        assert_eq!(partial.family, FamilyName::ClPower);
        assert_eq!(partial.d, 2);
        assert_eq!(partial.norm, DerivativeNorm::Frobenius);
        let m = RunConfig::from_toml("norm = \"multi_index\"").unwrap();
        assert_eq!(m.norm, DerivativeNorm::MultiIndex);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(RunConfig::from_toml("colour = 3").is_err());
        assert!(RunConfig::from_toml("n = 7").is_err());
        assert!(RunConfig::from_toml("dt = 1.0").is_err());
        assert!(RunConfig::from_toml("family = \"cl_power\"\ndelta = 0.5").is_err());
        assert!(RunConfig::from_toml("t_end = 1.03").is_err());
        assert!(RunConfig::from_toml("[section]\nn = 64").is_err());
        let big = RunConfig { seed: u64::MAX, ..RunConfig::default() };
        assert!(big.validate().is_err());
    }

    #[test]
    fn sample_times() {
        let c = RunConfig {
            t_end: 50.0,
            dt: 0.05,
            sample_stride: 50,
            ..RunConfig::default()
        };
        let t = c.sample_times();
        assert_eq!(t.len(), 20);
        assert!((t[19] - 50.0).abs() < 1e-12);
    }

    #[test]
    fn hash_changes_with_content() {
        let a = RunConfig::default();
        let b = RunConfig { seed: 1, ..RunConfig::default() };
        assert_ne!(a.hash(), b.hash());
    }
}
