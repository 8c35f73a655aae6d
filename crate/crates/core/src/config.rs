//! Single TOML configuration holding every tunable of the library. Missing
//! tables and keys fall back to their defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::RansacConfig;
use crate::layout::LayoutConfig;
use crate::objectives::LossConfig;
use crate::synth::SynthConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub loss: LossConfig,
    pub layout: LayoutConfig,
    pub ransac: RansacConfig,
    pub synth: SynthConfig,
    pub optimizer: OptimizerConfig,
    pub camera: CameraConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub steps: usize,
    pub lr: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { steps: 200, lr: 1.0 }
    }
}

/// Camera used by the synthetic generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub width: usize,
    pub height: usize,
    pub hfov_deg: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self { width: 152, height: 114, hfov_deg: 70.0 }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let config: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate().map_err(|e| Error::Config(e.to_string()))?;
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !(self.layout.cluster.bandwidth > 0.0) {
            return bad("layout.cluster.bandwidth must be positive");
        }
        if !(0.0..1.0).contains(&self.layout.cluster.min_fraction) {
            return bad("layout.cluster.min_fraction must lie in [0, 1)");
        }
        if !(self.ransac.inlier_tol > 0.0) || !(0.0..=1.0).contains(&self.ransac.min_inlier_ratio) {
            return bad("ransac.inlier_tol must be positive and ransac.min_inlier_ratio in [0, 1]");
        }
        if !(self.optimizer.lr > 0.0) {
            return bad("optimizer.lr must be positive");
        }
        if self.camera.width == 0
            || self.camera.height == 0
            || !(self.camera.hfov_deg > 0.0 && self.camera.hfov_deg < 180.0)
        {
            return bad("camera needs positive dimensions and hfov_deg in (0, 180)");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(Config::parse("").unwrap(), Config::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = Config::default();
        c.loss.k = 5.0;
        c.layout.cluster.bandwidth = 0.2;
        assert_eq!(Config::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_override() {
        let c = Config::parse("[ransac]\niters = 50\n").unwrap();
        assert_eq!(c.ransac.iters, 50);
        assert_eq!(c.ransac.inlier_tol, RansacConfig::default().inlier_tol);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(Config::parse("[loss]\nbogus = 1\n"), Err(Error::Config(_))));
        assert!(matches!(Config::parse("[optimizer]\nlr = -1.0\n"), Err(Error::Config(_))));
    }
}
