//! Pipeline configuration: a TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use slicereg::global_align::GlobalConfig;
use slicereg::mumford_shah::MsConfig;
use slicereg::preprocess::PreprocessConfig;
use slicereg::roi_register::RoiRegConfig;
use slicereg::RoiBox;

/// The built-in defaults, with comments.
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../config/default.toml");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub window: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { window: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub masks: Option<PathBuf>,
    pub threads: Option<usize>,
    pub roi: Option<RoiBox>,
    pub preprocess: PreprocessConfig,
    pub segment: MsConfig,
    pub global: GlobalConfig,
    pub register: RoiRegConfig,
    pub evaluate: EvalConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Loads `path` if given, otherwise the defaults.
    pub fn load_or_default(path: Option<&Path>) -> anyhow::Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }
}

/// Parses `cx,cy,width,height`.
pub fn parse_roi(s: &str) -> Result<RoiBox, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad ROI component {p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [cx, cy, w, h] if w > 0.0 && h > 0.0 => Ok(RoiBox::new(cx, cy, w, h)),
        [_, _, _, _] => Err("ROI width and height must be positive".into()),
        _ => Err(format!("expected cx,cy,width,height, got {} values", v.len())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_file_matches_defaults() {
        assert_eq!(PipelineConfig::from_toml(DEFAULT_CONFIG_TOML).unwrap(), PipelineConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = PipelineConfig::default();
        cfg.roi = Some(RoiBox::new(10.0, 20.5, 30.0, 40.0));
        cfg.input = Some("slices".into());
        cfg.segment.seed = 9;
        assert_eq!(PipelineConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PipelineConfig::from_toml("inptu = \"x\"").is_err());
    }

    #[test]
    fn roi_parsing() {
        assert_eq!(parse_roi("1,2,3,4").unwrap(), RoiBox::new(1.0, 2.0, 3.0, 4.0));
        assert!(parse_roi("1,2,3").is_err());
        assert!(parse_roi("1,2,0,4").is_err());
        assert!(parse_roi("1,x,3,4").is_err());
    }
}
