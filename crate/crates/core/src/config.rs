//! Key/value configuration (TOML). Every field has a default, so an empty
//! document yields the reference configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Input `(height, width)`; both must be divisible by 8.
    pub resolution: [usize; 2],
    /// Output channels after tiers 1, 2, 3.
    pub tier_channels: [usize; 3],
    pub tier2_groups: usize,
    pub tier3_groups: usize,
    /// Inner width of the Tier-2 1-3-1 bottleneck units.
    pub tier2_bottleneck: usize,
    /// Inner width of the Tier-3 dilated residual blocks.
    pub tier3_bottleneck: usize,
    pub ladder_dilations: Vec<usize>,
    pub ladder_units: usize,
    pub lane_width: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            resolution: [96, 96],
            tier_channels: [16, 32, 64],
            tier2_groups: 4,
            tier3_groups: 8,
            tier2_bottleneck: 64,
            tier3_bottleneck: 32,
            ladder_dilations: vec![1, 2, 3, 4],
            ladder_units: 2,
            lane_width: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Label softening for the orientation classes.
    pub orientation_eps: f64,
    /// Per-hand indices (0..8) of primary keypoints whose loss is doubled.
    pub fingertips: Vec<usize>,
    /// Per-hand indices (0..9) of auxiliary keypoints whose loss is doubled.
    pub aux_fingertips: Vec<usize>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            orientation_eps: 0.1,
            fingertips: vec![0, 1],
            aux_fingertips: vec![0, 1, 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostprocessConfig {
    pub conf_threshold: f32,
    pub keypoint_threshold: f32,
    pub hand_threshold: f32,
    /// Odd side length of the depth search window.
    pub depth_window: usize,
    /// Valid depth range in millimetres, inclusive.
    pub z_range: [f32; 2],
    pub amplitude_coeffs: [f32; 4],
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self {
            conf_threshold: 0.05,
            keypoint_threshold: 0.5,
            hand_threshold: 0.5,
            depth_window: 5,
            z_range: [100.0, 1000.0],
            amplitude_coeffs: [0.25; 4],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub network: NetworkConfig,
    pub loss: LossConfig,
    pub postprocess: PostprocessConfig,
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

impl NetworkConfig {
    /// FNV-1a over the canonical TOML form; identifies a weight layout.
    pub fn hash(&self) -> u64 {
        let text = toml::to_string(self).expect("config serializes");
        text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }
}
