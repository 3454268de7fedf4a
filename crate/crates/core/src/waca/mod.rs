//! Training-free forward math for weather-aware cross-attention: a
//! transmission-guided global attention, an occlusion-guided windowed
//! attention and a gated fuser of the two branches.

mod attention;
pub mod check;
mod fuser;
mod tensor;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use attention::{
    ogla_forward, ogla_trace, tgga_forward, tgga_trace, transmission_similarity, AttentionParams, AttentionTrace,
};
pub use fuser::{waf_fuse, waf_gates, FuserParams, FusionGates};
pub use tensor::{AvgPool, FeatureMap, Matrix};

use crate::error::{Error, Result};

/// Everything needed to run a full block, as stored in a weights file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WacaWeights {
    pub channels: usize,
    pub attention: AttentionParams,
    pub fuser: FuserParams,
}

impl WacaWeights {
    pub fn seeded(channels: usize, head_count: usize, seed: u64) -> Self {
        WacaWeights {
            channels,
            attention: AttentionParams::seeded(channels, head_count, seed),
            fuser: FuserParams::seeded(channels, seed ^ 0x5741_4341),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.attention.validate(self.channels)?;
        self.fuser.validate(self.channels)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let w: WacaWeights = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        w.validate()?;
        Ok(w)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("weights serialize");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
