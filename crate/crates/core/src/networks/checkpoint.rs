use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelBundle, NetworkError};
use crate::data::{FeatureMask, StandardizationStats};

/// Format tag written into every checkpoint.
pub const CHECKPOINT_FORMAT: &str = "savae-ckpt-v1";

/// Everything needed to predict on raw data: selection mask, standardization
/// statistics and trained parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub bundle: ModelBundle,
    pub mask: FeatureMask,
    pub stats: StandardizationStats,
}

impl Checkpoint {
    pub fn new(bundle: ModelBundle, mask: FeatureMask, stats: StandardizationStats) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            bundle,
            mask,
            stats,
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(NetworkError::Checkpoint(format!(
                "unsupported format '{}', expected '{CHECKPOINT_FORMAT}'",
                self.format
            )));
        }
        self.bundle.validate()?;
        if self.mask.m1.len() != self.bundle.arch.m1 || self.stats.x1.width() != self.bundle.arch.m1
        {
            return Err(NetworkError::Checkpoint(
                "modality-1 width disagrees between mask, statistics and model".into(),
            ));
        }
        let m2_mask = self.mask.m2.as_ref().map(Vec::len);
        let m2_stats = self.stats.x2.as_ref().map(|s| s.width());
        if m2_mask != self.bundle.arch.m2 || m2_stats != self.bundle.arch.m2 {
            return Err(NetworkError::Checkpoint(
                "modality-2 width disagrees between mask, statistics and model".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, NetworkError> {
        serde_json::to_string(self).map_err(|e| NetworkError::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        let ckpt: Self =
            serde_json::from_str(text).map_err(|e| NetworkError::Checkpoint(e.to_string()))?;
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NetworkError> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(w, self).map_err(|e| NetworkError::Checkpoint(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetworkError> {
        let r = BufReader::new(File::open(path)?);
        let ckpt: Self =
            serde_json::from_reader(r).map_err(|e| NetworkError::Checkpoint(e.to_string()))?;
        ckpt.validate()?;
        Ok(ckpt)
    }
}
