//! Flat run configuration shared by the CLI and the C API.
//!
//! Precedence: built-in defaults, then the JSON config file, then
//! command-line flags.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::DEFAULT_SEGMENTS;
use crate::error::{Error, Result};
use crate::losses::{RankConfig, DEFAULT_ALPHA, DEFAULT_DELTA, DEFAULT_LAMBDA};
use crate::model::{HeadMode, ModelDims};
use crate::training::{OptimConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub k: usize,
    pub hidden_dim: usize,
    pub h1: usize,
    pub h2: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub lr_step: usize,
    pub epochs: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub delta: f64,
    pub lambda_crl: f64,
    pub alpha: f64,
    pub head_mode: HeadMode,
    /// Train on a bootstrap resample of the split's training ids.
    pub bootstrap: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let dims = ModelDims::default();
        let optim = OptimConfig::default();
        RunConfig {
            k: DEFAULT_SEGMENTS,
            hidden_dim: dims.hidden,
            h1: dims.h1,
            h2: dims.h2,
            lr0: optim.lr0,
            lr_decay: optim.lr_decay,
            lr_step: optim.lr_step,
            epochs: optim.epochs,
            momentum: optim.momentum,
            weight_decay: optim.weight_decay,
            batch_size: optim.batch_size,
            seed: optim.seed,
            delta: DEFAULT_DELTA,
            lambda_crl: DEFAULT_LAMBDA,
            alpha: DEFAULT_ALPHA,
            head_mode: HeadMode::default(),
            bootstrap: false,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Json {
            path: path.into(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            dims: ModelDims {
                hidden: self.hidden_dim,
                h1: self.h1,
                h2: self.h2,
            },
            optim: OptimConfig {
                lr0: self.lr0,
                lr_decay: self.lr_decay,
                lr_step: self.lr_step,
                epochs: self.epochs,
                momentum: self.momentum,
                weight_decay: self.weight_decay,
                batch_size: self.batch_size,
                seed: self.seed,
            },
            rank: RankConfig {
                delta: self.delta,
                lambda_crl: self.lambda_crl,
            },
            alpha: self.alpha,
            head_mode: self.head_mode,
        };
        cfg.dims.validate()?;
        cfg.optim.validate()?;
        cfg.rank.validate()?;
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config("alpha", "must lie in (0, 1]"));
        }
        Ok(cfg)
    }
}
