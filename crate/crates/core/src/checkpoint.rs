//! Model checkpoint JSON.
//!
//! Layout:
//!
//! ```text
//! {
//!   "format": "engage-mil-checkpoint/1",
//!   "modality": "gaze",
//!   "dims": {"hidden": 64, "h1": 512, "h2": 128},
//!   "head_mode": "per_step",
//!   "params": [{"name": "lstm.w_i", "rows": 64, "cols": 6, "values": [...]}, ...],
//!   "center_bank": {"centers": [[...], [...], [...], [...]], "alpha": 0.5},
//!   "config": {...}
//! }
//! ```
//!
//! `params` are in this fixed order: `lstm.w_{i,f,o,g}`, `lstm.u_{i,f,o,g}`,
//! `lstm.b_{i,f,o,g}`, `head.w1`, `head.b1`, `head.w2`, `head.b2`,
//! `head.w3`, `head.b3`. Values are row-major. Floats are written in
//! shortest round-trip form, so reading a checkpoint back is exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{write_file, ModalityTag};
use crate::error::{Error, Result};
use crate::losses::CenterBank;
use crate::model::{HeadMode, ModelDims, RegressionModel};
use crate::numcore::Matrix;
use crate::training::TrainConfig;

pub const FORMAT: &str = "engage-mil-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NamedArray {
    name: String,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    modality: ModalityTag,
    dims: ModelDims,
    head_mode: HeadMode,
    params: Vec<NamedArray>,
    center_bank: Option<CenterBank>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<TrainConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: RegressionModel,
    pub center_bank: Option<CenterBank>,
    pub config: Option<TrainConfig>,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let params = self
            .model
            .named_params()
            .into_iter()
            .map(|(name, p)| NamedArray {
                name,
                rows: p.value.rows(),
                cols: p.value.cols(),
                values: p.value.as_slice().to_vec(),
            })
            .collect();
        let file = CheckpointFile {
            format: FORMAT.to_string(),
            modality: self.model.modality(),
            dims: self.model.dims(),
            head_mode: self.model.head_mode(),
            params,
            center_bank: self.center_bank.clone(),
            config: self.config.clone(),
        };
        let mut json = serde_json::to_string_pretty(&file).expect("checkpoint serializes");
        json.push('\n');
        json
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text).map_err(|e| Error::Json {
            path: path.into(),
            source: e,
        })?;
        if file.format != FORMAT {
            return Err(Error::config("format", format!("unsupported checkpoint format `{}`", file.format)));
        }
        let names: Vec<String> = crate::model::init_model(file.modality, file.dims, 0)?.param_names();
        if names.len() != file.params.len() {
            return Err(Error::LengthMismatch {
                left: names.len(),
                right: file.params.len(),
            });
        }
        let mut values = Vec::with_capacity(names.len());
        for (want, arr) in names.iter().zip(file.params) {
            if *want != arr.name {
                return Err(Error::config(
                    "params",
                    format!("expected `{want}`, found `{}`", arr.name),
                ));
            }
            values.push(Matrix::from_vec(arr.rows, arr.cols, arr.values)?);
        }
        let model = RegressionModel::from_parts(file.modality, file.dims, file.head_mode, values)?;
        if let Some(bank) = &file.center_bank {
            bank.validate()?;
            if bank.dim() != file.dims.h2 {
                return Err(Error::config("center_bank", "center dimension differs from h2"));
            }
        }
        Ok(Checkpoint {
            model,
            center_bank: file.center_bank,
            config: file.config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_model;

    #[test]
    fn round_trip_is_exact() {
        let model = init_model(ModalityTag::Head, ModelDims { hidden: 3, h1: 4, h2: 2 }, 8).unwrap();
        let mut bank = CenterBank::new(2, 0.5).unwrap();
        bank.centers[1] = vec![0.1 + 0.2, -1.0 / 3.0];
        let ck = Checkpoint {
            model,
            center_bank: Some(bank),
            config: Some(TrainConfig::default()),
        };
        let json = ck.to_json();
        let back = Checkpoint::from_json(&json, Path::new("x.json")).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_json(), json);
    }

    #[test]
    fn rejects_unknown_fields_and_bad_shapes() {
        let model = init_model(ModalityTag::Gaze, ModelDims { hidden: 2, h1: 2, h2: 2 }, 1).unwrap();
        let ck = Checkpoint {
            model,
            center_bank: None,
            config: None,
        };
        let mut v: serde_json::Value = serde_json::from_str(&ck.to_json()).unwrap();
        v["surprise"] = serde_json::json!(1);
        assert!(Checkpoint::from_json(&v.to_string(), Path::new("x")).is_err());

        let mut v: serde_json::Value = serde_json::from_str(&ck.to_json()).unwrap();
        v["params"][0]["rows"] = serde_json::json!(3);
        assert!(Checkpoint::from_json(&v.to_string(), Path::new("x")).is_err());
    }
}
