//! Model files: a JSON document carrying format tag, version, layout
//! reference, hyperparameters, scaler, trees and importances.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FittedModel;
use crate::error::{Error, Result};
use crate::features::LAYOUT_VERSION;

pub const MODEL_FORMAT: &str = "clifs-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub layout_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub model: FittedModel,
}

impl ModelFile {
    pub fn new(model: FittedModel) -> Self {
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            layout_version: model.schema.as_ref().map_or(LAYOUT_VERSION, |s| s.layout_version),
            config_hash: None,
            model,
        }
    }
}

pub fn save_model(path: impl AsRef<Path>, file: &ModelFile) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer(&mut w, file).map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile =
        serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::format(&name, e.to_string()))?;
    if file.format != MODEL_FORMAT {
        return Err(Error::format(&name, format!("unexpected format {:?}", file.format)));
    }
    if file.version != MODEL_VERSION {
        return Err(Error::format(&name, format!("unsupported model version {}", file.version)));
    }
    let m = &file.model;
    if m.forest.importances.len() != m.forest.n_features || m.scaler.center.len() != m.forest.n_features {
        return Err(Error::format(&name, "model arrays disagree on feature count"));
    }
    if let Some(s) = &m.schema {
        if s.len() != m.forest.n_features {
            return Err(Error::format(&name, "schema width differs from model width"));
        }
    }
    Ok(file)
}
