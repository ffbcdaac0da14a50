//! Versioned model file container: a manifest plus a backend-specific payload.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{perturb_exact, ExactNestedIndex, ModelKind, TableModel};
use crate::catalog::TableMeta;
use crate::error::{Error, Result};
use crate::num::Scalar;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub kind: ModelKind,
    pub table: TableMeta,
    pub seed: Option<u64>,
    /// Build parameters, stringified.
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(kind: ModelKind, table: TableMeta) -> Self {
        Manifest {
            format_version: MODEL_FORMAT_VERSION,
            kind,
            table,
            seed: None,
            params: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub manifest: Manifest,
    pub payload: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct PerturbedPayload {
    base: ExactNestedIndex,
    epsilon: f64,
}

impl ModelFile {
    pub fn new<P: Serialize>(manifest: Manifest, payload: &P) -> Result<Self> {
        Ok(ModelFile {
            manifest,
            payload: serde_json::to_value(payload)?,
        })
    }

    pub fn exact(index: &ExactNestedIndex) -> Result<Self> {
        ModelFile::new(Manifest::new(ModelKind::Exact, index.meta()), index)
    }

    /// A perturbed exact model; it is rebuilt from `(base, epsilon, seed)` on load.
    pub fn perturbed(index: &ExactNestedIndex, epsilon: f64, seed: u64) -> Result<Self> {
        let mut manifest = Manifest::new(ModelKind::Perturbed, index.meta());
        manifest.seed = Some(seed);
        manifest.params.insert("epsilon".into(), epsilon.to_string());
        ModelFile::new(
            manifest,
            &PerturbedPayload {
                base: index.clone(),
                epsilon,
            },
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text)
            .map_err(|e| Error::Schema(format!("malformed model file: {e}")))?;
        if f.manifest.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model format version {}",
                f.manifest.format_version
            )));
        }
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        ModelFile::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn payload_as<P: for<'de> Deserialize<'de>>(&self) -> Result<P> {
        serde_json::from_value(self.payload.clone())
            .map_err(|e| Error::Schema(format!("malformed {} payload: {e}", self.manifest.kind)))
    }
}

/// Decodes the model kinds this crate implements; `Ok(None)` for other kinds.
pub fn load_core_model<T: Scalar>(file: &ModelFile) -> Result<Option<Arc<dyn TableModel<T>>>> {
    match file.manifest.kind {
        ModelKind::Exact => {
            let m: ExactNestedIndex = file.payload_as()?;
            Ok(Some(Arc::new(m)))
        }
        ModelKind::Perturbed => {
            let p: PerturbedPayload = file.payload_as()?;
            let seed = file.manifest.seed.unwrap_or_default();
            let m = perturb_exact(Arc::new(p.base), T::from_decimal(p.epsilon), seed)?;
            Ok(Some(Arc::new(m)))
        }
        ModelKind::Learned => Ok(None),
    }
}
