use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamState, MfModel};
use crate::dataset::IdMaps;
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialized model plus optimizer moments.
///
/// Floats go through `serde_json`, which prints the shortest string that
/// parses back to the same value, so save/load is lossless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Checkpoint<T: Scalar> {
    pub format_version: u32,
    pub dim: usize,
    /// `IdMaps::content_hash` of the data the model was trained on.
    pub id_map_hash: String,
    pub num_contexts: usize,
    pub num_items: usize,
    pub context_embeddings: Vec<T>,
    pub item_embeddings: Vec<T>,
    pub optimizer: Option<AdamState<T>>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(model: &MfModel<T>, id_maps: &IdMaps, optimizer: Option<&AdamState<T>>) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            dim: model.dim(),
            id_map_hash: id_maps.content_hash(),
            num_contexts: model.num_contexts(),
            num_items: model.num_items(),
            context_embeddings: model.context_table().to_vec(),
            item_embeddings: model.item_table().to_vec(),
            optimizer: optimizer.cloned(),
        }
    }

    pub fn model(&self) -> Result<MfModel<T>> {
        MfModel::from_parts(
            self.num_contexts,
            self.num_items,
            self.dim,
            self.context_embeddings.clone(),
            self.item_embeddings.clone(),
        )
    }

    /// Errors unless the checkpoint was trained on data with these id maps.
    pub fn check_id_maps(&self, id_maps: &IdMaps) -> Result<()> {
        let hash = id_maps.content_hash();
        if hash != self.id_map_hash {
            return Err(invalid(format!(
                "checkpoint id-map hash {} does not match dataset hash {hash}",
                self.id_map_hash
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Self = serde_json::from_str(text)?;
        if ckpt.format_version != CHECKPOINT_VERSION {
            return Err(invalid(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ckpt.format_version
            )));
        }
        let model = ckpt.model()?;
        if let Some(opt) = &ckpt.optimizer {
            if !opt.matches(&model) {
                return Err(invalid("optimizer moments do not match the embedding shapes"));
            }
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
