//! Checkpoint directory: `model.zt` (tensor container) plus a `config.toml`
//! sidecar carrying the model configuration and the hash of the lexicon the
//! n-gram embeddings belong to.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ZenModel};
use crate::error::{Error, Result};
use crate::numerics::serialize::{read_tensors, write_tensors, DType};
use crate::numerics::Tensor;

pub const FORMAT: &str = "zen-checkpoint v1";
pub const TENSOR_FILE: &str = "model.zt";
pub const SIDECAR_FILE: &str = "config.toml";
/// Lexicon hash recorded for models trained without a lexicon.
pub const NO_LEXICON: &str = "none";
/// Prefix of auxiliary (non-parameter) tensors such as optimizer moments.
pub const AUX_PREFIX: &str = "optim.";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub lexicon_hash: String,
    pub step: usize,
    pub model: ModelConfig,
    /// Task description for fine-tuned models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<toml::Table>,
}

pub struct Checkpoint {
    pub model: ZenModel,
    pub meta: CheckpointMeta,
    /// Auxiliary tensors (names start with [`AUX_PREFIX`]).
    pub aux: Vec<(String, Tensor)>,
}

impl Checkpoint {
    /// Fail unless the checkpoint was trained with a lexicon of this hash.
    pub fn require_lexicon(&self, hash: &str) -> Result<()> {
        if self.meta.lexicon_hash != hash {
            return Err(Error::LexiconMismatch {
                expected: self.meta.lexicon_hash.clone(),
                actual: hash.to_string(),
            });
        }
        Ok(())
    }
}

fn no_decay_name(name: &str) -> bool {
    name.ends_with(".bias") || name.ends_with(".gamma") || name.ends_with(".beta")
}

pub fn save(
    dir: &Path,
    model: &ZenModel,
    lexicon_hash: &str,
    step: usize,
    task: Option<toml::Table>,
    aux: &[(String, Tensor)],
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = CheckpointMeta {
        format: FORMAT.to_string(),
        lexicon_hash: lexicon_hash.to_string(),
        step,
        model: model.config().clone(),
        task,
    };
    let sidecar = toml::to_string(&meta).map_err(|e| Error::invalid(e.to_string()))?;
    let side_path = dir.join(SIDECAR_FILE);
    fs::write(&side_path, sidecar).map_err(|e| Error::io(&side_path, e))?;
    let tensors = model
        .params()
        .iter()
        .map(|(_, p)| (p.name.as_str(), &p.value))
        .chain(aux.iter().map(|(n, t)| (n.as_str(), t)));
    write_tensors(&dir.join(TENSOR_FILE), tensors, DType::F64)
}

pub fn read_meta(dir: &Path) -> Result<CheckpointMeta> {
    let side_path = dir.join(SIDECAR_FILE);
    let text = fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
    let meta: CheckpointMeta = toml::from_str(&text).map_err(|e| Error::Parse {
        path: side_path.display().to_string(),
        line: 0,
        msg: e.to_string(),
    })?;
    if meta.format != FORMAT {
        return Err(Error::invalid(format!("unsupported checkpoint format {:?}", meta.format)));
    }
    Ok(meta)
}

pub fn load(dir: &Path) -> Result<Checkpoint> {
    let meta = read_meta(dir)?;
    let mut model = ZenModel::skeleton(meta.model.clone())?;
    let mut aux = Vec::new();
    let mut seen = vec![false; model.params().len()];
    for (name, t) in read_tensors(&dir.join(TENSOR_FILE))? {
        if name.starts_with(AUX_PREFIX) {
            aux.push((name, t));
            continue;
        }
        match model.params().id(&name) {
            Some(id) => {
                if model.params().value(id).shape() != t.shape() {
                    return Err(Error::Shape {
                        op: "checkpoint load",
                        lhs: model.params().value(id).shape().to_vec(),
                        rhs: t.shape().to_vec(),
                    });
                }
                *model.params_mut().value_mut(id) = t;
                seen[id.index()] = true;
            }
            None => {
                // Task-head parameters added after construction.
                let decay = !no_decay_name(&name);
                model.params_mut().add(name, t, decay)?;
                seen.push(true);
            }
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        let name = &model.params().iter().nth(i).expect("index in range").1.name;
        return Err(Error::invalid(format!("checkpoint is missing tensor {name}")));
    }
    Ok(Checkpoint { model, meta, aux })
}
