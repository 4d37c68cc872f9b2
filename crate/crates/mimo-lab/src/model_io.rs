//! Checkpoint files on disk: thin path-based wrappers over the byte
//! codec in `mimo_core::dnn`.

use std::path::Path;

use anyhow::{anyhow, Context, Result};

use mimo_core::dnn::{decode_model, encode_model, MlpModel};

pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    std::fs::write(path, encode_model(model))
        .with_context(|| format!("writing {}", path.display()))
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode_model(&bytes).map_err(|e| anyhow!("loading {}: {e}", path.display()))
}
