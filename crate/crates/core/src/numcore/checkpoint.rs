//! Parameter checkpoints: a JSON manifest plus one little-endian `f64` blob
//! per parameter. Each blob holds the value, then the first and second Adam
//! moments, each `prod(shape)` numbers long.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamConfig, DenseArray, NumError, Param, ParamStore};

pub const CHECKPOINT_FORMAT: &str = "immuno-params/1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format: String,
    step_count: u64,
    adam: Option<AdamConfig>,
    /// Free-form architecture description written by the model owning the
    /// parameters.
    #[serde(default)]
    model: serde_json::Value,
    blob_layout: String,
    params: Vec<ParamEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ParamStore,
    pub adam: Option<AdamConfig>,
    pub model: serde_json::Value,
}

fn ck_err(path: &Path, e: impl std::fmt::Display) -> NumError {
    NumError::Checkpoint(format!("{}: {e}", path.display()))
}

pub fn save_checkpoint(
    dir: impl AsRef<Path>,
    params: &ParamStore,
    adam: Option<&AdamConfig>,
    model: serde_json::Value,
) -> Result<(), NumError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| ck_err(dir, e))?;
    let mut entries = Vec::with_capacity(params.len());
    for (name, p) in params.iter() {
        let file = format!("{name}.f64");
        let mut bytes = Vec::with_capacity(p.value.len() * 24);
        for arr in [&p.value, &p.m, &p.v] {
            for x in arr.data() {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
        let path = dir.join(&file);
        fs::write(&path, bytes).map_err(|e| ck_err(&path, e))?;
        entries.push(ParamEntry {
            name: name.to_string(),
            shape: p.value.shape().to_vec(),
            file,
        });
    }
    let manifest = Manifest {
        format: CHECKPOINT_FORMAT.into(),
        step_count: params.step_count(),
        adam: adam.copied(),
        model,
        blob_layout: "value,m,v".into(),
        params: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| ck_err(&path, e))?;
    fs::write(&path, text + "\n").map_err(|e| ck_err(&path, e))
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Checkpoint, NumError> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| ck_err(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| ck_err(&path, e))?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(ck_err(&path, format!("unsupported format tag {:?}", manifest.format)));
    }
    let mut store = ParamStore::new();
    for entry in &manifest.params {
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| ck_err(&path, e))?;
        let n: usize = entry.shape.iter().product();
        if bytes.len() != n * 24 {
            return Err(ck_err(&path, format!("expected {} bytes, found {}", n * 24, bytes.len())));
        }
        let floats: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let part = |i: usize| DenseArray::from_vec(&entry.shape, floats[i * n..(i + 1) * n].to_vec());
        let value = part(0)?;
        let mut p = Param::new(value);
        p.m = part(1)?;
        p.v = part(2)?;
        store.insert_param(entry.name.clone(), p);
    }
    store.set_step_count(manifest.step_count);
    Ok(Checkpoint {
        params: store,
        adam: manifest.adam,
        model: manifest.model,
    })
}
