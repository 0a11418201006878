use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, Model, NnError, Normalization};

const MAGIC: &[u8; 4] = b"XSCK";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    architecture: Architecture,
    normalization: Normalization,
    param_count: usize,
}

/// Checkpoint bytes: magic, little-endian `u32` header length, JSON header,
/// then the parameters as little-endian `f32`.
pub fn encode(model: &Model) -> Vec<u8> {
    let header = Header {
        version: 1,
        architecture: model.arch,
        normalization: model.norm,
        param_count: model.params.len(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + json.len() + 4 * model.params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in &model.params {
        out.extend_from_slice(&(*p as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Model, NnError> {
    let bad = |m: &str| NnError::Checkpoint(m.to_string());
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(bad("missing checkpoint magic"));
    }
    let hl = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(8..8 + hl).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    let raw = &bytes[8 + hl..];
    if raw.len() != 4 * header.param_count {
        return Err(NnError::Checkpoint(format!(
            "expected {} parameter bytes, found {}",
            4 * header.param_count,
            raw.len()
        )));
    }
    let params = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let model = Model { arch: header.architecture, params, norm: header.normalization };
    model.validate()?;
    Ok(model)
}

pub fn save(model: &Model, path: &Path) -> Result<(), NnError> {
    fs::write(path, encode(model)).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn load(path: &Path) -> Result<Model, NnError> {
    let bytes = fs::read(path).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))?;
    decode(&bytes)
}
