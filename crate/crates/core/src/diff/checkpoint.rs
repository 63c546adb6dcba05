//! `RPSEG1` checkpoint container.
//!
//! Layout: the magic line `RPSEG1\n`, a decimal byte count of the manifest
//! followed by `\n`, the TOML manifest itself, then every parameter as
//! row-major little-endian `f32`, concatenated in manifest order. Manifest
//! offsets are byte offsets relative to the start of the blob section.

use serde::{Deserialize, Serialize};

use super::{Array, ParamStore};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8] = b"RPSEG1\n";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    #[serde(default)]
    meta: toml::Table,
    params: Vec<ParamRecord>,
}

/// Parameters plus free-form metadata (e.g. the network spec).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: toml::Table,
    pub params: ParamStore<f32>,
}

pub fn encode_checkpoint(params: &ParamStore<f32>, meta: &toml::Table) -> Result<Vec<u8>> {
    let mut records = Vec::with_capacity(params.len());
    let mut offset = 0;
    for (name, value) in params.iter() {
        records.push(ParamRecord {
            name: name.to_string(),
            shape: value.shape().to_vec(),
            offset,
        });
        offset += value.len() * 4;
    }
    let manifest = Manifest {
        meta: meta.clone(),
        params: records,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(CHECKPOINT_MAGIC.len() + 16 + text.len() + offset);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(format!("{}\n", text.len()).as_bytes());
    out.extend_from_slice(text.as_bytes());
    for (_, value) in params.iter() {
        for v in value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    let rest = bytes
        .strip_prefix(CHECKPOINT_MAGIC)
        .ok_or_else(|| bad("missing RPSEG1 magic"))?;
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing manifest length"))?;
    let len: usize = std::str::from_utf8(&rest[..nl])
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| bad("malformed manifest length"))?;
    let rest = &rest[nl + 1..];
    if rest.len() < len {
        return Err(bad("truncated manifest"));
    }
    let text = std::str::from_utf8(&rest[..len]).map_err(|_| bad("manifest is not UTF-8"))?;
    let manifest: Manifest = toml::from_str(text).map_err(|e| Error::Checkpoint(format!("manifest: {e}")))?;
    let blob = &rest[len..];
    let mut params = ParamStore::new();
    let mut expected_offset = 0;
    for rec in &manifest.params {
        let n: usize = rec.shape.iter().product();
        if rec.offset != expected_offset {
            return Err(Error::Checkpoint(format!("`{}`: offset {} out of order", rec.name, rec.offset)));
        }
        let end = rec.offset + n * 4;
        let raw = blob
            .get(rec.offset..end)
            .ok_or_else(|| Error::Checkpoint(format!("`{}`: data truncated", rec.name)))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        params
            .insert(rec.name.clone(), Array::new(&rec.shape, data)?)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        expected_offset = end;
    }
    if expected_offset != blob.len() {
        return Err(bad("trailing bytes after parameter data"));
    }
    Ok(Checkpoint {
        meta: manifest.meta,
        params,
    })
}
