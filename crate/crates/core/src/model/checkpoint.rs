//! Binary checkpoint plus a `key=value` sidecar manifest.
//!
//! Layout (little endian): `b"DKCK"`, `u32` version, `u64` header length,
//! JSON header, then every tensor's `f64` values row-major in slot order.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::params::{ModelParams, ParamShapes};
use crate::config::Hyperparams;
use crate::error::{Error, Result};
use crate::graph::ByteReader;
use crate::io::{format_key_values, write_atomic};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"DKCK";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    hyper: Hyperparams,
    shapes: ParamShapes,
    slot_names: Vec<String>,
    dataset_hash: String,
    num_items: usize,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub hyper: Hyperparams,
    pub dataset_hash: String,
    pub num_items: usize,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = Header {
            hyper: self.hyper.clone(),
            shapes: self.params.shapes,
            slot_names: self.params.slot_names(),
            dataset_hash: self.dataset_hash.clone(),
            num_items: self.num_items,
            seed: self.hyper.seed,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);
        for t in self.params.slots() {
            for x in t.iter() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        write_atomic(path, &buf)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut r = ByteReader::new(&bytes);
        let trunc = || Error::Checkpoint(format!("{}: truncated", path.display()));
        if r.take(4).ok_or_else(trunc)? != MAGIC {
            return Err(Error::Checkpoint(format!("{}: not a checkpoint", path.display())));
        }
        let version = r.u32().ok_or_else(trunc)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = r.u64().ok_or_else(trunc)? as usize;
        let header: Header = serde_json::from_slice(r.take(hlen).ok_or_else(trunc)?)
            .map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        let mut tensors = Vec::new();
        for (_, rows, cols) in header.shapes.layout() {
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                data.push(r.f64().ok_or_else(trunc)?);
            }
            tensors.push(Array2::from_shape_vec((rows, cols), data).expect("shape matches length"));
        }
        if r.remaining() != 0 {
            return Err(Error::Checkpoint(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Self {
            params: ModelParams::from_tensors(header.shapes, tensors)?,
            hyper: header.hyper,
            dataset_hash: header.dataset_hash,
            num_items: header.num_items,
        })
    }

    pub fn manifest_path(path: &Path) -> PathBuf {
        path.with_extension("manifest")
    }

    /// Sidecar text manifest; `extra` carries metrics and run metadata.
    pub fn write_manifest(&self, path: &Path, extra: &[(&str, String)]) -> Result<()> {
        let mut kv = vec![
            ("checkpoint_version", CHECKPOINT_VERSION.to_string()),
            ("dataset_hash", self.dataset_hash.clone()),
            ("num_items", self.num_items.to_string()),
        ];
        kv.extend(self.hyper.to_key_values());
        kv.extend(extra.iter().map(|(k, v)| (*k, v.clone())));
        write_atomic(&Self::manifest_path(path), format_key_values(kv).as_bytes())
    }
}
