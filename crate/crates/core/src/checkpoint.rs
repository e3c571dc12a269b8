//! Binary checkpoint format.
//!
//! Layout: the 8-byte magic `GRAFCKPT`, a little-endian `u32` version, a
//! `u64` header length and a JSON header holding the model configuration,
//! free-form metadata and the tensor list (name, rows, cols). Tensor values
//! follow in header order as little-endian `f64`. Identical models and
//! metadata give identical bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Graformer, ModelConfig};
use crate::tensor::{Element, ParamStore};

pub const MAGIC: &[u8; 8] = b"GRAFCKPT";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    metadata: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

pub fn to_bytes<T: Element>(model: &Graformer<T>, metadata: &serde_json::Value) -> Result<Vec<u8>> {
    let params = model.params();
    let header = Header {
        model: model.config().clone(),
        metadata: metadata.clone(),
        tensors: params
            .iter()
            .map(|(_, p)| TensorEntry {
                name: p.name.clone(),
                rows: p.rows,
                cols: p.cols,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(json.len() + 20 + params.element_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, p) in params.iter() {
        for v in &p.values {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    Ok(out)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Format("truncated checkpoint".into()));
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

pub fn from_bytes<T: Element>(mut bytes: &[u8]) -> Result<(Graformer<T>, serde_json::Value)> {
    if take(&mut bytes, 8)? != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(&mut bytes, 4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let len = u64::from_le_bytes(take(&mut bytes, 8)?.try_into().expect("8 bytes")) as usize;
    let header: Header = serde_json::from_slice(take(&mut bytes, len)?)?;
    let mut params = ParamStore::new();
    for t in &header.tensors {
        let raw = take(&mut bytes, t.rows * t.cols * 8)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect();
        params.add(t.name.clone(), t.rows, t.cols, values)?;
    }
    if !bytes.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes in checkpoint", bytes.len())));
    }
    let model = Graformer::from_params(header.model, params)?;
    Ok((model, header.metadata))
}

pub fn save<T: Element>(path: &Path, model: &Graformer<T>, metadata: &serde_json::Value) -> Result<()> {
    std::fs::write(path, to_bytes(model, metadata)?)?;
    Ok(())
}

pub fn load<T: Element>(path: &Path) -> Result<(Graformer<T>, serde_json::Value)> {
    from_bytes(&std::fs::read(path)?)
}
