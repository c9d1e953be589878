use std::path::Path;

use super::write_atomic;
use crate::error::{Error, Result};
use crate::featurize::DescriptorStore;

pub const DESCRIPTOR_MAGIC: &str = "GNNCCA-DESC";
pub const DESCRIPTOR_VERSION: u32 = 1;

/// Header line plus row-major little-endian `f32` payload.
pub fn encode_store(store: &DescriptorStore) -> Vec<u8> {
    let header = format!("{DESCRIPTOR_MAGIC} {DESCRIPTOR_VERSION} {} {}\n", store.len(), store.dim());
    let mut out = Vec::with_capacity(header.len() + 4 * store.as_slice().len());
    out.extend_from_slice(header.as_bytes());
    for &v in store.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_store(bytes: &[u8], origin: &str) -> Result<DescriptorStore> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Data(format!("{origin}: missing descriptor header line")))?;
    let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| Error::Data(format!("{origin}: header is not ASCII")))?;
    let parts: Vec<&str> = header.split(' ').collect();
    if parts.len() != 4 || parts[0] != DESCRIPTOR_MAGIC {
        return Err(Error::Data(format!("{origin}: bad header `{header}`")));
    }
    if parts[1] != DESCRIPTOR_VERSION.to_string() {
        return Err(Error::Data(format!("{origin}: unsupported descriptor format version {}", parts[1])));
    }
    let count: usize = parts[2].parse().map_err(|_| Error::Data(format!("{origin}: bad row count `{}`", parts[2])))?;
    let dim: usize = parts[3].parse().map_err(|_| Error::Data(format!("{origin}: bad dimension `{}`", parts[3])))?;
    if dim == 0 {
        return Err(Error::Data(format!("{origin}: descriptor dimension is 0")));
    }
    let payload = &bytes[newline + 1..];
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Data(format!("{origin}: header size overflows")))?;
    if payload.len() != expected {
        return Err(Error::Data(format!(
            "{origin}: payload has {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    DescriptorStore::new(dim, data).map_err(|e| Error::Data(format!("{origin}: {e}")))
}

pub fn load_store(path: &Path) -> Result<DescriptorStore> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_store(&bytes, &path.display().to_string())
}

pub fn save_store(path: &Path, store: &DescriptorStore) -> Result<()> {
    write_atomic(path, &encode_store(store))
}
