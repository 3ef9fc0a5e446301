//! Binary container shared by checkpoints and embedding indexes:
//! 8 magic bytes, a little-endian `u64` header length, a JSON header, then
//! raw little-endian `f32` data.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::Scalar;

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary sibling and renames, so a crash never leaves a
/// half-written file under the final name.
pub(crate) fn write(path: &Path, magic: &[u8; 8], header: &[u8], data: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut buf = Vec::with_capacity(16 + header.len() + data.len());
    buf.extend_from_slice(magic);
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(header);
    buf.extend_from_slice(data);
    f.write_all(&buf).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Returns `(header, data)`.
pub(crate) fn read(path: &Path, magic: &[u8; 8]) -> Result<(Vec<u8>, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 {
        return Err(Error::corrupt(path, "file shorter than its fixed preamble"));
    }
    if &bytes[..8] != magic {
        return Err(Error::corrupt(path, "wrong magic bytes"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let end = usize::try_from(len)
        .ok()
        .and_then(|l| l.checked_add(16))
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::corrupt(path, "header length exceeds file size"))?;
    Ok((bytes[16..end].to_vec(), bytes[end..].to_vec()))
}

pub(crate) fn push_f32<F: Scalar>(buf: &mut Vec<u8>, a: &Array2<F>) {
    for v in a.iter() {
        buf.extend_from_slice(&(v.to64() as f32).to_le_bytes());
    }
}

pub(crate) fn take_f32(data: &[u8], offset: usize, shape: [usize; 2], path: &Path) -> Result<Array2<f32>> {
    let n = shape[0] * shape[1];
    let end = offset
        .checked_add(n * 4)
        .filter(|&e| e <= data.len())
        .ok_or_else(|| Error::corrupt(path, format!("tensor at offset {offset} runs past the data section")))?;
    let values = data[offset..end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(Array2::from_shape_vec((shape[0], shape[1]), values).expect("length checked"))
}
