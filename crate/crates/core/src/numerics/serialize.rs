//! Single-file tensor container.
//!
//! Layout:
//!
//! ```text
//! magic      8 bytes   "ZENTNSR\x01"
//! len        u64 LE    byte length of the manifest
//! manifest   JSON      {"tensors":[{"name","shape","dtype","offset","nbytes"}, ...]}
//! data       raw little-endian values; offsets are relative to this section
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"ZENTNSR\x01";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: DType,
    pub offset: u64,
    pub nbytes: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tensors: Vec<ManifestEntry>,
}

pub fn encode_tensors<'a, I>(tensors: I, dtype: DType) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = (&'a str, &'a Tensor)>,
{
    let mut manifest = Manifest::default();
    let mut blob = Vec::new();
    for (name, t) in tensors {
        let offset = blob.len() as u64;
        match dtype {
            DType::F64 => t.data().iter().for_each(|v| blob.extend_from_slice(&v.to_le_bytes())),
            DType::F32 => t
                .data()
                .iter()
                .for_each(|v| blob.extend_from_slice(&(*v as f32).to_le_bytes())),
        }
        manifest.tensors.push(ManifestEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            dtype,
            offset,
            nbytes: blob.len() as u64 - offset,
        });
    }
    let header = serde_json::to_vec(&manifest).map_err(|e| Error::invalid(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + header.len() + blob.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&blob);
    Ok(out)
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let bad = |msg: &str| Error::invalid(format!("tensor file: {msg}"));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("bad magic"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let data_start = 16usize
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated manifest"))?;
    let manifest: Manifest =
        serde_json::from_slice(&bytes[16..data_start]).map_err(|e| bad(&e.to_string()))?;
    let data = &bytes[data_start..];
    let mut out = Vec::with_capacity(manifest.tensors.len());
    for e in manifest.tensors {
        let count: usize = e.shape.iter().product();
        if e.nbytes as usize != count * e.dtype.width() {
            return Err(bad(&format!("{}: byte count does not match shape", e.name)));
        }
        let start = e.offset as usize;
        let raw = data
            .get(start..start + e.nbytes as usize)
            .ok_or_else(|| bad(&format!("{}: data out of range", e.name)))?;
        let values = match e.dtype {
            DType::F64 => raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
            DType::F32 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect(),
        };
        out.push((e.name, Tensor::new(e.shape, values)?));
    }
    Ok(out)
}

pub fn write_tensors<'a, I>(path: &Path, tensors: I, dtype: DType) -> Result<()>
where
    I: IntoIterator<Item = (&'a str, &'a Tensor)>,
{
    let bytes = encode_tensors(tensors, dtype)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensors(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensors(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn f64_round_trip_is_bit_exact(values in proptest::collection::vec(any::<f64>(), 0..40), cols in 1usize..5) {
            let rows = values.len() / cols;
            let t = Tensor::matrix(rows, cols, values[..rows * cols].to_vec()).unwrap();
            let s = Tensor::scalar(values.first().copied().unwrap_or(0.5));
            let bytes = encode_tensors([("m", &t), ("s", &s)], DType::F64).unwrap();
            let back = decode_tensors(&bytes).unwrap();
            prop_assert_eq!(back.len(), 2);
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back[0].1), bits(&t));
            prop_assert_eq!(back[0].1.shape(), t.shape());
            prop_assert_eq!(bits(&back[1].1), bits(&s));
        }
    }

    #[test]
    fn f32_storage_rounds_once() {
        let t = Tensor::new(vec![3], vec![0.1, -2.5, 1e-3]).unwrap();
        let back = decode_tensors(&encode_tensors([("x", &t)], DType::F32).unwrap()).unwrap();
        for (a, b) in back[0].1.data().iter().zip(t.data()) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn rejects_corruption() {
        let t = Tensor::zeros(&[2, 2]);
        let mut bytes = encode_tensors([("x", &t)], DType::F64).unwrap();
        assert!(decode_tensors(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(decode_tensors(&bytes).is_err());
    }
}
