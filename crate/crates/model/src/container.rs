//! Versioned binary container for named f32 tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        b"GZBC"
//! version      u32
//! header_len   u32, followed by header_len bytes of UTF-8 JSON
//! tensor_count u32
//! per tensor:
//!   name_len u32, name bytes (UTF-8)
//!   rank     u32, then rank x u32 dims
//!   data     prod(dims) x f32
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::{ModelError, Result};

pub const MAGIC: &[u8; 4] = b"GZBC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn from_array(name: &str, array: &Array2<f64>) -> Self {
        Self {
            name: name.to_string(),
            dims: array.shape().to_vec(),
            data: array.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_array(&self) -> Result<Array2<f64>> {
        let (rows, cols) = match self.dims.as_slice() {
            [r, c] => (*r, *c),
            [n] => (1, *n),
            other => {
                return Err(ModelError::Format(format!(
                    "tensor '{}' has rank {}, expected 2",
                    self.name,
                    other.len()
                )))
            }
        };
        Array2::from_shape_vec((rows, cols), self.data.iter().map(|&v| f64::from(v)).collect())
            .map_err(|e| ModelError::Format(format!("tensor '{}': {e}", self.name)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub header: serde_json::Value,
    pub tensors: Vec<Tensor>,
}

impl Container {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("JSON value serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_u32(&mut out, header.len());
        out.extend_from_slice(&header);
        put_u32(&mut out, self.tensors.len());
        for t in &self.tensors {
            put_u32(&mut out, t.name.len());
            out.extend_from_slice(t.name.as_bytes());
            put_u32(&mut out, t.dims.len());
            for &d in &t.dims {
                put_u32(&mut out, d);
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let r = &mut bytes;
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(ModelError::Format("bad magic bytes".into()));
        }
        let version = get_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(ModelError::Format(format!(
                "unsupported container version {version}"
            )));
        }
        let header_len = get_u32(r)? as usize;
        let header_bytes = take(r, header_len)?;
        let header = serde_json::from_slice(header_bytes)
            .map_err(|e| ModelError::Format(format!("header: {e}")))?;
        let count = get_u32(r)? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = get_u32(r)? as usize;
            let name = std::str::from_utf8(take(r, name_len)?)
                .map_err(|_| ModelError::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = get_u32(r)? as usize;
            let dims = (0..rank)
                .map(|_| get_u32(r).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let len: usize = dims.iter().product();
            let raw = take(r, len.checked_mul(4).ok_or_else(|| ModelError::Format("tensor too large".into()))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(Tensor { name, dims, data });
        }
        if !r.is_empty() {
            return Err(ModelError::Format(format!("{} trailing bytes", r.len())));
        }
        Ok(Self { header, tensors })
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn write_file(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| ModelError::Format(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("container fields fit in u32");
    out.extend_from_slice(&v.to_le_bytes());
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| ModelError::Format("unexpected end of container".into()))
}

fn get_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn take<'a>(r: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if r.len() < n {
        return Err(ModelError::Format("unexpected end of container".into()));
    }
    let (head, tail) = r.split_at(n);
    *r = tail;
    Ok(head)
}
