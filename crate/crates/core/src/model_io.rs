//! Binary model files.
//!
//! Layout: magic bytes `RGAE`, format version (u32, little-endian), then a
//! sequence of named tensors until end of file. Each tensor is: name length
//! (u32) + UTF-8 name + rank (u32) + one u32 per dimension + row-major
//! 32-bit little-endian floats. Parameters are kept f32-representable in
//! memory, so a write/read cycle reproduces the model exactly and a
//! read/write cycle reproduces the file byte for byte.

use crate::error::{Error, Result};
use crate::mathcore::Matrix;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"RGAE";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<u32>,
    pub values: Vec<f32>,
}

impl NamedTensor {
    pub fn from_matrix(name: impl Into<String>, m: &Matrix) -> Self {
        NamedTensor {
            name: name.into(),
            dims: vec![m.rows() as u32, m.cols() as u32],
            values: m.data().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn from_vector(name: impl Into<String>, v: &[f64]) -> Self {
        NamedTensor {
            name: name.into(),
            dims: vec![v.len() as u32],
            values: v.iter().map(|&x| x as f32).collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<Matrix> {
        if self.dims.len() != 2 {
            return Err(Error::ModelFormat(format!(
                "tensor '{}' has rank {}, expected 2",
                self.name,
                self.dims.len()
            )));
        }
        Matrix::from_vec(
            self.dims[0] as usize,
            self.dims[1] as usize,
            self.values.iter().map(|&v| v as f64).collect(),
        )
    }

    pub fn to_vector(&self) -> Result<Vec<f64>> {
        if self.dims.len() != 1 {
            return Err(Error::ModelFormat(format!(
                "tensor '{}' has rank {}, expected 1",
                self.name,
                self.dims.len()
            )));
        }
        Ok(self.values.iter().map(|&v| v as f64).collect())
    }

    pub fn find<'a>(tensors: &'a [NamedTensor], name: &str) -> Result<&'a NamedTensor> {
        tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::ModelFormat(format!("missing tensor '{}'", name)))
    }
}

pub fn encode_tensors(tensors: &[NamedTensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
        for &d in &t.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for &v in &t.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    let mut cursor = std::io::Cursor::new(bytes);
    let mut magic = [0u8; 4];
    cursor
        .read_exact(&mut magic)
        .map_err(|_| Error::ModelFormat("file too short for magic bytes".into()))?;
    if &magic != MAGIC {
        return Err(Error::ModelFormat("bad magic bytes".into()));
    }
    let version = read_u32(&mut cursor)?;
    if version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported format version {}",
            version
        )));
    }
    let mut tensors = Vec::new();
    loop {
        let pos = cursor.position() as usize;
        if pos == bytes.len() {
            break;
        }
        let name_len = read_u32(&mut cursor)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        cursor
            .read_exact(&mut name_bytes)
            .map_err(|_| Error::ModelFormat("truncated tensor name".into()))?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::ModelFormat("tensor name is not UTF-8".into()))?;
        let rank = read_u32(&mut cursor)? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(read_u32(&mut cursor)?);
        }
        let count: usize = dims.iter().map(|&d| d as usize).product();
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            let mut buf = [0u8; 4];
            cursor
                .read_exact(&mut buf)
                .map_err(|_| Error::ModelFormat(format!("truncated values of '{}'", name)))?;
            values.push(f32::from_le_bytes(buf));
        }
        tensors.push(NamedTensor { name, dims, values });
    }
    Ok(tensors)
}

fn read_u32(cursor: &mut std::io::Cursor<&[u8]>) -> Result<u32> {
    let mut buf = [0u8; 4];
    cursor
        .read_exact(&mut buf)
        .map_err(|_| Error::ModelFormat("truncated u32 field".into()))?;
    Ok(u32::from_le_bytes(buf))
}

pub fn write_tensor_file(path: impl AsRef<Path>, tensors: &[NamedTensor]) -> Result<()> {
    atomic_write(path.as_ref(), &encode_tensors(tensors))
}

pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<Vec<NamedTensor>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    decode_tensors(&bytes)
}

/// Write via a temp file in the same directory plus a rename, so readers
/// never observe a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    if !dir.as_os_str().is_empty() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into()),
        std::process::id()
    ));
    {
        let mut f =
            std::fs::File::create(&tmp).map_err(|e| Error::io(tmp.display().to_string(), e))?;
        f.write_all(bytes)
            .map_err(|e| Error::io(tmp.display().to_string(), e))?;
        f.sync_all().ok();
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Total number of scalars in a tensor list; meta-free by construction, so
/// this equals the parameter count of the stored model.
pub fn total_values(tensors: &[NamedTensor]) -> usize {
    tensors.iter().map(|t| t.values.len()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_round_trip() {
        let tensors = vec![
            NamedTensor {
                name: "a.w".into(),
                dims: vec![2, 3],
                values: vec![1.0, -2.5, 0.0, 3.25, 1e-20, 7.0],
            },
            NamedTensor {
                name: "b".into(),
                dims: vec![4],
                values: vec![0.5, 0.25, -0.125, 2.0],
            },
        ];
        let bytes = encode_tensors(&tensors);
        assert_eq!(&bytes[..4], MAGIC);
        let back = decode_tensors(&bytes).unwrap();
        assert_eq!(back, tensors);
        // byte-exact re-encode
        assert_eq!(encode_tensors(&back), bytes);
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = encode_tensors(&[]);
        bytes[0] = b'X';
        assert!(decode_tensors(&bytes).is_err());
    }

    #[test]
    fn truncation_rejected() {
        let tensors = vec![NamedTensor {
            name: "w".into(),
            dims: vec![2],
            values: vec![1.0, 2.0],
        }];
        let bytes = encode_tensors(&tensors);
        assert!(decode_tensors(&bytes[..bytes.len() - 2]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.rgae");
        let tensors = vec![NamedTensor {
            name: "x".into(),
            dims: vec![1, 2],
            values: vec![0.1, 0.2],
        }];
        write_tensor_file(&path, &tensors).unwrap();
        let bytes1 = std::fs::read(&path).unwrap();
        let back = read_tensor_file(&path).unwrap();
        assert_eq!(back, tensors);
        write_tensor_file(&path, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes1);
    }
}
