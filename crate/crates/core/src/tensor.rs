//! Raw little-endian tensor files with a JSON sidecar.
//!
//! A tensor named `x` lives in two files: `x.bin` holds the values packed
//! row-major as little-endian 4-byte words, and `x.json` describes them:
//!
//! ```json
//! {"dtype":"f32","shape":[2,2],"layout":"row-major","endianness":"little"}
//! ```
//!
//! `dtype` is `"f32"` (IEEE-754 single) for features, logits and head
//! parameters, or `"i32"` for labels. Labels encoded as floats are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    I32,
}

impl Dtype {
    fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::I32 => "i32",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sidecar {
    pub dtype: String,
    pub shape: Vec<usize>,
    pub layout: String,
    pub endianness: String,
}

/// Location and declared shape of one tensor on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorHandle {
    pub path: PathBuf,
    pub shape: Vec<usize>,
    pub dtype: Dtype,
}

impl TensorHandle {
    /// Reads the sidecar next to `path`. `path` may name the `.bin`, the
    /// `.json`, or the bare stem.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let bin = bin_path(path.as_ref());
        let side = sidecar_path(&bin);
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let sc: Sidecar = serde_json::from_str(&text).map_err(|e| Error::json(&side, e))?;
        let dtype = match sc.dtype.as_str() {
            "f32" => Dtype::F32,
            "i32" => Dtype::I32,
            other => {
                return Err(Error::UnsupportedDtype {
                    path: side,
                    dtype: other.to_string(),
                    expected: "f32 or i32",
                })
            }
        };
        if sc.layout != "row-major" {
            return Err(Error::UnsupportedEncoding {
                path: side,
                detail: format!("layout {:?}", sc.layout),
            });
        }
        if sc.endianness != "little" {
            return Err(Error::UnsupportedEncoding {
                path: side,
                detail: format!("endianness {:?}", sc.endianness),
            });
        }
        if sc.shape.is_empty() || sc.shape.len() > 2 {
            return Err(Error::UnsupportedEncoding {
                path: side,
                detail: format!("rank {} (only 1 or 2 supported)", sc.shape.len()),
            });
        }
        Ok(Self {
            path: bin,
            shape: sc.shape,
            dtype,
        })
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    fn read_words(&self) -> Result<Vec<[u8; 4]>> {
        let bytes = fs::read(&self.path).map_err(|e| Error::io(&self.path, e))?;
        let expected = 4 * self.numel();
        if bytes.len() != expected {
            return Err(Error::SizeMismatch {
                path: self.path.clone(),
                shape: self.shape.clone(),
                expected,
                actual: bytes.len(),
            });
        }
        Ok(bytes
            .chunks_exact(4)
            .map(|c| [c[0], c[1], c[2], c[3]])
            .collect())
    }

    fn expect(&self, dtype: Dtype) -> Result<()> {
        if self.dtype != dtype {
            return Err(Error::UnsupportedDtype {
                path: self.path.clone(),
                dtype: self.dtype.name().to_string(),
                expected: dtype.name(),
            });
        }
        Ok(())
    }
}

/// Loaded tensor contents.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32 { shape: Vec<usize>, values: Vec<f32> },
    I32 { shape: Vec<usize>, values: Vec<i32> },
}

/// Loads a tensor bit-exactly, rejecting NaN and infinities.
pub fn load_tensor(handle: &TensorHandle) -> Result<TensorData> {
    let words = handle.read_words()?;
    Ok(match handle.dtype {
        Dtype::F32 => {
            let values: Vec<f32> = words.into_iter().map(f32::from_le_bytes).collect();
            if let Some(index) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    path: handle.path.clone(),
                    index,
                });
            }
            TensorData::F32 {
                shape: handle.shape.clone(),
                values,
            }
        }
        Dtype::I32 => TensorData::I32 {
            shape: handle.shape.clone(),
            values: words.into_iter().map(i32::from_le_bytes).collect(),
        },
    })
}

/// Loads a rank-2 `f32` tensor. A rank-1 tensor of length `n` loads as `n x 1`.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let h = TensorHandle::open(path)?;
    h.expect(Dtype::F32)?;
    let (rows, cols) = match h.shape[..] {
        [r, c] => (r, c),
        [n] => (n, 1),
        _ => unreachable!("rank checked in open"),
    };
    match load_tensor(&h)? {
        TensorData::F32 { values, .. } => Matrix::new(rows, cols, values),
        TensorData::I32 { .. } => unreachable!(),
    }
}

pub fn load_f32_vector(path: impl AsRef<Path>) -> Result<Vec<f32>> {
    let h = TensorHandle::open(path)?;
    h.expect(Dtype::F32)?;
    if h.shape.len() != 1 {
        return Err(Error::DimMismatch(format!(
            "{}: expected a vector, found shape {:?}",
            h.path.display(),
            h.shape
        )));
    }
    match load_tensor(&h)? {
        TensorData::F32 { values, .. } => Ok(values),
        TensorData::I32 { .. } => unreachable!(),
    }
}

pub fn load_i32_vector(path: impl AsRef<Path>) -> Result<Vec<i32>> {
    let h = TensorHandle::open(path)?;
    h.expect(Dtype::I32)?;
    if h.shape.len() != 1 {
        return Err(Error::DimMismatch(format!(
            "{}: expected a vector, found shape {:?}",
            h.path.display(),
            h.shape
        )));
    }
    match load_tensor(&h)? {
        TensorData::I32 { values, .. } => Ok(values),
        TensorData::F32 { .. } => unreachable!(),
    }
}

fn write_pair(bin: &Path, dtype: Dtype, shape: &[usize], bytes: Vec<u8>) -> Result<PathBuf> {
    let bin = bin_path(bin);
    if let Some(dir) = bin.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let sc = Sidecar {
        dtype: dtype.name().to_string(),
        shape: shape.to_vec(),
        layout: "row-major".into(),
        endianness: "little".into(),
    };
    let side = sidecar_path(&bin);
    let json = serde_json::to_string(&sc).map_err(|e| Error::json(&side, e))?;
    fs::write(&side, json).map_err(|e| Error::io(&side, e))?;
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    Ok(bin)
}

/// Writes `values` with the given shape; returns the `.bin` path.
pub fn save_f32(path: impl AsRef<Path>, shape: &[usize], values: &[f32]) -> Result<PathBuf> {
    let path = path.as_ref();
    check_shape(path, shape, values.len())?;
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            path: path.to_path_buf(),
            index,
        });
    }
    let bytes = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    write_pair(path, Dtype::F32, shape, bytes)
}

pub fn save_i32(path: impl AsRef<Path>, shape: &[usize], values: &[i32]) -> Result<PathBuf> {
    let path = path.as_ref();
    check_shape(path, shape, values.len())?;
    let bytes = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    write_pair(path, Dtype::I32, shape, bytes)
}

pub fn save_matrix(path: impl AsRef<Path>, m: &Matrix) -> Result<PathBuf> {
    save_f32(path, &m.shape(), m.as_slice())
}

fn check_shape(path: &Path, shape: &[usize], len: usize) -> Result<()> {
    if shape.is_empty() || shape.len() > 2 || shape.iter().product::<usize>() != len {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            shape: shape.to_vec(),
            expected: 4 * shape.iter().product::<usize>(),
            actual: 4 * len,
        });
    }
    Ok(())
}

fn bin_path(p: &Path) -> PathBuf {
    match p.extension().and_then(|e| e.to_str()) {
        Some("bin") => p.to_path_buf(),
        Some("json") => p.with_extension("bin"),
        _ => {
            let mut s = p.as_os_str().to_owned();
            s.push(".bin");
            PathBuf::from(s)
        }
    }
}

fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_raw(dir: &Path, name: &str, sidecar: &str, bytes: &[u8]) -> PathBuf {
        let bin = dir.join(format!("{name}.bin"));
        fs::write(dir.join(format!("{name}.json")), sidecar).unwrap();
        fs::write(&bin, bytes).unwrap();
        bin
    }

    #[test]
    fn two_by_two_loads_row_major() {
        let dir = tempfile::tempdir().unwrap();
        let bytes: Vec<u8> = [1f32, 2., 3., 4.].iter().flat_map(|v| v.to_le_bytes()).collect();
        let p = write_raw(
            dir.path(),
            "m",
            r#"{"dtype":"f32","shape":[2,2],"layout":"row-major","endianness":"little"}"#,
            &bytes,
        );
        let m = load_matrix(&p).unwrap();
        assert_eq!(m.row(0), &[1.0, 2.0]);
        assert_eq!(m.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn short_file_is_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_raw(
            dir.path(),
            "v",
            r#"{"dtype":"f32","shape":[3],"layout":"row-major","endianness":"little"}"#,
            &[0u8; 8],
        );
        let err = load_f32_vector(&p).unwrap_err();
        assert!(matches!(err, Error::SizeMismatch { expected: 12, actual: 8, .. }), "{err}");
    }

    #[test]
    fn nan_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let bytes: Vec<u8> = [1f32, f32::NAN].iter().flat_map(|v| v.to_le_bytes()).collect();
        let p = write_raw(
            dir.path(),
            "v",
            r#"{"dtype":"f32","shape":[2],"layout":"row-major","endianness":"little"}"#,
            &bytes,
        );
        assert!(matches!(load_f32_vector(&p), Err(Error::NonFinite { index: 1, .. })));
    }

    #[test]
    fn unknown_dtype_and_float_labels_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_raw(
            dir.path(),
            "a",
            r#"{"dtype":"f64","shape":[1],"layout":"row-major","endianness":"little"}"#,
            &[0u8; 8],
        );
        assert!(matches!(TensorHandle::open(&p), Err(Error::UnsupportedDtype { .. })));

        let p = save_f32(dir.path().join("lab"), &[2], &[0.0, 1.0]).unwrap();
        assert!(matches!(load_i32_vector(&p), Err(Error::UnsupportedDtype { .. })));
    }

    #[test]
    fn big_endian_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_raw(
            dir.path(),
            "a",
            r#"{"dtype":"f32","shape":[1],"layout":"row-major","endianness":"big"}"#,
            &[0u8; 4],
        );
        assert!(matches!(TensorHandle::open(&p), Err(Error::UnsupportedEncoding { .. })));
    }

    #[test]
    fn thousand_random_floats_round_trip_bits() {
        let dir = tempfile::tempdir().unwrap();
        let mut x: u32 = 0x9e37_79b9;
        let values: Vec<f32> = (0..1000)
            .map(|_| loop {
                x ^= x << 13;
                x ^= x >> 17;
                x ^= x << 5;
                let v = f32::from_bits(x);
                if v.is_finite() {
                    break v;
                }
            })
            .collect();
        let p = save_f32(dir.path().join("r"), &[1000], &values).unwrap();
        let back = load_f32_vector(&p).unwrap();
        assert!(values.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    proptest! {
        #[test]
        fn save_load_is_bit_identity(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let dir = tempfile::tempdir().unwrap();
            let mut s = seed | 1;
            let values: Vec<f32> = (0..rows * cols).map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let v = f32::from_bits((s >> 32) as u32);
                if v.is_finite() { v } else { 0.5 }
            }).collect();
            let m = Matrix::new(rows, cols, values).unwrap();
            let p = save_matrix(dir.path().join("m"), &m).unwrap();
            let back = load_matrix(&p).unwrap();
            prop_assert!(m.as_slice().iter().zip(back.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(back.shape(), [rows, cols]);
        }
    }
}
