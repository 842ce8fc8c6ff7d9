//! Minimal reader/writer for NumPy `.npy` files (format version 1.0 on
//! write; 1.0 to 3.0 on read).
//!
//! Writes little-endian `<f8` and `<i8` arrays in C order. Reads `<f8`,
//! `<f4`, `<i8` and `<i4`, in either C or Fortran order.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum NpyData {
    F64(Vec<f64>),
    I64(Vec<i64>),
}

/// A decoded array, always in C (row-major) order.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: NpyData,
}

impl NpyArray {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            NpyData::F64(v) => v.clone(),
            NpyData::I64(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }

    /// Interprets a 2-D array as a matrix.
    pub fn into_matrix(self, what: &str) -> Result<DMatrix<f64>> {
        if self.shape.len() != 2 {
            return Err(Error::Shape(format!(
                "{what}: expected a 2-D array, got shape {:?}",
                self.shape
            )));
        }
        let values = self.to_f64();
        Ok(DMatrix::from_row_slice(self.shape[0], self.shape[1], &values))
    }

    /// Interprets a 1-D (or `n x 1`) integer array as labels.
    pub fn into_labels(self, what: &str) -> Result<Vec<i64>> {
        let flat = matches!(self.shape.as_slice(), [_] | [_, 1] | [1, _]);
        if !flat {
            return Err(Error::Shape(format!(
                "{what}: expected a 1-D array, got shape {:?}",
                self.shape
            )));
        }
        match self.data {
            NpyData::I64(v) => Ok(v),
            NpyData::F64(v) => v
                .into_iter()
                .map(|x| {
                    if x.fract() == 0.0 && x.is_finite() {
                        Ok(x as i64)
                    } else {
                        Err(Error::format(what, format!("non-integer label {x}")))
                    }
                })
                .collect(),
        }
    }
}

fn header_bytes(descr: &str, shape: &[usize]) -> Vec<u8> {
    let shape_str = match shape {
        [n] => format!("({n},)"),
        _ => format!(
            "({})",
            shape
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    let mut dict = format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape_str}, }}");
    // magic(6) + version(2) + header_len(2) + dict + '\n' padded to ALIGN
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    dict.extend(std::iter::repeat_n(' ', pad));
    dict.push('\n');

    let mut out = Vec::with_capacity(10 + dict.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out
}

/// Serializes a C-ordered float64 array.
pub fn encode_f64(shape: &[usize], values: &[f64]) -> Vec<u8> {
    debug_assert_eq!(shape.iter().product::<usize>(), values.len());
    let mut out = header_bytes("<f8", shape);
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Serializes a C-ordered int64 array.
pub fn encode_i64(shape: &[usize], values: &[i64]) -> Vec<u8> {
    debug_assert_eq!(shape.iter().product::<usize>(), values.len());
    let mut out = header_bytes("<i8", shape);
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let values: Vec<f64> = m.transpose().iter().copied().collect();
    let bytes = encode_f64(&[m.nrows(), m.ncols()], &values);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let values: Vec<i64> = labels.iter().map(|&l| l as i64).collect();
    let bytes = encode_i64(&[values.len()], &values);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<NpyArray> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format { reason, .. } => Error::format(path.display().to_string(), reason),
        other => other,
    })
}

pub fn decode(bytes: &[u8]) -> Result<NpyArray> {
    let bad = |reason: &str| Error::format("npy", reason.to_string());
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(bad("missing NUMPY magic string"));
    }
    let major = bytes[6];
    let (header_len, offset) = match major {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(bad("truncated header length"));
            }
            (
                u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
                12,
            )
        }
        v => return Err(bad(&format!("unsupported format version {v}"))),
    };
    let end = offset + header_len;
    if bytes.len() < end {
        return Err(bad("truncated header"));
    }
    let header = std::str::from_utf8(&bytes[offset..end]).map_err(|_| bad("header is not UTF-8"))?;

    let descr = dict_value(header, "descr").ok_or_else(|| bad("header lacks 'descr'"))?;
    let descr = descr.trim_matches(|c| c == '\'' || c == '"');
    let fortran = match dict_value(header, "fortran_order") {
        Some("True") => true,
        Some("False") => false,
        _ => return Err(bad("header lacks a boolean 'fortran_order'")),
    };
    let shape_str = dict_value(header, "shape").ok_or_else(|| bad("header lacks 'shape'"))?;
    let shape = parse_shape(shape_str).ok_or_else(|| bad("unparseable shape tuple"))?;
    let count: usize = shape.iter().product();

    let payload = &bytes[end..];
    let (width, kind) = match descr {
        "<f8" => (8, 'f'),
        "<f4" => (4, 'f'),
        "<i8" => (8, 'i'),
        "<i4" => (4, 'i'),
        other => return Err(bad(&format!("unsupported dtype {other}"))),
    };
    if payload.len() != count * width {
        return Err(bad(&format!(
            "payload holds {} bytes, shape {shape:?} needs {}",
            payload.len(),
            count * width
        )));
    }
    let chunks = payload.chunks_exact(width);
    let mut data = match (kind, width) {
        ('f', 8) => NpyData::F64(
            chunks
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        ('f', 4) => NpyData::F64(
            chunks
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
        ),
        ('i', 8) => NpyData::I64(
            chunks
                .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        _ => NpyData::I64(
            chunks
                .map(|c| i32::from_le_bytes(c.try_into().unwrap()) as i64)
                .collect(),
        ),
    };
    if fortran && shape.len() == 2 {
        let (rows, cols) = (shape[0], shape[1]);
        let reorder = |src: &dyn Fn(usize) -> usize| -> Vec<usize> {
            (0..rows * cols).map(src).collect()
        };
        // C index k = r*cols + c lives at Fortran index c*rows + r
        let idx = reorder(&|k| (k % cols) * rows + k / cols);
        data = match data {
            NpyData::F64(v) => NpyData::F64(idx.iter().map(|&i| v[i]).collect()),
            NpyData::I64(v) => NpyData::I64(idx.iter().map(|&i| v[i]).collect()),
        };
    } else if fortran && shape.len() > 2 {
        return Err(bad("fortran-ordered arrays above 2-D are not supported"));
    }
    Ok(NpyArray { shape, data })
}

fn dict_value<'a>(header: &'a str, key: &str) -> Option<&'a str> {
    let quoted = [format!("'{key}'"), format!("\"{key}\"")];
    let start = quoted.iter().find_map(|k| header.find(k.as_str()).map(|p| p + k.len()))?;
    let rest = header[start..].trim_start().strip_prefix(':')?.trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')')? + 1
    } else {
        rest.find([',', '}']).unwrap_or(rest.len())
    };
    Some(rest[..end].trim())
}

fn parse_shape(s: &str) -> Option<Vec<usize>> {
    let inner = s.strip_prefix('(')?.strip_suffix(')')?;
    inner
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().ok())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_is_aligned_and_terminated() {
        let bytes = encode_f64(&[4, 3], &[0.0; 12]);
        let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((10 + header_len) % ALIGN, 0);
        assert_eq!(bytes[9 + header_len], b'\n');
        let text = std::str::from_utf8(&bytes[10..10 + header_len]).unwrap();
        assert!(text.starts_with("{'descr': '<f8', 'fortran_order': False, 'shape': (4, 3), }"));
        let one_d = encode_i64(&[5], &[0; 5]);
        assert!(std::str::from_utf8(&one_d[10..64]).unwrap().contains("(5,)"));
    }

    #[test]
    fn reads_fortran_order() {
        // 2x3 matrix [[1,2,3],[4,5,6]] stored column-major
        let mut bytes = Vec::new();
        let dict = "{'descr': '<f8', 'fortran_order': True, 'shape': (2, 3), }";
        let mut dict = dict.to_string();
        while !(10 + dict.len() + 1).is_multiple_of(64) {
            dict.push(' ');
        }
        dict.push('\n');
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&[1, 0]);
        bytes.extend_from_slice(&(dict.len() as u16).to_le_bytes());
        bytes.extend_from_slice(dict.as_bytes());
        for v in [1.0f64, 4.0, 2.0, 5.0, 3.0, 6.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let arr = decode(&bytes).unwrap();
        let m = arr.into_matrix("t").unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    }

    #[test]
    fn rejects_corrupt_payloads() {
        let mut bytes = encode_f64(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        bytes.pop();
        assert!(decode(&bytes).is_err());
        assert!(decode(b"not an npy file").is_err());
    }

    proptest! {
        #[test]
        fn f64_round_trip_is_bit_exact(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let values: Vec<f64> = (0..rows * cols)
                .map(|k| f64::from_bits(seed.wrapping_mul(k as u64 + 1).rotate_left(7) & 0x7fef_ffff_ffff_ffff))
                .collect();
            let arr = decode(&encode_f64(&[rows, cols], &values)).unwrap();
            prop_assert_eq!(arr.shape, vec![rows, cols]);
            match arr.data {
                NpyData::F64(v) => prop_assert!(v.iter().zip(&values).all(|(a, b)| a.to_bits() == b.to_bits())),
                _ => prop_assert!(false),
            }
        }
    }
}
