//! The `FMX1` binary matrix container.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "FMX1"
//! 4       1           dtype: 0 = f32, 1 = f64
//! 5       1           ndim (1 or 2)
//! 6       8 * ndim    dims, u64 little-endian
//! ...     rows*cols*w payload, row-major, little-endian
//! ```
//!
//! A one-dimensional container decodes to a single column. Non-finite
//! payload values are rejected.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FMX1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    F64 = 1,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

fn malformed(offset: usize, reason: impl Into<String>) -> Error {
    Error::Container {
        offset: offset as u64,
        reason: reason.into(),
    }
}

pub fn encode(data: &DMatrix<f64>, dtype: Dtype) -> Vec<u8> {
    let (rows, cols) = data.shape();
    let mut out = Vec::with_capacity(6 + 16 + rows * cols * dtype.width());
    out.extend_from_slice(MAGIC);
    out.push(dtype as u8);
    out.push(2);
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for r in 0..rows {
        for c in 0..cols {
            let v = data[(r, c)];
            match dtype {
                Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<(DMatrix<f64>, Dtype)> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(malformed(0, "bad magic, expected \"FMX1\""));
    }
    let dtype = match bytes.get(4) {
        Some(0) => Dtype::F32,
        Some(1) => Dtype::F64,
        Some(code) => return Err(malformed(4, format!("unknown dtype code {code}"))),
        None => return Err(malformed(4, "truncated before dtype")),
    };
    let ndim = match bytes.get(5) {
        Some(&n @ (1 | 2)) => n as usize,
        Some(n) => return Err(malformed(5, format!("unsupported ndim {n}"))),
        None => return Err(malformed(5, "truncated before ndim")),
    };

    let mut dims = [1usize; 2];
    for (i, dim) in dims.iter_mut().enumerate().take(ndim) {
        let at = 6 + 8 * i;
        let raw: [u8; 8] = bytes
            .get(at..at + 8)
            .and_then(|s| s.try_into().ok())
            .ok_or_else(|| malformed(at, "truncated dimension field"))?;
        let value = u64::from_le_bytes(raw);
        *dim = usize::try_from(value)
            .ok()
            .filter(|&d| d > 0)
            .ok_or_else(|| malformed(at, format!("invalid dimension {value}")))?;
    }
    let [rows, cols] = dims;
    let header = 6 + 8 * ndim;

    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| malformed(6, "dimension overflow"))?;
    let expected = count
        .checked_mul(dtype.width())
        .ok_or_else(|| malformed(6, "dimension overflow"))?;
    let payload = &bytes[header..];
    if payload.len() != expected {
        return Err(malformed(
            header,
            format!(
                "payload length check failed: declared {rows}x{cols} needs {expected} bytes, found {}",
                payload.len()
            ),
        ));
    }

    let w = dtype.width();
    let mut data = DMatrix::zeros(rows, cols);
    for (i, chunk) in payload.chunks_exact(w).enumerate() {
        let v = match dtype {
            Dtype::F32 => f32::from_le_bytes(chunk.try_into().unwrap()) as f64,
            Dtype::F64 => f64::from_le_bytes(chunk.try_into().unwrap()),
        };
        if !v.is_finite() {
            return Err(malformed(
                header + i * w,
                format!("non-finite value {v} at row {}, column {}", i / cols, i % cols),
            ));
        }
        data[(i / cols, i % cols)] = v;
    }
    Ok((data, dtype))
}

pub fn read_container<R: Read>(mut reader: R) -> Result<DMatrix<f64>> {
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io("<reader>", e))?;
    decode(&bytes).map(|(m, _)| m)
}

pub fn write_container<W: Write>(mut writer: W, data: &DMatrix<f64>, dtype: Dtype) -> Result<()> {
    writer
        .write_all(&encode(data, dtype))
        .map_err(|e| Error::io("<writer>", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header(dtype: u8, dims: &[u64]) -> Vec<u8> {
        let mut b = MAGIC.to_vec();
        b.push(dtype);
        b.push(dims.len() as u8);
        for d in dims {
            b.extend_from_slice(&d.to_le_bytes());
        }
        b
    }

    #[test]
    fn f64_round_trip_is_bit_exact() {
        let m = DMatrix::from_row_slice(3, 2, &[0.1, -2.5e-300, 1.0 / 3.0, 7.0, -0.0, 1e300]);
        let (back, dtype) = decode(&encode(&m, Dtype::F64)).unwrap();
        assert_eq!(dtype, Dtype::F64);
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn layout_is_row_major() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let bytes = encode(&m, Dtype::F64);
        assert_eq!(&bytes[..6], b"FMX1\x01\x02");
        assert_eq!(bytes.len(), 6 + 16 + 32);
        assert_eq!(f64::from_le_bytes(bytes[30..38].try_into().unwrap()), 2.0);
    }

    #[test]
    fn f32_payload_decodes() {
        let mut b = header(0, &[3]);
        for v in [1.5f32, -2.0, 0.25] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        let (m, dtype) = decode(&b).unwrap();
        assert_eq!(dtype, Dtype::F32);
        assert_eq!(m.shape(), (3, 1));
        assert_eq!(m[(1, 0)], -2.0);
    }

    #[test]
    fn short_payload_is_rejected_at_payload_offset() {
        let mut b = header(1, &[2, 3]);
        for v in 0..5 {
            b.extend_from_slice(&(v as f64).to_le_bytes());
        }
        match decode(&b) {
            Err(Error::Container { offset, reason }) => {
                assert_eq!(offset, 22);
                assert!(reason.contains("payload length"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_magic_dtype_and_overflow() {
        assert!(matches!(decode(b"FMX2\x01\x01"), Err(Error::Container { offset: 0, .. })));
        assert!(matches!(decode(&header(7, &[1])), Err(Error::Container { offset: 4, .. })));
        assert!(matches!(
            decode(&header(1, &[u64::MAX / 2, 4])),
            Err(Error::Container { offset: 6, .. })
        ));
    }

    #[test]
    fn nan_payload_reports_offset() {
        let mut b = header(1, &[2]);
        b.extend_from_slice(&1.0f64.to_le_bytes());
        b.extend_from_slice(&f64::INFINITY.to_le_bytes());
        assert!(matches!(decode(&b), Err(Error::Container { offset: 22, .. })));
    }

    proptest! {
        #[test]
        fn any_finite_matrix_round_trips(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let mut s = seed;
            let m = DMatrix::from_fn(rows, cols, |_, _| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let v = f64::from_bits(s >> 2);
                if v.is_finite() { v } else { 0.0 }
            });
            let mut buf = Vec::new();
            write_container(&mut buf, &m, Dtype::F64).unwrap();
            let back = read_container(&buf[..]).unwrap();
            prop_assert!(m.iter().zip(back.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
