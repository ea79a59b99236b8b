//! Flat binary tensor files.
//!
//! A tensor file is a 12-byte header holding `height`, `width`, `depth` as
//! little-endian `u32`, followed by one little-endian `i16` per element in
//! `(y, x, c)` row-major order. The precision of each element lives in a
//! sidecar mask file (`<path>.mask`): one bit per element, least significant
//! bit first, set for 16-bit elements, padded with zero bits to a whole byte.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{Dims3, Precision, QTensor, Scalar, Tensor3};

pub fn mask_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".mask");
    PathBuf::from(p)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn encode_tensor(t: &QTensor) -> (Vec<u8>, Vec<u8>) {
    let d = t.dims();
    let mut body = Vec::with_capacity(12 + 2 * d.count());
    for n in [d.height, d.width, d.depth] {
        body.extend_from_slice(&(n as u32).to_le_bytes());
    }
    let mut mask = vec![0u8; d.count().div_ceil(8)];
    for (i, s) in t.data().iter().enumerate() {
        body.extend_from_slice(&(s.value() as i16).to_le_bytes());
        if s.is_wide() {
            mask[i / 8] |= 1 << (i % 8);
        }
    }
    (body, mask)
}

pub fn decode_tensor(body: &[u8], mask: &[u8]) -> Result<QTensor> {
    let bad = |reason: String| Error::Format { index: 0, reason };
    if body.len() < 12 {
        return Err(bad(format!("tensor header needs 12 bytes, got {}", body.len())));
    }
    let dim = |i: usize| u32::from_le_bytes(body[i * 4..i * 4 + 4].try_into().unwrap()) as usize;
    let dims = Dims3::new(dim(0), dim(1), dim(2));
    let n = dims.count();
    if body.len() != 12 + 2 * n {
        return Err(bad(format!("{dims} tensor needs {} bytes, file has {}", 12 + 2 * n, body.len())));
    }
    if mask.len() != n.div_ceil(8) {
        return Err(bad(format!("precision mask needs {} bytes, got {}", n.div_ceil(8), mask.len())));
    }
    let data = body[12..]
        .chunks_exact(2)
        .enumerate()
        .map(|(i, b)| {
            let v = i16::from_le_bytes([b[0], b[1]]) as i32;
            let precision = if mask[i / 8] >> (i % 8) & 1 == 1 {
                Precision::Bits16
            } else {
                Precision::Bits8
            };
            Scalar::new(v, precision).map_err(|_| Error::Format {
                index: i,
                reason: format!("value {v} is tagged 8-bit but out of range"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor3::from_vec(dims, data)
}

pub fn write_tensor(path: &Path, t: &QTensor) -> Result<()> {
    let (body, mask) = encode_tensor(t);
    fs::write(path, body).map_err(io_err(path))?;
    let mp = mask_path(path);
    fs::write(&mp, mask).map_err(io_err(&mp))
}

pub fn read_tensor(path: &Path) -> Result<QTensor> {
    let body = fs::read(path).map_err(io_err(path))?;
    let mp = mask_path(path);
    let mask = fs::read(&mp).map_err(io_err(&mp))?;
    decode_tensor(&body, &mask)
}
