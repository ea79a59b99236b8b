use sha2::{Digest, Sha256};

use crate::model::{AccTensor, ConvLayerSpec, QTensor};

/// First 8 bytes of SHA-256, big-endian.
pub fn digest64(bytes: &[u8]) -> u64 {
    let h = Sha256::digest(bytes);
    u64::from_be_bytes(h[..8].try_into().expect("sha256 is 32 bytes"))
}

pub fn hex64(v: u64) -> String {
    format!("{v:016x}")
}

/// Identifies a layer plus its concrete tensors.
pub fn workload_digest(layer: &ConvLayerSpec, input: &QTensor, kernels: &[QTensor]) -> u64 {
    let mut buf = serde_json::to_vec(layer).expect("layer serializes");
    for t in std::iter::once(input).chain(kernels) {
        let (body, mask) = crate::io::encode_tensor(t);
        buf.extend(body);
        buf.extend(mask);
    }
    digest64(&buf)
}

pub fn tensor_digest(t: &AccTensor) -> u64 {
    let mut buf = Vec::with_capacity(12 + 8 * t.data().len());
    let d = t.dims();
    for n in [d.height, d.width, d.depth] {
        buf.extend((n as u32).to_le_bytes());
    }
    for v in t.data() {
        buf.extend(v.to_le_bytes());
    }
    digest64(&buf)
}
