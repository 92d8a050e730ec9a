//! Checkpoint serialization.
//!
//! Layout (little-endian): magic "DPMK", version u32, K u32, feature_dim
//! u32, training seed u64, tensor count u32, per-tensor (rows u32, cols
//! u32), the f64 parameter blob in declaration order, and a CRC32 trailer
//! over everything before it.

use thiserror::Error;

use crate::nn::params::{NetParams, FEATURE_DIM, PARAM_COUNT, TENSORS};

const MAGIC: [u8; 4] = *b"DPMK";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint has wrong magic (expected \"DPMK\")")]
    MagicMismatch,
    #[error("checkpoint version {found} unsupported (expected 1)")]
    VersionMismatch { found: u32 },
    #[error("checkpoint shape mismatch: {what}")]
    ShapeMismatch { what: String },
    #[error("checkpoint truncated: {context}")]
    Truncated { context: &'static str },
    #[error("checkpoint CRC mismatch (stored {stored:08x}, computed {computed:08x})")]
    ChecksumMismatch { stored: u32, computed: u32 },
}

/// Header metadata carried alongside the parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckpointMeta {
    /// Number of input photons the network was trained for.
    pub k: u32,
    pub feature_dim: u32,
    pub train_seed: u64,
}

impl CheckpointMeta {
    /// Enforce that a checkpoint matches the K requested at inference time.
    pub fn expect_k(&self, k: usize) -> Result<(), CheckpointError> {
        if self.k as usize != k {
            return Err(CheckpointError::ShapeMismatch {
                what: format!("checkpoint trained for K = {}, requested K = {k}", self.k),
            });
        }
        Ok(())
    }
}

/// CRC32 (IEEE 802.3, reflected polynomial 0xEDB88320).
pub fn crc32(bytes: &[u8]) -> u32 {
    let mut crc = 0xffff_ffffu32;
    for &byte in bytes {
        crc ^= byte as u32;
        for _ in 0..8 {
            let mask = (crc & 1).wrapping_neg();
            crc = (crc >> 1) ^ (0xedb8_8320 & mask);
        }
    }
    !crc
}

pub fn checkpoint_to_bytes(params: &NetParams<f64>, meta: &CheckpointMeta) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + TENSORS.len() * 8 + PARAM_COUNT * 8 + 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&meta.k.to_le_bytes());
    out.extend_from_slice(&meta.feature_dim.to_le_bytes());
    out.extend_from_slice(&meta.train_seed.to_le_bytes());
    out.extend_from_slice(&(TENSORS.len() as u32).to_le_bytes());
    for &(_, rows, cols) in &TENSORS {
        out.extend_from_slice(&(rows as u32).to_le_bytes());
        out.extend_from_slice(&(cols as u32).to_le_bytes());
    }
    for &v in params.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<(NetParams<f64>, CheckpointMeta), CheckpointError> {
    let mut at = 0usize;
    let take = |at: &mut usize, n: usize, context: &'static str| -> Result<&[u8], CheckpointError> {
        if *at + n > bytes.len() {
            return Err(CheckpointError::Truncated { context });
        }
        let s = &bytes[*at..*at + n];
        *at += n;
        Ok(s)
    };
    let u32_at = |at: &mut usize, context: &'static str| -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(take(at, 4, context)?.try_into().unwrap()))
    };

    if take(&mut at, 4, "magic")? != MAGIC {
        return Err(CheckpointError::MagicMismatch);
    }
    let version = u32_at(&mut at, "version")?;
    if version != VERSION {
        return Err(CheckpointError::VersionMismatch { found: version });
    }
    let k = u32_at(&mut at, "k")?;
    let feature_dim = u32_at(&mut at, "feature_dim")?;
    let train_seed = u64::from_le_bytes(take(&mut at, 8, "seed")?.try_into().unwrap());
    if feature_dim as usize != FEATURE_DIM {
        return Err(CheckpointError::ShapeMismatch {
            what: format!("feature_dim {feature_dim} (expected {FEATURE_DIM})"),
        });
    }
    let tensor_count = u32_at(&mut at, "tensor count")? as usize;
    if tensor_count != TENSORS.len() {
        return Err(CheckpointError::ShapeMismatch {
            what: format!("{tensor_count} tensors (expected {})", TENSORS.len()),
        });
    }
    for (ix, &(name, rows, cols)) in TENSORS.iter().enumerate() {
        let r = u32_at(&mut at, "tensor shape")?;
        let c = u32_at(&mut at, "tensor shape")?;
        if (r as usize, c as usize) != (rows, cols) {
            return Err(CheckpointError::ShapeMismatch {
                what: format!("tensor {ix} ({name}): {r}x{c} (expected {rows}x{cols})"),
            });
        }
    }
    let blob = take(&mut at, PARAM_COUNT * 8, "parameter blob")?;
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let body_end = at;
    let stored = u32::from_le_bytes(take(&mut at, 4, "crc trailer")?.try_into().unwrap());
    let computed = crc32(&bytes[..body_end]);
    if stored != computed {
        return Err(CheckpointError::ChecksumMismatch { stored, computed });
    }
    if at != bytes.len() {
        return Err(CheckpointError::Truncated { context: "trailing bytes" });
    }
    let params = NetParams::from_values(values).expect("validated length");
    Ok((params, CheckpointMeta { k, feature_dim, train_seed }))
}

pub fn save_checkpoint<P: AsRef<std::path::Path>>(
    params: &NetParams<f64>,
    meta: &CheckpointMeta,
    path: P,
) -> Result<(), CheckpointError> {
    std::fs::write(path, checkpoint_to_bytes(params, meta))?;
    Ok(())
}

pub fn load_checkpoint<P: AsRef<std::path::Path>>(
    path: P,
) -> Result<(NetParams<f64>, CheckpointMeta), CheckpointError> {
    checkpoint_from_bytes(&std::fs::read(path)?)
}
