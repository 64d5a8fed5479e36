//! Influence-cache binary persistence.
//!
//! Byte layout, all little-endian:
//!
//! ```text
//! offset  size       field
//! 0       4          magic "RCIC"
//! 4       4          format version (u32), currently 1
//! 8       8          n (u64): number of influence vectors
//! 16      8          p (u64): parameter dimension
//! 24      8          damping (f64) used when the factor was built
//! 32      8p         theta_hat, p × f64
//! 32+8p   8np        vectors, row-major n×p × f64
//! end−8   8          FNV-1a 64 checksum of every preceding byte
//! ```

use std::path::Path;

use ndarray::{Array1, Array2};

use super::{InfluenceCache, UnlearnError};
use crate::ioutil::{atomic_write, fnv1a64};

const MAGIC: &[u8; 4] = b"RCIC";
const VERSION: u32 = 1;

pub fn save_cache(cache: &InfluenceCache, path: impl AsRef<Path>) -> Result<(), UnlearnError> {
    let n = cache.n();
    let p = cache.p();
    let mut bytes = Vec::with_capacity(32 + 8 * (p + n * p) + 8);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(n as u64).to_le_bytes());
    bytes.extend_from_slice(&(p as u64).to_le_bytes());
    bytes.extend_from_slice(&cache.damping().to_le_bytes());
    for v in cache.theta_hat().iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for v in cache.vectors().iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let checksum = fnv1a64(&bytes);
    bytes.extend_from_slice(&checksum.to_le_bytes());
    atomic_write(path.as_ref(), &bytes)?;
    Ok(())
}

pub fn load_cache(path: impl AsRef<Path>) -> Result<InfluenceCache, UnlearnError> {
    let bytes = std::fs::read(path.as_ref())?;
    if bytes.len() < 40 {
        return Err(UnlearnError::CacheFile {
            detail: format!("file too short ({} bytes)", bytes.len()),
        });
    }
    if &bytes[0..4] != MAGIC {
        return Err(UnlearnError::CacheFile {
            detail: "bad magic (not an influence cache)".into(),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(UnlearnError::CacheFile {
            detail: format!("unsupported version {version} (expected {VERSION})"),
        });
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let p = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let damping = f64::from_le_bytes(bytes[24..32].try_into().unwrap());
    let expected_len = 32 + 8 * (p + n * p) + 8;
    if bytes.len() != expected_len {
        return Err(UnlearnError::CacheFile {
            detail: format!(
                "truncated or padded: {} bytes, expected {expected_len} for n={n}, p={p}",
                bytes.len()
            ),
        });
    }
    let payload_end = bytes.len() - 8;
    let stored = u64::from_le_bytes(bytes[payload_end..].try_into().unwrap());
    let computed = fnv1a64(&bytes[..payload_end]);
    if stored != computed {
        return Err(UnlearnError::CacheFile {
            detail: format!("checksum mismatch (stored {stored:#018x}, computed {computed:#018x})"),
        });
    }
    let mut cursor = 32;
    let mut read_f64 = || {
        let v = f64::from_le_bytes(bytes[cursor..cursor + 8].try_into().unwrap());
        cursor += 8;
        v
    };
    let theta_hat = Array1::from_shape_fn(p, |_| read_f64());
    let vectors = Array2::from_shape_fn((n, p), |_| read_f64());
    Ok(InfluenceCache::from_parts(vectors, theta_hat, damping))
}
