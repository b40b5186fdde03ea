use std::path::Path;

use crate::error::{Error, Result};
use crate::lane::{Point3I, PointCloud};

// Header: magic, u32 version, u64 point count, u32 reserved (zero).
pub const CLOUD_MAGIC: [u8; 4] = *b"LSVL";
pub const CLOUD_VERSION: u32 = 1;
pub const CLOUD_HEADER_LEN: u64 = 20;
pub const CLOUD_RECORD_LEN: u64 = 16;

pub fn encode_cloud(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(CLOUD_HEADER_LEN as usize + 16 * cloud.len());
    out.extend_from_slice(&CLOUD_MAGIC);
    out.extend_from_slice(&CLOUD_VERSION.to_le_bytes());
    out.extend_from_slice(&(cloud.len() as u64).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for p in &cloud.points {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn f32_at(bytes: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

/// Parses a cloud file image. Points are validated like any other cloud.
pub fn decode_cloud(bytes: &[u8], frame_id: &str) -> Result<PointCloud> {
    let len = bytes.len() as u64;
    if bytes.len() < 4 {
        return Err(Error::TruncatedFile { expected: CLOUD_HEADER_LEN, actual: len });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4-byte slice");
    if magic != CLOUD_MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    if len < CLOUD_HEADER_LEN {
        return Err(Error::TruncatedFile { expected: CLOUD_HEADER_LEN, actual: len });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4-byte slice"));
    if version != CLOUD_VERSION {
        return Err(Error::VersionUnsupported(version));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8-byte slice"));
    let reserved = u32::from_le_bytes(bytes[16..20].try_into().expect("4-byte slice"));
    if reserved != 0 {
        return Err(Error::schema("header.reserved", format!("expected 0, found {reserved}")));
    }
    let expected = count
        .checked_mul(CLOUD_RECORD_LEN)
        .and_then(|n| n.checked_add(CLOUD_HEADER_LEN))
        .unwrap_or(u64::MAX);
    if len < expected {
        return Err(Error::TruncatedFile { expected, actual: len });
    }
    if len > expected {
        return Err(Error::TrailingData { count, extra: len - expected });
    }
    let points = bytes[CLOUD_HEADER_LEN as usize..]
        .chunks_exact(CLOUD_RECORD_LEN as usize)
        .map(|r| Point3I::new(f32_at(r, 0), f32_at(r, 4), f32_at(r, 8), f32_at(r, 12)))
        .collect();
    PointCloud::new(frame_id, points)
}

/// Reads a cloud; its frame id is the file stem.
pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = super::read_bytes(path)?;
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    decode_cloud(&bytes, &stem)
}

pub fn write_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    super::write_atomic(path, &encode_cloud(cloud))
}
