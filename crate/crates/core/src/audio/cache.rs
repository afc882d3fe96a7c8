//! Feature cache files.
//!
//! Layout, all integers and floats little-endian:
//!
//! | bytes      | content                                   |
//! |------------|-------------------------------------------|
//! | 8          | magic `SEDFEAT1`                          |
//! | 4          | clip id length `n` (u32)                  |
//! | n          | clip id, UTF-8                            |
//! | 8          | frame count `T` (u64)                     |
//! | 8          | bin count `F` (u64)                       |
//! | 8          | hop in seconds (f64)                      |
//! | 8·T·F      | values, row-major `T x F` (f64)           |
//!
//! Values are stored as raw IEEE-754 bits, so a round trip is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use super::SpectralMap;
use crate::{Error, Result};

pub const FEATURE_CACHE_MAGIC: &[u8; 8] = b"SEDFEAT1";

pub fn write_feature_cache(path: &Path, map: &SpectralMap) -> Result<()> {
    let mut buf = Vec::with_capacity(48 + map.clip_id.len() + 8 * map.values.len());
    buf.extend_from_slice(FEATURE_CACHE_MAGIC);
    buf.extend_from_slice(&(map.clip_id.len() as u32).to_le_bytes());
    buf.extend_from_slice(map.clip_id.as_bytes());
    buf.extend_from_slice(&(map.n_frames as u64).to_le_bytes());
    buf.extend_from_slice(&(map.n_mels as u64).to_le_bytes());
    buf.extend_from_slice(&map.hop_seconds.to_le_bytes());
    for v in &map.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_feature_cache(path: &Path) -> Result<SpectralMap> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let corrupt = |what: &str| Error::Data(format!("{}: corrupt feature cache ({what})", path.display()));

    let mut cursor = &bytes[..];
    let mut take = |n: usize| -> Result<&[u8]> {
        if cursor.len() < n {
            return Err(corrupt("truncated"));
        }
        let (head, rest) = cursor.split_at(n);
        cursor = rest;
        Ok(head)
    };

    if take(8)? != FEATURE_CACHE_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let id_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let clip_id = String::from_utf8(take(id_len)?.to_vec()).map_err(|_| corrupt("clip id is not UTF-8"))?;
    let n_frames = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let n_mels = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let hop_seconds = f64::from_le_bytes(take(8)?.try_into().unwrap());
    let payload = take(n_frames * n_mels * 8)?;
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if !cursor.is_empty() {
        return Err(corrupt("trailing bytes"));
    }
    SpectralMap::new(clip_id, n_frames, n_mels, hop_seconds, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    proptest::proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            values in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 12),
            hop in 1e-4f64..1.0,
        ) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("c.feat");
            let map = SpectralMap::new("clip-ü", 4, 3, hop, values).unwrap();
            write_feature_cache(&path, &map).unwrap();
            let back = read_feature_cache(&path).unwrap();
            proptest::prop_assert_eq!(back.clip_id, map.clip_id);
            proptest::prop_assert_eq!(back.hop_seconds.to_bits(), map.hop_seconds.to_bits());
            for (a, b) in back.values.iter().zip(&map.values) {
                proptest::prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.feat");
        let map = SpectralMap::new("x", 2, 2, 0.1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        write_feature_cache(&path, &map).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_feature_cache(&path), Err(Error::Data(_))));
    }
}
