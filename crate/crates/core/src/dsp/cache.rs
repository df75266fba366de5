//! Per-utterance feature cache: `"SERF"`, version, rows, cols (all `u32` LE), then row-major
//! `f32` LE values.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::DspError;

pub const CACHE_MAGIC: &[u8; 4] = b"SERF";
pub const CACHE_VERSION: u32 = 1;

pub fn encode_feature_cache(values: &Array2<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * values.len());
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&(values.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(values.ncols() as u32).to_le_bytes());
    for v in values.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_feature_cache(bytes: &[u8], path: &str) -> Result<Array2<f32>, DspError> {
    let bad = |reason: &str| DspError::BadCache {
        path: path.to_string(),
        reason: reason.to_string(),
    };
    if bytes.len() < 16 {
        return Err(bad("truncated header"));
    }
    if &bytes[..4] != CACHE_MAGIC {
        return Err(bad("bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    if word(4) != CACHE_VERSION {
        return Err(bad(&format!("unsupported version {}", word(4))));
    }
    let (rows, cols) = (word(8) as usize, word(12) as usize);
    let body = &bytes[16..];
    if body.len() != rows * cols * 4 {
        return Err(bad(&format!(
            "expected {} value bytes for {rows}x{cols}, found {}",
            rows * cols * 4,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((rows, cols), values).map_err(|e| bad(&e.to_string()))
}

pub fn write_feature_cache(path: impl AsRef<Path>, values: &Array2<f32>) -> Result<(), DspError> {
    let path = path.as_ref();
    fs::write(path, encode_feature_cache(values)).map_err(|e| DspError::Unreadable {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

pub fn read_feature_cache(path: impl AsRef<Path>) -> Result<Array2<f32>, DspError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let bytes = fs::read(path).map_err(|e| DspError::Unreadable {
        path: shown.clone(),
        reason: e.to_string(),
    })?;
    decode_feature_cache(&bytes, &shown)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let m = Array2::from_shape_vec((2, 3), vec![1.0, 2.0, 3.0, 4.0, 5.0, -0.5]).unwrap();
        let b = encode_feature_cache(&m);
        assert_eq!(&b[..4], b"SERF");
        assert_eq!(&b[4..8], &[1, 0, 0, 0]);
        assert_eq!(&b[8..12], &[2, 0, 0, 0]);
        assert_eq!(&b[12..16], &[3, 0, 0, 0]);
        assert_eq!(&b[16..20], &1.0f32.to_le_bytes());
        assert_eq!(&b[36..40], &(-0.5f32).to_le_bytes());
    }

    #[test]
    fn rejects_corruption() {
        let m = Array2::<f32>::zeros((2, 2));
        let mut b = encode_feature_cache(&m);
        assert!(decode_feature_cache(&b[..20], "x").is_err());
        b[0] = b'X';
        assert!(decode_feature_cache(&b, "x").is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(rows in 0usize..20, cols in 1usize..10, seed in any::<u32>()) {
            let m = Array2::from_shape_fn((rows, cols), |(r, c)| (seed as f32 * 1e-6) + r as f32 - c as f32 * 0.25);
            let back = decode_feature_cache(&encode_feature_cache(&m), "mem").unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
