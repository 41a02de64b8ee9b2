//! Shared file helpers: plain text, and "text header line + row-major f64" binaries.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{AetError, Result};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AetError + '_ {
    move |source| AetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
    }
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
    }
    fs::write(path, bytes).map_err(io_err(path))
}

/// Writes `header` (one line, no newline) followed by little-endian f64 values.
pub fn write_binary(path: &Path, header: &str, data: &[f64]) -> Result<()> {
    debug_assert!(!header.contains('\n'));
    let mut bytes = Vec::with_capacity(header.len() + 1 + data.len() * 8);
    bytes.extend_from_slice(header.as_bytes());
    bytes.push(b'\n');
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_bytes(path, &bytes)
}

/// Reads a file written by [`write_binary`], returning the header line and values.
pub fn read_binary(path: &Path) -> Result<(String, Vec<f64>)> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| AetError::Format {
            path: path.to_path_buf(),
            msg: "missing header line".into(),
        })?;
    let header = String::from_utf8(bytes[..nl].to_vec()).map_err(|e| AetError::Format {
        path: path.to_path_buf(),
        msg: format!("header is not UTF-8: {e}"),
    })?;
    let body = &bytes[nl + 1..];
    if body.len() % 8 != 0 {
        return Err(AetError::Format {
            path: path.to_path_buf(),
            msg: format!("payload of {} bytes is not a whole number of f64", body.len()),
        });
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((header, data))
}

/// Parses `tag k1=v1 k2=v2 ...`, checking the leading tag.
pub fn parse_header(path: &Path, header: &str, tag: &str) -> Result<BTreeMap<String, String>> {
    let mut parts = header.split_whitespace();
    if parts.next() != Some(tag) {
        return Err(AetError::Format {
            path: path.to_path_buf(),
            msg: format!("expected header starting with '{tag}', got '{header}'"),
        });
    }
    let mut map = BTreeMap::new();
    for part in parts {
        let (k, v) = part.split_once('=').ok_or_else(|| AetError::Format {
            path: path.to_path_buf(),
            msg: format!("malformed header field '{part}'"),
        })?;
        map.insert(k.to_string(), v.to_string());
    }
    Ok(map)
}

pub fn header_value<T: std::str::FromStr>(
    path: &Path,
    map: &BTreeMap<String, String>,
    key: &str,
) -> Result<T> {
    map.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| AetError::Format {
            path: path.to_path_buf(),
            msg: format!("header field '{key}' missing or malformed"),
        })
}

/// Writes a grayscale binary PGM, mapping `[lo, hi]` linearly onto 0..=255.
/// `pixels` is row-major with row 0 at the top.
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[f64], lo: f64, hi: f64) -> Result<()> {
    assert_eq!(pixels.len(), width * height);
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    let span = if hi > lo { hi - lo } else { 1.0 };
    for &v in pixels {
        let t = if v.is_finite() { ((v - lo) / span).clamp(0.0, 1.0) } else { 0.0 };
        bytes.push((t * 255.0).round() as u8);
    }
    write_bytes(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let dir = std::env::temp_dir().join(format!("aet-io-{}", std::process::id()));
        let path = dir.join("x.bin");
        let data = vec![1.5, -2.25, 1e-300, f64::MAX];
        write_binary(&path, "K rows=2 cols=2 eta=0.001", &data).unwrap();
        let (h, d) = read_binary(&path).unwrap();
        assert_eq!(d, data);
        let map = parse_header(&path, &h, "K").unwrap();
        assert_eq!(header_value::<usize>(&path, &map, "rows").unwrap(), 2);
        assert_eq!(header_value::<f64>(&path, &map, "eta").unwrap(), 1e-3);
        assert!(parse_header(&path, &h, "wave").is_err());
        let _ = fs::remove_dir_all(dir);
    }
}
