//! `cube1` / `lbl1` containers: one JSON header line, then a raw
//! little-endian payload in `[row][col][band]` order.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{LabelMap, RasterCube};
use crate::error::{Error, Result};

#[derive(Deserialize)]
struct Header {
    magic: String,
    rows: usize,
    cols: usize,
    bands: usize,
    dtype: String,
}

fn header_line(magic: &str, rows: usize, cols: usize, bands: usize, dtype: &str) -> String {
    format!(
        "{{\"magic\":\"{magic}\",\"rows\":{rows},\"cols\":{cols},\"bands\":{bands},\"dtype\":\"{dtype}\"}}\n"
    )
}

fn split_header<'a>(bytes: &'a [u8], path: &Path) -> Result<(Header, &'a [u8])> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(path, "missing header terminator"))?;
    let text = std::str::from_utf8(&bytes[..nl])
        .map_err(|_| Error::format(path, "header is not UTF-8"))?;
    let header: Header =
        serde_json::from_str(text).map_err(|e| Error::format(path, format!("bad header: {e}")))?;
    Ok((header, &bytes[nl + 1..]))
}

pub fn encode_cube(cube: &RasterCube) -> Vec<u8> {
    let mut out = header_line("cube1", cube.rows(), cube.cols(), cube.bands(), "f32le").into_bytes();
    out.reserve(cube.values().len() * 4);
    for v in cube.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// `path` is only used in error messages.
pub fn decode_cube(bytes: &[u8], path: &Path) -> Result<RasterCube> {
    let (h, payload) = split_header(bytes, path)?;
    if h.magic != "cube1" || h.dtype != "f32le" {
        return Err(Error::format(
            path,
            format!("expected cube1/f32le, found {}/{}", h.magic, h.dtype),
        ));
    }
    let n = h
        .rows
        .checked_mul(h.cols)
        .and_then(|v| v.checked_mul(h.bands))
        .ok_or_else(|| Error::format(path, "header dimensions overflow"))?;
    if payload.len() as u128 != n as u128 * 4 {
        return Err(Error::format(
            path,
            format!("header declares {n} values but payload holds {} bytes", payload.len()),
        ));
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    RasterCube::new(h.rows, h.cols, h.bands, values).map_err(|e| Error::format(path, e.to_string()))
}

pub fn encode_labels(map: &LabelMap) -> Vec<u8> {
    let mut out = header_line("lbl1", map.rows(), map.cols(), 1, "u16le").into_bytes();
    out.reserve(map.labels().len() * 2);
    for l in map.labels() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

pub fn decode_labels(bytes: &[u8], path: &Path) -> Result<LabelMap> {
    let (h, payload) = split_header(bytes, path)?;
    if h.magic != "lbl1" || h.dtype != "u16le" || h.bands != 1 {
        return Err(Error::format(
            path,
            format!("expected lbl1/u16le with 1 band, found {}/{}/{}", h.magic, h.dtype, h.bands),
        ));
    }
    let n = h
        .rows
        .checked_mul(h.cols)
        .ok_or_else(|| Error::format(path, "header dimensions overflow"))?;
    if payload.len() as u128 != n as u128 * 2 {
        return Err(Error::format(
            path,
            format!("header declares {n} labels but payload holds {} bytes", payload.len()),
        ));
    }
    let labels = payload
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    LabelMap::new(h.rows, h.cols, labels).map_err(|e| Error::format(path, e.to_string()))
}

pub fn load_cube(path: impl AsRef<Path>) -> Result<RasterCube> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cube(&bytes, path)
}

pub fn write_cube(path: impl AsRef<Path>, cube: &RasterCube) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_cube(cube)).map_err(|e| Error::io(path, e))
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_labels(&bytes, path)
}

pub fn write_labels(path: impl AsRef<Path>, map: &LabelMap) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_labels(map)).map_err(|e| Error::io(path, e))
}
