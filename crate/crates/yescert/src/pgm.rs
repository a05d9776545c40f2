//! Binary PGM (P5) with 8-bit samples.

use std::fs;
use std::path::Path;

use yescert_core::tasks::GrayImage;

use crate::error::{Result, RunError};

fn invalid(path: &Path, msg: impl Into<String>) -> RunError {
    RunError::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, msg.into()))
}

/// Header tokens are whitespace separated; `#` starts a comment that runs
/// to the end of the line.
fn header_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    let mut pos = 0;
    if header_token(bytes, &mut pos).as_deref() != Some("P5") {
        return Err("not a binary PGM (missing P5 magic)".into());
    }
    let mut num = |name: &str| -> std::result::Result<usize, String> {
        header_token(bytes, &mut pos)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| format!("bad or missing {name} in PGM header"))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval != 255 {
        return Err(format!("only maxval 255 is supported, got {maxval}"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height;
    let raster = bytes.get(pos..pos + need).ok_or_else(|| format!("raster truncated: need {need} bytes"))?;
    GrayImage::from_bytes(width, height, raster).map_err(|e| e.to_string())
}

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.to_bytes());
    out
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| RunError::io(path, e))?;
    decode_pgm(&bytes).map_err(|m| invalid(path, m))
}

pub fn write_pgm(path: &Path, image: &GrayImage) -> Result<()> {
    fs::write(path, encode_pgm(image)).map_err(|e| RunError::io(path, e))
}
