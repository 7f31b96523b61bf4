//! Binary PPM (P6, maxval 255) and the DAT1 raw-tensor format.
//!
//! DAT1 layout: the 4 ASCII bytes `DAT1`, then `u32` H, W and C
//! (little-endian), then H·W·C little-endian `f32` values in row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::preprocess::{ImageTensor, PixelDomain, CHANNELS};
use crate::tensor::DenseArray;

pub const DAT1_MAGIC: &[u8; 4] = b"DAT1";
pub const DAT1_HEADER_LEN: usize = 16;

pub fn encode_dat1(dims: [usize; 3], values: &[f64]) -> Result<Vec<u8>> {
    let len = dims.iter().product::<usize>();
    if len != values.len() {
        return Err(Error::invalid(format!(
            "DAT1 dims {dims:?} need {len} values, got {}",
            values.len()
        )));
    }
    let mut buf = Vec::with_capacity(DAT1_HEADER_LEN + 4 * len);
    buf.extend_from_slice(DAT1_MAGIC);
    for d in dims {
        let d = u32::try_from(d).map_err(|_| Error::invalid("DAT1 extent exceeds u32"))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for &v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(buf)
}

pub fn decode_dat1(bytes: &[u8]) -> Result<DenseArray> {
    if bytes.len() < DAT1_HEADER_LEN || &bytes[..4] != DAT1_MAGIC {
        return Err(Error::validation("missing DAT1 header"));
    }
    let dim = |i: usize| {
        let b = &bytes[4 + 4 * i..8 + 4 * i];
        u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize
    };
    let dims = vec![dim(0), dim(1), dim(2)];
    let len: usize = dims.iter().product();
    let body = &bytes[DAT1_HEADER_LEN..];
    if body.len() != 4 * len {
        return Err(Error::validation(format!(
            "DAT1 body has {} bytes, header {dims:?} implies {}",
            body.len(),
            4 * len
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    DenseArray::new(dims, data)
}

pub fn write_dat1(path: &Path, dims: [usize; 3], values: &[f64]) -> Result<()> {
    let bytes = encode_dat1(dims, values)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_dat1(path: &Path) -> Result<DenseArray> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dat1(&bytes).map_err(|e| Error::validation(format!("{}: {e}", path.display())))
}

pub fn image_to_dat1(img: &ImageTensor) -> Result<Vec<u8>> {
    encode_dat1([img.height(), img.width(), CHANNELS], img.pixels())
}

/// Decodes a DAT1 buffer with C = 3 as an image in the given pixel domain.
pub fn image_from_dat1(bytes: &[u8], domain: PixelDomain) -> Result<ImageTensor> {
    let arr = decode_dat1(bytes)?;
    let (h, w, c) = (arr.shape()[0], arr.shape()[1], arr.shape()[2]);
    if c != CHANNELS {
        return Err(Error::validation(format!("expected {CHANNELS} channels, got {c}")));
    }
    ImageTensor::with_domain(h, w, arr.into_data(), domain)
}

/// Encodes an image as P6 with values rounded and clamped to `0..=255`.
pub fn encode_ppm(img: &ImageTensor) -> Vec<u8> {
    let mut buf = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    buf.extend(img.pixels().iter().map(|&v| v.round().clamp(0.0, 255.0) as u8));
    buf
}

pub fn decode_ppm(bytes: &[u8]) -> Result<ImageTensor> {
    let mut pos = 0;
    let mut next_token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::validation("truncated PPM header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = next_token()?;
    if magic != "P6" {
        return Err(Error::validation(format!("unsupported PPM magic {magic:?}, expected P6")));
    }
    let mut number = |what: &str| -> Result<usize> {
        let tok = next_token()?;
        tok.parse()
            .map_err(|_| Error::validation(format!("bad PPM {what} {tok:?}")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval != 255 {
        return Err(Error::validation(format!("PPM maxval {maxval} unsupported, expected 255")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let start = pos + 1;
    let len = width * height * CHANNELS;
    if bytes.len() < start + len {
        return Err(Error::validation(format!(
            "PPM raster truncated: need {len} bytes, have {}",
            bytes.len().saturating_sub(start)
        )));
    }
    let pixels = bytes[start..start + len].iter().map(|&b| f64::from(b)).collect();
    ImageTensor::new(height, width, pixels)
}

pub fn write_ppm(path: &Path, img: &ImageTensor) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_ppm(img)).map_err(|e| Error::io(path, e))
}

/// Loads a `.ppm` or `.dat` image file; DAT1 images are read as raw pixels.
pub fn read_image(path: &Path) -> Result<ImageTensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = if bytes.starts_with(DAT1_MAGIC) {
        image_from_dat1(&bytes, PixelDomain::Raw)
    } else {
        decode_ppm(&bytes)
    };
    decoded.map_err(|e| Error::validation(format!("{}: {e}", path.display())))
}

pub fn write_image(path: &Path, img: &ImageTensor) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("ppm") => write_ppm(path, img),
        _ => {
            let bytes = image_to_dat1(img)?;
            fs::write(path, bytes).map_err(|e| Error::io(path, e))
        }
    }
}
