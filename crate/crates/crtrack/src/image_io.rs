//! Binary PPM (P6, maxval 255) and PNG image files.

use std::path::Path;

use crtrack_core::augment::Image;

use crate::error::{IoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Ppm,
    Png,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "ppm" => Some(ImageFormat::Ppm),
            "png" => Some(ImageFormat::Png),
            _ => None,
        }
    }
}

/// Header tokens, skipping `#` comments; returns the offset after the
/// single whitespace byte that ends the header.
fn ppm_header(bytes: &[u8]) -> Result<([u64; 3], usize)> {
    let bad = |m: &str| IoError::Format(format!("invalid PPM: {m}"));
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(bad("missing P6 magic"));
    }
    let mut pos = 2;
    let mut vals = [0u64; 3];
    for v in &mut vals {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(bad("expected a number in the header"));
        }
        *v = std::str::from_utf8(&bytes[start..pos]).unwrap().parse().map_err(|_| bad("header number too large"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("header must end with whitespace"));
    }
    Ok((vals, pos + 1))
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Image> {
    let ([w, h, maxval], off) = ppm_header(bytes)?;
    if maxval != 255 {
        return Err(IoError::Format(format!("invalid PPM: only maxval 255 is supported, got {maxval}")));
    }
    let (w, h) = (u32::try_from(w).ok(), u32::try_from(h).ok());
    let (Some(w), Some(h)) = (w, h) else {
        return Err(IoError::Format("invalid PPM: dimensions too large".into()));
    };
    let need = w as usize * h as usize * 3;
    let data = bytes.get(off..off + need).ok_or_else(|| IoError::Format("invalid PPM: truncated pixel data".into()))?;
    Ok(Image::new(w, h, data.to_vec())?)
}

pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

pub fn read_image(path: &Path) -> Result<Image> {
    let fmt = ImageFormat::from_path(path)
        .ok_or_else(|| IoError::Format(format!("{}: unsupported image extension", path.display())))?;
    match fmt {
        ImageFormat::Ppm => {
            let bytes = std::fs::read(path).map_err(|e| IoError::file(path, e))?;
            decode_ppm(&bytes).map_err(|e| IoError::Format(format!("{}: {e}", path.display())))
        }
        ImageFormat::Png => {
            let rgb = image::open(path)?.to_rgb8();
            Ok(Image::new(rgb.width(), rgb.height(), rgb.into_raw())?)
        }
    }
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    let fmt = ImageFormat::from_path(path)
        .ok_or_else(|| IoError::Format(format!("{}: unsupported image extension", path.display())))?;
    match fmt {
        ImageFormat::Ppm => std::fs::write(path, encode_ppm(img)).map_err(|e| IoError::file(path, e)),
        ImageFormat::Png => {
            image::save_buffer(path, img.pixels(), img.width(), img.height(), image::ExtendedColorType::Rgb8)?;
            Ok(())
        }
    }
}
