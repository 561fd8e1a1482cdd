//! Binary PGM (P5) / PPM (P6) reading and writing, plus optional PNG input.

use std::fs;
use std::path::Path;

use super::{to_grayscale, GrayImage, RgbImage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnyImage {
    Gray(GrayImage),
    Rgb(RgbImage),
}

impl AnyImage {
    pub fn into_gray(self) -> Result<GrayImage> {
        match self {
            AnyImage::Gray(g) => Ok(g),
            AnyImage::Rgb(rgb) => to_grayscale(&rgb),
        }
    }
}

/// Reads an image file, dispatching on its contents (PNM magic) or, with
/// the `png` feature, PNG.
pub fn read_image(path: &Path) -> Result<AnyImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        return decode_pnm(&bytes).map_err(|message| Error::Image {
            path: path.to_path_buf(),
            message,
        });
    }
    decode_other(path, &bytes)
}

pub fn read_gray(path: &Path) -> Result<GrayImage> {
    read_image(path)?.into_gray()
}

#[cfg(feature = "png")]
fn decode_other(path: &Path, bytes: &[u8]) -> Result<AnyImage> {
    let img = image::load_from_memory(bytes).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    Ok(AnyImage::Rgb(RgbImage::new(w as usize, h as usize, rgb.into_raw())?))
}

#[cfg(not(feature = "png"))]
fn decode_other(path: &Path, _bytes: &[u8]) -> Result<AnyImage> {
    Err(Error::Image {
        path: path.to_path_buf(),
        message: "unsupported format (expected binary PGM/PPM; PNG needs the `png` feature)"
            .into(),
    })
}

fn decode_pnm(bytes: &[u8]) -> std::result::Result<AnyImage, String> {
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err("not a binary PNM file".into()),
    };
    let mut pos = 2;
    let mut header = [0usize; 3];
    for field in header.iter_mut() {
        *field = next_header_number(bytes, &mut pos)?;
    }
    let [width, height, maxval] = header;
    if maxval == 0 || maxval > 255 {
        return Err(format!("unsupported maxval {maxval}; only 8-bit files are read"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err("missing whitespace after header".into());
    }
    pos += 1;
    let need = width * height * channels;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| format!("raster truncated: need {need} bytes, have {}", bytes.len() - pos))?;
    let mut data = raster.to_vec();
    if maxval != 255 {
        for v in &mut data {
            *v = ((u32::from(*v) * 255 + maxval as u32 / 2) / maxval as u32).min(255) as u8;
        }
    }
    let img = if channels == 1 {
        AnyImage::Gray(GrayImage::new(width, height, data).map_err(|e| e.to_string())?)
    } else {
        AnyImage::Rgb(RgbImage::new(width, height, data).map_err(|e| e.to_string())?)
    };
    Ok(img)
}

fn next_header_number(bytes: &[u8], pos: &mut usize) -> std::result::Result<usize, String> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            }
            Some(c) if c.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err("header truncated".into()),
        }
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format!("bad header number at byte {start}"))
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

pub fn write_ppm(path: &Path, img: &RgbImage) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let img = GrayImage::from_fn(5, 3, |x, y| (x * 40 + y) as u8).unwrap();
        let bytes = encode_pgm(&img);
        assert_eq!(decode_pnm(&bytes).unwrap(), AnyImage::Gray(img));
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n2 1\n# max\n255\n".to_vec();
        bytes.extend_from_slice(&[3, 250]);
        let AnyImage::Gray(g) = decode_pnm(&bytes).unwrap() else {
            panic!("expected gray");
        };
        assert_eq!(g.data(), &[3, 250]);
    }

    #[test]
    fn ppm_is_decoded_and_converted() {
        let mut bytes = b"P6 1 1 255 ".to_vec();
        bytes.extend_from_slice(&[255, 0, 0]);
        let img = decode_pnm(&bytes).unwrap().into_gray().unwrap();
        assert_eq!(img.data(), &[76]);
    }

    #[test]
    fn low_maxval_is_rescaled() {
        let mut bytes = b"P5 2 1 15\n".to_vec();
        bytes.extend_from_slice(&[0, 15]);
        let AnyImage::Gray(g) = decode_pnm(&bytes).unwrap() else {
            panic!("expected gray");
        };
        assert_eq!(g.data(), &[0, 255]);
    }

    #[test]
    fn truncated_raster_is_an_error() {
        let mut bytes = b"P5 4 4 255\n".to_vec();
        bytes.extend_from_slice(&[0; 10]);
        assert!(decode_pnm(&bytes).unwrap_err().contains("truncated"));
    }
}
