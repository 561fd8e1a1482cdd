//! Pure image kernels: grayscale conversion, Laplacian variance, Shannon
//! entropy, circular crop and average-hash fingerprints.
//!
//! Every function here is a pure function of its input image, so callers are
//! free to fan them out across frames.

mod pnm;

pub use pnm::{read_gray, read_image, write_pgm, write_ppm, AnyImage};

use crate::error::{Error, Result};

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "image dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "pixel buffer holds {} values, expected {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn transpose(&self) -> GrayImage {
        let mut data = Vec::with_capacity(self.data.len());
        for x in 0..self.width {
            for y in 0..self.height {
                data.push(self.get(x, y));
            }
        }
        GrayImage {
            width: self.height,
            height: self.width,
            data,
        }
    }
}

/// Row-major interleaved 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "image dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        if data.len() != width * height * 3 {
            return Err(Error::invalid(format!(
                "RGB buffer holds {} bytes, expected {}",
                data.len(),
                width * height * 3
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }
}

/// BT.601 luma: `round(0.299 R + 0.587 G + 0.114 B)`.
pub fn to_grayscale(rgb: &RgbImage) -> Result<GrayImage> {
    let data = rgb
        .data
        .chunks_exact(3)
        .map(|px| luma(px[0], px[1], px[2]))
        .collect();
    GrayImage::new(rgb.width, rgb.height, data)
}

#[inline]
fn luma(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    y.round().clamp(0.0, 255.0) as u8
}

/// Population variance of the 4-neighbour Laplacian response
/// `[[0,1,0],[1,-4,1],[0,1,0]]` with replicate padding.
///
/// Sums are accumulated exactly in integers, so the only rounding happens in
/// the final division.
pub fn laplacian_variance(img: &GrayImage) -> Result<f64> {
    let (w, h) = (img.width, img.height);
    if w < 3 || h < 3 {
        return Err(Error::invalid(format!(
            "laplacian variance needs at least 3x3 pixels, got {w}x{h}"
        )));
    }
    let px = &img.data;
    let mut sum: i64 = 0;
    let mut sum_sq: i128 = 0;

    for y in 0..h {
        let up = y.saturating_sub(1) * w;
        let row = y * w;
        let down = (y + 1).min(h - 1) * w;
        // Interior columns need no clamping.
        let mut acc = |x_left: usize, x: usize, x_right: usize| {
            let c = i32::from(px[row + x]);
            let r = i32::from(px[up + x])
                + i32::from(px[down + x])
                + i32::from(px[row + x_left])
                + i32::from(px[row + x_right])
                - 4 * c;
            sum += i64::from(r);
            sum_sq += i128::from(r * r);
        };
        acc(0, 0, 1);
        for x in 1..w - 1 {
            acc(x - 1, x, x + 1);
        }
        acc(w - 2, w - 1, w - 1);
    }

    let n = (w * h) as i128;
    let s = i128::from(sum);
    // n² · var = n · Σr² − (Σr)²
    let scaled = n * sum_sq - s * s;
    Ok(scaled as f64 / (n * n) as f64)
}

/// 256-bin intensity histogram.
pub fn histogram(img: &GrayImage) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for &v in &img.data {
        hist[v as usize] += 1;
    }
    hist
}

/// Shannon entropy of the intensity histogram, in bits (`0..=8`).
pub fn shannon_entropy(img: &GrayImage) -> f64 {
    let hist = histogram(img);
    let n = img.data.len() as f64;
    let h: f64 = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    h.clamp(0.0, 8.0)
}

/// Whether pixel `(x, y)` lies inside the inscribed circle of a
/// `width` x `height` image.
#[inline]
pub fn inside_crop_circle(width: usize, height: usize, x: usize, y: usize) -> bool {
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let r = width.min(height) as f64 / 2.0;
    let dx = x as f64 - cx;
    let dy = y as f64 - cy;
    dx * dx + dy * dy <= r * r
}

/// Sets every pixel farther than `min(width, height) / 2` from the image
/// centre to `fill`.
pub fn circular_crop(img: &GrayImage, fill: u8) -> GrayImage {
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            if !inside_crop_circle(img.width, img.height, x, y) {
                out.set(x, y, fill);
            }
        }
    }
    out
}

pub const THUMB_SIDE: usize = 32;
const HASH_SIDE: usize = 8;

/// 64-bit average hash plus the 32x32 thumbnail it was derived from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameFingerprint {
    pub bits: u64,
    pub thumb: Box<[u8; THUMB_SIDE * THUMB_SIDE]>,
}

impl FrameFingerprint {
    /// Rebuilds a fingerprint from a thumbnail.
    pub fn from_thumb(thumb: Box<[u8; THUMB_SIDE * THUMB_SIDE]>) -> Self {
        let bits = hash_thumb(&thumb);
        Self { bits, thumb }
    }
}

/// Source pixel range covered by output cell `i` when mapping `src` pixels
/// onto `dst` cells. Always non-empty.
fn box_range(i: usize, src: usize, dst: usize) -> std::ops::Range<usize> {
    let start = i * src / dst;
    let end = ((i + 1) * src).div_ceil(dst).max(start + 1).min(src);
    start..end
}

/// Box-filter downsample to a 32x32 thumbnail (cell means rounded half-up).
pub fn thumbnail(img: &GrayImage) -> Box<[u8; THUMB_SIDE * THUMB_SIDE]> {
    let mut thumb = Box::new([0u8; THUMB_SIDE * THUMB_SIDE]);
    for ty in 0..THUMB_SIDE {
        let ys = box_range(ty, img.height, THUMB_SIDE);
        for tx in 0..THUMB_SIDE {
            let xs = box_range(tx, img.width, THUMB_SIDE);
            let mut sum = 0u64;
            for y in ys.clone() {
                let row = &img.data[y * img.width..(y + 1) * img.width];
                sum += row[xs.clone()].iter().map(|&v| u64::from(v)).sum::<u64>();
            }
            let count = (ys.len() * xs.len()) as u64;
            thumb[ty * THUMB_SIDE + tx] = ((2 * sum + count) / (2 * count)) as u8;
        }
    }
    thumb
}

/// Bit `row * 8 + col` is set iff the 4x4 block mean of the thumbnail at
/// that cell exceeds the mean of the whole 8x8 grid.
fn hash_thumb(thumb: &[u8; THUMB_SIDE * THUMB_SIDE]) -> u64 {
    const BLOCK: usize = THUMB_SIDE / HASH_SIDE;
    // Block sums instead of means: all blocks share the same pixel count, so
    // comparing sums against the mean of sums is exact.
    let mut cells = [0u32; HASH_SIDE * HASH_SIDE];
    for (i, v) in thumb.iter().enumerate() {
        let (y, x) = (i / THUMB_SIDE, i % THUMB_SIDE);
        cells[(y / BLOCK) * HASH_SIDE + x / BLOCK] += u32::from(*v);
    }
    let total: u32 = cells.iter().sum();
    let n = (HASH_SIDE * HASH_SIDE) as u32;
    cells
        .iter()
        .enumerate()
        .filter(|(_, &c)| c * n > total)
        .fold(0u64, |bits, (i, _)| bits | (1u64 << i))
}

/// Average-hash fingerprint. Needs at least 8x8 pixels.
pub fn fingerprint(img: &GrayImage) -> Result<FrameFingerprint> {
    if img.width < HASH_SIDE || img.height < HASH_SIDE {
        return Err(Error::invalid(format!(
            "fingerprint needs at least 8x8 pixels, got {}x{}",
            img.width, img.height
        )));
    }
    Ok(FrameFingerprint::from_thumb(thumbnail(img)))
}

pub fn hamming(a: &FrameFingerprint, b: &FrameFingerprint) -> u32 {
    (a.bits ^ b.bits).count_ones()
}

/// `size` x `size` box blur with replicate padding.
pub fn box_blur(img: &GrayImage, size: usize) -> GrayImage {
    let r = (size / 2) as isize;
    let (w, h) = (img.width as isize, img.height as isize);
    let count = ((2 * r + 1) * (2 * r + 1)) as u32;
    GrayImage::from_fn(img.width, img.height, |x, y| {
        let mut sum = 0u32;
        for dy in -r..=r {
            for dx in -r..=r {
                let sx = (x as isize + dx).clamp(0, w - 1) as usize;
                let sy = (y as isize + dy).clamp(0, h - 1) as usize;
                sum += u32::from(img.get(sx, sy));
            }
        }
        ((2 * sum + count) / (2 * count)) as u8
    })
    .expect("dimensions come from a valid image")
}
