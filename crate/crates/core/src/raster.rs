//! Grayscale rasters, bit masks and polygon rasterization.
//!
//! Coordinates are continuous pixel units: pixel `(i, j)` (column `i`, row
//! `j`) covers the square `[i, i+1) x [j, j+1)` and is sampled at its centre
//! `(i + 0.5, j + 0.5)`.

use std::path::Path;

use image::{DynamicImage, ImageEncoder};

use crate::error::{Error, Result};

/// Luma conversion with the 0.299 / 0.587 / 0.114 weights, rounded half up.
///
/// Evaluated in integer thousandths, so the rounding is exact.
pub fn rgb_to_gray(r: u8, g: u8, b: u8) -> u8 {
    let weighted = 299 * r as u32 + 587 * g as u32 + 114 * b as u32;
    ((weighted + 500) / 1000).min(255) as u8
}

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
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, level: u8) -> Result<Self> {
        Self::new(width, height, vec![level; width * height])
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

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Applies `f` to every gray level.
    pub fn map(&self, f: impl Fn(u8) -> u8) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Decodes PNG (8-bit gray or 8-bit RGB/RGBA) or binary PGM bytes.
    /// Colour images go through [`rgb_to_gray`]; alpha is ignored.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes)?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = match img {
            DynamicImage::ImageLuma8(buf) => buf.into_raw(),
            DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0]).collect(),
            DynamicImage::ImageRgb8(buf) => buf
                .pixels()
                .map(|p| rgb_to_gray(p.0[0], p.0[1], p.0[2]))
                .collect(),
            DynamicImage::ImageRgba8(buf) => buf
                .pixels()
                .map(|p| rgb_to_gray(p.0[0], p.0[1], p.0[2]))
                .collect(),
            other => {
                return Err(Error::InvalidImage(format!(
                    "unsupported pixel format {:?}, expected 8-bit gray or RGB",
                    other.color()
                )))
            }
        };
        Self::new(w, h, data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    /// Encodes as an 8-bit grayscale PNG.
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        image::codecs::png::PngEncoder::new(&mut out).write_image(
            &self.data,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::L8,
        )?;
        Ok(out)
    }
}

/// Closed polygon in continuous pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<(f64, f64)>,
}

impl Polygon {
    pub fn new(vertices: Vec<(f64, f64)>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidPolygon(format!(
                "need at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::InvalidPolygon("non-finite vertex".into()));
        }
        Ok(Self { vertices })
    }

    /// Axis-aligned rectangle with corner `(x, y)`, listed clockwise in
    /// image coordinates starting at the top-left corner.
    pub fn rect(x: f64, y: f64, width: f64, height: f64) -> Result<Self> {
        Self::new(vec![
            (x, y),
            (x + width, y),
            (x + width, y + height),
            (x, y + height),
        ])
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            vertices: self.vertices.iter().map(|&(x, y)| (x + dx, y + dy)).collect(),
        }
    }

    /// Nonzero-winding membership test; points on an edge are inside.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        let n = self.vertices.len();
        let mut winding = 0i32;
        for k in 0..n {
            let (ax, ay) = self.vertices[k];
            let (bx, by) = self.vertices[(k + 1) % n];
            let cross = (bx - ax) * (py - ay) - (px - ax) * (by - ay);
            if cross == 0.0
                && px >= ax.min(bx)
                && px <= ax.max(bx)
                && py >= ay.min(by)
                && py <= ay.max(by)
            {
                return true;
            }
            if ay <= py {
                if by > py && cross > 0.0 {
                    winding += 1;
                }
            } else if by <= py && cross < 0.0 {
                winding -= 1;
            }
        }
        winding != 0
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        self.vertices.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(x0, y0, x1, y1), &(x, y)| (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
        )
    }
}

/// Dense row-major bit mask, one bit per pixel.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PixelMask {
    width: usize,
    height: usize,
    words: Vec<u64>,
}

impl PixelMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            words: vec![0; (width * height).div_ceil(64)],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        let mut mask = Self::empty(width, height);
        for idx in 0..width * height {
            mask.words[idx / 64] |= 1 << (idx % 64);
        }
        mask
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        let idx = y * self.width + x;
        self.words[idx / 64] >> (idx % 64) & 1 == 1
    }

    pub fn set(&mut self, x: usize, y: usize) {
        let idx = y * self.width + x;
        self.words[idx / 64] |= 1 << (idx % 64);
    }

    pub fn area(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn same_dims(&self, other: &PixelMask) -> Result<()> {
        if self.width == other.width && self.height == other.height {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                left_w: self.width,
                left_h: self.height,
                right_w: other.width,
                right_h: other.height,
            })
        }
    }

    /// `|self ∩ other|`. Dimensions must already agree.
    pub fn intersection_area(&self, other: &PixelMask) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    /// `|self ∪ other|`. Dimensions must already agree.
    pub fn union_area(&self, other: &PixelMask) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a | b).count_ones() as usize)
            .sum()
    }

    pub fn union_with(&mut self, other: &PixelMask) -> Result<()> {
        self.same_dims(other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
        Ok(())
    }

    /// Row-major indices (`y * width + x`) of the set pixels.
    pub fn iter_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(w * 64 + b)
            })
        })
    }
}

/// Sets every pixel whose centre lies inside `poly` (nonzero winding, edges
/// inclusive). Pixels outside the `width x height` frame are dropped.
pub fn rasterize(poly: &Polygon, width: usize, height: usize) -> Result<PixelMask> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidImage(format!(
            "dimensions must be positive, got {width}x{height}"
        )));
    }
    let mut mask = PixelMask::empty(width, height);
    let (x0, y0, x1, y1) = poly.bounds();
    // centre i + 0.5 in [x0, x1]  <=>  ceil(x0 - 0.5) <= i <= floor(x1 - 0.5)
    let col_lo = ((x0 - 0.5).ceil() as i64).max(0);
    let col_hi = ((x1 - 0.5).floor() as i64).min(width as i64 - 1);
    let row_lo = ((y0 - 0.5).ceil() as i64).max(0);
    let row_hi = ((y1 - 0.5).floor() as i64).min(height as i64 - 1);
    for j in row_lo..=row_hi {
        let cy = j as f64 + 0.5;
        for i in col_lo..=col_hi {
            if poly.contains(i as f64 + 0.5, cy) {
                mask.set(i as usize, j as usize);
            }
        }
    }
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(mask)
}

pub fn mask_area(mask: &PixelMask) -> usize {
    mask.area()
}
