//! Single-channel intensity images and axis-aligned boxes.
//!
//! Intensities are stored as `f32` in `[0, 1]`. Files are 8-bit: a byte `b`
//! reads as `b / 255` and an intensity `v` writes as `round(v * 255)`.

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Argument(format!(
                "{} intensities for a {width}x{height} image",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Argument(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height {
            return Err(Error::Argument(format!(
                "{} bytes for a {width}x{height} image",
                bytes.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data: bytes.iter().map(|&b| byte_to_intensity(b)).collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f32) {
        self.data[y * self.width + x] = value.clamp(0.0, 1.0);
    }

    /// Sets every pixel of the half-open rectangle `[x0, x1) x [y0, y1)`,
    /// silently skipping the part that falls outside the image.
    pub fn fill_rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, value: f32) {
        let value = value.clamp(0.0, 1.0);
        let (w, h) = (self.width as i64, self.height as i64);
        let (x0, x1) = (x0.clamp(0, w) as usize, x1.clamp(0, w) as usize);
        let (y0, y1) = (y0.clamp(0, h) as usize, y1.clamp(0, h) as usize);
        if x0 >= x1 {
            return;
        }
        for y in y0..y1 {
            let row = y * self.width;
            self.data[row + x0..row + x1].fill(value);
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| intensity_to_byte(v)).collect()
    }

    /// Round-trips every intensity through 8 bits, exactly as a save/load would.
    pub fn quantized(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|&v| byte_to_intensity(intensity_to_byte(v)))
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let luma = img.to_luma8();
        let (w, h) = luma.dimensions();
        Self::from_bytes(w as usize, h as usize, luma.as_raw())
    }

    /// Writes an 8-bit PNG, or a binary PGM when the extension is `pgm`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes();
        let (w, h) = (self.width as u32, self.height as u32);
        let codec_err = |source| Error::Image {
            path: path.to_path_buf(),
            source,
        };
        match ImageFormat::from_path(path) {
            Ok(ImageFormat::Pnm) => {
                let file = File::create(path).map_err(|e| Error::io(path, e))?;
                PnmEncoder::new(BufWriter::new(file))
                    .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
                    .write_image(&bytes, w, h, ExtendedColorType::L8)
                    .map_err(codec_err)
            }
            _ => image::ImageBuffer::<Luma<u8>, _>::from_raw(w, h, bytes)
                .expect("buffer length matches dimensions")
                .save_with_format(path, ImageFormat::Png)
                .map_err(codec_err),
        }
    }
}

/// Nearest 8-bit level, ties to even; out-of-range and NaN inputs saturate.
#[inline]
pub fn intensity_to_byte(v: f32) -> u8 {
    // Adding 2^23 leaves the rounded integer in the low mantissa bits, which
    // vectorizes where a saturating float-to-int cast does not.
    // max/min rather than clamp: NaN must map to 0
    #[allow(clippy::manual_clamp)]
    let x = v.max(0.0).min(1.0) * 255.0;
    ((x + 8_388_608.0).to_bits() & 0xFF) as u8
}

const LEVELS: [f32; 256] = {
    let mut t = [0f32; 256];
    let mut i = 0;
    while i < 256 {
        t[i] = i as f32 / 255.0;
        i += 1;
    }
    t
};

#[inline]
pub fn byte_to_intensity(b: u8) -> f32 {
    LEVELS[b as usize]
}

/// Axis-aligned box in pixel units; `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0 && self.h > 0.0 && [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite())
    }

    pub fn intersects_image(&self, width: usize, height: usize) -> bool {
        self.x < width as f64 && self.y < height as f64 && self.right() > 0.0 && self.bottom() > 0.0
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection_area(other);
        if inter == 0.0 {
            return 0.0;
        }
        inter / (self.area() + other.area() - inter)
    }

    /// Pixel columns and rows the box touches: `[floor(x), ceil(x + w))`.
    pub fn pixel_span(&self) -> (i64, i64, i64, i64) {
        (
            self.x.floor() as i64,
            self.y.floor() as i64,
            self.right().ceil() as i64,
            self.bottom().ceil() as i64,
        )
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(x={}, y={}, w={}, h={})", self.x, self.y, self.w, self.h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_conversion_rounds_to_nearest() {
        for b in 0..=255u8 {
            assert_eq!(intensity_to_byte(byte_to_intensity(b)), b);
        }
        let mut v = 0.0f32;
        while v <= 1.0 {
            assert_eq!(intensity_to_byte(v), (v * 255.0).round_ties_even() as u8, "{v}");
            v += 1.0e-5;
        }
        assert_eq!(intensity_to_byte(2.5 / 255.0), 2);
        assert_eq!(intensity_to_byte(3.5 / 255.0), 4);
        assert_eq!(intensity_to_byte(f32::NAN), 0);
        assert_eq!(intensity_to_byte(-0.3), 0);
        assert_eq!(intensity_to_byte(1.7), 255);
    }

    #[test]
    fn iou_of_identical_and_disjoint_boxes() {
        let a = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&BoundingBox::new(10.0, 0.0, 5.0, 5.0)), 0.0);
        let half = BoundingBox::new(0.0, 0.0, 10.0, 5.0);
        assert!((a.iou(&half) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn quantization_is_idempotent() {
        let img = GrayImage::from_vec(3, 1, vec![0.2, 0.5, 0.9]).unwrap();
        let q = img.quantized();
        assert_eq!(q.quantized(), q);
        assert_eq!(q.to_bytes(), vec![51, 128, 230]);
    }

    #[test]
    fn fill_rect_clips_to_bounds() {
        let mut img = GrayImage::filled(4, 4, 0.0);
        img.fill_rect(-2, -2, 2, 2, 1.0);
        let lit = img.pixels().iter().filter(|&&v| v == 1.0).count();
        assert_eq!(lit, 4);
    }

    #[test]
    fn png_and_pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::from_bytes(5, 3, &(0..15).map(|i| i * 17).collect::<Vec<u8>>()).unwrap();
        for name in ["a.png", "a.pgm"] {
            let path = dir.path().join(name);
            img.save(&path).unwrap();
            assert_eq!(GrayImage::load(&path).unwrap(), img);
        }
        let raw = std::fs::read(dir.path().join("a.pgm")).unwrap();
        assert!(raw.starts_with(b"P5"));
    }
}
