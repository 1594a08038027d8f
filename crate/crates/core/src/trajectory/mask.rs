//! Coverage masks and their on-disk formats.

use std::path::Path;

use crate::error::{Error, Result};

/// H x W grid of coverage values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl MaskImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "mask {width}x{height} wants {} values, got {}",
                width * height,
                data.len()
            )));
        }
        if data.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidInput("mask values must lie in [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn total_mass(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Mass-weighted mean pixel coordinate, normalized to `[0, 1]^2`.
    pub fn centroid(&self) -> Result<(f64, f64)> {
        let mass = self.total_mass();
        if mass <= 0.0 {
            return Err(Error::EmptyMask("mask has zero total mass".into()));
        }
        let mut sx = 0.0;
        let mut sy = 0.0;
        for y in 0..self.height {
            for x in 0..self.width {
                let m = self.at(x, y);
                sx += m * (x as f64 + 0.5);
                sy += m * (y as f64 + 0.5);
            }
        }
        Ok((
            sx / mass / self.width as f64,
            sy / mass / self.height as f64,
        ))
    }

    /// Bounding box of pixels at or above `threshold`, as
    /// `(x_min, y_min, x_max, y_max)` inclusive.
    pub fn support_box(&self, threshold: f64) -> Option<(usize, usize, usize, usize)> {
        let mut found = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.at(x, y) >= threshold {
                    let (x0, y0, x1, y1) = found.unwrap_or((x, y, x, y));
                    found = Some((x0.min(x), y0.min(y), x1.max(x), y1.max(y)));
                }
            }
        }
        found
    }
}

/// Read an 8-bit grayscale PGM/PNG mask; values >= 128 map to 1.0.
pub fn read_mask(path: &Path) -> Result<MaskImage> {
    let img = image::open(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read mask {}: {e}", path.display())))?
        .to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img
        .into_raw()
        .into_iter()
        .map(|v| if v >= 128 { 1.0 } else { 0.0 })
        .collect();
    MaskImage::new(w, h, data)
}

/// Write a mask as 8-bit grayscale (format chosen by extension).
pub fn write_mask(mask: &MaskImage, path: &Path) -> Result<()> {
    let raw: Vec<u8> = mask
        .data()
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let img = image::GrayImage::from_raw(mask.width() as u32, mask.height() as u32, raw)
        .expect("buffer sized to mask");
    img.save(path)
        .map_err(|e| Error::Io(std::io::Error::other(format!("{e}"))))
}

/// Plain `mask_centroid` entry point matching the module surface.
pub fn mask_centroid(mask: &MaskImage) -> Result<(f64, f64)> {
    mask.centroid()
}
