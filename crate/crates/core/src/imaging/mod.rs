//! Grayscale-image views of byte streams and the texture descriptors
//! computed from them.

mod haralick;
mod lbp;
mod resize;

use std::io::Write;
use std::path::Path;

pub use haralick::{
    cooccurrence, haralick_features, haralick_features_with, haralick_from_matrix, CooccurrenceMatrix, HaralickConfig,
    HARALICK_NAMES, HARALICK_OFFSETS,
};
pub use lbp::{lbp_code, lbp_features, lbp_histogram};
pub use resize::{lanczos3, resize_lanczos};

use crate::error::{Error, Result};
use crate::feature::{Category, FeatureBlock};

pub const DEFAULT_ASM_PIXELS: usize = 800;

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Binary PGM (P5) for eyeballing samples.
    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        write!(f, "P5\n{} {}\n255\n", self.width, self.height)
            .and_then(|_| f.write_all(&self.pixels))
            .map_err(|e| Error::io(path, e))
    }
}

/// How many pixels wide the image of an `n`-byte stream is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WidthPolicy {
    /// Width from the file-size bucket table used in the malware-image literature.
    SizeBuckets,
    Fixed(usize),
}

impl WidthPolicy {
    pub fn width_for(self, n_bytes: usize) -> usize {
        match self {
            WidthPolicy::Fixed(w) => w.max(1),
            WidthPolicy::SizeBuckets => bucket_width(n_bytes),
        }
    }
}

/// Size in bytes -> width: <10K 32, <30K 64, <60K 128, <100K 256,
/// <200K 384, <500K 512, <1000K 768, else 1024 (K = 1024 bytes).
pub fn bucket_width(n_bytes: usize) -> usize {
    const KB: usize = 1024;
    const TABLE: [(usize, usize); 7] = [
        (10, 32),
        (30, 64),
        (60, 128),
        (100, 256),
        (200, 384),
        (500, 512),
        (1000, 768),
    ];
    TABLE
        .iter()
        .find(|&&(limit, _)| n_bytes < limit * KB)
        .map_or(1024, |&(_, w)| w)
}

/// Reshapes bytes row-major into an image, zero-padding the last row.
pub fn bytes_to_image(bytes: &[u8], policy: WidthPolicy) -> Result<GrayImage> {
    if bytes.is_empty() {
        return Err(Error::Validation("cannot build an image from zero bytes".into()));
    }
    let width = policy.width_for(bytes.len());
    let height = bytes.len().div_ceil(width);
    let mut pixels = bytes.to_vec();
    pixels.resize(width * height, 0);
    GrayImage::new(width, height, pixels)
}

/// First `count` raw bytes of the assembly file, zero-padded.
pub fn asm_pixels(listing_file_bytes: &[u8], count: usize) -> FeatureBlock {
    let mut values: Vec<f64> = listing_file_bytes.iter().take(count).map(|&b| b as f64).collect();
    values.resize(count, 0.0);
    FeatureBlock {
        category: Category::AsmPixel,
        names: (0..count).map(|i| format!("asm_px{i}")).collect(),
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reshape_and_pad() {
        let bytes: Vec<u8> = (0..16).collect();
        let img = bytes_to_image(&bytes, WidthPolicy::Fixed(4)).unwrap();
        assert_eq!((img.width, img.height), (4, 4));
        assert_eq!(img.pixels, bytes);

        let img = bytes_to_image(&bytes[..10], WidthPolicy::Fixed(4)).unwrap();
        assert_eq!((img.width, img.height), (4, 3));
        assert_eq!(&img.pixels[10..], &[0, 0]);
        assert_eq!(&img.pixels[..10], &bytes[..10]);

        assert!(bytes_to_image(&[], WidthPolicy::SizeBuckets).is_err());
    }

    #[test]
    fn bucket_edges() {
        assert_eq!(bucket_width(3000), 32);
        assert_eq!(bucket_width(10 * 1024 - 1), 32);
        assert_eq!(bucket_width(10 * 1024), 64);
        assert_eq!(bucket_width(150 * 1024), 384);
        assert_eq!(bucket_width(5_000_000), 1024);
    }

    #[test]
    fn asm_pixel_block() {
        let b = asm_pixels(b".text:0040", DEFAULT_ASM_PIXELS);
        assert_eq!(b.values.len(), 800);
        assert_eq!(&b.values[..5], &[46.0, 116.0, 101.0, 120.0, 116.0]);
        assert_eq!(b.values[10..].iter().filter(|&&v| v == 0.0).count(), 790);
    }

    #[test]
    fn pgm_export() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        GrayImage::filled(3, 2, 9).write_pgm(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(bytes.len(), 11 + 6);
    }
}
