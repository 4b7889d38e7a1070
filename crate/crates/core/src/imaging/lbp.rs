//! Basic 8-neighbour, radius-1 local binary patterns.

use super::GrayImage;
use crate::feature::{Category, FeatureBlock};

/// Neighbours clockwise from the top-left; the first is the most significant bit.
const NEIGHBOURS: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1)];

/// Pattern code of an interior pixel: bit set iff neighbour >= centre.
pub fn lbp_code(img: &GrayImage, y: usize, x: usize) -> u8 {
    let c = img.get(y, x);
    NEIGHBOURS.iter().fold(0u8, |code, &(dy, dx)| {
        let n = img.get((y as isize + dy) as usize, (x as isize + dx) as usize);
        (code << 1) | u8::from(n >= c)
    })
}

/// Raw pattern counts over interior pixels.
pub fn lbp_histogram(img: &GrayImage) -> [u64; 256] {
    let mut hist = [0u64; 256];
    if img.width < 3 || img.height < 3 {
        return hist;
    }
    for y in 1..img.height - 1 {
        for x in 1..img.width - 1 {
            hist[lbp_code(img, y, x) as usize] += 1;
        }
    }
    hist
}

/// Normalized 256-bin pattern histogram; all zeros below 3x3.
pub fn lbp_features(img: &GrayImage) -> FeatureBlock {
    let hist = lbp_histogram(img);
    let total: u64 = hist.iter().sum();
    let values = hist
        .iter()
        .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect();
    FeatureBlock {
        category: Category::ByteLbp,
        names: (0..256).map(|i| format!("lbp_{i}")).collect(),
        values,
    }
}
