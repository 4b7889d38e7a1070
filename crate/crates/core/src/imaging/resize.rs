use super::GrayImage;
use crate::error::{Error, Result};

const LOBES: f64 = 3.0;

/// Lanczos kernel with three lobes.
pub fn lanczos3(x: f64) -> f64 {
    let x = x.abs();
    if x < 1e-12 {
        1.0
    } else if (x - x.round()).abs() < 1e-12 || x >= LOBES {
        // zero crossings at the integers, exactly
        0.0
    } else {
        let px = std::f64::consts::PI * x;
        LOBES * px.sin() * (px / LOBES).sin() / (px * px)
    }
}

/// Per-output-sample (first input index, normalized weights). Out-of-range
/// taps are clamped onto the edge sample.
fn weights_1d(in_len: usize, out_len: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = in_len as f64 / out_len as f64;
    let filter_scale = scale.max(1.0);
    let support = LOBES * filter_scale;
    (0..out_len)
        .map(|o| {
            let center = (o as f64 + 0.5) * scale;
            let lo = (center - support - 0.5).ceil() as i64;
            let hi = (center + support - 0.5).floor() as i64;
            let mut taps: Vec<(usize, f64)> = (lo..=hi)
                .map(|j| {
                    let w = lanczos3((j as f64 + 0.5 - center) / filter_scale);
                    (j.clamp(0, in_len as i64 - 1) as usize, w)
                })
                .filter(|&(_, w)| w != 0.0)
                .collect();
            let total: f64 = taps.iter().map(|t| t.1).sum();
            for t in &mut taps {
                t.1 /= total;
            }
            taps
        })
        .collect()
}

/// Resamples to `side`x`side` with a separable Lanczos-3 filter
/// (antialiased when shrinking), rounding and clamping to 0..=255 once at the end.
pub fn resize_lanczos(img: &GrayImage, side: usize) -> Result<GrayImage> {
    if side < 8 {
        return Err(Error::Validation(format!("resize side must be >= 8, got {side}")));
    }
    if img.width == side && img.height == side {
        return Ok(img.clone());
    }
    let wx = weights_1d(img.width, side);
    let wy = weights_1d(img.height, side);

    // horizontal pass: height x side
    let mut tmp = vec![0.0f64; img.height * side];
    for y in 0..img.height {
        let row = &img.pixels[y * img.width..(y + 1) * img.width];
        for (x, taps) in wx.iter().enumerate() {
            tmp[y * side + x] = taps.iter().map(|&(i, w)| w * row[i] as f64).sum();
        }
    }
    let mut out = vec![0u8; side * side];
    for (y, taps) in wy.iter().enumerate() {
        for x in 0..side {
            let v: f64 = taps.iter().map(|&(i, w)| w * tmp[i * side + x]).sum();
            out[y * side + x] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    GrayImage::new(side, side, out)
}
