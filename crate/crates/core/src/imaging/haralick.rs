//! Gray-level co-occurrence matrices and the 13 classic Haralick statistics.

use super::GrayImage;
use crate::feature::{Category, FeatureBlock};

/// (dy, dx) offsets at distance 1: 0, 90, 45 and 135 degrees.
pub const HARALICK_OFFSETS: [(isize, isize); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];

pub const HARALICK_NAMES: [&str; 13] = [
    "angular_second_moment",
    "contrast",
    "correlation",
    "sum_of_squares_variance",
    "inverse_difference_moment",
    "sum_average",
    "sum_variance",
    "sum_entropy",
    "entropy",
    "difference_variance",
    "difference_entropy",
    "info_measure_correlation_1",
    "info_measure_correlation_2",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HaralickConfig {
    /// Gray levels after quantization; must divide into 256 evenly.
    pub levels: usize,
    /// Count each pair in both directions.
    pub symmetric: bool,
}

impl Default for HaralickConfig {
    fn default() -> Self {
        HaralickConfig {
            levels: 32,
            symmetric: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceMatrix {
    pub levels: usize,
    pub offset: (isize, isize),
    /// Row-major `levels x levels`.
    pub counts: Vec<u64>,
}

impl CooccurrenceMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn cooccurrence(img: &GrayImage, offset: (isize, isize), cfg: HaralickConfig) -> CooccurrenceMatrix {
    let levels = cfg.levels.clamp(1, 256);
    let shift = 256 / levels;
    let (dy, dx) = offset;
    let mut counts = vec![0u64; levels * levels];
    for y in 0..img.height {
        let ny = y as isize + dy;
        if ny < 0 || ny >= img.height as isize {
            continue;
        }
        for x in 0..img.width {
            let nx = x as isize + dx;
            if nx < 0 || nx >= img.width as isize {
                continue;
            }
            let a = img.get(y, x) as usize / shift;
            let b = img.get(ny as usize, nx as usize) as usize / shift;
            counts[a * levels + b] += 1;
            if cfg.symmetric {
                counts[b * levels + a] += 1;
            }
        }
    }
    CooccurrenceMatrix { levels, offset, counts }
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

/// The 13 statistics of one co-occurrence matrix (log base 2 for entropies).
/// An empty matrix yields zeros.
pub fn haralick_from_matrix(m: &CooccurrenceMatrix) -> [f64; 13] {
    let n = m.levels;
    let total = m.total();
    if total == 0 {
        return [0.0; 13];
    }
    let p: Vec<f64> = m.counts.iter().map(|&c| c as f64 / total as f64).collect();

    let mut px = vec![0.0; n];
    let mut py = vec![0.0; n];
    let mut p_sum = vec![0.0; 2 * n - 1];
    let mut p_diff = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let v = p[i * n + j];
            px[i] += v;
            py[j] += v;
            p_sum[i + j] += v;
            p_diff[i.abs_diff(j)] += v;
        }
    }
    let mean_x: f64 = px.iter().enumerate().map(|(i, v)| i as f64 * v).sum();
    let mean_y: f64 = py.iter().enumerate().map(|(j, v)| j as f64 * v).sum();
    let var_x: f64 = px
        .iter()
        .enumerate()
        .map(|(i, v)| (i as f64 - mean_x).powi(2) * v)
        .sum();
    let var_y: f64 = py
        .iter()
        .enumerate()
        .map(|(j, v)| (j as f64 - mean_y).powi(2) * v)
        .sum();

    let mut asm = 0.0;
    let mut contrast = 0.0;
    let mut cross = 0.0;
    let mut idm = 0.0;
    let mut entropy = 0.0;
    let mut hxy1 = 0.0;
    let mut hxy2 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = p[i * n + j];
            let d = i as f64 - j as f64;
            let pxy = px[i] * py[j];
            if pxy > 0.0 {
                hxy2 -= pxy * pxy.log2();
            }
            if v == 0.0 {
                continue;
            }
            asm += v * v;
            contrast += d * d * v;
            cross += i as f64 * j as f64 * v;
            idm += v / (1.0 + d * d);
            entropy -= v * v.log2();
            hxy1 -= v * pxy.log2();
        }
    }
    let sd = (var_x * var_y).sqrt();
    let correlation = if sd > 1e-12 {
        (cross - mean_x * mean_y) / sd
    } else {
        0.0
    };

    let sum_avg: f64 = p_sum.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
    let sum_var: f64 = p_sum
        .iter()
        .enumerate()
        .map(|(k, v)| (k as f64 - sum_avg).powi(2) * v)
        .sum();
    let sum_entropy: f64 = -p_sum.iter().map(|&v| plogp(v)).sum::<f64>();
    let diff_mean: f64 = p_diff.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
    let diff_var: f64 = p_diff
        .iter()
        .enumerate()
        .map(|(k, v)| (k as f64 - diff_mean).powi(2) * v)
        .sum();
    let diff_entropy: f64 = -p_diff.iter().map(|&v| plogp(v)).sum::<f64>();

    let hx: f64 = -px.iter().map(|&v| plogp(v)).sum::<f64>();
    let hy: f64 = -py.iter().map(|&v| plogp(v)).sum::<f64>();
    let hmax = hx.max(hy);
    let imc1 = if hmax > 1e-12 { (entropy - hxy1) / hmax } else { 0.0 };
    let imc2 = (1.0 - (-2.0 * (hxy2 - entropy)).exp()).max(0.0).sqrt();

    [
        asm,
        contrast,
        correlation,
        var_x,
        idm,
        sum_avg,
        sum_var,
        sum_entropy.max(0.0),
        entropy.max(0.0),
        diff_var,
        diff_entropy.max(0.0),
        imc1,
        imc2,
    ]
}

/// Haralick statistics averaged over the four unit offsets, default config.
pub fn haralick_features(img: &GrayImage) -> FeatureBlock {
    haralick_features_with(img, HaralickConfig::default())
}

pub fn haralick_features_with(img: &GrayImage, cfg: HaralickConfig) -> FeatureBlock {
    let mut acc = [0.0; 13];
    for off in HARALICK_OFFSETS {
        let f = haralick_from_matrix(&cooccurrence(img, off, cfg));
        for (a, v) in acc.iter_mut().zip(f) {
            *a += v;
        }
    }
    FeatureBlock {
        category: Category::ByteHaralick,
        names: HARALICK_NAMES.iter().map(|s| s.to_string()).collect(),
        values: acc.iter().map(|v| v / HARALICK_OFFSETS.len() as f64).collect(),
    }
}
