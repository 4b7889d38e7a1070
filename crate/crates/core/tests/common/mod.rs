//! Brute-force reference implementations, written from the textbook
//! definitions and deliberately not sharing code paths with the library.

#![allow(dead_code)]

use std::collections::HashMap;

/// `|a - b| <= tol * max(1, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

/// Shannon entropy in bits via sorted run lengths:
/// H = log2(n) - (1/n) * sum(c * log2(c)).
pub fn entropy(chunk: &[u8]) -> f64 {
    if chunk.is_empty() {
        return 0.0;
    }
    let mut sorted = chunk.to_vec();
    sorted.sort_unstable();
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=sorted.len() {
        if i == sorted.len() || sorted[i] != sorted[start] {
            runs.push((i - start) as f64);
            start = i;
        }
    }
    let n = chunk.len() as f64;
    n.log2() - runs.iter().map(|c| c * c.log2()).sum::<f64>() / n
}

/// 256-bin LBP histogram over interior pixels, normalized to sum 1.
/// Bit weights run 128 (top-left) clockwise down to 1 (left).
pub fn lbp(w: usize, h: usize, px: &[u8]) -> Vec<f64> {
    let ring: [((i64, i64), u32); 8] = [
        ((-1, -1), 128),
        ((-1, 0), 64),
        ((-1, 1), 32),
        ((0, 1), 16),
        ((1, 1), 8),
        ((1, 0), 4),
        ((1, -1), 2),
        ((0, -1), 1),
    ];
    let at = |y: i64, x: i64| px[(y as usize) * w + x as usize];
    let mut hist = vec![0.0; 256];
    let mut n = 0.0;
    for y in 1..h as i64 - 1 {
        for x in 1..w as i64 - 1 {
            let c = at(y, x);
            let code: u32 = ring
                .iter()
                .filter(|((dy, dx), _)| at(y + dy, x + dx) >= c)
                .map(|(_, wgt)| wgt)
                .sum();
            hist[code as usize] += 1.0;
            n += 1.0;
        }
    }
    if n > 0.0 {
        for v in &mut hist {
            *v /= n;
        }
    }
    hist
}

fn h2(ps: impl Iterator<Item = f64>) -> f64 {
    -ps.filter(|&p| p > 0.0).map(|p| p * p.log2()).sum::<f64>()
}

/// The 13 Haralick statistics of a symmetric GLCM at one offset, from a
/// sparse pair map.
fn haralick_one(w: usize, h: usize, q: &[usize], (dy, dx): (i64, i64)) -> [f64; 13] {
    let mut pairs: HashMap<(usize, usize), f64> = HashMap::new();
    let mut total = 0.0;
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let (ny, nx) = (y + dy, x + dx);
            if ny < 0 || nx < 0 || ny >= h as i64 || nx >= w as i64 {
                continue;
            }
            let a = q[y as usize * w + x as usize];
            let b = q[ny as usize * w + nx as usize];
            *pairs.entry((a, b)).or_default() += 1.0;
            *pairs.entry((b, a)).or_default() += 1.0;
            total += 2.0;
        }
    }
    if total == 0.0 {
        return [0.0; 13];
    }
    let p: Vec<((usize, usize), f64)> = pairs.into_iter().map(|(k, c)| (k, c / total)).collect();
    let mut px: HashMap<usize, f64> = HashMap::new();
    let mut py: HashMap<usize, f64> = HashMap::new();
    let mut psum: HashMap<usize, f64> = HashMap::new();
    let mut pdiff: HashMap<usize, f64> = HashMap::new();
    for &((i, j), v) in &p {
        *px.entry(i).or_default() += v;
        *py.entry(j).or_default() += v;
        *psum.entry(i + j).or_default() += v;
        *pdiff.entry(i.abs_diff(j)).or_default() += v;
    }
    let ux: f64 = p.iter().map(|((i, _), v)| *i as f64 * v).sum();
    let uy: f64 = p.iter().map(|((_, j), v)| *j as f64 * v).sum();
    let sx = p
        .iter()
        .map(|((i, _), v)| (*i as f64 - ux).powi(2) * v)
        .sum::<f64>()
        .sqrt();
    let sy = p
        .iter()
        .map(|((_, j), v)| (*j as f64 - uy).powi(2) * v)
        .sum::<f64>()
        .sqrt();

    let asm: f64 = p.iter().map(|(_, v)| v * v).sum();
    let contrast: f64 = pdiff.iter().map(|(k, v)| (*k as f64).powi(2) * v).sum();
    let corr = if sx * sy > 1e-12 {
        p.iter()
            .map(|((i, j), v)| (*i as f64 - ux) * (*j as f64 - uy) * v)
            .sum::<f64>()
            / (sx * sy)
    } else {
        0.0
    };
    let ssv = sx * sx;
    let idm: f64 = p
        .iter()
        .map(|((i, j), v)| v / (1.0 + (*i as f64 - *j as f64).powi(2)))
        .sum();
    let savg: f64 = p.iter().map(|((i, j), v)| (i + j) as f64 * v).sum();
    let svar: f64 = p.iter().map(|((i, j), v)| ((i + j) as f64 - savg).powi(2) * v).sum();
    let sent = h2(psum.values().copied());
    let hxy = h2(p.iter().map(|(_, v)| *v));
    let dmean: f64 = p.iter().map(|((i, j), v)| i.abs_diff(*j) as f64 * v).sum();
    let dvar: f64 = p
        .iter()
        .map(|((i, j), v)| (i.abs_diff(*j) as f64 - dmean).powi(2) * v)
        .sum();
    let dent = h2(pdiff.values().copied());
    let hx = h2(px.values().copied());
    let hy = h2(py.values().copied());
    let hxy1: f64 = -p.iter().map(|((i, j), v)| v * (px[i] * py[j]).log2()).sum::<f64>();
    let mut hxy2 = 0.0;
    for a in px.values() {
        for b in py.values() {
            hxy2 -= a * b * (a * b).log2();
        }
    }
    let imc1 = if hx.max(hy) > 1e-12 {
        (hxy - hxy1) / hx.max(hy)
    } else {
        0.0
    };
    let imc2 = (1.0 - (-2.0 * (hxy2 - hxy)).exp()).max(0.0).sqrt();
    [
        asm, contrast, corr, ssv, idm, savg, svar, sent, hxy, dvar, dent, imc1, imc2,
    ]
}

/// Mean over the 0, 90, 45 and 135 degree unit offsets after quantizing
/// to `levels` gray levels.
pub fn haralick(w: usize, h: usize, px: &[u8], levels: usize) -> Vec<f64> {
    let q: Vec<usize> = px.iter().map(|&v| v as usize * levels / 256).collect();
    let mut acc = vec![0.0; 13];
    for off in [(0, 1), (1, 0), (1, 1), (1, -1)] {
        for (a, v) in acc.iter_mut().zip(haralick_one(w, h, &q, off)) {
            *a += v / 4.0;
        }
    }
    acc
}

/// Chi-square from sum(O^2 / E) - T after shifting each column to a
/// minimum of 0.
pub fn chi2(cols: &[Vec<f64>], y: &[usize], classes: usize) -> Vec<f64> {
    let n = y.len() as f64;
    cols.iter()
        .map(|col| {
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let mut o = vec![0.0; classes];
            let mut cnt = vec![0.0; classes];
            for (v, &l) in col.iter().zip(y) {
                o[l] += v - lo;
                cnt[l] += 1.0;
            }
            let t: f64 = o.iter().sum();
            if t == 0.0 {
                return 0.0;
            }
            (0..classes)
                .filter(|&k| cnt[k] > 0.0)
                .map(|k| o[k] * o[k] / (cnt[k] / n * t))
                .sum::<f64>()
                - t
        })
        .collect()
}

/// One-way ANOVA F with SSB recovered as SST - SSW.
pub fn anova_f(cols: &[Vec<f64>], y: &[usize], classes: usize) -> Vec<f64> {
    let n = y.len();
    let present: Vec<usize> = (0..classes).filter(|k| y.contains(k)).collect();
    let g = present.len();
    cols.iter()
        .map(|col| {
            let mean = col.iter().sum::<f64>() / n as f64;
            let sst: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
            let mut ssw = 0.0;
            for &k in &present {
                let vals: Vec<f64> = col.iter().zip(y).filter(|(_, &l)| l == k).map(|(v, _)| *v).collect();
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                ssw += vals.iter().map(|v| (v - m).powi(2)).sum::<f64>();
            }
            ((sst - ssw) / (g - 1) as f64) / (ssw / (n - g) as f64)
        })
        .collect()
}

/// Mutual information in nats as H(B) + H(Y) - H(B, Y), with `bins`
/// equal-width bins over each column's range.
pub fn mutual_info(cols: &[Vec<f64>], y: &[usize], bins: usize) -> Vec<f64> {
    let n = y.len() as f64;
    let ent =
        |counts: &HashMap<(usize, usize), f64>| -> f64 { -counts.values().map(|&c| c / n * (c / n).ln()).sum::<f64>() };
    cols.iter()
        .map(|col| {
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi <= lo {
                return 0.0;
            }
            let width = (hi - lo) / bins as f64;
            let b: Vec<usize> = col
                .iter()
                .map(|v| (((v - lo) / width) as usize).min(bins - 1))
                .collect();
            let mut hb = HashMap::new();
            let mut hy = HashMap::new();
            let mut hby = HashMap::new();
            for (&bi, &l) in b.iter().zip(y) {
                *hb.entry((bi, 0)).or_insert(0.0) += 1.0;
                *hy.entry((0, l)).or_insert(0.0) += 1.0;
                *hby.entry((bi, l)).or_insert(0.0) += 1.0;
            }
            ent(&hb) + ent(&hy) - ent(&hby)
        })
        .collect()
}

/// Mean clipped negative log-likelihood, summed back to front.
pub fn logloss(probs: &[Vec<f64>], y: &[usize]) -> f64 {
    let eps = 1e-15;
    let total: f64 = probs
        .iter()
        .zip(y)
        .rev()
        .map(|(p, &l)| -(p[l].max(eps).min(1.0 - eps)).ln())
        .sum();
    total / y.len() as f64
}
