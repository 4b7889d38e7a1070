//! Hex-view features: metadata, byte unigrams, and structural-entropy statistics.

use crate::corpus::HexDump;
use crate::error::{Error, Result};
use crate::feature::{Category, FeatureBlock};

pub const DEFAULT_CHUNK_SIZE: usize = 256;
pub const DEFAULT_PERCENTILES: [f64; 9] = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0];

/// Shannon entropy (bits) of consecutive fixed-size chunks of a byte stream.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyStream {
    pub values: Vec<f64>,
    pub chunk_size: usize,
}

impl EntropyStream {
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `[file_size_bytes, start_address]`.
pub fn byte_metadata(dump: &HexDump) -> FeatureBlock {
    FeatureBlock {
        category: Category::ByteMd,
        names: vec!["file_size".into(), "start_address".into()],
        values: vec![dump.file_size_bytes as f64, dump.start_address as f64],
    }
}

/// Count of each byte value among defined cells; `??` cells are skipped.
pub fn byte_unigrams(dump: &HexDump) -> FeatureBlock {
    let mut counts = [0u64; 256];
    for b in dump.defined_bytes() {
        counts[b as usize] += 1;
    }
    FeatureBlock {
        category: Category::Byte1g,
        names: (0..256).map(|i| format!("byte_{i:02X}")).collect(),
        values: counts.iter().map(|&c| c as f64).collect(),
    }
}

/// Shannon entropy in bits of one chunk.
pub fn chunk_entropy(chunk: &[u8]) -> f64 {
    if chunk.is_empty() {
        return 0.0;
    }
    let mut freq = [0u32; 256];
    for &b in chunk {
        freq[b as usize] += 1;
    }
    let n = chunk.len() as f64;
    let h: f64 = freq
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    // -0.0 for a single-symbol chunk
    h.max(0.0)
}

/// Structural entropy over the defined bytes. A trailing partial chunk is
/// kept only when it holds at least two bytes.
pub fn entropy_stream(dump: &HexDump, chunk_size: usize) -> Result<EntropyStream> {
    let defined: Vec<u8> = dump.defined_bytes().collect();
    entropy_stream_from_bytes(&defined, chunk_size)
}

pub fn entropy_stream_from_bytes(bytes: &[u8], chunk_size: usize) -> Result<EntropyStream> {
    if chunk_size < 2 {
        return Err(Error::Validation(format!("chunk size must be >= 2, got {chunk_size}")));
    }
    let values = bytes
        .chunks(chunk_size)
        .filter(|c| c.len() >= 2)
        .map(chunk_entropy)
        .collect();
    Ok(EntropyStream { values, chunk_size })
}

/// Mean, variance, median, max, min and the deciles of the stream.
pub fn entropy_stats(stream: &EntropyStream) -> FeatureBlock {
    entropy_stats_with(stream, &DEFAULT_PERCENTILES)
}

/// Like [`entropy_stats`] with a custom percentile list. An empty stream
/// yields all zeros.
pub fn entropy_stats_with(stream: &EntropyStream, percentiles: &[f64]) -> FeatureBlock {
    let mut names: Vec<String> = ["mean", "variance", "median", "max", "min"]
        .iter()
        .map(|s| format!("ent_{s}"))
        .collect();
    names.extend(percentiles.iter().map(|p| format!("ent_p{p}")));

    let values = if stream.values.is_empty() {
        vec![0.0; names.len()]
    } else {
        let mut sorted = stream.values.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let variance = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let mut v = vec![
            mean,
            variance,
            percentile_sorted(&sorted, 50.0),
            sorted[sorted.len() - 1],
            sorted[0],
        ];
        v.extend(percentiles.iter().map(|&p| percentile_sorted(&sorted, p)));
        v
    };
    FeatureBlock {
        category: Category::ByteEnt,
        names,
        values,
    }
}

/// Linear interpolation between closest ranks over an ascending slice.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
