//! The four CNN feature extractors. Each network is trained as a
//! classifier; its last hidden layer is exported as a feature block.

mod model;
mod train;

pub use model::{load_cnn, save_cnn, TrainedCnn, CNN_MAGIC};
pub use train::{out_of_fold_deep_features, train_cnn, OofResult, TrainMeta, TrainParams};

use serde::{Deserialize, Serialize};

use crate::asmfeat::VocabList;
use crate::corpus::{AsmListing, HexDump};
use crate::error::{Error, Result};
use crate::feature::Category;
use crate::imaging::{resize_lanczos, GrayImage};
use crate::tensor::Tensor;

pub const DEFAULT_IMAGE_SIDE: usize = 255;
pub const DEFAULT_ENTROPY_LEN: usize = 1024;
pub const DEFAULT_BYTE_CAP: usize = 1 << 16;
pub const DEFAULT_OPCODE_CAP: usize = 1 << 14;
pub const EMBED_DIM: usize = 4;
pub const NGRAM_WIDTHS: [usize; 3] = [3, 5, 7];
pub const NGRAM_FILTERS: usize = 100;
pub const IMAGE_CONVS: [(usize, usize); 3] = [(5, 50), (3, 50), (3, 70)];
pub const ENTROPY_CONVS: [usize; 3] = [50, 70, 70];
pub const IMAGE_HIDDEN: usize = 256;
pub const ENTROPY_HIDDEN: [usize; 2] = [1000, 300];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    GrayImage,
    EntropyStream,
    ByteNgram,
    OpcodeNgram,
}

impl Arch {
    pub const ALL: [Arch; 4] = [Arch::GrayImage, Arch::EntropyStream, Arch::ByteNgram, Arch::OpcodeNgram];

    pub fn as_str(self) -> &'static str {
        match self {
            Arch::GrayImage => "gray-image",
            Arch::EntropyStream => "entropy-stream",
            Arch::ByteNgram => "byte-ngram",
            Arch::OpcodeNgram => "opcode-ngram",
        }
    }

    pub fn category(self) -> Category {
        match self {
            Arch::GrayImage => Category::ByteImgCnn,
            Arch::EntropyStream => Category::ByteEntCnn,
            Arch::ByteNgram => Category::ByteNgramsCnn,
            Arch::OpcodeNgram => Category::AsmNgramsCnn,
        }
    }

    pub fn feature_dim(self) -> usize {
        match self {
            Arch::GrayImage => IMAGE_HIDDEN,
            Arch::EntropyStream => ENTROPY_HIDDEN[1],
            Arch::ByteNgram | Arch::OpcodeNgram => NGRAM_WIDTHS.len() * NGRAM_FILTERS,
        }
    }

    pub fn feature_names(self) -> Vec<String> {
        let prefix = self.category().as_str().to_ascii_lowercase();
        (0..self.feature_dim()).map(|i| format!("{prefix}_{i}")).collect()
    }

    pub fn is_ngram(self) -> bool {
        matches!(self, Arch::ByteNgram | Arch::OpcodeNgram)
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Arch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.to_ascii_lowercase().replace('_', "-");
        match t.as_str() {
            "gray-image" | "grayscale" | "image" | "byte-img-cnn" => Ok(Arch::GrayImage),
            "entropy-stream" | "entropy" | "byte-ent-cnn" => Ok(Arch::EntropyStream),
            "byte-ngram" | "byte-ngrams-cnn" => Ok(Arch::ByteNgram),
            "opcode-ngram" | "asm-ngrams-cnn" => Ok(Arch::OpcodeNgram),
            _ => Err(Error::Validation(format!(
                "unknown architecture {s:?} (expected gray-image, entropy-stream, byte-ngram or opcode-ngram)"
            ))),
        }
    }
}

/// Architecture plus the input-dependent sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnSpec {
    pub arch: Arch,
    pub num_classes: usize,
    /// Image side, entropy stream length, or token cap.
    pub input_len: usize,
    /// Token ids `0..vocab_size`; the pad id is `vocab_size`. Zero for
    /// the dense-input architectures.
    pub vocab_size: usize,
}

fn pooled(n: usize, k: usize) -> usize {
    if n < k {
        0
    } else {
        (n - k).div_ceil(2)
    }
}

pub fn build_grayscale_cnn(num_classes: usize, side: usize) -> Result<CnnSpec> {
    let spec = CnnSpec {
        arch: Arch::GrayImage,
        num_classes,
        input_len: side,
        vocab_size: 0,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn build_entropy_cnn(num_classes: usize, len: usize) -> Result<CnnSpec> {
    let spec = CnnSpec {
        arch: Arch::EntropyStream,
        num_classes,
        input_len: len,
        vocab_size: 0,
    };
    spec.validate()?;
    Ok(spec)
}

/// `vocab_size` counts real token ids: 256 for bytes, opcode vocabulary
/// plus one unknown id for opcodes.
pub fn build_ngram_cnn(arch: Arch, vocab_size: usize, num_classes: usize, cap: usize) -> Result<CnnSpec> {
    if !arch.is_ngram() {
        return Err(Error::Validation(format!("{arch} is not an n-gram architecture")));
    }
    let spec = CnnSpec {
        arch,
        num_classes,
        input_len: cap,
        vocab_size,
    };
    spec.validate()?;
    Ok(spec)
}

impl CnnSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Validation("a classifier needs at least 2 classes".into()));
        }
        let trace = self.shape_trace();
        if trace.iter().any(|(_, s)| s.contains(&0)) {
            return Err(Error::Shape(format!(
                "{} input length {} is too small for the network",
                self.arch, self.input_len
            )));
        }
        if self.arch.is_ngram() && self.vocab_size == 0 {
            return Err(Error::Validation("n-gram network needs a vocabulary".into()));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        self.arch.feature_dim()
    }

    pub fn pad_id(&self) -> usize {
        self.vocab_size
    }

    /// Layer output shapes for a full-length input.
    pub fn shape_trace(&self) -> Vec<(String, Vec<usize>)> {
        let mut t = Vec::new();
        match self.arch {
            Arch::GrayImage => {
                let mut s = self.input_len;
                t.push(("input".into(), vec![s, s, 1]));
                for (i, &(k, f)) in IMAGE_CONVS.iter().enumerate() {
                    let c = s.saturating_sub(k - 1);
                    t.push((format!("conv{}", i + 1), vec![c, c, f]));
                    s = pooled(s, k);
                    t.push((format!("pool{}", i + 1), vec![s, s, f]));
                }
                t.push(("dense".into(), vec![IMAGE_HIDDEN]));
            }
            Arch::EntropyStream => {
                let mut n = self.input_len;
                t.push(("input".into(), vec![n, 1]));
                for (i, &f) in ENTROPY_CONVS.iter().enumerate() {
                    t.push((format!("conv{}", i + 1), vec![n.saturating_sub(2), f]));
                    n = pooled(n, 3);
                    t.push((format!("pool{}", i + 1), vec![n, f]));
                }
                t.push(("dense1".into(), vec![ENTROPY_HIDDEN[0]]));
                t.push(("dense2".into(), vec![ENTROPY_HIDDEN[1]]));
            }
            Arch::ByteNgram | Arch::OpcodeNgram => {
                t.push(("embed".into(), vec![self.input_len, EMBED_DIM]));
                t.push(("concat".into(), vec![NGRAM_WIDTHS.len() * NGRAM_FILTERS]));
            }
        }
        t.push(("output".into(), vec![self.num_classes]));
        t
    }

    /// Flattened size entering the first dense layer.
    pub(crate) fn flat_dim(&self) -> usize {
        let trace = self.shape_trace();
        let last_pool = trace.iter().rev().find(|(n, _)| n.starts_with("pool"));
        last_pool.map_or(0, |(_, s)| s.iter().product())
    }
}

/// Raw model input before preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub enum CnnInput {
    Image(GrayImage),
    Stream(Vec<f64>),
    Tokens(Vec<usize>),
}

/// Network-ready input.
#[derive(Debug, Clone, PartialEq)]
pub enum Prepared {
    Dense(Tensor),
    /// Padded ids and the count of real (unpadded) tokens.
    Tokens {
        ids: Vec<usize>,
        real: usize,
    },
}

/// Images are resized to the network side and scaled to [0, 1]; entropy
/// streams are scaled by 1/8 and right-padded with zeros or truncated to
/// the fixed length; token sequences are truncated to the cap and padded
/// up to the widest filter.
pub fn prepare(spec: &CnnSpec, input: &CnnInput) -> Result<Prepared> {
    match (spec.arch, input) {
        (Arch::GrayImage, CnnInput::Image(img)) => {
            let side = spec.input_len;
            let img = if img.width == side && img.height == side {
                img.clone()
            } else {
                resize_lanczos(img, side)?
            };
            let data = img.pixels.iter().map(|&p| p as f64 / 255.0).collect();
            Ok(Prepared::Dense(Tensor::new(vec![side, side, 1], data)?))
        }
        (Arch::EntropyStream, CnnInput::Stream(values)) => {
            let n = spec.input_len;
            let mut data: Vec<f64> = values.iter().take(n).map(|v| v / 8.0).collect();
            data.resize(n, 0.0);
            Ok(Prepared::Dense(Tensor::new(vec![n, 1], data)?))
        }
        (a, CnnInput::Tokens(ids)) if a.is_ngram() => {
            if let Some(bad) = ids.iter().find(|&&t| t >= spec.vocab_size) {
                return Err(Error::Validation(format!(
                    "token {bad} outside vocabulary of {}",
                    spec.vocab_size
                )));
            }
            let mut ids: Vec<usize> = ids.iter().take(spec.input_len).copied().collect();
            let real = ids.len();
            let widest = *NGRAM_WIDTHS.iter().max().expect("widths");
            if ids.len() < widest {
                ids.resize(widest, spec.pad_id());
            }
            Ok(Prepared::Tokens { ids, real })
        }
        (a, other) => Err(Error::Validation(format!(
            "{a} network cannot take {} input",
            match other {
                CnnInput::Image(_) => "image",
                CnnInput::Stream(_) => "stream",
                CnnInput::Tokens(_) => "token",
            }
        ))),
    }
}

/// Defined bytes as ids 0..=255, truncated to `cap`.
pub fn byte_tokens(dump: &HexDump, cap: usize) -> Vec<usize> {
    dump.defined_bytes().take(cap).map(usize::from).collect()
}

/// Opcode ids by vocabulary position; opcodes outside the vocabulary map
/// to `vocab.len()`.
pub fn opcode_tokens(listing: &AsmListing, vocab: &VocabList, cap: usize) -> Vec<usize> {
    let index = vocab.index();
    listing
        .opcodes()
        .take(cap)
        .map(|op| index.get(op).copied().unwrap_or(vocab.len()))
        .collect()
}
