//! Feature categories and the per-sample block they produce.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named group of related features, the unit of fusion and of stepwise
/// selection. Declaration order is the canonical layout order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "BYTE_MD")]
    ByteMd,
    #[serde(rename = "BYTE_1G")]
    Byte1g,
    #[serde(rename = "BYTE_ENT")]
    ByteEnt,
    #[serde(rename = "BYTE_HARALICK")]
    ByteHaralick,
    #[serde(rename = "BYTE_LBP")]
    ByteLbp,
    #[serde(rename = "BYTE_IMG_CNN")]
    ByteImgCnn,
    #[serde(rename = "BYTE_ENT_CNN")]
    ByteEntCnn,
    #[serde(rename = "BYTE_NGRAMS_CNN")]
    ByteNgramsCnn,
    #[serde(rename = "ASM_MD")]
    AsmMd,
    #[serde(rename = "ASM_OPC")]
    AsmOpc,
    #[serde(rename = "ASM_PIXEL")]
    AsmPixel,
    #[serde(rename = "ASM_REG")]
    AsmReg,
    #[serde(rename = "ASM_SYM")]
    AsmSym,
    #[serde(rename = "ASM_API")]
    AsmApi,
    #[serde(rename = "ASM_DD")]
    AsmDd,
    #[serde(rename = "ASM_SEC")]
    AsmSec,
    #[serde(rename = "ASM_MISC")]
    AsmMisc,
    #[serde(rename = "ASM_NGRAMS_CNN")]
    AsmNgramsCnn,
}

impl Category {
    pub const ALL: [Category; 18] = [
        Category::ByteMd,
        Category::Byte1g,
        Category::ByteEnt,
        Category::ByteHaralick,
        Category::ByteLbp,
        Category::ByteImgCnn,
        Category::ByteEntCnn,
        Category::ByteNgramsCnn,
        Category::AsmMd,
        Category::AsmOpc,
        Category::AsmPixel,
        Category::AsmReg,
        Category::AsmSym,
        Category::AsmApi,
        Category::AsmDd,
        Category::AsmSec,
        Category::AsmMisc,
        Category::AsmNgramsCnn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::ByteMd => "BYTE_MD",
            Category::Byte1g => "BYTE_1G",
            Category::ByteEnt => "BYTE_ENT",
            Category::ByteHaralick => "BYTE_HARALICK",
            Category::ByteLbp => "BYTE_LBP",
            Category::ByteImgCnn => "BYTE_IMG_CNN",
            Category::ByteEntCnn => "BYTE_ENT_CNN",
            Category::ByteNgramsCnn => "BYTE_NGRAMS_CNN",
            Category::AsmMd => "ASM_MD",
            Category::AsmOpc => "ASM_OPC",
            Category::AsmPixel => "ASM_PIXEL",
            Category::AsmReg => "ASM_REG",
            Category::AsmSym => "ASM_SYM",
            Category::AsmApi => "ASM_API",
            Category::AsmDd => "ASM_DD",
            Category::AsmSec => "ASM_SEC",
            Category::AsmMisc => "ASM_MISC",
            Category::AsmNgramsCnn => "ASM_NGRAMS_CNN",
        }
    }

    /// Learned by one of the CNN extractors rather than computed directly.
    pub fn is_deep(self) -> bool {
        matches!(
            self,
            Category::ByteImgCnn | Category::ByteEntCnn | Category::ByteNgramsCnn | Category::AsmNgramsCnn
        )
    }

    pub fn is_hex(self) -> bool {
        self.as_str().starts_with("BYTE_")
    }

    pub fn position(self) -> usize {
        Category::ALL.iter().position(|&c| c == self).unwrap()
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim().to_ascii_uppercase();
        Category::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == wanted)
            .ok_or_else(|| Error::Validation(format!("unknown feature category {s:?}")))
    }
}

/// One category's values for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    pub category: Category,
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl FeatureBlock {
    /// Builds a block, checking name uniqueness, lengths, and finiteness.
    pub fn new(category: Category, names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if names.len() != values.len() {
            return Err(Error::Shape(format!(
                "{category}: {} names but {} values",
                names.len(),
                values.len()
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(names.len());
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::Validation(format!("{category}: duplicate feature name {n:?}")));
            }
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "{category}: non-finite value in feature {:?}",
                names[i]
            )));
        }
        Ok(FeatureBlock {
            category,
            names,
            values,
        })
    }

    /// Block whose names are `prefix0..prefixN`.
    pub fn indexed(category: Category, prefix: &str, values: Vec<f64>) -> Result<Self> {
        let names = (0..values.len()).map(|i| format!("{prefix}{i}")).collect();
        Self::new(category, names, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
