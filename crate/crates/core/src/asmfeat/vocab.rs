use std::collections::{HashMap, HashSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::feature::Category;

pub const OPCODE_COUNT: usize = 93;
pub const API_COUNT: usize = 794;
pub const MISC_COUNT: usize = 95;
pub const REGISTER_COUNT: usize = 38;

const DEFAULT_OPCODES: &str = include_str!("../../data/opcodes.txt");
const DEFAULT_APIS: &str = include_str!("../../data/apis.txt");
const DEFAULT_MISC: &str = include_str!("../../data/misc_keywords.txt");

/// Ordered, duplicate-free term list; a term's position is its feature index.
#[derive(Debug, Clone, PartialEq)]
pub struct VocabList {
    pub category: Category,
    pub terms: Vec<String>,
}

impl VocabList {
    pub fn new(category: Category, terms: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for t in &terms {
            if !seen.insert(t.as_str()) {
                return Err(Error::Validation(format!("{category} vocabulary repeats {t:?}")));
            }
        }
        Ok(VocabList { category, terms })
    }

    /// Parses the vocabulary file format: one term per line, `#` comments,
    /// and an optional `#category: NAME` header that must match `expected`.
    pub fn parse(text: &str, expected: Category) -> Result<Self> {
        let mut terms = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix("#category:") {
                let cat: Category = rest.parse()?;
                if cat != expected {
                    return Err(Error::parse(
                        "vocabulary",
                        i + 1,
                        format!("file is for {cat}, expected {expected}"),
                    ));
                }
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            terms.push(line.to_string());
        }
        Self::new(expected, terms)
    }

    pub fn load(path: impl AsRef<Path>, expected: Category) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, expected)
    }

    pub fn default_opcodes() -> Self {
        Self::parse(DEFAULT_OPCODES, Category::AsmOpc).expect("bundled opcode list")
    }

    pub fn default_apis() -> Self {
        Self::parse(DEFAULT_APIS, Category::AsmApi).expect("bundled API list")
    }

    pub fn default_misc() -> Self {
        Self::parse(DEFAULT_MISC, Category::AsmMisc).expect("bundled keyword list")
    }

    /// The 8 general-purpose registers in 16/32/64-bit form, the 8 byte
    /// halves, and the 6 segment registers.
    pub fn registers() -> Self {
        let gpr16 = ["ax", "cx", "dx", "bx", "sp", "bp", "si", "di"];
        let mut terms: Vec<String> = gpr16.iter().map(|r| r.to_string()).collect();
        terms.extend(gpr16.iter().map(|r| format!("e{r}")));
        terms.extend(gpr16.iter().map(|r| format!("r{r}")));
        terms.extend(
            [
                "al", "ah", "cl", "ch", "dl", "dh", "bl", "bh", "ss", "cs", "ds", "es", "fs", "gs",
            ]
            .iter()
            .map(|r| r.to_string()),
        );
        Self::new(Category::AsmReg, terms).expect("register names are distinct")
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index(&self) -> HashMap<&str, usize> {
        self.terms.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect()
    }

    pub fn feature_names(&self) -> Vec<String> {
        let prefix = self.category.as_str().to_ascii_lowercase();
        self.terms.iter().map(|t| format!("{prefix}_{t}")).collect()
    }
}
