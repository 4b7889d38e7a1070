//! Assembly-view features: metadata, opcode/register/symbol/API/keyword
//! frequencies, data-define directive ratios, and section layout.

mod datadefine;
mod sections;
mod vocab;

use std::collections::HashMap;

pub use datadefine::{data_define_features, split_operands, DATA_DEFINE_NAMES};
pub use sections::{section_features, SectionStats, KNOWN_SECTIONS, SECTION_FEATURE_NAMES};
pub use vocab::{VocabList, API_COUNT, MISC_COUNT, OPCODE_COUNT, REGISTER_COUNT};

use crate::corpus::AsmListing;
use crate::feature::{Category, FeatureBlock};

pub const SYMBOLS: [char; 7] = ['-', '+', '*', ']', '[', '?', '@'];

/// `[file_size_bytes, line_count]`.
pub fn asm_metadata(listing: &AsmListing) -> FeatureBlock {
    FeatureBlock {
        category: Category::AsmMd,
        names: vec!["asm_file_size".into(), "asm_line_count".into()],
        values: vec![listing.file_size_bytes as f64, listing.line_count as f64],
    }
}

fn block_from_counts(category: Category, vocab: &VocabList, counts: Vec<u64>) -> FeatureBlock {
    FeatureBlock {
        category,
        names: vocab.feature_names(),
        values: counts.into_iter().map(|c| c as f64).collect(),
    }
}

/// Occurrences of each vocabulary opcode among the parsed line opcodes.
pub fn opcode_counts(listing: &AsmListing, vocab: &VocabList) -> FeatureBlock {
    let index = vocab.index();
    let mut counts = vec![0u64; vocab.len()];
    for op in listing.opcodes() {
        if let Some(&i) = index.get(op) {
            counts[i] += 1;
        }
    }
    block_from_counts(Category::AsmOpc, vocab, counts)
}

/// Register mentions. Tokens are lowercased and split on anything that is
/// not alphanumeric, so `[eax+4]` and `ds:` both count.
pub fn register_counts(listing: &AsmListing, vocab: &VocabList) -> FeatureBlock {
    let index = vocab.index();
    let mut counts = vec![0u64; vocab.len()];
    let mut lower = String::new();
    for tok in listing.lines.iter().flat_map(|l| &l.tokens) {
        lower.clear();
        lower.extend(tok.chars().map(|c| c.to_ascii_lowercase()));
        for piece in lower.split(|c: char| !c.is_ascii_alphanumeric()) {
            if let Some(&i) = index.get(piece) {
                counts[i] += 1;
            }
        }
    }
    block_from_counts(Category::AsmReg, vocab, counts)
}

/// Counts of `- + * ] [ ? @` over the raw text.
pub fn symbol_counts(listing: &AsmListing) -> FeatureBlock {
    let mut counts = [0u64; 7];
    for line in &listing.lines {
        for c in line.raw.chars() {
            if let Some(i) = SYMBOLS.iter().position(|&s| s == c) {
                counts[i] += 1;
            }
        }
    }
    FeatureBlock {
        category: Category::AsmSym,
        names: SYMBOLS.iter().map(|c| format!("sym_{c}")).collect(),
        values: counts.iter().map(|&c| c as f64).collect(),
    }
}

/// Splits an operand token into candidate API names: `ds:CreateFileA`,
/// `__imp_CreateFileA`, `[CreateFileA]`, `CreateFileA:dword` all yield
/// `CreateFileA`. Matching is case-sensitive.
fn api_candidates(tok: &str) -> impl Iterator<Item = &str> {
    tok.split([':', '[', ']', ',', '(', ')', '+', ' '])
        .map(|p| {
            p.strip_prefix("__imp_")
                .or_else(|| p.strip_prefix("_imp__"))
                .unwrap_or(p)
        })
        .filter(|p| !p.is_empty())
}

pub fn api_counts(listing: &AsmListing, vocab: &VocabList) -> FeatureBlock {
    let index = vocab.index();
    let mut counts = vec![0u64; vocab.len()];
    for tok in listing.lines.iter().flat_map(|l| &l.tokens) {
        for cand in api_candidates(tok) {
            let hit = index.get(cand).or_else(|| {
                // stdcall decoration: _Name@12
                let bare = cand.strip_prefix('_')?;
                let bare = bare.split_once('@').map_or(bare, |(n, _)| n);
                index.get(bare)
            });
            if let Some(&i) = hit {
                counts[i] += 1;
            }
        }
    }
    block_from_counts(Category::AsmApi, vocab, counts)
}

/// Case-insensitive, non-overlapping substring occurrences of each keyword
/// in the raw line text.
pub fn misc_keyword_counts(listing: &AsmListing, vocab: &VocabList) -> FeatureBlock {
    let keys: Vec<String> = vocab.terms.iter().map(|t| t.to_lowercase()).collect();
    let mut counts = vec![0u64; keys.len()];
    for line in &listing.lines {
        let text = line.raw.to_lowercase();
        for (i, k) in keys.iter().enumerate() {
            if !k.is_empty() {
                counts[i] += text.matches(k.as_str()).count() as u64;
            }
        }
    }
    block_from_counts(Category::AsmMisc, vocab, counts)
}

/// Every hand-crafted assembly block that depends only on the listing and
/// vocabularies, in canonical category order (ASM_PIXEL excluded).
pub struct AsmVocabularies {
    pub opcodes: VocabList,
    pub registers: VocabList,
    pub apis: VocabList,
    pub misc: VocabList,
}

impl Default for AsmVocabularies {
    fn default() -> Self {
        AsmVocabularies {
            opcodes: VocabList::default_opcodes(),
            registers: VocabList::registers(),
            apis: VocabList::default_apis(),
            misc: VocabList::default_misc(),
        }
    }
}

impl AsmVocabularies {
    pub fn opcode_index(&self) -> HashMap<&str, usize> {
        self.opcodes.index()
    }
}
