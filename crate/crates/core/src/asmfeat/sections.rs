use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::{AsmListing, UNKNOWN_SECTION};
use crate::feature::{Category, FeatureBlock};

pub const KNOWN_SECTIONS: [&str; 9] = [
    ".bss", ".data", ".edata", ".idata", ".rdata", ".rsrc", ".text", ".tls", ".reloc",
];

pub const SECTION_FEATURE_NAMES: [&str; 6] = [
    "Num_Section",
    "Unknown_Sections",
    "Known_Sections_lines",
    "Unknown_Sections_lines",
    "Known_Sections_por",
    "Unknown_Sections_por",
];

/// Per-section line counts, ignoring lines with no section prefix.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SectionStats {
    pub lines: BTreeMap<String, usize>,
}

impl SectionStats {
    pub fn from_listing(listing: &AsmListing) -> Self {
        let mut lines = BTreeMap::new();
        for l in listing.lines.iter().filter(|l| l.section != UNKNOWN_SECTION) {
            *lines.entry(l.section.clone()).or_insert(0) += 1;
        }
        SectionStats { lines }
    }

    pub fn unknown_names(&self) -> BTreeSet<&str> {
        self.lines
            .keys()
            .map(String::as_str)
            .filter(|s| !KNOWN_SECTIONS.contains(s))
            .collect()
    }
}

pub fn section_features(listing: &AsmListing) -> FeatureBlock {
    let stats = SectionStats::from_listing(listing);
    let total = listing.line_count;
    let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };

    let known: Vec<usize> = KNOWN_SECTIONS
        .iter()
        .map(|s| stats.lines.get(*s).copied().unwrap_or(0))
        .collect();
    let mut names: Vec<String> = KNOWN_SECTIONS.iter().map(|s| s.to_string()).collect();
    names.extend(KNOWN_SECTIONS.iter().map(|s| format!("{s}_por")));
    names.extend(SECTION_FEATURE_NAMES.iter().map(|s| s.to_string()));

    let mut values: Vec<f64> = known.iter().map(|&c| c as f64).collect();
    values.extend(known.iter().map(|&c| ratio(c, total)));

    let num_sections = stats.lines.len();
    let unknown = stats.unknown_names();
    let unknown_lines: usize = unknown.iter().map(|s| stats.lines[*s]).sum();
    let known_lines: usize = known.iter().sum();
    values.extend([
        num_sections as f64,
        unknown.len() as f64,
        known_lines as f64,
        unknown_lines as f64,
        ratio(num_sections - unknown.len(), num_sections),
        ratio(unknown.len(), num_sections),
    ]);
    FeatureBlock {
        category: Category::AsmSec,
        names: names.into_iter().map(|n| format!("asm_sec_{n}")).collect(),
        values,
    }
}
