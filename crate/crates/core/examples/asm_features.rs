//! Every hand-crafted category from the assembly view of one sample.
//!
//! cargo run --example asm_features -- crates/core/fixtures/corpus/fx000.asm

use malfam::asmfeat::{
    api_counts, asm_metadata, data_define_features, misc_keyword_counts, opcode_counts, register_counts,
    section_features, symbol_counts, AsmVocabularies,
};
use malfam::corpus::parse_asm;
use malfam::feature::FeatureBlock;
use malfam::imaging::{asm_pixels, DEFAULT_ASM_PIXELS};

fn show(b: &FeatureBlock) {
    let mut nz: Vec<(&String, f64)> = b
        .names
        .iter()
        .zip(b.values.iter().copied())
        .filter(|(_, v)| *v != 0.0)
        .collect();
    nz.sort_by(|a, b| b.1.total_cmp(&a.1));
    let head: Vec<String> = nz.iter().take(4).map(|(n, v)| format!("{n}={v}")).collect();
    println!(
        "{:<10} {:>4} columns, {:>4} nonzero  {}",
        b.category,
        b.values.len(),
        nz.len(),
        head.join(" ")
    );
}

fn main() -> malfam::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/corpus/fx000.asm").into());
    let raw = std::fs::read(&path).map_err(|e| malfam::Error::Validation(format!("{path}: {e}")))?;
    let listing = parse_asm(&path)?;
    let vocab = AsmVocabularies::default();

    show(&asm_metadata(&listing));
    show(&opcode_counts(&listing, &vocab.opcodes));
    show(&asm_pixels(&raw, DEFAULT_ASM_PIXELS));
    show(&register_counts(&listing, &vocab.registers));
    show(&symbol_counts(&listing));
    show(&api_counts(&listing, &vocab.apis));
    show(&data_define_features(&listing));
    show(&section_features(&listing));
    show(&misc_keyword_counts(&listing, &vocab.misc));
    Ok(())
}
