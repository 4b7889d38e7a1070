//! Hand-crafted features from the hex view of one sample: metadata,
//! byte unigrams, and the structural entropy summary.
//!
//! cargo run --example hex_features -- crates/core/fixtures/corpus/fx000.bytes

use malfam::corpus::parse_hex;
use malfam::hexfeat::{byte_metadata, byte_unigrams, entropy_stats, entropy_stream};

fn main() -> malfam::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/corpus/fx000.bytes").into());
    let dump = parse_hex(&path)?;

    let md = byte_metadata(&dump);
    for (n, v) in md.names.iter().zip(&md.values) {
        println!("{n:<24} {v}");
    }

    let ug = byte_unigrams(&dump);
    let mut top: Vec<(usize, f64)> = ug.values.iter().copied().enumerate().collect();
    top.sort_by(|a, b| b.1.total_cmp(&a.1));
    println!("\nmost frequent bytes:");
    for (b, c) in top.iter().take(8) {
        println!("  0x{b:02x} {c}");
    }

    let stream = entropy_stream(&dump, 256)?;
    println!(
        "\n{} entropy windows of {} bytes",
        stream.values.len(),
        stream.chunk_size
    );
    let stats = entropy_stats(&stream);
    for (n, v) in stats.names.iter().zip(&stats.values).take(12) {
        println!("  {n:<20} {v:.4}");
    }
    println!("  ... {} statistics in all", stats.values.len());
    Ok(())
}
