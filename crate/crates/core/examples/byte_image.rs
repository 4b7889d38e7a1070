//! Renders a sample's bytes as a grayscale image, writes it as PGM, and
//! prints its Haralick and LBP texture descriptors.
//!
//! cargo run --example byte_image -- crates/core/fixtures/corpus/fx010.bytes out.pgm

use malfam::corpus::parse_hex;
use malfam::imaging::{bytes_to_image, haralick_features_with, lbp_features, HaralickConfig, WidthPolicy};

fn main() -> malfam::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/corpus/fx010.bytes").into());
    let dump = parse_hex(&path)?;
    let bytes = dump.bytes_zero_filled();
    let img = bytes_to_image(&bytes, WidthPolicy::SizeBuckets)?;
    println!("{} bytes -> {}x{} image", bytes.len(), img.width, img.height);
    if let Some(out) = args.next() {
        img.write_pgm(&out)?;
        println!("wrote {out}");
    }

    let h = haralick_features_with(
        &img,
        HaralickConfig {
            levels: 32,
            symmetric: true,
        },
    );
    for (n, v) in h.names.iter().zip(&h.values) {
        println!("  {n:<28} {v:.5}");
    }
    let lbp = lbp_features(&img);
    let uniform = lbp.values.iter().filter(|v| **v > 0.0).count();
    println!(
        "LBP: {uniform} of 256 codes occur; flat code 255 holds {:.3}",
        lbp.values[255]
    );
    Ok(())
}
