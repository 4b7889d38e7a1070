//! Writes the 30-sample synthetic corpus (hex dumps, IDA listings,
//! manifest) used by the fixture pipeline config.
//!
//! cargo run --example fixture_corpus -- crates/core/fixtures/corpus

use malfam::synth::{write_fixture_corpus, FixtureSpec};

fn main() -> malfam::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "fixture-corpus".into());
    let ids = write_fixture_corpus(&dir, &FixtureSpec::default())?;
    println!("{} samples in {dir}", ids.len());
    Ok(())
}
