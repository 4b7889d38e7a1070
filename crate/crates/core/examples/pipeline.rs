//! The full pipeline through the library: extract, train one CNN, then
//! evaluate, fit and score a preset. Works in a scratch copy of the
//! fixture corpus.
//!
//! cargo run --release --example pipeline

use std::path::Path;

use malfam::deepfeat::Arch;
use malfam::pipeline::{cmd_evaluate, cmd_extract, cmd_predict, cmd_train_cnn, cmd_train_gbt, load_config};

fn copy_dir(from: &Path, to: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(to)?;
    for e in std::fs::read_dir(from)? {
        let e = e?;
        std::fs::copy(e.path(), to.join(e.file_name()))?;
    }
    Ok(())
}

fn main() -> malfam::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let work = tempfile::tempdir().map_err(|e| malfam::Error::Validation(e.to_string()))?;
    copy_dir(&fixtures.join("corpus"), &work.path().join("corpus"))
        .map_err(|e| malfam::Error::Validation(e.to_string()))?;
    let config = work.path().join("pipeline.toml");
    std::fs::copy(fixtures.join("pipeline.toml"), &config).map_err(|e| malfam::Error::Validation(e.to_string()))?;

    let cfg = load_config(&config, &["eval.folds=3".to_string()])?;
    println!("config hash {}", cfg.hash);
    let (summary, _) = cmd_extract(&cfg)?;
    println!("extracted {} samples", summary.rows);
    cmd_train_cnn(&cfg, Arch::OpcodeNgram)?;

    for preset in ["hex-hand", "asm-hand", "asm-hand-deep"] {
        let (r, _) = cmd_evaluate(&cfg, preset)?;
        println!(
            "{preset:<14} accuracy {:.3} logloss {:.4}",
            r.mean_accuracy, r.mean_logloss
        );
    }
    let model = cmd_train_gbt(&cfg, "asm-hand-deep")?;
    let out = work.path().join("submission.csv");
    let n = cmd_predict(&cfg, &model, &out, false)?;
    println!("{n} unlabeled samples scored:");
    print!(
        "{}",
        std::fs::read_to_string(&out).map_err(|e| malfam::Error::Validation(e.to_string()))?
    );
    Ok(())
}
