//! Stratified k-fold cross-validation of the booster, with per-fold
//! metrics and a uniform predictor as the reference point.
//!
//! cargo run --release --example cross_validation

use malfam::eval::{cross_validate, cross_validate_with, kfold_plan};
use malfam::gbt::GbtParams;
use malfam::synth::stepwise_matrix;

fn main() -> malfam::Result<()> {
    let m = stepwise_matrix(120, 4, 3)?;
    let (_, y) = m.labeled();
    let plan = kfold_plan(&y, 10, true, 0)?;
    let params = GbtParams {
        num_rounds: 40,
        ..GbtParams::baseline()
    };
    let r = cross_validate(&m.values, &y, m.num_classes, &params, &plan)?;
    for f in &r.folds {
        println!(
            "fold {:>2}: {:>3} train {:>2} test  accuracy {:.3}  logloss {:.4}",
            f.fold, f.n_train, f.n_test, f.accuracy, f.logloss
        );
    }
    println!(
        "mean accuracy {:.4}, mean logloss {:.4}",
        r.mean_accuracy, r.mean_logloss
    );

    let c = m.num_classes;
    let uniform = cross_validate_with(&y, &plan, serde_json::json!({"model": "uniform"}), |_, _, test| {
        Ok(vec![vec![1.0 / c as f64; c]; test.len()])
    })?;
    println!(
        "uniform predictor logloss {:.6} (ln {c} = {:.6})",
        uniform.mean_logloss,
        (c as f64).ln()
    );
    Ok(())
}
