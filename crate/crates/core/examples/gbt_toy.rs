//! Gradient boosting on a three-class axis-aligned task: per-round
//! training loss, the learned split thresholds, and feature importance.
//!
//! cargo run --example gbt_toy

use malfam::gbt::{self, feature_importance, GbtParams, ImportanceKind, Node};
use malfam::synth::axis_aligned_toy;

fn main() -> malfam::Result<()> {
    let (x, y) = axis_aligned_toy(5);
    let params = GbtParams {
        num_rounds: 20,
        ..GbtParams::baseline()
    };
    let model = gbt::train(&x, &y, 3, &params, None)?;
    for (r, ll) in model.train_logloss.iter().enumerate().step_by(4) {
        println!("round {:>2} train logloss {ll:.5}", r + 1);
    }
    let pred = model.predict(&x);
    println!("training accuracy {}", malfam::eval::accuracy(&pred, &y)?);

    println!("first-round root splits:");
    for (c, t) in model.rounds[0].iter().enumerate() {
        if let Node::Split {
            feature,
            threshold,
            gain,
            ..
        } = &t.nodes[0]
        {
            println!("  class {c}: x{feature} < {threshold:.3} (gain {gain:.2})");
        }
    }
    let names = vec!["x".to_string(), "y".to_string()];
    for k in [ImportanceKind::Weight, ImportanceKind::Gain] {
        let ranked = feature_importance(&model, k, &names);
        let line: Vec<String> = ranked.iter().map(|r| format!("{}={:.2}", r.name, r.score)).collect();
        println!("{k:?}: {}", line.join(" "));
    }
    Ok(())
}
