//! Univariate scores and forward stepwise selection on a matrix with one
//! informative category and two noise categories.
//!
//! cargo run --release --example feature_selection

use malfam::eval::kfold_plan;
use malfam::featsel::{forward_stepwise, score_and_evaluate, ScoreMethod};
use malfam::gbt::GbtParams;
use malfam::synth::stepwise_matrix;

fn main() -> malfam::Result<()> {
    let m = stepwise_matrix(90, 3, 8)?;
    let params = GbtParams {
        num_rounds: 30,
        ..GbtParams::baseline()
    };
    let (_, y) = m.labeled();
    let plan = kfold_plan(&y, 5, true, 8)?;
    let names = m.registry.names();
    for method in [ScoreMethod::Chi2, ScoreMethod::AnovaF, ScoreMethod::MutualInfo] {
        let r = score_and_evaluate(&m, method, &[1, 5, 29], &params, &plan, 32)?;
        let best = r
            .scores
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let sweep: Vec<String> = r
            .k_grid
            .iter()
            .map(|k| format!("K={} ll={:.4}", k.k, k.mean_logloss))
            .collect();
        println!("{method:?}: top column {}; {}", names[best], sweep.join(", "));
    }

    let trace = forward_stepwise(&m, &m.registry.categories(), 5, &params, 8)?;
    for s in &trace.steps {
        println!(
            "+{} ({} features) cv logloss {:.5}",
            s.added, s.num_features, s.cv_logloss
        );
        for (c, ll) in &s.candidates {
            println!(
                "    tried {c:<14} {}",
                ll.map_or("failed".into(), |v| format!("{v:.5}"))
            );
        }
    }
    println!("stopped: {}", trace.stop_reason);
    Ok(())
}
