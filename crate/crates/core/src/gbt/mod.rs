//! Multiclass gradient-boosted regression trees with a softmax objective,
//! exact greedy split search, and split-count / gain importances.

mod importance;
mod io;
mod tree;

pub use importance::{category_importance, feature_importance, FeatureImportance, ImportanceKind, RankedImportance};
pub use io::{load_model, save_model, GBT_MAGIC};
pub use tree::{Node, Tree};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::multiclass_logloss;
use crate::matrix::DenseMatrix;
use crate::tensor::softmax;

pub const HESSIAN_FLOOR: f64 = 1e-16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbtParams {
    pub eta: f64,
    pub max_depth: usize,
    pub gamma: f64,
    pub min_child_weight: f64,
    pub colsample_bytree: f64,
    pub subsample: f64,
    pub num_rounds: usize,
    pub l2_lambda: f64,
    pub seed: u64,
    /// Stop when the eval-set logloss has not improved for this many
    /// rounds. Ignored without an eval set.
    pub early_stopping_rounds: Option<usize>,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self::baseline()
    }
}

impl GbtParams {
    /// Starting values of the tuning grid.
    pub fn baseline() -> Self {
        GbtParams {
            eta: 0.2,
            max_depth: 5,
            gamma: 0.0,
            min_child_weight: 1.0,
            colsample_bytree: 1.0,
            subsample: 1.0,
            num_rounds: 500,
            l2_lambda: 1.0,
            seed: 0,
            early_stopping_rounds: Some(50),
        }
    }

    /// Tuned values: smaller step, shallower trees.
    pub fn best() -> Self {
        GbtParams {
            eta: 0.1,
            max_depth: 3,
            ..Self::baseline()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("gbt: {m}")));
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad("eta must be a finite value ≥ 0");
        }
        if self.max_depth < 1 {
            return bad("max_depth must be ≥ 1");
        }
        if !(self.gamma >= 0.0) {
            return bad("gamma must be ≥ 0");
        }
        if !(self.min_child_weight >= 0.0) {
            return bad("min_child_weight must be ≥ 0");
        }
        if !(self.colsample_bytree > 0.0 && self.colsample_bytree <= 1.0) {
            return bad("colsample_bytree must lie in (0, 1]");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must lie in (0, 1]");
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return bad("l2_lambda must be a finite value ≥ 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble {
    pub params: GbtParams,
    pub num_features: usize,
    pub num_classes: usize,
    pub base_score: f64,
    /// `rounds[r][c]` is the tree for class `c` in round `r`.
    pub rounds: Vec<Vec<Tree>>,
    pub importance: Vec<FeatureImportance>,
    pub train_logloss: Vec<f64>,
    pub eval_logloss: Vec<f64>,
}

impl TreeEnsemble {
    pub fn margins(&self, row: &[f64]) -> Vec<f64> {
        let mut m = vec![self.base_score; self.num_classes];
        for trees in &self.rounds {
            for (c, t) in trees.iter().enumerate() {
                m[c] += self.params.eta * t.leaf_value(row);
            }
        }
        m
    }

    pub fn predict_proba(&self, x: &DenseMatrix) -> Vec<Vec<f64>> {
        (0..x.n_rows).map(|i| softmax(&self.margins(x.row(i)))).collect()
    }

    pub fn predict(&self, x: &DenseMatrix) -> Vec<usize> {
        self.predict_proba(x).iter().map(|p| crate::eval::argmax(p)).collect()
    }

    pub fn num_trees(&self) -> usize {
        self.rounds.iter().map(Vec::len).sum()
    }
}

fn check_inputs(x: &DenseMatrix, y: &[usize], num_classes: usize) -> Result<()> {
    if x.n_rows == 0 || x.n_cols == 0 {
        return Err(Error::Validation("cannot train on an empty matrix".into()));
    }
    if y.len() != x.n_rows {
        return Err(Error::Shape(format!("{} labels for {} rows", y.len(), x.n_rows)));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= num_classes) {
        return Err(Error::Validation(format!("label {bad} with {num_classes} classes")));
    }
    if x.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("feature matrix contains non-finite values".into()));
    }
    Ok(())
}

/// Newton boosting: each round fits one tree per class to the gradient
/// `p - y` and hessian `p(1 - p)` of the softmax loss at the current margins.
pub fn train(
    x: &DenseMatrix,
    y: &[usize],
    num_classes: usize,
    params: &GbtParams,
    eval_set: Option<(&DenseMatrix, &[usize])>,
) -> Result<TreeEnsemble> {
    params.validate()?;
    check_inputs(x, y, num_classes)?;
    let first = y[0];
    if y.iter().all(|&c| c == first) {
        return Err(Error::Validation("training data holds a single class".into()));
    }
    if let Some((ex, ey)) = eval_set {
        check_inputs(ex, ey, num_classes)?;
        if ex.n_cols != x.n_cols {
            return Err(Error::Shape("eval set has a different column count".into()));
        }
    }

    let n = x.n_rows;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let sorted = tree::presort(x);
    let mut margins = vec![vec![0.0; num_classes]; n];
    let mut eval_margins = eval_set.map(|(ex, _)| vec![vec![0.0; num_classes]; ex.n_rows]);
    let mut rounds = Vec::new();
    let mut train_logloss = Vec::new();
    let mut eval_logloss = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    let ncols_tree = ((params.colsample_bytree * x.n_cols as f64).ceil() as usize).clamp(1, x.n_cols);

    for round in 0..params.num_rounds {
        let probs: Vec<Vec<f64>> = margins.iter().map(|m| softmax(m)).collect();
        let mut trees = Vec::with_capacity(num_classes);
        for c in 0..num_classes {
            let mut g = vec![0.0; n];
            let mut h = vec![0.0; n];
            for i in 0..n {
                let p = probs[i][c];
                g[i] = p - if y[i] == c { 1.0 } else { 0.0 };
                h[i] = (p * (1.0 - p)).max(HESSIAN_FLOOR);
            }
            let rows: Vec<bool> = if params.subsample < 1.0 {
                (0..n).map(|_| rng.gen::<f64>() < params.subsample).collect()
            } else {
                vec![true; n]
            };
            let mut cols: Vec<usize> = if ncols_tree < x.n_cols {
                sample(&mut rng, x.n_cols, ncols_tree).into_vec()
            } else {
                (0..x.n_cols).collect()
            };
            cols.sort_unstable();
            trees.push(tree::build(x, &sorted, &g, &h, &rows, &cols, params));
        }
        for (i, m) in margins.iter_mut().enumerate() {
            for (c, t) in trees.iter().enumerate() {
                m[c] += params.eta * t.leaf_value(x.row(i));
            }
        }
        let p: Vec<Vec<f64>> = margins.iter().map(|m| softmax(m)).collect();
        train_logloss.push(multiclass_logloss(&p, y)?);

        if let (Some((ex, ey)), Some(em)) = (eval_set, eval_margins.as_mut()) {
            for (i, m) in em.iter_mut().enumerate() {
                for (c, t) in trees.iter().enumerate() {
                    m[c] += params.eta * t.leaf_value(ex.row(i));
                }
            }
            let p: Vec<Vec<f64>> = em.iter().map(|m| softmax(m)).collect();
            let ll = multiclass_logloss(&p, ey)?;
            eval_logloss.push(ll);
            rounds.push(trees);
            if best.is_none_or(|(_, b)| ll < b) {
                best = Some((round, ll));
            }
            if let (Some(patience), Some((b, _))) = (params.early_stopping_rounds, best) {
                if round - b >= patience {
                    log::debug!("early stop at round {round}, best {b}");
                    break;
                }
            }
        } else {
            rounds.push(trees);
        }
    }
    if let (Some((b, _)), true) = (best, params.early_stopping_rounds.is_some()) {
        rounds.truncate(b + 1);
        train_logloss.truncate(b + 1);
    }
    let mut model = TreeEnsemble {
        params: params.clone(),
        num_features: x.n_cols,
        num_classes,
        base_score: 0.0,
        rounds,
        importance: Vec::new(),
        train_logloss,
        eval_logloss,
    };
    model.importance = importance::compute(&model);
    Ok(model)
}
