//! Fold plans, accuracy and logloss, the cross-validation harness, and the
//! competition submission format.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::PROB_CLIP;

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Validation("accuracy of an empty set".into()));
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / pred.len() as f64)
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean of `-ln(clip(p[i][y_i]))` with probabilities clipped to
/// `[1e-15, 1 - 1e-15]`.
pub fn multiclass_logloss(probs: &[Vec<f64>], truth: &[usize]) -> Result<f64> {
    if probs.len() != truth.len() {
        return Err(Error::Shape(format!("{} rows for {} labels", probs.len(), truth.len())));
    }
    if probs.is_empty() {
        return Err(Error::Validation("logloss of an empty set".into()));
    }
    let mut losses = Vec::with_capacity(probs.len());
    for (i, (row, &y)) in probs.iter().zip(truth).enumerate() {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::Validation(format!("row {i} sums to {s}")));
        }
        if y >= row.len() {
            return Err(Error::Validation(format!("label {y} with {} classes", row.len())));
        }
        losses.push(-row[y].clamp(PROB_CLIP, 1.0 - PROB_CLIP).ln());
    }
    Ok(running_mean(&losses))
}

/// Incremental mean; exact when every term is equal.
pub fn running_mean(xs: &[f64]) -> f64 {
    xs.iter()
        .enumerate()
        .fold(0.0, |m, (i, &x)| m + (x - m) / (i + 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub stratified: bool,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }
}

/// Stratified plans shuffle each class separately and deal its members
/// round-robin, continuing the rotation across classes so fold sizes stay
/// within one of each other.
pub fn kfold_plan(labels: &[usize], k: usize, stratified: bool, seed: u64) -> Result<FoldPlan> {
    let n = labels.len();
    if k < 2 {
        return Err(Error::Validation(format!("k-fold needs k ≥ 2, got {k}")));
    }
    if k > n {
        return Err(Error::Validation(format!("k = {k} exceeds {n} samples")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0; n];
    if stratified {
        let classes: BTreeSet<usize> = labels.iter().copied().collect();
        let mut next = 0;
        for c in classes {
            let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
            if members.len() < k {
                return Err(Error::Validation(format!(
                    "class {c} has {} samples, fewer than k = {k}; use unstratified folds",
                    members.len()
                )));
            }
            members.shuffle(&mut rng);
            for i in members {
                assignments[i] = next % k;
                next += 1;
            }
        }
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for (pos, i) in order.into_iter().enumerate() {
            assignments[i] = pos % k;
        }
    }
    Ok(FoldPlan {
        k,
        assignments,
        stratified,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: f64,
    pub logloss: f64,
    /// Classes present in the test fold but absent from training.
    pub classes_missing_from_train: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub folds: Vec<FoldMetrics>,
    pub mean_accuracy: f64,
    pub mean_logloss: f64,
    pub k: usize,
    pub stratified: bool,
    pub seed: u64,
    /// Free-form echo of what was evaluated (params, categories, config hash).
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Runs `fit_predict(train_idx, test_idx)` for every fold; it must return
/// one probability row per test index.
pub fn cross_validate_with<F>(
    labels: &[usize],
    plan: &FoldPlan,
    config: serde_json::Value,
    mut fit_predict: F,
) -> Result<EvalReport>
where
    F: FnMut(usize, &[usize], &[usize]) -> Result<Vec<Vec<f64>>>,
{
    if plan.assignments.len() != labels.len() {
        return Err(Error::Shape(format!(
            "fold plan covers {} samples, data has {}",
            plan.assignments.len(),
            labels.len()
        )));
    }
    let mut folds = Vec::with_capacity(plan.k);
    for f in 0..plan.k {
        let train = plan.train_indices(f);
        let test = plan.test_indices(f);
        let train_classes: BTreeSet<usize> = train.iter().map(|&i| labels[i]).collect();
        let missing: BTreeSet<usize> = test
            .iter()
            .map(|&i| labels[i])
            .filter(|c| !train_classes.contains(c))
            .collect();
        if !missing.is_empty() {
            log::warn!("fold {f}: classes {missing:?} absent from training");
        }
        let probs = fit_predict(f, &train, &test)?;
        let truth: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
        let pred: Vec<usize> = probs.iter().map(|r| argmax(r)).collect();
        folds.push(FoldMetrics {
            fold: f,
            n_train: train.len(),
            n_test: test.len(),
            accuracy: accuracy(&pred, &truth)?,
            logloss: multiclass_logloss(&probs, &truth)?,
            classes_missing_from_train: missing.into_iter().collect(),
        });
    }
    let acc: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
    let ll: Vec<f64> = folds.iter().map(|f| f.logloss).collect();
    Ok(EvalReport {
        mean_accuracy: running_mean(&acc),
        mean_logloss: running_mean(&ll),
        folds,
        k: plan.k,
        stratified: plan.stratified,
        seed: plan.seed,
        config,
    })
}

/// Gradient-boosted trees evaluated on each fold of `plan`.
pub fn cross_validate(
    x: &crate::matrix::DenseMatrix,
    labels: &[usize],
    num_classes: usize,
    params: &crate::gbt::GbtParams,
    plan: &FoldPlan,
) -> Result<EvalReport> {
    let config = serde_json::json!({ "gbt": params, "num_features": x.n_cols });
    cross_validate_with(labels, plan, config, |_, train, test| {
        let xt = x.select_rows(train);
        let yt: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        let model = crate::gbt::train(&xt, &yt, num_classes, params, None)?;
        Ok(model.predict_proba(&x.select_rows(test)))
    })
}

/// `Id,Prediction1..PredictionC`.
pub fn write_submission(path: impl AsRef<Path>, ids: &[String], probs: &[Vec<f64>]) -> Result<()> {
    let path = path.as_ref();
    if ids.len() != probs.len() {
        return Err(Error::Shape(format!("{} ids for {} rows", ids.len(), probs.len())));
    }
    let c = probs.first().map_or(crate::corpus::DEFAULT_NUM_CLASSES, Vec::len);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["Id".to_string()];
    header.extend((1..=c).map(|j| format!("Prediction{j}")));
    w.write_record(&header)?;
    for (id, row) in ids.iter().zip(probs) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|p| format!("{p}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
