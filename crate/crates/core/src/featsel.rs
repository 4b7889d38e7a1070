//! Univariate feature scoring with top-K selection, and forward stepwise
//! selection over whole feature categories.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{cross_validate, kfold_plan, FoldPlan};
use crate::feature::Category;
use crate::fusion::FeatureMatrix;
use crate::gbt::GbtParams;
use crate::matrix::DenseMatrix;

pub const DEFAULT_MI_BINS: usize = 32;
/// Score given to a feature whose classes are perfectly separated with
/// zero spread inside every class.
pub const ANOVA_SEPARATION_SENTINEL: f64 = 1e300;
/// A stepwise candidate must lower the CV logloss by more than this,
/// scaled by the incumbent, to count as an improvement. Smaller changes
/// come from summation order when extra columns reshuffle equal splits.
pub const STEPWISE_REL_TOL: f64 = 1e-9;
pub const K_GRID: [usize; 9] = [20, 50, 100, 200, 500, 1000, 1500, 2000, 2500];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMethod {
    Chi2,
    AnovaF,
    MutualInfo,
}

impl std::str::FromStr for ScoreMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "chi2" => Ok(ScoreMethod::Chi2),
            "anova_f" | "anova" | "f" => Ok(ScoreMethod::AnovaF),
            "mutual_info" | "mi" => Ok(ScoreMethod::MutualInfo),
            _ => Err(Error::Validation(format!("unknown score method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KResult {
    pub k: usize,
    pub mean_accuracy: f64,
    pub mean_logloss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub method: ScoreMethod,
    pub names: Vec<String>,
    pub scores: Vec<f64>,
    pub k_grid: Vec<KResult>,
    pub folds: Option<usize>,
}

impl ScoreReport {
    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["index", "feature", "score"])?;
        for (i, (n, s)) in self.names.iter().zip(&self.scores).enumerate() {
            w.write_record([i.to_string(), n.clone(), format!("{s}")])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn check(x: &DenseMatrix, y: &[usize]) -> Result<usize> {
    if x.n_rows != y.len() {
        return Err(Error::Shape(format!("{} rows for {} labels", x.n_rows, y.len())));
    }
    if x.n_rows == 0 {
        return Err(Error::Validation("scoring needs at least one labeled row".into()));
    }
    Ok(y.iter().max().map_or(0, |m| m + 1))
}

/// Per column: shift so the minimum is 0, then compare each class's
/// feature mass with the mass expected from the class prior.
pub fn chi2_scores(x: &DenseMatrix, y: &[usize]) -> Result<Vec<f64>> {
    let c = check(x, y)?;
    let n = x.n_rows as f64;
    let mut counts = vec![0.0; c];
    for &l in y {
        counts[l] += 1.0;
    }
    Ok((0..x.n_cols)
        .map(|j| {
            let col = x.column(j);
            let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let mut obs = vec![0.0; c];
            for (v, &l) in col.iter().zip(y) {
                obs[l] += v - min;
            }
            let total: f64 = obs.iter().sum();
            let mut chi = 0.0;
            for k in 0..c {
                let exp = counts[k] / n * total;
                if exp > 0.0 {
                    chi += (obs[k] - exp) * (obs[k] - exp) / exp;
                }
            }
            chi
        })
        .collect())
}

/// One-way ANOVA F over the classes present.
pub fn anova_f_scores(x: &DenseMatrix, y: &[usize]) -> Result<Vec<f64>> {
    let c = check(x, y)?;
    let mut counts = vec![0usize; c];
    for &l in y {
        counts[l] += 1;
    }
    let present = counts.iter().filter(|&&k| k > 0).count();
    let n = x.n_rows;
    Ok((0..x.n_cols)
        .map(|j| {
            let col = x.column(j);
            if present < 2 || n <= present {
                return 0.0;
            }
            let mean = col.iter().sum::<f64>() / n as f64;
            let mut sums = vec![0.0; c];
            let mut lo = vec![f64::INFINITY; c];
            let mut hi = vec![f64::NEG_INFINITY; c];
            for (&v, &l) in col.iter().zip(y) {
                sums[l] += v;
                lo[l] = lo[l].min(v);
                hi[l] = hi[l].max(v);
            }
            let means: Vec<f64> = (0..c)
                .map(|k| if counts[k] > 0 { sums[k] / counts[k] as f64 } else { 0.0 })
                .collect();
            let ssb: f64 = (0..c).map(|k| counts[k] as f64 * (means[k] - mean).powi(2)).sum();
            let flat_within = (0..c).all(|k| counts[k] == 0 || lo[k] == hi[k]);
            let ssw: f64 = if flat_within {
                0.0
            } else {
                col.iter().zip(y).map(|(&v, &l)| (v - means[l]).powi(2)).sum()
            };
            if ssw == 0.0 {
                return if ssb > 0.0 { ANOVA_SEPARATION_SENTINEL } else { 0.0 };
            }
            let f = (ssb / (present - 1) as f64) / (ssw / (n - present) as f64);
            if f.is_finite() {
                f
            } else {
                ANOVA_SEPARATION_SENTINEL
            }
        })
        .collect())
}

/// Equal-width bin of every value in `col`; `None` for a constant column.
pub fn equal_width_bins(col: &[f64], bins: usize) -> Option<Vec<usize>> {
    let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return None;
    }
    let w = (hi - lo) / bins as f64;
    Some(
        col.iter()
            .map(|&v| (((v - lo) / w).floor() as usize).min(bins - 1))
            .collect(),
    )
}

/// Discrete mutual information (nats) between the binned column and the label.
pub fn mutual_info_scores(x: &DenseMatrix, y: &[usize], bins: usize) -> Result<Vec<f64>> {
    let c = check(x, y)?;
    if bins < 2 {
        return Err(Error::Validation("mutual information needs at least 2 bins".into()));
    }
    let n = x.n_rows as f64;
    let mut py = vec![0.0; c];
    for &l in y {
        py[l] += 1.0;
    }
    Ok((0..x.n_cols)
        .map(|j| {
            let Some(b) = equal_width_bins(&x.column(j), bins) else {
                return 0.0;
            };
            let mut joint = vec![0.0; bins * c];
            let mut pb = vec![0.0; bins];
            for (&bi, &l) in b.iter().zip(y) {
                joint[bi * c + l] += 1.0;
                pb[bi] += 1.0;
            }
            let mut mi = 0.0;
            for bi in 0..bins {
                for l in 0..c {
                    let nj = joint[bi * c + l];
                    if nj > 0.0 {
                        mi += nj / n * (nj * n / (pb[bi] * py[l])).ln();
                    }
                }
            }
            mi.max(0.0)
        })
        .collect())
}

pub fn score(method: ScoreMethod, x: &DenseMatrix, y: &[usize], bins: usize) -> Result<Vec<f64>> {
    match method {
        ScoreMethod::Chi2 => chi2_scores(x, y),
        ScoreMethod::AnovaF => anova_f_scores(x, y),
        ScoreMethod::MutualInfo => mutual_info_scores(x, y, bins),
    }
}

/// Indices of the `k` highest scores in ascending index order; equal
/// scores prefer the lower index.
pub fn select_top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Scores the labeled rows of `m`, then cross-validates the booster on
/// the top-K columns for each K in `grid` not exceeding the column count.
pub fn score_and_evaluate(
    m: &FeatureMatrix,
    method: ScoreMethod,
    grid: &[usize],
    params: &GbtParams,
    plan: &FoldPlan,
    bins: usize,
) -> Result<ScoreReport> {
    let (rows, y) = m.labeled();
    let x = m.values.select_rows(&rows);
    let scores = score(method, &x, &y, bins)?;
    let mut k_grid = Vec::new();
    for &k in grid.iter().filter(|&&k| k <= x.n_cols) {
        let cols = select_top_k(&scores, k);
        let r = cross_validate(&x.select_cols(&cols), &y, m.num_classes, params, plan)?;
        log::info!(
            "{method:?} K={k}: accuracy {:.4} logloss {:.4}",
            r.mean_accuracy,
            r.mean_logloss
        );
        k_grid.push(KResult {
            k,
            mean_accuracy: r.mean_accuracy,
            mean_logloss: r.mean_logloss,
        });
    }
    Ok(ScoreReport {
        method,
        names: m.registry.names(),
        scores,
        k_grid,
        folds: (!grid.is_empty()).then_some(plan.k),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepwiseStep {
    pub added: Category,
    pub num_features: usize,
    pub cv_logloss: f64,
    /// Every candidate tried at this step; `None` marks a failed fit.
    pub candidates: Vec<(Category, Option<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepwiseTrace {
    pub steps: Vec<StepwiseStep>,
    pub stop_reason: String,
    pub folds: usize,
    pub seed: u64,
}

impl StepwiseTrace {
    pub fn selected(&self) -> Vec<Category> {
        self.steps.iter().map(|s| s.added).collect()
    }
}

/// True when `v` beats `incumbent` by more than the relative tolerance.
/// An infinite incumbent (nothing chosen yet) is beaten by any finite value.
fn improves(v: f64, incumbent: f64) -> bool {
    if incumbent.is_infinite() {
        return v.is_finite();
    }
    v < incumbent - STEPWISE_REL_TOL * incumbent.abs().max(1.0)
}

/// Greedy category addition scored by mean CV logloss. Stops when no
/// candidate improves on the incumbent by more than [`STEPWISE_REL_TOL`]; ties go to the smaller
/// category, then to canonical order.
pub fn forward_stepwise(
    m: &FeatureMatrix,
    categories: &[Category],
    cv_folds: usize,
    params: &GbtParams,
    seed: u64,
) -> Result<StepwiseTrace> {
    if categories.is_empty() {
        return Err(Error::Validation(
            "stepwise selection needs at least one category".into(),
        ));
    }
    let (rows, y) = m.labeled();
    let sub = m.select_rows(&rows);
    let plan = match kfold_plan(&y, cv_folds, true, seed) {
        Ok(p) => p,
        Err(e) => {
            log::warn!("{e}; falling back to unstratified folds");
            kfold_plan(&y, cv_folds, false, seed)?
        }
    };
    let mut pool: Vec<Category> = categories.to_vec();
    pool.sort_by_key(|c| c.position());
    pool.dedup();
    let mut chosen: Vec<Category> = Vec::new();
    let mut incumbent = f64::INFINITY;
    let mut steps = Vec::new();
    let stop_reason = loop {
        let remaining: Vec<Category> = pool.iter().copied().filter(|c| !chosen.contains(c)).collect();
        if remaining.is_empty() {
            break "all categories added".to_string();
        }
        let results: Vec<(Category, usize, Option<f64>)> = remaining
            .par_iter()
            .map(|&cand| {
                let mut set = chosen.clone();
                set.push(cand);
                let size = sub.registry.span(cand).map_or(0, |r| r.len());
                let ll = sub
                    .select_categories(&set)
                    .and_then(|s| cross_validate(&s.values, &y, m.num_classes, params, &plan))
                    .map(|r| r.mean_logloss);
                match ll {
                    Ok(v) => (cand, size, Some(v)),
                    Err(e) => {
                        log::warn!("stepwise candidate {cand} skipped: {e}");
                        (cand, size, None)
                    }
                }
            })
            .collect();
        let best = results
            .iter()
            .filter_map(|&(c, n, ll)| ll.map(|v| (c, n, v)))
            .min_by(|a, b| {
                a.2.total_cmp(&b.2)
                    .then(a.1.cmp(&b.1))
                    .then(a.0.position().cmp(&b.0.position()))
            });
        let candidates = results.iter().map(|&(c, _, ll)| (c, ll)).collect();
        match best {
            None => break "every candidate failed".to_string(),
            Some((c, _, v)) if improves(v, incumbent) => {
                chosen.push(c);
                incumbent = v;
                let mut set = chosen.clone();
                set.sort_by_key(|c| c.position());
                steps.push(StepwiseStep {
                    added: c,
                    num_features: set.iter().map(|c| sub.registry.span(*c).map_or(0, |r| r.len())).sum(),
                    cv_logloss: v,
                    candidates,
                });
                log::info!("stepwise: added {c}, cv logloss {v:.6}");
            }
            Some((c, _, v)) => {
                break format!("best candidate {c} reached {v:.6}, not below {incumbent:.6}");
            }
        }
    };
    Ok(StepwiseTrace {
        steps,
        stop_reason,
        folds: plan.k,
        seed,
    })
}
