use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::TreeEnsemble;
use crate::feature::Category;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: usize,
    /// Number of splits on the feature.
    pub weight: u64,
    /// Summed split gain.
    pub total_gain: f64,
}

impl FeatureImportance {
    pub fn average_gain(&self) -> f64 {
        if self.weight == 0 {
            0.0
        } else {
            self.total_gain / self.weight as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceKind {
    Weight,
    /// Average gain per split.
    Gain,
    TotalGain,
}

impl std::str::FromStr for ImportanceKind {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s {
            "weight" => Ok(ImportanceKind::Weight),
            "gain" => Ok(ImportanceKind::Gain),
            "total_gain" | "total-gain" => Ok(ImportanceKind::TotalGain),
            _ => Err(crate::error::Error::Validation(format!(
                "unknown importance kind {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedImportance {
    pub name: String,
    pub weight: u64,
    pub total_gain: f64,
    pub score: f64,
}

/// One entry per feature that was split on at least once, by feature index.
pub(crate) fn compute(model: &TreeEnsemble) -> Vec<FeatureImportance> {
    let mut acc: BTreeMap<usize, (u64, f64)> = BTreeMap::new();
    for t in model.rounds.iter().flatten() {
        for (f, gain) in t.splits() {
            let e = acc.entry(f).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += gain;
        }
    }
    acc.into_iter()
        .map(|(feature, (weight, total_gain))| FeatureImportance {
            feature,
            weight,
            total_gain,
        })
        .collect()
}

fn score(kind: ImportanceKind, weight: u64, total_gain: f64) -> f64 {
    match kind {
        ImportanceKind::Weight => weight as f64,
        ImportanceKind::TotalGain => total_gain,
        ImportanceKind::Gain => {
            if weight == 0 {
                0.0
            } else {
                total_gain / weight as f64
            }
        }
    }
}

fn rank(mut v: Vec<RankedImportance>) -> Vec<RankedImportance> {
    v.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.name.cmp(&b.name)));
    v
}

/// Used features ranked by score; unused features are omitted.
pub fn feature_importance(model: &TreeEnsemble, kind: ImportanceKind, names: &[String]) -> Vec<RankedImportance> {
    rank(
        model
            .importance
            .iter()
            .map(|fi| RankedImportance {
                name: names
                    .get(fi.feature)
                    .cloned()
                    .unwrap_or_else(|| format!("f{}", fi.feature)),
                weight: fi.weight,
                total_gain: fi.total_gain,
                score: score(kind, fi.weight, fi.total_gain),
            })
            .collect(),
    )
}

/// Aggregates over each feature's category: split counts and gains are
/// summed, and `Gain` is the average over all of the category's splits.
pub fn category_importance(
    model: &TreeEnsemble,
    kind: ImportanceKind,
    categories: &[Category],
) -> Vec<RankedImportance> {
    let mut acc: BTreeMap<Category, (u64, f64)> = BTreeMap::new();
    for fi in &model.importance {
        if let Some(&c) = categories.get(fi.feature) {
            let e = acc.entry(c).or_insert((0, 0.0));
            e.0 += fi.weight;
            e.1 += fi.total_gain;
        }
    }
    rank(
        acc.into_iter()
            .map(|(c, (w, g))| RankedImportance {
                name: c.as_str().to_string(),
                weight: w,
                total_gain: g,
                score: score(kind, w, g),
            })
            .collect(),
    )
}
