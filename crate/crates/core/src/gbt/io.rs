use std::path::Path;

use super::importance::FeatureImportance;
use super::tree::{Node, Tree};
use super::{GbtParams, TreeEnsemble};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

pub const GBT_MAGIC: &[u8; 8] = b"MFGBTMDL";
const VERSION: u32 = 1;

fn write_params(w: &mut Writer, p: &GbtParams) {
    w.f64(p.eta);
    w.usize(p.max_depth);
    w.f64(p.gamma);
    w.f64(p.min_child_weight);
    w.f64(p.colsample_bytree);
    w.f64(p.subsample);
    w.usize(p.num_rounds);
    w.f64(p.l2_lambda);
    w.u64(p.seed);
    w.u64(p.early_stopping_rounds.map_or(u64::MAX, |v| v as u64));
}

fn read_params(r: &mut Reader<'_>) -> Result<GbtParams> {
    Ok(GbtParams {
        eta: r.f64()?,
        max_depth: r.usize()?,
        gamma: r.f64()?,
        min_child_weight: r.f64()?,
        colsample_bytree: r.f64()?,
        subsample: r.f64()?,
        num_rounds: r.usize()?,
        l2_lambda: r.f64()?,
        seed: r.u64()?,
        early_stopping_rounds: match r.u64()? {
            u64::MAX => None,
            v => Some(v as usize),
        },
    })
}

pub fn model_bytes(m: &TreeEnsemble, provenance: Option<&str>) -> Vec<u8> {
    let mut w = Writer::new(GBT_MAGIC, VERSION);
    w.opt_str(provenance);
    write_params(&mut w, &m.params);
    w.usize(m.num_features);
    w.usize(m.num_classes);
    w.f64(m.base_score);
    w.usize(m.rounds.len());
    for trees in &m.rounds {
        for t in trees {
            w.usize(t.nodes.len());
            for n in &t.nodes {
                match n {
                    Node::Leaf { weight } => {
                        w.u8(0);
                        w.f64(*weight);
                    }
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                        gain,
                        cover,
                    } => {
                        w.u8(1);
                        w.usize(*feature);
                        w.f64(*threshold);
                        w.usize(*left);
                        w.usize(*right);
                        w.f64(*gain);
                        w.f64(*cover);
                    }
                }
            }
        }
    }
    w.usize(m.importance.len());
    for fi in &m.importance {
        w.usize(fi.feature);
        w.u64(fi.weight);
        w.f64(fi.total_gain);
    }
    w.f64s(&m.train_logloss);
    w.f64s(&m.eval_logloss);
    w.finish()
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<(TreeEnsemble, Option<String>)> {
    let mut r = Reader::open(bytes, GBT_MAGIC, &[VERSION])?;
    let provenance = r.opt_str()?;
    let params = read_params(&mut r)?;
    let num_features = r.usize()?;
    let num_classes = r.usize()?;
    let base_score = r.f64()?;
    let n_rounds = r.len(1)?;
    let mut rounds = Vec::with_capacity(n_rounds);
    for _ in 0..n_rounds {
        let mut trees = Vec::with_capacity(num_classes);
        for _ in 0..num_classes {
            let n = r.len(9)?;
            let mut nodes = Vec::with_capacity(n);
            for _ in 0..n {
                nodes.push(match r.u8()? {
                    0 => Node::Leaf { weight: r.f64()? },
                    1 => Node::Split {
                        feature: r.usize()?,
                        threshold: r.f64()?,
                        left: r.usize()?,
                        right: r.usize()?,
                        gain: r.f64()?,
                        cover: r.f64()?,
                    },
                    t => return Err(Error::Format(format!("unknown tree node tag {t}"))),
                });
            }
            for node in &nodes {
                if let Node::Split {
                    feature, left, right, ..
                } = node
                {
                    if *left >= n || *right >= n || *feature >= num_features {
                        return Err(Error::Format("tree node index out of range".into()));
                    }
                }
            }
            trees.push(Tree { nodes });
        }
        rounds.push(trees);
    }
    let n_imp = r.len(24)?;
    let mut importance = Vec::with_capacity(n_imp);
    for _ in 0..n_imp {
        importance.push(FeatureImportance {
            feature: r.usize()?,
            weight: r.u64()?,
            total_gain: r.f64()?,
        });
    }
    let train_logloss = r.f64s()?;
    let eval_logloss = r.f64s()?;
    r.expect_end()?;
    Ok((
        TreeEnsemble {
            params,
            num_features,
            num_classes,
            base_score,
            rounds,
            importance,
            train_logloss,
            eval_logloss,
        },
        provenance,
    ))
}

pub fn save_model(m: &TreeEnsemble, path: impl AsRef<Path>, provenance: Option<&str>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_bytes(m, provenance)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(TreeEnsemble, Option<String>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}
