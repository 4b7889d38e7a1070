use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{forward, TrainedCnn};
use super::{prepare, CnnInput, CnnSpec, Prepared};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::eval::FoldPlan;
use crate::tensor::{Adam, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainParams {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Share of the training samples held out for early stopping; no
    /// hold-out is taken from fewer than 10 samples.
    pub val_fraction: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            lr: 1e-3,
            batch_size: 32,
            max_epochs: 30,
            val_fraction: 0.1,
            patience: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs_run: usize,
    /// Epoch whose weights were kept (1-based; 0 when untrained).
    pub best_epoch: usize,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Fold index this model was trained without, if any.
    pub held_out_fold: Option<usize>,
}

impl TrainMeta {
    pub fn untrained(seed: u64) -> Self {
        TrainMeta {
            seed,
            epochs_run: 0,
            best_epoch: 0,
            train_loss: Vec::new(),
            val_loss: Vec::new(),
            held_out_fold: None,
        }
    }

    pub(crate) fn write_to(&self, w: &mut Writer) {
        w.u64(self.seed);
        w.usize(self.epochs_run);
        w.usize(self.best_epoch);
        w.f64s(&self.train_loss);
        w.f64s(&self.val_loss);
        w.u64(self.held_out_fold.map_or(u64::MAX, |f| f as u64));
    }

    pub(crate) fn read_from(r: &mut Reader<'_>) -> Result<Self> {
        Ok(TrainMeta {
            seed: r.u64()?,
            epochs_run: r.usize()?,
            best_epoch: r.usize()?,
            train_loss: r.f64s()?,
            val_loss: r.f64s()?,
            held_out_fold: match r.u64()? {
                u64::MAX => None,
                f => Some(f as usize),
            },
        })
    }
}

fn mean_loss(model: &TrainedCnn, data: &[(Prepared, usize)], idx: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for &i in idx {
        let (_, p) = model.run(&data[i].0)?;
        total += crate::tensor::cross_entropy(&p, data[i].1);
    }
    Ok(total / idx.len() as f64)
}

pub(crate) fn train_prepared(spec: CnnSpec, data: &[(Prepared, usize)], hp: &TrainParams) -> Result<TrainedCnn> {
    if data.is_empty() {
        return Err(Error::Validation("cannot train on an empty dataset".into()));
    }
    if let Some((_, l)) = data.iter().find(|(_, l)| *l >= spec.num_classes) {
        return Err(Error::Validation(format!(
            "label {l} with {} classes",
            spec.num_classes
        )));
    }
    if hp.batch_size == 0 || !(hp.lr > 0.0) {
        return Err(Error::Config("batch_size and lr must be positive".into()));
    }
    let mut model = TrainedCnn::initialize(spec, hp.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_val = if data.len() >= 10 {
        ((data.len() as f64 * hp.val_fraction).round() as usize).min(data.len() - 1)
    } else {
        0
    };
    let (val, train) = order.split_at(n_val);
    let val = val.to_vec();
    let mut train = train.to_vec();

    let mut opt = Adam::new(&model.params, hp.lr);
    let mut grads = model.params.zero_grads();
    let mut best: Option<(f64, crate::tensor::ParamStore, usize)> = None;
    let mut since_best = 0;

    for epoch in 1..=hp.max_epochs {
        train.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in train.chunks(hp.batch_size) {
            grads.clear();
            for &i in batch {
                let (input, label) = &data[i];
                let mut tape = Tape::new(&model.params);
                let (_, logits) = forward(&mut tape, &model.layout, input)?;
                let loss = tape.softmax_cross_entropy(logits, *label)?;
                let l = tape.value(loss).data[0];
                if !l.is_finite() {
                    return Err(Error::Training(format!(
                        "non-finite loss at epoch {epoch}; the learning rate {} is likely too high",
                        hp.lr
                    )));
                }
                epoch_loss += l;
                tape.backward(loss, &mut grads)?;
            }
            grads.scale(1.0 / batch.len() as f64);
            opt.step(&mut model.params, &grads);
        }
        let train_loss = epoch_loss / train.len() as f64;
        model.meta.train_loss.push(train_loss);
        model.meta.epochs_run = epoch;
        log::debug!("{} epoch {epoch}: train loss {train_loss:.5}", spec.arch);

        if !val.is_empty() {
            let vl = mean_loss(&model, data, &val)?;
            model.meta.val_loss.push(vl);
            if best.as_ref().is_none_or(|(b, _, _)| vl < *b) {
                best = Some((vl, model.params.clone(), epoch));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= hp.patience {
                    break;
                }
            }
        }
    }
    match best {
        Some((_, params, epoch)) => {
            model.params = params;
            model.meta.best_epoch = epoch;
        }
        None => model.meta.best_epoch = model.meta.epochs_run,
    }
    model.params.round_to_f32();
    Ok(model)
}

/// Minimizes softmax cross-entropy with Adam, mini-batches, and early
/// stopping on a held-out share. The kept weights are rounded to f32 so a
/// saved model reproduces them exactly.
pub fn train_cnn(spec: CnnSpec, data: &[(CnnInput, usize)], hp: &TrainParams) -> Result<TrainedCnn> {
    let prepared = data
        .iter()
        .map(|(x, y)| Ok((prepare(&spec, x)?, *y)))
        .collect::<Result<Vec<_>>>()?;
    train_prepared(spec, &prepared, hp)
}

#[derive(Debug, Clone)]
pub struct OofResult {
    /// One feature row per labeled sample, from the model that did not
    /// see it.
    pub labeled_features: Vec<Vec<f64>>,
    /// Feature rows for unlabeled samples, from the full model.
    pub unlabeled_features: Vec<Vec<f64>>,
    pub fold_models: Vec<TrainedCnn>,
    pub full_model: TrainedCnn,
}

/// Trains one model per fold of `plan` and a final model on all labeled
/// samples.
pub fn out_of_fold_deep_features(
    spec: CnnSpec,
    labeled: &[(CnnInput, usize)],
    unlabeled: &[CnnInput],
    plan: &FoldPlan,
    hp: &TrainParams,
) -> Result<OofResult> {
    if plan.k < 2 {
        return Err(Error::Validation(
            "out-of-fold extraction needs at least 2 folds".into(),
        ));
    }
    if plan.assignments.len() != labeled.len() {
        return Err(Error::Shape(format!(
            "fold plan covers {} samples, {} labeled given",
            plan.assignments.len(),
            labeled.len()
        )));
    }
    let data = labeled
        .iter()
        .map(|(x, y)| Ok((prepare(&spec, x)?, *y)))
        .collect::<Result<Vec<_>>>()?;
    let mut labeled_features = vec![Vec::new(); data.len()];
    let mut fold_models = Vec::with_capacity(plan.k);
    for f in 0..plan.k {
        let train: Vec<(Prepared, usize)> = plan.train_indices(f).into_iter().map(|i| data[i].clone()).collect();
        let fold_hp = TrainParams {
            seed: hp.seed.wrapping_add(f as u64 + 1),
            ..hp.clone()
        };
        let mut m = train_prepared(spec, &train, &fold_hp)?;
        m.meta.held_out_fold = Some(f);
        for i in plan.test_indices(f) {
            labeled_features[i] = m.run(&data[i].0)?.0;
        }
        log::info!("{} fold {f}: {} epochs", spec.arch, m.meta.epochs_run);
        fold_models.push(m);
    }
    let full_model = train_prepared(spec, &data, hp)?;
    let unlabeled_features = unlabeled
        .iter()
        .map(|x| full_model.features(x))
        .collect::<Result<Vec<_>>>()?;
    Ok(OofResult {
        labeled_features,
        unlabeled_features,
        fold_models,
        full_model,
    })
}
