use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::schedule::{PlateauScheduler, ScheduleAction};
use super::step::{predict, train_step, Optimizers, StepSettings};
use super::{TrainConfig, TrainError};
use crate::data::{DesignMatrices, Sex};
use crate::losses::LossBreakdown;
use crate::networks::{init_params, AgeScale, Architecture, ModelBundle};
use crate::SeededRng;

/// Stream ids that separate independent uses of one seed.
pub(crate) const STREAM_TRAIN: u64 = 1;
pub(crate) const STREAM_SPLIT: u64 = 2;
pub(crate) const STREAM_FOLDS: u64 = 3;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> SeededRng {
    let mut rng = SeededRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
    /// A step produced a non-finite loss or gradient; best parameters restored.
    NonFinite,
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Learning rate used during this epoch.
    pub lr: f64,
    /// Batch-mean training losses.
    pub train: LossBreakdown,
    pub val_mae: f64,
    pub disc_accuracy: Option<f64>,
    pub degenerate_ratio_batches: usize,
    pub action: ScheduleAction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_mae: Option<f64>,
    pub stop_reason: StopReason,
    pub failure: Option<String>,
}

impl TrainHistory {
    pub fn lr_trace(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.lr).collect()
    }

    /// Newline-delimited JSON, one record per epoch.
    pub fn write_ndjson(&self, mut w: impl Write) -> std::io::Result<()> {
        for e in &self.epochs {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_ndjson(&self) -> String {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }
}

/// Index → fold map from a seeded permutation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    /// Held-out indices of `fold`, ascending.
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == fold)
            .collect()
    }

    /// Indices of every other fold, ascending.
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] != fold)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.fold_of {
            s[f] += 1;
        }
        s
    }
}

pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldAssignment, TrainError> {
    if k < 2 || k > n {
        return Err(TrainError::Config(format!(
            "need 2 ≤ k ≤ n, got k = {k}, n = {n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream_rng(seed, STREAM_FOLDS));
    let mut fold_of = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    Ok(FoldAssignment { k, fold_of })
}

/// Train/validation split holding out `fraction` of each sex. Both index lists ascend.
pub fn stratified_split(
    sex: &[Sex],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), TrainError> {
    if !(0.0..1.0).contains(&fraction) || fraction == 0.0 {
        return Err(TrainError::Config(format!(
            "validation fraction must be in (0, 1), got {fraction}"
        )));
    }
    let mut rng = stream_rng(seed, STREAM_SPLIT);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for s in [Sex::Female, Sex::Male] {
        let mut group: Vec<usize> = (0..sex.len()).filter(|&i| sex[i] == s).collect();
        group.shuffle(&mut rng);
        let mut take = (fraction * group.len() as f64).round() as usize;
        if group.len() >= 2 {
            take = take.clamp(1, group.len() - 1);
        } else {
            take = 0;
        }
        val.extend_from_slice(&group[..take]);
        train.extend_from_slice(&group[take..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    if train.is_empty() || val.is_empty() {
        return Err(TrainError::Config(
            "too few records for a train/validation split".into(),
        ));
    }
    Ok((train, val))
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> f64 {
    y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64
}

/// Trained parameters (best validation epoch) and the per-epoch log.
#[derive(Clone, Debug, PartialEq)]
pub struct FitOutcome {
    pub bundle: ModelBundle,
    pub history: TrainHistory,
}

fn age_scale(age: &[f64]) -> AgeScale {
    let n = age.len() as f64;
    let mean = age.iter().sum::<f64>() / n;
    let var = age.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    AgeScale {
        mean,
        std: if var > 0.0 { var.sqrt() } else { 1.0 },
    }
}

/// Initial bundle for `train`: fresh parameters and the training-age output map.
pub fn initial_bundle(
    arch: &Architecture,
    train: &DesignMatrices,
    config: &TrainConfig,
) -> Result<ModelBundle, TrainError> {
    let mut bundle = init_params(arch, config.variant, config.seed)?;
    bundle.age_scale = age_scale(train.age.data());
    Ok(bundle)
}

/// Trains on `train`, scoring each epoch by validation MAE on `val`.
pub fn fit_matrices(
    train: &DesignMatrices,
    val: &DesignMatrices,
    arch: &Architecture,
    config: &TrainConfig,
) -> Result<FitOutcome, TrainError> {
    let y_val = val.age.data().to_vec();
    fit_with_validator(train, arch, config, |_, bundle| {
        Ok(mae(&y_val, &predict(bundle, val)?))
    })
}

/// Training loop with a caller-supplied validation score (lower is better).
pub fn fit_with_validator(
    train: &DesignMatrices,
    arch: &Architecture,
    config: &TrainConfig,
    mut validator: impl FnMut(usize, &ModelBundle) -> Result<f64, TrainError>,
) -> Result<FitOutcome, TrainError> {
    config.validate()?;
    let n = train.len();
    if n == 0 {
        return Err(TrainError::Config("training set is empty".into()));
    }
    if config.batch_size > n {
        return Err(TrainError::Config(format!(
            "batch size {} exceeds {n} training records",
            config.batch_size
        )));
    }
    let mut bundle = initial_bundle(arch, train, config)?;
    let mut opt = Optimizers::new(&bundle);
    let mut rng = stream_rng(config.seed, STREAM_TRAIN);
    let mut sched = PlateauScheduler::new(
        config.lr,
        config.lr_factor,
        config.lr_patience,
        config.early_stop_patience,
    );
    let mut best = bundle.clone();
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;
    let mut failure = None;

    let mut order: Vec<usize> = (0..n).collect();
    'epochs: for epoch in 0..config.max_epochs {
        let lr = sched.lr();
        let settings = StepSettings {
            lr,
            weight_decay: config.weight_decay,
            dropout: config.dropout,
            weights: config.weights,
            self_recon: config.self_recon,
        };
        order.shuffle(&mut rng);
        let mut sum = LossBreakdown::default();
        let mut acc_sum = 0.0;
        let mut acc_n = 0usize;
        let mut degenerate = 0usize;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch = train.select(chunk);
            let out = match train_step(&mut bundle, &batch, &settings, &mut opt, &mut rng) {
                Ok(o) => o,
                Err(e @ (TrainError::NonFiniteGradient { .. } | TrainError::NonFiniteLoss(_))) => {
                    stop_reason = StopReason::NonFinite;
                    failure = Some(format!("epoch {epoch}, batch {batches}: {e}"));
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            let b = out.breakdown;
            sum.adv += b.adv;
            sum.var += b.var;
            sum.rec += b.rec;
            sum.reg += b.reg;
            sum.ratio += b.ratio;
            sum.sex += b.sex;
            sum.total += b.total;
            sum.disc_loss += b.disc_loss;
            if let Some(a) = out.disc_accuracy {
                acc_sum += a;
                acc_n += 1;
            }
            degenerate += usize::from(out.degenerate_ratio);
            batches += 1;
        }
        let k = batches as f64;
        let train_mean = LossBreakdown {
            adv: sum.adv / k,
            var: sum.var / k,
            rec: sum.rec / k,
            reg: sum.reg / k,
            ratio: sum.ratio / k,
            sex: sum.sex / k,
            total: sum.total / k,
            disc_loss: sum.disc_loss / k,
        };
        let val_mae = validator(epoch, &bundle)?;
        let action = sched.observe(epoch, val_mae);
        if action == ScheduleAction::Improved {
            best = bundle.clone();
        }
        epochs.push(EpochRecord {
            epoch,
            lr,
            train: train_mean,
            val_mae,
            disc_accuracy: (acc_n > 0).then(|| acc_sum / acc_n as f64),
            degenerate_ratio_batches: degenerate,
            action,
        });
        if action == ScheduleAction::Stop {
            stop_reason = StopReason::EarlyStop;
            break;
        }
    }
    let (best_epoch, best_val_mae) = match sched.best() {
        Some((e, s)) => (Some(e), Some(s)),
        None => (None, None),
    };
    let bundle = if best_epoch.is_some() { best } else { bundle };
    Ok(FitOutcome {
        bundle,
        history: TrainHistory {
            epochs,
            best_epoch,
            best_val_mae,
            stop_reason,
            failure,
        },
    })
}
