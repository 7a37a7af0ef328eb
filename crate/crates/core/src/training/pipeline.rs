use super::fit::{fit_matrices, stratified_split, TrainHistory};
use super::step::predict;
use super::{TrainConfig, TrainError};
use crate::data::{
    select_features, DataError, Dataset, DesignMatrices, FeatureMask, StandardizationStats,
};
use crate::networks::{Checkpoint, Mode};

/// A dataset reduced to the configured mode, selected and standardized with
/// statistics fitted on `fit_on` only.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub mask: FeatureMask,
    pub stats: StandardizationStats,
}

impl Prepared {
    pub fn apply(&self, raw: &Dataset) -> Result<DesignMatrices, TrainError> {
        let multimodal = self.mask.m2.is_some();
        if multimodal && !raw.is_multimodal() {
            return Err(TrainError::MissingModality);
        }
        let selected = self.mask.apply(raw)?;
        Ok(self.stats.apply(&selected)?.matrices()?)
    }
}

fn in_mode(raw: &Dataset, mode: Mode) -> Result<Dataset, TrainError> {
    match mode {
        Mode::Unimodal => Ok(raw.to_unimodal()),
        Mode::Multimodal if raw.is_multimodal() => Ok(raw.clone()),
        Mode::Multimodal => Err(TrainError::MissingModality),
    }
}

/// Fits feature selection and standardization on `fit_on`.
pub fn prepare(fit_on: &Dataset, config: &TrainConfig) -> Result<Prepared, TrainError> {
    let ds = in_mode(fit_on, config.mode)?;
    let m1 = config.selection.m1.min(ds.m1());
    let m2 = ds
        .m2()
        .map_or(config.selection.m2, |w| config.selection.m2.min(w));
    let mask = select_features(&ds, m1, m2, config.selection.scorer)?;
    let stats = StandardizationStats::fit(&mask.apply(&ds)?)?;
    Ok(Prepared { mask, stats })
}

/// Checkpoint and log of one end-to-end training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub checkpoint: Checkpoint,
    pub history: TrainHistory,
}

/// Splits `raw` into training and validation parts (stratified by sex), fits
/// selection and standardization on the training part, then trains.
pub fn train_model(raw: &Dataset, config: &TrainConfig) -> Result<TrainedModel, TrainError> {
    config.validate()?;
    let ds = in_mode(raw, config.mode)?;
    let sexes: Vec<_> = ds.records().iter().map(|r| r.sex).collect();
    let (tr, va) = stratified_split(&sexes, config.val_fraction, config.seed)?;
    let train_raw = ds.subset(&tr)?;
    let val_raw = ds.subset(&va)?;
    let prep = prepare(&train_raw, config)?;
    let train = prep.apply(&train_raw)?;
    let val = prep.apply(&val_raw)?;
    let arch = config
        .arch
        .architecture(train.x1.cols(), train.x2.as_ref().map(|x| x.cols()));
    let out = fit_matrices(&train, &val, &arch, config)?;
    Ok(TrainedModel {
        checkpoint: Checkpoint::new(out.bundle, prep.mask, prep.stats),
        history: out.history,
    })
}

/// Ages predicted for every record of a raw dataset.
pub fn predict_dataset(ckpt: &Checkpoint, raw: &Dataset) -> Result<Vec<f64>, TrainError> {
    let expect1 = ckpt.mask.raw_m1;
    if raw.m1() != expect1 {
        return Err(DataError::Invalid(format!(
            "dataset has {} modality-1 features but the checkpoint expects {expect1}",
            raw.m1()
        ))
        .into());
    }
    if let (Some(expect2), Some(found)) = (ckpt.mask.raw_m2, raw.m2()) {
        if expect2 != found && ckpt.mask.m2.is_some() {
            return Err(DataError::Invalid(format!(
                "dataset has {found} modality-2 features but the checkpoint expects {expect2}"
            ))
            .into());
        }
    }
    let prep = Prepared {
        mask: ckpt.mask.clone(),
        stats: ckpt.stats.clone(),
    };
    let data = if ckpt.mask.m2.is_some() {
        prep.apply(raw)?
    } else {
        prep.apply(&raw.to_unimodal())?
    };
    predict(&ckpt.bundle, &data)
}
