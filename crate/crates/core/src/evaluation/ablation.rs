use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{compute_metrics, group_breakdown, GroupMetrics, MetricsReport};
use super::EvalError;
use crate::data::{Dataset, Sex};
use crate::networks::{Mode, Variant};
use crate::training::{kfold_split, predict_dataset, stratified_split, train_model, TrainConfig};

/// How subjects are divided into training and test parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Protocol {
    /// `k` folds; every subject is predicted exactly once per seed.
    CrossValidation { k: usize },
    /// One sex-stratified split holding out `test_fraction` of the subjects.
    Holdout { test_fraction: f64 },
}

/// One train/test split for one seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub seed: u64,
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// SHA-256 over both index lists.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for part in [&self.train, &self.test] {
            h.update((part.len() as u64).to_le_bytes());
            for &i in part {
                h.update((i as u64).to_le_bytes());
            }
        }
        hex(&h.finalize())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 over every record of `ds` in CSV-equivalent form.
pub fn dataset_digest(ds: &Dataset) -> String {
    let mut h = Sha256::new();
    for r in ds.records() {
        h.update(r.id.as_bytes());
        h.update([r.sex.code()]);
        h.update(r.age.to_le_bytes());
        for v in r.x1.iter().chain(r.x2.iter().flatten()) {
            h.update(v.to_le_bytes());
        }
    }
    hex(&h.finalize())
}

/// Splits for every seed, identical for any variant.
pub fn make_splits(
    ds: &Dataset,
    protocol: Protocol,
    seeds: &[u64],
) -> Result<Vec<Split>, EvalError> {
    let mut out = Vec::new();
    for &seed in seeds {
        match protocol {
            Protocol::CrossValidation { k } => {
                let folds = kfold_split(ds.len(), k, seed)?;
                for fold in 0..k {
                    let test = folds.test_indices(fold);
                    if test.is_empty() {
                        return Err(EvalError::Protocol(format!("fold {fold} is empty")));
                    }
                    out.push(Split {
                        seed,
                        fold,
                        train: folds.train_indices(fold),
                        test,
                    });
                }
            }
            Protocol::Holdout { test_fraction } => {
                let sexes: Vec<Sex> = ds.records().iter().map(|r| r.sex).collect();
                let (train, test) =
                    stratified_split(&sexes, test_fraction, seed ^ 0x005e_ed0f_7e57)?;
                out.push(Split {
                    seed,
                    fold: 0,
                    train,
                    test,
                });
            }
        }
    }
    Ok(out)
}

/// Seed used to train on one split; shared by all variants.
pub fn split_train_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(fold as u64)
}

/// Held-out performance of one trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub seed: u64,
    pub fold: usize,
    pub split_digest: String,
    pub train_seed: u64,
    pub best_epoch: Option<usize>,
    pub epochs_run: usize,
    pub metrics: MetricsReport,
    /// `(subject index, predicted age)` for every test subject.
    pub predictions: Vec<(usize, f64)>,
}

/// Predictions of every split of one seed, pooled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub pooled: GroupMetrics,
}

/// Every result for one `(variant, mode)` pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: Variant,
    pub mode: Mode,
    /// All held-out predictions of all seeds.
    pub pooled: GroupMetrics,
    pub seeds: Vec<SeedResult>,
    pub folds: Vec<FoldResult>,
    /// Mean and population std across seeds of the pooled MAE.
    pub seed_mae_mean: f64,
    pub seed_mae_std: f64,
    /// Mean and population std across individual folds of the fold MAE.
    pub fold_mae_mean: f64,
    pub fold_mae_std: f64,
}

impl VariantResult {
    pub fn seed_mae(&self) -> Vec<f64> {
        self.seeds.iter().map(|s| s.pooled.overall.mae).collect()
    }
}

/// Paired comparison of several variants on shared splits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub protocol: Protocol,
    pub seeds: Vec<u64>,
    pub dataset_digest: String,
    pub entries: Vec<VariantResult>,
}

impl AblationTable {
    pub fn get(&self, variant: Variant) -> Option<&VariantResult> {
        self.entries.iter().find(|e| e.variant == variant)
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (
        m,
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt(),
    )
}

fn run_split(ds: &Dataset, split: &Split, config: &TrainConfig) -> Result<FoldResult, EvalError> {
    let train = ds.subset(&split.train)?;
    let test = ds.subset(&split.test)?;
    let train_seed = split_train_seed(split.seed, split.fold);
    let cfg = TrainConfig {
        seed: train_seed,
        ..config.clone()
    };
    let model = train_model(&train, &cfg)?;
    let y_hat = predict_dataset(&model.checkpoint, &test)?;
    let metrics = compute_metrics(&test.ages(), &y_hat)?;
    Ok(FoldResult {
        seed: split.seed,
        fold: split.fold,
        split_digest: split.digest(),
        train_seed,
        best_epoch: model.history.best_epoch,
        epochs_run: model.history.epochs.len(),
        metrics,
        predictions: split.test.iter().copied().zip(y_hat).collect(),
    })
}

fn pool(ds: &Dataset, folds: &[&FoldResult]) -> Result<GroupMetrics, EvalError> {
    let recs = ds.records();
    let mut sex = Vec::new();
    let mut age = Vec::new();
    let mut pred = Vec::new();
    for f in folds {
        for &(i, p) in &f.predictions {
            sex.push(recs[i].sex);
            age.push(recs[i].age);
            pred.push(p);
        }
    }
    group_breakdown(&sex, &age, &pred)
}

fn summarize(
    ds: &Dataset,
    variant: Variant,
    mode: Mode,
    seeds: &[u64],
    folds: Vec<FoldResult>,
) -> Result<VariantResult, EvalError> {
    let mut seed_results = Vec::new();
    for &s in seeds {
        let mine: Vec<&FoldResult> = folds.iter().filter(|f| f.seed == s).collect();
        seed_results.push(SeedResult {
            seed: s,
            pooled: pool(ds, &mine)?,
        });
    }
    let pooled = pool(ds, &folds.iter().collect::<Vec<_>>())?;
    let (seed_mae_mean, seed_mae_std) = mean_std(
        &seed_results
            .iter()
            .map(|s| s.pooled.overall.mae)
            .collect::<Vec<_>>(),
    );
    let (fold_mae_mean, fold_mae_std) =
        mean_std(&folds.iter().map(|f| f.metrics.mae).collect::<Vec<_>>());
    Ok(VariantResult {
        variant,
        mode,
        pooled,
        seeds: seed_results,
        folds,
        seed_mae_mean,
        seed_mae_std,
        fold_mae_mean,
        fold_mae_std,
    })
}

/// Trains and evaluates every variant on the same splits and training seeds.
/// `jobs > 1` runs splits on a thread pool; results are merged in split order.
pub fn run_ablation(
    ds: &Dataset,
    variants: &[Variant],
    config: &TrainConfig,
    protocol: Protocol,
    seeds: &[u64],
    jobs: usize,
) -> Result<AblationTable, EvalError> {
    if variants.is_empty() {
        return Err(EvalError::Protocol("no variants requested".into()));
    }
    if seeds.is_empty() {
        return Err(EvalError::Protocol("no seeds given".into()));
    }
    config.validate()?;
    let splits = make_splits(ds, protocol, seeds)?;
    let tasks: Vec<(Variant, &Split)> = variants
        .iter()
        .flat_map(|&v| splits.iter().map(move |s| (v, s)))
        .collect();
    let run = |&(v, split): &(Variant, &Split)| {
        let cfg = TrainConfig {
            variant: v,
            ..config.clone()
        };
        run_split(ds, split, &cfg)
    };
    let results: Vec<Result<FoldResult, EvalError>> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| EvalError::Protocol(format!("thread pool: {e}")))?;
        pool.install(|| tasks.par_iter().map(run).collect())
    } else {
        tasks.iter().map(run).collect()
    };
    let mut results = results.into_iter();
    let mut entries = Vec::new();
    for &v in variants {
        let folds = results
            .by_ref()
            .take(splits.len())
            .collect::<Result<Vec<_>, _>>()?;
        entries.push(summarize(ds, v, config.mode, seeds, folds)?);
    }
    Ok(AblationTable {
        protocol,
        seeds: seeds.to_vec(),
        dataset_digest: dataset_digest(ds),
        entries,
    })
}

/// K-fold cross-validation of the configured variant.
pub fn evaluate_cv(
    ds: &Dataset,
    config: &TrainConfig,
    k: usize,
    seeds: &[u64],
    jobs: usize,
) -> Result<VariantResult, EvalError> {
    if k < 2 {
        return Err(EvalError::Protocol(format!(
            "k must be at least 2, got {k}"
        )));
    }
    let table = run_ablation(
        ds,
        &[config.variant],
        config,
        Protocol::CrossValidation { k },
        seeds,
        jobs,
    )?;
    Ok(table
        .entries
        .into_iter()
        .next()
        .expect("one variant requested"))
}

/// Single stratified holdout evaluation per seed of the configured variant.
pub fn evaluate_holdout(
    ds: &Dataset,
    config: &TrainConfig,
    test_fraction: f64,
    seeds: &[u64],
    jobs: usize,
) -> Result<VariantResult, EvalError> {
    let table = run_ablation(
        ds,
        &[config.variant],
        config,
        Protocol::Holdout { test_fraction },
        seeds,
        jobs,
    )?;
    Ok(table
        .entries
        .into_iter()
        .next()
        .expect("one variant requested"))
}

/// Plain-text table: one row per variant with overall, per-sex and per-bin MAE.
pub fn render_table(table: &AblationTable) -> String {
    let cell = |m: &Option<MetricsReport>| m.map_or("-".to_string(), |m| format!("{:.3}", m.mae));
    let mut out = String::new();
    out.push_str(&format!(
        "{:<8} {:<10} {:>16} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
        "variant", "mode", "MAE±std", "RMSE", "R2", "male", "female", "G1", "G2", "G3", "G4"
    ));
    for e in &table.entries {
        let o = &e.pooled.overall;
        let mode = match e.mode {
            Mode::Multimodal => "multimodal",
            Mode::Unimodal => "unimodal",
        };
        out.push_str(&format!(
            "{:<8} {:<10} {:>16} {:>8.3} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
            e.variant.name(),
            mode,
            format!("{:.3}±{:.3}", o.mae, o.mae_std),
            o.rmse,
            o.r2.map_or("-".to_string(), |r| format!("{r:.3}")),
            cell(&e.pooled.male),
            cell(&e.pooled.female),
            cell(&e.pooled.age_groups[0]),
            cell(&e.pooled.age_groups[1]),
            cell(&e.pooled.age_groups[2]),
            cell(&e.pooled.age_groups[3]),
        ));
    }
    out.push_str(&format!(
        "seeds {:?}; across-seed MAE std per variant: {}\n",
        table.seeds,
        table
            .entries
            .iter()
            .map(|e| format!("{} {:.3}", e.variant.name(), e.seed_mae_std))
            .collect::<Vec<_>>()
            .join(", ")
    ));
    out
}
