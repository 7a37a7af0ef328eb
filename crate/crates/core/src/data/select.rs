use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};
use crate::SeededRng;

/// How raw features are ranked against age.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scorer {
    /// |Pearson r| with age; zero-variance features score 0.
    #[default]
    AbsCorr,
    /// Mean impurity decrease over bagged depth-limited regression trees.
    TreeImportance {
        trees: usize,
        max_depth: usize,
        seed: u64,
    },
}

/// Columns kept per modality, in ascending raw-index order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMask {
    pub raw_m1: usize,
    pub raw_m2: Option<usize>,
    pub m1: Vec<usize>,
    pub m2: Option<Vec<usize>>,
}

impl FeatureMask {
    /// Keeps every column.
    pub fn identity(raw_m1: usize, raw_m2: Option<usize>) -> Self {
        Self {
            raw_m1,
            raw_m2,
            m1: (0..raw_m1).collect(),
            m2: raw_m2.map(|m| (0..m).collect()),
        }
    }

    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset, DataError> {
        if dataset.m1() != self.raw_m1 {
            return Err(DataError::Invalid(format!(
                "dataset has {} modality-1 features, mask expects {}",
                dataset.m1(),
                self.raw_m1
            )));
        }
        if let (Some(found), Some(expected)) = (dataset.m2(), self.raw_m2) {
            if found != expected {
                return Err(DataError::Invalid(format!(
                    "dataset has {found} modality-2 features, mask expects {expected}"
                )));
            }
        }
        let keep2 = self.m2.clone().unwrap_or_default();
        let ds = dataset.map_features(
            |x| self.m1.iter().map(|&k| x[k]).collect(),
            |x| keep2.iter().map(|&k| x[k]).collect(),
        );
        if self.m2.is_none() {
            return Ok(ds.to_unimodal());
        }
        Ok(ds)
    }
}

/// Top-`m1` / top-`m2` features by `scorer`, fitted only on `train`.
pub fn select_features(
    train: &Dataset,
    m1: usize,
    m2: usize,
    scorer: Scorer,
) -> Result<FeatureMask, DataError> {
    let recs = train.records();
    let ages: Vec<f64> = recs.iter().map(|r| r.age).collect();
    let cols1 = columns(recs.iter().map(|r| r.x1.as_slice()), train.m1());
    let keep1 = top_m(&score(&cols1, &ages, scorer), m1)?;
    let (raw_m2, keep2) = match train.m2() {
        Some(w) => {
            let (rows, ages2): (Vec<&[f64]>, Vec<f64>) = recs
                .iter()
                .filter_map(|r| r.x2.as_deref().map(|x| (x, r.age)))
                .unzip();
            let cols2 = columns(rows.into_iter(), w);
            (Some(w), Some(top_m(&score(&cols2, &ages2, scorer), m2)?))
        }
        None => (None, None),
    };
    Ok(FeatureMask {
        raw_m1: train.m1(),
        raw_m2,
        m1: keep1,
        m2: keep2,
    })
}

fn score(cols: &[Vec<f64>], ages: &[f64], scorer: Scorer) -> Vec<f64> {
    match scorer {
        Scorer::AbsCorr => abs_corr_scores(cols, ages),
        Scorer::TreeImportance {
            trees,
            max_depth,
            seed,
        } => tree_importance_scores(cols, ages, trees, max_depth, seed),
    }
}

fn columns<'a>(rows: impl Iterator<Item = &'a [f64]>, width: usize) -> Vec<Vec<f64>> {
    let mut cols = vec![Vec::new(); width];
    for r in rows {
        for (c, v) in cols.iter_mut().zip(r) {
            c.push(*v);
        }
    }
    cols
}

fn top_m(scores: &[f64], m: usize) -> Result<Vec<usize>, DataError> {
    if m > scores.len() || m == 0 {
        return Err(DataError::TooManyFeatures {
            requested: m,
            available: scores.len(),
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut keep = order[..m].to_vec();
    keep.sort_unstable();
    Ok(keep)
}

/// |Pearson correlation| of each column with `target`.
pub fn abs_corr_scores(cols: &[Vec<f64>], target: &[f64]) -> Vec<f64> {
    let n = target.len() as f64;
    let ty = target.iter().sum::<f64>() / n;
    let sy = target.iter().map(|y| (y - ty).powi(2)).sum::<f64>();
    cols.iter()
        .map(|col| {
            let tx = col.iter().sum::<f64>() / n;
            let sx = col.iter().map(|x| (x - tx).powi(2)).sum::<f64>();
            if sx <= 0.0 || sy <= 0.0 {
                return 0.0;
            }
            let sxy: f64 = col
                .iter()
                .zip(target)
                .map(|(x, y)| (x - tx) * (y - ty))
                .sum();
            (sxy / (sx * sy).sqrt()).abs()
        })
        .collect()
}

/// Impurity-decrease importance averaged over `trees` bootstrap regression trees.
pub fn tree_importance_scores(
    cols: &[Vec<f64>],
    target: &[f64],
    trees: usize,
    max_depth: usize,
    seed: u64,
) -> Vec<f64> {
    let width = cols.len();
    let n = target.len();
    let mut total = vec![0.0; width];
    if n < 2 || width == 0 {
        return total;
    }
    let mut rng = SeededRng::seed_from_u64(seed);
    let tries = (width / 3).max(1);
    for _ in 0..trees.max(1) {
        let boot: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let mut imp = vec![0.0; width];
        grow(cols, target, boot, max_depth, tries, &mut rng, &mut imp);
        let sum: f64 = imp.iter().sum();
        if sum > 0.0 {
            for (t, v) in total.iter_mut().zip(&imp) {
                *t += v / sum;
            }
        }
    }
    let k = trees.max(1) as f64;
    total.iter_mut().for_each(|v| *v /= k);
    total
}

fn sse(target: &[f64], idx: &[usize]) -> f64 {
    let n = idx.len() as f64;
    let mean = idx.iter().map(|&i| target[i]).sum::<f64>() / n;
    idx.iter().map(|&i| (target[i] - mean).powi(2)).sum()
}

fn grow(
    cols: &[Vec<f64>],
    target: &[f64],
    idx: Vec<usize>,
    depth: usize,
    tries: usize,
    rng: &mut SeededRng,
    imp: &mut [f64],
) {
    const MIN_LEAF: usize = 3;
    if depth == 0 || idx.len() < 2 * MIN_LEAF {
        return;
    }
    let parent = sse(target, &idx);
    if parent <= 0.0 {
        return;
    }
    let mut best: Option<(f64, usize, f64)> = None;
    for f in sample(rng, cols.len(), tries).into_iter() {
        let col = &cols[f];
        let mut order = idx.clone();
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
        let total: f64 = order.iter().map(|&i| target[i]).sum();
        let total_sq: f64 = order.iter().map(|&i| target[i] * target[i]).sum();
        let n = order.len() as f64;
        let (mut ls, mut lsq) = (0.0, 0.0);
        for (k, &i) in order.iter().enumerate().take(order.len() - MIN_LEAF) {
            ls += target[i];
            lsq += target[i] * target[i];
            let nl = (k + 1) as f64;
            if k + 1 < MIN_LEAF || col[i] == col[order[k + 1]] {
                continue;
            }
            let nr = n - nl;
            let rs = total - ls;
            let rsq = total_sq - lsq;
            let child = (lsq - ls * ls / nl) + (rsq - rs * rs / nr);
            let gain = parent - child;
            if best.is_none_or(|(g, _, _)| gain > g) {
                best = Some((gain, f, 0.5 * (col[i] + col[order[k + 1]])));
            }
        }
    }
    let Some((gain, f, threshold)) = best else {
        return;
    };
    if gain <= 0.0 {
        return;
    }
    imp[f] += gain;
    let (left, right): (Vec<usize>, Vec<usize>) =
        idx.into_iter().partition(|&i| cols[f][i] <= threshold);
    grow(cols, target, left, depth - 1, tries, rng, imp);
    grow(cols, target, right, depth - 1, tries, rng, imp);
}
