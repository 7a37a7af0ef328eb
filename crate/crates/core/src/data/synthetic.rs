use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, Provenance, Sex, SubjectRecord};
use crate::autodiff::Tensor;
use crate::SeededRng;

/// Lowest generated age.
pub const AGE_MIN: f64 = 18.0;
/// Highest generated age.
pub const AGE_MAX: f64 = 86.0;
const DISTINCT_AGE_WEIGHT: f64 = 0.3;

/// Planted-factor generator settings.
///
/// Each modality mixes shared factors `s` and its own distinct factors `dᵢ`
/// through a column-normalized Gaussian matrix. Age depends on `w·s` with a
/// sex-specific slope plus a smaller `v·d₁` term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n: usize,
    pub k_shared: usize,
    pub k_distinct: usize,
    pub d1: usize,
    pub d2: usize,
    pub noise_std: f64,
    pub beta_female: f64,
    pub beta_male: f64,
    pub intercept: f64,
    pub age_noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 2000,
            k_shared: 8,
            k_distinct: 8,
            d1: 256,
            d2: 256,
            noise_std: 0.2,
            beta_female: 7.5,
            beta_male: 12.0,
            intercept: 45.0,
            age_noise_std: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::Spec(m.to_string()));
        if self.n == 0 {
            return bad("n must be positive");
        }
        if self.k_shared == 0 || self.k_distinct == 0 {
            return bad("factor counts must be positive");
        }
        if self.k_shared + self.k_distinct > self.d1.min(self.d2) {
            return bad("k_shared + k_distinct must not exceed min(d1, d2)");
        }
        if !(self.noise_std >= 0.0 && self.age_noise_std >= 0.0) {
            return bad("noise levels must be non-negative");
        }
        let finite = [
            self.beta_female,
            self.beta_male,
            self.intercept,
            self.noise_std,
            self.age_noise_std,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("parameters must be finite");
        }
        if !(self.intercept > AGE_MIN && self.intercept < AGE_MAX) {
            return bad("intercept must lie inside the age range");
        }
        Ok(())
    }
}

/// Latent truth behind a generated dataset. Row `i` of every factor matrix
/// belongs to record `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGroundTruth {
    pub spec: SyntheticSpec,
    /// `n × k_shared`.
    pub shared: Tensor,
    /// `n × k_distinct`.
    pub distinct1: Tensor,
    pub distinct2: Tensor,
    /// `d1 × (k_shared + k_distinct)`, unit-norm columns.
    pub mixing1: Tensor,
    pub mixing2: Tensor,
    /// Unit vector over shared factors.
    pub w: Vec<f64>,
    /// Unit vector over modality-1 distinct factors.
    pub v: Vec<f64>,
}

impl SyntheticGroundTruth {
    /// Writes the companion JSON file (spec echo plus row-major matrices).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        Ok(serde_json::from_reader(std::io::BufReader::new(
            File::open(path)?,
        ))?)
    }

    /// Noise-free modality features `A·[s; d]` for every subject.
    pub fn clean_features(&self, modality: usize) -> Tensor {
        let (mix, dist) = if modality == 1 {
            (&self.mixing1, &self.distinct1)
        } else {
            (&self.mixing2, &self.distinct2)
        };
        let n = self.shared.rows();
        let ks = self.shared.cols();
        let latent = Tensor::from_fn(n, ks + dist.cols(), |r, c| {
            if c < ks {
                self.shared.get(r, c)
            } else {
                dist.get(r, c - ks)
            }
        });
        latent
            .matmul(&mix.transpose())
            .expect("latent width matches mixing columns")
    }
}

fn normal(rng: &mut SeededRng) -> f64 {
    rng.sample(StandardNormal)
}

fn unit_vector(rng: &mut SeededRng, k: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..k).map(|_| normal(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn mixing_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> Tensor {
    let mut a = Tensor::from_fn(rows, cols, |_, _| normal(rng));
    for c in 0..cols {
        let norm = (0..rows).map(|r| a.get(r, c).powi(2)).sum::<f64>().sqrt();
        for r in 0..rows {
            a.set(r, c, a.get(r, c) / norm);
        }
    }
    a
}

/// Draws a multimodal dataset with planted shared and distinct factors.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, SyntheticGroundTruth), DataError> {
    spec.validate()?;
    let mut rng = SeededRng::seed_from_u64(spec.seed);
    let (ks, kd) = (spec.k_shared, spec.k_distinct);
    let mixing1 = mixing_matrix(&mut rng, spec.d1, ks + kd);
    let mixing2 = mixing_matrix(&mut rng, spec.d2, ks + kd);
    let w = unit_vector(&mut rng, ks);
    let v = unit_vector(&mut rng, kd);

    let mut shared = Tensor::zeros(spec.n, ks);
    let mut distinct1 = Tensor::zeros(spec.n, kd);
    let mut distinct2 = Tensor::zeros(spec.n, kd);
    let mut records = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let sex = if rng.random::<f64>() < 0.5 {
            Sex::Female
        } else {
            Sex::Male
        };
        let s: Vec<f64> = (0..ks).map(|_| normal(&mut rng)).collect();
        let d1: Vec<f64> = (0..kd).map(|_| normal(&mut rng)).collect();
        let d2: Vec<f64> = (0..kd).map(|_| normal(&mut rng)).collect();
        let mut mix = |a: &Tensor, d: &[f64]| -> Vec<f64> {
            (0..a.rows())
                .map(|r| {
                    let row = a.row_slice(r);
                    let clean: f64 = row[..ks].iter().zip(&s).map(|(x, y)| x * y).sum::<f64>()
                        + row[ks..].iter().zip(d).map(|(x, y)| x * y).sum::<f64>();
                    clean + spec.noise_std * normal(&mut rng)
                })
                .collect()
        };
        let x1 = mix(&mixing1, &d1);
        let x2 = mix(&mixing2, &d2);
        let slope = match sex {
            Sex::Female => spec.beta_female,
            Sex::Male => spec.beta_male,
        };
        let ws: f64 = w.iter().zip(&s).map(|(a, b)| a * b).sum();
        let vd: f64 = v.iter().zip(&d1).map(|(a, b)| a * b).sum();
        let age = spec.intercept
            + slope * ws
            + DISTINCT_AGE_WEIGHT * vd
            + spec.age_noise_std * normal(&mut rng);
        for (c, &v) in s.iter().enumerate() {
            shared.set(i, c, v);
        }
        for c in 0..kd {
            distinct1.set(i, c, d1[c]);
            distinct2.set(i, c, d2[c]);
        }
        records.push(SubjectRecord {
            id: format!("sub-{i:05}"),
            sex,
            age: age.clamp(AGE_MIN, AGE_MAX),
            x1,
            x2: Some(x2),
        });
    }
    let dataset = Dataset::new(records, Provenance::Synthetic)?;
    let truth = SyntheticGroundTruth {
        spec: spec.clone(),
        shared,
        distinct1,
        distinct2,
        mixing1,
        mixing2,
        w,
        v,
    };
    Ok((dataset, truth))
}
