use serde::{Deserialize, Serialize};

use super::{
    initial_bundle, objective_value, prepare, ArchConfig, SelectionConfig, StepSettings,
    TrainConfig, TrainError,
};
use crate::autodiff::Tape;
use crate::data::{gen_synthetic, SyntheticSpec};
use crate::networks::Variant;

/// Samples per gradient-check batch.
pub const GRADCHECK_BATCH: usize = 4;
/// Central-difference step.
pub const GRADCHECK_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub seed: u64,
    pub points: usize,
    /// Generator parameters compared per point.
    pub params_per_point: usize,
    /// `max |analytic − numeric| / max(1, |analytic|)` over all points.
    pub max_rel_err: f64,
}

/// Architecture small enough for exhaustive central differences.
pub fn gradcheck_config(seed: u64) -> TrainConfig {
    TrainConfig {
        variant: Variant::SaAvae,
        seed,
        arch: ArchConfig {
            shared_dim: 3,
            dist_dim: 2,
            enc_hidden: vec![5],
            dec_hidden: vec![5],
            disc_hidden: vec![4],
            reg_hidden: vec![5],
            sex_hidden: vec![3],
        },
        selection: SelectionConfig {
            m1: 8,
            m2: 8,
            ..SelectionConfig::default()
        },
        ..TrainConfig::default()
    }
}

/// Compares tape gradients of the full generator objective with central
/// differences at `points` random parameter points, each on its own
/// four-subject synthetic batch.
pub fn gradcheck_objective(seed: u64, points: usize) -> Result<GradCheckReport, TrainError> {
    let spec = SyntheticSpec {
        n: 40,
        k_shared: 2,
        k_distinct: 2,
        d1: 8,
        d2: 8,
        seed,
        ..SyntheticSpec::default()
    };
    let (ds, _) = gen_synthetic(&spec)?;
    let base = gradcheck_config(seed);
    let prep = prepare(&ds, &base)?;
    let all = prep.apply(&ds)?;
    let arch = base
        .arch
        .architecture(all.x1.cols(), all.x2.as_ref().map(|x| x.cols()));
    let settings = StepSettings {
        lr: base.lr,
        weight_decay: base.weight_decay,
        dropout: base.dropout,
        weights: base.weights,
        self_recon: base.self_recon,
    };

    let mut worst: f64 = 0.0;
    let mut params_per_point = 0;
    for p in 0..points {
        let start = (p * GRADCHECK_BATCH) % (all.len() - GRADCHECK_BATCH + 1);
        let idx: Vec<usize> = (start..start + GRADCHECK_BATCH).collect();
        let batch = all.select(&idx);
        let cfg = TrainConfig {
            seed: seed.wrapping_mul(7919).wrapping_add(p as u64),
            ..base.clone()
        };
        let mut bundle = initial_bundle(&arch, &all, &cfg)?;
        let noise_seed = cfg.seed;

        let mut tape = Tape::new();
        let (bound, graph) = objective_value(&mut tape, &bundle, &batch, &settings, noise_seed)?;
        let grads = tape.backward(graph.total)?;
        let analytic: Vec<f64> = bound
            .generator_vars()
            .into_iter()
            .flat_map(|v| grads.get(v).data().to_vec())
            .collect();
        params_per_point = analytic.len();

        let mut flat = bundle.flat_params();
        let mut eval = |flat: &[f64]| -> Result<f64, TrainError> {
            bundle.set_flat_params(flat)?;
            let mut tape = Tape::new();
            let (_, graph) = objective_value(&mut tape, &bundle, &batch, &settings, noise_seed)?;
            Ok(tape.scalar(graph.total)?)
        };
        for (k, &a) in analytic.iter().enumerate() {
            let x = flat[k];
            flat[k] = x + GRADCHECK_STEP;
            let up = eval(&flat)?;
            flat[k] = x - GRADCHECK_STEP;
            let down = eval(&flat)?;
            flat[k] = x;
            let numeric = (up - down) / (2.0 * GRADCHECK_STEP);
            worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
        }
    }
    Ok(GradCheckReport {
        seed,
        points,
        params_per_point,
        max_rel_err: worst,
    })
}
