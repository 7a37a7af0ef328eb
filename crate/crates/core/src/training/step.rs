use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{AdamState, TrainError};
use crate::autodiff::{Tape, Tensor, Var};
use crate::data::DesignMatrices;
use crate::losses::{
    binary_cross_entropy, combine, cross_recon_loss, discriminator_loss, generator_loss,
    kl_gaussian, ratio_degenerate, ratio_loss, regression_loss, self_recon_loss, weighted_sum,
    LossBreakdown, LossParts, LossWeights,
};
use crate::networks::{
    assemble_m, discriminate, encode, regress, reparameterize, BoundBundle, BoundMlp, Dropout,
    EncoderOutput, LatentCode, Mode, ModelBundle,
};
use crate::SeededRng;

/// Settings shared by every step of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSettings {
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub weights: LossWeights,
    pub self_recon: bool,
}

/// Separate optimizer states for the generator side and the discriminator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimizers {
    pub generator: AdamState,
    pub disc: AdamState,
}

impl Optimizers {
    pub fn new(bundle: &ModelBundle) -> Self {
        Self {
            generator: AdamState::new(
                bundle
                    .generator_nets()
                    .into_iter()
                    .flat_map(|n| n.tensors()),
            ),
            disc: AdamState::new(bundle.disc.tensors()),
        }
    }
}

/// Result of one two-phase update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    /// Generator-phase terms plus the discriminator objective.
    pub breakdown: LossBreakdown,
    /// Fraction of prior and code samples the discriminator classified correctly.
    pub disc_accuracy: Option<f64>,
    /// The distinct codes of both modalities coincided, so the ratio term is `num / ε`.
    pub degenerate_ratio: bool,
}

/// Batch tensors placed on a tape as constants.
#[derive(Clone, Copy, Debug)]
pub struct BatchVars {
    pub x1: Var,
    pub x2: Option<Var>,
    pub sex: Var,
    pub age: Var,
}

impl BatchVars {
    pub fn bind(tape: &mut Tape, batch: &DesignMatrices, mode: Mode) -> Result<Self, TrainError> {
        let x2 = match (mode, &batch.x2) {
            (Mode::Multimodal, Some(x2)) => Some(tape.constant(x2.clone())),
            (Mode::Multimodal, None) => return Err(TrainError::MissingModality),
            (Mode::Unimodal, _) => None,
        };
        Ok(Self {
            x1: tape.constant(batch.x1.clone()),
            x2,
            sex: tape.constant(batch.sex.clone()),
            age: tape.constant(batch.age.clone()),
        })
    }
}

/// Source of reparameterization noise and dropout masks. `None` gives the
/// deterministic inference path: no dropout and distinct code = mean.
pub struct Stochastic<'a> {
    pub rng: Option<&'a mut SeededRng>,
    pub dropout: f64,
}

impl Stochastic<'_> {
    pub fn off() -> Self {
        Stochastic {
            rng: None,
            dropout: 0.0,
        }
    }

    fn dropout(&mut self) -> Option<Dropout<'_>> {
        let rate = self.dropout;
        match self.rng.as_deref_mut() {
            Some(rng) if rate > 0.0 => Some(Dropout { rate, rng }),
            _ => None,
        }
    }

    fn noise(&mut self, rows: usize, cols: usize) -> Option<Tensor> {
        let rng = self.rng.as_deref_mut()?;
        Some(Tensor::from_fn(rows, cols, |_, _| {
            rng.sample(StandardNormal)
        }))
    }
}

/// Encoder heads for both modalities.
#[derive(Clone, Copy, Debug)]
pub struct Encodings {
    pub enc1: EncoderOutput,
    pub enc2: Option<EncoderOutput>,
}

pub fn encode_batch(
    tape: &mut Tape,
    bound: &BoundBundle,
    batch: &BatchVars,
    stoch: &mut Stochastic<'_>,
) -> Result<Encodings, TrainError> {
    let enc1 = encode(
        tape,
        &bound.enc1,
        &bound.arch,
        batch.x1,
        stoch.dropout().as_mut(),
    )?;
    let enc2 = match (&bound.enc2, batch.x2) {
        (Some(e), Some(x2)) => Some(encode(tape, e, &bound.arch, x2, stoch.dropout().as_mut())?),
        (None, None) => None,
        _ => return Err(TrainError::MissingModality),
    };
    Ok(Encodings { enc1, enc2 })
}

fn distinct_code(
    tape: &mut Tape,
    enc: &EncoderOutput,
    variational: bool,
    stoch: &mut Stochastic<'_>,
) -> Result<Var, TrainError> {
    if !variational {
        return Ok(enc.dist_mu);
    }
    let (rows, cols) = tape.value(enc.dist_mu).shape();
    match stoch.noise(rows, cols) {
        Some(n) => {
            let noise = tape.constant(n);
            Ok(reparameterize(tape, enc.dist_mu, enc.dist_logvar, noise)?)
        }
        None => Ok(enc.dist_mu),
    }
}

/// Every generator-side term recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorGraph {
    pub total: Var,
    pub adv: Option<Var>,
    pub var: Option<Var>,
    pub rec: Var,
    pub reg: Var,
    pub ratio: Option<Var>,
    pub sex: Option<Var>,
    pub y_hat: Var,
    pub code1: LatentCode,
    pub code2: Option<LatentCode>,
    pub degenerate_ratio: bool,
}

impl GeneratorGraph {
    pub fn breakdown(
        &self,
        tape: &Tape,
        weights: &LossWeights,
        bound: &BoundBundle,
    ) -> Result<LossBreakdown, TrainError> {
        let val = |v: Option<Var>| -> Result<f64, TrainError> {
            Ok(match v {
                Some(v) => tape.scalar(v)?,
                None => 0.0,
            })
        };
        let parts = LossParts {
            adv: val(self.adv)?,
            var: val(self.var)?,
            rec: tape.scalar(self.rec)?,
            reg: tape.scalar(self.reg)?,
            ratio: val(self.ratio)?,
            sex: val(self.sex)?,
        };
        let c = weights.gated(bound.arch.mode(), bound.variant);
        let mut b = combine(&parts, &c);
        b.total = tape.scalar(self.total)?;
        Ok(b)
    }
}

/// Builds the generator objective on top of `enc`. `disc` is the
/// discriminator the adversarial term is scored against.
pub fn generator_objective(
    tape: &mut Tape,
    bound: &BoundBundle,
    disc: &BoundMlp,
    batch: &BatchVars,
    enc: &Encodings,
    settings: &StepSettings,
    stoch: &mut Stochastic<'_>,
) -> Result<GeneratorGraph, TrainError> {
    let variant = bound.variant;
    let mode = bound.arch.mode();
    let c = settings.weights.gated(mode, variant);
    let variational = variant.variational();

    let code1 = LatentCode {
        shared: enc.enc1.shared,
        distinct: distinct_code(tape, &enc.enc1, variational, stoch)?,
    };
    let code2 = match &enc.enc2 {
        Some(e) => Some(LatentCode {
            shared: e.shared,
            distinct: distinct_code(tape, e, variational, stoch)?,
        }),
        None => None,
    };

    let rec = match mode {
        Mode::Multimodal => {
            let cross = cross_recon_loss(
                tape,
                batch.x1,
                batch.x2,
                &bound.dec1,
                bound.dec2.as_ref(),
                code1,
                code2,
                stoch.dropout().as_mut(),
            )?;
            if settings.self_recon {
                let dec2 = bound.dec2.as_ref().ok_or(TrainError::MissingModality)?;
                let (x2, c2) = (
                    batch.x2.ok_or(TrainError::MissingModality)?,
                    code2.ok_or(TrainError::MissingModality)?,
                );
                let s1 =
                    self_recon_loss(tape, batch.x1, &bound.dec1, code1, stoch.dropout().as_mut())?;
                let s2 = self_recon_loss(tape, x2, dec2, c2, stoch.dropout().as_mut())?;
                let s = tape.add(s1, s2)?;
                tape.add(cross, s)?
            } else {
                cross
            }
        }
        Mode::Unimodal => {
            self_recon_loss(tape, batch.x1, &bound.dec1, code1, stoch.dropout().as_mut())?
        }
    };

    let sex_in = variant.sex_input().then_some(batch.sex);
    // The regressor and sex head read distinct means, as at inference.
    let dist2_mu = enc.enc2.map(|e| e.dist_mu);
    let m = assemble_m(
        tape,
        code1.shared,
        code2.map(|c| c.shared),
        enc.enc1.dist_mu,
        dist2_mu,
        sex_in,
    )?;
    let y_hat = regress(
        tape,
        &bound.reg,
        bound.age_scale,
        m,
        stoch.dropout().as_mut(),
    )?;
    let reg = regression_loss(tape, batch.age, y_hat)?;

    let adv = if variant.adversarial() {
        let mut total = generator_loss_for(tape, disc, enc.enc1.shared)?;
        if let Some(e2) = &enc.enc2 {
            let g2 = generator_loss_for(tape, disc, e2.shared)?;
            total = tape.add(total, g2)?;
        }
        Some(total)
    } else {
        None
    };

    let var = if variational {
        let mut total = kl_gaussian(tape, enc.enc1.dist_mu, enc.enc1.dist_logvar)?;
        if let Some(e2) = &enc.enc2 {
            let k2 = kl_gaussian(tape, e2.dist_mu, e2.dist_logvar)?;
            total = tape.add(total, k2)?;
        }
        Some(total)
    } else {
        None
    };

    let mut degenerate_ratio = false;
    let ratio = match (&enc.enc2, c.ratio > 0.0) {
        (Some(e2), true) => {
            degenerate_ratio = ratio_degenerate(tape, enc.enc1.dist_mu, e2.dist_mu);
            Some(ratio_loss(
                tape,
                enc.enc1.shared,
                e2.shared,
                enc.enc1.dist_mu,
                e2.dist_mu,
            )?)
        }
        _ => None,
    };

    let sex = match &bound.sex_head {
        Some(head) => {
            let m_blind = assemble_m(
                tape,
                code1.shared,
                code2.map(|c| c.shared),
                enc.enc1.dist_mu,
                dist2_mu,
                None,
            )?;
            let p = head.forward(tape, m_blind, stoch.dropout().as_mut())?;
            Some(binary_cross_entropy(tape, p, batch.sex)?)
        }
        None => None,
    };

    let mut terms = vec![(c.rec, rec), (c.reg, reg)];
    terms.extend(adv.map(|v| (c.adv, v)));
    terms.extend(var.map(|v| (c.var, v)));
    terms.extend(ratio.map(|v| (c.ratio, v)));
    terms.extend(sex.map(|v| (c.sex, v)));
    let total = weighted_sum(tape, &terms)?;
    Ok(GeneratorGraph {
        total,
        adv,
        var,
        rec,
        reg,
        ratio,
        sex,
        y_hat,
        code1,
        code2,
        degenerate_ratio,
    })
}

fn generator_loss_for(tape: &mut Tape, disc: &BoundMlp, shared: Var) -> Result<Var, TrainError> {
    let p = discriminate(tape, disc, shared)?;
    Ok(generator_loss(tape, p)?)
}

/// One discriminator update against fresh N(0, I) prior samples, one block per
/// shared code. Returns the pre-update objective and accuracy. Only
/// `bundle.disc` changes.
pub fn discriminator_phase(
    bundle: &mut ModelBundle,
    shared_codes: &[Tensor],
    opt: &mut AdamState,
    settings: &StepSettings,
    rng: &mut SeededRng,
) -> Result<(f64, f64), TrainError> {
    let mut tape = Tape::new();
    let disc = bundle.disc.bind(&mut tape, true);
    let mut terms = Vec::with_capacity(shared_codes.len());
    let mut correct = 0usize;
    let mut seen = 0usize;
    for codes in shared_codes {
        let (rows, cols) = codes.shape();
        let prior = Tensor::from_fn(rows, cols, |_, _| rng.sample(StandardNormal));
        let fake = tape.constant(codes.clone());
        let real = tape.constant(prior);
        let p_fake = discriminate(&mut tape, &disc, fake)?;
        let p_real = discriminate(&mut tape, &disc, real)?;
        correct += tape
            .value(p_fake)
            .data()
            .iter()
            .filter(|p| **p < 0.5)
            .count();
        correct += tape
            .value(p_real)
            .data()
            .iter()
            .filter(|p| **p >= 0.5)
            .count();
        seen += 2 * rows;
        terms.push((1.0, discriminator_loss(&mut tape, p_fake, p_real)?));
    }
    let loss = weighted_sum(&mut tape, &terms)?;
    let value = tape.scalar(loss)?;
    if !value.is_finite() {
        return Err(TrainError::NonFiniteLoss("discriminator".into()));
    }
    let mut grads = tape.backward(loss)?;
    let g: Vec<Tensor> = disc.vars().map(|v| grads.take(v)).collect();
    let mut params: Vec<&mut Tensor> = bundle.disc.tensors_mut().collect();
    opt.step(&mut params, &g, settings.lr, settings.weight_decay)?;
    Ok((value, correct as f64 / seen.max(1) as f64))
}

/// Generator update with the discriminator frozen. Only generator-side
/// networks change.
pub fn generator_phase(
    bundle: &mut ModelBundle,
    batch: &DesignMatrices,
    opt: &mut AdamState,
    settings: &StepSettings,
    rng: &mut SeededRng,
) -> Result<LossBreakdown, TrainError> {
    let mut tape = Tape::new();
    let bound = bundle.bind(&mut tape, true, false);
    let vars = BatchVars::bind(&mut tape, batch, bundle.mode())?;
    let mut stoch = Stochastic {
        rng: Some(rng),
        dropout: settings.dropout,
    };
    let enc = encode_batch(&mut tape, &bound, &vars, &mut stoch)?;
    let graph = generator_objective(
        &mut tape,
        &bound,
        &bound.disc,
        &vars,
        &enc,
        settings,
        &mut stoch,
    )?;
    apply_generator(bundle, &tape, &bound, &graph, opt, settings)
}

fn apply_generator(
    bundle: &mut ModelBundle,
    tape: &Tape,
    bound: &BoundBundle,
    graph: &GeneratorGraph,
    opt: &mut AdamState,
    settings: &StepSettings,
) -> Result<LossBreakdown, TrainError> {
    let breakdown = graph.breakdown(tape, &settings.weights, bound)?;
    if !breakdown.total.is_finite() {
        return Err(TrainError::NonFiniteLoss(format!("{breakdown:?}")));
    }
    let mut grads = tape.backward(graph.total)?;
    let g: Vec<Tensor> = bound
        .generator_vars()
        .into_iter()
        .map(|v| grads.take(v))
        .collect();
    let mut params: Vec<&mut Tensor> = bundle
        .generator_nets_mut()
        .into_iter()
        .flat_map(|n| n.tensors_mut())
        .collect();
    opt.step(&mut params, &g, settings.lr, settings.weight_decay)?;
    Ok(breakdown)
}

/// Two-phase update: the discriminator learns to separate prior samples from
/// the current (detached) shared codes, then the generator networks minimize
/// the weighted objective against the updated discriminator.
pub fn train_step(
    bundle: &mut ModelBundle,
    batch: &DesignMatrices,
    settings: &StepSettings,
    opt: &mut Optimizers,
    rng: &mut SeededRng,
) -> Result<StepOutcome, TrainError> {
    let mut tape = Tape::new();
    let bound = bundle.bind(&mut tape, true, false);
    let vars = BatchVars::bind(&mut tape, batch, bundle.mode())?;
    let enc = {
        let mut stoch = Stochastic {
            rng: Some(&mut *rng),
            dropout: settings.dropout,
        };
        encode_batch(&mut tape, &bound, &vars, &mut stoch)?
    };

    let (disc_loss, disc_accuracy, disc) = if bundle.variant.adversarial() {
        let mut codes = vec![tape.value(enc.enc1.shared).clone()];
        codes.extend(enc.enc2.map(|e| tape.value(e.shared).clone()));
        let (loss, acc) = discriminator_phase(bundle, &codes, &mut opt.disc, settings, rng)?;
        (loss, Some(acc), bundle.disc.bind(&mut tape, false))
    } else {
        (0.0, None, bound.disc.clone())
    };

    let mut stoch = Stochastic {
        rng: Some(rng),
        dropout: settings.dropout,
    };
    let graph = generator_objective(&mut tape, &bound, &disc, &vars, &enc, settings, &mut stoch)?;
    let mut breakdown =
        apply_generator(bundle, &tape, &bound, &graph, &mut opt.generator, settings)?;
    breakdown.disc_loss = disc_loss;
    Ok(StepOutcome {
        breakdown,
        disc_accuracy,
        degenerate_ratio: graph.degenerate_ratio,
    })
}

/// Multimodal step; the batch and the bundle must both carry modality 2.
pub fn train_step_multimodal(
    bundle: &mut ModelBundle,
    batch: &DesignMatrices,
    settings: &StepSettings,
    opt: &mut Optimizers,
    rng: &mut SeededRng,
) -> Result<StepOutcome, TrainError> {
    if bundle.mode() != Mode::Multimodal || batch.x2.is_none() {
        return Err(TrainError::MissingModality);
    }
    train_step(bundle, batch, settings, opt, rng)
}

/// Modality-1 step; any modality-2 data in the batch is ignored.
pub fn train_step_unimodal(
    bundle: &mut ModelBundle,
    batch: &DesignMatrices,
    settings: &StepSettings,
    opt: &mut Optimizers,
    rng: &mut SeededRng,
) -> Result<StepOutcome, TrainError> {
    if bundle.mode() != Mode::Unimodal {
        return Err(TrainError::Config(
            "unimodal step needs a bundle without modality-2 networks".into(),
        ));
    }
    train_step(bundle, batch, settings, opt, rng)
}

/// Deterministic latent codes for every row: shared codes and distinct means.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentTensors {
    pub shared1: Tensor,
    pub dist1: Tensor,
    pub shared2: Option<Tensor>,
    pub dist2: Option<Tensor>,
}

pub fn latent_codes(
    bundle: &ModelBundle,
    data: &DesignMatrices,
) -> Result<LatentTensors, TrainError> {
    let mut tape = Tape::new();
    let bound = bundle.bind(&mut tape, false, false);
    let vars = BatchVars::bind(&mut tape, data, bundle.mode())?;
    let enc = encode_batch(&mut tape, &bound, &vars, &mut Stochastic::off())?;
    Ok(LatentTensors {
        shared1: tape.value(enc.enc1.shared).clone(),
        dist1: tape.value(enc.enc1.dist_mu).clone(),
        shared2: enc.enc2.map(|e| tape.value(e.shared).clone()),
        dist2: enc.enc2.map(|e| tape.value(e.dist_mu).clone()),
    })
}

/// Predicted ages in years, using distinct means and no dropout.
pub fn predict(bundle: &ModelBundle, data: &DesignMatrices) -> Result<Vec<f64>, TrainError> {
    let mut tape = Tape::new();
    let bound = bundle.bind(&mut tape, false, false);
    let vars = BatchVars::bind(&mut tape, data, bundle.mode())?;
    let enc = encode_batch(&mut tape, &bound, &vars, &mut Stochastic::off())?;
    let sex = bundle.variant.sex_input().then_some(vars.sex);
    let m = assemble_m(
        &mut tape,
        enc.enc1.shared,
        enc.enc2.map(|e| e.shared),
        enc.enc1.dist_mu,
        enc.enc2.map(|e| e.dist_mu),
        sex,
    )?;
    let y = regress(&mut tape, &bound.reg, bundle.age_scale, m, None)?;
    Ok(tape.value(y).data().to_vec())
}

/// Full generator objective with a frozen discriminator and fixed noise seed;
/// used for gradient checks over every generator parameter.
pub fn objective_value(
    tape: &mut Tape,
    bundle: &ModelBundle,
    batch: &DesignMatrices,
    settings: &StepSettings,
    noise_seed: u64,
) -> Result<(BoundBundle, GeneratorGraph), TrainError> {
    use rand::SeedableRng;
    let bound = bundle.bind(tape, true, false);
    let vars = BatchVars::bind(tape, batch, bundle.mode())?;
    let mut rng = SeededRng::seed_from_u64(noise_seed);
    let mut stoch = Stochastic {
        rng: Some(&mut rng),
        dropout: settings.dropout,
    };
    let enc = encode_batch(tape, &bound, &vars, &mut stoch)?;
    let graph = generator_objective(tape, &bound, &bound.disc, &vars, &enc, settings, &mut stoch)?;
    Ok((bound, graph))
}
