//! Objective terms and their weighted combinations.
//!
//! Every builder records its computation on a [`Tape`] so gradients flow to
//! whatever produced the inputs. [`values`] wraps the same builders for plain
//! tensors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Var};
use crate::networks::{decode, BoundMlp, Dropout, LatentCode, Mode, NetworkError, Variant};

/// Lower probability clamp before logs; the upper clamp is `1 − PROB_EPS`.
pub const PROB_EPS: f64 = 1e-7;
/// Guard added to the distinct-distance denominator of [`ratio_loss`].
pub const RATIO_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("weight {name} is {value}; weights must be finite and non-negative")]
    NegativeWeight { name: &'static str, value: f64 },
    #[error("at least one loss weight must be positive")]
    AllZero,
    #[error("{what}: probability {value} outside [0, 1]")]
    Probability { what: &'static str, value: f64 },
    #[error("{what}: shapes {left:?} and {right:?} differ")]
    ShapeMismatch {
        what: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("cross-reconstruction needs both modalities; use self_recon_loss for unimodal data")]
    MissingModality,
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Trade-off weights. `mu*` apply in multimodal mode (adversarial, variational,
/// reconstruction, regression, ratio); `eta*` in unimodal mode (regression,
/// reconstruction, adversarial, variational).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub mu4: f64,
    pub mu5: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub eta4: f64,
    /// Binary cross-entropy weight of the M-AVAE sex head.
    pub sex_head: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mu1: 0.1,
            mu2: 1.0,
            mu3: 1.0,
            mu4: 1.0,
            mu5: 30.0,
            eta1: 1.0,
            eta2: 1.0,
            eta3: 0.1,
            eta4: 1.0,
            sex_head: 0.1,
        }
    }
}

impl LossWeights {
    /// Every weight zero.
    pub fn zero() -> Self {
        Self {
            mu1: 0.0,
            mu2: 0.0,
            mu3: 0.0,
            mu4: 0.0,
            mu5: 0.0,
            eta1: 0.0,
            eta2: 0.0,
            eta3: 0.0,
            eta4: 0.0,
            sex_head: 0.0,
        }
    }

    fn named(&self) -> [(&'static str, f64); 10] {
        [
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("mu3", self.mu3),
            ("mu4", self.mu4),
            ("mu5", self.mu5),
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("eta3", self.eta3),
            ("eta4", self.eta4),
            ("sex_head", self.sex_head),
        ]
    }

    /// Rejects negative or non-finite weights.
    pub fn check_non_negative(&self) -> Result<(), LossError> {
        for (name, value) in self.named() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(LossError::NegativeWeight { name, value });
            }
        }
        Ok(())
    }

    /// Non-negative with at least one positive weight.
    pub fn validate(&self) -> Result<(), LossError> {
        self.check_non_negative()?;
        if self.named().iter().all(|(_, v)| *v == 0.0) {
            return Err(LossError::AllZero);
        }
        Ok(())
    }

    /// Multipliers for each term under `mode`, before variant gating.
    pub fn coefficients(&self, mode: Mode) -> Coefficients {
        match mode {
            Mode::Multimodal => Coefficients {
                adv: self.mu1,
                var: self.mu2,
                rec: self.mu3,
                reg: self.mu4,
                ratio: self.mu5,
                sex: self.sex_head,
            },
            Mode::Unimodal => Coefficients {
                adv: self.eta3,
                var: self.eta4,
                rec: self.eta2,
                reg: self.eta1,
                ratio: 0.0,
                sex: self.sex_head,
            },
        }
    }

    /// Coefficients with terms the variant does not use set to zero.
    pub fn gated(&self, mode: Mode, variant: Variant) -> Coefficients {
        let c = self.coefficients(mode);
        let on = |flag: bool, w: f64| if flag { w } else { 0.0 };
        Coefficients {
            adv: on(variant.adversarial(), c.adv),
            var: on(variant.variational(), c.var),
            rec: c.rec,
            reg: c.reg,
            ratio: on(variant.uses_ratio() && mode == Mode::Multimodal, c.ratio),
            sex: on(variant.sex_head(), c.sex),
        }
    }
}

/// Per-term multipliers of the total objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coefficients {
    pub adv: f64,
    pub var: f64,
    pub rec: f64,
    pub reg: f64,
    pub ratio: f64,
    pub sex: f64,
}

/// Unweighted term values; absent terms are zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub adv: f64,
    pub var: f64,
    pub rec: f64,
    pub reg: f64,
    pub ratio: f64,
    pub sex: f64,
}

/// Unweighted components, their weighted total and the discriminator objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub adv: f64,
    pub var: f64,
    pub rec: f64,
    pub reg: f64,
    pub ratio: f64,
    pub sex: f64,
    pub total: f64,
    pub disc_loss: f64,
}

impl LossBreakdown {
    pub fn parts(&self) -> LossParts {
        LossParts {
            adv: self.adv,
            var: self.var,
            rec: self.rec,
            reg: self.reg,
            ratio: self.ratio,
            sex: self.sex,
        }
    }
}

/// Weighted objective from unweighted parts. Unimodal mode ignores the ratio term.
pub fn total_loss(
    parts: &LossParts,
    w: &LossWeights,
    mode: Mode,
) -> Result<LossBreakdown, LossError> {
    w.check_non_negative()?;
    Ok(combine(parts, &w.coefficients(mode)))
}

/// Weighted objective under explicit coefficients.
pub fn combine(parts: &LossParts, c: &Coefficients) -> LossBreakdown {
    let ratio = if c.ratio == 0.0 { 0.0 } else { parts.ratio };
    let total = c.adv * parts.adv
        + c.var * parts.var
        + c.rec * parts.rec
        + c.reg * parts.reg
        + c.ratio * ratio
        + c.sex * parts.sex;
    LossBreakdown {
        adv: parts.adv,
        var: parts.var,
        rec: parts.rec,
        reg: parts.reg,
        ratio,
        sex: parts.sex,
        total,
        disc_loss: 0.0,
    }
}

/// `Σ wₖ · termₖ` on the tape, skipping zero weights. Empty sums yield a constant 0.
pub fn weighted_sum(tape: &mut Tape, terms: &[(f64, Var)]) -> Result<Var, LossError> {
    let mut acc: Option<Var> = None;
    for &(w, v) in terms {
        if w == 0.0 {
            continue;
        }
        let scaled = tape.scale(v, w)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, scaled)?,
            None => scaled,
        });
    }
    Ok(match acc {
        Some(a) => a,
        None => tape.constant(crate::autodiff::Tensor::scalar(0.0)),
    })
}

fn check_probabilities(tape: &Tape, v: Var, what: &'static str) -> Result<(), LossError> {
    if let Some(&value) = tape
        .value(v)
        .data()
        .iter()
        .find(|p| !(**p >= 0.0 && **p <= 1.0))
    {
        return Err(LossError::Probability { what, value });
    }
    Ok(())
}

fn same_shape(tape: &Tape, a: Var, b: Var, what: &'static str) -> Result<(), LossError> {
    let (l, r) = (tape.value(a).shape(), tape.value(b).shape());
    if l != r {
        return Err(LossError::ShapeMismatch {
            what,
            left: l,
            right: r,
        });
    }
    Ok(())
}

/// `mean log(clamp(p))`.
fn mean_log(tape: &mut Tape, p: Var) -> Result<Var, LossError> {
    let c = tape.clamp(p, PROB_EPS, 1.0 - PROB_EPS)?;
    let l = tape.log(c)?;
    Ok(tape.mean(l)?)
}

/// `mean log(1 − clamp(p))`.
fn mean_log_complement(tape: &mut Tape, p: Var) -> Result<Var, LossError> {
    let c = tape.clamp(p, PROB_EPS, 1.0 - PROB_EPS)?;
    let n = tape.neg(c)?;
    let q = tape.offset(n, 1.0)?;
    let l = tape.log(q)?;
    Ok(tape.mean(l)?)
}

/// Non-saturating generator loss `−mean log D(fake)`.
pub fn generator_loss(tape: &mut Tape, disc_on_fake: Var) -> Result<Var, LossError> {
    check_probabilities(tape, disc_on_fake, "discriminator output on codes")?;
    let m = mean_log(tape, disc_on_fake)?;
    Ok(tape.neg(m)?)
}

/// Discriminator loss `−mean log D(prior) − mean log(1 − D(fake))`.
pub fn discriminator_loss(
    tape: &mut Tape,
    disc_on_fake: Var,
    disc_on_prior: Var,
) -> Result<Var, LossError> {
    check_probabilities(tape, disc_on_fake, "discriminator output on codes")?;
    check_probabilities(tape, disc_on_prior, "discriminator output on prior samples")?;
    let real = mean_log(tape, disc_on_prior)?;
    let fake = mean_log_complement(tape, disc_on_fake)?;
    let s = tape.add(real, fake)?;
    Ok(tape.neg(s)?)
}

/// `(gen_loss, disc_loss)` for one modality.
pub fn adversarial_losses(
    tape: &mut Tape,
    disc_on_fake: Var,
    disc_on_prior: Var,
) -> Result<(Var, Var), LossError> {
    let gen = generator_loss(tape, disc_on_fake)?;
    let disc = discriminator_loss(tape, disc_on_fake, disc_on_prior)?;
    Ok((gen, disc))
}

/// Batch mean of `Σ_dims ½(μ² + e^{logvar} − 1 − logvar)`.
pub fn kl_gaussian(tape: &mut Tape, mu: Var, logvar: Var) -> Result<Var, LossError> {
    same_shape(tape, mu, logvar, "kl_gaussian")?;
    let rows = tape.value(mu).rows() as f64;
    let mu2 = tape.square(mu)?;
    let ev = tape.exp(logvar)?;
    let a = tape.add(mu2, ev)?;
    let b = tape.sub(a, logvar)?;
    let c = tape.offset(b, -1.0)?;
    let s = tape.sum(c)?;
    Ok(tape.scale(s, 0.5 / rows)?)
}

/// `mean‖s1 − s2‖ / (mean‖d1 − d2‖ + ε)`.
pub fn ratio_loss(tape: &mut Tape, s1: Var, s2: Var, d1: Var, d2: Var) -> Result<Var, LossError> {
    same_shape(tape, s1, s2, "ratio_loss shared codes")?;
    same_shape(tape, d1, d2, "ratio_loss distinct codes")?;
    if tape.value(s1).rows() != tape.value(d1).rows() {
        return Err(LossError::ShapeMismatch {
            what: "ratio_loss rows",
            left: tape.value(s1).shape(),
            right: tape.value(d1).shape(),
        });
    }
    let ds = tape.sub(s1, s2)?;
    let ns = tape.row_norm(ds)?;
    let num = tape.mean(ns)?;
    let dd = tape.sub(d1, d2)?;
    let nd = tape.row_norm(dd)?;
    let den = tape.mean(nd)?;
    let den = tape.offset(den, RATIO_EPS)?;
    Ok(tape.div(num, den)?)
}

/// True when the distinct codes coincide and the ratio denominator is only ε.
pub fn ratio_degenerate(tape: &Tape, d1: Var, d2: Var) -> bool {
    tape.value(d1) == tape.value(d2)
}

/// Batch mean of `‖x − x̂‖²` (summed over features).
pub fn reconstruction_error(tape: &mut Tape, x: Var, x_hat: Var) -> Result<Var, LossError> {
    same_shape(tape, x, x_hat, "reconstruction")?;
    let rows = tape.value(x).rows() as f64;
    let d = tape.sub(x, x_hat)?;
    let sq = tape.square(d)?;
    let s = tape.sum(sq)?;
    Ok(tape.scale(s, 1.0 / rows)?)
}

/// Modality 1 decoded from modality 2's shared code and its own distinct code,
/// plus the symmetric term. Both decoders must be present.
#[allow(clippy::too_many_arguments)]
pub fn cross_recon_loss(
    tape: &mut Tape,
    x1: Var,
    x2: Option<Var>,
    dec1: &BoundMlp,
    dec2: Option<&BoundMlp>,
    code1: LatentCode,
    code2: Option<LatentCode>,
    mut dropout: Option<&mut Dropout<'_>>,
) -> Result<Var, LossError> {
    let (Some(x2), Some(dec2), Some(code2)) = (x2, dec2, code2) else {
        return Err(LossError::MissingModality);
    };
    let x1_hat = decode(
        tape,
        dec1,
        code2.shared,
        code1.distinct,
        dropout.as_deref_mut(),
    )?;
    let x2_hat = decode(tape, dec2, code1.shared, code2.distinct, dropout)?;
    let r1 = reconstruction_error(tape, x1, x1_hat)?;
    let r2 = reconstruction_error(tape, x2, x2_hat)?;
    Ok(tape.add(r1, r2)?)
}

/// Reconstruction of `x` from its own shared and distinct codes.
pub fn self_recon_loss(
    tape: &mut Tape,
    x: Var,
    dec: &BoundMlp,
    code: LatentCode,
    dropout: Option<&mut Dropout<'_>>,
) -> Result<Var, LossError> {
    let x_hat = decode(tape, dec, code.shared, code.distinct, dropout)?;
    reconstruction_error(tape, x, x_hat)
}

/// Batch mean of `(y − ŷ)²`.
pub fn regression_loss(tape: &mut Tape, y: Var, y_hat: Var) -> Result<Var, LossError> {
    same_shape(tape, y, y_hat, "regression")?;
    let d = tape.sub(y, y_hat)?;
    let sq = tape.square(d)?;
    Ok(tape.mean(sq)?)
}

/// `−mean[t log p + (1 − t) log(1 − p)]` with clamped probabilities.
pub fn binary_cross_entropy(tape: &mut Tape, p: Var, target: Var) -> Result<Var, LossError> {
    same_shape(tape, p, target, "binary_cross_entropy")?;
    check_probabilities(tape, p, "sex head output")?;
    let c = tape.clamp(p, PROB_EPS, 1.0 - PROB_EPS)?;
    let lp = tape.log(c)?;
    let nc = tape.neg(c)?;
    let q = tape.offset(nc, 1.0)?;
    let lq = tape.log(q)?;
    let a = tape.mul(target, lp)?;
    let nt = tape.neg(target)?;
    let t1 = tape.offset(nt, 1.0)?;
    let b = tape.mul(t1, lq)?;
    let s = tape.add(a, b)?;
    let m = tape.mean(s)?;
    Ok(tape.neg(m)?)
}

/// Loss values on plain tensors, without keeping the tape.
pub mod values {
    use super::*;
    use crate::autodiff::Tensor;

    fn run(f: impl FnOnce(&mut Tape) -> Result<Var, LossError>) -> Result<f64, LossError> {
        let mut tape = Tape::new();
        let v = f(&mut tape)?;
        Ok(tape.scalar(v)?)
    }

    /// `(gen_loss, disc_loss)`.
    pub fn adversarial_losses(fake: &Tensor, prior: &Tensor) -> Result<(f64, f64), LossError> {
        let mut tape = Tape::new();
        let f = tape.constant(fake.clone());
        let p = tape.constant(prior.clone());
        let (g, d) = super::adversarial_losses(&mut tape, f, p)?;
        Ok((tape.scalar(g)?, tape.scalar(d)?))
    }

    pub fn kl_gaussian(mu: &Tensor, logvar: &Tensor) -> Result<f64, LossError> {
        run(|t| {
            let (m, l) = (t.constant(mu.clone()), t.constant(logvar.clone()));
            super::kl_gaussian(t, m, l)
        })
    }

    pub fn ratio_loss(
        s1: &Tensor,
        s2: &Tensor,
        d1: &Tensor,
        d2: &Tensor,
    ) -> Result<f64, LossError> {
        run(|t| {
            let v: Vec<Var> = [s1, s2, d1, d2]
                .iter()
                .map(|x| t.constant((*x).clone()))
                .collect();
            super::ratio_loss(t, v[0], v[1], v[2], v[3])
        })
    }

    pub fn reconstruction_error(x: &Tensor, x_hat: &Tensor) -> Result<f64, LossError> {
        run(|t| {
            let (a, b) = (t.constant(x.clone()), t.constant(x_hat.clone()));
            super::reconstruction_error(t, a, b)
        })
    }

    pub fn regression_loss(y: &Tensor, y_hat: &Tensor) -> Result<f64, LossError> {
        run(|t| {
            let (a, b) = (t.constant(y.clone()), t.constant(y_hat.clone()));
            super::regression_loss(t, a, b)
        })
    }

    pub fn binary_cross_entropy(p: &Tensor, target: &Tensor) -> Result<f64, LossError> {
        run(|t| {
            let (a, b) = (t.constant(p.clone()), t.constant(target.clone()));
            super::binary_cross_entropy(t, a, b)
        })
    }
}
