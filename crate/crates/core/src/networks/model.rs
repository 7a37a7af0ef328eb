use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::mlp::{stack, Activation, BoundMlp, Dropout, LayerSpec, Mlp};
use super::NetworkError;
use crate::autodiff::{Tape, Tensor, Var};
use crate::SeededRng;

/// Lower bound of the log-variance clamp.
pub const LOGVAR_MIN: f64 = -10.0;
/// Upper bound of the log-variance clamp.
pub const LOGVAR_MAX: f64 = 10.0;

/// Ablation lattice. Each step adds one ingredient to the plain autoencoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "AE")]
    Ae,
    #[serde(rename = "AAE")]
    Aae,
    #[serde(rename = "VAE")]
    Vae,
    #[serde(rename = "AVAE")]
    Avae,
    #[serde(rename = "SA-AVAE")]
    SaAvae,
    #[serde(rename = "M-AVAE")]
    MAvae,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Ae,
        Variant::Aae,
        Variant::Vae,
        Variant::Avae,
        Variant::SaAvae,
        Variant::MAvae,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ae => "AE",
            Variant::Aae => "AAE",
            Variant::Vae => "VAE",
            Variant::Avae => "AVAE",
            Variant::SaAvae => "SA-AVAE",
            Variant::MAvae => "M-AVAE",
        }
    }

    /// Shared codes are matched to the prior by a discriminator.
    pub fn adversarial(self) -> bool {
        !matches!(self, Variant::Ae | Variant::Vae)
    }

    /// Distinct codes are sampled and pulled towards N(0, I).
    pub fn variational(self) -> bool {
        !matches!(self, Variant::Ae | Variant::Aae)
    }

    /// The shared/distinct distance ratio term is active.
    pub fn uses_ratio(self) -> bool {
        matches!(self, Variant::Avae | Variant::SaAvae | Variant::MAvae)
    }

    /// Sex is appended to the regressor input.
    pub fn sex_input(self) -> bool {
        self == Variant::SaAvae
    }

    /// Sex is predicted by an auxiliary head instead.
    pub fn sex_head(self) -> bool {
        self == Variant::MAvae
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = NetworkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| NetworkError::UnknownVariant(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Multimodal,
    Unimodal,
}

/// Layer widths for every network in a bundle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub m1: usize,
    /// Modality-2 input width; `None` in unimodal mode.
    pub m2: Option<usize>,
    pub shared_dim: usize,
    pub dist_dim: usize,
    pub enc_hidden: Vec<usize>,
    pub dec_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub reg_hidden: Vec<usize>,
    pub sex_hidden: Vec<usize>,
}

impl Architecture {
    /// Default widths around a 50 + 70 latent.
    pub fn new(m1: usize, m2: Option<usize>) -> Self {
        Self {
            m1,
            m2,
            shared_dim: 50,
            dist_dim: 70,
            enc_hidden: vec![256, 128],
            dec_hidden: vec![128, 256],
            disc_hidden: vec![64, 32],
            reg_hidden: vec![128, 64],
            sex_hidden: vec![64],
        }
    }

    pub fn mode(&self) -> Mode {
        if self.m2.is_some() {
            Mode::Multimodal
        } else {
            Mode::Unimodal
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.shared_dim + self.dist_dim
    }

    /// Width of the regressor input for `variant`.
    pub fn m_width(&self, variant: Variant) -> usize {
        let per = self.shared_dim + self.dist_dim;
        let blocks = if self.m2.is_some() { 2 * per } else { per };
        blocks + usize::from(variant.sex_input())
    }

    pub fn encoder_specs(&self, input: usize) -> Vec<LayerSpec> {
        let out = self.shared_dim + 2 * self.dist_dim;
        stack(
            input,
            &self.enc_hidden,
            out,
            Activation::Tanh,
            Activation::Linear,
        )
    }

    pub fn decoder_specs(&self, output: usize) -> Vec<LayerSpec> {
        stack(
            self.latent_dim(),
            &self.dec_hidden,
            output,
            Activation::Tanh,
            Activation::Linear,
        )
    }

    pub fn discriminator_specs(&self) -> Vec<LayerSpec> {
        stack(
            self.shared_dim,
            &self.disc_hidden,
            1,
            Activation::Tanh,
            Activation::Sigmoid,
        )
    }

    pub fn regressor_specs(&self, variant: Variant) -> Vec<LayerSpec> {
        stack(
            self.m_width(variant),
            &self.reg_hidden,
            1,
            Activation::Tanh,
            Activation::Linear,
        )
    }

    pub fn sex_head_specs(&self) -> Vec<LayerSpec> {
        stack(
            self.m_width(Variant::MAvae),
            &self.sex_hidden,
            1,
            Activation::Tanh,
            Activation::Sigmoid,
        )
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.m1 == 0 || self.m2 == Some(0) || self.shared_dim == 0 || self.dist_dim == 0 {
            return Err(NetworkError::InconsistentSpecs(
                "input and latent widths must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Fixed affine map from regressor output to years: `age = mean + std · P(ℳ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgeScale {
    pub mean: f64,
    pub std: f64,
}

impl Default for AgeScale {
    fn default() -> Self {
        Self {
            mean: 0.0,
            std: 1.0,
        }
    }
}

/// Every trainable network of one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub arch: Architecture,
    pub variant: Variant,
    pub enc1: Mlp,
    pub enc2: Option<Mlp>,
    pub dec1: Mlp,
    pub dec2: Option<Mlp>,
    pub disc: Mlp,
    pub reg: Mlp,
    pub sex_head: Option<Mlp>,
    pub age_scale: AgeScale,
}

/// Builds a bundle with Glorot-uniform weights and zero biases, deterministic in `seed`.
pub fn init_params(
    arch: &Architecture,
    variant: Variant,
    seed: u64,
) -> Result<ModelBundle, NetworkError> {
    arch.validate()?;
    let mut rng = SeededRng::seed_from_u64(seed);
    let enc1 = Mlp::init(&arch.encoder_specs(arch.m1), &mut rng)?;
    let enc2 = arch
        .m2
        .map(|m2| Mlp::init(&arch.encoder_specs(m2), &mut rng))
        .transpose()?;
    let dec1 = Mlp::init(&arch.decoder_specs(arch.m1), &mut rng)?;
    let dec2 = arch
        .m2
        .map(|m2| Mlp::init(&arch.decoder_specs(m2), &mut rng))
        .transpose()?;
    let disc = Mlp::init(&arch.discriminator_specs(), &mut rng)?;
    let reg = Mlp::init(&arch.regressor_specs(variant), &mut rng)?;
    let sex_head = if variant.sex_head() {
        Some(Mlp::init(&arch.sex_head_specs(), &mut rng)?)
    } else {
        None
    };
    Ok(ModelBundle {
        arch: arch.clone(),
        variant,
        enc1,
        enc2,
        dec1,
        dec2,
        disc,
        reg,
        sex_head,
        age_scale: AgeScale::default(),
    })
}

impl ModelBundle {
    pub fn mode(&self) -> Mode {
        self.arch.mode()
    }

    /// Checks the structural invariants tying networks, mode and variant together.
    pub fn validate(&self) -> Result<(), NetworkError> {
        let a = &self.arch;
        a.validate()?;
        let check = |what: &'static str, mlp: &Mlp, specs: Vec<LayerSpec>| {
            if mlp.specs() == specs {
                Ok(())
            } else {
                Err(NetworkError::InconsistentSpecs(format!(
                    "{what} layers do not match the architecture"
                )))
            }
        };
        check("encoder 1", &self.enc1, a.encoder_specs(a.m1))?;
        check("decoder 1", &self.dec1, a.decoder_specs(a.m1))?;
        match (a.m2, &self.enc2, &self.dec2) {
            (Some(m2), Some(e), Some(d)) => {
                check("encoder 2", e, a.encoder_specs(m2))?;
                check("decoder 2", d, a.decoder_specs(m2))?;
            }
            (None, None, None) => {}
            _ => {
                return Err(NetworkError::InconsistentSpecs(
                    "modality-2 networks must be present exactly in multimodal mode".into(),
                ))
            }
        }
        check("discriminator", &self.disc, a.discriminator_specs())?;
        check("regressor", &self.reg, a.regressor_specs(self.variant))?;
        match (&self.sex_head, self.variant.sex_head()) {
            (Some(h), true) => check("sex head", h, a.sex_head_specs())?,
            (None, false) => {}
            _ => {
                return Err(NetworkError::InconsistentSpecs(
                    "sex head must be present exactly for M-AVAE".into(),
                ))
            }
        }
        Ok(())
    }

    /// Networks updated by the generator phase, in canonical order.
    pub fn generator_nets(&self) -> Vec<&Mlp> {
        let mut v = vec![&self.enc1];
        v.extend(self.enc2.as_ref());
        v.push(&self.dec1);
        v.extend(self.dec2.as_ref());
        v.push(&self.reg);
        v.extend(self.sex_head.as_ref());
        v
    }

    pub fn generator_nets_mut(&mut self) -> Vec<&mut Mlp> {
        let mut v = vec![&mut self.enc1];
        v.extend(self.enc2.as_mut());
        v.push(&mut self.dec1);
        v.extend(self.dec2.as_mut());
        v.push(&mut self.reg);
        v.extend(self.sex_head.as_mut());
        v
    }

    /// All parameter tensors: generator networks first, discriminator last.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v: Vec<&Tensor> = self
            .generator_nets()
            .into_iter()
            .flat_map(Mlp::tensors)
            .collect();
        v.extend(self.disc.tensors());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v: Vec<&mut Tensor> = Vec::new();
        for net in [&mut self.enc1]
            .into_iter()
            .chain(self.enc2.as_mut())
            .chain([&mut self.dec1])
            .chain(self.dec2.as_mut())
            .chain([&mut self.reg])
            .chain(self.sex_head.as_mut())
            .chain([&mut self.disc])
        {
            v.extend(net.tensors_mut());
        }
        v
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// All parameters flattened in [`ModelBundle::tensors`] order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.tensors()
            .into_iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<(), NetworkError> {
        let total = self.param_count();
        if values.len() != total {
            return Err(NetworkError::DimMismatch {
                what: "flat parameter vector",
                expected: total,
                found: values.len(),
            });
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Places every network on `tape`. Generator networks become leaves when
    /// `train_generator`, the discriminator when `train_disc`.
    pub fn bind(&self, tape: &mut Tape, train_generator: bool, train_disc: bool) -> BoundBundle {
        BoundBundle {
            enc1: self.enc1.bind(tape, train_generator),
            enc2: self.enc2.as_ref().map(|m| m.bind(tape, train_generator)),
            dec1: self.dec1.bind(tape, train_generator),
            dec2: self.dec2.as_ref().map(|m| m.bind(tape, train_generator)),
            reg: self.reg.bind(tape, train_generator),
            sex_head: self
                .sex_head
                .as_ref()
                .map(|m| m.bind(tape, train_generator)),
            disc: self.disc.bind(tape, train_disc),
            arch: self.arch.clone(),
            variant: self.variant,
            age_scale: self.age_scale,
        }
    }
}

/// A [`ModelBundle`] placed on a tape.
#[derive(Clone, Debug)]
pub struct BoundBundle {
    pub enc1: BoundMlp,
    pub enc2: Option<BoundMlp>,
    pub dec1: BoundMlp,
    pub dec2: Option<BoundMlp>,
    pub reg: BoundMlp,
    pub sex_head: Option<BoundMlp>,
    pub disc: BoundMlp,
    pub arch: Architecture,
    pub variant: Variant,
    pub age_scale: AgeScale,
}

impl BoundBundle {
    /// Generator-side parameter vars in the same order as [`ModelBundle::generator_nets`].
    pub fn generator_vars(&self) -> Vec<Var> {
        let mut nets = vec![&self.enc1];
        nets.extend(self.enc2.as_ref());
        nets.push(&self.dec1);
        nets.extend(self.dec2.as_ref());
        nets.push(&self.reg);
        nets.extend(self.sex_head.as_ref());
        nets.into_iter().flat_map(|n| n.vars()).collect()
    }

    pub fn disc_vars(&self) -> Vec<Var> {
        self.disc.vars().collect()
    }

    /// Every parameter var in [`ModelBundle::tensors`] order.
    pub fn all_vars(&self) -> Vec<Var> {
        let mut v = self.generator_vars();
        v.extend(self.disc_vars());
        v
    }
}

/// Encoder heads for one modality.
#[derive(Clone, Copy, Debug)]
pub struct EncoderOutput {
    pub shared: Var,
    pub dist_mu: Var,
    /// Clamped to `[LOGVAR_MIN, LOGVAR_MAX]`.
    pub dist_logvar: Var,
}

/// A latent code `[shared, distinct]`.
#[derive(Clone, Copy, Debug)]
pub struct LatentCode {
    pub shared: Var,
    pub distinct: Var,
}

impl LatentCode {
    pub fn concat(&self, tape: &mut Tape) -> Result<Var, NetworkError> {
        Ok(tape.concat(&[self.shared, self.distinct])?)
    }
}

/// One encoder pass split into shared, distinct mean and distinct log-variance blocks.
pub fn encode(
    tape: &mut Tape,
    enc: &BoundMlp,
    arch: &Architecture,
    x: Var,
    dropout: Option<&mut Dropout<'_>>,
) -> Result<EncoderOutput, NetworkError> {
    let out = enc.forward(tape, x, dropout)?;
    let width = tape.value(out).cols();
    let (s, d) = (arch.shared_dim, arch.dist_dim);
    if width != s + 2 * d {
        return Err(NetworkError::DimMismatch {
            what: "encoder output",
            expected: s + 2 * d,
            found: width,
        });
    }
    let shared = tape.slice_cols(out, 0, s)?;
    let dist_mu = tape.slice_cols(out, s, s + d)?;
    let raw = tape.slice_cols(out, s + d, s + 2 * d)?;
    let dist_logvar = tape.clamp(raw, LOGVAR_MIN, LOGVAR_MAX)?;
    Ok(EncoderOutput {
        shared,
        dist_mu,
        dist_logvar,
    })
}

/// `mu + exp(logvar / 2) ⊙ noise` with caller-supplied standard normal noise.
pub fn reparameterize(
    tape: &mut Tape,
    mu: Var,
    logvar: Var,
    noise: Var,
) -> Result<Var, NetworkError> {
    let (ms, ls, ns) = (
        tape.value(mu).shape(),
        tape.value(logvar).shape(),
        tape.value(noise).shape(),
    );
    if ms != ls || ms != ns {
        return Err(NetworkError::ShapeMismatch {
            what: "reparameterize",
            left: ms,
            right: if ms != ls { ls } else { ns },
        });
    }
    let half = tape.scale(logvar, 0.5)?;
    let sigma = tape.exp(half)?;
    let spread = tape.mul(sigma, noise)?;
    Ok(tape.add(mu, spread)?)
}

/// Reconstructs an input from a shared code and a distinct code.
pub fn decode(
    tape: &mut Tape,
    dec: &BoundMlp,
    shared: Var,
    distinct: Var,
    dropout: Option<&mut Dropout<'_>>,
) -> Result<Var, NetworkError> {
    let z = tape.concat(&[shared, distinct])?;
    dec.forward(tape, z, dropout)
}

/// Per-row probability that `code` came from the prior.
pub fn discriminate(tape: &mut Tape, disc: &BoundMlp, code: Var) -> Result<Var, NetworkError> {
    disc.forward(tape, code, None)
}

/// Regressor input `[Shared(z₁), Shared(z₂), Dist(z₁), Dist(z₂), Sex]`; absent
/// blocks are skipped.
pub fn assemble_m(
    tape: &mut Tape,
    shared1: Var,
    shared2: Option<Var>,
    dist1: Var,
    dist2: Option<Var>,
    sex: Option<Var>,
) -> Result<Var, NetworkError> {
    let mut parts = vec![shared1];
    parts.extend(shared2);
    parts.push(dist1);
    parts.extend(dist2);
    if let Some(s) = sex {
        if tape.value(s).cols() != 1 {
            return Err(NetworkError::DimMismatch {
                what: "sex column",
                expected: 1,
                found: tape.value(s).cols(),
            });
        }
        parts.push(s);
    }
    Ok(tape.concat(&parts)?)
}

/// Predicted age (`batch×1`) in years.
pub fn regress(
    tape: &mut Tape,
    reg: &BoundMlp,
    scale: AgeScale,
    m: Var,
    dropout: Option<&mut Dropout<'_>>,
) -> Result<Var, NetworkError> {
    let raw = reg.forward(tape, m, dropout)?;
    if scale == AgeScale::default() {
        return Ok(raw);
    }
    let stretched = tape.scale(raw, scale.std)?;
    Ok(tape.offset(stretched, scale.mean)?)
}
