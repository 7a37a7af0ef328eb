use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::autodiff::Tensor;

/// Adam moments for a fixed list of parameter tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Completed steps.
    pub t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    /// Zero moments shaped like `params`.
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Tensor> = params
            .into_iter()
            .map(|p| Tensor::zeros(p.rows(), p.cols()))
            .collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }

    /// One bias-corrected Adam update preceded by decoupled weight decay
    /// `p ← p − lr·wd·p`. Nothing changes if any gradient is non-finite.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor],
        grads: &[Tensor],
        lr: f64,
        weight_decay: f64,
    ) -> Result<(), TrainError> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(TrainError::Config(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(TrainError::Optimizer(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, ((p, g), m)) in params.iter().zip(grads).zip(&self.m).enumerate() {
            if p.shape() != m.shape() || g.shape() != m.shape() {
                return Err(TrainError::Optimizer(format!(
                    "tensor {i}: parameter {:?}, gradient {:?}, moments {:?}",
                    p.shape(),
                    g.shape(),
                    m.shape()
                )));
            }
            if let Some(k) = g.data().iter().position(|x| !x.is_finite()) {
                return Err(TrainError::NonFiniteGradient {
                    tensor: i,
                    index: k,
                    value: g.data()[k],
                });
            }
        }
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let decay = lr * weight_decay;
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let pd = p.data_mut();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for k in 0..pd.len() {
                let gk = g.data()[k];
                md[k] = b1 * md[k] + (1.0 - b1) * gk;
                vd[k] = b2 * vd[k] + (1.0 - b2) * gk * gk;
                let m_hat = md[k] / c1;
                let v_hat = vd[k] / c2;
                pd[k] -= decay * pd[k];
                pd[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
