//! Adam with bias correction, over flat f32 tensors aligned with a
//! parameter list by position.

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        AdamState {
            t: 0,
            m: params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update: m,v ← EMA(grad, grad²); params −= lr·m̂/(√v̂+ε) with
    /// bias-corrected m̂, v̂. Correction factors are computed in f64 —
    /// (1−βᵗ) underflows f32 precision quickly for β close to 1.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], hp: AdamHyper) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::Shape(format!(
                "adam arity mismatch: {} params, {} grads, state for {}",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        self.t += 1;
        let c1 = 1.0 - (hp.beta1 as f64).powi(self.t as i32);
        let c2 = 1.0 - (hp.beta2 as f64).powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if p.shape() != g.shape() {
                return Err(Error::Shape(format!(
                    "adam grad shape {:?} against param {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            for ((pv, &gv), (mv, vv)) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
            {
                *mv = hp.beta1 * *mv + (1.0 - hp.beta1) * gv;
                *vv = hp.beta2 * *vv + (1.0 - hp.beta2) * gv * gv;
                let m_hat = (*mv as f64) / c1;
                let v_hat = (*vv as f64) / c2;
                *pv -= (hp.lr as f64 * m_hat / (v_hat.sqrt() + hp.eps as f64)) as f32;
            }
        }
        Ok(())
    }
}
