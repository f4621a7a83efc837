//! Adam with bias correction, one moment pair per parameter tensor.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)] // float methods come from the trait in no_std builds
use num_traits::Float;
use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("non-finite gradient for parameter '{0}'")]
    NonFiniteGradient(String),
    #[error("gradient shape {got:?} does not match parameter '{name}' shape {expected:?}")]
    ShapeMismatch { name: String, expected: Vec<usize>, got: Vec<usize> },
    #[error("optimizer tracks {tracked} parameters, got {got}")]
    ParameterCount { tracked: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates for one parameter group.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
    hyper: AdamHyper,
}

impl AdamState {
    pub fn new(shapes: &[&[usize]], hyper: AdamHyper) -> Self {
        let m = shapes.iter().map(|s| Tensor::zeros(s.to_vec())).collect::<Vec<_>>();
        let v = m.clone();
        Self { m, v, step: 0, hyper }
    }

    pub fn for_params(params: &[&Tensor], hyper: AdamHyper) -> Self {
        let shapes: Vec<&[usize]> = params.iter().map(|p| p.shape()).collect();
        Self::new(&shapes, hyper)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn hyper(&self) -> AdamHyper {
        self.hyper
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.m, &self.v)
    }

    /// Rebuild from serialized moments; used by checkpoint loading.
    pub fn from_moments(m: Vec<Tensor>, v: Vec<Tensor>, step: u64, hyper: AdamHyper) -> Self {
        assert_eq!(m.len(), v.len());
        Self { m, v, step, hyper }
    }

    /// One bias-corrected update. `names` are only used in errors; a
    /// non-finite gradient aborts before any parameter is touched.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor],
        grads: &[Tensor],
        names: &[&str],
        lr: f64,
    ) -> Result<(), OptimError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(OptimError::ParameterCount { tracked: self.m.len(), got: params.len().max(grads.len()) });
        }
        for ((p, g), name) in params.iter().zip(grads).zip(names) {
            if g.shape() != p.shape() {
                return Err(OptimError::ShapeMismatch {
                    name: String::from(*name),
                    expected: p.shape().to_vec(),
                    got: g.shape().to_vec(),
                });
            }
            if !g.all_finite() {
                return Err(OptimError::NonFiniteGradient(String::from(*name)));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let AdamHyper { beta1, beta2, eps } = self.hyper;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let pd = p.data_mut();
            for (((pv, &gv), mv), vv) in
                pd.iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut())
            {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
