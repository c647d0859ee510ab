//! Adam optimizer over a model's visited parameter set.

use ndarray::ArrayD;

use crate::nets::{Element, SegmentationModel};

/// First/second-moment decay and epsilon use the conventional values; only
/// the learning rate is protocol-controlled.
pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

pub struct Adam<F: Element> {
    lr: F,
    beta1: F,
    beta2: F,
    eps: F,
    step: i32,
    m: Vec<ArrayD<F>>,
    v: Vec<ArrayD<F>>,
}

impl<F: Element> Adam<F> {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            lr: F::from_f64(learning_rate),
            beta1: F::from_f64(BETA1),
            beta2: F::from_f64(BETA2),
            eps: F::from_f64(EPSILON),
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One update from the gradients currently accumulated in the model.
    /// Moment state is keyed by visitation index, which is fixed for a given
    /// architecture.
    pub fn step(&mut self, model: &mut SegmentationModel<F>) {
        self.step += 1;
        let bc1 = F::one() - self.beta1.powi(self.step);
        let bc2 = F::one() - self.beta2.powi(self.step);
        let (beta1, beta2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let (m_all, v_all) = (&mut self.m, &mut self.v);
        let mut index = 0;
        model.visit_param_grads(&mut |_, mut param, grad| {
            if m_all.len() == index {
                m_all.push(ArrayD::zeros(grad.raw_dim()));
                v_all.push(ArrayD::zeros(grad.raw_dim()));
            }
            let m = &mut m_all[index];
            let v = &mut v_all[index];
            for ((p, g), (m, v)) in param
                .iter_mut()
                .zip(grad.iter())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *m = beta1 * *m + (F::one() - beta1) * *g;
                *v = beta2 * *v + (F::one() - beta2) * *g * *g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            }
            index += 1;
        });
    }
}
