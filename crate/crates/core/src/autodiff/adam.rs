//! Adam optimiser with bias-corrected first and second moments.

use super::store::ParamStore;
use super::tape::ParamGrads;
use super::tensor::{Tensor, TensorError};

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter moment estimates, aligned slot-by-slot with one store.
#[derive(Debug, Clone)]
pub struct AdamState {
    cfg: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore, cfg: AdamConfig) -> AdamState {
        let zeros_like = |slot: usize| {
            let t = store.tensor_at(slot);
            Tensor::zeros(t.rows(), t.cols())
        };
        AdamState {
            cfg,
            m: (0..store.len()).map(zeros_like).collect(),
            v: (0..store.len()).map(zeros_like).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update. Slots without a gradient are treated as zero
    /// gradient: their moments decay but the values barely move.
    pub fn update(&mut self, store: &mut ParamStore, grads: &ParamGrads) -> Result<(), TensorError> {
        assert_eq!(grads.len(), self.m.len(), "gradient/optimiser slot count");
        self.step += 1;
        let t = self.step as i32;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for slot in 0..self.m.len() {
            let g = grads.dense(store, slot);
            let p = store.tensor_at_mut(slot);
            if p.shape() != g.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam_update",
                    lhs: p.shape(),
                    rhs: g.shape(),
                });
            }
            let m = self.m[slot].data_mut();
            let v = self.v[slot].data_mut();
            for ((p, &g), (m, v)) in p
                .data_mut()
                .iter_mut()
                .zip(g.data().iter())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::tape::Tape;

    #[test]
    fn first_step_moves_each_element_by_roughly_lr() {
        // With constant gradient g, bias correction gives m_hat = g and
        // v_hat = g^2, so the first update is lr * g / (|g| + eps) ~ lr*sign(g).
        let mut store = ParamStore::new();
        store
            .insert("w", Tensor::row(vec![1.0, -2.0, 0.5]))
            .unwrap();
        let before: Vec<f64> = store.tensor_at(0).data().to_vec();

        let mut tape = Tape::new();
        let ids = tape.bind(&store).unwrap();
        let g = tape.constant(Tensor::row(vec![0.3, -4.0, 7.0]));
        let prod = tape.mul(ids[0], g).unwrap();
        let loss = tape.sum_all(prod);
        let grads = tape.backward(loss).unwrap();

        let cfg = AdamConfig::default();
        let mut adam = AdamState::new(&store, cfg.clone());
        adam.update(&mut store, &grads).unwrap();
        let signs = [1.0, -1.0, 1.0];
        for (i, (&b, &a)) in before
            .iter()
            .zip(store.tensor_at(0).data().iter())
            .enumerate()
        {
            let step = b - a;
            assert!(
                (step - signs[i] * cfg.lr).abs() < 1e-6,
                "element {i}: step {step}"
            );
        }
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut store = ParamStore::new();
        store.insert("a", Tensor::scalar(5.0)).unwrap();
        store.insert("b", Tensor::scalar(-3.0)).unwrap();

        // Loss touches only `a`, so `b` gets no gradient entry at all.
        let mut tape = Tape::new();
        let ids = tape.bind(&store).unwrap();
        let sq = tape.square(ids[0]);
        let loss = tape.sum_all(sq);
        let grads = tape.backward(loss).unwrap();

        let mut adam = AdamState::new(&store, AdamConfig::default());
        adam.update(&mut store, &grads).unwrap();
        assert_eq!(store.tensor_at(1).item().unwrap(), -3.0);
        assert!(store.tensor_at(0).item().unwrap() < 5.0);
    }
}
