use crate::error::{Result, TensorError};
use crate::params::{Gradients, ParamStore};
use crate::tensor::Tensor;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay, applied as `p ← p − lr·wd·p` before the
    /// moment update.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Moment estimates and step counter for every parameter of a store.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros = || -> Vec<Tensor> {
            store
                .iter()
                .map(|(_, _, t)| Tensor::zeros(t.rows(), t.cols()))
                .collect()
        };
        Self {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    /// Rebuilds a state from saved moments (checkpoint resume).
    pub fn from_parts(
        config: AdamConfig,
        step: u64,
        first: Vec<Tensor>,
        second: Vec<Tensor>,
    ) -> Self {
        Self {
            config,
            step,
            first,
            second,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.second
    }

    /// One bias-corrected Adam update of every parameter in `store`.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        if grads.len() != store.len() || self.first.len() != store.len() {
            return Err(TensorError::Shape {
                op: "adam_step",
                lhs: vec![store.len()],
                rhs: vec![grads.len(), self.first.len()],
            });
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let g = grads.get(id);
            let p = store.get_mut(id);
            if p.shape() != g.shape() {
                return Err(TensorError::Shape {
                    op: "adam_step",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            let m = &mut self.first[id.index()];
            let v = &mut self.second[id.index()];
            let (pd, gd) = (p.data_mut(), g.data());
            for i in 0..pd.len() {
                if weight_decay > 0.0 {
                    pd[i] -= lr * weight_decay * pd[i];
                }
                let gi = gd[i];
                let mi = beta1 * m.data()[i] + (1.0 - beta1) * gi;
                let vi = beta2 * v.data()[i] + (1.0 - beta2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let mhat = mi / bc1;
                let vhat = vi / bc2;
                pd[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(x: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("x", Tensor::scalar(x)).unwrap();
        s
    }

    fn grads_of(g: f64) -> Gradients {
        Gradients::from_vec(vec![Tensor::scalar(g)])
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut store = scalar_store(1.5);
        let mut adam = AdamState::new(AdamConfig::with_lr(0.1), &store);
        let g = grads_of(0.0);
        adam.step(&mut store, &g).unwrap();
        assert_eq!(store.get(store.id("x").unwrap()).data()[0], 1.5);
    }

    /// Hand-rolled Adam recurrence for a scalar with constant gradient.
    fn scripted_adam(x0: f64, g: f64, lr: f64, steps: usize) -> Vec<f64> {
        let (b1, b2, eps) = (0.9_f64, 0.999_f64, 1e-8);
        let (mut m, mut v, mut x) = (0.0, 0.0, x0);
        let mut trace = Vec::new();
        for t in 1..=steps {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            x -= lr * mh / (vh.sqrt() + eps);
            trace.push(x);
        }
        trace
    }

    #[test]
    fn first_step_has_magnitude_lr() {
        let mut store = scalar_store(0.0);
        let mut adam = AdamState::new(AdamConfig::with_lr(0.1), &store);
        adam.step(&mut store, &grads_of(1.0)).unwrap();
        let x = store.get(store.id("x").unwrap()).data()[0];
        assert!((x + 0.1 / (1.0 + 1e-8)).abs() < 1e-15, "x = {x}");
    }

    #[test]
    fn two_steps_match_scripted_trace() {
        let mut store = scalar_store(0.3);
        let mut adam = AdamState::new(AdamConfig::with_lr(0.05), &store);
        let expected = scripted_adam(0.3, 0.7, 0.05, 2);
        for want in expected {
            adam.step(&mut store, &grads_of(0.7)).unwrap();
            let x = store.get(store.id("x").unwrap()).data()[0];
            assert_eq!(x, want);
        }
        assert_eq!(adam.step_count(), 2);
    }

    #[test]
    fn weight_decay_is_decoupled() {
        let mut store = scalar_store(2.0);
        let cfg = AdamConfig {
            weight_decay: 0.5,
            ..AdamConfig::with_lr(0.1)
        };
        let mut adam = AdamState::new(cfg, &store);
        adam.step(&mut store, &grads_of(0.0)).unwrap();
        let x = store.get(store.id("x").unwrap()).data()[0];
        assert_eq!(x, 2.0 - 0.1 * 0.5 * 2.0);
    }
}
