use super::param::{Grads, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Adam with bias correction. Frozen parameters and untouched gradients are
/// skipped.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Option<Tensor>>,
    v: Vec<Option<Tensor>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update. A non-finite gradient aborts before any
    /// parameter changes.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads) -> Result<()> {
        for (i, g) in grads.slots().iter().enumerate() {
            if let Some(g) = g {
                if !g.is_finite() {
                    return Err(Error::NonFinite(format!("gradient of `{}`", store.iter().nth(i).map_or("?", |p| &p.name))));
                }
            }
        }
        if self.m.len() < store.len() {
            self.m.resize(store.len(), None);
            self.v.resize(store.len(), None);
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for id in store.ids().collect::<Vec<_>>() {
            if !store.param(id).trainable {
                continue;
            }
            let Some(g) = grads.get(id) else { continue };
            let shape = g.shape().to_vec();
            let m = self.m[id.0].get_or_insert_with(|| Tensor::zeros(&shape));
            let v = self.v[id.0].get_or_insert_with(|| Tensor::zeros(&shape));
            let value = store.get_mut(id);
            for (((w, &gi), mi), vi) in value
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bowl(steps: usize) -> f64 {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::vector(vec![1.0]));
        let mut adam = Adam::new(0.05);
        for _ in 0..steps {
            let mut g = Grads::new(&store);
            g.get_mut(x).data_mut()[0] = 2.0 * store.get(x).data()[0];
            adam.step(&mut store, &g).unwrap();
        }
        store.get(x).data()[0]
    }

    #[test]
    fn quadratic_bowl_converges() {
        let x = bowl(500);
        assert!(x * x < 1e-3, "x = {x}");
        assert_eq!(bowl(500).to_bits(), x.to_bits());
    }

    #[test]
    fn zero_gradient_is_fixed_point_and_nan_fails() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::vector(vec![0.3, -2.0]));
        let before = store.clone();
        let mut adam = Adam::new(0.1);
        let mut g = Grads::new(&store);
        g.get_mut(x);
        adam.step(&mut store, &g).unwrap();
        assert_eq!(store, before);
        g.get_mut(x).data_mut()[1] = f64::NAN;
        assert!(matches!(adam.step(&mut store, &g), Err(Error::NonFinite(_))));
        assert_eq!(store, before);
    }
}
