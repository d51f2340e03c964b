//! Elementwise activations, softmax, and the affine layer.

use rand::Rng;

use super::param::{Grads, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    pub fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }

    pub fn forward(self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.apply(v)).collect()
    }

    /// `dx = dy ⊙ σ'(x)` given the forward output `y`.
    pub fn backward(self, y: &[f64], dy: &[f64]) -> Vec<f64> {
        y.iter().zip(dy).map(|(&y, &d)| d * self.grad_from_output(y)).collect()
    }
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    Activation::Relu.forward(x)
}

pub fn tanh(x: &[f64]) -> Vec<f64> {
    Activation::Tanh.forward(x)
}

pub fn sigmoid_vec(x: &[f64]) -> Vec<f64> {
    Activation::Sigmoid.forward(x)
}

/// Softmax of one vector.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn softmax_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
    y.iter().zip(dy).map(|(y, d)| y * (d - dot)).collect()
}

/// Row-wise softmax of a matrix (each row normalised over its columns).
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for r in 0..x.rows() {
        let s = softmax(x.row(r));
        out.row_mut(r).copy_from_slice(&s);
    }
    out
}

pub fn softmax_rows_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    let mut out = y.clone();
    for r in 0..y.rows() {
        let d = softmax_backward(y.row(r), dy.row(r));
        out.row_mut(r).copy_from_slice(&d);
    }
    out
}

/// `W x` for `W: out × in`.
pub fn matvec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    let cols = w.cols();
    debug_assert_eq!(cols, x.len());
    (0..w.rows())
        .map(|r| w.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// `Wᵀ dy`.
pub fn matvec_t(w: &Tensor, dy: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; w.cols()];
    for (r, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        for (o, &a) in out.iter_mut().zip(w.row(r)) {
            *o += a * d;
        }
    }
    out
}

/// `dW += dy xᵀ`.
pub fn outer_acc(dw: &mut Tensor, dy: &[f64], x: &[f64]) {
    for (r, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        for (g, &xv) in dw.row_mut(r).iter_mut().zip(x) {
            *g += d * xv;
        }
    }
}

pub fn add_into(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

/// Fully connected layer `y = W x + b`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        let w = store.add(format!("{name}.w"), Tensor::glorot(&[output, input], input, output, rng));
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[output]));
        Linear { w, b: Some(b), input, output }
    }

    pub fn without_bias<R: Rng>(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        let w = store.add(format!("{name}.w"), Tensor::glorot(&[output, input], input, output, rng));
        Linear { w, b: None, input, output }
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input {
            return Err(Error::Shape(format!("linear expects input {}, got {}", self.input, x.len())));
        }
        let mut y = matvec(store.get(self.w), x);
        if let Some(b) = self.b {
            add_into(&mut y, store.get(b).data());
        }
        Ok(y)
    }

    /// Accumulates parameter gradients and returns `dx`.
    pub fn backward(&self, store: &ParamStore, grads: &mut Grads, x: &[f64], dy: &[f64]) -> Vec<f64> {
        outer_acc(grads.get_mut(self.w), dy, x);
        if let Some(b) = self.b {
            add_into(grads.get_mut(b).data_mut(), dy);
        }
        matvec_t(store.get(self.w), dy)
    }

    /// Column-wise application to a `input × n` matrix.
    pub fn forward_cols(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        if x.rows() != self.input {
            return Err(Error::Shape(format!("linear expects {} rows, got {}", self.input, x.rows())));
        }
        let cols: Result<Vec<Vec<f64>>> = x.columns().iter().map(|c| self.forward(store, c)).collect();
        let cols = cols?;
        if cols.is_empty() {
            return Ok(Tensor::zeros(&[self.output, 0]));
        }
        Ok(Tensor::from_columns(&cols))
    }

    pub fn backward_cols(&self, store: &ParamStore, grads: &mut Grads, x: &Tensor, dy: &Tensor) -> Tensor {
        let dx: Vec<Vec<f64>> = (0..x.cols())
            .map(|t| self.backward(store, grads, &x.column(t), &dy.column(t)))
            .collect();
        if dx.is_empty() {
            return Tensor::zeros(&[self.input, 0]);
        }
        Tensor::from_columns(&dx)
    }
}

/// Standalone affine map on a matrix: `Y = W X + b 1ᵀ`.
pub fn affine(x: &Tensor, w: &Tensor, b: &[f64]) -> Result<Tensor> {
    if w.cols() != x.rows() || b.len() != w.rows() {
        return Err(Error::Shape(format!(
            "affine: W {:?}, X {:?}, b {}",
            w.shape(),
            x.shape(),
            b.len()
        )));
    }
    let n = x.cols();
    let mut y = Tensor::zeros(&[w.rows(), n]);
    for t in 0..n {
        let mut col = matvec(w, &x.column(t));
        add_into(&mut col, b);
        y.set_column(t, &col);
    }
    Ok(y)
}

/// Two-layer perceptron `out(σ_h(W₂ σ(W₁ x + b₁) + b₂))`.
#[derive(Clone, Copy, Debug)]
pub struct Mlp {
    pub hidden: Linear,
    pub output: Linear,
    pub hidden_act: Activation,
    pub output_act: Activation,
}

#[derive(Clone, Debug)]
pub struct MlpCache {
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    pub y: Vec<f64>,
}

impl Mlp {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        sizes: (usize, usize, usize),
        acts: (Activation, Activation),
        rng: &mut R,
    ) -> Self {
        Mlp {
            hidden: Linear::new(store, &format!("{name}.1"), sizes.0, sizes.1, rng),
            output: Linear::new(store, &format!("{name}.2"), sizes.1, sizes.2, rng),
            hidden_act: acts.0,
            output_act: acts.1,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64]) -> Result<MlpCache> {
        let h = self.hidden_act.forward(&self.hidden.forward(store, x)?);
        let y = self.output_act.forward(&self.output.forward(store, &h)?);
        Ok(MlpCache { x: x.to_vec(), h, y })
    }

    pub fn backward(&self, store: &ParamStore, grads: &mut Grads, cache: &MlpCache, dy: &[f64]) -> Vec<f64> {
        let dz2 = self.output_act.backward(&cache.y, dy);
        let dh = self.output.backward(store, grads, &cache.h, &dz2);
        let dz1 = self.hidden_act.backward(&cache.h, &dh);
        self.hidden.backward(store, grads, &cache.x, &dz1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_identity_and_shape_error() {
        let x = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = affine(&x, &Tensor::identity(2), &[0.0, 0.0]).unwrap();
        assert_eq!(y, x);
        assert!(affine(&x, &Tensor::identity(3), &[0.0; 3]).is_err());
    }

    #[test]
    fn softmax_basics() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let s = softmax(&[1000.0, 0.0, -1000.0]);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let m = softmax_rows(&Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.0, 4.0]).unwrap());
        for r in 0..2 {
            assert!((m.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn activations_stay_finite() {
        for x in [-800.0, -1.0, 0.0, 1.0, 800.0] {
            assert!(sigmoid(x).is_finite());
            assert!(softplus(x).is_finite());
        }
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(relu(&[-1.0, 2.0]), vec![0.0, 2.0]);
    }
}
