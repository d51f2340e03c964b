//! Same-length 1-D convolution and range max-pooling.

use std::ops::Range;

use rand::Rng;

use super::param::{Grads, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Convolution over token positions with `⌊w/2⌋` zero padding on each side.
/// Kernel shape is `d_h × w × d_e`.
#[derive(Clone, Copy, Debug)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
    pub width: usize,
}

impl Conv1d {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, width: usize, rng: &mut R) -> Self {
        let fan_in = in_dim * width;
        let w = store.add(format!("{name}.w"), Tensor::glorot(&[out_dim, width, in_dim], fan_in, out_dim, rng));
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[out_dim]));
        Conv1d { w, b, in_dim, out_dim, width }
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        conv1d(x, store.get(self.w), store.get(self.b).data())
    }

    pub fn backward(&self, store: &ParamStore, grads: &mut Grads, x: &Tensor, dh: &Tensor) -> Tensor {
        let (dx, dw, db) = conv1d_backward(x, store.get(self.w), dh);
        grads.get_mut(self.w).add_assign(&dw);
        super::ops::add_into(grads.get_mut(self.b).data_mut(), &db);
        dx
    }
}

/// `H[f,t] = b[f] + Σ_{j,e} W[f,j,e] · X_pad[e, t+j]`.
pub fn conv1d(x: &Tensor, w: &Tensor, b: &[f64]) -> Result<Tensor> {
    let ws = w.shape();
    if ws.len() != 3 || ws[2] != x.rows() || b.len() != ws[0] {
        return Err(Error::Shape(format!("conv1d: kernel {:?}, input {:?}, bias {}", ws, x.shape(), b.len())));
    }
    let (d_h, width, d_e) = (ws[0], ws[1], ws[2]);
    let n = x.cols();
    let pad = width / 2;
    if n < 1 || width > n + 2 * pad {
        return Err(Error::Shape(format!("conv1d: width {width} too large for length {n}")));
    }
    let wd = w.data();
    let xd = x.data();
    let mut h = Tensor::zeros(&[d_h, n]);
    let hd = h.data_mut();
    for f in 0..d_h {
        for t in 0..n {
            let mut acc = b[f];
            for j in 0..width {
                let src = t + j;
                if src < pad || src - pad >= n {
                    continue;
                }
                let col = src - pad;
                let kernel = &wd[(f * width + j) * d_e..(f * width + j + 1) * d_e];
                for (e, k) in kernel.iter().enumerate() {
                    acc += k * xd[e * n + col];
                }
            }
            hd[f * n + t] = acc;
        }
    }
    Ok(h)
}

/// Returns `(dX, dW, db)`.
pub fn conv1d_backward(x: &Tensor, w: &Tensor, dh: &Tensor) -> (Tensor, Tensor, Vec<f64>) {
    let ws = w.shape();
    let (d_h, width, d_e) = (ws[0], ws[1], ws[2]);
    let n = x.cols();
    let pad = width / 2;
    let (wd, xd, gd) = (w.data(), x.data(), dh.data());
    let mut dx = Tensor::zeros(&[d_e, n]);
    let mut dw = Tensor::zeros(ws);
    let mut db = vec![0.0; d_h];
    {
        let dxd = dx.data_mut();
        let dwd = dw.data_mut();
        for f in 0..d_h {
            for t in 0..n {
                let g = gd[f * n + t];
                db[f] += g;
                if g == 0.0 {
                    continue;
                }
                for j in 0..width {
                    let src = t + j;
                    if src < pad || src - pad >= n {
                        continue;
                    }
                    let col = src - pad;
                    let base = (f * width + j) * d_e;
                    for e in 0..d_e {
                        dwd[base + e] += g * xd[e * n + col];
                        dxd[e * n + col] += g * wd[base + e];
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

/// Per-row max over the columns in `cols`. An empty range yields zeros and
/// no argmax.
pub fn max_pool(h: &Tensor, cols: Range<usize>) -> Result<(Vec<f64>, Vec<Option<usize>>)> {
    let d = h.rows();
    if cols.is_empty() {
        return Ok((vec![0.0; d], vec![None; d]));
    }
    if cols.end > h.cols() {
        return Err(Error::Shape(format!("pool range {cols:?} exceeds length {}", h.cols())));
    }
    let mut out = Vec::with_capacity(d);
    let mut arg = Vec::with_capacity(d);
    for r in 0..d {
        let row = h.row(r);
        let mut best = cols.start;
        for c in cols.clone() {
            if row[c] > row[best] {
                best = c;
            }
        }
        out.push(row[best]);
        arg.push(Some(best));
    }
    Ok((out, arg))
}

/// Inclusive-bounds form: columns `lo..=hi`; `lo > hi` is the empty segment.
pub fn max_pool_range(h: &Tensor, lo: usize, hi: usize) -> Result<(Vec<f64>, Vec<Option<usize>>)> {
    if lo > hi {
        return max_pool(h, 0..0);
    }
    max_pool(h, lo..hi + 1)
}

/// Routes `dy` to the argmax positions of `dh`.
pub fn max_pool_backward(dh: &mut Tensor, argmax: &[Option<usize>], dy: &[f64]) {
    for (r, (a, g)) in argmax.iter().zip(dy).enumerate() {
        if let Some(c) = a {
            let v = dh.at(r, *c) + g;
            dh.set(r, *c, v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_convolution() {
        let x = Tensor::from_vec(&[1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let w = Tensor::from_vec(&[1, 3, 1], vec![1.0, 0.0, 0.0]).unwrap();
        let h = conv1d(&x, &w, &[0.0]).unwrap();
        assert_eq!(h.data(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn pointwise_identity() {
        let x = Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 4.0, -1.0]).unwrap();
        let w = Tensor::from_vec(&[2, 1, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(conv1d(&x, &w, &[0.0, 0.0]).unwrap(), x);
    }

    #[test]
    fn conv_errors() {
        let x = Tensor::zeros(&[2, 0]);
        let w = Tensor::zeros(&[1, 3, 2]);
        assert!(conv1d(&x, &w, &[0.0]).is_err());
        let x = Tensor::zeros(&[3, 4]);
        assert!(conv1d(&x, &w, &[0.0]).is_err());
    }

    #[test]
    fn pooling() {
        let h = Tensor::from_vec(&[1, 3], vec![1.0, 5.0, 2.0]).unwrap();
        assert_eq!(max_pool_range(&h, 0, 2).unwrap().0, vec![5.0]);
        assert_eq!(max_pool_range(&h, 2, 2).unwrap().0, vec![2.0]);
        let (v, a) = max_pool_range(&h, 1, 0).unwrap();
        assert_eq!(v, vec![0.0]);
        assert_eq!(a, vec![None]);
        assert!(max_pool_range(&h, 0, 3).is_err());
        let mut dh = Tensor::zeros(&[1, 3]);
        let (_, a) = max_pool_range(&h, 0, 2).unwrap();
        max_pool_backward(&mut dh, &a, &[1.5]);
        assert_eq!(dh.data(), &[0.0, 1.5, 0.0]);
    }
}
