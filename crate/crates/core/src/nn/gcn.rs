use rand::Rng;

use super::ops::{add_into, matvec, matvec_t, outer_acc};
use super::param::{Grads, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Graph convolution `h_i = ReLU(Σ_j Ã_ij W h_j + b)` over `d × n` inputs.
#[derive(Clone, Copy, Debug)]
pub struct GcnLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

#[derive(Clone, Debug)]
pub struct GcnCache {
    input: Tensor,
    output: Tensor,
}

impl GcnLayer {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        let w = store.add(format!("{name}.w"), Tensor::glorot(&[output, input], input, output, rng));
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[output]));
        GcnLayer { w, b, input, output }
    }

    pub fn forward(&self, store: &ParamStore, h_prev: &Tensor, adj: &Tensor) -> Result<(Tensor, GcnCache)> {
        let out = gcn_layer(h_prev, adj, store.get(self.w), store.get(self.b).data())?;
        Ok((out.clone(), GcnCache { input: h_prev.clone(), output: out }))
    }

    pub fn backward(&self, store: &ParamStore, grads: &mut Grads, cache: &GcnCache, adj: &Tensor, dout: &Tensor) -> Tensor {
        let w = store.get(self.w);
        let n = cache.input.cols();
        // dM = dOut ⊙ 1[out > 0]
        let mut dm = dout.clone();
        for (g, &y) in dm.data_mut().iter_mut().zip(cache.output.data()) {
            if y <= 0.0 {
                *g = 0.0;
            }
        }
        let db = grads.get_mut(self.b).data_mut();
        for i in 0..n {
            add_into(db, &dm.column(i));
        }
        // dZ[:, j] = Σ_i Ã_ij dM[:, i]
        let mut dh = Tensor::zeros(&[self.input, n]);
        let dmc = dm.columns();
        for j in 0..n {
            let mut dz = vec![0.0; self.output];
            for (i, col) in dmc.iter().enumerate() {
                let a = adj.at(i, j);
                if a != 0.0 {
                    for (z, g) in dz.iter_mut().zip(col) {
                        *z += a * g;
                    }
                }
            }
            outer_acc(grads.get_mut(self.w), &dz, &cache.input.column(j));
            dh.set_column(j, &matvec_t(w, &dz));
        }
        dh
    }
}

/// Stand-alone forward pass of one GCN layer with ReLU.
pub fn gcn_layer(h_prev: &Tensor, adj: &Tensor, w: &Tensor, b: &[f64]) -> Result<Tensor> {
    let n = h_prev.cols();
    if adj.shape() != [n, n] || w.cols() != h_prev.rows() || b.len() != w.rows() {
        return Err(Error::Shape(format!(
            "gcn: H {:?}, Ã {:?}, W {:?}, b {}",
            h_prev.shape(),
            adj.shape(),
            w.shape(),
            b.len()
        )));
    }
    let z: Vec<Vec<f64>> = (0..n).map(|j| matvec(w, &h_prev.column(j))).collect();
    let mut out = Tensor::zeros(&[w.rows(), n]);
    for i in 0..n {
        let mut m = b.to_vec();
        for (j, zj) in z.iter().enumerate() {
            let a = adj.at(i, j);
            if a != 0.0 {
                for (acc, v) in m.iter_mut().zip(zj) {
                    *acc += a * v;
                }
            }
        }
        for v in &mut m {
            *v = v.max(0.0);
        }
        out.set_column(i, &m);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_propagation() {
        let h = Tensor::from_vec(&[2, 3], vec![1.0, 0.0, 2.0, 3.0, 0.5, 0.0]).unwrap();
        let out = gcn_layer(&h, &Tensor::identity(3), &Tensor::identity(2), &[0.0, 0.0]).unwrap();
        assert_eq!(out, h);
    }

    #[test]
    fn two_node_average() {
        let h = Tensor::from_vec(&[1, 2], vec![2.0, 4.0]).unwrap();
        let adj = Tensor::from_vec(&[2, 2], vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let w = Tensor::from_vec(&[1, 1], vec![1.0]).unwrap();
        let out = gcn_layer(&h, &adj, &w, &[0.0]).unwrap();
        assert_eq!(out.data(), &[3.0, 3.0]);
        let out = gcn_layer(&h, &adj, &w, &[-3.5]).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0]);
        assert!(gcn_layer(&h, &Tensor::identity(3), &w, &[0.0]).is_err());
    }
}
