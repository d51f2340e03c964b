//! LSTM cell with explicit back-propagation through time, and a
//! bidirectional runner.

use rand::Rng;

use super::ops::{add_into, matvec, matvec_t, outer_acc, sigmoid};
use super::param::{Grads, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Gate rows are laid out `[input; forget; candidate; output]`.
#[derive(Clone, Copy, Debug)]
pub struct Lstm {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Clone, Debug)]
struct Step {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LstmCache {
    steps: Vec<Step>,
}

impl Lstm {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let w_x = store.add(format!("{name}.w_x"), Tensor::glorot(&[4 * hidden, input], input, hidden, rng));
        let w_h = store.add(format!("{name}.w_h"), Tensor::glorot(&[4 * hidden, hidden], hidden, hidden, rng));
        let mut b = Tensor::zeros(&[4 * hidden]);
        // forget-gate bias starts at 1
        for v in &mut b.data_mut()[hidden..2 * hidden] {
            *v = 1.0;
        }
        let b = store.add(format!("{name}.b"), b);
        Lstm { w_x, w_h, b, input, hidden }
    }

    /// Runs the recurrence over `xs` from zero state; returns hidden states.
    pub fn forward(&self, store: &ParamStore, xs: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, LstmCache)> {
        let hd = self.hidden;
        let (wx, wh, b) = (store.get(self.w_x), store.get(self.w_h), store.get(self.b));
        let mut h = vec![0.0; hd];
        let mut c = vec![0.0; hd];
        let mut outs = Vec::with_capacity(xs.len());
        let mut steps = Vec::with_capacity(xs.len());
        for x in xs {
            if x.len() != self.input {
                return Err(Error::Shape(format!("lstm expects input {}, got {}", self.input, x.len())));
            }
            let mut z = matvec(wx, x);
            add_into(&mut z, &matvec(wh, &h));
            add_into(&mut z, b.data());
            let i: Vec<f64> = z[..hd].iter().map(|&v| sigmoid(v)).collect();
            let f: Vec<f64> = z[hd..2 * hd].iter().map(|&v| sigmoid(v)).collect();
            let g: Vec<f64> = z[2 * hd..3 * hd].iter().map(|v| v.tanh()).collect();
            let o: Vec<f64> = z[3 * hd..].iter().map(|&v| sigmoid(v)).collect();
            let c_new: Vec<f64> = (0..hd).map(|k| f[k] * c[k] + i[k] * g[k]).collect();
            let tanh_c: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
            let h_new: Vec<f64> = (0..hd).map(|k| o[k] * tanh_c[k]).collect();
            steps.push(Step { x: x.clone(), h_prev: h, c_prev: c, i, f, g, o, tanh_c });
            outs.push(h_new.clone());
            h = h_new;
            c = c_new;
        }
        Ok((outs, LstmCache { steps }))
    }

    /// `dhs[t]` is the loss gradient w.r.t. output `t`. Returns `dxs`.
    pub fn backward(&self, store: &ParamStore, grads: &mut Grads, cache: &LstmCache, dhs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let hd = self.hidden;
        let (wx, wh) = (store.get(self.w_x), store.get(self.w_h));
        let n = cache.steps.len();
        let mut dxs = vec![Vec::new(); n];
        let mut dh_next = vec![0.0; hd];
        let mut dc_next = vec![0.0; hd];
        let mut dwx = Tensor::zeros(wx.shape());
        let mut dwh = Tensor::zeros(wh.shape());
        let mut db = vec![0.0; 4 * hd];
        for t in (0..n).rev() {
            let s = &cache.steps[t];
            let dh: Vec<f64> = (0..hd).map(|k| dhs[t][k] + dh_next[k]).collect();
            let mut dz = vec![0.0; 4 * hd];
            let mut dc = vec![0.0; hd];
            for k in 0..hd {
                let d_o = dh[k] * s.tanh_c[k];
                dc[k] = dc_next[k] + dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
                let d_i = dc[k] * s.g[k];
                let d_f = dc[k] * s.c_prev[k];
                let d_g = dc[k] * s.i[k];
                dz[k] = d_i * s.i[k] * (1.0 - s.i[k]);
                dz[hd + k] = d_f * s.f[k] * (1.0 - s.f[k]);
                dz[2 * hd + k] = d_g * (1.0 - s.g[k] * s.g[k]);
                dz[3 * hd + k] = d_o * s.o[k] * (1.0 - s.o[k]);
            }
            outer_acc(&mut dwx, &dz, &s.x);
            outer_acc(&mut dwh, &dz, &s.h_prev);
            add_into(&mut db, &dz);
            dxs[t] = matvec_t(wx, &dz);
            dh_next = matvec_t(wh, &dz);
            dc_next = (0..hd).map(|k| dc[k] * s.f[k]).collect();
        }
        grads.get_mut(self.w_x).add_assign(&dwx);
        grads.get_mut(self.w_h).add_assign(&dwh);
        add_into(grads.get_mut(self.b).data_mut(), &db);
        dxs
    }
}

/// Forward and backward LSTMs; output `t` is `[h_fwd(t); h_bwd(t)]`.
#[derive(Clone, Copy, Debug)]
pub struct BiLstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

#[derive(Clone, Debug)]
pub struct BiLstmCache {
    fwd: LstmCache,
    bwd: LstmCache,
}

impl BiLstm {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        BiLstm {
            fwd: Lstm::new(store, &format!("{name}.fwd"), input, hidden, rng),
            bwd: Lstm::new(store, &format!("{name}.bwd"), input, hidden, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden
    }

    pub fn forward(&self, store: &ParamStore, xs: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, BiLstmCache)> {
        if xs.is_empty() {
            return Err(Error::Shape("bidirectional lstm needs at least one step".into()));
        }
        let (hf, cf) = self.fwd.forward(store, xs)?;
        let rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        let (mut hb, cb) = self.bwd.forward(store, &rev)?;
        hb.reverse();
        let out = hf
            .into_iter()
            .zip(hb)
            .map(|(mut a, b)| {
                a.extend(b);
                a
            })
            .collect();
        Ok((out, BiLstmCache { fwd: cf, bwd: cb }))
    }

    pub fn backward(&self, store: &ParamStore, grads: &mut Grads, cache: &BiLstmCache, douts: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let h = self.fwd.hidden;
        let df: Vec<Vec<f64>> = douts.iter().map(|d| d[..h].to_vec()).collect();
        let db: Vec<Vec<f64>> = douts.iter().rev().map(|d| d[h..].to_vec()).collect();
        let dxf = self.fwd.backward(store, grads, &cache.fwd, &df);
        let mut dxb = self.bwd.backward(store, grads, &cache.bwd, &db);
        dxb.reverse();
        dxf.into_iter()
            .zip(dxb)
            .map(|(mut a, b)| {
                add_into(&mut a, &b);
                a
            })
            .collect()
    }
}
