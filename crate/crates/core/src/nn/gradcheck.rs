//! Central finite-difference gradient checking.

use super::param::{Grads, ParamId, ParamStore};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates sitting within `h` of a ReLU/max kink, where the analytic
    /// value matched a one-sided difference.
    pub kinks: usize,
    pub worst: Option<(String, usize)>,
}

impl GradCheckReport {
    pub fn merge(&mut self, other: GradCheckReport) {
        if other.max_rel_err > self.max_rel_err {
            self.max_rel_err = other.max_rel_err;
            self.worst = other.worst;
        }
        self.checked += other.checked;
        self.kinks += other.kinks;
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Compares `analytic` against central differences of `loss` for every
/// coordinate of the listed parameters (all trainable ones when `ids` is
/// empty).
pub fn check_gradients<F>(store: &mut ParamStore, analytic: &Grads, ids: &[ParamId], h: f64, loss: F) -> GradCheckReport
where
    F: Fn(&ParamStore) -> f64,
{
    let ids: Vec<ParamId> = if ids.is_empty() {
        store.ids().filter(|&id| store.param(id).trainable).collect()
    } else {
        ids.to_vec()
    };
    let f0 = loss(store);
    let mut report = GradCheckReport::default();
    for id in ids {
        let a = analytic.dense(id);
        for k in 0..a.len() {
            let orig = store.get(id).data()[k];
            store.get_mut(id).data_mut()[k] = orig + h;
            let fp = loss(store);
            store.get_mut(id).data_mut()[k] = orig - h;
            let fm = loss(store);
            store.get_mut(id).data_mut()[k] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            let ga = a.data()[k];
            let err = rel_err(ga, numeric);
            if err > 1e-4 {
                let right = (fp - f0) / h;
                let left = (f0 - fm) / h;
                let one_sided = rel_err(ga, right).min(rel_err(ga, left));
                if (right - left).abs() > 1e-6 && one_sided < 1e-3 {
                    report.kinks += 1;
                    continue;
                }
            }
            report.checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((store.param(id).name.clone(), k));
            }
        }
    }
    report
}
