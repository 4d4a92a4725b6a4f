use super::params::ParamStore;
use super::tensor::Tensor;

/// Adam moment state for one parameter store.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        Self::with_betas(store, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(store: &ParamStore, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Tensor> = store
            .values()
            .iter()
            .map(|t| Tensor::zeros(t.shape()))
            .collect();
        Self {
            lr,
            beta1,
            beta2,
            eps,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one bias-corrected update. `grads` must follow store order.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor]) {
        assert_eq!(grads.len(), store.len(), "one gradient per parameter");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, param) in store.values_mut().iter_mut().enumerate() {
            let g = grads[k].data();
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            for (i, p) in param.data_mut().iter_mut().enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                *p -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// Sums per-item gradient lists in the given order and scales by `1/n`.
pub fn mean_gradients(per_item: &[Vec<Tensor>]) -> Vec<Tensor> {
    let mut out: Vec<Tensor> = per_item[0].clone();
    for item in &per_item[1..] {
        for (o, g) in out.iter_mut().zip(item) {
            o.add_assign(g).expect("gradient shapes agree");
        }
    }
    let scale = 1.0 / per_item.len() as f64;
    for o in &mut out {
        *o = o.scale(scale);
    }
    out
}
