use crate::tensor::{Gradients, ParamStore, Tensor};

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|(_, p)| Tensor::zeros(p.value.rows(), p.value.cols())).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// Parameters without a gradient are left untouched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for id in store.ids().collect::<Vec<_>>() {
            let Some(g) = grads.get(id) else { continue };
            let m = self.m[id.0].data_mut();
            let v = self.v[id.0].data_mut();
            let p = store.get_mut(id).data_mut();
            for i in 0..p.len() {
                let gi = g.data()[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    #[test]
    fn first_step_moves_by_lr() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::from_rows(&[vec![1.0, -2.0]]).unwrap());
        let mut opt = Adam::new(&store, 0.01);
        let mut t = Tape::new();
        let x = t.param(&store, w);
        let s = t.sum(x).unwrap();
        let g = t.backward(s, store.len()).unwrap();
        opt.step(&mut store, &g);
        let d = store.get(w).data();
        assert!((d[0] - 0.99).abs() < 1e-9 && (d[1] + 2.01).abs() < 1e-9);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::from_rows(&[vec![3.0, -4.0]]).unwrap());
        let mut opt = Adam::new(&store, 0.1);
        for _ in 0..500 {
            let mut t = Tape::new();
            let x = t.param(&store, w);
            let sq = t.mul(x, x).unwrap();
            let s = t.sum(sq).unwrap();
            let g = t.backward(s, store.len()).unwrap();
            opt.step(&mut store, &g);
        }
        assert!(store.get(w).max_abs() < 1e-2);
    }
}
