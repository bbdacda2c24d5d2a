use super::ParamStore;

/// A model bound to a fixed batch whose gradients can be checked.
pub trait Differentiable {
    fn store_count(&self) -> usize;
    fn store_mut(&mut self, i: usize) -> &mut ParamStore;
    /// Loss on the bound batch; accumulates gradients when `grad` is set.
    fn loss(&mut self, grad: bool) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

const REL_FLOOR: f64 = 1e-6;

/// Compares every analytic partial with a central difference at step `eps`.
pub fn gradcheck<M: Differentiable + ?Sized>(model: &mut M, eps: f64) -> GradReport {
    for s in 0..model.store_count() {
        model.store_mut(s).zero_grad();
    }
    model.loss(true);
    let analytic: Vec<Vec<Vec<f64>>> = (0..model.store_count())
        .map(|s| {
            model
                .store_mut(s)
                .params()
                .iter()
                .map(|p| p.grad.iter().copied().collect())
                .collect()
        })
        .collect();

    let mut report = GradReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        checked: 0,
    };
    for (s, store_grads) in analytic.iter().enumerate() {
        for (p, grads) in store_grads.iter().enumerate() {
            for (k, &a) in grads.iter().enumerate() {
                let orig = nth(model.store_mut(s), p, k);
                set_nth(model.store_mut(s), p, k, orig + eps);
                let up = model.loss(false);
                set_nth(model.store_mut(s), p, k, orig - eps);
                let down = model.loss(false);
                set_nth(model.store_mut(s), p, k, orig);
                let numeric = (up - down) / (2.0 * eps);
                let err = relative_error(a, numeric, REL_FLOOR);
                report.checked += 1;
                if err > report.max_rel_error {
                    report.max_rel_error = err;
                    report.worst_param = model.store_mut(s).params()[p].name.clone();
                }
            }
        }
    }
    report
}

fn nth(store: &mut ParamStore, p: usize, k: usize) -> f64 {
    *store.params_mut()[p].value.iter().nth(k).expect("index in range")
}

fn set_nth(store: &mut ParamStore, p: usize, k: usize, v: f64) {
    *store.params_mut()[p].value.iter_mut().nth(k).expect("index in range") = v;
}

#[cfg(test)]
mod tests {
    use super::super::{mse, relu, relu_backward, softmax_nll, Dense, Lstm, Mat};
    use super::*;
    use crate::seed;
    use ndarray::Array2;

    struct Mlp {
        store: ParamStore,
        l1: Dense,
        l2: Dense,
        x: Mat,
        y: Vec<f64>,
    }

    impl Differentiable for Mlp {
        fn store_count(&self) -> usize {
            1
        }
        fn store_mut(&mut self, _: usize) -> &mut ParamStore {
            &mut self.store
        }
        fn loss(&mut self, grad: bool) -> f64 {
            let pre = self.l1.forward(&self.store, &self.x);
            let h = relu(&pre);
            let out = self.l2.forward(&self.store, &h);
            let (l, d) = mse(&out, &self.y);
            if grad {
                let dh = self.l2.backward(&mut self.store, &h, &d);
                let dpre = relu_backward(&pre, &dh);
                self.l1.accumulate(&mut self.store, &self.x, &dpre);
            }
            l
        }
    }

    #[test]
    fn dense_relu_gradients_match() {
        let mut rng = seed::rng(9);
        let mut store = ParamStore::new();
        let l1 = Dense::new(&mut store, "l1", 3, 6, &mut rng);
        let l2 = Dense::new(&mut store, "l2", 6, 1, &mut rng);
        let x = super::super::xavier_uniform(5, 3, 1, 1, &mut rng);
        let mut m = Mlp {
            store,
            l1,
            l2,
            x,
            y: vec![0.5, -1.0, 2.0, 0.0, 1.5],
        };
        let r = gradcheck(&mut m, 1e-5);
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    struct Seq {
        store: ParamStore,
        lstm: Lstm,
        proj: Dense,
        xs: Vec<Mat>,
        labels: Vec<usize>,
    }

    impl Differentiable for Seq {
        fn store_count(&self) -> usize {
            1
        }
        fn store_mut(&mut self, _: usize) -> &mut ParamStore {
            &mut self.store
        }
        fn loss(&mut self, grad: bool) -> f64 {
            let cache = self.lstm.forward(&self.store, &self.xs);
            let b = self.xs[0].nrows();
            let t = self.xs.len();
            let mut logits = Array2::zeros((b, t));
            let outs: Vec<Mat> = cache.outputs().iter().map(|h| self.proj.forward(&self.store, h)).collect();
            for (k, o) in outs.iter().enumerate() {
                logits.column_mut(k).assign(&o.column(0));
            }
            let (l, d) = softmax_nll(&logits, &self.labels);
            if grad {
                let dh: Vec<Mat> = (0..t)
                    .map(|k| {
                        let dk = d.column(k).to_owned().insert_axis(ndarray::Axis(1));
                        self.proj.backward(&mut self.store, cache.output(k), &dk)
                    })
                    .collect();
                self.lstm.backward(&mut self.store, &cache, &dh);
            }
            l
        }
    }

    #[test]
    fn lstm_gradients_match() {
        let mut rng = seed::rng(10);
        let mut store = ParamStore::new();
        let lstm = Lstm::new(&mut store, "lstm", 2, 4, &mut rng);
        let proj = Dense::new(&mut store, "proj", 4, 1, &mut rng);
        let xs = (0..5).map(|_| super::super::xavier_uniform(3, 2, 1, 1, &mut rng) * 2.0).collect();
        let mut m = Seq {
            store,
            lstm,
            proj,
            xs,
            labels: vec![0, 3, 4],
        };
        let r = gradcheck(&mut m, 1e-5);
        assert!(r.max_rel_error < 1e-4, "{r:?}");
        assert_eq!(r.checked, m.store.scalar_count());
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0, 1e-6), 0.0);
        assert!((relative_error(1.0, 1.1, 1e-6) - 0.1 / 1.1).abs() < 1e-15);
        assert!((relative_error(1e-9, 0.0, 1e-6) - 1e-3).abs() < 1e-15);
    }
}
