use ndarray::{Array2, Axis, Zip};

use super::{xavier_uniform, Mat, ParamId, ParamStore};
use crate::seed::Rng;

/// Affine map `x W + b` over row-major batches.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    w: ParamId,
    b: ParamId,
}

impl Dense {
    pub fn new(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let w = store.add(
            format!("{name}.w"),
            xavier_uniform(inputs, outputs, inputs, outputs, rng),
        );
        let b = store.add(format!("{name}.b"), Array2::zeros((1, outputs)));
        Dense { w, b }
    }

    pub fn weight(&self) -> ParamId {
        self.w
    }

    pub fn bias(&self) -> ParamId {
        self.b
    }

    pub fn forward(&self, store: &ParamStore, x: &Mat) -> Mat {
        x.dot(store.value(self.w)) + store.value(self.b)
    }

    /// Accumulates `dW`, `db` and returns `dx`.
    pub fn backward(&self, store: &mut ParamStore, x: &Mat, dy: &Mat) -> Mat {
        let dx = dy.dot(&store.value(self.w).t());
        self.accumulate(store, x, dy);
        dx
    }

    /// Parameter gradients only, for layers whose input is not differentiated.
    pub fn accumulate(&self, store: &mut ParamStore, x: &Mat, dy: &Mat) {
        ndarray::linalg::general_mat_mul(1.0, &x.t(), dy, 1.0, store.grad_mut(self.w));
        *store.grad_mut(self.b) += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
}

pub fn relu(x: &Mat) -> Mat {
    x.mapv(|v| v.max(0.0))
}

/// Gradient through ReLU given the pre-activation.
pub fn relu_backward(pre: &Mat, dy: &Mat) -> Mat {
    let mut dx = dy.clone();
    Zip::from(&mut dx).and(pre).for_each(|d, &p| {
        if p <= 0.0 {
            *d = 0.0;
        }
    });
    dx
}
