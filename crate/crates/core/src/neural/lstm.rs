use ndarray::{s, Array2, Axis};

use super::{xavier_uniform, Mat, ParamId, ParamStore};
use crate::seed::Rng;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Unidirectional LSTM with the four gates fused column-wise in the order
/// input, forget, candidate, output: `W_x` is `D x 4H`, `W_h` is `H x 4H`.
#[derive(Debug, Clone, Copy)]
pub struct Lstm {
    wx: ParamId,
    wh: ParamId,
    b: ParamId,
    input: usize,
    hidden: usize,
}

pub struct LstmCache {
    batch: usize,
    steps: usize,
    /// Inputs stacked step-major, `T*B x D`.
    x: Mat,
    /// Activated gates, `T*B x 4H`.
    gates: Mat,
    /// `h_0 .. h_T`, each `B x H`.
    h: Vec<Mat>,
    /// `c_0 .. c_T`.
    c: Vec<Mat>,
    /// `tanh(c_1) .. tanh(c_T)`.
    tanh_c: Vec<Mat>,
}

impl LstmCache {
    /// Hidden state after step `t` (0-based).
    pub fn output(&self, t: usize) -> &Mat {
        &self.h[t + 1]
    }

    pub fn outputs(&self) -> &[Mat] {
        &self.h[1..]
    }

    pub fn last(&self) -> &Mat {
        &self.h[self.steps]
    }
}

impl Lstm {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let g = 4 * hidden;
        let wx = store.add(format!("{name}.wx"), xavier_uniform(input, g, input, hidden, rng));
        let wh = store.add(format!("{name}.wh"), xavier_uniform(hidden, g, hidden, hidden, rng));
        let mut bias = Array2::zeros((1, g));
        bias.slice_mut(s![.., hidden..2 * hidden]).fill(1.0);
        let b = store.add(format!("{name}.b"), bias);
        Lstm {
            wx,
            wh,
            b,
            input,
            hidden,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input(&self) -> usize {
        self.input
    }

    /// One cell application; the reference for the sequence code.
    pub fn cell(&self, store: &ParamStore, x: &Mat, h: &Mat, c: &Mat) -> (Mat, Mat) {
        let hd = self.hidden;
        let z = x.dot(store.value(self.wx)) + h.dot(store.value(self.wh)) + store.value(self.b);
        let i = z.slice(s![.., 0..hd]).mapv(sigmoid);
        let f = z.slice(s![.., hd..2 * hd]).mapv(sigmoid);
        let g = z.slice(s![.., 2 * hd..3 * hd]).mapv(f64::tanh);
        let o = z.slice(s![.., 3 * hd..]).mapv(sigmoid);
        let c_new = &f * c + &i * &g;
        let h_new = &o * &c_new.mapv(f64::tanh);
        (h_new, c_new)
    }

    /// Runs over `xs` (each `B x D`) from zero initial state.
    pub fn forward(&self, store: &ParamStore, xs: &[Mat]) -> LstmCache {
        let steps = xs.len();
        let batch = xs.first().map_or(0, |x| x.nrows());
        let hd = self.hidden;
        let views: Vec<_> = xs.iter().map(|x| x.view()).collect();
        let x = if views.is_empty() {
            Array2::zeros((0, self.input))
        } else {
            ndarray::concatenate(Axis(0), &views).expect("uniform batch")
        };
        let mut gates = x.dot(store.value(self.wx)) + store.value(self.b);
        let wh = store.value(self.wh);
        let mut h = vec![Array2::zeros((batch, hd))];
        let mut c = vec![Array2::zeros((batch, hd))];
        let mut tanh_c = Vec::with_capacity(steps);
        for t in 0..steps {
            let rec = h[t].dot(wh);
            let mut z = gates.slice_mut(s![t * batch..(t + 1) * batch, ..]);
            z += &rec;
            let mut c_t = Array2::zeros((batch, hd));
            let mut tc_t = Array2::zeros((batch, hd));
            let mut h_t = Array2::zeros((batch, hd));
            for r in 0..batch {
                let mut zr = z.row_mut(r);
                let zr = zr.as_slice_mut().expect("row-major");
                let c_prev = c[t].row(r);
                for j in 0..hd {
                    let ig = sigmoid(zr[j]);
                    let fg = sigmoid(zr[hd + j]);
                    let gg = zr[2 * hd + j].tanh();
                    let og = sigmoid(zr[3 * hd + j]);
                    zr[j] = ig;
                    zr[hd + j] = fg;
                    zr[2 * hd + j] = gg;
                    zr[3 * hd + j] = og;
                    let cv: f64 = fg * c_prev[j] + ig * gg;
                    let tc = cv.tanh();
                    c_t[[r, j]] = cv;
                    tc_t[[r, j]] = tc;
                    h_t[[r, j]] = og * tc;
                }
            }
            c.push(c_t);
            tanh_c.push(tc_t);
            h.push(h_t);
        }
        LstmCache {
            batch,
            steps,
            x,
            gates,
            h,
            c,
            tanh_c,
        }
    }

    /// Backpropagates `dh[t]` (gradient w.r.t. each output) through time.
    /// Returns the gradient w.r.t. each input.
    pub fn backward(&self, store: &mut ParamStore, cache: &LstmCache, dh: &[Mat]) -> Vec<Mat> {
        let (batch, steps, hd) = (cache.batch, cache.steps, self.hidden);
        let mut dz = Array2::zeros((steps * batch, 4 * hd));
        let mut dh_next: Mat = Array2::zeros((batch, hd));
        let mut dc_next: Mat = Array2::zeros((batch, hd));
        {
            let wh = store.value(self.wh);
            for t in (0..steps).rev() {
                let g = cache.gates.slice(s![t * batch..(t + 1) * batch, ..]);
                let c_prev = &cache.c[t];
                let tc = &cache.tanh_c[t];
                let mut dzt = dz.slice_mut(s![t * batch..(t + 1) * batch, ..]);
                for r in 0..batch {
                    let gr = g.row(r);
                    let mut dzr = dzt.row_mut(r);
                    for j in 0..hd {
                        let (ig, fg, gg, og) = (gr[j], gr[hd + j], gr[2 * hd + j], gr[3 * hd + j]);
                        let dhv = dh[t][[r, j]] + dh_next[[r, j]];
                        let tcv = tc[[r, j]];
                        let dc = dc_next[[r, j]] + dhv * og * (1.0 - tcv * tcv);
                        dzr[j] = dc * gg * ig * (1.0 - ig);
                        dzr[hd + j] = dc * c_prev[[r, j]] * fg * (1.0 - fg);
                        dzr[2 * hd + j] = dc * ig * (1.0 - gg * gg);
                        dzr[3 * hd + j] = dhv * tcv * og * (1.0 - og);
                        dc_next[[r, j]] = dc * fg;
                    }
                }
                dh_next = dzt.dot(&wh.t());
            }
        }
        let h_prev_views: Vec<_> = cache.h[..steps].iter().map(|m| m.view()).collect();
        if steps > 0 {
            let h_prev = ndarray::concatenate(Axis(0), &h_prev_views).expect("uniform batch");
            ndarray::linalg::general_mat_mul(1.0, &h_prev.t(), &dz, 1.0, store.grad_mut(self.wh));
        }
        ndarray::linalg::general_mat_mul(1.0, &cache.x.t(), &dz, 1.0, store.grad_mut(self.wx));
        *store.grad_mut(self.b) += &dz.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dx = dz.dot(&store.value(self.wx).t());
        (0..steps)
            .map(|t| dx.slice(s![t * batch..(t + 1) * batch, ..]).to_owned())
            .collect()
    }
}
