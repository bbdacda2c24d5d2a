use ndarray::{Array2, Axis};

use super::Mat;

/// Row-wise softmax, shifted by the row max.
pub fn softmax_rows(logits: &Mat) -> Mat {
    let mut p = logits.clone();
    for mut row in p.axis_iter_mut(Axis(0)) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    p
}

/// Mean negative log-likelihood of `labels` and its gradient w.r.t. `logits`.
pub fn softmax_nll(logits: &Mat, labels: &[usize]) -> (f64, Mat) {
    let n = logits.nrows();
    debug_assert_eq!(n, labels.len());
    let mut grad = softmax_rows(logits);
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        // log p_y computed from the logits directly for accuracy.
        let row = logits.row(i);
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        grad[[i, y]] -= 1.0;
    }
    let scale = 1.0 / n as f64;
    grad *= scale;
    (loss * scale, grad)
}

/// Mean squared error over a column of predictions.
pub fn mse(pred: &Mat, targets: &[f64]) -> (f64, Mat) {
    let n = pred.nrows();
    debug_assert_eq!(pred.ncols(), 1);
    let mut grad = Array2::zeros((n, 1));
    let mut loss = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let e = pred[[i, 0]] - t;
        loss += e * e;
        grad[[i, 0]] = 2.0 * e / n as f64;
    }
    (loss / n as f64, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_logits_give_log_five() {
        let (l, g) = softmax_nll(&Array2::zeros((3, 5)), &[0, 2, 4]);
        assert!((l - 5f64.ln()).abs() < 1e-15);
        assert!((l - 1.6094).abs() < 1e-4);
        for i in 0..3 {
            assert!(g.row(i).sum().abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = softmax_rows(&array![[1000.0, -1000.0, 3.0], [0.1, 0.2, 0.3]]);
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn mse_at_optimum_is_zero() {
        let (l, g) = mse(&Array2::zeros((4, 1)), &[0.0; 4]);
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_loss_is_mean_of_example_losses() {
        let logits = array![[0.3, -1.0, 2.0, 0.0, 0.5], [1.0, 1.0, -2.0, 0.7, 0.1]];
        let labels = [2, 4];
        let (batch, _) = softmax_nll(&logits, &labels);
        let each: f64 = (0..2)
            .map(|i| softmax_nll(&logits.slice(ndarray::s![i..i + 1, ..]).to_owned(), &labels[i..i + 1]).0)
            .sum();
        assert!((batch - each / 2.0).abs() < 1e-14);

        let pred = array![[1.0], [3.0], [-2.0]];
        let t = [0.5, 3.0, 1.0];
        let (batch, _) = mse(&pred, &t);
        let each: f64 = (0..3)
            .map(|i| mse(&pred.slice(ndarray::s![i..i + 1, ..]).to_owned(), &t[i..i + 1]).0)
            .sum();
        assert!((batch - each / 3.0).abs() < 1e-14);
    }
}
