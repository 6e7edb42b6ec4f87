//! Forward and backward primitives on row-major matrices.

use super::tensor::{gemm, Tensor};
use super::NetError;

/// Lower clamp applied to probabilities before any logarithm.
pub const PROB_EPS: f64 = 1e-7;

/// `y = x w + b` for `x: n×i`, `w: i×o`, `b: o`.
pub fn affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, NetError> {
    let (n, i) = (x.rows(), x.cols());
    if w.shape().len() != 2 || w.shape()[0] != i || b.len() != w.shape()[1] {
        return Err(NetError::Shape(format!(
            "affine: x {:?}, w {:?}, b {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let o = w.shape()[1];
    let mut data = Vec::with_capacity(n * o);
    for _ in 0..n {
        data.extend_from_slice(b.data());
    }
    gemm(n, i, o, x.data(), false, w.data(), false, 1.0, &mut data);
    Tensor::matrix(n, o, data)
}

/// Gradients of [`affine`]. `grad_x` is skipped when `need_x` is false.
pub struct AffineGrads {
    pub x: Option<Tensor>,
    pub w: Tensor,
    pub b: Tensor,
}

pub fn affine_backward(x: &Tensor, w: &Tensor, grad_out: &Tensor, need_x: bool) -> AffineGrads {
    let (n, i) = (x.rows(), x.cols());
    let o = w.shape()[1];
    let mut gw = vec![0.0; i * o];
    gemm(i, n, o, x.data(), true, grad_out.data(), false, 0.0, &mut gw);
    let mut gb = vec![0.0; o];
    for r in 0..n {
        for (acc, g) in gb.iter_mut().zip(grad_out.row_slice(r)) {
            *acc += g;
        }
    }
    let gx = need_x.then(|| {
        let mut gx = vec![0.0; n * i];
        gemm(n, o, i, grad_out.data(), false, w.data(), true, 0.0, &mut gx);
        Tensor::new(x.shape().to_vec(), gx).expect("grad_x shape")
    });
    AffineGrads {
        x: gx,
        w: Tensor::new(w.shape().to_vec(), gw).expect("grad_w shape"),
        b: Tensor::new(vec![o], gb).expect("grad_b shape"),
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

pub fn relu_inplace(x: &mut Tensor) {
    x.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Backward of ReLU given its output.
pub fn relu_backward(y: &Tensor, grad_out: &Tensor) -> Tensor {
    let data = y
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| if y > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(y.shape().to_vec(), data).expect("same shape")
}

pub fn sigmoid_scalar(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| sigmoid_scalar(v)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

/// Backward of the sigmoid given its output.
pub fn sigmoid_backward(y: &Tensor, grad_out: &Tensor) -> Tensor {
    let data = y
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| g * y * (1.0 - y))
        .collect();
    Tensor::new(y.shape().to_vec(), data).expect("same shape")
}

/// Softmax over the last axis.
pub fn softmax(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let rows = x.len() / x.cols().max(1);
    for r in 0..rows {
        softmax_slice(out.row_slice_mut(r));
    }
    out
}

pub fn softmax_slice(row: &mut [f64]) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Backward of the softmax given its output: `g_x = y ⊙ (g - <g, y>)` per row.
pub fn softmax_backward(y: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut out = grad_out.clone();
    let rows = y.len() / y.cols().max(1);
    for r in 0..rows {
        let yr = y.row_slice(r);
        let dot: f64 = yr.iter().zip(grad_out.row_slice(r)).map(|(a, b)| a * b).sum();
        for (g, &p) in out.row_slice_mut(r).iter_mut().zip(yr) {
            *g = p * (*g - dot);
        }
    }
    out
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Binary cross-entropy of one probability against a 0/1 label.
pub fn bce(p: f64, label: f64) -> f64 {
    let p = clamp_prob(p);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

/// `d bce / d p`; zero where the clamp is active.
pub fn bce_backward(p: f64, label: f64) -> f64 {
    if !(PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
        return 0.0;
    }
    -label / p + (1.0 - label) / (1.0 - p)
}

/// Entropy of a probability row, `-Σ p ln p`.
pub fn entropy(probs: &[f64]) -> f64 {
    probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::rel_err;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    mod approx_eq {
        pub fn rel_err(a: f64, b: f64) -> f64 {
            (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
        }
    }

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Central difference of `f` with respect to element `i` of `t`.
    fn central(t: &Tensor, i: usize, h: f64, f: impl Fn(&Tensor) -> f64) -> f64 {
        let mut plus = t.clone();
        plus.data_mut()[i] += h;
        let mut minus = t.clone();
        minus.data_mut()[i] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    }

    #[test]
    fn affine_identity() {
        let x = Tensor::row(vec![1.0, 2.0]);
        let w = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::zeros(&[2]);
        assert_eq!(affine(&x, &w, &b).unwrap().data(), &[1.0, 2.0]);
        let bad = Tensor::zeros(&[3, 2]);
        assert!(affine(&x, &bad, &b).is_err());
    }

    #[test]
    fn affine_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random(&mut rng, &[4, 3]);
        let w = random(&mut rng, &[3, 5]);
        let b = random(&mut rng, &[5]);
        // loss = Σ c ⊙ y for a fixed random c
        let c = random(&mut rng, &[4, 5]);
        let loss = |x: &Tensor, w: &Tensor, b: &Tensor| -> f64 {
            let y = affine(x, w, b).unwrap();
            y.data().iter().zip(c.data()).map(|(a, b)| a * b).sum()
        };
        let g = affine_backward(&x, &w, &c, true);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..x.len() {
            let n = central(&x, i, h, |t| loss(t, &w, &b));
            worst = worst.max(rel_err(g.x.as_ref().unwrap().data()[i], n));
        }
        for i in 0..w.len() {
            let n = central(&w, i, h, |t| loss(&x, t, &b));
            worst = worst.max(rel_err(g.w.data()[i], n));
        }
        for i in 0..b.len() {
            let n = central(&b, i, h, |t| loss(&x, &w, t));
            worst = worst.max(rel_err(g.b.data()[i], n));
        }
        assert!(worst < 1e-6, "max relative error {worst}");
    }

    #[test]
    fn bias_gradient_of_ones_counts_rows() {
        let x = Tensor::zeros(&[6, 2]);
        let w = Tensor::zeros(&[2, 3]);
        let g = affine_backward(&x, &w, &Tensor::filled(&[6, 3], 1.0), false);
        assert_eq!(g.b.data(), &[6.0, 6.0, 6.0]);
        assert!(g.x.is_none());
    }

    #[test]
    fn scalar_activations() {
        let y = relu(&Tensor::row(vec![-1.0, 2.0]));
        assert_eq!(y.data(), &[0.0, 2.0]);
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        assert!(sigmoid_scalar(-800.0) >= 0.0 && sigmoid_scalar(800.0) <= 1.0);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_backward_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random(&mut rng, &[3, 5]);
        let y = softmax(&x);
        for r in 0..3 {
            assert!((y.row_slice(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let v = random(&mut rng, &[1, 5]);
        let c = random(&mut rng, &[1, 5]);
        let loss = |t: &Tensor| -> f64 { softmax(t).data().iter().zip(c.data()).map(|(a, b)| a * b).sum() };
        let g = softmax_backward(&softmax(&v), &c);
        for i in 0..5 {
            let n = central(&v, i, 1e-5, loss);
            assert!(rel_err(g.data()[i], n) < 1e-6);
        }
    }

    #[test]
    fn sigmoid_backward_matches() {
        let x = Tensor::row(vec![-2.0, -0.3, 0.0, 0.7, 3.0]);
        let g = sigmoid_backward(&sigmoid(&x), &Tensor::filled(&[1, 5], 1.0));
        for i in 0..5 {
            let n = central(&x, i, 1e-5, |t| sigmoid(t).sum());
            assert!(rel_err(g.data()[i], n) < 1e-6);
        }
    }

    #[test]
    fn bce_values_and_gradient() {
        assert!((bce(0.5, 1.0) - 2f64.ln()).abs() < 1e-15);
        assert!((bce(0.5, 0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((bce(0.9, 1.0) - 0.1054).abs() < 1e-4);
        let h = 1e-5;
        let n = (bce(0.3 + h, 0.0) - bce(0.3 - h, 0.0)) / (2.0 * h);
        assert!(rel_err(bce_backward(0.3, 0.0), n) < 1e-6);
        assert!(bce(0.0, 1.0).is_finite());
        assert_eq!(bce_backward(0.0, 1.0), 0.0);
    }

    #[test]
    fn entropy_bounds() {
        assert!((entropy(&[0.25; 4]) - 4f64.ln()).abs() < 1e-12);
        assert_eq!(entropy(&[1.0, 0.0]), 0.0);
    }
}
