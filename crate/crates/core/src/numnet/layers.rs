use rand::Rng;

use super::ops::{affine, affine_backward};
use super::params::{Init, ParamSet};
use super::tensor::{gemm, Tensor};

/// Fully connected layer whose weights live in a [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    w: usize,
    b: usize,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    /// Registers `<name>.w` and `<name>.b`; `scale` multiplies the He bound.
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        inputs: usize,
        outputs: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let w = params.add(
            &format!("{name}.w"),
            &[inputs, outputs],
            Init::HeUniform { fan_in: inputs, scale },
            rng,
        );
        let b = params.add(&format!("{name}.b"), &[outputs], Init::Zeros, rng);
        Dense { w, b, inputs, outputs }
    }

    pub fn forward(&self, p: &ParamSet, x: &Tensor) -> Tensor {
        affine(x, p.get(self.w), p.get(self.b)).expect("dense input width")
    }

    /// Accumulates weight gradients into `grads`, returns the input gradient if asked.
    pub fn backward(
        &self,
        p: &ParamSet,
        x: &Tensor,
        grad_out: &Tensor,
        grads: &mut ParamSet,
        need_x: bool,
    ) -> Option<Tensor> {
        let g = affine_backward(x, p.get(self.w), grad_out, need_x);
        grads.get_mut(self.w).add_assign(&g.w);
        grads.get_mut(self.b).add_assign(&g.b);
        g.x
    }
}

/// 3×3 same-padded convolution over channels-last feature maps.
///
/// Activations are stored as `n × (height·width·channels)` with the channel
/// index fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv3 {
    w: usize,
    b: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Conv3 {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        height: usize,
        width: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_channels * 9;
        let w = params.add(
            &format!("{name}.w"),
            &[fan_in, out_channels],
            Init::HeUniform { fan_in, scale },
            rng,
        );
        let b = params.add(&format!("{name}.b"), &[out_channels], Init::Zeros, rng);
        Conv3 {
            w,
            b,
            in_channels,
            out_channels,
            height,
            width,
        }
    }

    fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Patch matrix: one row per (sample, pixel), `in_channels·9` columns.
    fn im2col(&self, x: &Tensor) -> Vec<f64> {
        let (h, w, c) = (self.height as i64, self.width as i64, self.in_channels);
        let n = x.rows();
        let k = c * 9;
        let mut cols = vec![0.0; n * self.pixels() * k];
        for s in 0..n {
            let xs = x.row_slice(s);
            for i in 0..h {
                for j in 0..w {
                    let row = (s * self.pixels()) + (i * w + j) as usize;
                    let dst = &mut cols[row * k..(row + 1) * k];
                    for di in 0..3i64 {
                        for dj in 0..3i64 {
                            let (ii, jj) = (i + di - 1, j + dj - 1);
                            if ii < 0 || jj < 0 || ii >= h || jj >= w {
                                continue;
                            }
                            let src = ((ii * w + jj) as usize) * c;
                            let off = ((di * 3 + dj) as usize) * c;
                            dst[off..off + c].copy_from_slice(&xs[src..src + c]);
                        }
                    }
                }
            }
        }
        cols
    }

    pub fn forward(&self, p: &ParamSet, x: &Tensor) -> Tensor {
        let n = x.rows();
        let rows = n * self.pixels();
        let k = self.in_channels * 9;
        let f = self.out_channels;
        let cols = self.im2col(x);
        let mut out = Vec::with_capacity(rows * f);
        let bias = p.get(self.b).data();
        for _ in 0..rows {
            out.extend_from_slice(bias);
        }
        gemm(rows, k, f, &cols, false, p.get(self.w).data(), false, 1.0, &mut out);
        Tensor::matrix(n, self.pixels() * f, out).expect("conv output")
    }

    pub fn backward(
        &self,
        p: &ParamSet,
        x: &Tensor,
        grad_out: &Tensor,
        grads: &mut ParamSet,
        need_x: bool,
    ) -> Option<Tensor> {
        let n = x.rows();
        let rows = n * self.pixels();
        let k = self.in_channels * 9;
        let f = self.out_channels;
        let cols = self.im2col(x);
        let gy = grad_out.data();
        gemm(
            k,
            rows,
            f,
            &cols,
            true,
            gy,
            false,
            1.0,
            grads.get_mut(self.w).data_mut(),
        );
        let gb = grads.get_mut(self.b).data_mut();
        for r in 0..rows {
            for (acc, g) in gb.iter_mut().zip(&gy[r * f..(r + 1) * f]) {
                *acc += g;
            }
        }
        if !need_x {
            return None;
        }
        let mut gcols = vec![0.0; rows * k];
        gemm(rows, f, k, gy, false, p.get(self.w).data(), true, 0.0, &mut gcols);
        let (h, w, c) = (self.height as i64, self.width as i64, self.in_channels);
        let mut gx = Tensor::zeros(x.shape());
        for s in 0..n {
            let gxs = gx.row_slice_mut(s);
            for i in 0..h {
                for j in 0..w {
                    let row = (s * self.pixels()) + (i * w + j) as usize;
                    let src = &gcols[row * k..(row + 1) * k];
                    for di in 0..3i64 {
                        for dj in 0..3i64 {
                            let (ii, jj) = (i + di - 1, j + dj - 1);
                            if ii < 0 || jj < 0 || ii >= h || jj >= w {
                                continue;
                            }
                            let dst = ((ii * w + jj) as usize) * c;
                            let off = ((di * 3 + dj) as usize) * c;
                            for ch in 0..c {
                                gxs[dst + ch] += src[off + ch];
                            }
                        }
                    }
                }
            }
        }
        Some(gx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numnet::gradcheck::grad_check;
    use crate::numnet::params::Role;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conv_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = ParamSet::new(Role::Policy);
        let conv = Conv3::new(&mut p, "c", 2, 3, 4, 5, 1.0, &mut rng);
        p.get_mut(1).data_mut().copy_from_slice(&[0.1, -0.2, 0.3]);
        let x = Tensor::matrix(1, 40, (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let y = conv.forward(&p, &x);
        let w = p.get(0);
        for i in 0..4i64 {
            for j in 0..5i64 {
                for f in 0..3 {
                    let mut acc = p.get(1).data()[f];
                    for di in 0..3i64 {
                        for dj in 0..3i64 {
                            let (ii, jj) = (i + di - 1, j + dj - 1);
                            if !(0..4).contains(&ii) || !(0..5).contains(&jj) {
                                continue;
                            }
                            for c in 0..2 {
                                let wi = ((di * 3 + dj) as usize * 2 + c) * 3 + f;
                                acc += w.data()[wi] * x.data()[((ii * 5 + jj) as usize) * 2 + c];
                            }
                        }
                    }
                    let got = y.data()[((i * 5 + j) as usize) * 3 + f];
                    assert!((got - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn conv_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut p = ParamSet::new(Role::Policy);
        let conv = Conv3::new(&mut p, "c", 2, 2, 3, 3, 1.0, &mut rng);
        let x = Tensor::matrix(2, 18, (0..36).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let c = Tensor::matrix(2, 18, (0..36).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let loss = |q: &ParamSet, x: &Tensor| -> f64 {
            conv.forward(q, x).data().iter().zip(c.data()).map(|(a, b)| a * b).sum()
        };
        let mut grads = p.zeros_like();
        let gx = conv.backward(&p, &x, &c, &mut grads, true).unwrap();
        assert!(grad_check(|q| loss(q, &x), &p, &grads, 1e-5) < 1e-6);
        for i in 0..x.len() {
            let mut up = x.clone();
            up.data_mut()[i] += 1e-5;
            let mut down = x.clone();
            down.data_mut()[i] -= 1e-5;
            let n = (loss(&p, &up) - loss(&p, &down)) / 2e-5;
            assert!((n - gx.data()[i]).abs() < 1e-8);
        }
    }
}
