use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Conv3, Dense};
use super::ops::{relu_backward, relu_inplace};
use super::params::ParamSet;
use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    /// Flattened view plus extra features through a ReLU MLP.
    Mlp,
    /// Residual stack of 3×3 convolutions, flattened and joined with the extras.
    Conv,
}

/// Architecture of a state encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    /// Hidden widths of the MLP encoder.
    pub hidden: Vec<usize>,
    /// Output width of the MLP encoder.
    pub embed: usize,
    pub conv_channels: usize,
    pub conv_layers: usize,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec {
            kind: EncoderKind::Mlp,
            hidden: vec![256, 256],
            embed: 128,
            conv_channels: 16,
            conv_layers: 5,
        }
    }
}

/// Layout of an encoder input row: a channels-last `height×width×channels`
/// view followed by `extra` scalar features.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InputShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub extra: usize,
}

impl InputShape {
    pub fn view_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn width(&self) -> usize {
        self.view_len() + self.extra
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Body {
    Mlp(Vec<Dense>),
    Conv(Vec<Conv3>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    body: Body,
    input: InputShape,
    out_width: usize,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct EncoderCache {
    input: Tensor,
    acts: Vec<Tensor>,
    out: Tensor,
}

impl EncoderCache {
    pub fn output(&self) -> &Tensor {
        &self.out
    }
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(
        spec: &EncoderSpec,
        input: InputShape,
        params: &mut ParamSet,
        prefix: &str,
        rng: &mut R,
    ) -> Self {
        match spec.kind {
            EncoderKind::Mlp => {
                let mut widths = vec![input.width()];
                widths.extend(&spec.hidden);
                widths.push(spec.embed);
                let layers = widths
                    .windows(2)
                    .enumerate()
                    .map(|(i, w)| Dense::new(params, &format!("{prefix}.fc{i}"), w[0], w[1], 1.0, rng))
                    .collect();
                Encoder {
                    body: Body::Mlp(layers),
                    input,
                    out_width: spec.embed,
                }
            }
            EncoderKind::Conv => {
                let f = spec.conv_channels;
                let layers = (0..spec.conv_layers.max(1))
                    .map(|i| {
                        let cin = if i == 0 { input.channels } else { f };
                        Conv3::new(
                            params,
                            &format!("{prefix}.conv{i}"),
                            cin,
                            f,
                            input.height,
                            input.width,
                            1.0,
                            rng,
                        )
                    })
                    .collect();
                Encoder {
                    body: Body::Conv(layers),
                    input,
                    out_width: input.height * input.width * f + input.extra,
                }
            }
        }
    }

    pub fn input_shape(&self) -> InputShape {
        self.input
    }

    pub fn out_width(&self) -> usize {
        self.out_width
    }

    /// Encodes a batch of input rows.
    pub fn forward(&self, p: &ParamSet, x: Tensor) -> EncoderCache {
        assert_eq!(x.cols(), self.input.width(), "encoder input width");
        match &self.body {
            Body::Mlp(layers) => {
                let mut acts = Vec::with_capacity(layers.len());
                let mut h = x.clone();
                for layer in layers {
                    let mut y = layer.forward(p, &h);
                    relu_inplace(&mut y);
                    acts.push(std::mem::replace(&mut h, y));
                }
                acts.push(h.clone());
                EncoderCache { input: x, acts, out: h }
            }
            Body::Conv(layers) => {
                let (view, extra) = split_cols(&x, self.input.view_len());
                let mut acts = Vec::with_capacity(layers.len());
                let mut h = layers[0].forward(p, &view);
                relu_inplace(&mut h);
                for layer in &layers[1..] {
                    let mut z = layer.forward(p, &h);
                    relu_inplace(&mut z);
                    let next = {
                        let mut n = h.clone();
                        n.add_assign(&z);
                        n
                    };
                    acts.push(std::mem::replace(&mut h, next));
                    acts.push(z);
                }
                let out = join_cols(&h, &extra);
                acts.push(h);
                EncoderCache { input: x, acts, out }
            }
        }
    }

    /// Accumulates parameter gradients; returns the input gradient when asked.
    pub fn backward(
        &self,
        p: &ParamSet,
        cache: &EncoderCache,
        grad_out: &Tensor,
        grads: &mut ParamSet,
        need_input: bool,
    ) -> Option<Tensor> {
        match &self.body {
            Body::Mlp(layers) => {
                let mut g = grad_out.clone();
                for (i, layer) in layers.iter().enumerate().rev() {
                    g = relu_backward(&cache.acts[i + 1], &g);
                    let x = if i == 0 { &cache.input } else { &cache.acts[i] };
                    g = layer.backward(p, x, &g, grads, i > 0 || need_input)?;
                }
                Some(g)
            }
            Body::Conv(layers) => {
                let hw = self.out_width - self.input.extra;
                let (mut gh, gextra) = split_cols(grad_out, hw);
                // acts = [h0, z1, h1, z2, ..., h_last]
                for (l, layer) in layers.iter().enumerate().skip(1).rev() {
                    let h_prev = &cache.acts[2 * (l - 1)];
                    let z = &cache.acts[2 * (l - 1) + 1];
                    let gz = relu_backward(z, &gh);
                    let gprev = layer.backward(p, h_prev, &gz, grads, true).unwrap();
                    gh.add_assign(&gprev);
                }
                let h0 = &cache.acts[0];
                let gz = relu_backward(h0, &gh);
                let (view, _) = split_cols(&cache.input, self.input.view_len());
                let gview = layers[0].backward(p, &view, &gz, grads, need_input)?;
                Some(join_cols(&gview, &gextra))
            }
        }
    }
}

/// Splits each row at column `at`.
pub fn split_cols(x: &Tensor, at: usize) -> (Tensor, Tensor) {
    let n = x.rows();
    let c = x.cols();
    let mut left = Vec::with_capacity(n * at);
    let mut right = Vec::with_capacity(n * (c - at));
    for r in 0..n {
        let row = x.row_slice(r);
        left.extend_from_slice(&row[..at]);
        right.extend_from_slice(&row[at..]);
    }
    (
        Tensor::matrix(n, at, left).unwrap(),
        Tensor::matrix(n, c - at, right).unwrap(),
    )
}

/// Concatenates rows of `a` and `b`.
pub fn join_cols(a: &Tensor, b: &Tensor) -> Tensor {
    let n = a.rows();
    assert_eq!(n, b.rows());
    let (ca, cb) = (a.cols(), b.cols());
    let mut data = Vec::with_capacity(n * (ca + cb));
    for r in 0..n {
        data.extend_from_slice(a.row_slice(r));
        data.extend_from_slice(b.row_slice(r));
    }
    Tensor::matrix(n, ca + cb, data).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numnet::gradcheck::grad_check;
    use crate::numnet::params::Role;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn check(spec: &EncoderSpec) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let shape = InputShape {
            height: 3,
            width: 3,
            channels: 2,
            extra: 3,
        };
        let mut p = ParamSet::new(Role::Policy);
        let enc = Encoder::new(spec, shape, &mut p, "enc", &mut rng);
        let x = Tensor::matrix(
            2,
            shape.width(),
            (0..2 * shape.width()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let c = Tensor::matrix(
            2,
            enc.out_width(),
            (0..2 * enc.out_width()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let loss = |q: &ParamSet, x: &Tensor| -> f64 {
            enc.forward(q, x.clone())
                .output()
                .data()
                .iter()
                .zip(c.data())
                .map(|(a, b)| a * b)
                .sum()
        };
        let cache = enc.forward(&p, x.clone());
        let mut grads = p.zeros_like();
        let gx = enc.backward(&p, &cache, &c, &mut grads, true).unwrap();
        let err = grad_check(|q| loss(q, &x), &p, &grads, 1e-5);
        assert!(err < 1e-4, "{:?}: {err}", spec.kind);
        for i in 0..x.len() {
            let mut up = x.clone();
            up.data_mut()[i] += 1e-5;
            let mut down = x.clone();
            down.data_mut()[i] -= 1e-5;
            let n = (loss(&p, &up) - loss(&p, &down)) / 2e-5;
            assert!((n - gx.data()[i]).abs() < 1e-6, "input grad {i}");
        }
        // deterministic
        assert_eq!(enc.forward(&p, x.clone()).output(), cache.output());
    }

    #[test]
    fn mlp_encoder_gradients() {
        check(&EncoderSpec {
            hidden: vec![7, 6],
            embed: 5,
            ..EncoderSpec::default()
        });
    }

    #[test]
    fn conv_encoder_gradients() {
        check(&EncoderSpec {
            kind: EncoderKind::Conv,
            conv_channels: 3,
            conv_layers: 5,
            ..EncoderSpec::default()
        });
    }
}
