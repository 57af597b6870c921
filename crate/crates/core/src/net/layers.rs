//! Differentiable building blocks. Every layer keeps what its backward pass
//! needs in an explicit cache returned from `forward`.

use ndarray::{s, Array1, Array2, Array3, ArrayView2, ArrayView3, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

fn xavier_uniform<T: Float, R: Rng + ?Sized>(fan_in: usize, fan_out: usize, len: usize, rng: &mut R) -> Vec<T> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite Xavier bound");
    (0..len).map(|_| T::lit(dist.sample(rng))).collect()
}

/// Fully connected layer, `y = x W + b` with `W` stored `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Float> Linear<T> {
    pub fn xavier<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let w = xavier_uniform(inputs, outputs, inputs * outputs, rng);
        Self {
            weight: Array2::from_shape_vec((inputs, outputs), w).expect("shape matches length"),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self { weight: Array2::zeros(self.weight.raw_dim()), bias: Array1::zeros(self.bias.raw_dim()) }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Array2<T> {
        x.dot(&self.weight) + &self.bias
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: ArrayView2<T>, dy: ArrayView2<T>, grad: &mut Linear<T>) -> Array2<T> {
        grad.weight += &x.t().dot(&dy);
        grad.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight.t())
    }
}

/// Strided 1-D convolution with "same" padding, computed through im2col.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<T> {
    /// `[out_channels, in_channels * kernel]`
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    pub in_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

pub struct ConvCache<T> {
    cols: Array2<T>,
    in_len: usize,
}

/// Output length and left padding of a "same" convolution.
pub fn same_padding(len: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = len.div_ceil(stride);
    let needed = ((out.saturating_sub(1)) * stride + kernel).saturating_sub(len);
    (out, needed / 2)
}

impl<T: Float> Conv1d<T> {
    pub fn xavier<R: Rng + ?Sized>(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, rng: &mut R) -> Self {
        let w = xavier_uniform(in_channels * kernel, out_channels * kernel, out_channels * in_channels * kernel, rng);
        Self {
            weight: Array2::from_shape_vec((out_channels, in_channels * kernel), w).expect("shape matches length"),
            bias: Array1::zeros(out_channels),
            in_channels,
            kernel,
            stride,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
            ..*self
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: ArrayView3<T>) -> (Array3<T>, ConvCache<T>) {
        let (b, c, len) = x.dim();
        debug_assert_eq!(c, self.in_channels);
        let (out_len, pad) = same_padding(len, self.kernel, self.stride);
        let mut cols = Array2::zeros((c * self.kernel, b * out_len));
        for bi in 0..b {
            for ci in 0..c {
                let src = x.slice(s![bi, ci, ..]);
                for t in 0..self.kernel {
                    let mut dst = cols.slice_mut(s![ci * self.kernel + t, bi * out_len..(bi + 1) * out_len]);
                    for (o, d) in dst.iter_mut().enumerate() {
                        let pos = (o * self.stride + t) as isize - pad as isize;
                        if pos >= 0 && (pos as usize) < len {
                            *d = src[pos as usize];
                        }
                    }
                }
            }
        }
        let y2 = self.weight.dot(&cols);
        let oc = self.out_channels();
        let mut y = Array3::zeros((b, oc, out_len));
        for bi in 0..b {
            let block = y2.slice(s![.., bi * out_len..(bi + 1) * out_len]);
            let mut dst = y.slice_mut(s![bi, .., ..]);
            dst.assign(&block);
            dst += &self.bias.view().insert_axis(Axis(1));
        }
        (y, ConvCache { cols, in_len: len })
    }

    /// Accumulates parameter gradients; returns `dL/dx` when `want_input` is set.
    pub fn backward(&self, cache: &ConvCache<T>, dy: ArrayView3<T>, grad: &mut Conv1d<T>, want_input: bool) -> Option<Array3<T>> {
        let (b, oc, out_len) = dy.dim();
        let mut dy2 = Array2::zeros((oc, b * out_len));
        for bi in 0..b {
            dy2.slice_mut(s![.., bi * out_len..(bi + 1) * out_len]).assign(&dy.slice(s![bi, .., ..]));
        }
        grad.weight += &dy2.dot(&cache.cols.t());
        grad.bias += &dy2.sum_axis(Axis(1));
        if !want_input {
            return None;
        }
        let dcols = self.weight.t().dot(&dy2);
        let len = cache.in_len;
        let (_, pad) = same_padding(len, self.kernel, self.stride);
        let mut dx = Array3::zeros((b, self.in_channels, len));
        for bi in 0..b {
            for ci in 0..self.in_channels {
                let mut dst = dx.slice_mut(s![bi, ci, ..]);
                for t in 0..self.kernel {
                    let src = dcols.slice(s![ci * self.kernel + t, bi * out_len..(bi + 1) * out_len]);
                    for (o, v) in src.iter().enumerate() {
                        let pos = (o * self.stride + t) as isize - pad as isize;
                        if pos >= 0 && (pos as usize) < len {
                            dst[pos as usize] += *v;
                        }
                    }
                }
            }
        }
        Some(dx)
    }
}

/// Per-channel batch normalization over batch and length.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm1d<T> {
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
    pub running_mean: Array1<T>,
    pub running_var: Array1<T>,
    pub momentum: T,
    pub eps: T,
}

pub struct NormCache<T> {
    xhat: Array3<T>,
    inv_std: Array1<T>,
    batch_stats: bool,
}

impl<T: Float> BatchNorm1d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            momentum: T::lit(0.1),
            eps: T::lit(1e-5),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let c = self.gamma.len();
        Self {
            gamma: Array1::zeros(c),
            beta: Array1::zeros(c),
            running_mean: Array1::zeros(c),
            running_var: Array1::zeros(c),
            momentum: self.momentum,
            eps: self.eps,
        }
    }

    /// Train mode normalizes with batch statistics and updates the running ones.
    pub fn forward(&mut self, x: ArrayView3<T>, mode: Mode) -> (Array3<T>, NormCache<T>) {
        let (b, c, len) = x.dim();
        let n = T::lit((b * len) as f64);
        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = Array1::zeros(c);
                let mut var = Array1::zeros(c);
                for ci in 0..c {
                    let ch = x.slice(s![.., ci, ..]);
                    let m = ch.sum() / n;
                    let v = ch.fold(T::zero(), |acc, &v| acc + (v - m) * (v - m)) / n;
                    mean[ci] = m;
                    var[ci] = v;
                }
                let unbias = if b * len > 1 { n / (n - T::one()) } else { T::one() };
                let mom = self.momentum;
                Zip::from(&mut self.running_mean)
                    .and(&mean)
                    .for_each(|r, &m| *r = (T::one() - mom) * *r + mom * m);
                Zip::from(&mut self.running_var)
                    .and(&var)
                    .for_each(|r, &v| *r = (T::one() - mom) * *r + mom * v * unbias);
                (mean, var)
            }
            Mode::Eval => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std = var.mapv(|v| T::one() / (v + self.eps).sqrt());
        let mut xhat = x.to_owned();
        let mut y = Array3::zeros((b, c, len));
        for ci in 0..c {
            let (m, is, g, be) = (mean[ci], inv_std[ci], self.gamma[ci], self.beta[ci]);
            let mut xh = xhat.slice_mut(s![.., ci, ..]);
            xh.mapv_inplace(|v| (v - m) * is);
            Zip::from(y.slice_mut(s![.., ci, ..])).and(&xh).for_each(|o, &h| *o = g * h + be);
        }
        (y, NormCache { xhat, inv_std, batch_stats: mode == Mode::Train })
    }

    pub fn backward(&self, cache: &NormCache<T>, dy: ArrayView3<T>, grad: &mut BatchNorm1d<T>) -> Array3<T> {
        let (b, c, len) = dy.dim();
        let n = T::lit((b * len) as f64);
        let mut dx = Array3::zeros((b, c, len));
        for ci in 0..c {
            let dyc = dy.slice(s![.., ci, ..]);
            let xh = cache.xhat.slice(s![.., ci, ..]);
            let sum_dy = dyc.sum();
            let sum_dy_xh = Zip::from(&dyc).and(&xh).fold(T::zero(), |acc, &d, &h| acc + d * h);
            grad.gamma[ci] += sum_dy_xh;
            grad.beta[ci] += sum_dy;
            let g = self.gamma[ci];
            let is = cache.inv_std[ci];
            let mut dxc = dx.slice_mut(s![.., ci, ..]);
            if cache.batch_stats {
                // dxhat = g * dy; dx = is / n * (n dxhat - sum dxhat - xhat sum(dxhat xhat))
                let (sd, sdh) = (g * sum_dy, g * sum_dy_xh);
                Zip::from(&mut dxc)
                    .and(&dyc)
                    .and(&xh)
                    .for_each(|o, &d, &h| *o = is / n * (n * g * d - sd - h * sdh));
            } else {
                Zip::from(&mut dxc).and(&dyc).for_each(|o, &d| *o = g * is * d);
            }
        }
        dx
    }
}

/// Elementwise ReLU returning the 0/1 mask for the backward pass.
pub fn relu3<T: Float>(x: &mut Array3<T>) -> Array3<T> {
    let mask = x.mapv(|v| if v > T::zero() { T::one() } else { T::zero() });
    x.mapv_inplace(|v| v.max(T::zero()));
    mask
}

/// Non-overlapping max pooling of width 2; a trailing odd sample is dropped.
pub fn max_pool2<T: Float>(x: ArrayView3<T>) -> (Array3<T>, Array3<usize>) {
    let (b, c, len) = x.dim();
    let out_len = len / 2;
    let mut y = Array3::zeros((b, c, out_len));
    let mut idx = Array3::zeros((b, c, out_len));
    for ((bi, ci, o), v) in y.indexed_iter_mut() {
        let (a, bb) = (x[[bi, ci, 2 * o]], x[[bi, ci, 2 * o + 1]]);
        if bb > a {
            *v = bb;
            idx[[bi, ci, o]] = 2 * o + 1;
        } else {
            *v = a;
            idx[[bi, ci, o]] = 2 * o;
        }
    }
    (y, idx)
}

pub fn max_pool2_backward<T: Float>(dy: ArrayView3<T>, idx: &Array3<usize>, in_len: usize) -> Array3<T> {
    let (b, c, _) = dy.dim();
    let mut dx = Array3::zeros((b, c, in_len));
    for ((bi, ci, o), &d) in dy.indexed_iter() {
        dx[[bi, ci, idx[[bi, ci, o]]]] += d;
    }
    dx
}

pub fn global_avg_pool<T: Float>(x: ArrayView3<T>) -> Array2<T> {
    x.mean_axis(Axis(2)).expect("nonempty length axis")
}

pub fn global_avg_pool_backward<T: Float>(dy: ArrayView2<T>, len: usize) -> Array3<T> {
    let (b, c) = dy.dim();
    let scale = T::one() / T::lit(len as f64);
    Array3::from_shape_fn((b, c, len), |(bi, ci, _)| dy[[bi, ci]] * scale)
}

/// Inverted-dropout multiplier: entries are 0 or `1 / (1 - rate)`.
pub fn dropout_mask<T: Float, R: Rng + ?Sized>(shape: (usize, usize), rate: f64, rng: &mut R) -> Array2<T> {
    let keep = T::lit(1.0 / (1.0 - rate));
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < rate { T::zero() } else { keep })
}

pub fn softmax_rows<T: Float>(logits: ArrayView2<T>) -> Array2<T> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

/// `exp(z_c) / (C + sum_k exp(z_k))` per row.
pub fn leaky_softmax_rows<T: Float>(logits: ArrayView2<T>) -> Array2<T> {
    let c = T::lit(logits.ncols() as f64);
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let m = row.iter().copied().fold(T::zero(), T::max);
        row.mapv_inplace(|v| (v - m).exp());
        let denom = c * (-m).exp() + row.sum();
        row.mapv_inplace(|v| v / denom);
    }
    out
}
