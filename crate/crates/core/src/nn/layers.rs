//! Differentiable layers: 1D convolution (same-length zero padding), batch
//! normalization, ReLU, max pooling, fully connected, and the 2-way softmax
//! cross-entropy head.
//!
//! Layers are generic over the float type: training runs in `f32`, gradient
//! checking runs the whole stack in `f64`. Each layer owns its parameters and
//! accumulates gradients in matching `grad_*` buffers; `backward` returns the
//! input gradient.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, Array3, Axis, NdFloat};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Callback over (parameter slice, gradient slice) pairs in a fixed order.
pub type ParamVisitor<'a, F> = dyn FnMut(&mut [F], &[F]) + 'a;

fn uniform_init<F: NdFloat>(rng: &mut ChaCha8Rng, fan_in: usize, n: usize) -> Vec<F> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n)
        .map(|_| F::from(rng.random_range(-bound..bound)).unwrap())
        .collect()
}

/// im2col for a (batch, channels, length) tensor with kernel size `k` and
/// same-length zero padding: result is (channels * k, batch * length).
fn im2col<F: NdFloat>(x: &Array3<F>, k: usize) -> Array2<F> {
    let (b, c, l) = x.dim();
    let pad = (k - 1) / 2;
    let ncols = b * l;
    let mut cols = Array2::zeros((c * k, ncols));
    let xs = x.as_slice().expect("input must be standard layout");
    let cs = cols.as_slice_mut().unwrap();
    for bi in 0..b {
        for ci in 0..c {
            let xrow = &xs[(bi * c + ci) * l..(bi * c + ci + 1) * l];
            for t in 0..k {
                let row = ci * k + t;
                let base = row * ncols + bi * l;
                let offset = t as isize - pad as isize;
                let (dst0, src0, len) = if offset < 0 {
                    ((-offset) as usize, 0usize, l - (-offset) as usize)
                } else {
                    (0usize, offset as usize, l - offset as usize)
                };
                cs[base + dst0..base + dst0 + len]
                    .copy_from_slice(&xrow[src0..src0 + len]);
            }
        }
    }
    cols
}

/// Transpose of im2col: scatter-adds column gradients back onto the input.
fn col2im<F: NdFloat>(dcols: &Array2<F>, b: usize, c: usize, l: usize, k: usize) -> Array3<F> {
    let pad = (k - 1) / 2;
    let ncols = b * l;
    let mut dx = Array3::zeros((b, c, l));
    let ds = dcols.as_slice().unwrap();
    let xs = dx.as_slice_mut().unwrap();
    for bi in 0..b {
        for ci in 0..c {
            let xrow = &mut xs[(bi * c + ci) * l..(bi * c + ci + 1) * l];
            for t in 0..k {
                let row = ci * k + t;
                let base = row * ncols + bi * l;
                let offset = t as isize - pad as isize;
                let (dst0, src0, len) = if offset < 0 {
                    ((-offset) as usize, 0usize, l - (-offset) as usize)
                } else {
                    (0usize, offset as usize, l - offset as usize)
                };
                for i in 0..len {
                    xrow[src0 + i] += ds[base + dst0 + i];
                }
            }
        }
    }
    dx
}

/// 1D cross-correlation with same-length zero padding.
#[derive(Debug, Clone)]
pub struct Conv1d<F> {
    pub weight: Array3<F>, // (out_ch, in_ch, k)
    pub bias: Array1<F>,
    pub grad_weight: Array3<F>,
    pub grad_bias: Array1<F>,
}

impl<F: NdFloat> Conv1d<F> {
    pub fn new(in_ch: usize, out_ch: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if k % 2 == 0 {
            return Err(Error::invalid(format!(
                "conv kernel size must be odd for same-length padding, got {k}"
            )));
        }
        let fan_in = in_ch * k;
        let weight =
            Array3::from_shape_vec((out_ch, in_ch, k), uniform_init(rng, fan_in, out_ch * fan_in))
                .unwrap();
        Ok(Conv1d {
            weight,
            bias: Array1::zeros(out_ch),
            grad_weight: Array3::zeros((out_ch, in_ch, k)),
            grad_bias: Array1::zeros(out_ch),
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dim().0
    }

    pub fn forward(&self, x: &Array3<F>) -> Result<Array3<F>> {
        let (b, c, l) = x.dim();
        let (o, ci, k) = self.weight.dim();
        if c != ci {
            return Err(Error::ShapeMismatch(format!(
                "conv expects {ci} input channels, got {c}"
            )));
        }
        let cols = im2col(x, k);
        let w2 = self
            .weight
            .view()
            .into_shape_with_order((o, ci * k))
            .unwrap();
        let y2 = w2.dot(&cols); // (o, b*l)
        let mut y = Array3::zeros((b, o, l));
        let ys = y.as_slice_mut().unwrap();
        let y2s = y2.as_slice().unwrap();
        for bi in 0..b {
            for oc in 0..o {
                let bias = self.bias[oc];
                let src = &y2s[oc * b * l + bi * l..oc * b * l + (bi + 1) * l];
                let dst = &mut ys[(bi * o + oc) * l..(bi * o + oc + 1) * l];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = s + bias;
                }
            }
        }
        Ok(y)
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Array3<F>, dy: &Array3<F>) -> Array3<F> {
        let (b, c, l) = x.dim();
        let (o, _, k) = self.weight.dim();
        // (b, o, l) -> (o, b*l)
        let mut dy2 = Array2::zeros((o, b * l));
        {
            let ds = dy.as_slice().expect("dy standard layout");
            let d2 = dy2.as_slice_mut().unwrap();
            for bi in 0..b {
                for oc in 0..o {
                    let src = &ds[(bi * o + oc) * l..(bi * o + oc + 1) * l];
                    d2[oc * b * l + bi * l..oc * b * l + (bi + 1) * l].copy_from_slice(src);
                }
            }
        }
        self.grad_bias.zip_mut_with(&dy2.sum_axis(Axis(1)), |a, &g| *a += g);
        let cols = im2col(x, k);
        let dw2 = dy2.dot(&cols.t()); // (o, c*k)
        let dw3 = dw2.into_shape_with_order((o, c, k)).unwrap();
        self.grad_weight.zip_mut_with(&dw3, |a, &g| *a += g);
        let w2 = self
            .weight
            .view()
            .into_shape_with_order((o, c * k))
            .unwrap();
        let dcols = w2.t().dot(&dy2); // (c*k, b*l)
        col2im(&dcols, b, c, l, k)
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.fill(F::zero());
        self.grad_bias.fill(F::zero());
    }

    pub fn visit_params(&mut self, f: &mut ParamVisitor<'_, F>) {
        f(
            self.weight.as_slice_mut().unwrap(),
            self.grad_weight.as_slice().unwrap(),
        );
        f(
            self.bias.as_slice_mut().unwrap(),
            self.grad_bias.as_slice().unwrap(),
        );
    }
}

#[derive(Debug, Clone)]
pub struct BnCache<F> {
    x_hat: Array3<F>,
    inv_std: Array1<F>,
    train: bool,
}

/// Per-channel batch normalization over the (batch, length) axes.
#[derive(Debug, Clone)]
pub struct BatchNorm1d<F> {
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
    pub running_mean: Array1<F>,
    pub running_var: Array1<F>,
    pub momentum: F,
    pub eps: F,
    pub grad_gamma: Array1<F>,
    pub grad_beta: Array1<F>,
}

impl<F: NdFloat> BatchNorm1d<F> {
    pub fn new(channels: usize, momentum: f64, eps: f64) -> Self {
        BatchNorm1d {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            momentum: F::from(momentum).unwrap(),
            eps: F::from(eps).unwrap(),
            grad_gamma: Array1::zeros(channels),
            grad_beta: Array1::zeros(channels),
        }
    }

    /// Train mode normalizes by biased batch statistics and (when
    /// `update_running`) blends them into the running estimates; eval mode
    /// normalizes by the running statistics.
    pub fn forward(
        &mut self,
        x: &Array3<F>,
        train: bool,
        update_running: bool,
    ) -> Result<(Array3<F>, BnCache<F>)> {
        let (b, c, l) = x.dim();
        if c != self.gamma.len() {
            return Err(Error::ShapeMismatch(format!(
                "batchnorm expects {} channels, got {c}",
                self.gamma.len()
            )));
        }
        if train && b * l < 2 {
            return Err(Error::invalid(
                "batchnorm train mode needs batch*length >= 2".to_string(),
            ));
        }
        let n = F::from(b * l).unwrap();
        let mut x_hat = Array3::zeros((b, c, l));
        let mut inv_std = Array1::zeros(c);
        let xs = x.as_slice().unwrap();
        let hs = x_hat.as_slice_mut().unwrap();
        for ci in 0..c {
            let (mean, var) = if train {
                let mut sum = F::zero();
                for bi in 0..b {
                    let row = &xs[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                    for &v in row {
                        sum += v;
                    }
                }
                let mean = sum / n;
                let mut sq = F::zero();
                for bi in 0..b {
                    let row = &xs[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                    for &v in row {
                        let d = v - mean;
                        sq += d * d;
                    }
                }
                (mean, sq / n)
            } else {
                (self.running_mean[ci], self.running_var[ci])
            };
            if train && update_running {
                let m = self.momentum;
                self.running_mean[ci] = (F::one() - m) * self.running_mean[ci] + m * mean;
                self.running_var[ci] = (F::one() - m) * self.running_var[ci] + m * var;
            }
            let istd = F::one() / (var + self.eps).sqrt();
            inv_std[ci] = istd;
            for bi in 0..b {
                let src = &xs[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                let dst = &mut hs[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d = (v - mean) * istd;
                }
            }
        }
        let mut y = x_hat.clone();
        let ys = y.as_slice_mut().unwrap();
        let hs = x_hat.as_slice().unwrap();
        for ci in 0..c {
            let (g, be) = (self.gamma[ci], self.beta[ci]);
            for bi in 0..b {
                let dst = &mut ys[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                let src = &hs[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                for (d, &h) in dst.iter_mut().zip(src) {
                    *d = g * h + be;
                }
            }
        }
        Ok((y, BnCache { x_hat, inv_std, train }))
    }

    pub fn backward(&mut self, cache: &BnCache<F>, dy: &Array3<F>) -> Array3<F> {
        let (b, c, l) = dy.dim();
        let n = F::from(b * l).unwrap();
        let mut dx = Array3::zeros((b, c, l));
        let ds = dy.as_slice().unwrap();
        let hs = cache.x_hat.as_slice().unwrap();
        let xs = dx.as_slice_mut().unwrap();
        for ci in 0..c {
            let mut sum_dy = F::zero();
            let mut sum_dy_h = F::zero();
            for bi in 0..b {
                let dyr = &ds[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                let hr = &hs[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                for (d, h) in dyr.iter().zip(hr) {
                    sum_dy += *d;
                    sum_dy_h += *d * *h;
                }
            }
            self.grad_beta[ci] += sum_dy;
            self.grad_gamma[ci] += sum_dy_h;
            let g = self.gamma[ci];
            let istd = cache.inv_std[ci];
            if cache.train {
                let mean_dy = sum_dy / n;
                let mean_dy_h = sum_dy_h / n;
                for bi in 0..b {
                    let dyr = &ds[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                    let hr = &hs[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                    let dst = &mut xs[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                    for i in 0..l {
                        dst[i] = g * istd * (dyr[i] - mean_dy - hr[i] * mean_dy_h);
                    }
                }
            } else {
                for bi in 0..b {
                    let dyr = &ds[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                    let dst = &mut xs[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                    for i in 0..l {
                        dst[i] = g * istd * dyr[i];
                    }
                }
            }
        }
        dx
    }

    pub fn zero_grad(&mut self) {
        self.grad_gamma.fill(F::zero());
        self.grad_beta.fill(F::zero());
    }

    pub fn visit_params(&mut self, f: &mut ParamVisitor<'_, F>) {
        f(
            self.gamma.as_slice_mut().unwrap(),
            self.grad_gamma.as_slice().unwrap(),
        );
        f(
            self.beta.as_slice_mut().unwrap(),
            self.grad_beta.as_slice().unwrap(),
        );
    }
}

/// Elementwise max(0, x).
pub fn relu3<F: NdFloat>(x: &Array3<F>) -> Array3<F> {
    x.mapv(|v| if v > F::zero() { v } else { F::zero() })
}

/// ReLU input gradient from the forward output (positive outputs pass).
pub fn relu3_backward<F: NdFloat>(y: &Array3<F>, dy: &Array3<F>) -> Array3<F> {
    let mut dx = dy.clone();
    dx.zip_mut_with(y, |d, &v| {
        if v <= F::zero() {
            *d = F::zero();
        }
    });
    dx
}

pub fn relu2<F: NdFloat>(x: &Array2<F>) -> Array2<F> {
    x.mapv(|v| if v > F::zero() { v } else { F::zero() })
}

pub fn relu2_backward<F: NdFloat>(y: &Array2<F>, dy: &Array2<F>) -> Array2<F> {
    let mut dx = dy.clone();
    dx.zip_mut_with(y, |d, &v| {
        if v <= F::zero() {
            *d = F::zero();
        }
    });
    dx
}

#[derive(Debug, Clone)]
pub struct PoolCache {
    argmax: Array3<usize>,
    in_len: usize,
}

/// Max pooling with window == stride; a trailing remainder shorter than the
/// window is dropped. Returns the pooled map and the argmax cache (ties take
/// the first index).
pub fn maxpool<F: NdFloat>(x: &Array3<F>, window: usize) -> Result<(Array3<F>, PoolCache)> {
    let (b, c, l) = x.dim();
    let lo = l / window;
    if lo == 0 {
        return Err(Error::ShapeMismatch(format!(
            "pool window {window} exceeds length {l}"
        )));
    }
    let mut y = Array3::zeros((b, c, lo));
    let mut argmax = Array3::zeros((b, c, lo));
    for bi in 0..b {
        for ci in 0..c {
            for li in 0..lo {
                let start = li * window;
                let mut best = x[(bi, ci, start)];
                let mut best_i = start;
                for t in 1..window {
                    let v = x[(bi, ci, start + t)];
                    if v > best {
                        best = v;
                        best_i = start + t;
                    }
                }
                y[(bi, ci, li)] = best;
                argmax[(bi, ci, li)] = best_i;
            }
        }
    }
    Ok((y, PoolCache { argmax, in_len: l }))
}

pub fn maxpool_backward<F: NdFloat>(cache: &PoolCache, dy: &Array3<F>) -> Array3<F> {
    let (b, c, lo) = dy.dim();
    let mut dx = Array3::zeros((b, c, cache.in_len));
    for bi in 0..b {
        for ci in 0..c {
            for li in 0..lo {
                let src = cache.argmax[(bi, ci, li)];
                dx[(bi, ci, src)] += dy[(bi, ci, li)];
            }
        }
    }
    dx
}

/// Fully connected layer, y = x W^T + b.
#[derive(Debug, Clone)]
pub struct Linear<F> {
    pub weight: Array2<F>, // (out, in)
    pub bias: Array1<F>,
    pub grad_weight: Array2<F>,
    pub grad_bias: Array1<F>,
}

impl<F: NdFloat> Linear<F> {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let weight =
            Array2::from_shape_vec((out_dim, in_dim), uniform_init(rng, in_dim, out_dim * in_dim))
                .unwrap();
        Linear {
            weight,
            bias: Array1::zeros(out_dim),
            grad_weight: Array2::zeros((out_dim, in_dim)),
            grad_bias: Array1::zeros(out_dim),
        }
    }

    pub fn forward(&self, x: &Array2<F>) -> Result<Array2<F>> {
        if x.ncols() != self.weight.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "linear expects input width {}, got {}",
                self.weight.ncols(),
                x.ncols()
            )));
        }
        let mut y = x.dot(&self.weight.t());
        for mut row in y.rows_mut() {
            row.zip_mut_with(&self.bias, |a, &b| *a += b);
        }
        Ok(y)
    }

    pub fn backward(&mut self, x: &Array2<F>, dy: &Array2<F>) -> Array2<F> {
        self.grad_weight.zip_mut_with(&dy.t().dot(x), |a, &g| *a += g);
        self.grad_bias.zip_mut_with(&dy.sum_axis(Axis(0)), |a, &g| *a += g);
        dy.dot(&self.weight)
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.fill(F::zero());
        self.grad_bias.fill(F::zero());
    }

    pub fn visit_params(&mut self, f: &mut ParamVisitor<'_, F>) {
        f(
            self.weight.as_slice_mut().unwrap(),
            self.grad_weight.as_slice().unwrap(),
        );
        f(
            self.bias.as_slice_mut().unwrap(),
            self.grad_bias.as_slice().unwrap(),
        );
    }
}

/// Mean softmax cross-entropy over a batch of 2-class logits. Returns the
/// loss and the logit gradient `(softmax - onehot) / batch`.
pub fn softmax_xent<F: NdFloat>(logits: &Array2<F>, targets: &[usize]) -> Result<(F, Array2<F>)> {
    let (b, k) = logits.dim();
    if b != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{b} logits rows but {} targets",
            targets.len()
        )));
    }
    if targets.iter().any(|&t| t >= k) {
        return Err(Error::invalid("target class out of range".to_string()));
    }
    let bn = F::from(b).unwrap();
    let mut dlogits = Array2::zeros((b, k));
    let mut loss = F::zero();
    for (bi, &target) in targets.iter().enumerate() {
        let row = logits.row(bi);
        let m = row.iter().cloned().fold(F::neg_infinity(), F::max);
        let mut denom = F::zero();
        for &v in row {
            denom += (v - m).exp();
        }
        let log_denom = denom.ln() + m;
        loss += log_denom - row[target];
        for j in 0..k {
            let p = (row[j] - log_denom).exp();
            let onehot = if j == target { F::one() } else { F::zero() };
            dlogits[(bi, j)] = (p - onehot) / bn;
        }
    }
    Ok((loss / bn, dlogits))
}
