//! Forward and backward passes for the layer kinds the model needs:
//! same-padded stride-1 Conv2D, 2x2 max pooling, Flatten, Dense, ReLU.

use crate::error::{Error, Result};
use crate::nn::tensor::{Scalar, Tensor};

/// Layer configuration, used for construction and parameter accounting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        relu: bool,
    },
    MaxPool2,
    Flatten,
    Dense {
        in_features: usize,
        out_features: usize,
        activation: DenseActivation,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenseActivation {
    None,
    Relu,
    Softmax,
}

/// Trainable parameter count of a layer.
pub fn param_count(spec: &LayerSpec) -> usize {
    match spec {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel_size,
            ..
        } => out_channels * (kernel_size * kernel_size * in_channels) + out_channels,
        LayerSpec::Dense {
            in_features,
            out_features,
            ..
        } => in_features * out_features + out_features,
        LayerSpec::MaxPool2 | LayerSpec::Flatten => 0,
    }
}

/// Same-padded stride-1 convolution of an `[H, W, Cin]` input with
/// `[k, k, Cin, Cout]` weights and `[Cout]` bias.
pub fn conv2d_forward<F: Scalar>(
    input: &Tensor<F>,
    weights: &Tensor<F>,
    bias: &Tensor<F>,
) -> Result<Tensor<F>> {
    let [h, w, cin] = dims3(input, "conv2d input")?;
    let ws = weights.shape();
    if ws.len() != 4 || ws[0] != ws[1] || ws[2] != cin {
        return Err(Error::Shape(format!(
            "conv2d weights {:?} incompatible with input {:?}",
            ws,
            input.shape()
        )));
    }
    let (k, cout) = (ws[0], ws[3]);
    if bias.shape() != [cout] {
        return Err(Error::Shape(format!(
            "conv2d bias {:?}, expected [{cout}]",
            bias.shape()
        )));
    }
    let pad = k / 2;
    let mut out = Tensor::zeros(&[h, w, cout]);
    let inp = input.data();
    let wd = weights.data();
    let bd = bias.data();
    let od = out.data_mut();
    for y in 0..h {
        for x in 0..w {
            let acc = &mut od[(y * w + x) * cout..(y * w + x + 1) * cout];
            acc.copy_from_slice(bd);
            for dy in 0..k {
                let iy = (y + dy).wrapping_sub(pad);
                if iy >= h {
                    continue;
                }
                for dx in 0..k {
                    let ix = (x + dx).wrapping_sub(pad);
                    if ix >= w {
                        continue;
                    }
                    let ivals = &inp[(iy * w + ix) * cin..(iy * w + ix + 1) * cin];
                    let wrow = &wd[((dy * k + dx) * cin) * cout..((dy * k + dx) * cin + cin) * cout];
                    for (ci, &v) in ivals.iter().enumerate() {
                        let wr = &wrow[ci * cout..(ci + 1) * cout];
                        for (a, &wv) in acc.iter_mut().zip(wr) {
                            *a = *a + v * wv;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d_forward`] given the upstream gradient and the cached
/// forward input and weights.
pub fn conv2d_backward<F: Scalar>(
    grad_out: &Tensor<F>,
    input: &Tensor<F>,
    weights: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>)> {
    let [h, w, cin] = dims3(input, "conv2d input")?;
    let ws = weights.shape();
    let (k, cout) = (ws[0], ws[3]);
    if grad_out.shape() != [h, w, cout] {
        return Err(Error::Shape(format!(
            "conv2d grad_out {:?}, expected [{h}, {w}, {cout}]",
            grad_out.shape()
        )));
    }
    let pad = k / 2;
    let mut grad_in = Tensor::zeros(&[h, w, cin]);
    let mut grad_w = Tensor::zeros(&[k, k, cin, cout]);
    let mut grad_b = Tensor::zeros(&[cout]);
    let inp = input.data();
    let wd = weights.data();
    let god = grad_out.data();
    {
        let gb = grad_b.data_mut();
        for px in 0..h * w {
            let g = &god[px * cout..(px + 1) * cout];
            for (b, &gv) in gb.iter_mut().zip(g) {
                *b = *b + gv;
            }
        }
    }
    let gid = grad_in.data_mut();
    let gwd = grad_w.data_mut();
    for y in 0..h {
        for x in 0..w {
            let g = &god[(y * w + x) * cout..(y * w + x + 1) * cout];
            for dy in 0..k {
                let iy = (y + dy).wrapping_sub(pad);
                if iy >= h {
                    continue;
                }
                for dx in 0..k {
                    let ix = (x + dx).wrapping_sub(pad);
                    if ix >= w {
                        continue;
                    }
                    let ibase = (iy * w + ix) * cin;
                    let wbase = (dy * k + dx) * cin * cout;
                    for ci in 0..cin {
                        let iv = inp[ibase + ci];
                        let wr = &wd[wbase + ci * cout..wbase + (ci + 1) * cout];
                        let gw = &mut gwd[wbase + ci * cout..wbase + (ci + 1) * cout];
                        let mut acc = F::zero();
                        for ((&gv, &wv), gwv) in g.iter().zip(wr).zip(gw.iter_mut()) {
                            acc = acc + gv * wv;
                            *gwv = *gwv + gv * iv;
                        }
                        gid[ibase + ci] = gid[ibase + ci] + acc;
                    }
                }
            }
        }
    }
    Ok((grad_in, grad_w, grad_b))
}

/// 2x2 max pooling with stride 2. Returns the pooled tensor and the flat
/// input index of each window winner (ties broken first-in-row-major-scan).
pub fn maxpool2_forward<F: Scalar>(input: &Tensor<F>) -> Result<(Tensor<F>, Vec<usize>)> {
    let [h, w, c] = dims3(input, "maxpool input")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "maxpool requires even spatial dims, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[oh, ow, c]);
    let mut winners = vec![0usize; oh * ow * c];
    let inp = input.data();
    let od = out.data_mut();
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best_idx = (2 * oy * w + 2 * ox) * c + ch;
                let mut best = inp[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                    if inp[idx] > best {
                        best = inp[idx];
                        best_idx = idx;
                    }
                }
                let o = (oy * ow + ox) * c + ch;
                od[o] = best;
                winners[o] = best_idx;
            }
        }
    }
    Ok((out, winners))
}

/// Routes each upstream gradient to its recorded winner position.
pub fn maxpool2_backward<F: Scalar>(
    grad_out: &Tensor<F>,
    winners: &[usize],
    input_shape: &[usize],
) -> Result<Tensor<F>> {
    if grad_out.len() != winners.len() {
        return Err(Error::Usage(
            "maxpool backward cache does not match upstream gradient".into(),
        ));
    }
    let mut grad_in = Tensor::zeros(input_shape);
    let n = grad_in.len();
    let gid = grad_in.data_mut();
    for (&win, &g) in winners.iter().zip(grad_out.data()) {
        if win >= n {
            return Err(Error::Usage("maxpool winner index out of range".into()));
        }
        gid[win] = gid[win] + g;
    }
    Ok(grad_in)
}

/// Fully connected layer: `out = x W + b` for `x: [n]`, `W: [n, m]`, `b: [m]`.
pub fn dense_forward<F: Scalar>(
    input: &Tensor<F>,
    weights: &Tensor<F>,
    bias: &Tensor<F>,
) -> Result<Tensor<F>> {
    let n = input.len();
    let ws = weights.shape();
    if ws.len() != 2 || ws[0] != n || bias.shape() != [ws[1]] {
        return Err(Error::Shape(format!(
            "dense shapes disagree: input [{n}], weights {:?}, bias {:?}",
            ws,
            bias.shape()
        )));
    }
    let m = ws[1];
    let mut out = bias.clone().reshaped(&[m])?;
    let od = out.data_mut();
    let wd = weights.data();
    for (i, &v) in input.data().iter().enumerate() {
        if v == F::zero() {
            continue;
        }
        let wr = &wd[i * m..(i + 1) * m];
        for (o, &wv) in od.iter_mut().zip(wr) {
            *o = *o + v * wv;
        }
    }
    Ok(out)
}

/// Gradients of [`dense_forward`].
pub fn dense_backward<F: Scalar>(
    grad_out: &Tensor<F>,
    input: &Tensor<F>,
    weights: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>)> {
    let n = input.len();
    let m = grad_out.len();
    if weights.shape() != [n, m] {
        return Err(Error::Shape(format!(
            "dense backward: weights {:?}, expected [{n}, {m}]",
            weights.shape()
        )));
    }
    let mut grad_in = Tensor::zeros(&[n]);
    let mut grad_w = Tensor::zeros(&[n, m]);
    let grad_b = grad_out.clone().reshaped(&[m])?;
    let wd = weights.data();
    let god = grad_out.data();
    let gid = grad_in.data_mut();
    let gwd = grad_w.data_mut();
    for (i, &v) in input.data().iter().enumerate() {
        let wr = &wd[i * m..(i + 1) * m];
        let gw = &mut gwd[i * m..(i + 1) * m];
        let mut acc = F::zero();
        for ((&g, &wv), gwv) in god.iter().zip(wr).zip(gw.iter_mut()) {
            acc = acc + g * wv;
            *gwv = g * v;
        }
        gid[i] = acc;
    }
    Ok((grad_in, grad_w, grad_b))
}

/// Elementwise `max(0, x)`; the mask records which inputs were > 0
/// (subgradient at 0 is 0).
pub fn relu_forward<F: Scalar>(input: &Tensor<F>) -> (Tensor<F>, Vec<bool>) {
    let mask: Vec<bool> = input.data().iter().map(|&v| v > F::zero()).collect();
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v < F::zero() {
            *v = F::zero();
        }
    }
    (out, mask)
}

pub fn relu_backward<F: Scalar>(grad_out: &Tensor<F>, mask: &[bool]) -> Result<Tensor<F>> {
    if grad_out.len() != mask.len() {
        return Err(Error::Usage("relu mask does not match gradient".into()));
    }
    let mut grad = grad_out.clone();
    for (g, &m) in grad.data_mut().iter_mut().zip(mask) {
        if !m {
            *g = F::zero();
        }
    }
    Ok(grad)
}

/// Numerically stable softmax over a logit vector.
pub fn softmax<F: Scalar>(logits: &[F]) -> Vec<F> {
    let max = logits
        .iter()
        .copied()
        .fold(F::neg_infinity(), |a, b| if b > a { b } else { a });
    let exps: Vec<F> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum = exps.iter().fold(F::zero(), |a, &b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

fn dims3<F: Scalar>(t: &Tensor<F>, what: &str) -> Result<[usize; 3]> {
    match t.shape() {
        [h, w, c] => Ok([*h, *w, *c]),
        s => Err(Error::Shape(format!("{what} must be rank 3, got {s:?}"))),
    }
}
