//! Layer primitives: strided 2-d convolution (time x channel axes), batch
//! normalization, ReLU, global average pooling, the affine classification
//! head, and softmax cross-entropy. Forward and backward passes are written
//! directly against flat row-major buffers; every backward is checked
//! against central finite differences in the tests.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Geometry of one convolutional layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub in_maps: usize,
    pub out_maps: usize,
    /// (k_t, k_c)
    pub kernel: (usize, usize),
    /// (s_t, s_c)
    pub stride: (usize, usize),
    /// (p_t, p_c)
    pub pad: (usize, usize),
}

impl LayerSpec {
    /// Output extent along one axis: `floor((len + 2*pad - kernel)/stride) + 1`.
    fn out_extent(len: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
        let padded = len + 2 * pad;
        if padded < kernel {
            return Err(Error::invalid_argument(format!(
                "kernel {kernel} exceeds padded extent {padded}"
            )));
        }
        Ok((padded - kernel) / stride + 1)
    }

    /// Output (time, channel) extents for an input of the given extents.
    pub fn out_len(&self, l_t: usize, l_c: usize) -> Result<(usize, usize)> {
        Ok((
            Self::out_extent(l_t, self.kernel.0, self.stride.0, self.pad.0)?,
            Self::out_extent(l_c, self.kernel.1, self.stride.1, self.pad.1)?,
        ))
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_maps, self.in_maps, self.kernel.0, self.kernel.1]
    }
}

/// Cross-correlation with zero padding; bias added per output map.
/// `x` is `[B, in_maps, L_t, L_c]`, `w` is `[out_maps, in_maps, k_t, k_c]`,
/// `b` is `[out_maps]`.
/// Gather the receptive field of every output position of one sample into
/// a `[positions, in_maps * k_t * k_c]` matrix (zeros where the kernel
/// overhangs the padding), so the convolution becomes long contiguous dot
/// products.
struct Im2Col {
    col: Vec<f64>,
    patch: usize,
    positions: usize,
}

#[allow(clippy::too_many_arguments)]
fn im2col(
    xs: &[f64],
    sample_base: usize,
    spec: &LayerSpec,
    l_t: usize,
    l_c: usize,
    o_t: usize,
    o_c: usize,
    buf: &mut Im2Col,
) {
    let (k_t, k_c) = spec.kernel;
    let (s_t, s_c) = spec.stride;
    let (p_t, p_c) = (spec.pad.0 as isize, spec.pad.1 as isize);
    let x_map = l_t * l_c;
    buf.col.iter_mut().for_each(|v| *v = 0.0);
    for ot in 0..o_t {
        let t0 = (ot * s_t) as isize - p_t;
        for oc in 0..o_c {
            let c0 = (oc * s_c) as isize - p_c;
            let row = (ot * o_c + oc) * buf.patch;
            for i in 0..spec.in_maps {
                let xm = sample_base + i * x_map;
                let prow = row + i * k_t * k_c;
                for kt in 0..k_t {
                    let it = t0 + kt as isize;
                    if it < 0 || it >= l_t as isize {
                        continue;
                    }
                    let xrow = xm + it as usize * l_c;
                    let kc_lo = (-c0).max(0) as usize;
                    let kc_hi = k_c.min((l_c as isize - c0).max(0) as usize);
                    for kc in kc_lo..kc_hi {
                        buf.col[prow + kt * k_c + kc] = xs[xrow + (c0 + kc as isize) as usize];
                    }
                }
            }
        }
    }
}

fn new_im2col(spec: &LayerSpec, o_t: usize, o_c: usize) -> Im2Col {
    let patch = spec.in_maps * spec.kernel.0 * spec.kernel.1;
    let positions = o_t * o_c;
    Im2Col {
        col: vec![0.0; positions * patch],
        patch,
        positions,
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, src: &[f64], dst: &mut [f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += alpha * *s;
    }
}

/// Cross-correlation with zero padding; bias added per output map.
/// `x` is `[B, in_maps, L_t, L_c]`, `w` is `[out_maps, in_maps, k_t, k_c]`,
/// `b` is `[out_maps]`.
pub fn conv_forward(x: &Tensor, spec: &LayerSpec, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (batch, l_t, l_c) = check_conv_shapes(x, spec, w, b)?;
    let (o_t, o_c) = spec.out_len(l_t, l_c)?;
    let (in_maps, out_maps) = (spec.in_maps, spec.out_maps);

    let xs = x.data();
    let ws = w.data();
    let bs = b.data();
    let mut out = vec![0.0f64; batch * out_maps * o_t * o_c];
    let mut buf = new_im2col(spec, o_t, o_c);
    let x_sample = in_maps * l_t * l_c;

    for bi in 0..batch {
        im2col(xs, bi * x_sample, spec, l_t, l_c, o_t, o_c, &mut buf);
        let y_base = bi * out_maps * buf.positions;
        for o in 0..out_maps {
            let wrow = &ws[o * buf.patch..(o + 1) * buf.patch];
            let bias = bs[o];
            let y_row = &mut out[y_base + o * buf.positions..y_base + (o + 1) * buf.positions];
            for (p, y) in y_row.iter_mut().enumerate() {
                *y = bias + dot(wrow, &buf.col[p * buf.patch..(p + 1) * buf.patch]);
            }
        }
    }
    Tensor::new(vec![batch, out_maps, o_t, o_c], out)
}

/// Exact gradients of [`conv_forward`] with respect to input, weights, and
/// bias, given the upstream gradient `dy`.
pub fn conv_backward(
    dy: &Tensor,
    x: &Tensor,
    spec: &LayerSpec,
    w: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let batch = x.shape()[0];
    let (l_t, l_c) = (x.shape()[2], x.shape()[3]);
    let (o_t, o_c) = spec.out_len(l_t, l_c)?;
    if dy.shape() != [batch, spec.out_maps, o_t, o_c] {
        return Err(Error::invalid_argument(format!(
            "upstream gradient shape {:?} does not match conv output [{batch}, {}, {o_t}, {o_c}]",
            dy.shape(),
            spec.out_maps
        )));
    }
    let (k_t, k_c) = spec.kernel;
    let (s_t, s_c) = spec.stride;
    let (p_t, p_c) = (spec.pad.0 as isize, spec.pad.1 as isize);
    let (in_maps, out_maps) = (spec.in_maps, spec.out_maps);

    let xs = x.data();
    let ws = w.data();
    let dys = dy.data();
    let mut dx = vec![0.0f64; xs.len()];
    let mut dw = vec![0.0f64; ws.len()];
    let mut db = vec![0.0f64; out_maps];
    let mut buf = new_im2col(spec, o_t, o_c);
    let mut dcol = vec![0.0f64; buf.col.len()];
    let x_sample = in_maps * l_t * l_c;
    let x_map = l_t * l_c;

    for bi in 0..batch {
        im2col(xs, bi * x_sample, spec, l_t, l_c, o_t, o_c, &mut buf);
        let y_base = bi * out_maps * buf.positions;
        dcol.iter_mut().for_each(|v| *v = 0.0);
        for o in 0..out_maps {
            let g_row = &dys[y_base + o * buf.positions..y_base + (o + 1) * buf.positions];
            let wrow = &ws[o * buf.patch..(o + 1) * buf.patch];
            let dwrow = &mut dw[o * buf.patch..(o + 1) * buf.patch];
            for (p, &g) in g_row.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                db[o] += g;
                axpy(g, &buf.col[p * buf.patch..(p + 1) * buf.patch], dwrow);
                axpy(g, wrow, &mut dcol[p * buf.patch..(p + 1) * buf.patch]);
            }
        }
        // Scatter the patch gradients back onto the input (col2im).
        let x_base = bi * x_sample;
        for ot in 0..o_t {
            let t0 = (ot * s_t) as isize - p_t;
            for oc in 0..o_c {
                let c0 = (oc * s_c) as isize - p_c;
                let row = (ot * o_c + oc) * buf.patch;
                for i in 0..in_maps {
                    let xm = x_base + i * x_map;
                    let prow = row + i * k_t * k_c;
                    for kt in 0..k_t {
                        let it = t0 + kt as isize;
                        if it < 0 || it >= l_t as isize {
                            continue;
                        }
                        let xrow = xm + it as usize * l_c;
                        let kc_lo = (-c0).max(0) as usize;
                        let kc_hi = k_c.min((l_c as isize - c0).max(0) as usize);
                        for kc in kc_lo..kc_hi {
                            dx[xrow + (c0 + kc as isize) as usize] += dcol[prow + kt * k_c + kc];
                        }
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), dx)?,
        Tensor::new(w.shape().to_vec(), dw)?,
        Tensor::new(vec![out_maps], db)?,
    ))
}

fn check_conv_shapes(x: &Tensor, spec: &LayerSpec, w: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    if x.rank() != 4 || x.shape()[1] != spec.in_maps {
        return Err(Error::invalid_argument(format!(
            "conv input must be [B, {}, L_t, L_c], got {:?}",
            spec.in_maps,
            x.shape()
        )));
    }
    if w.shape() != spec.weight_shape() {
        return Err(Error::invalid_argument(format!(
            "conv weights must be {:?}, got {:?}",
            spec.weight_shape(),
            w.shape()
        )));
    }
    if b.shape() != [spec.out_maps] {
        return Err(Error::invalid_argument(format!(
            "conv bias must be [{}], got {:?}",
            spec.out_maps,
            b.shape()
        )));
    }
    Ok((x.shape()[0], x.shape()[2], x.shape()[3]))
}

/// Everything the batch-norm backward pass needs from the forward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

/// Train-mode batch normalization over `[B, M, L_t, L_c]`: each feature map
/// is normalized across batch and both spatial axes with the biased batch
/// variance, then scaled by gamma and shifted by beta. Requires batch >= 2.
pub fn batchnorm_train(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
) -> Result<(Tensor, BnCache)> {
    let maps = check_bn_shapes(x, gamma, beta)?;
    if x.shape()[0] < 2 {
        return Err(Error::invalid_argument(
            "batch normalization in train mode requires batch size >= 2",
        ));
    }
    let (batch, l_t, l_c) = (x.shape()[0], x.shape()[2], x.shape()[3]);
    let per_map = l_t * l_c;
    let count = (batch * per_map) as f64;
    let xs = x.data();
    let mut mean = vec![0.0; maps];
    let mut var = vec![0.0; maps];
    for m in 0..maps {
        let mut sum = 0.0;
        for bi in 0..batch {
            let base = (bi * maps + m) * per_map;
            for p in 0..per_map {
                sum += xs[base + p];
            }
        }
        let mu = sum / count;
        let mut sq = 0.0;
        for bi in 0..batch {
            let base = (bi * maps + m) * per_map;
            for p in 0..per_map {
                let d = xs[base + p] - mu;
                sq += d * d;
            }
        }
        mean[m] = mu;
        var[m] = sq / count;
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut xhat = vec![0.0; xs.len()];
    let mut y = vec![0.0; xs.len()];
    let gs = gamma.data();
    let bs = beta.data();
    for bi in 0..batch {
        for m in 0..maps {
            let base = (bi * maps + m) * per_map;
            let (mu, is, g, b) = (mean[m], inv_std[m], gs[m], bs[m]);
            for p in 0..per_map {
                let h = (xs[base + p] - mu) * is;
                xhat[base + p] = h;
                y[base + p] = g * h + b;
            }
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), y)?,
        BnCache {
            xhat: Tensor::new(x.shape().to_vec(), xhat)?,
            inv_std,
            batch_mean: mean,
            batch_var: var,
        },
    ))
}

/// Eval-mode batch normalization: a fixed per-map affine map built from the
/// running statistics.
pub fn batchnorm_eval(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
    eps: f64,
) -> Result<Tensor> {
    let maps = check_bn_shapes(x, gamma, beta)?;
    if running_mean.shape() != [maps] || running_var.shape() != [maps] {
        return Err(Error::invalid_argument("running stats must be [maps]"));
    }
    if running_var.data().iter().any(|&v| v < 0.0) {
        return Err(Error::invalid_argument("running variance must be >= 0"));
    }
    let (batch, l_t, l_c) = (x.shape()[0], x.shape()[2], x.shape()[3]);
    let per_map = l_t * l_c;
    let xs = x.data();
    let mut y = vec![0.0; xs.len()];
    for m in 0..maps {
        let a = gamma.data()[m] / (running_var.data()[m] + eps).sqrt();
        let c = beta.data()[m] - a * running_mean.data()[m];
        for bi in 0..batch {
            let base = (bi * maps + m) * per_map;
            for p in 0..per_map {
                y[base + p] = a * xs[base + p] + c;
            }
        }
    }
    Tensor::new(x.shape().to_vec(), y)
}

/// Gradients of train-mode batch normalization.
pub fn batchnorm_backward(
    dy: &Tensor,
    cache: &BnCache,
    gamma: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let maps = gamma.shape()[0];
    let (batch, l_t, l_c) = (dy.shape()[0], dy.shape()[2], dy.shape()[3]);
    let per_map = l_t * l_c;
    let count = (batch * per_map) as f64;
    let dys = dy.data();
    let xh = cache.xhat.data();
    let mut dgamma = vec![0.0; maps];
    let mut dbeta = vec![0.0; maps];
    let mut dx = vec![0.0; dys.len()];
    for m in 0..maps {
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for bi in 0..batch {
            let base = (bi * maps + m) * per_map;
            for p in 0..per_map {
                sum_dy += dys[base + p];
                sum_dy_xhat += dys[base + p] * xh[base + p];
            }
        }
        dgamma[m] = sum_dy_xhat;
        dbeta[m] = sum_dy;
        let g = gamma.data()[m];
        let is = cache.inv_std[m];
        // dx = gamma * inv_std / m * (m*dy - sum(dy) - xhat * sum(dy*xhat))
        let scale = g * is / count;
        for bi in 0..batch {
            let base = (bi * maps + m) * per_map;
            for p in 0..per_map {
                dx[base + p] =
                    scale * (count * dys[base + p] - sum_dy - xh[base + p] * sum_dy_xhat);
            }
        }
    }
    Ok((
        Tensor::new(dy.shape().to_vec(), dx)?,
        Tensor::new(vec![maps], dgamma)?,
        Tensor::new(vec![maps], dbeta)?,
    ))
}

fn check_bn_shapes(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<usize> {
    if x.rank() != 4 {
        return Err(Error::invalid_argument(format!(
            "batch norm input must be [B, M, L_t, L_c], got {:?}",
            x.shape()
        )));
    }
    let maps = x.shape()[1];
    if gamma.shape() != [maps] || beta.shape() != [maps] {
        return Err(Error::invalid_argument("gamma/beta must be [maps]"));
    }
    Ok(maps)
}

/// Elementwise max(0, x).
pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("shape preserved")
}

/// ReLU gradient; the subgradient at exactly 0 is defined as 0.
pub fn relu_backward(dy: &Tensor, x: &Tensor) -> Tensor {
    let data = dy
        .data()
        .iter()
        .zip(x.data())
        .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("shape preserved")
}

/// Global average pooling: mean over all spatial positions per feature map,
/// `[B, M, L_t, L_c] -> [B, M]`.
pub fn gap_forward(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 4 {
        return Err(Error::invalid_argument(format!(
            "gap input must be [B, M, L_t, L_c], got {:?}",
            x.shape()
        )));
    }
    let (batch, maps, per_map) = (x.shape()[0], x.shape()[1], x.shape()[2] * x.shape()[3]);
    let xs = x.data();
    let mut y = vec![0.0; batch * maps];
    for bi in 0..batch {
        for m in 0..maps {
            let base = (bi * maps + m) * per_map;
            let mut sum = 0.0;
            for p in 0..per_map {
                sum += xs[base + p];
            }
            y[bi * maps + m] = sum / per_map as f64;
        }
    }
    Tensor::new(vec![batch, maps], y)
}

/// Spread the pooled gradient uniformly back over the spatial positions.
pub fn gap_backward(dy: &Tensor, l_t: usize, l_c: usize) -> Result<Tensor> {
    let (batch, maps) = (dy.shape()[0], dy.shape()[1]);
    let per_map = l_t * l_c;
    let mut dx = vec![0.0; batch * maps * per_map];
    for bi in 0..batch {
        for m in 0..maps {
            let g = dy.data()[bi * maps + m] / per_map as f64;
            let base = (bi * maps + m) * per_map;
            for p in 0..per_map {
                dx[base + p] = g;
            }
        }
    }
    Tensor::new(vec![batch, maps, l_t, l_c], dx)
}

/// Affine classification head: `logits = g W^T + b` with `w` of shape
/// `[classes, features]`.
pub fn head_forward(g: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (batch, feats) = (g.shape()[0], g.shape()[1]);
    let classes = w.shape()[0];
    if w.shape() != [classes, feats] || b.shape() != [classes] {
        return Err(Error::invalid_argument(format!(
            "head shapes inconsistent: g {:?}, w {:?}, b {:?}",
            g.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let mut out = vec![0.0; batch * classes];
    for bi in 0..batch {
        for k in 0..classes {
            let mut acc = b.data()[k];
            for f in 0..feats {
                acc += g.data()[bi * feats + f] * w.data()[k * feats + f];
            }
            out[bi * classes + k] = acc;
        }
    }
    Tensor::new(vec![batch, classes], out)
}

/// Gradients of the head: `(dg, dw, db)`.
pub fn head_backward(dlogits: &Tensor, g: &Tensor, w: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (batch, feats) = (g.shape()[0], g.shape()[1]);
    let classes = w.shape()[0];
    let mut dg = vec![0.0; batch * feats];
    let mut dw = vec![0.0; classes * feats];
    let mut db = vec![0.0; classes];
    for bi in 0..batch {
        for k in 0..classes {
            let gl = dlogits.data()[bi * classes + k];
            db[k] += gl;
            for f in 0..feats {
                dg[bi * feats + f] += gl * w.data()[k * feats + f];
                dw[k * feats + f] += gl * g.data()[bi * feats + f];
            }
        }
    }
    Ok((
        Tensor::new(vec![batch, feats], dg)?,
        Tensor::new(vec![classes, feats], dw)?,
        Tensor::new(vec![classes], db)?,
    ))
}

/// Softmax cross-entropy averaged over the batch. Returns the loss, its
/// gradient with respect to the logits (`(softmax - onehot)/B`), and the
/// per-row class probabilities.
pub fn softmax_xent(logits: &Tensor, labels: &[u8]) -> Result<(f64, Tensor, Tensor)> {
    let (batch, classes) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != batch {
        return Err(Error::invalid_argument(format!(
            "label count {} != batch size {batch}",
            labels.len()
        )));
    }
    if labels.iter().any(|&l| (l as usize) >= classes) {
        return Err(Error::invalid_argument("label out of range"));
    }
    let mut probs = vec![0.0; batch * classes];
    let mut dlogits = vec![0.0; batch * classes];
    let mut loss = 0.0;
    for bi in 0..batch {
        let row = &logits.data()[bi * classes..(bi + 1) * classes];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let y = labels[bi] as usize;
        loss += -(exps[y] / sum).ln();
        for k in 0..classes {
            let p = exps[k] / sum;
            probs[bi * classes + k] = p;
            dlogits[bi * classes + k] =
                (p - if k == y { 1.0 } else { 0.0 }) / batch as f64;
        }
    }
    Ok((
        loss / batch as f64,
        Tensor::new(vec![batch, classes], dlogits)?,
        Tensor::new(vec![batch, classes], probs)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    fn random_tensor(shape: &[usize], seed: u64, scale: f64) -> Tensor {
        let mut rng = derive_stream(seed, 77);
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.uniform(-scale, scale)).collect();
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    /// Most literal cross-correlation: explicit bounds check per tap.
    fn conv_oracle(x: &Tensor, spec: &LayerSpec, w: &Tensor, b: &Tensor) -> Tensor {
        let (batch, l_t, l_c) = (x.shape()[0], x.shape()[2], x.shape()[3]);
        let (o_t, o_c) = spec.out_len(l_t, l_c).unwrap();
        let mut y = Tensor::zeros(&[batch, spec.out_maps, o_t, o_c]);
        for bi in 0..batch {
            for o in 0..spec.out_maps {
                for ot in 0..o_t {
                    for oc in 0..o_c {
                        let mut acc = b.data()[o];
                        for i in 0..spec.in_maps {
                            for kt in 0..spec.kernel.0 {
                                for kc in 0..spec.kernel.1 {
                                    let it = (ot * spec.stride.0 + kt) as isize - spec.pad.0 as isize;
                                    let ic = (oc * spec.stride.1 + kc) as isize - spec.pad.1 as isize;
                                    if it < 0 || ic < 0 || it >= l_t as isize || ic >= l_c as isize {
                                        continue;
                                    }
                                    acc += x.get(&[bi, i, it as usize, ic as usize])
                                        * w.get(&[o, i, kt, kc]);
                                }
                            }
                        }
                        y.set(&[bi, o, ot, oc], acc);
                    }
                }
            }
        }
        y
    }

    #[test]
    fn conv_shape_arithmetic_matches_published_sizes() {
        let l1 = LayerSpec { in_maps: 1, out_maps: 16, kernel: (4, 1), stride: (3, 1), pad: (0, 0) };
        assert_eq!(l1.out_len(6960, 3).unwrap(), (2319, 3));
        let l4 = LayerSpec { in_maps: 64, out_maps: 64, kernel: (3, 3), stride: (2, 1), pad: (1, 1) };
        assert_eq!(l4.out_len(385, 3).unwrap(), (193, 3));
    }

    #[test]
    fn conv_identity_kernel_passes_through() {
        let spec = LayerSpec { in_maps: 1, out_maps: 1, kernel: (1, 1), stride: (1, 1), pad: (0, 0) };
        let x = Tensor::new(vec![1, 1, 1, 1], vec![0.625]).unwrap();
        let w = Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        let b = Tensor::new(vec![1], vec![0.0]).unwrap();
        let y = conv_forward(&x, &spec, &w, &b).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv_forward_matches_naive_oracle() {
        for (seed, spec) in [
            (1u64, LayerSpec { in_maps: 1, out_maps: 2, kernel: (3, 1), stride: (2, 1), pad: (0, 0) }),
            (2, LayerSpec { in_maps: 2, out_maps: 3, kernel: (3, 3), stride: (2, 1), pad: (1, 1) }),
            (3, LayerSpec { in_maps: 2, out_maps: 2, kernel: (2, 3), stride: (1, 1), pad: (0, 0) }),
        ] {
            let x = random_tensor(&[2, spec.in_maps, 7, 3], seed, 1.0);
            let w = random_tensor(&spec.weight_shape(), seed + 10, 0.5);
            let b = random_tensor(&[spec.out_maps], seed + 20, 0.5);
            let y = conv_forward(&x, &spec, &w, &b).unwrap();
            let oracle = conv_oracle(&x, &spec, &w, &b);
            assert_eq!(y.shape(), oracle.shape());
            for (a, e) in y.data().iter().zip(oracle.data()) {
                assert!((a - e).abs() < 1e-12, "{a} vs {e}");
            }
        }
    }

    #[test]
    fn conv_backward_zero_upstream_gives_zero_grads() {
        let spec = LayerSpec { in_maps: 2, out_maps: 2, kernel: (3, 3), stride: (2, 1), pad: (1, 1) };
        let x = random_tensor(&[2, 2, 9, 3], 4, 1.0);
        let w = random_tensor(&spec.weight_shape(), 5, 0.5);
        let (o_t, o_c) = spec.out_len(9, 3).unwrap();
        let dy = Tensor::zeros(&[2, 2, o_t, o_c]);
        let (dx, dw, db) = conv_backward(&dy, &x, &spec, &w).unwrap();
        assert!(dx.data().iter().all(|&v| v == 0.0));
        assert!(dw.data().iter().all(|&v| v == 0.0));
        assert!(db.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        // Loss = 0.5 * sum(y^2); dL/dy = y.
        let spec = LayerSpec { in_maps: 1, out_maps: 2, kernel: (3, 1), stride: (2, 1), pad: (0, 0) };
        let x = random_tensor(&[2, 1, 7, 3], 6, 1.0);
        let w = random_tensor(&spec.weight_shape(), 7, 0.5);
        let b = random_tensor(&[2], 8, 0.5);
        let loss = |x: &Tensor, w: &Tensor, b: &Tensor| -> f64 {
            let y = conv_forward(x, &spec, w, b).unwrap();
            0.5 * y.data().iter().map(|v| v * v).sum::<f64>()
        };
        let y = conv_forward(&x, &spec, &w, &b).unwrap();
        let (dx, dw, db) = conv_backward(&y, &x, &spec, &w).unwrap();

        let h = 1e-5;
        let check = |analytic: &Tensor, mut bump: Box<dyn FnMut(usize, f64) -> f64>| {
            for i in 0..analytic.len() {
                let n = (bump(i, h) - bump(i, -h)) / (2.0 * h);
                let a = analytic.data()[i];
                let rel = (a - n).abs() / (a.abs() + n.abs()).max(1e-3);
                assert!(rel < 1e-6, "coord {i}: analytic {a}, numeric {n}");
            }
        };
        let (xc, wc, bc) = (x.clone(), w.clone(), b.clone());
        check(
            &dx,
            Box::new(move |i, d| {
                let mut xp = xc.clone();
                xp.data_mut()[i] += d;
                loss(&xp, &wc, &bc)
            }),
        );
        let (xc, wc, bc) = (x.clone(), w.clone(), b.clone());
        check(
            &dw,
            Box::new(move |i, d| {
                let mut wp = wc.clone();
                wp.data_mut()[i] += d;
                loss(&xc, &wp, &bc)
            }),
        );
        let (xc, wc, bc) = (x, w, b);
        check(
            &db,
            Box::new(move |i, d| {
                let mut bp = bc.clone();
                bp.data_mut()[i] += d;
                loss(&xc, &wc, &bp)
            }),
        );
    }

    #[test]
    fn conv_weight_gradient_is_batch_additive() {
        let spec = LayerSpec { in_maps: 2, out_maps: 2, kernel: (2, 3), stride: (1, 1), pad: (1, 1) };
        let x = random_tensor(&[2, 2, 6, 3], 9, 1.0);
        let w = random_tensor(&spec.weight_shape(), 10, 0.5);
        let (o_t, o_c) = spec.out_len(6, 3).unwrap();
        let dy = random_tensor(&[2, 2, o_t, o_c], 11, 1.0);
        let (_, dw_full, _) = conv_backward(&dy, &x, &spec, &w).unwrap();

        let mut dw_sum = vec![0.0; dw_full.len()];
        for bi in 0..2 {
            let x1 = Tensor::new(
                vec![1, 2, 6, 3],
                x.data()[bi * 36..(bi + 1) * 36].to_vec(),
            )
            .unwrap();
            let dy1 = Tensor::new(
                vec![1, 2, o_t, o_c],
                dy.data()[bi * 2 * o_t * o_c..(bi + 1) * 2 * o_t * o_c].to_vec(),
            )
            .unwrap();
            let (_, dw1, _) = conv_backward(&dy1, &x1, &spec, &w).unwrap();
            for (s, v) in dw_sum.iter_mut().zip(dw1.data()) {
                *s += v;
            }
        }
        for (full, sum) in dw_full.data().iter().zip(&dw_sum) {
            assert!((full - sum).abs() < 1e-12);
        }
    }

    #[test]
    fn batchnorm_train_normalizes_per_map() {
        let x = random_tensor(&[4, 3, 5, 2], 12, 2.0);
        let gamma = Tensor::filled(&[3], 1.0);
        let beta = Tensor::zeros(&[3]);
        // Tiny eps: the check is on the normalization law itself, and eps
        // shifts the output variance by eps/var.
        let (y, _) = batchnorm_train(&x, &gamma, &beta, 1e-12).unwrap();
        for m in 0..3 {
            let mut vals = Vec::new();
            for bi in 0..4 {
                for t in 0..5 {
                    for c in 0..2 {
                        vals.push(y.get(&[bi, m, t, c]));
                    }
                }
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9, "map {m} mean {mean}");
            assert!((var - 1.0).abs() < 1e-6, "map {m} var {var}");
        }
    }

    #[test]
    fn batchnorm_gamma_beta_affine_law() {
        let x = random_tensor(&[8, 2, 4, 3], 13, 1.5);
        let gamma = Tensor::filled(&[2], 2.0);
        let beta = Tensor::filled(&[2], 3.0);
        let (y, _) = batchnorm_train(&x, &gamma, &beta, 1e-12).unwrap();
        for m in 0..2 {
            let mut vals = Vec::new();
            for bi in 0..8 {
                for t in 0..4 {
                    for c in 0..3 {
                        vals.push(y.get(&[bi, m, t, c]));
                    }
                }
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let std = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
            assert!((mean - 3.0).abs() < 1e-6);
            assert!((std - 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn batchnorm_train_rejects_batch_of_one() {
        let x = random_tensor(&[1, 2, 4, 3], 14, 1.0);
        let gamma = Tensor::filled(&[2], 1.0);
        let beta = Tensor::zeros(&[2]);
        assert!(batchnorm_train(&x, &gamma, &beta, 1e-5).is_err());
    }

    #[test]
    fn batchnorm_eval_composes_as_affine() {
        let x = random_tensor(&[2, 2, 3, 3], 15, 1.0);
        let gamma = Tensor::new(vec![2], vec![1.5, 0.5]).unwrap();
        let beta = Tensor::new(vec![2], vec![-0.25, 1.0]).unwrap();
        let rm = Tensor::new(vec![2], vec![0.1, -0.2]).unwrap();
        let rv = Tensor::new(vec![2], vec![0.9, 1.4]).unwrap();
        let eps = 1e-5;
        let once = batchnorm_eval(&x, &gamma, &beta, &rm, &rv, eps).unwrap();
        let twice = batchnorm_eval(&once, &gamma, &beta, &rm, &rv, eps).unwrap();
        // Compose y = a x + c with itself analytically: a^2 x + (a c + c).
        for m in 0..2 {
            let a = gamma.data()[m] / (rv.data()[m] + eps).sqrt();
            let c = beta.data()[m] - a * rm.data()[m];
            for bi in 0..2 {
                for t in 0..3 {
                    for ch in 0..3 {
                        let v = x.get(&[bi, m, t, ch]);
                        let expect = a * a * v + a * c + c;
                        assert!((twice.get(&[bi, m, t, ch]) - expect).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn batchnorm_backward_matches_finite_differences() {
        let x = random_tensor(&[3, 2, 4, 3], 16, 1.0);
        let gamma = Tensor::new(vec![2], vec![1.3, 0.7]).unwrap();
        let beta = Tensor::new(vec![2], vec![0.2, -0.4]).unwrap();
        let eps = 1e-5;
        // Loss = sum(y * r) with fixed random r.
        let r = random_tensor(&[3, 2, 4, 3], 17, 1.0);
        let loss = |x: &Tensor, g: &Tensor, b: &Tensor| -> f64 {
            let (y, _) = batchnorm_train(x, g, b, eps).unwrap();
            y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = batchnorm_train(&x, &gamma, &beta, eps).unwrap();
        let (dx, dgamma, dbeta) = batchnorm_backward(&r, &cache, &gamma).unwrap();
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let lp = loss(&xp, &gamma, &beta);
            xp.data_mut()[i] -= 2.0 * h;
            let lm = loss(&xp, &gamma, &beta);
            let n = (lp - lm) / (2.0 * h);
            let a = dx.data()[i];
            assert!(
                (a - n).abs() / (a.abs() + n.abs()).max(1e-3) < 1e-5,
                "dx[{i}]: {a} vs {n}"
            );
        }
        for m in 0..2 {
            let mut gp = gamma.clone();
            gp.data_mut()[m] += h;
            let lp = loss(&x, &gp, &beta);
            gp.data_mut()[m] -= 2.0 * h;
            let lm = loss(&x, &gp, &beta);
            let n = (lp - lm) / (2.0 * h);
            assert!((dgamma.data()[m] - n).abs() < 1e-5);

            let mut bp = beta.clone();
            bp.data_mut()[m] += h;
            let lp = loss(&x, &gamma, &bp);
            bp.data_mut()[m] -= 2.0 * h;
            let lm = loss(&x, &gamma, &bp);
            let n = (lp - lm) / (2.0 * h);
            assert!((dbeta.data()[m] - n).abs() < 1e-5);
        }
    }

    #[test]
    fn relu_values_and_mask() {
        let x = Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let dy = Tensor::new(vec![3], vec![5.0, 5.0, 5.0]).unwrap();
        assert_eq!(relu_backward(&dy, &x).data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn relu_finite_difference_away_from_zero() {
        let x = random_tensor(&[40], 18, 2.0);
        let dy = Tensor::filled(&[40], 1.0);
        let grad = relu_backward(&dy, &x);
        let h = 1e-6;
        for i in 0..x.len() {
            if x.data()[i].abs() <= 1e-3 {
                continue;
            }
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let lp: f64 = relu(&xp).data().iter().sum();
            xp.data_mut()[i] -= 2.0 * h;
            let lm: f64 = relu(&xp).data().iter().sum();
            let n = (lp - lm) / (2.0 * h);
            let a = grad.data()[i];
            assert!((a - n).abs() / (a.abs() + n.abs()).max(1.0) < 1e-6);
        }
    }

    #[test]
    fn gap_constant_and_mean() {
        let x = Tensor::filled(&[2, 3, 48, 1], 0.75);
        let y = gap_forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.75));

        let ramp = Tensor::new(vec![1, 1, 48, 1], (1..=48).map(|v| v as f64).collect()).unwrap();
        let y = gap_forward(&ramp).unwrap();
        assert!((y.data()[0] - 24.5).abs() < 1e-12);
    }

    #[test]
    fn gap_backward_matches_finite_differences() {
        let x = random_tensor(&[2, 2, 4, 1], 19, 1.0);
        let r = random_tensor(&[2, 2], 20, 1.0);
        let loss = |x: &Tensor| -> f64 {
            gap_forward(x)
                .unwrap()
                .data()
                .iter()
                .zip(r.data())
                .map(|(a, b)| a * b)
                .sum()
        };
        let dx = gap_backward(&r, 4, 1).unwrap();
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let lp = loss(&xp);
            xp.data_mut()[i] -= 2.0 * h;
            let lm = loss(&xp);
            let n = (lp - lm) / (2.0 * h);
            let a = dx.data()[i];
            assert!((a - n).abs() / (a.abs() + n.abs()).max(1e-3) < 1e-9);
        }
    }

    #[test]
    fn softmax_xent_equal_logits_is_ln2() {
        let logits = Tensor::zeros(&[4, 2]);
        let (loss, _, probs) = softmax_xent(&logits, &[0, 1, 0, 1]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        for row in probs.data().chunks(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = random_tensor(&[5, 2], 21, 3.0);
        let (_, _, probs) = softmax_xent(&logits, &[0, 1, 1, 0, 1]).unwrap();
        for row in probs.data().chunks(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_xent_gradient_matches_finite_differences() {
        let logits = random_tensor(&[3, 2], 22, 2.0);
        let labels = [0u8, 1, 1];
        let (_, dlogits, _) = softmax_xent(&logits, &labels).unwrap();
        let h = 1e-6;
        for i in 0..logits.len() {
            let mut lp = logits.clone();
            lp.data_mut()[i] += h;
            let (up, _, _) = softmax_xent(&lp, &labels).unwrap();
            lp.data_mut()[i] -= 2.0 * h;
            let (dn, _, _) = softmax_xent(&lp, &labels).unwrap();
            let n = (up - dn) / (2.0 * h);
            let a = dlogits.data()[i];
            assert!(
                (a - n).abs() / (a.abs() + n.abs()).max(1e-3) < 1e-7,
                "coord {i}: {a} vs {n}"
            );
        }
    }

    #[test]
    fn head_backward_matches_finite_differences() {
        let g = random_tensor(&[3, 4], 23, 1.0);
        let w = random_tensor(&[2, 4], 24, 0.7);
        let b = random_tensor(&[2], 25, 0.3);
        let labels = [1u8, 0, 1];
        let loss = |g: &Tensor, w: &Tensor, b: &Tensor| -> f64 {
            let logits = head_forward(g, w, b).unwrap();
            softmax_xent(&logits, &labels).unwrap().0
        };
        let logits = head_forward(&g, &w, &b).unwrap();
        let (_, dlogits, _) = softmax_xent(&logits, &labels).unwrap();
        let (dg, dw, db) = head_backward(&dlogits, &g, &w).unwrap();
        let h = 1e-6;
        let rel = |a: f64, n: f64| (a - n).abs() / (a.abs() + n.abs()).max(1e-3);
        for i in 0..g.len() {
            let mut gp = g.clone();
            gp.data_mut()[i] += h;
            let lp = loss(&gp, &w, &b);
            gp.data_mut()[i] -= 2.0 * h;
            let lm = loss(&gp, &w, &b);
            assert!(rel(dg.data()[i], (lp - lm) / (2.0 * h)) < 1e-6);
        }
        for i in 0..w.len() {
            let mut wp = w.clone();
            wp.data_mut()[i] += h;
            let lp = loss(&g, &wp, &b);
            wp.data_mut()[i] -= 2.0 * h;
            let lm = loss(&g, &wp, &b);
            assert!(rel(dw.data()[i], (lp - lm) / (2.0 * h)) < 1e-6);
        }
        for i in 0..b.len() {
            let mut bp = b.clone();
            bp.data_mut()[i] += h;
            let lp = loss(&g, &w, &bp);
            bp.data_mut()[i] -= 2.0 * h;
            let lm = loss(&g, &w, &bp);
            assert!(rel(db.data()[i], (lp - lm) / (2.0 * h)) < 1e-6);
        }
    }
}
