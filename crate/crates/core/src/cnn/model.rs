//! The 7-layer strided CNN: architecture table, parameters, and the full
//! forward/backward passes (conv -> batch norm -> ReLU, times seven, then
//! global average pooling and an affine head to two classes).

use crate::cnn::ops::{
    batchnorm_backward, batchnorm_eval, batchnorm_train, conv_backward, conv_forward, gap_backward,
    gap_forward, head_backward, head_forward, relu, relu_backward, BnCache, LayerSpec,
};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;
use crate::window::CHANNELS;

pub const DEFAULT_BN_EPS: f64 = 1e-5;
pub const DEFAULT_BN_MOMENTUM: f64 = 0.1;

/// Full-scale input length (58 s at 120 Hz).
pub const FULL_INPUT_LEN: usize = 6960;
/// Desk-scale input length (5.8 s at 120 Hz).
pub const DESK_INPUT_LEN: usize = 696;

/// Kernels, strides, and paddings of the seven layers. The feature-map
/// widths are supplied separately so the desk-scale model can shrink them.
const KERNELS: [(usize, usize); 7] = [(4, 1), (4, 1), (3, 1), (3, 3), (2, 3), (2, 3), (2, 3)];
const STRIDES: [(usize, usize); 7] = [(3, 1), (3, 1), (2, 1), (2, 1), (2, 1), (2, 1), (1, 1)];
const PADS: [(usize, usize); 7] = [(0, 0), (0, 0), (0, 0), (1, 1), (1, 1), (1, 1), (0, 0)];
const FULL_MAPS: [usize; 7] = [16, 32, 64, 64, 64, 64, 64];
const DESK_MAPS: [usize; 7] = [8, 16, 32, 32, 32, 32, 32];

/// Static description of a model: the seven layer specs plus input geometry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub layers: Vec<LayerSpec>,
    pub input_len: usize,
    pub classes: usize,
}

impl Architecture {
    fn with_maps(input_len: usize, maps: &[usize; 7]) -> Self {
        let mut layers = Vec::with_capacity(7);
        let mut in_maps = 1;
        for i in 0..7 {
            layers.push(LayerSpec {
                in_maps,
                out_maps: maps[i],
                kernel: KERNELS[i],
                stride: STRIDES[i],
                pad: PADS[i],
            });
            in_maps = maps[i];
        }
        Architecture {
            layers,
            input_len,
            classes: 2,
        }
    }

    /// Full-scale model: 16-32-64-64-64-64-64 feature maps on 6960 x 3
    /// inputs, reducing through 2319x3, 772x3, 385x3, 193x3, 97x3, 49x3 to
    /// 48x1.
    pub fn full() -> Self {
        Architecture::with_maps(FULL_INPUT_LEN, &FULL_MAPS)
    }

    /// Desk-scale model: same kernels, strides, and paddings with halved
    /// feature maps, for short windows and fast experiments.
    pub fn desk(input_len: usize) -> Self {
        Architecture::with_maps(input_len, &DESK_MAPS)
    }

    /// Pick the full model for full-length windows, desk otherwise.
    pub fn for_window_len(len: usize) -> Self {
        if len == FULL_INPUT_LEN {
            Architecture::full()
        } else {
            Architecture::desk(len)
        }
    }

    pub fn from_layers(layers: Vec<LayerSpec>, input_len: usize, classes: usize) -> Self {
        Architecture {
            layers,
            input_len,
            classes,
        }
    }

    /// Feature count entering the head (= last layer's map count).
    pub fn gap_features(&self) -> usize {
        self.layers.last().map(|l| l.out_maps).unwrap_or(0)
    }

    /// Per-layer output extents for this input length; errors if a layer
    /// would produce an empty output.
    pub fn shape_trace(&self) -> Result<Vec<(usize, usize)>> {
        let mut trace = Vec::with_capacity(self.layers.len());
        let (mut l_t, mut l_c) = (self.input_len, CHANNELS);
        for (i, spec) in self.layers.iter().enumerate() {
            let (o_t, o_c) = spec.out_len(l_t, l_c).map_err(|e| {
                Error::invalid_argument(format!("layer {} invalid for input: {e}", i + 1))
            })?;
            trace.push((o_t, o_c));
            l_t = o_t;
            l_c = o_c;
        }
        Ok(trace)
    }
}

/// All learnable parameters plus batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    pub conv_w: Vec<Tensor>,
    pub conv_b: Vec<Tensor>,
    pub bn_gamma: Vec<Tensor>,
    pub bn_beta: Vec<Tensor>,
    pub bn_mean: Vec<Tensor>,
    pub bn_var: Vec<Tensor>,
    pub head_w: Tensor,
    pub head_b: Tensor,
}

/// Gradients for every learnable tensor, in the same layout as
/// [`ModelParams`] minus the running statistics.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub conv_w: Vec<Tensor>,
    pub conv_b: Vec<Tensor>,
    pub bn_gamma: Vec<Tensor>,
    pub bn_beta: Vec<Tensor>,
    pub head_w: Tensor,
    pub head_b: Tensor,
}

/// Intermediate activations needed by the backward pass.
pub struct ForwardCache {
    /// Input to each conv layer (index 0 is the batch itself).
    conv_inputs: Vec<Tensor>,
    /// Pre-BN conv outputs are not needed; BN caches carry xhat.
    bn_caches: Vec<BnCache>,
    /// Post-BN pre-ReLU activations, for the ReLU mask.
    relu_inputs: Vec<Tensor>,
    /// Output of the last ReLU (input to GAP).
    gap_input: Tensor,
    /// GAP output (input to the head).
    gap_output: Tensor,
}

impl ForwardCache {
    pub fn batch_stats(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.bn_caches
            .iter()
            .map(|c| (c.batch_mean.as_slice(), c.batch_var.as_slice()))
    }
}

impl ModelParams {
    /// He-uniform initialization for conv and head weights, zero biases,
    /// unit gammas, zero betas, and unit running variances. All draws come
    /// from `rng` in declaration order.
    pub fn init(arch: &Architecture, rng: &mut RngStream) -> Self {
        let mut conv_w = Vec::new();
        let mut conv_b = Vec::new();
        let mut bn_gamma = Vec::new();
        let mut bn_beta = Vec::new();
        let mut bn_mean = Vec::new();
        let mut bn_var = Vec::new();
        for spec in &arch.layers {
            let fan_in = (spec.in_maps * spec.kernel.0 * spec.kernel.1) as f64;
            let limit = (6.0 / fan_in).sqrt();
            let shape = spec.weight_shape();
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| rng.uniform(-limit, limit)).collect();
            conv_w.push(Tensor::new(shape.to_vec(), data).expect("init shape"));
            conv_b.push(Tensor::zeros(&[spec.out_maps]));
            bn_gamma.push(Tensor::filled(&[spec.out_maps], 1.0));
            bn_beta.push(Tensor::zeros(&[spec.out_maps]));
            bn_mean.push(Tensor::zeros(&[spec.out_maps]));
            bn_var.push(Tensor::filled(&[spec.out_maps], 1.0));
        }
        let feats = arch.gap_features();
        let limit = (6.0 / feats as f64).sqrt();
        let head_w = Tensor::new(
            vec![arch.classes, feats],
            (0..arch.classes * feats)
                .map(|_| rng.uniform(-limit, limit))
                .collect(),
        )
        .expect("head shape");
        let head_b = Tensor::zeros(&[arch.classes]);
        ModelParams {
            arch: arch.clone(),
            conv_w,
            conv_b,
            bn_gamma,
            bn_beta,
            bn_mean,
            bn_var,
            head_w,
            head_b,
        }
    }

    fn check_input(&self, batch: &Tensor) -> Result<()> {
        let expect = [batch.shape()[0], 1, self.arch.input_len, CHANNELS];
        if batch.rank() != 4 || batch.shape()[1..] != expect[1..] {
            return Err(Error::invalid_argument(format!(
                "model input must be [B, 1, {}, {CHANNELS}], got {:?}",
                self.arch.input_len,
                batch.shape()
            )));
        }
        Ok(())
    }

    /// Train-mode forward pass. Running statistics are not touched; apply
    /// [`ModelParams::update_running_stats`] with the returned cache to
    /// advance them.
    pub fn forward_train(&self, batch: &Tensor, bn_eps: f64) -> Result<(Tensor, ForwardCache)> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        let mut conv_inputs = Vec::with_capacity(7);
        let mut bn_caches = Vec::with_capacity(7);
        let mut relu_inputs = Vec::with_capacity(7);
        for (l, spec) in self.arch.layers.iter().enumerate() {
            conv_inputs.push(x.clone());
            let z = conv_forward(&x, spec, &self.conv_w[l], &self.conv_b[l])?;
            let (normed, cache) = batchnorm_train(&z, &self.bn_gamma[l], &self.bn_beta[l], bn_eps)?;
            bn_caches.push(cache);
            relu_inputs.push(normed.clone());
            x = relu(&normed);
        }
        let gap_input = x;
        let gap_output = gap_forward(&gap_input)?;
        let logits = head_forward(&gap_output, &self.head_w, &self.head_b)?;
        Ok((
            logits,
            ForwardCache {
                conv_inputs,
                bn_caches,
                relu_inputs,
                gap_input,
                gap_output,
            },
        ))
    }

    /// Eval-mode forward pass: batch norm uses the running statistics, so
    /// each sample's logits are independent of the rest of the batch.
    pub fn forward_eval(&self, batch: &Tensor, bn_eps: f64) -> Result<Tensor> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        for (l, spec) in self.arch.layers.iter().enumerate() {
            let z = conv_forward(&x, spec, &self.conv_w[l], &self.conv_b[l])?;
            let normed = batchnorm_eval(
                &z,
                &self.bn_gamma[l],
                &self.bn_beta[l],
                &self.bn_mean[l],
                &self.bn_var[l],
                bn_eps,
            )?;
            x = relu(&normed);
        }
        head_forward(&gap_forward(&x)?, &self.head_w, &self.head_b)
    }

    /// Backward pass from the loss gradient with respect to the logits.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &Tensor) -> Result<Gradients> {
        let (dgap, dhead_w, dhead_b) = head_backward(dlogits, &cache.gap_output, &self.head_w)?;
        let (l_t, l_c) = (cache.gap_input.shape()[2], cache.gap_input.shape()[3]);
        let mut dx = gap_backward(&dgap, l_t, l_c)?;

        let layers = self.arch.layers.len();
        let mut conv_w_g = vec![Tensor::zeros(&[1]); layers];
        let mut conv_b_g = vec![Tensor::zeros(&[1]); layers];
        let mut gamma_g = vec![Tensor::zeros(&[1]); layers];
        let mut beta_g = vec![Tensor::zeros(&[1]); layers];
        for l in (0..layers).rev() {
            let dnormed = relu_backward(&dx, &cache.relu_inputs[l]);
            let (dz, dgamma, dbeta) =
                batchnorm_backward(&dnormed, &cache.bn_caches[l], &self.bn_gamma[l])?;
            let (dinput, dw, db) =
                conv_backward(&dz, &cache.conv_inputs[l], &self.arch.layers[l], &self.conv_w[l])?;
            conv_w_g[l] = dw;
            conv_b_g[l] = db;
            gamma_g[l] = dgamma;
            beta_g[l] = dbeta;
            dx = dinput;
        }
        Ok(Gradients {
            conv_w: conv_w_g,
            conv_b: conv_b_g,
            bn_gamma: gamma_g,
            bn_beta: beta_g,
            head_w: dhead_w,
            head_b: dhead_b,
        })
    }

    /// Fold the cached batch statistics into the running statistics:
    /// `running = (1 - momentum) * running + momentum * batch`.
    pub fn update_running_stats(&mut self, cache: &ForwardCache, momentum: f64) {
        for (l, (mean, var)) in cache.batch_stats().enumerate() {
            for (r, &b) in self.bn_mean[l].data_mut().iter_mut().zip(mean) {
                *r = (1.0 - momentum) * *r + momentum * b;
            }
            for (r, &b) in self.bn_var[l].data_mut().iter_mut().zip(var) {
                *r = (1.0 - momentum) * *r + momentum * b;
            }
        }
    }

    /// Learnable tensors in declaration order, with stable names:
    /// per layer conv weights/bias and bn gamma/beta, then the head.
    pub fn learnables(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for l in 0..self.arch.layers.len() {
            out.push((format!("layer{}.conv.w", l + 1), &self.conv_w[l]));
            out.push((format!("layer{}.conv.b", l + 1), &self.conv_b[l]));
            out.push((format!("layer{}.bn.gamma", l + 1), &self.bn_gamma[l]));
            out.push((format!("layer{}.bn.beta", l + 1), &self.bn_beta[l]));
        }
        out.push(("head.w".to_string(), &self.head_w));
        out.push(("head.b".to_string(), &self.head_b));
        out
    }

    /// Mutable view of the learnables, in the same order as
    /// [`ModelParams::learnables`].
    pub fn learnables_mut(&mut self) -> Vec<&mut Tensor> {
        let layers = self.arch.layers.len();
        let mut slots: Vec<Option<&mut Tensor>> = Vec::new();
        slots.resize_with(4 * layers + 2, || None);
        for (l, t) in self.conv_w.iter_mut().enumerate() {
            slots[4 * l] = Some(t);
        }
        for (l, t) in self.conv_b.iter_mut().enumerate() {
            slots[4 * l + 1] = Some(t);
        }
        for (l, t) in self.bn_gamma.iter_mut().enumerate() {
            slots[4 * l + 2] = Some(t);
        }
        for (l, t) in self.bn_beta.iter_mut().enumerate() {
            slots[4 * l + 3] = Some(t);
        }
        slots[4 * layers] = Some(&mut self.head_w);
        slots[4 * layers + 1] = Some(&mut self.head_b);
        slots.into_iter().map(|s| s.expect("slot filled")).collect()
    }
}

impl Gradients {
    /// Gradient tensors in the same order as [`ModelParams::learnables`].
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in 0..self.conv_w.len() {
            out.push(&self.conv_w[l]);
            out.push(&self.conv_b[l]);
            out.push(&self.bn_gamma[l]);
            out.push(&self.bn_beta[l]);
        }
        out.push(&self.head_w);
        out.push(&self.head_b);
        out
    }
}
