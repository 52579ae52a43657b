//! Statistical features over sliding sub-windows, and a regularized
//! logistic-regression baseline classifier trained on them.
//!
//! The extractor works on the full-scale 6960-sample window: 5-second
//! (600-sample) and 10-second (1200-sample) sub-windows slide with a stride
//! of half the sub-window from offset 0, truncated tails included, giving
//! 24 + 12 = 36 sub-windows. Five statistics (mean, variance, skewness,
//! kurtosis, maximum) per sub-window and channel yield 36 * 3 * 5 = 540
//! values, ordered (sub-window size, sub-window index, channel, statistic).
//! Variance is the population (biased) moment; kurtosis is the raw
//! standardized fourth moment with no excess subtracted; skewness and
//! kurtosis of a zero-variance sub-window are 0.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::window::{Window, CHANNELS};

/// Window length the extractor is defined for.
pub const FEATURE_WINDOW_LEN: usize = 6960;
/// Output dimension.
pub const FEATURE_DIM: usize = 540;

/// (sub-window length, stride) pairs in feature order.
const SUBWINDOWS: [(usize, usize); 2] = [(600, 300), (1200, 600)];
const STATS_PER_SUBWINDOW: usize = 5;

/// A 540-dimensional feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Tensor,
}

impl FeatureVector {
    pub fn new(values: Tensor) -> Result<Self> {
        if values.shape() != [FEATURE_DIM] {
            return Err(Error::invalid_argument(format!(
                "feature vector must have shape [{FEATURE_DIM}], got {:?}",
                values.shape()
            )));
        }
        if !values.all_finite() {
            return Err(Error::invalid_argument("feature vector must be finite"));
        }
        Ok(FeatureVector { values })
    }

    pub fn values(&self) -> &[f64] {
        self.values.data()
    }
}

/// Mean, population variance, skewness, raw kurtosis, and maximum of one
/// channel slice. All-equal slices short-circuit to exact degenerate moments.
fn moments(slice: &[f64], channel: usize) -> [f64; STATS_PER_SUBWINDOW] {
    let n = slice.len() / CHANNELS;
    let first = slice[channel];
    let mut all_equal = true;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for i in 0..n {
        let v = slice[i * CHANNELS + channel];
        all_equal &= v == first;
        max = max.max(v);
        sum += v;
    }
    if all_equal {
        return [first, 0.0, 0.0, 0.0, first];
    }
    let mean = sum / n as f64;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let d = slice[i * CHANNELS + channel] - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n as f64;
    m3 /= n as f64;
    m4 /= n as f64;
    let (skew, kurt) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    } else {
        (0.0, 0.0)
    };
    [mean, m2, skew, kurt, max]
}

/// Extract the 540-dimensional feature vector from one full-scale window.
pub fn extract_features(w: &Window) -> Result<FeatureVector> {
    if w.len() != FEATURE_WINDOW_LEN {
        return Err(Error::invalid_argument(format!(
            "feature extraction requires {FEATURE_WINDOW_LEN}-sample windows, got {}",
            w.len()
        )));
    }
    let data = w.samples().data();
    let mut out = Vec::with_capacity(FEATURE_DIM);
    for (size, stride) in SUBWINDOWS {
        let mut offset = 0;
        while offset < FEATURE_WINDOW_LEN {
            let end = (offset + size).min(FEATURE_WINDOW_LEN);
            let slice = &data[offset * CHANNELS..end * CHANNELS];
            for c in 0..CHANNELS {
                out.extend_from_slice(&moments(slice, c));
            }
            offset += stride;
        }
    }
    debug_assert_eq!(out.len(), FEATURE_DIM);
    FeatureVector::new(Tensor::new(vec![FEATURE_DIM], out)?)
}

/// Standardizing logistic-regression baseline. Standardization statistics
/// come from the training folds only; std entries are floored at 1e-8.
#[derive(Debug, Clone)]
pub struct BaselineModel {
    weights: Tensor,
    bias: f64,
    l2: f64,
    feat_mean: Tensor,
    feat_std: Tensor,
}

impl BaselineModel {
    pub fn weights(&self) -> &[f64] {
        self.weights.data()
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Fit L2-regularized logistic regression by full-batch gradient descent.
/// The regularizer is `l2/2 * ||w||^2` (bias excluded); the data term is the
/// mean cross-entropy.
pub fn train_baseline(
    features: &[FeatureVector],
    labels: &[u8],
    l2: f64,
    epochs: usize,
    lr: f64,
) -> Result<BaselineModel> {
    if features.len() != labels.len() {
        return Err(Error::invalid_argument(format!(
            "feature count {} != label count {}",
            features.len(),
            labels.len()
        )));
    }
    if features.len() < 2 {
        return Err(Error::invalid_argument("need at least 2 training examples"));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::invalid_argument("labels must be 0 or 1"));
    }
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::invalid_argument(
            "both classes must be present in the training set",
        ));
    }
    if !(l2 >= 0.0 && l2.is_finite()) {
        return Err(Error::invalid_argument(format!("l2 must be >= 0, got {l2}")));
    }
    let n = features.len();
    let dim = FEATURE_DIM;

    let mut mean = vec![0.0; dim];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f.values()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut std = vec![0.0; dim];
    for f in features {
        for (s, (v, m)) in std.iter_mut().zip(f.values().iter().zip(&mean)) {
            let d = v - m;
            *s += d * d;
        }
    }
    std.iter_mut().for_each(|s| *s = (*s / n as f64).sqrt().max(1e-8));

    // Pre-standardize once.
    let x: Vec<Vec<f64>> = features
        .iter()
        .map(|f| {
            f.values()
                .iter()
                .zip(mean.iter().zip(&std))
                .map(|(v, (m, s))| (v - m) / s)
                .collect()
        })
        .collect();

    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut grad_w = vec![0.0; dim];
    for _ in 0..epochs {
        grad_w.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        for (xi, &yi) in x.iter().zip(labels) {
            let z = b + w.iter().zip(xi).map(|(wj, xj)| wj * xj).sum::<f64>();
            let err = sigmoid(z) - yi as f64;
            for (g, xj) in grad_w.iter_mut().zip(xi) {
                *g += err * xj;
            }
            grad_b += err;
        }
        for (wj, g) in w.iter_mut().zip(&grad_w) {
            *wj -= lr * (g / n as f64 + l2 * *wj);
        }
        b -= lr * grad_b / n as f64;
    }

    Ok(BaselineModel {
        weights: Tensor::new(vec![dim], w)?,
        bias: b,
        l2,
        feat_mean: Tensor::new(vec![dim], mean)?,
        feat_std: Tensor::new(vec![dim], std)?,
    })
}

/// Class-1 probability for one feature vector.
pub fn predict_baseline(m: &BaselineModel, f: &FeatureVector) -> f64 {
    sigmoid(baseline_score(m, f))
}

/// Affine score before the sigmoid (useful for symmetry checks).
pub fn baseline_score(m: &BaselineModel, f: &FeatureVector) -> f64 {
    let mut z = m.bias;
    for ((v, mean), (std, w)) in f
        .values()
        .iter()
        .zip(m.feat_mean.data())
        .zip(m.feat_std.data().iter().zip(m.weights.data()))
    {
        z += w * (v - mean) / std;
    }
    z
}

/// Gradient norm of the regularized loss at the model's current parameters;
/// small values certify first-order optimality.
pub fn baseline_grad_norm(m: &BaselineModel, features: &[FeatureVector], labels: &[u8]) -> f64 {
    let n = features.len();
    let mut grad_w = vec![0.0; FEATURE_DIM];
    let mut grad_b = 0.0;
    for (f, &y) in features.iter().zip(labels) {
        let err = predict_baseline(m, f) - y as f64;
        for (g, ((v, mean), std)) in grad_w.iter_mut().zip(
            f.values()
                .iter()
                .zip(m.feat_mean.data())
                .zip(m.feat_std.data()),
        ) {
            *g += err * (v - mean) / std;
        }
        grad_b += err;
    }
    let mut sq = 0.0;
    for (g, w) in grad_w.iter().zip(m.weights.data()) {
        let total = g / n as f64 + m.l2 * w;
        sq += total * total;
    }
    let gb = grad_b / n as f64;
    (sq + gb * gb).sqrt()
}
