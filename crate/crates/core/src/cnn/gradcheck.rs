//! Central-finite-difference verification of the analytic gradients.

use crate::cnn::model::{Gradients, ModelParams};
use crate::cnn::ops::softmax_xent;
use crate::error::Result;
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Default perturbation for central differences.
pub const DEFAULT_H: f64 = 1e-5;
/// Default number of coordinates sampled per parameter tensor.
pub const DEFAULT_COORDS_PER_TENSOR: usize = 200;
/// Pass/fail threshold on the max relative error.
pub const GRADCHECK_THRESHOLD: f64 = 1e-4;

/// Max relative error per parameter group (layerN.conv, layerN.bn, head).
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub entries: Vec<(String, f64)>,
    pub max_rel_err: f64,
}

impl GradCheckReport {
    pub fn passes(&self, threshold: f64) -> bool {
        self.max_rel_err < threshold
    }
}

/// Train-mode loss used for both the analytic and numeric sides.
pub fn model_loss(params: &ModelParams, batch: &Tensor, labels: &[u8], bn_eps: f64) -> Result<f64> {
    let (logits, _) = params.forward_train(batch, bn_eps)?;
    Ok(softmax_xent(&logits, labels)?.0)
}

/// Analytic gradients of [`model_loss`].
pub fn model_loss_gradients(
    params: &ModelParams,
    batch: &Tensor,
    labels: &[u8],
    bn_eps: f64,
) -> Result<Gradients> {
    let (logits, cache) = params.forward_train(batch, bn_eps)?;
    let (_, dlogits, _) = softmax_xent(&logits, labels)?;
    params.backward(&cache, &dlogits)
}

/// Relative error with an absolute floor so near-zero gradients do not blow
/// up the ratio: `|a - n| / max(|a| + |n|, 1e-3)`.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-3)
}

fn group_of(name: &str) -> String {
    name.rsplit_once('.').map(|(g, _)| g.to_string()).unwrap_or_else(|| name.to_string())
}

/// Compare a given set of analytic gradients against central finite
/// differences of the train-mode loss, sampling up to `coords_per_tensor`
/// distinct coordinates per tensor.
pub fn fd_compare(
    params: &ModelParams,
    batch: &Tensor,
    labels: &[u8],
    analytic: &Gradients,
    h: f64,
    coords_per_tensor: usize,
    rng: &mut RngStream,
    bn_eps: f64,
) -> Result<GradCheckReport> {
    let names: Vec<String> = params.learnables().iter().map(|(n, _)| n.clone()).collect();
    let analytic_tensors: Vec<Tensor> = analytic.tensors().into_iter().cloned().collect();

    let mut work = params.clone();
    let mut entries: Vec<(String, f64)> = Vec::new();
    for (k, name) in names.iter().enumerate() {
        let len = analytic_tensors[k].len();
        let mut indices: Vec<usize> = (0..len).collect();
        rng.shuffle(&mut indices);
        indices.truncate(coords_per_tensor.min(len));

        let mut worst = 0.0f64;
        for &i in &indices {
            let original = work.learnables_mut()[k].data()[i];
            work.learnables_mut()[k].data_mut()[i] = original + h;
            let up = model_loss(&work, batch, labels, bn_eps)?;
            work.learnables_mut()[k].data_mut()[i] = original - h;
            let down = model_loss(&work, batch, labels, bn_eps)?;
            work.learnables_mut()[k].data_mut()[i] = original;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(rel_err(analytic_tensors[k].data()[i], numeric));
        }

        let group = group_of(name);
        match entries.iter_mut().find(|(g, _)| *g == group) {
            Some((_, e)) => *e = e.max(worst),
            None => entries.push((group, worst)),
        }
    }
    let max_rel_err = entries.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    Ok(GradCheckReport { entries, max_rel_err })
}

/// Full gradient check: analytic gradients of the train-mode loss against
/// central finite differences.
pub fn grad_check(
    params: &ModelParams,
    batch: &Tensor,
    labels: &[u8],
    h: f64,
    coords_per_tensor: usize,
    rng: &mut RngStream,
    bn_eps: f64,
) -> Result<GradCheckReport> {
    let analytic = model_loss_gradients(params, batch, labels, bn_eps)?;
    fd_compare(params, batch, labels, &analytic, h, coords_per_tensor, rng, bn_eps)
}
