//! Fixed-length tri-axial acceleration segment — the unit of augmentation
//! and classification.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Number of acceleration channels (X, Y, Z).
pub const CHANNELS: usize = 3;

/// One window of tri-axial acceleration: a `[T, 3]` tensor in g plus the
/// sampling rate. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    samples: Tensor,
    rate_hz: f64,
}

impl Window {
    pub fn new(samples: Tensor, rate_hz: f64) -> Result<Self> {
        if samples.rank() != 2 || samples.shape()[1] != CHANNELS {
            return Err(Error::invalid_argument(format!(
                "window samples must have shape [T, {CHANNELS}], got {:?}",
                samples.shape()
            )));
        }
        if samples.shape()[0] < 2 {
            return Err(Error::invalid_argument(
                "window must contain at least 2 samples",
            ));
        }
        if !samples.all_finite() {
            return Err(Error::invalid_argument(
                "window samples must all be finite",
            ));
        }
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(Error::invalid_argument(format!(
                "window rate must be positive and finite, got {rate_hz}"
            )));
        }
        Ok(Window { samples, rate_hz })
    }

    /// Build from per-sample `[x, y, z]` rows.
    pub fn from_rows(rows: &[[f64; CHANNELS]], rate_hz: f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * CHANNELS);
        for r in rows {
            data.extend_from_slice(r);
        }
        Window::new(Tensor::new(vec![rows.len(), CHANNELS], data)?, rate_hz)
    }

    /// Number of samples T.
    pub fn len(&self) -> usize {
        self.samples.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        false // T >= 2 by construction
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn samples(&self) -> &Tensor {
        &self.samples
    }

    pub fn get(&self, t: usize, c: usize) -> f64 {
        self.samples.data()[t * CHANNELS + c]
    }

    /// Sample row at time index t.
    pub fn row(&self, t: usize) -> [f64; CHANNELS] {
        let d = &self.samples.data()[t * CHANNELS..(t + 1) * CHANNELS];
        [d[0], d[1], d[2]]
    }

    pub fn rows(&self) -> impl Iterator<Item = [f64; CHANNELS]> + '_ {
        (0..self.len()).map(move |t| self.row(t))
    }
}
