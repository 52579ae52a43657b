//! Label-preserving transforms for tri-axial acceleration windows.
//!
//! Seven transforms are provided: jittering, scaling, rotation, permutation,
//! magnitude warping, time warping, and cropping (with stretch-back so the
//! output length always equals the input length). Each transform takes the
//! window, a random stream, and the shared [`AugmentConfig`]; identical
//! `(window, stream state, config)` triples produce bitwise-identical
//! outputs. Deterministic `*_with` variants that accept pre-drawn parameters
//! are exposed alongside each randomized transform.

use crate::error::{Error, Result};
use crate::rng::{gauss, RngStream};
use crate::tensor::Tensor;
use crate::window::{Window, CHANNELS};

/// The seven transform identifiers, in canonical token order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransformKind {
    Jitter,
    Scale,
    Rot,
    Perm,
    MagW,
    TimeW,
    Crop,
}

impl TransformKind {
    pub const ALL: [TransformKind; 7] = [
        TransformKind::Jitter,
        TransformKind::Scale,
        TransformKind::Rot,
        TransformKind::Perm,
        TransformKind::MagW,
        TransformKind::TimeW,
        TransformKind::Crop,
    ];

    pub fn token(&self) -> &'static str {
        match self {
            TransformKind::Jitter => "jitter",
            TransformKind::Scale => "scale",
            TransformKind::Rot => "rot",
            TransformKind::Perm => "perm",
            TransformKind::MagW => "magw",
            TransformKind::TimeW => "timew",
            TransformKind::Crop => "crop",
        }
    }

    pub fn parse(token: &str) -> Result<Self> {
        let t = token.trim().to_ascii_lowercase();
        TransformKind::ALL
            .iter()
            .copied()
            .find(|k| k.token() == t)
            .ok_or_else(|| Error::invalid_argument(format!("unknown transform token \"{token}\"")))
    }
}

impl std::fmt::Display for TransformKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

/// Parameter distributions for all seven transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    /// STD of the Gaussian that the per-window jitter STD is sampled from.
    pub jitter_sigma_of_sigma: f64,
    /// Mean of the per-window scale factor.
    pub scale_mean: f64,
    /// STD of the per-window scale factor.
    pub scale_std: f64,
    /// STD of the Gaussian whose rounded magnitude gives the segment count.
    pub perm_seg_std: f64,
    /// Upper clamp for the permutation segment count.
    pub perm_max_segments: usize,
    /// Warp-curve amplitude range; the high end must stay below 1 so curves
    /// remain positive.
    pub warp_amp_low: f64,
    pub warp_amp_high: f64,
    /// Warp-curve frequency range in cycles per window.
    pub warp_freq_low: f64,
    pub warp_freq_high: f64,
    /// Fraction of the window kept by cropping, in (0, 1].
    pub crop_fraction: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            jitter_sigma_of_sigma: 0.03,
            scale_mean: 1.0,
            scale_std: 0.1,
            perm_seg_std: 5.0,
            perm_max_segments: 5,
            warp_amp_low: 0.05,
            warp_amp_high: 0.20,
            warp_freq_low: 1.0,
            warp_freq_high: 4.0,
            crop_fraction: 1.0 / 3.0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.jitter_sigma_of_sigma,
            self.scale_mean,
            self.scale_std,
            self.perm_seg_std,
            self.warp_amp_low,
            self.warp_amp_high,
            self.warp_freq_low,
            self.warp_freq_high,
            self.crop_fraction,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid_config("augment config has non-finite fields"));
        }
        if self.jitter_sigma_of_sigma < 0.0 || self.scale_std < 0.0 || self.perm_seg_std < 0.0 {
            return Err(Error::invalid_config("std fields must be >= 0"));
        }
        if self.perm_max_segments < 1 {
            return Err(Error::invalid_config("perm_max_segments must be >= 1"));
        }
        if self.warp_amp_low > self.warp_amp_high || self.warp_amp_low < 0.0 {
            return Err(Error::invalid_config(format!(
                "warp amplitude range [{}, {}] is invalid",
                self.warp_amp_low, self.warp_amp_high
            )));
        }
        if self.warp_amp_high >= 1.0 {
            // A curve 1 + A sin(...) with A >= 1 would not stay positive.
            return Err(Error::invalid_config(format!(
                "warp_amp_high must be < 1 to keep curves positive, got {}",
                self.warp_amp_high
            )));
        }
        if self.warp_freq_low > self.warp_freq_high || self.warp_freq_low < 0.0 {
            return Err(Error::invalid_config(format!(
                "warp frequency range [{}, {}] is invalid",
                self.warp_freq_low, self.warp_freq_high
            )));
        }
        if !(self.crop_fraction > 0.0 && self.crop_fraction <= 1.0) {
            return Err(Error::invalid_config(format!(
                "crop_fraction must be in (0, 1], got {}",
                self.crop_fraction
            )));
        }
        Ok(())
    }
}

/// A positive curve of length T varying around one.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothCurve {
    values: Vec<f64>,
}

impl SmoothCurve {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid_argument("curve needs at least 2 points"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid_argument("curve values must be finite and > 0"));
        }
        Ok(SmoothCurve { values })
    }

    /// Sinusoid `1 + amp * sin(2*pi*freq*t/len + phase)` evaluated on the
    /// integer grid `0..len`. `freq` is in cycles per window.
    pub fn sinusoid(len: usize, amp: f64, freq: f64, phase: f64) -> Result<Self> {
        if len < 2 {
            return Err(Error::invalid_argument("curve needs at least 2 points"));
        }
        if !(amp >= 0.0 && amp < 1.0) {
            return Err(Error::invalid_config(format!(
                "curve amplitude must be in [0, 1), got {amp}"
            )));
        }
        let values = (0..len)
            .map(|t| 1.0 + amp * (std::f64::consts::TAU * freq * t as f64 / len as f64 + phase).sin())
            .collect();
        Ok(SmoothCurve { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// 3x3 rotation matrix: orthonormal with determinant +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix {
    m: [[f64; 3]; 3],
}

impl RotationMatrix {
    const ORTHO_TOL: f64 = 1e-9;

    pub fn new(m: [[f64; 3]; 3]) -> Result<Self> {
        // R^T R = I within 1e-9 elementwise.
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| m[k][i] * m[k][j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot - expect).abs() > Self::ORTHO_TOL {
                    return Err(Error::invalid_argument(format!(
                        "matrix is not orthonormal: (R^T R)[{i}][{j}] = {dot}"
                    )));
                }
            }
        }
        let d = det3(&m);
        if (d - 1.0).abs() > Self::ORTHO_TOL {
            return Err(Error::invalid_argument(format!(
                "matrix determinant {d} != 1 (reflection or scaling)"
            )));
        }
        Ok(RotationMatrix { m })
    }

    pub fn identity() -> Self {
        RotationMatrix {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Build from a unit quaternion (w, x, y, z).
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Self {
        RotationMatrix {
            m: [
                [
                    1.0 - 2.0 * (y * y + z * z),
                    2.0 * (x * y - w * z),
                    2.0 * (x * z + w * y),
                ],
                [
                    2.0 * (x * y + w * z),
                    1.0 - 2.0 * (x * x + z * z),
                    2.0 * (y * z - w * x),
                ],
                [
                    2.0 * (x * z - w * y),
                    2.0 * (y * z + w * x),
                    1.0 - 2.0 * (x * x + y * y),
                ],
            ],
        }
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    pub fn det(&self) -> f64 {
        det3(&self.m)
    }

    pub fn trace(&self) -> f64 {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }

    /// Rotation angle in [0, pi].
    pub fn angle(&self) -> f64 {
        (((self.trace() - 1.0) / 2.0).clamp(-1.0, 1.0)).acos()
    }

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.m;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Haar-uniform rotation on SO(3) via a uniform unit quaternion
/// (Shoemake's method from three uniforms).
pub fn sample_rotation(rng: &mut RngStream) -> RotationMatrix {
    let u1 = rng.next_f64();
    let u2 = rng.next_f64();
    let u3 = rng.next_f64();
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let w = a * (std::f64::consts::TAU * u2).sin();
    let x = a * (std::f64::consts::TAU * u2).cos();
    let y = b * (std::f64::consts::TAU * u3).sin();
    let z = b * (std::f64::consts::TAU * u3).cos();
    RotationMatrix::from_quaternion(w, x, y, z)
}

/// Additive Gaussian noise: a per-window STD is drawn as
/// `|gauss(0, jitter_sigma_of_sigma)|`, then independent noise with that STD
/// is added to every element in row-major (t, channel) order.
pub fn jitter(w: &Window, rng: &mut RngStream, cfg: &AugmentConfig) -> Result<Window> {
    cfg.validate()?;
    let sigma = gauss(rng, 0.0, cfg.jitter_sigma_of_sigma)?.abs();
    let mut data = w.samples().data().to_vec();
    for v in data.iter_mut() {
        *v += gauss(rng, 0.0, sigma)?;
    }
    rebuild(w, data)
}

/// Multiply the whole window by one random scalar drawn from
/// `Normal(scale_mean, scale_std^2)`.
pub fn scale(w: &Window, rng: &mut RngStream, cfg: &AugmentConfig) -> Result<Window> {
    cfg.validate()?;
    let s = gauss(rng, cfg.scale_mean, cfg.scale_std)?;
    scale_with(w, s)
}

/// Multiply the whole window by a given scalar.
pub fn scale_with(w: &Window, factor: f64) -> Result<Window> {
    let data = w.samples().data().iter().map(|v| v * factor).collect();
    rebuild(w, data)
}

/// Apply one freshly drawn Haar-uniform rotation to every sample vector.
pub fn rotate(w: &Window, rng: &mut RngStream) -> Result<Window> {
    let r = sample_rotation(rng);
    rotate_with(w, &r)
}

/// Apply a given rotation to every sample vector.
pub fn rotate_with(w: &Window, r: &RotationMatrix) -> Result<Window> {
    let mut data = Vec::with_capacity(w.len() * CHANNELS);
    for t in 0..w.len() {
        let v = r.apply(w.row(t));
        data.extend_from_slice(&v);
    }
    rebuild(w, data)
}

/// Draw the permutation segment count:
/// `clamp(round(|gauss(0, perm_seg_std)|), 1, perm_max_segments)`.
pub fn draw_segment_count(rng: &mut RngStream, cfg: &AugmentConfig) -> Result<usize> {
    let n = gauss(rng, 0.0, cfg.perm_seg_std)?.abs().round() as usize;
    Ok(n.clamp(1, cfg.perm_max_segments))
}

/// Cut the window into N near-equal contiguous segments (lengths differ by at
/// most one sample), permute them uniformly at random, and concatenate. All
/// three channels move together.
pub fn permute(w: &Window, rng: &mut RngStream, cfg: &AugmentConfig) -> Result<Window> {
    cfg.validate()?;
    if w.len() < cfg.perm_max_segments {
        return Err(Error::invalid_argument(format!(
            "window length {} is below perm_max_segments {}",
            w.len(),
            cfg.perm_max_segments
        )));
    }
    let n = draw_segment_count(rng, cfg)?;
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    permute_with(w, &order)
}

/// Concatenate the `order.len()` near-equal contiguous segments of the
/// window in the given order.
pub fn permute_with(w: &Window, order: &[usize]) -> Result<Window> {
    let n = order.len();
    if n == 0 || n > w.len() {
        return Err(Error::invalid_argument(format!(
            "segment count {n} invalid for window of length {}",
            w.len()
        )));
    }
    let mut seen = vec![false; n];
    for &i in order {
        if i >= n || seen[i] {
            return Err(Error::invalid_argument("order is not a permutation"));
        }
        seen[i] = true;
    }
    let bounds = segment_bounds(w.len(), n);
    let src = w.samples().data();
    let mut data = Vec::with_capacity(src.len());
    for &seg in order {
        let (lo, hi) = bounds[seg];
        data.extend_from_slice(&src[lo * CHANNELS..hi * CHANNELS]);
    }
    rebuild(w, data)
}

/// Half-open row ranges of `n` contiguous segments whose lengths differ by at
/// most one (the first `len % n` segments take the extra sample).
pub fn segment_bounds(len: usize, n: usize) -> Vec<(usize, usize)> {
    let base = len / n;
    let rem = len % n;
    let mut bounds = Vec::with_capacity(n);
    let mut start = 0usize;
    for i in 0..n {
        let seg_len = base + usize::from(i < rem);
        bounds.push((start, start + seg_len));
        start += seg_len;
    }
    bounds
}

/// Draw a random sinusoidal curve around one: amplitude uniform in
/// `[warp_amp_low, warp_amp_high]`, frequency uniform in
/// `[warp_freq_low, warp_freq_high]` cycles per window, phase uniform in
/// `[0, 2*pi)`.
pub fn random_curve(rng: &mut RngStream, length: usize, cfg: &AugmentConfig) -> Result<SmoothCurve> {
    cfg.validate()?;
    let amp = rng.uniform(cfg.warp_amp_low, cfg.warp_amp_high);
    let freq = rng.uniform(cfg.warp_freq_low, cfg.warp_freq_high);
    let phase = rng.uniform(0.0, std::f64::consts::TAU);
    SmoothCurve::sinusoid(length, amp, freq, phase)
}

/// Multiply each channel by an independent random smooth curve (channels are
/// drawn in order X, Y, Z).
pub fn magnitude_warp(w: &Window, rng: &mut RngStream, cfg: &AugmentConfig) -> Result<Window> {
    cfg.validate()?;
    let curves = [
        random_curve(rng, w.len(), cfg)?,
        random_curve(rng, w.len(), cfg)?,
        random_curve(rng, w.len(), cfg)?,
    ];
    magnitude_warp_with(w, &curves)
}

/// Multiply channel c by `curves[c]`.
pub fn magnitude_warp_with(w: &Window, curves: &[SmoothCurve; CHANNELS]) -> Result<Window> {
    for c in curves {
        if c.len() != w.len() {
            return Err(Error::invalid_argument(format!(
                "curve length {} does not match window length {}",
                c.len(),
                w.len()
            )));
        }
    }
    let src = w.samples().data();
    let mut data = Vec::with_capacity(src.len());
    for t in 0..w.len() {
        for (c, curve) in curves.iter().enumerate() {
            data.push(src[t * CHANNELS + c] * curve.values()[t]);
        }
    }
    rebuild(w, data)
}

/// Resample the window along a smoothly distorted time base given by one
/// random curve shared across channels. Output length equals input length;
/// the warped grid is strictly increasing with fixed endpoints.
pub fn time_warp(w: &Window, rng: &mut RngStream, cfg: &AugmentConfig) -> Result<Window> {
    cfg.validate()?;
    let g = random_curve(rng, w.len(), cfg)?;
    time_warp_with(w, &g)
}

/// The warped source coordinates induced by curve `g`: cumulative sums of g
/// rescaled so position 0 maps to 0 and position T-1 maps to T-1 (exactly
/// the identity grid when g is constant).
pub fn warped_grid(g: &SmoothCurve) -> Vec<f64> {
    let t_len = g.len();
    let mut cum = Vec::with_capacity(t_len);
    let mut acc = 0.0;
    for &v in g.values() {
        acc += v;
        cum.push(acc);
    }
    let scale = (t_len - 1) as f64 / (cum[t_len - 1] - cum[0]);
    cum.iter().map(|&c| (c - cum[0]) * scale).collect()
}

/// Apply time warping with a given curve.
pub fn time_warp_with(w: &Window, g: &SmoothCurve) -> Result<Window> {
    if g.len() != w.len() {
        return Err(Error::invalid_argument(format!(
            "curve length {} does not match window length {}",
            g.len(),
            w.len()
        )));
    }
    let grid = warped_grid(g);
    let src = w.samples().data();
    let t_len = w.len();
    let mut data = Vec::with_capacity(src.len());
    for &u in &grid {
        let u = u.min((t_len - 1) as f64);
        let i0 = u.floor() as usize;
        for c in 0..CHANNELS {
            if i0 >= t_len - 1 {
                data.push(src[(t_len - 1) * CHANNELS + c]);
            } else {
                let frac = u - i0 as f64;
                let v0 = src[i0 * CHANNELS + c];
                let v1 = src[(i0 + 1) * CHANNELS + c];
                data.push(v0 + frac * (v1 - v0));
            }
        }
    }
    rebuild(w, data)
}

/// The contiguous slice a crop draw selected, before stretching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropSpan {
    pub start: usize,
    pub len: usize,
}

/// Extract a random contiguous slice of `round(T * crop_fraction)` samples
/// and stretch it back to length T by per-channel linear interpolation.
pub fn crop(w: &Window, rng: &mut RngStream, cfg: &AugmentConfig) -> Result<Window> {
    Ok(crop_traced(w, rng, cfg)?.0)
}

/// Like [`crop`], also reporting which slice was selected.
pub fn crop_traced(w: &Window, rng: &mut RngStream, cfg: &AugmentConfig) -> Result<(Window, CropSpan)> {
    cfg.validate()?;
    let t_len = w.len();
    let crop_len = (t_len as f64 * cfg.crop_fraction).round() as usize;
    if crop_len < 2 {
        return Err(Error::invalid_argument(format!(
            "crop length {crop_len} (fraction {} of {t_len}) is below 2",
            cfg.crop_fraction
        )));
    }
    let start = rng.uniform_usize(t_len - crop_len + 1);
    let span = CropSpan { start, len: crop_len };
    Ok((crop_at(w, span)?, span))
}

/// Crop a given span and stretch it back to the window length.
pub fn crop_at(w: &Window, span: CropSpan) -> Result<Window> {
    let t_len = w.len();
    if span.len < 2 || span.start + span.len > t_len {
        return Err(Error::invalid_argument(format!(
            "crop span {span:?} out of bounds for window of length {t_len}"
        )));
    }
    let src = w.samples().data();
    let slice = &src[span.start * CHANNELS..(span.start + span.len) * CHANNELS];
    // Stretch slice of length L back to T. The product t * (L - 1) is exact
    // in f64, so u hits 0 and L-1 exactly at the endpoints (and the whole
    // grid exactly when L == T).
    let mut data = Vec::with_capacity(t_len * CHANNELS);
    for t in 0..t_len {
        let u = ((t * (span.len - 1)) as f64 / (t_len - 1) as f64).min((span.len - 1) as f64);
        let i0 = u.floor() as usize;
        for c in 0..CHANNELS {
            if i0 >= span.len - 1 {
                data.push(slice[(span.len - 1) * CHANNELS + c]);
            } else {
                let frac = u - i0 as f64;
                let v0 = slice[i0 * CHANNELS + c];
                let v1 = slice[(i0 + 1) * CHANNELS + c];
                data.push(v0 + frac * (v1 - v0));
            }
        }
    }
    rebuild(w, data)
}

/// An ordered list of distinct transforms plus their shared configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentPipeline {
    kinds: Vec<TransformKind>,
    config: AugmentConfig,
}

impl AugmentPipeline {
    pub fn new(kinds: Vec<TransformKind>, config: AugmentConfig) -> Result<Self> {
        config.validate()?;
        for (i, k) in kinds.iter().enumerate() {
            if kinds[..i].contains(k) {
                return Err(Error::invalid_config(format!(
                    "duplicate transform \"{k}\" in pipeline"
                )));
            }
        }
        Ok(AugmentPipeline { kinds, config })
    }

    pub fn empty(config: AugmentConfig) -> Result<Self> {
        AugmentPipeline::new(Vec::new(), config)
    }

    /// Parse a specification string such as `"rot+perm+timew"`
    /// (case-insensitive). An empty string or `"none"` is the empty pipeline.
    pub fn parse(spec: &str, config: AugmentConfig) -> Result<Self> {
        let trimmed = spec.trim();
        if trimmed.is_empty() || trimmed.eq_ignore_ascii_case("none") {
            return AugmentPipeline::empty(config);
        }
        let kinds = trimmed
            .split('+')
            .map(TransformKind::parse)
            .collect::<Result<Vec<_>>>()?;
        AugmentPipeline::new(kinds, config)
    }

    /// Canonical name: `"none"` for the empty pipeline, otherwise tokens
    /// joined by `+`.
    pub fn name(&self) -> String {
        if self.kinds.is_empty() {
            "none".to_string()
        } else {
            self.kinds
                .iter()
                .map(|k| k.token())
                .collect::<Vec<_>>()
                .join("+")
        }
    }

    pub fn kinds(&self) -> &[TransformKind] {
        &self.kinds
    }

    pub fn config(&self) -> &AugmentConfig {
        &self.config
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    /// Apply each transform in order, threading the same stream.
    pub fn apply(&self, w: &Window, rng: &mut RngStream) -> Result<Window> {
        let mut out = w.clone();
        for kind in &self.kinds {
            out = match kind {
                TransformKind::Jitter => jitter(&out, rng, &self.config)?,
                TransformKind::Scale => scale(&out, rng, &self.config)?,
                TransformKind::Rot => rotate(&out, rng)?,
                TransformKind::Perm => permute(&out, rng, &self.config)?,
                TransformKind::MagW => magnitude_warp(&out, rng, &self.config)?,
                TransformKind::TimeW => time_warp(&out, rng, &self.config)?,
                TransformKind::Crop => crop(&out, rng, &self.config)?,
            };
        }
        Ok(out)
    }
}

fn rebuild(w: &Window, data: Vec<f64>) -> Result<Window> {
    Window::new(Tensor::new(vec![w.len(), CHANNELS], data)?, w.rate_hz())
}
