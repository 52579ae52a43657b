//! Synthetic tri-axial dataset generator: near-constant gravity-dominated
//! windows for one class versus band-limited oscillation for the other,
//! with per-subject sensor-orientation nuisance and a configurable fraction
//! of atypical windows (tremor bursts on the quiet class, strong voluntary
//! suppression on the oscillating class).

use crate::augment::{sample_rotation, RotationMatrix};
use crate::error::{Error, Result};
use crate::eval::{Label, LabeledDataset, Record};
use crate::rng::{gauss, RngStream};
use crate::window::{Window, CHANNELS};

/// Generator configuration. Class-profile constants are artifact knobs and
/// deliberately configurable.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub windows_per_subject: usize,
    pub window_len: usize,
    pub rate_hz: f64,
    /// Tremor frequency range in Hz (atypical quiet-class windows).
    pub tremor_freq_hz: (f64, f64),
    /// Oscillation band in Hz for the dyskinesia-like class.
    pub dyskinesia_band_hz: (f64, f64),
    /// STD of the white noise added to every element.
    pub noise_floor: f64,
    /// One random sensor orientation per subject when enabled.
    pub per_subject_rotation: bool,
    /// Fraction of windows drawn as atypical per class.
    pub atypical_fraction: f64,
    /// Body-frame amplitude multipliers per axis for the oscillation; the
    /// anisotropy is what makes orientation matter.
    pub dysk_axis_profile: [f64; 3],
    /// Per-sinusoid amplitude range for the oscillating class, in g.
    pub dysk_amp: (f64, f64),
    /// Sinusoid count range per axis (inclusive).
    pub dysk_sinusoids: (usize, usize),
    /// Amplitude multiplier for suppressed (atypical) oscillation windows.
    pub dysk_suppression: f64,
    /// Tremor amplitude range in g; kept below the oscillation amplitudes.
    pub tremor_amp: (f64, f64),
    /// Constant gravity bias along body-frame Z, in g.
    pub gravity_g: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subjects: 20,
            windows_per_subject: 20,
            window_len: 696,
            rate_hz: 120.0,
            tremor_freq_hz: (4.0, 6.0),
            dyskinesia_band_hz: (0.5, 3.0),
            noise_floor: 0.01,
            per_subject_rotation: true,
            atypical_fraction: 0.15,
            dysk_axis_profile: [1.0, 0.06, 0.0],
            dysk_amp: (0.12, 0.22),
            dysk_sinusoids: (4, 5),
            dysk_suppression: 0.12,
            tremor_amp: (0.10, 0.25),
            gravity_g: 1.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 {
            return Err(Error::invalid_config("window_len must be >= 2"));
        }
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err(Error::invalid_config("rate_hz must be positive"));
        }
        for (name, (lo, hi)) in [
            ("tremor_freq_hz", self.tremor_freq_hz),
            ("dyskinesia_band_hz", self.dyskinesia_band_hz),
            ("dysk_amp", self.dysk_amp),
            ("tremor_amp", self.tremor_amp),
        ] {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                return Err(Error::invalid_config(format!(
                    "{name} range [{lo}, {hi}] is invalid"
                )));
            }
        }
        if self.dysk_sinusoids.0 < 1 || self.dysk_sinusoids.0 > self.dysk_sinusoids.1 {
            return Err(Error::invalid_config("dysk_sinusoids range invalid"));
        }
        if !(0.0..=1.0).contains(&self.atypical_fraction) {
            return Err(Error::invalid_config("atypical_fraction must be in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.dysk_suppression) {
            return Err(Error::invalid_config("dysk_suppression must be in [0, 1]"));
        }
        if self.noise_floor < 0.0 {
            return Err(Error::invalid_config("noise_floor must be >= 0"));
        }
        if self.dysk_axis_profile.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::invalid_config("dysk_axis_profile must be >= 0"));
        }
        Ok(())
    }
}

fn random_unit_vector(rng: &mut RngStream) -> [f64; 3] {
    loop {
        let v = [
            gauss(rng, 0.0, 1.0).expect("std fixed"),
            gauss(rng, 0.0, 1.0).expect("std fixed"),
            gauss(rng, 0.0, 1.0).expect("std fixed"),
        ];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm > 1e-6 {
            return [v[0] / norm, v[1] / norm, v[2] / norm];
        }
    }
}

/// Generate one window of the given class in the subject's sensor frame.
///
/// Quiet class: constant gravity along body Z, plus (with probability
/// `atypical_fraction`) a half-window tremor burst along a random direction.
/// Oscillating class: gravity plus 3..=6 random sinusoids per axis inside
/// the oscillation band, scaled by the per-axis profile; atypical windows
/// have the oscillation multiplied by `dysk_suppression`. Both classes then
/// get white noise per element and the subject rotation.
pub fn gen_window(
    class: Label,
    subject_rotation: &RotationMatrix,
    rng: &mut RngStream,
    cfg: &SynthConfig,
) -> Result<Window> {
    cfg.validate()?;
    let t_len = cfg.window_len;
    let mut rows = vec![[0.0f64, 0.0, cfg.gravity_g]; t_len];
    let atypical = rng.next_f64() < cfg.atypical_fraction;

    match class {
        Label::Brady => {
            if atypical {
                let freq = rng.uniform(cfg.tremor_freq_hz.0, cfg.tremor_freq_hz.1);
                let amp = rng.uniform(cfg.tremor_amp.0, cfg.tremor_amp.1);
                let phase = rng.uniform(0.0, std::f64::consts::TAU);
                let dir = random_unit_vector(rng);
                let burst_len = t_len / 2;
                let start = rng.uniform_usize(t_len - burst_len + 1);
                for t in start..start + burst_len {
                    let s = amp
                        * (std::f64::consts::TAU * freq * (t - start) as f64 / cfg.rate_hz + phase)
                            .sin();
                    for c in 0..CHANNELS {
                        rows[t][c] += dir[c] * s;
                    }
                }
            }
        }
        Label::Dysk => {
            let suppress = if atypical { cfg.dysk_suppression } else { 1.0 };
            for (axis, &profile) in cfg.dysk_axis_profile.iter().enumerate() {
                let span = cfg.dysk_sinusoids.1 - cfg.dysk_sinusoids.0 + 1;
                let n_sin = cfg.dysk_sinusoids.0 + rng.uniform_usize(span);
                for _ in 0..n_sin {
                    let amp = rng.uniform(cfg.dysk_amp.0, cfg.dysk_amp.1) * profile * suppress;
                    let freq =
                        rng.uniform(cfg.dyskinesia_band_hz.0, cfg.dyskinesia_band_hz.1);
                    let phase = rng.uniform(0.0, std::f64::consts::TAU);
                    for (t, row) in rows.iter_mut().enumerate() {
                        row[axis] += amp
                            * (std::f64::consts::TAU * freq * t as f64 / cfg.rate_hz + phase)
                                .sin();
                    }
                }
            }
        }
    }

    if cfg.noise_floor > 0.0 {
        for row in rows.iter_mut() {
            for v in row.iter_mut() {
                *v += gauss(rng, 0.0, cfg.noise_floor)?;
            }
        }
    }

    let rows: Vec<[f64; 3]> = rows
        .into_iter()
        .map(|r| subject_rotation.apply(r))
        .collect();
    Window::from_rows(&rows, cfg.rate_hz)
}

// Substream namespace for per-subject rotations; window substreams use the
// plain window ordinal, which stays below this offset.
const ROTATION_STREAM_BASE: u64 = 1 << 32;

/// Generate a dataset: one rotation per subject (identity when the nuisance
/// is disabled), classes alternating within each subject, every window from
/// its own derived substream so generation order is irrelevant.
pub fn gen_dataset(rng: &RngStream, cfg: &SynthConfig) -> Result<LabeledDataset> {
    cfg.validate()?;
    if cfg.n_subjects < 2 || cfg.windows_per_subject < 2 {
        return Err(Error::invalid_argument(
            "need at least 2 subjects and 2 windows per subject",
        ));
    }
    let mut records = Vec::with_capacity(cfg.n_subjects * cfg.windows_per_subject);
    for s in 0..cfg.n_subjects {
        let rotation = if cfg.per_subject_rotation {
            let mut rot_rng = rng.substream(ROTATION_STREAM_BASE + s as u64);
            sample_rotation(&mut rot_rng)
        } else {
            RotationMatrix::identity()
        };
        for i in 0..cfg.windows_per_subject {
            let class = if i % 2 == 0 { Label::Brady } else { Label::Dysk };
            let mut wrng = rng.substream((s * cfg.windows_per_subject + i) as u64);
            records.push(Record {
                window: gen_window(class, &rotation, &mut wrng, cfg)?,
                label: class,
                subject_id: format!("s{s:02}"),
            });
        }
    }
    let provenance = format!(
        "synth(seed=({}, {}), subjects={}, per_subject={}, window_len={}, nuisance={}, atypical={})",
        rng.master_seed(),
        rng.stream_index(),
        cfg.n_subjects,
        cfg.windows_per_subject,
        cfg.window_len,
        cfg.per_subject_rotation,
        cfg.atypical_fraction
    );
    LabeledDataset::new(records, provenance)
}
