//! Periodic-subsignal estimation with a square-root covariance Kalman
//! filter (SRCF) over an undamped oscillator bank.
//!
//! Each harmonic `f_h` contributes a 2-state rotation block with angle
//! `2π f_h Δt`; the measurement is the sum of the first state of every
//! block. Covariances are carried as lower-triangular factors `S` with
//! `P = S Sᵀ` and updated by triangularizing pre-arrays, so `P` is never
//! formed. One filter runs per channel on the shared bank.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::HarmonicSet;
use crate::linalg::lq_rows;
use crate::signal::{welch_psd, Channel, MultiChannelTimeSeries};

/// Process and measurement noise levels of one channel's filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelNoise {
    /// Process noise std, applied to every state.
    pub sigma_w: f64,
    /// Measurement noise std.
    pub sigma_v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorBank {
    pub freqs: HarmonicSet,
    pub dt: f64,
    /// `(cos θ, sin θ)` per block.
    rotations: Vec<(f64, f64)>,
    pub noise: Vec<ChannelNoise>,
}

impl OscillatorBank {
    pub fn state_dim(&self) -> usize {
        2 * self.rotations.len()
    }

    pub fn channels(&self) -> usize {
        self.noise.len()
    }

    /// Dense block-diagonal transition matrix.
    pub fn transition(&self) -> DMatrix<f64> {
        let n = self.state_dim();
        let mut a = DMatrix::zeros(n, n);
        for (b, &(c, s)) in self.rotations.iter().enumerate() {
            let i = 2 * b;
            a[(i, i)] = c;
            a[(i, i + 1)] = -s;
            a[(i + 1, i)] = s;
            a[(i + 1, i + 1)] = c;
        }
        a
    }

    /// Row selecting the first state of each block.
    pub fn output_map(&self) -> DVector<f64> {
        DVector::from_fn(self.state_dim(), |i, _| if i % 2 == 0 { 1.0 } else { 0.0 })
    }

    /// `A·M` using the block structure.
    fn rotate_rows(&self, m: &mut [f64], cols: usize) {
        for (b, &(c, s)) in self.rotations.iter().enumerate() {
            let (r0, r1) = (2 * b * cols, (2 * b + 1) * cols);
            for j in 0..cols {
                let (u, v) = (m[r0 + j], m[r1 + j]);
                m[r0 + j] = c * u - s * v;
                m[r1 + j] = s * u + c * v;
            }
        }
    }

    fn rotate_vec(&self, x: &mut DVector<f64>) {
        for (b, &(c, s)) in self.rotations.iter().enumerate() {
            let (u, v) = (x[2 * b], x[2 * b + 1]);
            x[2 * b] = c * u - s * v;
            x[2 * b + 1] = s * u + c * v;
        }
    }
}

/// Build the oscillator bank for `channels.len()` channels.
pub fn build_bank(harmonics: &HarmonicSet, dt: f64, channels: &[ChannelNoise]) -> Result<OscillatorBank> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("sample interval must be positive"));
    }
    harmonics.check_nyquist(1.0 / dt)?;
    for w in harmonics.freqs().windows(2) {
        if (w[1] - w[0]).abs() <= 1e-9 {
            return Err(Error::DuplicateHarmonic(w[1]));
        }
    }
    if channels.is_empty() {
        return Err(Error::invalid("oscillator bank needs at least one channel"));
    }
    if channels
        .iter()
        .any(|n| !(n.sigma_w.is_finite() && n.sigma_w > 0.0 && n.sigma_v.is_finite() && n.sigma_v > 0.0))
    {
        return Err(Error::invalid("noise standard deviations must be positive"));
    }
    let rotations = harmonics
        .freqs()
        .iter()
        .map(|f| {
            let (s, c) = (2.0 * PI * f * dt).sin_cos();
            (c, s)
        })
        .collect();
    Ok(OscillatorBank {
        freqs: harmonics.clone(),
        dt,
        rotations,
        noise: channels.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub x: DVector<f64>,
    /// Lower-triangular, nonnegative diagonal, `P = S Sᵀ`.
    pub s: DMatrix<f64>,
}

impl FilterState {
    pub fn new(x: DVector<f64>, s: DMatrix<f64>) -> Self {
        FilterState { x, s }
    }

    /// Zero state with `S = scale · I`.
    pub fn initial(dim: usize, scale: f64) -> Self {
        FilterState {
            x: DVector::zeros(dim),
            s: DMatrix::identity(dim, dim) * scale,
        }
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.s * self.s.transpose()
    }
}

/// One measurement update and time update for `channel` at sample `step`.
///
/// Returns the predicted state for the next sample and the filtered
/// periodic output `y_per = C x_f`.
pub fn srcf_step(
    bank: &OscillatorBank,
    channel: usize,
    state: &FilterState,
    y: f64,
    step: usize,
) -> Result<(FilterState, f64)> {
    let n = bank.state_dim();
    let noise = bank
        .noise
        .get(channel)
        .ok_or_else(|| Error::invalid(format!("channel {channel} not in bank")))?;
    if !y.is_finite() || state.s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step });
    }
    if n == 0 {
        return Ok((state.clone(), 0.0));
    }

    // measurement pre-array [[σv, C S], [0, S]]
    let m = n + 1;
    let mut pre = vec![0.0; m * m];
    pre[0] = noise.sigma_v;
    for j in 0..n {
        pre[1 + j] = (0..n).step_by(2).map(|i| state.s[(i, j)]).sum();
    }
    for i in 0..n {
        for j in 0..=i {
            pre[(i + 1) * m + 1 + j] = state.s[(i, j)];
        }
    }
    let post = lq_rows(m, m, &mut pre);
    let re_sqrt = post[(0, 0)];
    let pred: f64 = (0..n).step_by(2).map(|i| state.x[i]).sum();
    let innov = if re_sqrt > 0.0 { (y - pred) / re_sqrt } else { 0.0 };
    let mut x = state.x.clone();
    for i in 0..n {
        x[i] += post[(i + 1, 0)] * innov;
    }
    let y_per: f64 = (0..n).step_by(2).map(|i| x[i]).sum();

    // time update [A S_f, σw I]
    let w = 2 * n;
    let mut tu = vec![0.0; n * w];
    for i in 0..n {
        for j in 0..=i {
            tu[i * w + j] = post[(i + 1, j + 1)];
        }
    }
    bank.rotate_rows(&mut tu, w);
    for i in 0..n {
        tu[i * w + n + i] = noise.sigma_w;
    }
    let s = lq_rows(n, w, &mut tu);
    bank.rotate_vec(&mut x);

    if !y_per.is_finite() || x.iter().any(|v| !v.is_finite()) || s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step });
    }
    Ok((FilterState { x, s }, y_per))
}

/// Run the filter over one channel from the default initial state.
pub fn filter_channel(bank: &OscillatorBank, channel: usize, y: &[f64], initial_scale: f64) -> Result<Vec<f64>> {
    let mut state = FilterState::initial(bank.state_dim(), initial_scale);
    let mut out = Vec::with_capacity(y.len());
    for (k, &v) in y.iter().enumerate() {
        let (next, yp) = srcf_step(bank, channel, &state, v, k)?;
        state = next;
        out.push(yp);
    }
    Ok(out)
}

/// Initial covariance factor scale.
pub const INITIAL_SQRT_COV: f64 = 10.0;

/// Per-channel periodic subsignal of the acceleration channels of `ts`.
///
/// The bank must have one noise entry per acceleration channel and a
/// sample interval equal to `ts.dt()`.
pub fn estimate_periodic(bank: &OscillatorBank, ts: &MultiChannelTimeSeries) -> Result<MultiChannelTimeSeries> {
    let acc = ts.accelerations()?;
    if (bank.dt - ts.dt()).abs() > 1e-9 * ts.dt() {
        return Err(Error::MetadataMismatch {
            field: "rate",
            expected: format!("{}", 1.0 / bank.dt),
            found: format!("{}", ts.rate()),
        });
    }
    if bank.channels() != acc.channel_count() {
        return Err(Error::MetadataMismatch {
            field: "channels",
            expected: bank.channels().to_string(),
            found: acc.channel_count().to_string(),
        });
    }
    let outputs = acc
        .channels()
        .par_iter()
        .enumerate()
        .map(|(i, c)| filter_channel(bank, i, &c.data, INITIAL_SQRT_COV))
        .collect::<Result<Vec<_>>>()?;
    let channels = acc
        .channels()
        .iter()
        .zip(outputs)
        .map(|(c, y)| Channel::acceleration(c.name.clone(), y))
        .collect();
    acc.with_channels(channels)
}

/// Noise tuning relative to each channel's own level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KalmanTuning {
    /// σ_w as a fraction of the channel RMS.
    pub process_scale: f64,
    /// Fixed σ_v overriding the spectral estimate.
    pub measurement_std: Option<f64>,
    /// Half-width (Hz) of the band notched around each harmonic when
    /// estimating σ_v; defaults to two PSD bins.
    pub notch_halfwidth: Option<f64>,
}

impl Default for KalmanTuning {
    fn default() -> Self {
        KalmanTuning {
            process_scale: 1e-4,
            measurement_std: None,
            notch_halfwidth: None,
        }
    }
}

/// RMS of `x` outside narrow bands around `freqs`, from a Welch PSD.
/// Notched bins are filled at the mean level of the kept ones.
pub fn notched_rms(x: &[f64], rate: f64, freqs: &[f64], halfwidth: Option<f64>) -> Result<f64> {
    let ts = MultiChannelTimeSeries::from_columns(rate, vec![x.to_vec()])?;
    let seg = x.len().min(4096);
    let spec = welch_psd(&ts, seg, 0.5)?;
    let hw = halfwidth.unwrap_or(2.0 * spec.resolution);
    let (mut kept, mut count) = (0.0, 0usize);
    for (f, p) in spec.freqs.iter().zip(&spec.power[0]) {
        if freqs.iter().all(|h| (f - h).abs() > hw) {
            kept += p;
            count += 1;
        }
    }
    if count == 0 {
        return Ok(0.0);
    }
    let total_bins = spec.freqs.len() as f64;
    Ok((kept * spec.resolution * total_bins / count as f64).sqrt())
}

/// Bank tuned to the acceleration channels of `ts`.
pub fn tuned_bank(harmonics: &HarmonicSet, ts: &MultiChannelTimeSeries, tuning: &KalmanTuning) -> Result<OscillatorBank> {
    let acc = ts.accelerations()?;
    let noise = acc
        .channels()
        .iter()
        .map(|c| {
            let rms = crate::signal::rms(&c.data);
            let floor = if rms > 0.0 { 1e-6 * rms } else { 1.0 };
            let sigma_v = match tuning.measurement_std {
                Some(v) => v,
                None => notched_rms(&c.data, ts.rate(), harmonics.freqs(), tuning.notch_halfwidth)?,
            };
            Ok(ChannelNoise {
                sigma_w: (tuning.process_scale * rms).max(floor * 1e-3),
                sigma_v: sigma_v.max(floor),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    build_bank(harmonics, ts.dt(), &noise)
}
