//! Harmonic localisation: rotor-speed lines and the Kurtosis/Entropy
//! bandpass sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::Sos;
use crate::signal::{mean, ChannelRole, MultiChannelTimeSeries};

/// Harmonic lines at `base_freq × multiplier`, labelled `nP`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HarmonicSetRepr")]
pub struct HarmonicSet {
    pub base_freq: f64,
    pub multipliers: Vec<f64>,
    pub labels: Vec<String>,
    freqs: Vec<f64>,
}

#[derive(Deserialize)]
struct HarmonicSetRepr {
    base_freq: f64,
    multipliers: Vec<f64>,
    #[serde(default)]
    labels: Vec<String>,
}

impl TryFrom<HarmonicSetRepr> for HarmonicSet {
    type Error = Error;

    fn try_from(r: HarmonicSetRepr) -> Result<Self> {
        let mut set = HarmonicSet::new(r.base_freq, r.multipliers)?;
        if !r.labels.is_empty() {
            if r.labels.len() != set.multipliers.len() {
                return Err(Error::invalid("one label per multiplier is required"));
            }
            set.labels = r.labels;
        }
        Ok(set)
    }
}

fn multiplier_label(m: f64) -> String {
    if (m - m.round()).abs() < 1e-9 {
        format!("{}P", m.round() as i64)
    } else {
        format!("{m:.3}P")
    }
}

impl HarmonicSet {
    pub fn new(base_freq: f64, multipliers: Vec<f64>) -> Result<Self> {
        if !(base_freq.is_finite() && base_freq > 0.0) {
            return Err(Error::invalid(format!("base frequency must be positive, got {base_freq}")));
        }
        if multipliers.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::invalid("multipliers must be positive"));
        }
        if multipliers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("multipliers must be strictly increasing"));
        }
        let labels = multipliers.iter().map(|m| multiplier_label(*m)).collect();
        let freqs = multipliers.iter().map(|m| base_freq * m).collect();
        Ok(HarmonicSet {
            base_freq,
            multipliers,
            labels,
            freqs,
        })
    }

    /// A set with no lines.
    pub fn empty() -> Self {
        HarmonicSet {
            base_freq: 1.0,
            multipliers: Vec::new(),
            labels: Vec::new(),
            freqs: Vec::new(),
        }
    }

    /// Lines given directly in Hz (base 1 Hz, labels carry the frequency).
    pub fn from_freqs(freqs: Vec<f64>) -> Result<Self> {
        let mut set = Self::new(1.0, freqs)?;
        set.labels = set.freqs.iter().map(|f| format!("{f:.4}Hz")).collect();
        Ok(set)
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Keep only the lines whose labels are listed.
    pub fn select(&self, labels: &[&str]) -> Result<Self> {
        let mult: Vec<f64> = self
            .labels
            .iter()
            .zip(&self.multipliers)
            .filter(|(l, _)| labels.contains(&l.as_str()))
            .map(|(_, m)| *m)
            .collect();
        Self::new(self.base_freq, mult)
    }

    pub fn check_nyquist(&self, rate: f64) -> Result<()> {
        match self.freqs.last() {
            Some(&f) if f >= 0.5 * rate => Err(Error::Nyquist {
                freq: f,
                nyquist: 0.5 * rate,
            }),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SpeedUnit {
    #[default]
    Rpm,
    Hz,
}

/// Harmonic lines from the mean rotor speed, plus the coefficient of
/// variation of the speed as a stationarity diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotorHarmonics {
    pub set: HarmonicSet,
    pub speed_cv: f64,
}

/// `gear_ratio` divides the measured speed (generator → rotor).
pub fn rotor_harmonics(
    speed: &[f64],
    unit: SpeedUnit,
    multipliers: &[f64],
    gear_ratio: Option<f64>,
) -> Result<RotorHarmonics> {
    if speed.is_empty() {
        return Err(Error::invalid("rotor speed series is empty"));
    }
    if speed.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("rotor speed must be finite and non-negative"));
    }
    let ratio = gear_ratio.unwrap_or(1.0);
    if !(ratio > 0.0) {
        return Err(Error::invalid("gear ratio must be positive"));
    }
    let m = mean(speed);
    if m <= 0.0 {
        return Err(Error::NoHarmonicExcitation);
    }
    let sd = (speed.iter().map(|v| (v - m).powi(2)).sum::<f64>() / speed.len() as f64).sqrt();
    let hz = match unit {
        SpeedUnit::Rpm => m / 60.0,
        SpeedUnit::Hz => m,
    } / ratio;
    Ok(RotorHarmonics {
        set: HarmonicSet::new(hz, multipliers.to_vec())?,
        speed_cv: sd / m,
    })
}

/// Reflection padding long enough for the band's ring-down.
fn pad_length(order: usize, bandwidth: f64, rate: f64) -> usize {
    (order as f64 * rate / bandwidth).ceil() as usize
}

pub fn bandpass_design(center: f64, bandwidth: f64, order: usize, rate: f64) -> Result<Sos> {
    let lo = center - 0.5 * bandwidth;
    let hi = center + 0.5 * bandwidth;
    if !(bandwidth > 0.0 && lo > 0.0) {
        return Err(Error::invalid(format!(
            "band {center} ± {} Hz must lie above 0 Hz",
            0.5 * bandwidth
        )));
    }
    if hi >= 0.5 * rate {
        return Err(Error::Nyquist {
            freq: hi,
            nyquist: 0.5 * rate,
        });
    }
    Sos::butter_bandpass(order, lo, hi, rate).map_err(|e| match e {
        Error::UnstableFilter { .. } => Error::UnstableFilter {
            center,
            bandwidth,
            order,
        },
        other => other,
    })
}

pub(crate) fn bandpass_slice(x: &[f64], sos: &Sos, order: usize, bandwidth: f64) -> Vec<f64> {
    sos.filtfilt(x, pad_length(order, bandwidth, sos.rate))
}

/// Zero-phase Butterworth bandpass of every acceleration channel.
pub fn bandpass(
    ts: &MultiChannelTimeSeries,
    center: f64,
    bandwidth: f64,
    order: usize,
) -> Result<MultiChannelTimeSeries> {
    let sos = bandpass_design(center, bandwidth, order, ts.rate())?;
    ts.map_channels(|c| {
        Ok(if c.role == ChannelRole::Acceleration {
            bandpass_slice(&c.data, &sos, order, bandwidth)
        } else {
            c.data.clone()
        })
    })
}

/// Fourth standardized moment; `None` when the variance is zero.
pub fn kurtosis(x: &[f64]) -> Option<f64> {
    let m = mean(x);
    let n = x.len() as f64;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in x {
        let d2 = (v - m).powi(2);
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= n;
    m4 /= n;
    (m2 > 0.0).then(|| m4 / (m2 * m2))
}

/// Normalized Shannon entropy of a histogram of `x`.
///
/// The `bins` equal-width bins span `μ ± √3·σ` (the support of a uniform
/// distribution with the same mean and variance); samples outside fall in
/// the edge bins. A uniform sample scores 1, a constant 0, and at equal
/// variance a sinusoid scores below Gaussian noise.
pub fn entropy(x: &[f64], bins: usize) -> f64 {
    let m = mean(x);
    let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
    if sd == 0.0 || bins < 2 {
        return 0.0;
    }
    let half = 3f64.sqrt() * sd;
    let width = 2.0 * half / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in x {
        let k = ((v - (m - half)) / width).floor();
        let k = if k < 0.0 { 0 } else { (k as usize).min(bins - 1) };
        counts[k] += 1;
    }
    let n = x.len() as f64;
    let h: f64 = counts
        .iter()
        .filter(|c| **c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    h / (bins as f64).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndicatorKind {
    Kurtosis,
    Entropy,
}

impl IndicatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            IndicatorKind::Kurtosis => "kurtosis",
            IndicatorKind::Entropy => "entropy",
        }
    }
}

/// Indicator value per grid frequency; `None` marks a band with no variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorCurve {
    pub freqs: Vec<f64>,
    pub values: Vec<Option<f64>>,
    pub kind: IndicatorKind,
    pub filter_order: usize,
    pub bandwidth: f64,
}

impl IndicatorCurve {
    fn nearest(&self, freq: f64) -> usize {
        self.freqs
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - freq).abs().total_cmp(&(b.1 - freq).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    pub fn value_at(&self, freq: f64) -> Option<f64> {
        self.values[self.nearest(freq)]
    }

    pub fn median(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.values.iter().flatten().copied().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Some(if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        })
    }

    fn is_local_min(&self, i: usize) -> bool {
        let Some(v) = self.values[i] else { return false };
        let left = i.checked_sub(1).and_then(|j| self.values[j]);
        let right = self.values.get(i + 1).copied().flatten();
        left.is_none_or(|l| v <= l) && right.is_none_or(|r| v <= r)
    }

    /// `freq,value,kind` rows with a header; invalid points print `NaN`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("freq,value,kind\n");
        for (f, v) in self.freqs.iter().zip(&self.values) {
            s.push_str(&format!(
                "{f},{},{}\n",
                v.unwrap_or(f64::NAN),
                self.kind.as_str()
            ));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepParams {
    /// Bandpass width (Hz).
    pub bandwidth: f64,
    pub order: usize,
    /// Histogram bins for the entropy indicator.
    pub bins: usize,
    /// Channel index among the acceleration channels.
    pub channel: usize,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            bandwidth: 0.25,
            order: 4,
            bins: 32,
            channel: 0,
        }
    }
}

impl SweepParams {
    /// Defaults scaled to a sample rate: bandwidth of 2 % of Nyquist.
    pub fn for_rate(rate: f64) -> Self {
        SweepParams {
            bandwidth: 0.02 * 0.5 * rate,
            ..Self::default()
        }
    }

    /// Grid from one bandwidth above 0 Hz to one bandwidth below Nyquist in
    /// steps of half a bandwidth.
    pub fn default_grid(&self, rate: f64) -> Vec<f64> {
        let step = 0.5 * self.bandwidth;
        let top = 0.5 * rate - self.bandwidth;
        let mut f = self.bandwidth;
        let mut grid = Vec::new();
        while f <= top + 1e-12 {
            grid.push(f);
            f += step;
        }
        grid
    }
}

fn sweep<F>(
    ts: &MultiChannelTimeSeries,
    grid: &[f64],
    params: &SweepParams,
    kind: IndicatorKind,
    indicator: F,
) -> Result<IndicatorCurve>
where
    F: Fn(&[f64]) -> Option<f64> + Sync,
{
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("sweep grid must be strictly increasing"));
    }
    let acc = ts.accelerations()?;
    let x = &acc
        .channels()
        .get(params.channel)
        .ok_or_else(|| Error::invalid(format!("channel index {} out of range", params.channel)))?
        .data;
    let input_var = crate::signal::variance(x);
    let designs = grid
        .iter()
        .map(|f| bandpass_design(*f, params.bandwidth, params.order, ts.rate()))
        .collect::<Result<Vec<_>>>()?;
    let values = designs
        .par_iter()
        .map(|sos| {
            let y = bandpass_slice(x, sos, params.order, params.bandwidth);
            // drop the ring-down of the padded edges
            let trim = pad_length(params.order, params.bandwidth, ts.rate()).min(y.len() / 4);
            let y = &y[trim..y.len() - trim];
            let var = crate::signal::variance(y);
            if !(var > 1e-24 * input_var) {
                return None;
            }
            indicator(y)
        })
        .collect();
    Ok(IndicatorCurve {
        freqs: grid.to_vec(),
        values,
        kind,
        filter_order: params.order,
        bandwidth: params.bandwidth,
    })
}

/// Kurtosis of the bandpassed signal at each grid frequency.
pub fn kurtosis_sweep(ts: &MultiChannelTimeSeries, grid: &[f64], params: &SweepParams) -> Result<IndicatorCurve> {
    sweep(ts, grid, params, IndicatorKind::Kurtosis, kurtosis)
}

/// Normalized histogram entropy of the bandpassed signal at each grid frequency.
pub fn entropy_sweep(ts: &MultiChannelTimeSeries, grid: &[f64], params: &SweepParams) -> Result<IndicatorCurve> {
    if params.bins < 8 {
        return Err(Error::invalid(format!("entropy needs at least 8 bins, got {}", params.bins)));
    }
    let bins = params.bins;
    sweep(ts, grid, params, IndicatorKind::Entropy, move |y| Some(entropy(y, bins)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Harmonic,
    NotHarmonic,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateVerdict {
    pub freq: f64,
    pub label: String,
    pub value: Option<f64>,
    pub verdict: Verdict,
}

/// Kurtosis below `harmonic_below` reads as a harmonic, above `noise_above`
/// as noise; the gap in between is inconclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyThresholds {
    pub harmonic_below: f64,
    pub noise_above: f64,
}

impl Default for ClassifyThresholds {
    fn default() -> Self {
        ClassifyThresholds {
            harmonic_below: 2.0,
            noise_above: 2.6,
        }
    }
}

/// Verdict per candidate line read off an indicator curve.
///
/// Entropy: a local minimum below the curve median is a harmonic, a value at
/// or above the median is not, anything else is inconclusive.
pub fn classify(
    curve: &IndicatorCurve,
    candidates: &HarmonicSet,
    thresholds: ClassifyThresholds,
) -> Vec<CandidateVerdict> {
    let (lo, hi) = match (curve.freqs.first(), curve.freqs.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => (f64::NAN, f64::NAN),
    };
    let step = if curve.freqs.len() > 1 {
        curve.freqs[1] - curve.freqs[0]
    } else {
        0.0
    };
    let median = curve.median();
    candidates
        .freqs()
        .iter()
        .zip(&candidates.labels)
        .map(|(&f, label)| {
            let in_range = f >= lo - 0.5 * step && f <= hi + 0.5 * step;
            let i = curve.nearest(f);
            let value = if in_range { curve.values[i] } else { None };
            let verdict = match (value, curve.kind) {
                (None, _) => Verdict::Inconclusive,
                (Some(v), IndicatorKind::Kurtosis) => {
                    if v < thresholds.harmonic_below {
                        Verdict::Harmonic
                    } else if v > thresholds.noise_above {
                        Verdict::NotHarmonic
                    } else {
                        Verdict::Inconclusive
                    }
                }
                (Some(v), IndicatorKind::Entropy) => match median {
                    Some(m) if v >= m => Verdict::NotHarmonic,
                    Some(_) if curve.is_local_min(i) => Verdict::Harmonic,
                    _ => Verdict::Inconclusive,
                },
            };
            CandidateVerdict {
                freq: f,
                label: label.clone(),
                value,
                verdict,
            }
        })
        .collect()
}

/// Grid points flagged as harmonic by a kurtosis curve, one per contiguous
/// run (the run's minimum).
pub fn kurtosis_candidates(curve: &IndicatorCurve, thresholds: ClassifyThresholds) -> Vec<f64> {
    let mut out = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for (f, v) in curve.freqs.iter().zip(&curve.values) {
        match v {
            Some(v) if *v < thresholds.harmonic_below => {
                if best.is_none_or(|(_, b)| *v < b) {
                    best = Some((*f, *v));
                }
            }
            _ => {
                if let Some((bf, _)) = best.take() {
                    out.push(bf);
                }
            }
        }
    }
    if let Some((bf, _)) = best {
        out.push(bf);
    }
    out
}
