use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::series::{mean, MultiChannelTimeSeries};
use crate::error::{Error, Result};

/// One-sided power spectral density, one row per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    /// `power[channel][bin]`, in signal units² / Hz.
    pub power: Vec<Vec<f64>>,
    pub resolution: f64,
    pub channel_names: Vec<String>,
}

impl Spectrum {
    /// Bin index nearest to `freq`.
    pub fn bin(&self, freq: f64) -> usize {
        ((freq / self.resolution).round() as usize).min(self.freqs.len() - 1)
    }

    /// Integrated power of one channel between two frequencies (inclusive bins).
    pub fn band_power(&self, channel: usize, lo: f64, hi: f64) -> f64 {
        let (a, b) = (self.bin(lo), self.bin(hi));
        self.power[channel][a..=b].iter().sum::<f64>() * self.resolution
    }

    pub fn total_power(&self, channel: usize) -> f64 {
        self.power[channel].iter().sum::<f64>() * self.resolution
    }

    /// Peak location refined by a parabola through the three bins around
    /// the maximum in `[lo, hi]`.
    pub fn peak_frequency(&self, channel: usize, lo: f64, hi: f64) -> f64 {
        let (a, b) = (self.bin(lo), self.bin(hi));
        let p = &self.power[channel];
        let k = (a..=b)
            .max_by(|&i, &j| p[i].total_cmp(&p[j]))
            .unwrap_or(a);
        if k == 0 || k + 1 >= p.len() {
            return self.freqs[k];
        }
        let (y0, y1, y2) = (p[k - 1], p[k], p[k + 1]);
        let denom = y0 - 2.0 * y1 + y2;
        let delta = if denom != 0.0 { 0.5 * (y0 - y2) / denom } else { 0.0 };
        self.freqs[k] + delta.clamp(-0.5, 0.5) * self.resolution
    }

    /// Element-wise mean of several spectra with the same grid.
    pub fn average(spectra: &[Spectrum]) -> Result<Spectrum> {
        let first = spectra
            .first()
            .ok_or_else(|| Error::invalid("no spectra to average"))?;
        let mut out = first.clone();
        for s in &spectra[1..] {
            if s.freqs.len() != first.freqs.len() || s.power.len() != first.power.len() {
                return Err(Error::invalid("spectra have different grids"));
            }
            for (acc, row) in out.power.iter_mut().zip(&s.power) {
                acc.iter_mut().zip(row).for_each(|(a, b)| *a += b);
            }
        }
        let n = spectra.len() as f64;
        out.power.iter_mut().flatten().for_each(|v| *v /= n);
        Ok(out)
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Welch averaged periodogram with a Hann window and per-segment mean removal.
pub fn welch_psd(ts: &MultiChannelTimeSeries, segment_len: usize, overlap: f64) -> Result<Spectrum> {
    let n = ts.len();
    if segment_len < 2 || segment_len > n {
        return Err(Error::InsufficientSamples {
            required: segment_len.max(2),
            available: n,
        });
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::invalid(format!("overlap must be in [0, 1), got {overlap}")));
    }
    let step = ((segment_len as f64 * (1.0 - overlap)).round() as usize).max(1);
    let window = hann(segment_len);
    let wss: f64 = window.iter().map(|w| w * w).sum();
    let fs = ts.rate();
    let bins = segment_len / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(segment_len);
    let mut buf = vec![Complex::new(0.0, 0.0); segment_len];

    let mut power = Vec::with_capacity(ts.channel_count());
    for ch in ts.channels() {
        let mut acc = vec![0.0; bins];
        let mut segments = 0usize;
        let mut start = 0;
        while start + segment_len <= n {
            let seg = &ch.data[start..start + segment_len];
            let m = mean(seg);
            for ((b, x), w) in buf.iter_mut().zip(seg).zip(&window) {
                *b = Complex::new((x - m) * w, 0.0);
            }
            fft.process(&mut buf);
            for (k, a) in acc.iter_mut().enumerate() {
                let mut p = buf[k].norm_sqr() / (fs * wss);
                if k != 0 && !(segment_len % 2 == 0 && k == segment_len / 2) {
                    p *= 2.0;
                }
                *a += p;
            }
            segments += 1;
            start += step;
        }
        acc.iter_mut().for_each(|a| *a /= segments as f64);
        power.push(acc);
    }

    let resolution = fs / segment_len as f64;
    Ok(Spectrum {
        freqs: (0..bins).map(|k| k as f64 * resolution).collect(),
        power,
        resolution,
        channel_names: ts.channels().iter().map(|c| c.name.clone()).collect(),
    })
}
