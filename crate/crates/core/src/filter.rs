//! Butterworth designs as cascaded second-order sections, and zero-phase
//! (forward-backward) filtering.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// One biquad `(b0 + b1 z⁻¹ + b2 z⁻²) / (1 + a1 z⁻¹ + a2 z⁻²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + self.b[1] * z_inv + self.b[2] * z2) / (1.0 + self.a[0] * z_inv + self.a[1] * z2)
    }

    fn poles(&self) -> [Complex64; 2] {
        // roots of z² + a1 z + a2
        let (a1, a2) = (self.a[0], self.a[1]);
        let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
        [(-a1 + disc) / 2.0, (-a1 - disc) / 2.0]
    }

    /// Steady-state transposed direct-form II state for a unit step input.
    fn step_state(&self) -> ([f64; 2], f64) {
        let gain = (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1]);
        let z2 = self.b[2] - self.a[1] * gain;
        let z1 = self.b[1] - self.a[0] * gain + z2;
        ([z1, z2], gain)
    }
}

/// Cascade of biquads.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    pub sections: Vec<Biquad>,
    pub rate: f64,
}

fn prewarp(freq: f64, rate: f64) -> f64 {
    2.0 * rate * (PI * freq / rate).tan()
}

fn bilinear(s: Complex64, rate: f64) -> Complex64 {
    let k = 2.0 * rate;
    (k + s) / (k - s)
}

/// Left half-plane poles of the normalized analog Butterworth prototype.
fn prototype_poles(order: usize) -> Vec<Complex64> {
    (0..order)
        .map(|k| {
            let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

/// Group digital poles into conjugate pairs (and leftover real pairs/singletons).
fn pair_poles(poles: &[Complex64]) -> Vec<(Complex64, Option<Complex64>)> {
    let tol = 1e-12;
    let mut upper: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > tol).collect();
    upper.sort_by(|a, b| a.arg().total_cmp(&b.arg()));
    let mut real: Vec<f64> = poles.iter().filter(|p| p.im.abs() <= tol).map(|p| p.re).collect();
    real.sort_by(f64::total_cmp);
    let mut out: Vec<(Complex64, Option<Complex64>)> = upper.into_iter().map(|p| (p, Some(p.conj()))).collect();
    for pair in real.chunks(2) {
        let a = Complex64::new(pair[0], 0.0);
        out.push((a, pair.get(1).map(|r| Complex64::new(*r, 0.0))));
    }
    out
}

fn denominator(p: Complex64, q: Option<Complex64>) -> [f64; 2] {
    match q {
        Some(q) => [-(p + q).re, (p * q).re],
        None => [-p.re, 0.0],
    }
}

impl Sos {
    /// Lowpass of the given order with -3 dB point at `cutoff`.
    pub fn butter_lowpass(order: usize, cutoff: f64, rate: f64) -> Result<Sos> {
        if order == 0 || !(cutoff > 0.0 && cutoff < 0.5 * rate) {
            return Err(Error::invalid(format!(
                "lowpass needs order >= 1 and 0 < cutoff < {} Hz",
                0.5 * rate
            )));
        }
        let wc = prewarp(cutoff, rate);
        let poles: Vec<Complex64> = prototype_poles(order)
            .into_iter()
            .map(|p| bilinear(p * wc, rate))
            .collect();
        let sections = pair_poles(&poles)
            .into_iter()
            .map(|(p, q)| {
                let a = denominator(p, q);
                let b = if q.is_some() { [1.0, 2.0, 1.0] } else { [1.0, 1.0, 0.0] };
                let mut s = Biquad { b, a };
                let g = s.response(Complex64::new(1.0, 0.0)).norm();
                s.b.iter_mut().for_each(|v| *v /= g);
                s
            })
            .collect();
        let sos = Sos { sections, rate };
        sos.check_stable().map_err(|_| Error::UnstableFilter {
            center: 0.0,
            bandwidth: cutoff,
            order,
        })?;
        Ok(sos)
    }

    /// Bandpass of the given prototype order (2·order poles) between `lo` and `hi`.
    pub fn butter_bandpass(order: usize, lo: f64, hi: f64, rate: f64) -> Result<Sos> {
        let center = 0.5 * (lo + hi);
        let bandwidth = hi - lo;
        if !(1..=8).contains(&order) {
            return Err(Error::invalid(format!("bandpass order must be in 1..=8, got {order}")));
        }
        if !(lo > 0.0 && hi > lo && hi < 0.5 * rate) {
            return Err(Error::invalid(format!(
                "bandpass edges must satisfy 0 < {lo} < {hi} < {} Hz",
                0.5 * rate
            )));
        }
        let (w1, w2) = (prewarp(lo, rate), prewarp(hi, rate));
        let w0 = (w1 * w2).sqrt();
        let bw = w2 - w1;
        let mut poles = Vec::with_capacity(2 * order);
        for p in prototype_poles(order) {
            let pb = p * bw;
            let disc = (pb * pb - 4.0 * w0 * w0).sqrt();
            poles.push(bilinear((pb + disc) / 2.0, rate));
            poles.push(bilinear((pb - disc) / 2.0, rate));
        }
        // digital centre where the analog gain is exactly one
        let wc = 2.0 * (w0 / (2.0 * rate)).atan();
        let z_inv = Complex64::from_polar(1.0, -wc);
        let sections: Vec<Biquad> = pair_poles(&poles)
            .into_iter()
            .map(|(p, q)| {
                let a = denominator(p, q);
                let mut s = Biquad { b: [1.0, 0.0, -1.0], a };
                let g = s.response(z_inv).norm();
                s.b.iter_mut().for_each(|v| *v /= g);
                s
            })
            .collect();
        let sos = Sos { sections, rate };
        if sos.sections.len() != order || sos.check_stable().is_err() {
            return Err(Error::UnstableFilter {
                center,
                bandwidth,
                order,
            });
        }
        Ok(sos)
    }

    fn check_stable(&self) -> std::result::Result<(), ()> {
        for s in &self.sections {
            let finite = s.b.iter().chain(&s.a).all(|v| v.is_finite());
            // poles this close to the unit circle leave the biquad coefficients
            // with too few significant digits to trust
            if !finite || s.poles().iter().any(|p| p.norm() >= 1.0 - 1e-8) {
                return Err(());
            }
        }
        Ok(())
    }

    /// Complex frequency response at `freq` Hz (single pass).
    pub fn response(&self, freq: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * freq / self.rate);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    /// Causal filtering with an initial state proportional to `x0` (steady
    /// state for a constant input of that value).
    fn run(&self, x: &mut [f64], x0: f64) {
        let mut level = x0;
        let mut states: Vec<[f64; 2]> = self
            .sections
            .iter()
            .map(|s| {
                let (z, g) = s.step_state();
                let st = [z[0] * level, z[1] * level];
                level *= g;
                st
            })
            .collect();
        for v in x.iter_mut() {
            let mut u = *v;
            for (s, z) in self.sections.iter().zip(states.iter_mut()) {
                let y = s.b[0] * u + z[0];
                z[0] = s.b[1] * u - s.a[0] * y + z[1];
                z[1] = s.b[2] * u - s.a[1] * y;
                u = y;
            }
            *v = u;
        }
    }

    /// Single forward pass from rest.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        self.run(&mut y, 0.0);
        y
    }

    /// Zero-phase forward-backward filtering with odd-reflection padding of
    /// `padlen` samples at each end.
    pub fn filtfilt(&self, x: &[f64], padlen: usize) -> Vec<f64> {
        let n = x.len();
        let pad = padlen.min(n.saturating_sub(1));
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let first = ext[0];
        self.run(&mut ext, first);
        ext.reverse();
        let first = ext[0];
        self.run(&mut ext, first);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}
