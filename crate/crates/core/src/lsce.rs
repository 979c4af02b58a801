//! Least-squares complex exponential (LSCE) identification on correlation
//! functions, optionally with known harmonic poles built in.
//!
//! The characteristic polynomial is written `P(z) = H(z)·F(z)`, where
//! `H(z) = Π (z² − 2cos θ_h z + 1)` carries the known harmonic roots
//! `exp(±iθ_h)`, `θ_h = 2π f_h Δt`. Filtering the correlation sequences by
//! `H` deflates the harmonics, and least squares fits only the monic free
//! factor `F`. Its roots are the structural poles.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::HarmonicSet;
use crate::identify::{pole_to_modal, ModalEstimate};
use crate::signal::{mean, MultiChannelTimeSeries};

/// Correlation of every channel against a reference channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationData {
    pub lags: Vec<usize>,
    /// `values[channel][lag]`.
    pub values: Vec<Vec<f64>>,
    pub rate: f64,
    pub reference: usize,
}

/// Unbiased sample correlations `R_c(k) = Σ x_c(t+k) x_ref(t) / (N − k)`
/// of the mean-removed acceleration channels, for `k = 0..=max_lag`.
pub fn correlations(ts: &MultiChannelTimeSeries, max_lag: usize, reference: usize) -> Result<CorrelationData> {
    let acc = ts.accelerations()?;
    let n = acc.len();
    if 4 * max_lag >= n {
        return Err(Error::InsufficientSamples {
            required: 4 * max_lag + 1,
            available: n,
        });
    }
    if reference >= acc.channel_count() {
        return Err(Error::invalid(format!("reference channel {reference} out of range")));
    }
    let centred: Vec<Vec<f64>> = acc
        .channels()
        .iter()
        .map(|c| {
            let m = mean(&c.data);
            let x: Vec<f64> = c.data.iter().map(|v| v - m).collect();
            if x.iter().all(|v| *v == 0.0) {
                return Err(Error::invalid(format!("channel `{}` has zero variance", c.name)));
            }
            Ok(x)
        })
        .collect::<Result<_>>()?;
    let r = &centred[reference];
    let values = centred
        .par_iter()
        .map(|x| {
            (0..=max_lag)
                .map(|k| {
                    let s: f64 = x[k..].iter().zip(r).map(|(a, b)| a * b).sum();
                    s / (n - k) as f64
                })
                .collect()
        })
        .collect();
    Ok(CorrelationData {
        lags: (0..=max_lag).collect(),
        values,
        rate: ts.rate(),
        reference,
    })
}

/// Ascending coefficients of `a · b`.
pub fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Ascending coefficients of `Π (z² − 2cos θ z + 1)` over the harmonics.
pub fn harmonic_polynomial(harmonics: &HarmonicSet, dt: f64) -> Vec<f64> {
    harmonics.freqs().iter().fold(vec![1.0], |acc, f| {
        let c = (2.0 * PI * f * dt).cos();
        poly_mul(&acc, &[1.0, -2.0 * c, 1.0])
    })
}

/// Evaluate ascending coefficients at `z`.
pub fn poly_eval(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
}

/// Roots of a monic polynomial (ascending coefficients, last is 1) from
/// the eigenvalues of its companion matrix.
pub fn monic_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let q = coeffs.len() - 1;
    if q == 0 {
        return Vec::new();
    }
    let mut comp = DMatrix::zeros(q, q);
    for i in 1..q {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..q {
        comp[(i, q - 1)] = -coeffs[i];
    }
    comp.complex_eigenvalues().iter().copied().collect()
}

/// Condition-number ceiling for the least-squares problem.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct LsceResult {
    /// Sorted by frequency.
    pub modes: Vec<ModalEstimate>,
    /// Ascending coefficients of the monic free factor `F`.
    pub free: Vec<f64>,
    /// Ascending coefficients of `P = H·F`.
    pub full: Vec<f64>,
    pub real_poles: usize,
    /// Ratio of extreme singular values of the regression matrix.
    pub condition: f64,
}

/// Modified LSCE of full polynomial degree `order`.
///
/// Lag 0 is skipped: acceleration outputs carry a direct feedthrough term
/// that only appears there. With an empty harmonic set this is classical
/// LSCE.
pub fn modified_lsce(corr: &CorrelationData, harmonics: &HarmonicSet, order: usize) -> Result<LsceResult> {
    let dt = 1.0 / corr.rate;
    harmonics.check_nyquist(corr.rate)?;
    let h = harmonic_polynomial(harmonics, dt);
    let m = h.len() - 1;
    if order <= m {
        return Err(Error::invalid(format!(
            "order {order} leaves no free poles beside {m} harmonic roots"
        )));
    }
    let q = order - m;
    let seq_len = corr.lags.len().saturating_sub(1);
    // equations per channel
    let eq = (seq_len + 1).saturating_sub(order + 1);
    let rows = eq * corr.values.len();
    if eq == 0 || rows < q {
        return Err(Error::InsufficientSamples {
            required: order + q + 1,
            available: seq_len,
        });
    }

    let mut a = DMatrix::zeros(rows, q);
    let mut b = DVector::zeros(rows);
    for (ci, values) in corr.values.iter().enumerate() {
        let x = &values[1..];
        // deflated sequence g(k) = Σ_j H_j x(k + j)
        let g: Vec<f64> = (0..=seq_len - 1 - m)
            .map(|k| h.iter().enumerate().map(|(j, hj)| hj * x[k + j]).sum())
            .collect();
        for k in 0..eq {
            let r = ci * eq + k;
            for i in 0..q {
                a[(r, i)] = g[k + i];
            }
            b[r] = -g[k + q];
        }
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        return Err(Error::RankDeficient { condition });
    }
    let sol = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::invalid(format!("least-squares solve failed: {e}")))?;
    let mut free: Vec<f64> = sol.iter().copied().collect();
    free.push(1.0);
    let full = poly_mul(&h, &free);

    let mut modes = Vec::new();
    let mut real_poles = 0;
    for mu in monic_roots(&free) {
        if mu.norm() == 0.0 {
            continue;
        }
        if mu.im.abs() <= 1e-12 * mu.norm() {
            real_poles += 1;
        } else if mu.im > 0.0 {
            let (f, z) = pole_to_modal(mu, dt);
            modes.push(ModalEstimate {
                frequency: f,
                damping_pct: 100.0 * z,
                order,
                pole_re: mu.re,
                pole_im: mu.im,
                unstable: mu.norm() > 1.0 + 1e-12,
                channel_energy: None,
            });
        }
    }
    modes.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
    Ok(LsceResult {
        modes,
        free,
        full,
        real_poles,
        condition,
    })
}
