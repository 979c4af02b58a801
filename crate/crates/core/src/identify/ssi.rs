use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::lfactor::EditedData;
use crate::error::{Error, Result};

/// Discrete state-space model `x⁺ = A x`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub order: usize,
    pub dt: f64,
}

impl StateSpaceModel {
    pub fn poles(&self) -> Vec<Complex64> {
        if self.order == 0 {
            return Vec::new();
        }
        self.a.complex_eigenvalues().iter().copied().collect()
    }
}

/// Relative singular-value floor below which an order counts as exceeding
/// the numerical rank.
pub const RANK_TOL: f64 = 1e-12;

/// Data-driven SSI with unweighted principal components, run on the
/// edited `L22`.
///
/// The raw block rows are split into a past half (the first
/// `block_rows / 2`) and a future half. The projection of the future rows
/// onto the past rows is `L22[future, past] · Q_pastᵀ`, so its column space
/// comes from the SVD of that block alone. The SVD is computed once and
/// reused for every order.
#[derive(Debug, Clone)]
pub struct SsiSolver {
    u: DMatrix<f64>,
    sv: DVector<f64>,
    channels: usize,
    dt: f64,
}

impl SsiSolver {
    pub fn new(edited: &EditedData) -> Result<Self> {
        let ch = edited.channels;
        let br = edited.block_rows;
        if br < 3 || ch == 0 {
            return Err(Error::invalid(format!(
                "SSI needs at least 3 block rows and one channel, got {br} and {ch}"
            )));
        }
        let past = (br / 2) * ch;
        let future = br * ch - past;
        if edited.l22.nrows() != br * ch {
            return Err(Error::invalid(format!(
                "L22 has {} rows, expected {}",
                edited.l22.nrows(),
                br * ch
            )));
        }
        let proj = edited.l22.view((past, 0), (future, past)).clone_owned();
        let svd = proj.svd(true, false);
        let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
        idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let u_all = svd.u.expect("left singular vectors requested");
        let u = DMatrix::from_fn(future, idx.len(), |r, k| u_all[(r, idx[k])]);
        let sv = DVector::from_iterator(idx.len(), idx.iter().map(|&k| svd.singular_values[k]));
        Ok(SsiSolver {
            u,
            sv,
            channels: ch,
            dt: 1.0 / edited.rate,
        })
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.sv
    }

    /// Count of singular values above the rank floor.
    pub fn rank(&self) -> usize {
        let top = self.sv.iter().copied().next().unwrap_or(0.0);
        self.sv.iter().filter(|s| **s > RANK_TOL * top && **s > 0.0).count()
    }

    /// Largest order the shift-invariance equations can determine.
    pub fn max_order(&self) -> usize {
        (self.u.nrows() - self.channels).min(self.sv.len())
    }

    pub fn model(&self, order: usize) -> Result<StateSpaceModel> {
        if order == 0 {
            return Err(Error::invalid("model order must be at least 1"));
        }
        let rank = self.rank();
        if order > rank || order > self.max_order() {
            return Err(Error::OrderExceedsRank {
                order,
                rank: rank.min(self.max_order()),
            });
        }
        let rows = self.u.nrows();
        let ch = self.channels;
        let mut gamma = self.u.columns(0, order).clone_owned();
        for k in 0..order {
            let s = self.sv[k].sqrt();
            gamma.column_mut(k).scale_mut(s);
        }
        let up = gamma.rows(0, rows - ch).clone_owned();
        let down = gamma.rows(ch, rows - ch).clone_owned();
        let a = up
            .svd(true, true)
            .solve(&down, 0.0)
            .map_err(|e| Error::invalid(format!("shift-invariance solve failed: {e}")))?;
        let c = gamma.rows(0, ch).clone_owned();
        Ok(StateSpaceModel {
            a,
            c,
            order,
            dt: self.dt,
        })
    }
}

/// One identified mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalEstimate {
    pub frequency: f64,
    /// ζ × 100.
    pub damping_pct: f64,
    pub order: usize,
    pub pole_re: f64,
    pub pole_im: f64,
    /// `|μ| > 1`: kept and flagged.
    pub unstable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_energy: Option<f64>,
}

impl ModalEstimate {
    pub fn pole(&self) -> Complex64 {
        Complex64::new(self.pole_re, self.pole_im)
    }

    pub fn damping_ratio(&self) -> f64 {
        self.damping_pct / 100.0
    }

    /// Logarithmic decrement equivalent, `2πζ/√(1−ζ²)`.
    pub fn log_decrement(&self) -> f64 {
        let z = self.damping_ratio();
        2.0 * PI * z / (1.0 - z * z).sqrt()
    }
}

/// Modes of a model, plus the poles that did not yield one.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModalSet {
    /// Sorted by frequency.
    pub modes: Vec<ModalEstimate>,
    pub real_poles: usize,
    /// Poles at the origin.
    pub deficient: usize,
}

/// Continuous-time frequency (Hz) and damping ratio of a discrete pole.
pub fn pole_to_modal(mu: Complex64, dt: f64) -> (f64, f64) {
    let lambda = mu.ln() / dt;
    let w = lambda.norm();
    (w / (2.0 * PI), -lambda.re / w)
}

/// Map every pole with positive imaginary part to a mode; each conjugate
/// pair yields one estimate.
pub fn modal_params(model: &StateSpaceModel) -> ModalSet {
    let mut out = ModalSet::default();
    let poles = model.poles();
    let scale = poles.iter().map(|p| p.norm()).fold(0.0, f64::max);
    for mu in poles {
        if mu.norm() == 0.0 || mu.norm() <= 1e-14 * scale {
            out.deficient += 1;
        } else if mu.im.abs() <= 1e-12 * mu.norm() {
            out.real_poles += 1;
        } else if mu.im > 0.0 {
            let (f, z) = pole_to_modal(mu, model.dt);
            out.modes.push(ModalEstimate {
                frequency: f,
                damping_pct: 100.0 * z,
                order: model.order,
                pole_re: mu.re,
                pole_im: mu.im,
                unstable: mu.norm() > 1.0 + 1e-12,
                channel_energy: None,
            });
        }
    }
    out.modes.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
    out
}

/// Identify at one order: SSI then modal extraction.
pub fn ssi(edited: &EditedData, order: usize) -> Result<StateSpaceModel> {
    SsiSolver::new(edited)?.model(order)
}
