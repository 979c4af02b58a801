use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lfactor::{concat, remove_harmonic_rows, stack_lq, LFactor};
use super::ssi::{modal_params, ModalEstimate, SsiSolver};
use crate::error::{Error, Result};
use crate::harmonics::HarmonicSet;
use crate::kalman::{estimate_periodic, tuned_bank, KalmanTuning};
use crate::signal::{HankelPair, MultiChannelTimeSeries};

/// Even model orders `min, min + step, …, max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderRange {
    pub min: usize,
    pub max: usize,
    pub step: usize,
}

/// Orders 2 to 12: twice the order of a three-mode system. Higher
/// orders add persistent spurious clusters to the interpretation.
impl Default for OrderRange {
    fn default() -> Self {
        OrderRange { min: 2, max: 12, step: 2 }
    }
}

impl OrderRange {
    pub fn orders(&self) -> Result<Vec<usize>> {
        if self.min == 0 || self.step == 0 || self.max < self.min {
            return Err(Error::invalid(format!(
                "order range {}..={} step {} is empty",
                self.min, self.max, self.step
            )));
        }
        Ok((self.min..=self.max).step_by(self.step).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentifyConfig {
    /// Total Hankel block rows (past plus future).
    pub block_rows: usize,
    pub orders: OrderRange,
    pub kalman: KalmanTuning,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        IdentifyConfig {
            block_rows: 30,
            orders: OrderRange::default(),
            kalman: KalmanTuning::default(),
        }
    }
}

/// Modes found at one order; a failed order keeps its error and no modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderEstimates {
    pub order: usize,
    pub modes: Vec<ModalEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Identify at every order with one shared SVD.
pub fn sweep_orders(solver: &SsiSolver, orders: &[usize]) -> Vec<OrderEstimates> {
    orders
        .par_iter()
        .map(|&order| match solver.model(order) {
            Ok(m) => OrderEstimates {
                order,
                modes: modal_params(&m).modes,
                error: None,
            },
            Err(e) => OrderEstimates {
                order,
                modes: Vec::new(),
                error: Some(e.to_string()),
            },
        })
        .collect()
}

/// Hankel pair of one dataset: Kalman periodic estimate (an all-zero
/// block when `harmonics` is empty) alongside the raw accelerations.
pub fn pair_for(ts: &MultiChannelTimeSeries, harmonics: &HarmonicSet, config: &IdentifyConfig) -> Result<HankelPair> {
    let acc = ts.accelerations()?;
    if harmonics.is_empty() {
        return HankelPair::raw_only(&acc, config.block_rows);
    }
    let bank = tuned_bank(harmonics, &acc, &config.kalman)?;
    let periodic = estimate_periodic(&bank, &acc)?;
    HankelPair::new(&periodic, &acc, config.block_rows)
}

pub fn factor_for(ts: &MultiChannelTimeSeries, harmonics: &HarmonicSet, config: &IdentifyConfig) -> Result<LFactor> {
    stack_lq(&pair_for(ts, harmonics, config)?)
}

/// Remove the periodic rows of a factor and sweep the configured orders.
pub fn identify_factor(factor: &LFactor, orders: &[usize]) -> Result<Vec<OrderEstimates>> {
    let solver = SsiSolver::new(&remove_harmonic_rows(factor))?;
    Ok(sweep_orders(&solver, orders))
}

/// KF-SSI on one dataset.
pub fn kfssi_pipeline(
    ts: &MultiChannelTimeSeries,
    harmonics: &HarmonicSet,
    config: &IdentifyConfig,
) -> Result<Vec<OrderEstimates>> {
    identify_factor(&factor_for(ts, harmonics, config)?, &config.orders.orders()?)
}

/// Classical SSI on one dataset, no harmonic removal.
pub fn ssi_pipeline(ts: &MultiChannelTimeSeries, config: &IdentifyConfig) -> Result<Vec<OrderEstimates>> {
    kfssi_pipeline(ts, &HarmonicSet::empty(), config)
}

/// Fold datasets one at a time into a single factor; each dataset carries
/// its own harmonic lines.
pub fn enhanced_factor(datasets: &[(MultiChannelTimeSeries, HarmonicSet)], config: &IdentifyConfig) -> Result<LFactor> {
    let ((first_ts, first_h), rest) = datasets
        .split_first()
        .ok_or_else(|| Error::invalid("at least one dataset is required"))?;
    let mut factor = factor_for(first_ts, first_h, config)?;
    for (ts, h) in rest {
        factor = concat(&factor, &pair_for(ts, h, config)?)?;
    }
    Ok(factor)
}

/// Enhanced KF-SSI over several datasets.
pub fn enhanced_kfssi(
    datasets: &[(MultiChannelTimeSeries, HarmonicSet)],
    config: &IdentifyConfig,
) -> Result<Vec<OrderEstimates>> {
    identify_factor(&enhanced_factor(datasets, config)?, &config.orders.orders()?)
}
