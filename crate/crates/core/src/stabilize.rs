//! Stabilization diagrams, their automatic interpretation and
//! Leave-One-Out aggregation of repeated runs.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identify::{identify_factor, merge, LFactor, ModalEstimate, OrderEstimates};
use crate::signal::Spectrum;

/// When a pole counts as stable against the previous order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StabilityTolerances {
    /// Relative frequency difference.
    pub tol_f: f64,
    /// Damping difference in percentage points.
    pub tol_d: f64,
}

impl Default for StabilityTolerances {
    fn default() -> Self {
        StabilityTolerances { tol_f: 0.01, tol_d: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizationDiagram {
    pub orders: Vec<usize>,
    pub entries: Vec<ModalEstimate>,
    /// Per entry; `None` at the first order.
    pub stable_flags: Vec<Option<bool>>,
    /// Orders whose identification failed, with the reason.
    #[serde(default)]
    pub failures: Vec<(usize, String)>,
    #[serde(skip)]
    pub spectrum: Option<Spectrum>,
}

fn check_orders(orders: &[usize]) -> Result<()> {
    if orders.is_empty() {
        return Err(Error::invalid("order list is empty"));
    }
    if orders.iter().any(|o| *o < 2 || o % 2 == 1) {
        return Err(Error::invalid("orders must be even and at least 2"));
    }
    if orders.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("orders must be strictly increasing"));
    }
    Ok(())
}

impl StabilizationDiagram {
    /// Assemble a diagram from per-order results, flagging stability.
    pub fn from_estimates(rows: Vec<OrderEstimates>, tol: StabilityTolerances) -> Result<Self> {
        let orders: Vec<usize> = rows.iter().map(|r| r.order).collect();
        check_orders(&orders)?;
        let mut entries = Vec::new();
        let mut flags = Vec::new();
        let mut failures = Vec::new();
        let mut previous: Option<&[ModalEstimate]> = None;
        for row in &rows {
            if let Some(e) = &row.error {
                failures.push((row.order, e.clone()));
            }
            for m in &row.modes {
                flags.push(previous.map(|prev| {
                    prev.iter().any(|p| {
                        (m.frequency - p.frequency).abs() <= tol.tol_f * p.frequency
                            && (m.damping_pct - p.damping_pct).abs() <= tol.tol_d
                    })
                }));
                entries.push(m.clone());
            }
            previous = Some(&row.modes);
        }
        Ok(StabilizationDiagram {
            orders,
            entries,
            stable_flags: flags,
            failures,
            spectrum: None,
        })
    }

    pub fn at_order(&self, order: usize) -> impl Iterator<Item = &ModalEstimate> {
        self.entries.iter().filter(move |e| e.order == order)
    }

    /// `order,frequency,damping_pct,stable_flag` rows; the flag is empty at
    /// the first order.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("order,frequency,damping_pct,stable_flag\n");
        for (e, f) in self.entries.iter().zip(&self.stable_flags) {
            let flag = match f {
                Some(true) => "1",
                Some(false) => "0",
                None => "",
            };
            s.push_str(&format!("{},{},{},{}\n", e.order, e.frequency, e.damping_pct, flag));
        }
        s
    }
}

/// Run `identify` at every order (in parallel) and build the diagram.
/// A failing order becomes an empty row.
pub fn order_sweep<F>(orders: &[usize], tol: StabilityTolerances, identify: F) -> Result<StabilizationDiagram>
where
    F: Fn(usize) -> Result<Vec<ModalEstimate>> + Sync,
{
    check_orders(orders)?;
    let rows = orders
        .par_iter()
        .map(|&order| match identify(order) {
            Ok(modes) => OrderEstimates {
                order,
                modes,
                error: None,
            },
            Err(e) => OrderEstimates {
                order,
                modes: Vec::new(),
                error: Some(e.to_string()),
            },
        })
        .collect();
    StabilizationDiagram::from_estimates(rows, tol)
}

/// A group of nearby frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Indices into the clustered slice, in ascending frequency.
    pub members: Vec<usize>,
    /// Median member frequency.
    pub representative: f64,
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Single-linkage 1-D clustering: sort and split wherever the relative gap
/// `(b − a)/a` exceeds `tol`. Chains of small gaps stay together.
pub fn cluster_freqs(freqs: &[f64], tol: f64) -> Vec<Cluster> {
    let mut idx: Vec<usize> = (0..freqs.len()).collect();
    idx.sort_by(|&a, &b| freqs[a].total_cmp(&freqs[b]).then(a.cmp(&b)));
    let mut out: Vec<Cluster> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let close = |cur: &mut Vec<usize>, out: &mut Vec<Cluster>| {
        if !cur.is_empty() {
            let vals: Vec<f64> = cur.iter().map(|&i| freqs[i]).collect();
            out.push(Cluster {
                members: std::mem::take(cur),
                representative: median_sorted(&vals),
            });
        }
    };
    for &i in &idx {
        if let Some(&last) = current.last() {
            let a = freqs[last];
            if (freqs[i] - a) > tol * a.abs() {
                close(&mut current, &mut out);
            }
        }
        current.push(i);
    }
    close(&mut current, &mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterpretParams {
    /// Relative clustering tolerance.
    pub tol: f64,
    /// Minimum cluster size.
    pub n_min: usize,
    /// Poles with damping above this (percent) are discarded first.
    pub max_damping_pct: f64,
    /// Poles with damping below this (percent) are discarded first.
    pub min_damping_pct: f64,
}

impl Default for InterpretParams {
    fn default() -> Self {
        InterpretParams {
            tol: 0.02,
            n_min: 3,
            max_damping_pct: 20.0,
            min_damping_pct: -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretationResult {
    pub selected_order: usize,
    /// One estimate per persistent frequency present at the selected order.
    pub modes: Vec<ModalEstimate>,
    /// Representatives of every persistent cluster.
    pub unique_freqs: Vec<f64>,
    pub occurrence_counts: Vec<usize>,
}

fn entry_key(a: &ModalEstimate, b: &ModalEstimate) -> Ordering {
    a.frequency
        .total_cmp(&b.frequency)
        .then(a.damping_pct.total_cmp(&b.damping_pct))
        .then(a.pole_re.total_cmp(&b.pole_re))
        .then(a.pole_im.total_cmp(&b.pole_im))
}

/// Automatic interpretation of a stabilization diagram.
///
/// Spurious poles (damping outside the configured band) are dropped, the
/// remaining frequencies are clustered, clusters with fewer than `n_min`
/// members are discarded, and the lowest order containing the largest
/// number of surviving clusters is selected. At that order each cluster
/// contributes the entry nearest its median.
pub fn auto_interpret(diag: &StabilizationDiagram, params: &InterpretParams) -> Result<InterpretationResult> {
    if diag.entries.is_empty() {
        return Err(Error::NoPersistentModes);
    }
    if !(params.tol > 0.0) || params.n_min == 0 {
        return Err(Error::invalid("clustering tolerance and n_min must be positive"));
    }
    let mut kept: Vec<&ModalEstimate> = diag
        .entries
        .iter()
        .filter(|e| e.damping_pct <= params.max_damping_pct && e.damping_pct >= params.min_damping_pct)
        .collect();
    // canonical order makes the result independent of entry order
    kept.sort_by(|a, b| a.order.cmp(&b.order).then(entry_key(a, b)));
    let freqs: Vec<f64> = kept.iter().map(|e| e.frequency).collect();
    let clusters: Vec<Cluster> = cluster_freqs(&freqs, params.tol)
        .into_iter()
        .filter(|c| c.members.len() >= params.n_min)
        .collect();
    if clusters.is_empty() {
        return Err(Error::NoPersistentModes);
    }
    let mut best: Option<(usize, usize)> = None;
    for &order in &diag.orders {
        let count = clusters
            .iter()
            .filter(|c| c.members.iter().any(|&i| kept[i].order == order))
            .count();
        if best.is_none_or(|(_, b)| count > b) {
            best = Some((order, count));
        }
    }
    let (selected_order, _) = best.expect("orders are nonempty");
    let mut modes: Vec<ModalEstimate> = clusters
        .iter()
        .filter_map(|c| {
            c.members
                .iter()
                .map(|&i| kept[i])
                .filter(|e| e.order == selected_order)
                .min_by(|a, b| {
                    (a.frequency - c.representative)
                        .abs()
                        .total_cmp(&(b.frequency - c.representative).abs())
                        .then(entry_key(a, b))
                })
                .cloned()
        })
        .collect();
    modes.sort_by(entry_key);
    Ok(InterpretationResult {
        selected_order,
        modes,
        unique_freqs: clusters.iter().map(|c| c.representative).collect(),
        occurrence_counts: clusters.iter().map(|c| c.members.len()).collect(),
    })
}

/// Median, quartiles (linear interpolation between order statistics) and
/// range of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

/// Quantile `p` of sorted data, interpolating linearly at `(n − 1)·p`.
pub fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

impl BoxStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(BoxStats {
            n: v.len(),
            median: quantile_sorted(&v, 0.5),
            q1: quantile_sorted(&v, 0.25),
            q3: quantile_sorted(&v, 0.75),
            min: v[0],
            max: v[v.len() - 1],
        })
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeStats {
    /// 1-based, in ascending frequency.
    pub mode: usize,
    pub representative: f64,
    pub frequency: BoxStats,
    pub damping_pct: BoxStats,
    /// Results in which this mode was not found.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooSummary {
    pub modes: Vec<ModeStats>,
    /// Representatives of modes found in fewer than half of the results.
    pub unmatched: Vec<f64>,
}

/// Relative frequency tolerance for matching modes across results.
pub const MATCH_TOL: f64 = 0.05;

/// Box statistics per mode over a set of interpretation results (one per
/// left-out dataset, or one per dataset).
///
/// Modes are matched by pooling every result's frequencies and clustering
/// at 5 %. A result with no member in a cluster is excluded for that mode;
/// a result with several keeps the one nearest the cluster median.
pub fn loo_aggregate(results: &[InterpretationResult]) -> Result<LooSummary> {
    if results.len() < 3 {
        return Err(Error::invalid(format!(
            "aggregation needs at least 3 results, got {}",
            results.len()
        )));
    }
    let pooled: Vec<(usize, &ModalEstimate)> = results
        .iter()
        .enumerate()
        .flat_map(|(r, res)| res.modes.iter().map(move |m| (r, m)))
        .collect();
    let freqs: Vec<f64> = pooled.iter().map(|(_, m)| m.frequency).collect();
    let mut modes = Vec::new();
    let mut unmatched = Vec::new();
    for c in cluster_freqs(&freqs, MATCH_TOL) {
        let mut picked: Vec<Option<&ModalEstimate>> = vec![None; results.len()];
        for &i in &c.members {
            let (r, m) = pooled[i];
            let better = picked[r].is_none_or(|p| {
                (m.frequency - c.representative)
                    .abs()
                    .total_cmp(&(p.frequency - c.representative).abs())
                    .then(entry_key(m, p))
                    == Ordering::Less
            });
            if better {
                picked[r] = Some(m);
            }
        }
        let found: Vec<&ModalEstimate> = picked.iter().flatten().copied().collect();
        if 2 * found.len() < results.len() {
            unmatched.push(c.representative);
            continue;
        }
        let f: Vec<f64> = found.iter().map(|m| m.frequency).collect();
        let d: Vec<f64> = found.iter().map(|m| m.damping_pct).collect();
        modes.push(ModeStats {
            mode: modes.len() + 1,
            representative: c.representative,
            frequency: BoxStats::from_values(&f).expect("nonempty"),
            damping_pct: BoxStats::from_values(&d).expect("nonempty"),
            excluded: results.len() - found.len(),
        });
    }
    Ok(LooSummary { modes, unmatched })
}

/// Factors with each one left out in turn, merged.
pub fn leave_one_out_factors(factors: &[LFactor]) -> Result<Vec<LFactor>> {
    if factors.len() < 3 {
        return Err(Error::invalid(format!(
            "leave-one-out needs at least 3 datasets, got {}",
            factors.len()
        )));
    }
    (0..factors.len())
        .into_par_iter()
        .map(|skip| {
            let rest: Vec<&LFactor> = factors
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != skip)
                .map(|(_, f)| f)
                .collect();
            merge(&rest)
        })
        .collect()
}

/// Sweep orders on a factor and interpret the diagram.
pub fn interpret_factor(
    factor: &LFactor,
    orders: &[usize],
    stability: StabilityTolerances,
    params: &InterpretParams,
) -> Result<(StabilizationDiagram, InterpretationResult)> {
    let diag = StabilizationDiagram::from_estimates(identify_factor(factor, orders)?, stability)?;
    let interp = auto_interpret(&diag, params)?;
    Ok((diag, interp))
}
