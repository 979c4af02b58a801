use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::lq_rows;
use crate::signal::HankelPair;

/// Provenance carried alongside an `L` factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorMeta {
    pub block_rows: usize,
    pub channels: usize,
    pub rate: f64,
    /// Total samples over every batch folded in.
    pub sample_count: usize,
    pub batches: usize,
    /// A zero (or negligible) diagonal entry in the periodic block.
    pub rank_deficient: bool,
}

/// Lower factor of `[Y_per; Y_raw] = L Qᵀ`:
///
/// ```text
/// L = [ L11   0  ]
///     [ L21  L22 ]
/// ```
///
/// with `L11` (periodic rows) and `L22` (raw rows) lower triangular with
/// nonnegative diagonals. `Q` is never kept.
#[derive(Debug, Clone, PartialEq)]
pub struct LFactor {
    l: DMatrix<f64>,
    periodic_rows: usize,
    pub meta: FactorMeta,
}

fn periodic_rank_deficient(l: &DMatrix<f64>, p: usize) -> bool {
    let scale = l.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    (0..p).any(|i| l[(i, i)] <= 1e-12 * scale)
}

/// Row-major copy of a column-major matrix.
fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl LFactor {
    /// Reassemble from a stored `L`; the matrix must be square and lower
    /// triangular.
    pub fn from_parts(l: DMatrix<f64>, periodic_rows: usize, meta: FactorMeta) -> Result<Self> {
        let (r, c) = l.shape();
        if r != c || periodic_rows > r {
            return Err(Error::invalid(format!(
                "L must be square with at least {periodic_rows} rows, got {r}x{c}"
            )));
        }
        if (0..r).any(|i| (i + 1..c).any(|j| l[(i, j)] != 0.0)) {
            return Err(Error::invalid("L is not lower triangular"));
        }
        if l.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("L has non-finite entries"));
        }
        Ok(LFactor { l, periodic_rows, meta })
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn periodic_rows(&self) -> usize {
        self.periodic_rows
    }

    pub fn raw_rows(&self) -> usize {
        self.l.nrows() - self.periodic_rows
    }

    pub fn l11(&self) -> DMatrix<f64> {
        let p = self.periodic_rows;
        self.l.view((0, 0), (p, p)).clone_owned()
    }

    pub fn l21(&self) -> DMatrix<f64> {
        let (p, r) = (self.periodic_rows, self.raw_rows());
        self.l.view((p, 0), (r, p)).clone_owned()
    }

    pub fn l22(&self) -> DMatrix<f64> {
        let (p, r) = (self.periodic_rows, self.raw_rows());
        self.l.view((p, p), (r, r)).clone_owned()
    }

    /// `L Lᵀ`, the Gram matrix of every column folded in so far.
    pub fn gram(&self) -> DMatrix<f64> {
        &self.l * self.l.transpose()
    }

    fn check_compatible(&self, block_rows: usize, channels: usize, rate: f64, rows: usize) -> Result<()> {
        let m = &self.meta;
        if m.block_rows != block_rows {
            return Err(Error::MetadataMismatch {
                field: "block_rows",
                expected: m.block_rows.to_string(),
                found: block_rows.to_string(),
            });
        }
        if m.channels != channels {
            return Err(Error::MetadataMismatch {
                field: "channels",
                expected: m.channels.to_string(),
                found: channels.to_string(),
            });
        }
        if (m.rate - rate).abs() > 1e-9 * m.rate {
            return Err(Error::MetadataMismatch {
                field: "rate",
                expected: m.rate.to_string(),
                found: rate.to_string(),
            });
        }
        if self.periodic_rows != rows {
            return Err(Error::MetadataMismatch {
                field: "periodic_rows",
                expected: self.periodic_rows.to_string(),
                found: rows.to_string(),
            });
        }
        Ok(())
    }
}

fn samples_in(pair: &HankelPair) -> usize {
    if pair.cols() == 0 {
        0
    } else {
        pair.cols() + pair.block_rows - 1
    }
}

/// LQ factor of the stacked pair. The pair must be wider than tall.
pub fn stack_lq(pair: &HankelPair) -> Result<LFactor> {
    let rows = 2 * pair.rows();
    if pair.cols() <= rows {
        return Err(Error::InsufficientSamples {
            required: rows + pair.block_rows,
            available: samples_in(pair),
        });
    }
    let mut buf = row_major(&pair.stacked());
    let l = lq_rows(rows, pair.cols(), &mut buf);
    let p = pair.rows();
    Ok(LFactor {
        meta: FactorMeta {
            block_rows: pair.block_rows,
            channels: pair.channels,
            rate: pair.rate,
            sample_count: samples_in(pair),
            batches: 1,
            rank_deficient: periodic_rank_deficient(&l, p),
        },
        l,
        periodic_rows: p,
    })
}

/// Fold another batch into an existing factor: the LQ of
/// `[L | [Y_per; Y_raw]]`, which equals the factor of the horizontally
/// concatenated data. An empty batch leaves `L` unchanged.
pub fn concat(existing: &LFactor, next: &HankelPair) -> Result<LFactor> {
    existing.check_compatible(next.block_rows, next.channels, next.rate, next.rows())?;
    if next.cols() == 0 {
        return Ok(existing.clone());
    }
    let m = existing.l.nrows();
    let n = m + next.cols();
    let stacked = next.stacked();
    let mut buf = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut buf[i * n..(i + 1) * n];
        for j in 0..=i {
            row[j] = existing.l[(i, j)];
        }
        for j in 0..next.cols() {
            row[m + j] = stacked[(i, j)];
        }
    }
    let l = lq_rows(m, n, &mut buf);
    Ok(LFactor {
        meta: FactorMeta {
            sample_count: existing.meta.sample_count + samples_in(next),
            batches: existing.meta.batches + 1,
            rank_deficient: periodic_rank_deficient(&l, existing.periodic_rows),
            ..existing.meta.clone()
        },
        l,
        periodic_rows: existing.periodic_rows,
    })
}

/// Combine factors of disjoint data: the LQ of `[L₁ | L₂ | …]`.
pub fn merge(factors: &[&LFactor]) -> Result<LFactor> {
    let first = *factors
        .first()
        .ok_or_else(|| Error::invalid("merge needs at least one factor"))?;
    for f in &factors[1..] {
        first.check_compatible(f.meta.block_rows, f.meta.channels, f.meta.rate, f.periodic_rows)?;
        if f.l.nrows() != first.l.nrows() {
            return Err(Error::MetadataMismatch {
                field: "raw_rows",
                expected: first.raw_rows().to_string(),
                found: f.raw_rows().to_string(),
            });
        }
    }
    let m = first.l.nrows();
    let n = m * factors.len();
    let mut buf = vec![0.0; m * n];
    for i in 0..m {
        for (k, f) in factors.iter().enumerate() {
            for j in 0..=i {
                buf[i * n + k * m + j] = f.l[(i, j)];
            }
        }
    }
    let l = lq_rows(m, n, &mut buf);
    Ok(LFactor {
        meta: FactorMeta {
            sample_count: factors.iter().map(|f| f.meta.sample_count).sum(),
            batches: factors.iter().map(|f| f.meta.batches).sum(),
            rank_deficient: periodic_rank_deficient(&l, first.periodic_rows),
            ..first.meta.clone()
        },
        l,
        periodic_rows: first.periodic_rows,
    })
}

/// Raw data with the periodic row space projected out, represented by
/// `L22` (its rows are implicitly multiplied by orthonormal rows of `Q`).
#[derive(Debug, Clone, PartialEq)]
pub struct EditedData {
    pub l22: DMatrix<f64>,
    pub block_rows: usize,
    pub channels: usize,
    pub rate: f64,
}

impl EditedData {
    /// Gram matrix of the edited raw rows.
    pub fn gram(&self) -> DMatrix<f64> {
        &self.l22 * self.l22.transpose()
    }

    /// Re-factor the edited data alone with an empty periodic block; the
    /// result carries the same `L22`.
    pub fn as_factor(&self, sample_count: usize) -> LFactor {
        let r = self.l22.nrows();
        let mut l = DMatrix::zeros(2 * r, 2 * r);
        l.view_mut((r, r), (r, r)).copy_from(&self.l22);
        LFactor {
            l,
            periodic_rows: r,
            meta: FactorMeta {
                block_rows: self.block_rows,
                channels: self.channels,
                rate: self.rate,
                sample_count,
                batches: 1,
                rank_deficient: true,
            },
        }
    }
}

/// The part of the raw rows orthogonal to the periodic rows.
pub fn remove_harmonic_rows(l: &LFactor) -> EditedData {
    EditedData {
        l22: l.l22(),
        block_rows: l.meta.block_rows,
        channels: l.meta.channels,
        rate: l.meta.rate,
    }
}
