use nalgebra::DMatrix;

use super::series::MultiChannelTimeSeries;
use crate::error::{Error, Result};

/// Block-Hankel matrix of all channels of `ts`.
///
/// Layout: row `i * channels + c` holds channel `c` shifted by `i` samples,
/// so column `j` is the stacked sample vector `[y(j); y(j+1); …; y(j+block_rows-1)]`.
/// The matrix has `channels * block_rows` rows and `N - block_rows + 1` columns,
/// and must be wider than tall.
pub fn build_hankel(ts: &MultiChannelTimeSeries, block_rows: usize) -> Result<DMatrix<f64>> {
    if block_rows == 0 {
        return Err(Error::invalid("block_rows must be at least 1"));
    }
    let ch = ts.channel_count();
    let n = ts.len();
    let rows = ch * block_rows;
    let required = (ch + 1) * block_rows;
    if n < required {
        return Err(Error::InsufficientSamples {
            required,
            available: n,
        });
    }
    let cols = n - block_rows + 1;
    let channels = ts.channels();
    Ok(DMatrix::from_fn(rows, cols, |r, j| {
        let (shift, c) = (r / ch, r % ch);
        channels[c].data[j + shift]
    }))
}

/// Block-Hankel matrices of the periodic subsignal and of the raw signal,
/// aligned sample for sample.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelPair {
    pub y_per: DMatrix<f64>,
    pub y_raw: DMatrix<f64>,
    pub block_rows: usize,
    pub channels: usize,
    pub rate: f64,
}

impl HankelPair {
    pub fn new(periodic: &MultiChannelTimeSeries, raw: &MultiChannelTimeSeries, block_rows: usize) -> Result<Self> {
        if periodic.len() != raw.len() || periodic.channel_count() != raw.channel_count() {
            return Err(Error::invalid(
                "periodic and raw series must have the same channels and length",
            ));
        }
        if (periodic.rate() - raw.rate()).abs() > 1e-12 * raw.rate() {
            return Err(Error::invalid("periodic and raw series have different rates"));
        }
        Self::from_matrices(
            build_hankel(periodic, block_rows)?,
            build_hankel(raw, block_rows)?,
            block_rows,
            raw.channel_count(),
            raw.rate(),
        )
    }

    /// Pair with an all-zero periodic block (no harmonic removal).
    pub fn raw_only(raw: &MultiChannelTimeSeries, block_rows: usize) -> Result<Self> {
        let y_raw = build_hankel(raw, block_rows)?;
        let y_per = DMatrix::zeros(y_raw.nrows(), y_raw.ncols());
        Self::from_matrices(y_per, y_raw, block_rows, raw.channel_count(), raw.rate())
    }

    pub fn from_matrices(
        y_per: DMatrix<f64>,
        y_raw: DMatrix<f64>,
        block_rows: usize,
        channels: usize,
        rate: f64,
    ) -> Result<Self> {
        if y_per.shape() != y_raw.shape() {
            return Err(Error::invalid(format!(
                "periodic block is {:?} but raw block is {:?}",
                y_per.shape(),
                y_raw.shape()
            )));
        }
        Ok(HankelPair {
            y_per,
            y_raw,
            block_rows,
            channels,
            rate,
        })
    }

    pub fn rows(&self) -> usize {
        self.y_raw.nrows()
    }

    pub fn cols(&self) -> usize {
        self.y_raw.ncols()
    }

    /// `[Y_per; Y_raw]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let (r, c) = self.y_raw.shape();
        let mut s = DMatrix::zeros(2 * r, c);
        s.rows_mut(0, r).copy_from(&self.y_per);
        s.rows_mut(r, r).copy_from(&self.y_raw);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_hankel() {
        let ts = MultiChannelTimeSeries::from_columns(1.0, vec![vec![1.0, 2.0, 3.0, 4.0]]).unwrap();
        let h = build_hankel(&ts, 2).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 3.0, 4.0]));
    }

    #[test]
    fn single_block_row_is_the_channel_matrix() {
        let a = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let b = vec![-1.0, -2.0, -3.0, -4.0, -5.0];
        let ts = MultiChannelTimeSeries::from_columns(1.0, vec![a.clone(), b.clone()]).unwrap();
        let h = build_hankel(&ts, 1).unwrap();
        let mut flat = a;
        flat.extend(b);
        assert_eq!(h, DMatrix::from_row_slice(2, 5, &flat));
    }

    #[test]
    fn shape_arithmetic() {
        let ts = MultiChannelTimeSeries::from_columns(25.0, vec![vec![0.5; 1000], vec![0.25; 1000]]).unwrap();
        assert_eq!(build_hankel(&ts, 30).unwrap().shape(), (60, 971));
    }

    #[test]
    fn first_block_reproduces_samples() {
        let a: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..50).map(|i| (i as f64).cos()).collect();
        let ts = MultiChannelTimeSeries::from_columns(1.0, vec![a.clone(), b.clone()]).unwrap();
        let h = build_hankel(&ts, 5).unwrap();
        assert_eq!(h.row(0).iter().copied().collect::<Vec<_>>(), a[..46].to_vec());
        assert_eq!(h.row(1).iter().copied().collect::<Vec<_>>(), b[..46].to_vec());
        // last block row ends on the final samples
        assert_eq!(h[(9, 45)], b[49]);
    }

    #[test]
    fn too_short_reports_minimum() {
        let ts = MultiChannelTimeSeries::from_columns(1.0, vec![vec![0.0; 10], vec![0.0; 10]]).unwrap();
        match build_hankel(&ts, 4) {
            Err(Error::InsufficientSamples { required, available }) => {
                assert_eq!((required, available), (12, 10));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
