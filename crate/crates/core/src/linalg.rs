//! Householder LQ factorization on row-major storage.
//!
//! `A = L Qᵀ` with `L` lower triangular and a nonnegative diagonal. `Q` is
//! never formed. A row whose remaining part is exactly zero consumes no
//! pivot column: its diagonal and the matching column of `L` are zero, so a
//! block of all-zero leading rows leaves the factor of the trailing rows
//! bit-for-bit identical to factoring those rows alone.

use nalgebra::DMatrix;
use rayon::prelude::*;

const PAR_MIN_WORK: usize = 1 << 16;

/// Factor an `m × n` row-major matrix in place and return `L` as an
/// `m × m` matrix. The buffer is used as scratch.
pub fn lq_rows(m: usize, n: usize, data: &mut [f64]) -> DMatrix<f64> {
    assert_eq!(data.len(), m * n, "buffer does not match {m}x{n}");
    let mut l = DMatrix::zeros(m, m);
    let mut pivot = 0usize;

    for k in 0..m {
        if pivot >= n {
            // no columns left; row k lives entirely in earlier pivots
            continue;
        }
        let (head, tail) = data.split_at_mut((k + 1) * n);
        let row = &mut head[k * n + pivot..k * n + n];
        let x0 = row[0];
        let tail_sq: f64 = row[1..].iter().map(|v| v * v).sum();

        if tail_sq == 0.0 && x0 == 0.0 {
            continue;
        }
        let norm = (x0 * x0 + tail_sq).sqrt();
        l[(k, k)] = norm;

        if !(tail_sq == 0.0 && x0 > 0.0) {
            let v0 = if x0 <= 0.0 {
                x0 - norm
            } else {
                -tail_sq / (x0 + norm)
            };
            row[0] = v0;
            let vtv = v0 * v0 + tail_sq;
            let scale = 2.0 / vtv;
            let v: &[f64] = row;
            let rows_below = m - k - 1;
            let apply = |r: &mut [f64]| {
                let seg = &mut r[pivot..n];
                let s: f64 = seg.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() * scale;
                if s != 0.0 {
                    seg.iter_mut().zip(v).for_each(|(a, b)| *a -= s * b);
                }
            };
            let tail = &mut tail[..rows_below * n];
            if rows_below * (n - pivot) >= PAR_MIN_WORK {
                tail.par_chunks_mut(n).for_each(apply);
            } else {
                tail.chunks_mut(n).for_each(apply);
            }
        }

        for r in k + 1..m {
            l[(r, k)] = data[r * n + pivot];
        }
        pivot += 1;
    }
    l
}

/// LQ of a column-major matrix; returns the `m × m` lower factor.
pub fn lq(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = a.shape();
    // column-major storage of aᵀ is row-major storage of a
    let mut buf: Vec<f64> = a.transpose().as_slice().to_vec();
    lq_rows(m, n, &mut buf)
}
