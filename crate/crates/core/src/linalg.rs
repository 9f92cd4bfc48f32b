//! Small dense matrix routines.
//!
//! Noise matrices are tiny (p rarely above 4), so a plain Gauss-Jordan
//! elimination with partial pivoting is all the inversion machinery needed.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Pivots below this fraction of the largest entry are treated as zero.
const SINGULAR_PIVOT: f64 = 1e-12;

/// Inverts a square matrix in place via Gauss-Jordan with partial pivoting.
pub fn invert(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::Shape {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut work = a.clone();
    let mut inv = Array2::<f64>::eye(n);

    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_abs = work[[col, col]].abs();
        for r in col + 1..n {
            let v = work[[r, col]].abs();
            if v > pivot_abs {
                pivot_row = r;
                pivot_abs = v;
            }
        }
        if pivot_abs < SINGULAR_PIVOT * scale {
            return Err(Error::SingularMatrix);
        }
        if pivot_row != col {
            for j in 0..n {
                work.swap([col, j], [pivot_row, j]);
                inv.swap([col, j], [pivot_row, j]);
            }
        }
        let pivot = work[[col, col]];
        for j in 0..n {
            work[[col, j]] /= pivot;
            inv[[col, j]] /= pivot;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = work[[r, col]];
            if factor == 0.0 {
                continue;
            }
            for j in 0..n {
                work[[r, j]] -= factor * work[[col, j]];
                inv[[r, j]] -= factor * inv[[col, j]];
            }
        }
    }
    Ok(inv)
}

/// Largest row sum of absolute values (the induced infinity norm).
pub fn max_row_l1(a: &Array2<f64>) -> f64 {
    a.outer_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
