//! Dense and banded symmetric positive-definite solvers.
//!
//! The block updates of the solver reduce to small SPD systems: per-column
//! ridge systems of size `d`, autoregression normal equations of size `p`, and
//! a per-factor system over the whole time axis whose Hessian is banded with
//! bandwidth `p`. Both solvers use an unpivoted Cholesky factorization and
//! report failure instead of panicking when a pivot is not positive, which is
//! how the callers detect genuinely singular (unpenalized, underdetermined)
//! subproblems.

use ndarray::{Array1, Array2};

/// Relative pivot floor below which a matrix is treated as singular.
const PIVOT_RTOL: f64 = 1e-12;

/// Solves `a * x = b` for a dense symmetric positive-definite `a`.
///
/// Only the lower triangle of `a` is read. Returns `None` when a Cholesky
/// pivot is not positive (matrix singular or indefinite).
pub fn solve_spd(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n, "matrix must be square");
    assert_eq!(b.len(), n, "rhs length must match");

    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(0.0_f64, f64::max);
    if n > 0 && scale == 0.0 {
        return None;
    }
    let floor = PIVOT_RTOL * scale;

    // Lower-triangular factor, row-major.
    let mut l = vec![0.0_f64; n * n];
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > floor) {
            return None;
        }
        let diag = d.sqrt();
        l[j * n + j] = diag;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / diag;
        }
    }

    // Forward then backward substitution.
    let mut x = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            x[i] = x[i] - l[i * n + k] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            x[i] = x[i] - l[k * n + i] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    Some(Array1::from_vec(x))
}

/// Symmetric banded matrix stored by diagonals.
///
/// `band[k][t]` holds entry `(t + k, t)` of the matrix for `k = 0..=bandwidth`,
/// i.e. the main diagonal and `bandwidth` sub-diagonals. Entries outside the
/// band are implicitly zero.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    n: usize,
    bandwidth: usize,
    band: Vec<f64>,
}

impl BandedSpd {
    /// Creates the zero matrix of order `n` with the given lower bandwidth.
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        let bandwidth = bandwidth.min(n.saturating_sub(1));
        Self {
            n,
            bandwidth,
            band: vec![0.0; (bandwidth + 1) * n],
        }
    }

    /// Matrix order.
    pub fn order(&self) -> usize {
        self.n
    }

    /// Adds `v` to entry `(row, col)` (and its mirror). `row >= col` required.
    pub fn add(&mut self, row: usize, col: usize, v: f64) {
        debug_assert!(row >= col, "store into the lower triangle");
        let k = row - col;
        debug_assert!(k <= self.bandwidth, "entry outside the band");
        self.band[k * self.n + col] += v;
    }

    /// Cholesky-factorizes in place and solves `self * x = b`.
    ///
    /// Returns `None` when a pivot is not positive.
    pub fn solve(mut self, b: &Array1<f64>) -> Option<Array1<f64>> {
        let n = self.n;
        let bw = self.bandwidth;
        assert_eq!(b.len(), n, "rhs length must match");

        let scale = (0..n).map(|t| self.band[t].abs()).fold(0.0_f64, f64::max);
        if n > 0 && scale == 0.0 {
            return None;
        }
        let floor = PIVOT_RTOL * scale;

        // In-place banded Cholesky: after the loop, band[k][t] = L[t + k][t].
        for t in 0..n {
            let mut d = self.band[t];
            for k in 1..=bw.min(t) {
                let l_tk = self.band[k * n + (t - k)];
                d -= l_tk * l_tk;
            }
            if !(d > floor) {
                return None;
            }
            let diag = d.sqrt();
            self.band[t] = diag;
            for r in (t + 1)..=(t + bw).min(n - 1) {
                let mut s = self.band[(r - t) * n + t];
                // Common history of rows r and t, restricted to the band.
                let j0 = r.saturating_sub(bw).max(t.saturating_sub(bw));
                for j in j0..t {
                    s -= self.band[(r - j) * n + j] * self.band[(t - j) * n + j];
                }
                self.band[(r - t) * n + t] = s / diag;
            }
        }

        // Forward substitution L y = b.
        let mut x = b.to_vec();
        for t in 0..n {
            for k in 1..=bw.min(t) {
                x[t] = x[t] - self.band[k * n + (t - k)] * x[t - k];
            }
            x[t] /= self.band[t];
        }
        // Backward substitution L' x = y.
        for t in (0..n).rev() {
            for k in 1..=bw.min(n - 1 - t) {
                x[t] = x[t] - self.band[k * n + t] * x[t + k];
            }
            x[t] /= self.band[t];
        }
        Some(Array1::from_vec(x))
    }
}
