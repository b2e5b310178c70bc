//! Householder QR with column pivoting, plus a complete orthogonal
//! decomposition for minimum-norm least-squares coefficients.
//!
//! Storage follows LAPACK's `geqp3` layout: `R` on and above the diagonal,
//! the Householder vectors (with implicit unit leading entry) below it.

use nalgebra::DMatrix;

/// Pivoted QR factorisation of an `n x d` matrix, truncated at its numerical rank.
#[derive(Debug, Clone)]
pub struct QrFactor {
    nrows: usize,
    ncols: usize,
    /// Column-major `n x d` work array.
    a: Vec<f64>,
    tau: Vec<f64>,
    perm: Vec<usize>,
    rank: usize,
}

/// Generates a Householder reflector for `x` in place and returns `tau`.
///
/// On exit `x[0]` holds `beta` and `x[1..]` the tail of `v` (with `v[0] = 1`).
fn make_reflector(x: &mut [f64]) -> f64 {
    let alpha = x[0];
    let tail_sq: f64 = x[1..].iter().map(|v| v * v).sum();
    if tail_sq == 0.0 {
        return 0.0;
    }
    let norm = (alpha * alpha + tail_sq).sqrt();
    let beta = if alpha >= 0.0 { -norm } else { norm };
    let scale = 1.0 / (alpha - beta);
    for v in &mut x[1..] {
        *v *= scale;
    }
    x[0] = beta;
    (beta - alpha) / beta
}

/// Applies `I - tau v v'` to `y`, where `v = [1, v_tail]`.
#[inline]
fn apply_reflector(v_tail: &[f64], tau: f64, y: &mut [f64]) {
    if tau == 0.0 {
        return;
    }
    let mut s = y[0];
    for (vi, yi) in v_tail.iter().zip(&y[1..]) {
        s += vi * yi;
    }
    s *= tau;
    y[0] -= s;
    for (vi, yi) in v_tail.iter().zip(&mut y[1..]) {
        *yi -= s * vi;
    }
}

impl QrFactor {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let (n, d) = x.shape();
        let mut a = x.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..d).collect();
        let steps = n.min(d);
        let mut tau = Vec::with_capacity(steps);

        let col_norm_sq = |a: &[f64], c: usize, from: usize| -> f64 {
            a[c * n + from..(c + 1) * n].iter().map(|v| v * v).sum()
        };
        let mut norms: Vec<f64> = (0..d).map(|c| col_norm_sq(&a, c, 0)).collect();
        let mut exact: Vec<f64> = norms.clone();

        let mut rank = 0;
        let mut tol = 0.0;
        for k in 0..steps {
            // pivot: largest remaining partial column norm
            let (best, best_norm) = (k..d)
                .map(|c| (c, norms[c]))
                .fold((k, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            if k == 0 {
                tol = best_norm.sqrt() * f64::EPSILON * (n.max(d) as f64);
            }
            if best_norm.sqrt() <= tol || best_norm == 0.0 {
                break;
            }
            if best != k {
                for r in 0..n {
                    a.swap(k * n + r, best * n + r);
                }
                perm.swap(k, best);
                norms.swap(k, best);
                exact.swap(k, best);
            }

            let t = make_reflector(&mut a[k * n + k..(k + 1) * n]);
            tau.push(t);
            rank += 1;

            let (head, rest) = a.split_at_mut((k + 1) * n);
            let v_tail = &head[k * n + k + 1..(k + 1) * n];
            for c in (k + 1)..d {
                let off = (c - k - 1) * n;
                let col = &mut rest[off + k..off + n];
                apply_reflector(v_tail, t, col);
                // downdate the partial norm, recomputing when cancellation bites
                let r_kc = col[0];
                norms[c] -= r_kc * r_kc;
                if norms[c] <= 1e-6 * exact[c] || norms[c] < 0.0 {
                    norms[c] = col[1..].iter().map(|v| v * v).sum();
                    exact[c] = norms[c];
                }
            }
        }

        Self {
            nrows: n,
            ncols: d,
            a,
            tau,
            perm,
            rank,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    fn v_tail(&self, k: usize) -> &[f64] {
        &self.a[k * self.nrows + k + 1..(k + 1) * self.nrows]
    }

    #[inline]
    fn r(&self, row: usize, col: usize) -> f64 {
        self.a[col * self.nrows + row]
    }

    /// Computes `Q' y` over the leading `rank` reflectors.
    fn qt(&self, y: &[f64]) -> Vec<f64> {
        let mut z = y.to_vec();
        for k in 0..self.rank {
            apply_reflector(self.v_tail(k), self.tau[k], &mut z[k..]);
        }
        z
    }

    /// Residual of the orthogonal projection of `y` onto the column space.
    pub fn residual(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.nrows, "rhs length must match row count");
        let mut z = self.qt(y);
        z[..self.rank].iter_mut().for_each(|v| *v = 0.0);
        for k in (0..self.rank).rev() {
            apply_reflector(self.v_tail(k), self.tau[k], &mut z[k..]);
        }
        z
    }

    /// Minimum-norm least-squares coefficients, in original column order.
    pub fn coefficients(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.nrows, "rhs length must match row count");
        let r = self.rank;
        let d = self.ncols;
        let mut out = vec![0.0; d];
        if r == 0 {
            return out;
        }
        let c = self.qt(y);
        let mut w = vec![0.0; d];

        if r == d {
            for i in (0..r).rev() {
                let mut s = c[i];
                for (j, wj) in w.iter().enumerate().take(r).skip(i + 1) {
                    s -= self.r(i, j) * wj;
                }
                w[i] = s / self.r(i, i);
            }
        } else {
            // R_r = [R11 R12] is r x d. Factor its transpose T = Z S (d x r)
            // so that R_r w = c becomes S' (Z' w) = c; the minimum-norm
            // solution sets the trailing d - r entries of Z' w to zero.
            let mut t = vec![0.0; d * r];
            for j in 0..r {
                for i in j..d {
                    t[j * d + i] = self.r(j, i);
                }
            }
            let mut ztau = Vec::with_capacity(r);
            for k in 0..r {
                let tk = make_reflector(&mut t[k * d + k..(k + 1) * d]);
                ztau.push(tk);
                let (head, rest) = t.split_at_mut((k + 1) * d);
                let v_tail = &head[k * d + k + 1..(k + 1) * d];
                for col in (k + 1)..r {
                    let off = (col - k - 1) * d;
                    apply_reflector(v_tail, tk, &mut rest[off + k..off + d]);
                }
            }
            // forward solve S' u = c[..r], S upper triangular
            for i in 0..r {
                let mut s = c[i];
                for j in 0..i {
                    s -= t[i * d + j] * w[j];
                }
                w[i] = s / t[i * d + i];
            }
            for k in (0..r).rev() {
                let v_tail = &t[k * d + k + 1..(k + 1) * d];
                apply_reflector(v_tail, ztau[k], &mut w[k..]);
            }
        }

        for (k, &p) in self.perm.iter().enumerate() {
            out[p] = w[k];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_rank_solution_matches_direct_solve() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0]);
        let y = [1.0, 2.0, 3.0, 0.5];
        let qr = QrFactor::new(&x);
        assert_eq!(qr.rank(), 2);
        let w = qr.coefficients(&y);
        // normal equations by hand: X'X = [[6,-1],[-1,3]], X'y = [5, 4.5]
        let det = 6.0 * 3.0 - 1.0;
        let w0 = (3.0 * 5.0 + 1.0 * 4.5) / det;
        let w1 = (1.0 * 5.0 + 6.0 * 4.5) / det;
        assert!((w[0] - w0).abs() < 1e-12);
        assert!((w[1] - w1).abs() < 1e-12);
    }

    #[test]
    fn duplicate_column_gives_minimum_norm_split() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let y = [2.0, 4.0, 6.0];
        let qr = QrFactor::new(&x);
        assert_eq!(qr.rank(), 1);
        let w = qr.coefficients(&y);
        assert!((w[0] - 1.0).abs() < 1e-12 && (w[1] - 1.0).abs() < 1e-12);
        assert!(qr.residual(&y).iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let x = DMatrix::<f64>::zeros(5, 3);
        let qr = QrFactor::new(&x);
        assert_eq!(qr.rank(), 0);
        assert_eq!(qr.coefficients(&[1.0; 5]), vec![0.0; 3]);
        assert_eq!(qr.residual(&[1.0; 5]), vec![1.0; 5]);
    }

    #[test]
    fn wide_matrix_interpolates() {
        // more columns than rows: residual vanishes
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 4.0]);
        let y = [1.0, -2.0];
        let qr = QrFactor::new(&x);
        assert_eq!(qr.rank(), 2);
        let w = qr.coefficients(&y);
        let fit0 = w[0] + 2.0 * w[1] + 3.0 * w[2];
        let fit1 = -w[0] + 0.5 * w[1] + 4.0 * w[2];
        assert!((fit0 - 1.0).abs() < 1e-12 && (fit1 + 2.0).abs() < 1e-12);
        // minimum norm: w lies in the row space, i.e. w = X' a
        let xt = x.transpose();
        let a = (&x * &xt).lu().solve(&nalgebra::DVector::from_column_slice(&y)).unwrap();
        let w_ref = xt * a;
        for k in 0..3 {
            assert!((w[k] - w_ref[k]).abs() < 1e-10);
        }
    }
}
