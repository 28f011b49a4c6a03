//! Banded LU, spectral projectors and finite-difference helpers.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular (zero pivot in column {0})")]
    Singular(usize),
    #[error("matrix sign iteration did not converge")]
    SignNotConverged,
    #[error("entry ({row}, {col}) lies outside the band")]
    OutsideBand { row: usize, col: usize },
}

/// Square matrix with `kl` sub- and `ku` super-diagonals, stored LAPACK style
/// with `kl` extra rows reserved for pivoting fill-in.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    // column-major, (2kl+ku+1) rows per column
    ab: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            ab: vec![0.0; (2 * kl + ku + 1) * n],
        }
    }

    fn ldab(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        // A(i,j) sits at ab[kl + ku + i - j, j]
        (self.kl + self.ku + i - j) + j * self.ldab()
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i <= j + self.kl && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.ab[self.idx(i, j)]
        } else {
            0.0
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) -> Result<(), LinalgError> {
        if !self.in_band(i, j) {
            return Err(LinalgError::OutsideBand { row: i, col: j });
        }
        let k = self.idx(i, j);
        self.ab[k] += v;
        Ok(())
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (j, &xj) in x.iter().enumerate() {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for (i, yi) in y.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *yi += self.ab[self.idx(i, j)] * xj;
            }
        }
        y
    }

    pub fn norm1(&self) -> f64 {
        (0..self.n)
            .map(|j| {
                let lo = j.saturating_sub(self.ku);
                let hi = (j + self.kl).min(self.n - 1);
                (lo..=hi).map(|i| self.ab[self.idx(i, j)].abs()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Gaussian elimination with partial pivoting inside the band.
    pub fn lu(mut self) -> Result<BandLu, LinalgError> {
        let n = self.n;
        let kl = self.kl;
        let kv = self.ku + self.kl;
        let ld = self.ldab();
        let mut ipiv = vec![0usize; n];
        let mut ju = 0usize;
        let at = |r: usize, c: usize| r + c * ld;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = self.ab[at(kv, j)].abs();
            for p in 1..=km {
                let v = self.ab[at(kv + p, j)].abs();
                if v > best {
                    best = v;
                    jp = p;
                }
            }
            ipiv[j] = j + jp;
            if best == 0.0 {
                return Err(LinalgError::Singular(j));
            }
            ju = ju.max((j + self.ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let off = c - j;
                    self.ab.swap(at(kv + jp - off, c), at(kv - off, c));
                }
            }
            let pivot = self.ab[at(kv, j)];
            for p in 1..=km {
                self.ab[at(kv + p, j)] /= pivot;
            }
            for c in (j + 1)..=ju {
                let off = c - j;
                let u = self.ab[at(kv - off, c)];
                if u != 0.0 {
                    for p in 1..=km {
                        let l = self.ab[at(kv + p, j)];
                        self.ab[at(kv + p - off, c)] -= l * u;
                    }
                }
            }
        }
        Ok(BandLu { m: self, ipiv })
    }
}

/// Factorization produced by [`BandMatrix::lu`].
#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
    ipiv: Vec<usize>,
}

impl BandLu {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.m.ab[r + c * self.m.ldab()]
    }

    pub fn solve(&self, b: &mut [f64]) {
        let n = self.m.n;
        let kl = self.m.kl;
        let kv = self.m.kl + self.m.ku;
        for j in 0..n.saturating_sub(1) {
            let lm = kl.min(n - 1 - j);
            let l = self.ipiv[j];
            if l != j {
                b.swap(l, j);
            }
            let bj = b[j];
            for p in 1..=lm {
                b[j + p] -= self.at(kv + p, j) * bj;
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.at(kv, j);
            let bj = b[j];
            for i in j.saturating_sub(kv)..j {
                b[i] -= self.at(kv + i - j, j) * bj;
            }
        }
    }

    pub fn solve_transpose(&self, b: &mut [f64]) {
        let n = self.m.n;
        let kl = self.m.kl;
        let kv = self.m.kl + self.m.ku;
        for j in 0..n {
            let mut s = b[j];
            for i in j.saturating_sub(kv)..j {
                s -= self.at(kv + i - j, j) * b[i];
            }
            b[j] = s / self.at(kv, j);
        }
        for j in (0..n.saturating_sub(1)).rev() {
            let lm = kl.min(n - 1 - j);
            let mut s = b[j];
            for p in 1..=lm {
                s -= self.at(kv + p, j) * b[j + p];
            }
            b[j] = s;
            let l = self.ipiv[j];
            if l != j {
                b.swap(l, j);
            }
        }
    }

    /// Hager–Higham lower estimate of `‖A⁻¹‖₁`.
    pub fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.m.n;
        let mut x = vec![1.0 / n as f64; n];
        let mut est = 0.0;
        for _ in 0..5 {
            let mut y = x.clone();
            self.solve(&mut y);
            let new_est: f64 = y.iter().map(|v| v.abs()).sum();
            let mut z: Vec<f64> = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
            self.solve_transpose(&mut z);
            let (jmax, zmax) = z
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.abs()))
                .fold((0, 0.0), |acc, it| if it.1 > acc.1 { it } else { acc });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if new_est <= est || zmax <= ztx {
                est = est.max(new_est);
                break;
            }
            est = new_est;
            x = vec![0.0; n];
            x[jmax] = 1.0;
        }
        est
    }
}

/// Spectral projectors onto the stable and unstable invariant subspaces of a
/// hyperbolic matrix, computed with the scaled Newton iteration for the
/// matrix sign function.
pub fn spectral_projectors(j: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), LinalgError> {
    let d = j.nrows();
    let id = DMatrix::<f64>::identity(d, d);
    let mut x = j.clone();
    for _ in 0..100 {
        let inv = x.clone().try_inverse().ok_or(LinalgError::SignNotConverged)?;
        let det = x.determinant().abs();
        let c = if det > 0.0 { det.powf(-1.0 / d as f64) } else { 1.0 };
        let c = if c.is_finite() { c } else { 1.0 };
        let next = (&x * c + &inv / c) * 0.5;
        let delta = (&next - &x).amax();
        x = next;
        if delta <= 1e-14 * x.amax().max(1.0) {
            // one unscaled step polishes the final iterate
            let inv = x.clone().try_inverse().ok_or(LinalgError::SignNotConverged)?;
            x = (&x + inv) * 0.5;
            let stable = (&id - &x) * 0.5;
            let unstable = (&id + &x) * 0.5;
            return Ok((stable, unstable));
        }
    }
    Err(LinalgError::SignNotConverged)
}

/// Orthonormal bases of `range(p)` (rank `k`) and of its orthogonal complement.
pub fn range_and_complement(p: &DMatrix<f64>, k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = p.nrows();
    let svd = p.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());
    let range = DMatrix::from_fn(d, k, |i, c| u[(i, order[c])]);
    let comp = DMatrix::from_fn(d, d - k, |i, c| u[(i, order[k + c])]);
    (range, comp)
}

/// Central-difference Jacobian of `f` at `x`.
pub fn fd_jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>, step: f64) -> DMatrix<f64> {
    let n = x.len();
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, n);
    for k in 0..n {
        let h = step * (1.0 + x[k].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let col = (f(&xp) - f(&xm)) / (2.0 * h);
        jac.set_column(k, &col);
    }
    jac
}

/// Derivative with respect to `x` of `A(x)·c` (or `A(x)ᵀ·c`) for a matrix-valued map,
/// by central differences of the analytic matrix. Exact for `A` at most quadratic in `x`
/// up to rounding.
pub fn matrix_apply_derivative(
    a: impl Fn(&DVector<f64>) -> DMatrix<f64>,
    x: &DVector<f64>,
    c: &DVector<f64>,
    transpose: bool,
) -> DMatrix<f64> {
    let n = x.len();
    let apply = |m: DMatrix<f64>| if transpose { m.transpose() * c } else { m * c };
    let mut out = DMatrix::zeros(c.len(), n);
    for k in 0..n {
        let h = 1e-5 * (1.0 + x[k].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let col = (apply(a(&xp)) - apply(a(&xm))) / (2.0 * h);
        out.set_column(k, &col);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> BandMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut m = BandMatrix::zeros(n, kl, ku);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                m.add(i, j, rng.gen_range(-1.0..1.0)).unwrap();
            }
        }
        m
    }

    #[test]
    fn band_lu_matches_dense_solve() {
        let m = random_band(40, 3, 5, 7);
        let dense = m.to_dense();
        let b: Vec<f64> = (0..40).map(|k| (k as f64).cos()).collect();
        let mut x = b.clone();
        m.clone().lu().unwrap().solve(&mut x);
        let xd = dense.clone().lu().solve(&DVector::from_vec(b.clone())).unwrap();
        for k in 0..40 {
            assert!((x[k] - xd[k]).abs() < 1e-9 * (1.0 + xd[k].abs()));
        }
        let mut xt = b.clone();
        m.lu().unwrap().solve_transpose(&mut xt);
        let xtd = dense.transpose().lu().solve(&DVector::from_vec(b)).unwrap();
        for k in 0..40 {
            assert!((xt[k] - xtd[k]).abs() < 1e-9 * (1.0 + xtd[k].abs()));
        }
    }

    #[test]
    fn singular_band_is_reported() {
        let m = BandMatrix::zeros(3, 1, 1);
        assert!(matches!(m.lu(), Err(LinalgError::Singular(0))));
    }

    #[test]
    fn outside_band_rejected() {
        let mut m = BandMatrix::zeros(5, 1, 1);
        assert!(m.add(0, 3, 1.0).is_err());
    }

    #[test]
    fn condition_estimate_is_reasonable() {
        let m = random_band(30, 2, 2, 3);
        let dense = m.to_dense();
        let exact = dense.clone().try_inverse().unwrap();
        let exact_norm = (0..30)
            .map(|j| exact.column(j).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let est = m.lu().unwrap().inverse_norm1_estimate();
        assert!(est <= exact_norm * (1.0 + 1e-10));
        assert!(est >= 0.1 * exact_norm);
    }

    #[test]
    fn projectors_of_diagonal_matrix() {
        let j = DMatrix::from_diagonal(&DVector::from_vec(vec![-2.0, 1.0, -0.5]));
        let (ps, pu) = spectral_projectors(&j).unwrap();
        let expect_s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0, 1.0]));
        assert!((ps - expect_s).amax() < 1e-13);
        assert!((pu.trace() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn projectors_of_rotation_spiral() {
        let j = DMatrix::from_row_slice(3, 3, &[-1.0, 4.0, 0.0, -4.0, -1.0, 0.0, 0.3, 0.0, 2.0]);
        let (ps, pu) = spectral_projectors(&j).unwrap();
        assert!((ps.trace() - 2.0).abs() < 1e-10);
        assert!((&ps * &ps - &ps).amax() < 1e-10);
        let id = DMatrix::<f64>::identity(3, 3);
        assert!(((&id - &pu) * &j * &pu).amax() < 1e-10);
    }

    proptest! {
        #[test]
        fn band_solve_residual_small(seed in 0u64..500, kl in 0usize..4, ku in 0usize..4) {
            let n = 25;
            let mut m = random_band(n, kl, ku, seed);
            for i in 0..n { m.add(i, i, 4.0).unwrap(); }
            let b: Vec<f64> = (0..n).map(|k| (k as f64 * 0.3).sin()).collect();
            let mut x = b.clone();
            m.clone().lu().unwrap().solve(&mut x);
            let r = m.mul_vec(&x);
            for k in 0..n { prop_assert!((r[k] - b[k]).abs() < 1e-10); }
        }
    }
}
