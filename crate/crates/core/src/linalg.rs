//! Small linear-algebra toolkit: dense eigensolves through faer, tridiagonal
//! chains, and restarted GMRES for complex systems.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use faer::{Mat, MatRef, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);

/// Anything that maps a complex vector to another of the same length.
///
/// Used both for the system matrix and for preconditioners (where `apply`
/// is an approximate inverse).
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C64], y: &mut [C64]);
}

pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        y.copy_from_slice(x);
    }
}

pub fn norm(x: &[C64]) -> f64 {
    libm::sqrt(x.iter().map(|z| z.norm_sqr()).sum())
}

/// Conjugate-linear in the first argument.
pub fn cdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).fold(ZERO, |acc, (x, y)| acc + x.conj() * y)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dense real symmetric eigendecomposition of a column-major `n × n` matrix.
/// Returns ascending eigenvalues and column-major eigenvectors.
pub fn symmetric_eigen(n: usize, a: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let m = MatRef::from_column_major_slice(a, n, n);
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Factorization(format!("dense eigensolve: {e:?}")))?;
    let s = evd.S().column_vector();
    let vals = (0..n).map(|i| s[i]).collect();
    let u = evd.U();
    let mut vecs = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            vecs[j * n + i] = u[(i, j)];
        }
    }
    Ok((vals, vecs))
}

/// Eigenvalues and eigenvectors of a dense Hermitian matrix (column-major).
pub fn hermitian_eigen(n: usize, a: &[C64]) -> Result<(Vec<f64>, Vec<C64>)> {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let m = MatRef::from_column_major_slice(a, n, n);
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Factorization(format!("hermitian eigensolve: {e:?}")))?;
    let s = evd.S().column_vector();
    let vals = (0..n).map(|i| s[i].re).collect();
    let u = evd.U();
    let mut vecs = vec![ZERO; n * n];
    for j in 0..n {
        for i in 0..n {
            vecs[j * n + i] = u[(i, j)];
        }
    }
    Ok((vals, vecs))
}

/// `C = Aᵀ B` for column-major `A` (`rows × p`) and `B` (`rows × q`).
pub fn gram(rows: usize, a: &[f64], p: usize, b: &[f64], q: usize) -> Vec<f64> {
    let a = MatRef::from_column_major_slice(a, rows, p);
    let b = MatRef::from_column_major_slice(b, rows, q);
    let c: Mat<f64> = a.transpose() * b;
    let mut out = vec![0.0; p * q];
    for j in 0..q {
        for i in 0..p {
            out[j * p + i] = c[(i, j)];
        }
    }
    out
}

/// `C = A Q` for column-major `A` (`rows × p`) and small `Q` (`p × q`).
pub fn rotate(rows: usize, a: &[f64], p: usize, q_mat: &[f64], q: usize) -> Vec<f64> {
    let a = MatRef::from_column_major_slice(a, rows, p);
    let qm = MatRef::from_column_major_slice(q_mat, p, q);
    let c: Mat<f64> = a * qm;
    let mut out = vec![0.0; rows * q];
    for j in 0..q {
        for i in 0..rows {
            out[j * rows + i] = c[(i, j)];
        }
    }
    out
}

/// Thomas algorithm for a general complex tridiagonal system.
/// `sub[i]` couples row `i + 1` to column `i`, `sup[i]` couples row `i` to `i + 1`.
pub fn solve_tridiagonal(sub: &[C64], diag: &[C64], sup: &[C64], rhs: &[C64]) -> Result<Vec<C64>> {
    let n = diag.len();
    assert!(sub.len() + 1 == n.max(1) && sup.len() + 1 == n.max(1) && rhs.len() == n);
    let mut c = vec![ZERO; n];
    let mut d = vec![ZERO; n];
    let mut piv = diag[0];
    if piv.norm() == 0.0 {
        return Err(Error::Factorization("zero pivot in tridiagonal solve".into()));
    }
    if n > 1 {
        c[0] = sup[0] / piv;
    }
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - sub[i - 1] * c[i - 1];
        if piv.norm() == 0.0 {
            return Err(Error::Factorization("zero pivot in tridiagonal solve".into()));
        }
        if i + 1 < n {
            c[i] = sup[i] / piv;
        }
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / piv;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        let next = d[i + 1];
        d[i] -= c[i] * next;
    }
    Ok(d)
}

/// Many independent tridiagonal chains sharing a constant off-diagonal `-t`.
///
/// Chain `j` has diagonal entries `diag[i * width + j]` for `i` in
/// `0..len`; vectors use the same slice-major layout.
#[derive(Debug, Clone)]
pub struct TridiagonalChains {
    len: usize,
    width: usize,
    hopping: f64,
    pivots: Vec<C64>,
}

impl TridiagonalChains {
    pub fn factor(len: usize, width: usize, hopping: f64, diag: &[C64]) -> Self {
        assert_eq!(diag.len(), len * width);
        let mut pivots = diag.to_vec();
        let t2 = hopping * hopping;
        for i in 1..len {
            let (prev, cur) = pivots.split_at_mut(i * width);
            let prev = &prev[(i - 1) * width..];
            for (p, q) in cur[..width].iter_mut().zip(prev) {
                *p -= t2 / q;
            }
        }
        Self {
            len,
            width,
            hopping,
            pivots,
        }
    }

    pub fn solve_in_place(&self, x: &mut [C64]) {
        let (n, w, t) = (self.len, self.width, self.hopping);
        assert_eq!(x.len(), n * w);
        for i in 1..n {
            let (prev, cur) = x.split_at_mut(i * w);
            let prev = &prev[(i - 1) * w..];
            let piv = &self.pivots[(i - 1) * w..i * w];
            for j in 0..w {
                cur[j] += prev[j] * t / piv[j];
            }
        }
        for j in 0..w {
            x[(n - 1) * w + j] /= self.pivots[(n - 1) * w + j];
        }
        for i in (0..n - 1).rev() {
            let (cur, next) = x.split_at_mut((i + 1) * w);
            let cur = &mut cur[i * w..];
            let piv = &self.pivots[i * w..(i + 1) * w];
            for j in 0..w {
                cur[j] = (cur[j] + next[j] * t) / piv[j];
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOptions {
    pub tolerance: f64,
    pub restart: usize,
    pub max_iterations: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            restart: 30,
            max_iterations: 600,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOutcome {
    pub iterations: usize,
    /// True relative residual ‖b − A x‖ / ‖b‖ at exit.
    pub residual: f64,
}

/// Right-preconditioned restarted GMRES. `x` holds the initial guess on
/// entry and the solution on exit.
pub fn gmres(
    a: &dyn LinearOperator,
    m: &dyn LinearOperator,
    b: &[C64],
    x: &mut [C64],
    opts: &GmresOptions,
) -> Result<GmresOutcome> {
    let n = a.dim();
    assert!(b.len() == n && x.len() == n && m.dim() == n);
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = ZERO);
        return Ok(GmresOutcome {
            iterations: 0,
            residual: 0.0,
        });
    }
    let k = opts.restart.max(1);
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(k + 1);
    let mut h = vec![ZERO; (k + 1) * k];
    let mut cs = vec![0.0; k];
    let mut sn = vec![ZERO; k];
    let mut g = vec![ZERO; k + 1];
    let mut w = vec![ZERO; n];
    let mut z = vec![ZERO; n];
    let mut iterations = 0;

    let mut r = vec![ZERO; n];
    let residual_into = |x: &[C64], r: &mut [C64]| {
        a.apply(x, r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
    };
    residual_into(x, &mut r);
    let mut rel = norm(&r) / bnorm;

    while rel > opts.tolerance && iterations < opts.max_iterations {
        let beta = norm(&r);
        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        g.iter_mut().for_each(|v| *v = ZERO);
        g[0] = C64::new(beta, 0.0);
        let mut used = 0;
        for j in 0..k {
            m.apply(&basis[j], &mut z);
            a.apply(&z, &mut w);
            iterations += 1;
            for (i, v) in basis.iter().enumerate() {
                let hij = cdot(v, &w);
                h[j * (k + 1) + i] = hij;
                for (wl, vl) in w.iter_mut().zip(v) {
                    *wl -= hij * vl;
                }
            }
            let hn = norm(&w);
            h[j * (k + 1) + j + 1] = C64::new(hn, 0.0);
            for i in 0..j {
                let (hi, hi1) = (h[j * (k + 1) + i], h[j * (k + 1) + i + 1]);
                h[j * (k + 1) + i] = hi * cs[i] + sn[i] * hi1;
                h[j * (k + 1) + i + 1] = -sn[i].conj() * hi + hi1 * cs[i];
            }
            let (aj, bj) = (h[j * (k + 1) + j], h[j * (k + 1) + j + 1]);
            let denom = libm::sqrt(aj.norm_sqr() + bj.norm_sqr());
            if aj.norm() == 0.0 {
                cs[j] = 0.0;
                sn[j] = C64::new(1.0, 0.0);
            } else {
                cs[j] = aj.norm() / denom;
                sn[j] = (aj / aj.norm()) * bj.conj() / denom;
            }
            h[j * (k + 1) + j] = cs[j] * aj + sn[j] * bj;
            h[j * (k + 1) + j + 1] = ZERO;
            let gj = g[j];
            g[j] = gj * cs[j];
            g[j + 1] = -sn[j].conj() * gj;
            used = j + 1;
            rel = g[j + 1].norm() / bnorm;
            if rel <= opts.tolerance || iterations >= opts.max_iterations || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        let mut y = vec![ZERO; used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for l in i + 1..used {
                s -= h[l * (k + 1) + i] * y[l];
            }
            y[i] = s / h[i * (k + 1) + i];
        }
        w.iter_mut().for_each(|v| *v = ZERO);
        for (yl, v) in y.iter().zip(&basis) {
            for (wi, vi) in w.iter_mut().zip(v) {
                *wi += yl * vi;
            }
        }
        m.apply(&w, &mut z);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += zi;
        }
        residual_into(x, &mut r);
        rel = norm(&r) / bnorm;
    }
    if rel > opts.tolerance {
        return Err(Error::LinearSolver {
            iterations,
            residual: rel,
        });
    }
    Ok(GmresOutcome {
        iterations,
        residual: rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Dense {
        n: usize,
        a: Vec<C64>,
    }

    impl LinearOperator for Dense {
        fn dim(&self) -> usize {
            self.n
        }

        fn apply(&self, x: &[C64], y: &mut [C64]) {
            for i in 0..self.n {
                y[i] = (0..self.n).map(|j| self.a[i * self.n + j] * x[j]).sum();
            }
        }
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
    }

    #[test]
    fn tridiagonal_matches_dense_product() {
        let n = 7;
        let mut s = 3;
        let sub: Vec<C64> = (0..n - 1).map(|_| C64::new(lcg(&mut s), lcg(&mut s))).collect();
        let sup: Vec<C64> = (0..n - 1).map(|_| C64::new(lcg(&mut s), lcg(&mut s))).collect();
        let diag: Vec<C64> = (0..n).map(|_| C64::new(3.0 + lcg(&mut s), lcg(&mut s))).collect();
        let rhs: Vec<C64> = (0..n).map(|_| C64::new(lcg(&mut s), lcg(&mut s))).collect();
        let x = solve_tridiagonal(&sub, &diag, &sup, &rhs).unwrap();
        for i in 0..n {
            let mut v = diag[i] * x[i];
            if i > 0 {
                v += sub[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                v += sup[i] * x[i + 1];
            }
            assert!((v - rhs[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn chains_agree_with_thomas() {
        let (len, width, t) = (9, 3, 0.7);
        let mut s = 11;
        let diag: Vec<C64> = (0..len * width).map(|_| C64::new(2.5 + lcg(&mut s), lcg(&mut s))).collect();
        let rhs: Vec<C64> = (0..len * width).map(|_| C64::new(lcg(&mut s), lcg(&mut s))).collect();
        let chains = TridiagonalChains::factor(len, width, t, &diag);
        let mut x = rhs.clone();
        chains.solve_in_place(&mut x);
        let off = vec![C64::new(-t, 0.0); len - 1];
        for j in 0..width {
            let d: Vec<C64> = (0..len).map(|i| diag[i * width + j]).collect();
            let r: Vec<C64> = (0..len).map(|i| rhs[i * width + j]).collect();
            let y = solve_tridiagonal(&off, &d, &off, &r).unwrap();
            for i in 0..len {
                assert!((y[i] - x[i * width + j]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn gmres_solves_nonhermitian_system() {
        let n = 40;
        let mut s = 5;
        let mut a = vec![ZERO; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = C64::new(lcg(&mut s), lcg(&mut s)) * 0.3;
            }
            a[i * n + i] += C64::new(4.0, 1.0);
        }
        let op = Dense { n, a };
        let b: Vec<C64> = (0..n).map(|_| C64::new(lcg(&mut s), lcg(&mut s))).collect();
        let mut x = vec![ZERO; n];
        let opts = GmresOptions {
            tolerance: 1e-12,
            restart: 8,
            max_iterations: 500,
        };
        let out = gmres(&op, &Identity(n), &b, &mut x, &opts).unwrap();
        assert!(out.residual < 1e-12);
        let mut ax = vec![ZERO; n];
        op.apply(&x, &mut ax);
        let err: Vec<C64> = ax.iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm(&err) / norm(&b) < 1e-11);
    }

    #[test]
    fn gmres_reports_stagnation() {
        let n = 30;
        let mut s = 9;
        let a: Vec<C64> = (0..n * n).map(|_| C64::new(lcg(&mut s), lcg(&mut s))).collect();
        let op = Dense { n, a };
        let b = vec![C64::new(1.0, 0.0); n];
        let mut x = vec![ZERO; n];
        let opts = GmresOptions {
            tolerance: 1e-14,
            restart: 2,
            max_iterations: 6,
        };
        assert!(matches!(
            gmres(&op, &Identity(n), &b, &mut x, &opts),
            Err(Error::LinearSolver { .. })
        ));
    }

    #[test]
    fn symmetric_eigen_of_diagonal() {
        let a = [3.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 2.0];
        let (vals, vecs) = symmetric_eigen(3, &a).unwrap();
        assert_eq!(vals.len(), 3);
        for (v, e) in vals.iter().zip([-1.0, 2.0, 3.0]) {
            assert!((v - e).abs() < 1e-14);
        }
        assert!((vecs[1].abs() - 1.0).abs() < 1e-14);
    }
}
