//! Dense complex linear algebra helpers on top of `nalgebra`.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float as _;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `exp(i·theta)`.
#[inline]
pub fn cis(theta: f64) -> C64 {
    C64::new(theta.cos(), theta.sin())
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn scaled_identity(n: usize, s: f64) -> CMat {
    CMat::from_diagonal_element(n, n, c(s, 0.0))
}

pub fn trace(a: &CMat) -> C64 {
    a.diagonal().iter().sum()
}

/// `tr(A·B)` without forming the product.
pub fn trace_prod(a: &CMat, b: &CMat) -> C64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = ZERO;
    for i in 0..b.ncols() {
        let bc = b.column(i);
        for (k, bk) in bc.iter().enumerate() {
            acc += a[(i, k)] * bk;
        }
    }
    acc
}

/// `tr(A·B)` for Hermitian `B`, read contiguously as `Σ a_ik conj(b_ik)`.
pub fn trace_prod_h(a: &CMat, b_herm: &CMat) -> C64 {
    debug_assert_eq!(a.shape(), b_herm.shape());
    a.iter().zip(b_herm.iter()).map(|(x, y)| x * y.conj()).sum()
}

/// `v^H A w`.
pub fn quad_form(v: &CVec, a: &CMat, w: &CVec) -> C64 {
    v.dotc(&(a * w))
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Relative Hermitian defect `‖A − A^H‖_F / ‖A‖_F` (zero for the zero matrix).
pub fn hermitian_defect(a: &CMat) -> f64 {
    let n = frobenius(a);
    if n == 0.0 {
        return 0.0;
    }
    frobenius(&(a - a.adjoint())) / n
}

/// Replace `A` by `(A + A^H)/2` in place.
pub fn hermitize(a: &mut CMat) {
    let n = a.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            a[(i, j)] = v;
            a[(j, i)] = v.conj();
        }
        a[(j, j)] = c(a[(j, j)].re, 0.0);
    }
}

/// `acc += s·m`.
pub fn axpy(acc: &mut CMat, s: f64, m: &CMat) {
    for (x, y) in acc.iter_mut().zip(m.iter()) {
        *x += y * s;
    }
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(a: &CMat) -> (Vec<f64>, CMat) {
    let mut h = a.clone();
    hermitize(&mut h);
    let eig = h.symmetric_eigen();
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Rebuild `V·diag(f(λ))·V^H`.
fn spectral_map(vals: &[f64], vecs: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let mut scaled = vecs.clone();
    for (j, &l) in vals.iter().enumerate() {
        let s = f(l);
        scaled.column_mut(j).scale_mut(s);
    }
    scaled * vecs.adjoint()
}

/// Hermitian square root of a PSD matrix. Eigenvalues at or below the
/// round-off floor of the decomposition (including negative ones) map to zero.
/// Also returns the most negative eigenvalue seen (0 if none).
pub fn psd_sqrt(a: &CMat) -> (CMat, f64) {
    let (vals, vecs) = eigh(a);
    let min_eig = vals.first().copied().unwrap_or(0.0).min(0.0);
    let lmax = vals.last().copied().unwrap_or(0.0).max(0.0);
    let floor = 16.0 * f64::EPSILON * a.nrows() as f64 * lmax;
    (spectral_map(&vals, &vecs, |l| if l > floor { l.sqrt() } else { 0.0 }), min_eig)
}

/// Moore–Penrose inverse of a Hermitian PSD matrix restricted to eigenvalues
/// above `rel_tol·λ_max`. Returns the inverse and the numerical rank.
pub fn pinv_psd(a: &CMat, rel_tol: f64) -> (CMat, usize) {
    let (vals, vecs) = eigh(a);
    let lmax = vals.iter().fold(0.0_f64, |m, &l| m.max(l));
    let cut = rel_tol * lmax;
    let rank = vals.iter().filter(|&&l| l > cut && l > 0.0).count();
    let inv = spectral_map(&vals, &vecs, |l| if l > cut && l > 0.0 { 1.0 / l } else { 0.0 });
    (inv, rank)
}

/// Cholesky factor of a Hermitian positive-definite matrix.
#[derive(Clone, Debug)]
pub struct Hpd {
    chol: Cholesky<C64, Dyn>,
}

impl Hpd {
    pub fn new(a: CMat) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::dim(format!("HPD factor of a {}x{} matrix", n, a.ncols())));
        }
        Cholesky::new(a)
            .map(|chol| Hpd { chol })
            .ok_or_else(|| Error::numerical(format!("Cholesky factorization failed (n = {n})")))
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn solve(&self, b: &CMat) -> CMat {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &CVec) -> CVec {
        self.chol.solve(b)
    }

    pub fn solve_mut(&self, b: &mut CMat) {
        self.chol.solve_mut(b)
    }

    pub fn inverse(&self) -> CMat {
        let mut inv = self.chol.inverse();
        hermitize(&mut inv);
        inv
    }
}

/// Inverse of a Hermitian positive-definite matrix.
pub fn hpd_inverse(a: &CMat) -> Result<CMat> {
    Ok(Hpd::new(a.clone())?.inverse())
}

/// Solve a small dense real system `A x = b` by LU.
pub fn solve_real(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::numerical("singular real linear system"))
}

/// Solve a small dense complex system `A x = b` by LU.
pub fn solve_complex(a: &CMat, b: &CVec) -> Result<CVec> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::numerical("singular complex linear system"))
}
