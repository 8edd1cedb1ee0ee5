//! Dense complex matrix kernel.
//!
//! Everything spectral in the crate is Hermitian, so the only eigensolver is
//! the Hermitian one (Householder tridiagonalisation followed by implicit QR,
//! as provided by `nalgebra::SymmetricEigen`).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
/// Dense complex matrix.
pub type CMat = DMatrix<C64>;
/// Dense real matrix.
pub type RMat = DMatrix<f64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn check_finite(a: &CMat, what: &str) -> Result<()> {
    if a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite entries")))
    }
}

fn check_square(a: &CMat, what: &str) -> Result<()> {
    if a.is_square() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )))
    }
}

/// Spectral decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermEig {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMat,
}

impl HermEig {
    pub fn max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    /// Rebuilds `V f(diag λ) V†`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.eigenvalues.len();
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for j in 0..n {
            let s = f(self.eigenvalues[j]);
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        &scaled * v.adjoint()
    }

    pub fn reconstruct(&self) -> CMat {
        self.map(|x| x)
    }

    /// Orthonormal columns spanning the eigenvectors whose eigenvalue
    /// satisfies `keep`.
    pub fn columns_where(&self, keep: impl Fn(f64) -> bool) -> CMat {
        let idx: Vec<usize> = (0..self.eigenvalues.len())
            .filter(|&j| keep(self.eigenvalues[j]))
            .collect();
        let n = self.eigenvectors.nrows();
        CMat::from_fn(n, idx.len(), |i, k| self.eigenvectors[(i, idx[k])])
    }
}

/// Hermitian eigendecomposition; the input is symmetrised first.
pub fn herm_eig(a: &CMat) -> Result<HermEig> {
    check_square(a, "herm_eig input")?;
    check_finite(a, "herm_eig input")?;
    Ok(herm_eig_unchecked(a))
}

pub(crate) fn herm_eig_unchecked(a: &CMat) -> HermEig {
    let n = a.nrows();
    if n == 0 {
        return HermEig {
            eigenvalues: vec![],
            eigenvectors: CMat::zeros(0, 0),
        };
    }
    let h = hermitian_part(a);
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = CMat::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    HermEig {
        eigenvalues,
        eigenvectors,
    }
}

/// Real symmetric eigendecomposition, eigenvalues ascending.
pub fn sym_eig(a: &RMat) -> (Vec<f64>, RMat) {
    let n = a.nrows();
    if n == 0 {
        return (vec![], RMat::zeros(0, 0));
    }
    let s = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = RMat::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    (vals, vecs)
}

pub fn sym_min_eig(a: &RMat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    let s = (a + a.transpose()) * 0.5;
    s.symmetric_eigenvalues().min()
}

/// Largest singular value.
pub fn operator_norm(a: &CMat) -> Result<f64> {
    check_finite(a, "operator_norm input")?;
    Ok(opnorm(a))
}

pub(crate) fn opnorm(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if a.is_square() && is_hermitian(a, 1e-14 * (1.0 + a.norm())) {
        let e = herm_eig_unchecked(a);
        return e.max().abs().max(e.min().abs());
    }
    a.singular_values().max()
}

/// Sum of singular values.
pub fn trace_norm(a: &CMat) -> Result<f64> {
    check_finite(a, "trace_norm input")?;
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(a.singular_values().sum())
}

pub fn is_hermitian(a: &CMat, tol: f64) -> bool {
    a.is_square() && (a - a.adjoint()).camax() <= tol
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * cr(0.5)
}

pub fn trace(a: &CMat) -> C64 {
    a.diagonal().sum()
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// `[[Re H, -Im H], [Im H, Re H]]`.
pub fn real_embed(h: &CMat) -> RMat {
    let (r, c) = h.shape();
    let mut out = RMat::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let z = h[(i, j)];
            out[(i, j)] = z.re;
            out[(i + r, j + c)] = z.re;
            out[(i, j + c)] = -z.im;
            out[(i + r, j)] = z.im;
        }
    }
    out
}

/// Inverse of [`real_embed`] for matrices of the embedded form; for a general
/// real symmetric `2n x 2n` matrix this returns the complex matrix whose
/// embedding is the closest one in Frobenius norm.
pub fn real_unembed(m: &RMat) -> CMat {
    let n = m.nrows() / 2;
    CMat::from_fn(n, n, |i, j| {
        let re = 0.5 * (m[(i, j)] + m[(i + n, j + n)]);
        let im = 0.5 * (m[(i + n, j)] - m[(i, j + n)]);
        c(re, im)
    })
}

/// Positive square root of a Hermitian PSD matrix (negative eigenvalues are
/// clipped to zero).
pub fn psd_sqrt(a: &CMat) -> CMat {
    herm_eig_unchecked(a).map(|x| x.max(0.0).sqrt())
}

/// Moore–Penrose inverse of a Hermitian matrix, eigenvalues with modulus
/// below `tol` treated as zero.
pub fn herm_pinv(a: &CMat, tol: f64) -> CMat {
    herm_eig_unchecked(a).map(|x| if x.abs() > tol { 1.0 / x } else { 0.0 })
}

/// Solves `V X + X V = M` for symmetric positive definite `V`.
pub fn lyapunov_sym(v: &RMat, m: &RMat) -> RMat {
    let (vals, q) = sym_eig(v);
    let mt = q.transpose() * m * &q;
    let n = vals.len();
    let x = RMat::from_fn(n, n, |i, j| mt[(i, j)] / (vals[i] + vals[j]));
    &q * x * q.transpose()
}

/// Symmetric logarithmic derivative `L` with `∂ρ = (Lρ + ρL)/2` on the
/// support of `ρ`. Pairs of eigenvalues with `λ_i + λ_j < eps` are dropped;
/// `eps` defaults to `1e-9 tr ρ`.
pub fn sylvester_sld(rho: &CMat, drho: &CMat, eps: Option<f64>) -> Result<CMat> {
    check_square(rho, "rho")?;
    check_finite(rho, "rho")?;
    check_finite(drho, "drho")?;
    if drho.shape() != rho.shape() {
        return Err(Error::DimensionMismatch(format!(
            "rho is {:?}, drho is {:?}",
            rho.shape(),
            drho.shape()
        )));
    }
    let eig = herm_eig_unchecked(rho);
    if eig.min() < -1e-10 {
        return Err(Error::InvalidState(format!(
            "rho has eigenvalue {:.3e} < 0",
            eig.min()
        )));
    }
    let eps = eps.unwrap_or(1e-9 * trace(rho).re.abs().max(f64::MIN_POSITIVE));
    Ok(sld_in_eigenbasis(&eig, drho, eps))
}

pub(crate) fn sld_in_eigenbasis(eig: &HermEig, drho: &CMat, eps: f64) -> CMat {
    let v = &eig.eigenvectors;
    let lam = &eig.eigenvalues;
    let n = lam.len();
    let d = v.adjoint() * drho * v;
    let l = CMat::from_fn(n, n, |i, j| {
        let s = lam[i] + lam[j];
        if s < eps {
            C64::new(0.0, 0.0)
        } else {
            d[(i, j)] * (2.0 / s)
        }
    });
    v * l * v.adjoint()
}

/// Frobenius inner product `tr(A† B)`.
pub fn inner(a: &CMat, b: &CMat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// `tr(A B)` for real matrices of matching shape (`A` used transposed).
pub fn rtrace_prod(a: &RMat, b: &RMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Column-stacked vector view of a real matrix.
pub fn rvec(a: &RMat) -> DVector<f64> {
    DVector::from_iterator(a.len(), a.iter().copied())
}

/// Thin singular value decomposition `a = u diag(s) vᵀ`, `k = min(m, n)`
/// triplets with `s` descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: RMat,
    pub s: Vec<f64>,
    pub v: RMat,
}

/// SVD through the symmetric eigendecomposition of `[[0, a], [aᵀ, 0]]`,
/// whose eigenvalues are `±σ_k` with eigenvectors `[u_k; ±v_k]/√2`.
///
/// nalgebra's bidiagonal SVD returns factors that do not reconstruct some
/// sparse structured inputs (errors of order 1e-2), so it is not used.
pub fn svd(a: &RMat) -> Svd {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return Svd {
            u: RMat::zeros(m, 0),
            s: Vec::new(),
            v: RMat::zeros(n, 0),
        };
    }
    let mut aug = RMat::zeros(m + n, m + n);
    aug.view_mut((0, m), (m, n)).copy_from(a);
    aug.view_mut((m, 0), (n, m)).copy_from(&a.transpose());
    let eig = aug.symmetric_eigen();
    let mut order: Vec<usize> = (0..m + n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let mut u = RMat::zeros(m, k);
    let mut v = RMat::zeros(n, k);
    let mut s = Vec::with_capacity(k);
    for (col, &idx) in order.iter().take(k).enumerate() {
        let w = eig.eigenvectors.column(idx);
        let mut vk = w.rows(m, n).into_owned();
        let mut uk = w.rows(0, m).into_owned();
        let (nv, nu) = (vk.norm(), uk.norm());
        if nv > 0.0 {
            vk /= nv;
        }
        if nu > 0.0 {
            uk /= nu;
        }
        u.set_column(col, &uk);
        v.set_column(col, &vk);
        s.push(eig.eigenvalues[idx].max(0.0));
    }
    Svd { u, s, v }
}

/// Orthonormal basis of the null space of `a` (columns), using relative
/// singular-value threshold `rtol`.
pub fn null_space(a: &RMat, rtol: f64) -> RMat {
    let (m, n) = a.shape();
    if n == 0 {
        return RMat::zeros(0, 0);
    }
    if m == 0 {
        return RMat::identity(n, n);
    }
    let d = svd(a);
    let smax = d.s.first().copied().unwrap_or(0.0);
    let thr = (rtol * smax).max(f64::MIN_POSITIVE);
    let keep: Vec<usize> = (0..d.s.len()).filter(|&k| d.s[k] > thr).collect();
    if keep.is_empty() {
        return RMat::identity(n, n);
    }
    let vr = RMat::from_fn(n, keep.len(), |i, j| d.v[(i, keep[j])]);
    let proj = RMat::identity(n, n) - &vr * vr.transpose();
    let e = proj.symmetric_eigen();
    let idx: Vec<usize> = (0..n).filter(|&i| e.eigenvalues[i] > 0.5).collect();
    RMat::from_fn(n, idx.len(), |i, k| e.eigenvectors[(i, idx[k])])
}

/// Minimum-norm least-squares solution of `a x = b` with relative rank
/// threshold `rtol`; returns the solution and the residual norm.
pub fn lstsq(a: &RMat, b: &DVector<f64>, rtol: f64) -> (DVector<f64>, f64) {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return (DVector::zeros(n), b.norm());
    }
    let d = svd(a);
    let smax = d.s.first().copied().unwrap_or(0.0);
    let thr = rtol * smax;
    let mut x = DVector::zeros(n);
    for (k, &s) in d.s.iter().enumerate() {
        if s > thr && s > 0.0 {
            let coef = d.u.column(k).dot(b) / s;
            x += d.v.column(k) * coef;
        }
    }
    let res = (a * &x - b).norm();
    (x, res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_cmat, random_density, random_hermitian, rng};
    use approx::assert_relative_eq;

    fn sz() -> CMat {
        CMat::from_row_slice(2, 2, &[cr(1.0), cr(0.0), cr(0.0), cr(-1.0)])
    }

    fn check_svd(a: &RMat) {
        let d = svd(a);
        let k = d.s.len();
        let mut rec = RMat::zeros(a.nrows(), a.ncols());
        for j in 0..k {
            rec += d.u.column(j) * d.v.column(j).transpose() * d.s[j];
        }
        assert!((rec - a).amax() < 1e-12 * (1.0 + a.amax()));
        assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
        let smax = d.s[0];
        let live: Vec<usize> = (0..k).filter(|&j| d.s[j] > 1e-10 * smax).collect();
        for &i in &live {
            for &j in &live {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d.v.column(i).dot(&d.v.column(j)) - want).abs() < 1e-10);
                assert!((d.u.column(i).dot(&d.u.column(j)) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn svd_reconstructs() {
        let mut r = rng(11);
        for (m, n) in [(7, 4), (4, 7), (5, 5), (1, 3)] {
            let a = random_cmat(&mut r, m, n).map(|z| z.re);
            check_svd(&a);
        }
        // Rank-deficient and sparse ±1 patterns (the shape of span systems).
        let b = random_cmat(&mut r, 6, 2).map(|z| z.re);
        let c = random_cmat(&mut r, 2, 5).map(|z| z.re);
        check_svd(&(b * c));
        let mut s = RMat::zeros(18, 9);
        for (i, j, v) in [(0, 0, 1.0), (0, 6, 1.0), (8, 0, 1.0), (16, 0, 1.0), (4, 2, 1.0), (12, 2, 1.0), (5, 3, 1.0),
            (13, 3, -1.0), (10, 4, 1.0), (14, 4, 1.0), (11, 5, 1.0), (15, 5, -1.0), (8, 7, 1.0), (2, 8, 1.0), (6, 8, 1.0)]
        {
            s[(i, j)] = v;
        }
        check_svd(&s);
    }

    #[test]
    fn null_space_and_lstsq_on_sparse_pattern() {
        let mut a = RMat::zeros(6, 4);
        a[(0, 0)] = 1.0;
        a[(1, 0)] = 1.0;
        a[(2, 1)] = 1.0;
        a[(3, 1)] = -1.0;
        let ns = null_space(&a, 1e-12);
        assert_eq!(ns.ncols(), 2);
        assert!((&a * &ns).amax() < 1e-14);
        let b = DVector::from_vec(vec![1.0, 1.0, 2.0, -2.0, 0.0, 0.0]);
        let (x, res) = lstsq(&a, &b, 1e-12);
        assert!(res < 1e-14);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14 && x[2] == 0.0);
    }

    #[test]
    fn operator_norm_small_cases() {
        assert_relative_eq!(operator_norm(&identity(3)).unwrap(), 1.0, epsilon = 1e-14);
        let d = CMat::from_row_slice(2, 2, &[cr(1.0), cr(0.0), cr(0.0), cr(-2.0)]);
        assert_relative_eq!(operator_norm(&d).unwrap(), 2.0, epsilon = 1e-14);
        assert_relative_eq!(trace_norm(&d).unwrap(), 3.0, epsilon = 1e-14);
        assert_eq!(trace_norm(&CMat::zeros(3, 3)).unwrap(), 0.0);
    }

    #[test]
    fn operator_norm_matches_power_iteration() {
        let mut r = rng(7);
        let a = random_cmat(&mut r, 4, 4);
        let aa = a.adjoint() * &a;
        let mut v = DVector::from_element(4, cr(1.0));
        let mut lam = 0.0;
        for _ in 0..2000 {
            let w = &aa * &v;
            lam = w.norm();
            v = w / cr(lam);
        }
        assert_relative_eq!(operator_norm(&a).unwrap(), lam.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn trace_norm_of_hermitian_is_abs_eigen_sum() {
        let mut r = rng(3);
        let h = random_hermitian(&mut r, 5);
        let e = herm_eig(&h).unwrap();
        let s: f64 = e.eigenvalues.iter().map(|x| x.abs()).sum();
        assert_relative_eq!(trace_norm(&h).unwrap(), s, epsilon = 1e-12);
    }

    #[test]
    fn non_finite_rejected() {
        let mut a = identity(2);
        a[(0, 1)] = c(f64::NAN, 0.0);
        assert!(matches!(operator_norm(&a), Err(Error::InvalidInput(_))));
        assert!(matches!(trace_norm(&a), Err(Error::InvalidInput(_))));
        assert!(matches!(
            herm_eig(&CMat::zeros(2, 3)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn herm_eig_sigma_z_and_reconstruction() {
        let e = herm_eig(&sz()).unwrap();
        assert_relative_eq!(e.eigenvalues[0], -1.0, epsilon = 1e-15);
        assert_relative_eq!(e.eigenvalues[1], 1.0, epsilon = 1e-15);
        let e = herm_eig(&identity(3)).unwrap();
        assert!(e.eigenvalues.iter().all(|&x| (x - 1.0).abs() < 1e-15));

        let mut r = rng(11);
        for n in 1..7 {
            let h = random_hermitian(&mut r, n);
            let e = herm_eig(&h).unwrap();
            let scale = opnorm(&h);
            assert!((e.reconstruct() - &h).camax() < 1e-12 * scale);
            let v = &e.eigenvectors;
            assert!((v.adjoint() * v - identity(n)).camax() < 1e-12);
            assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn sld_cases() {
        let rho = identity(2) * cr(0.5);
        let l = sylvester_sld(&rho, &(sz() * cr(0.5)), None).unwrap();
        assert!((l - sz()).camax() < 1e-14);
        let l = sylvester_sld(&rho, &CMat::zeros(2, 2), None).unwrap();
        assert_eq!(l.camax(), 0.0);

        let mut r = rng(5);
        let rho = random_density(&mut r, 3, 3);
        let mut d = random_hermitian(&mut r, 3);
        let tr = trace(&d) / cr(3.0);
        for i in 0..3 {
            d[(i, i)] -= tr;
        }
        let l = sylvester_sld(&rho, &d, None).unwrap();
        let res = (&l * &rho + &rho * &l) * cr(0.5) - &d;
        assert!(res.camax() < 1e-10);
        assert!(is_hermitian(&l, 1e-12));
    }

    #[test]
    fn sld_rejects_negative_state() {
        let rho = CMat::from_row_slice(2, 2, &[cr(1.1), cr(0.0), cr(0.0), cr(-0.1)]);
        assert!(matches!(
            sylvester_sld(&rho, &sz(), None),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn real_embed_doubles_spectrum() {
        let sy = CMat::from_row_slice(2, 2, &[cr(0.0), c(0.0, -1.0), c(0.0, 1.0), cr(0.0)]);
        let (vals, _) = sym_eig(&real_embed(&sy));
        let want = [-1.0, -1.0, 1.0, 1.0];
        for (a, b) in vals.iter().zip(want) {
            assert_relative_eq!(*a, b, epsilon = 1e-14);
        }
        assert_eq!(real_embed(&identity(2)), RMat::identity(4, 4));

        let mut r = rng(9);
        let rho = random_density(&mut r, 4, 4);
        let (vals, _) = sym_eig(&real_embed(&rho));
        let e = herm_eig(&rho).unwrap();
        for k in 0..4 {
            assert_relative_eq!(vals[2 * k], e.eigenvalues[k], epsilon = 1e-12);
            assert_relative_eq!(vals[2 * k + 1], e.eigenvalues[k], epsilon = 1e-12);
        }
        assert!((real_unembed(&real_embed(&rho)) - rho).camax() < 1e-15);
    }

    #[test]
    fn lyapunov_solves() {
        let mut r = rng(1);
        let h = random_density(&mut r, 4, 4);
        let v = real_embed(&(h + identity(4)));
        let m = real_embed(&random_hermitian(&mut r, 4));
        let x = lyapunov_sym(&v, &m);
        assert!((&v * &x + &x * &v - m).amax() < 1e-12);
    }

    #[test]
    fn null_space_and_lstsq() {
        let a = RMat::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let n = null_space(&a, 1e-11);
        assert_eq!(n.ncols(), 1);
        assert!((&a * &n).amax() < 1e-14);
        let b = DVector::from_vec(vec![2.0, 3.0]);
        let (x, res) = lstsq(&a, &b, 1e-11);
        assert!(res < 1e-13);
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-13);
        assert_relative_eq!(x[2], 3.0, epsilon = 1e-13);
    }
}
