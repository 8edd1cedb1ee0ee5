//! Seeded random matrices and states for property checks and oracle restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{c, cr, CMat, C64};

pub type Rng64 = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(r: &mut impl Rng) -> f64 {
    r.sample(StandardNormal)
}

/// Ginibre matrix with standard complex normal entries.
pub fn random_cmat(r: &mut impl Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| c(normal(r), normal(r)) * (0.5f64).sqrt())
}

pub fn random_hermitian(r: &mut impl Rng, n: usize) -> CMat {
    let a = random_cmat(r, n, n);
    (&a + a.adjoint()) * cr(0.5)
}

/// Haar-distributed isometry `rows x cols` (`rows >= cols`).
pub fn random_isometry(r: &mut impl Rng, rows: usize, cols: usize) -> CMat {
    assert!(rows >= cols, "isometry needs rows >= cols");
    let g = random_cmat(r, rows, cols);
    let qr = g.qr();
    let q = qr.q();
    let rr = qr.r();
    // Fix the phase ambiguity of the QR factors.
    let mut out = q.columns(0, cols).into_owned();
    for j in 0..cols {
        let d = rr[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { cr(1.0) };
        for i in 0..rows {
            out[(i, j)] *= ph;
        }
    }
    out
}

pub fn random_unitary(r: &mut impl Rng, n: usize) -> CMat {
    random_isometry(r, n, n)
}

/// Unit vector drawn uniformly from the complex sphere.
pub fn random_pure(r: &mut impl Rng, n: usize) -> CMat {
    let v = random_cmat(r, n, 1);
    let nv = v.norm();
    v / cr(nv)
}

/// Density matrix of the given rank (induced measure).
pub fn random_density(r: &mut impl Rng, n: usize, rank: usize) -> CMat {
    let g = random_cmat(r, n, rank.max(1));
    let rho = &g * g.adjoint();
    let t: C64 = rho.diagonal().sum();
    rho / t
}

/// Traceless Hermitian matrix.
pub fn random_traceless_hermitian(r: &mut impl Rng, n: usize) -> CMat {
    let mut h = random_hermitian(r, n);
    let t = h.diagonal().sum() / cr(n as f64);
    for i in 0..n {
        h[(i, i)] -= t;
    }
    h
}
