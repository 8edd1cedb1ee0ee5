//! Parametric channel families in Kraus form, the Lindblad (GKLS) models,
//! and the channel zoo.
//!
//! A [`ParamChannel`] stores, for every parameter `x`, a Kraus list `K_{x,j}`
//! and the derivative list `∂_x K_{x,j}`. A single channel with several
//! parameters simply repeats the same Kraus list for every `x`; an ensemble of
//! channels (random sensing) may use different lists.
//!
//! Kraus operators are ordered as displayed in the usual textbook forms: for
//! erasure the no-loss operator comes first, then one loss operator per input
//! level; for GAD the order is (K0, K1, K2, K3) with the ν-weighted pair last.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, check_finite, cr, herm_eig_unchecked, identity, is_hermitian, lstsq, CMat, RMat, C64, I};
use crate::random::{random_hermitian, random_isometry};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamChannel {
    pub dim_in: usize,
    pub dim_out: usize,
    pub labels: Vec<String>,
    pub theta_star: Vec<f64>,
    pub kraus: Vec<Vec<CMat>>,
    pub dkraus: Vec<Vec<CMat>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CptpReport {
    /// `‖Σ_j K†K − I‖` for each parameter's Kraus list.
    pub residuals: Vec<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanCheck {
    pub satisfied: bool,
    pub residual: f64,
    /// A solving gauge when the condition holds (least-squares otherwise).
    pub gauge: CMat,
}

/// Stacks Kraus operators into the `r·dout × din` column.
pub fn stack(ops: &[CMat]) -> CMat {
    if ops.is_empty() {
        return CMat::zeros(0, 0);
    }
    let (m, n) = ops[0].shape();
    let mut out = CMat::zeros(m * ops.len(), n);
    for (j, k) in ops.iter().enumerate() {
        out.view_mut((j * m, 0), (m, n)).copy_from(k);
    }
    out
}

/// Applies the Kraus-index mixing `(hK)_j = Σ_k h_jk K_k`.
pub fn mix(h: &CMat, ops: &[CMat]) -> Vec<CMat> {
    (0..ops.len())
        .map(|j| {
            let mut acc = CMat::zeros(ops[0].nrows(), ops[0].ncols());
            for (k, op) in ops.iter().enumerate() {
                let w = h[(j, k)];
                if w != C64::new(0.0, 0.0) {
                    acc += op * w;
                }
            }
            acc
        })
        .collect()
}

/// `Σ_j A_j† B_j`.
pub fn gram(a: &[CMat], b: &[CMat]) -> CMat {
    let mut acc = CMat::zeros(a[0].ncols(), b[0].ncols());
    for (x, y) in a.iter().zip(b) {
        acc += x.adjoint() * y;
    }
    acc
}

/// Basis of `r×r` Hermitian matrices matching the solver's real gauge
/// variables: `E_jj`, then for each `j<k` the pair `E_jk+E_kj`, `i(E_jk−E_kj)`.
pub fn gauge_basis(r: usize) -> Vec<CMat> {
    let mut out = Vec::with_capacity(r * r);
    for j in 0..r {
        let mut e = CMat::zeros(r, r);
        e[(j, j)] = cr(1.0);
        out.push(e);
    }
    for j in 0..r {
        for k in (j + 1)..r {
            let mut re = CMat::zeros(r, r);
            re[(j, k)] = cr(1.0);
            re[(k, j)] = cr(1.0);
            out.push(re);
            let mut im = CMat::zeros(r, r);
            im[(j, k)] = I;
            im[(k, j)] = -I;
            out.push(im);
        }
    }
    out
}

/// Hermitian matrix from gauge coordinates in [`gauge_basis`] order.
pub fn gauge_from_coords(r: usize, y: &[f64]) -> CMat {
    let mut h = CMat::zeros(r, r);
    for j in 0..r {
        h[(j, j)] = cr(y[j]);
    }
    let mut v = r;
    for j in 0..r {
        for k in (j + 1)..r {
            h[(j, k)] = c(y[v], y[v + 1]);
            h[(k, j)] = c(y[v], -y[v + 1]);
            v += 2;
        }
    }
    h
}

/// Real equations `A y = b` equivalent to `M0 + Σ y_v M_v = 0` (real and
/// imaginary parts of every entry, row-major).
pub fn complex_affine_system(m0: &CMat, ms: &[CMat]) -> (RMat, DVector<f64>) {
    let (r, cdim) = m0.shape();
    let rows = 2 * r * cdim;
    let mut a = RMat::zeros(rows, ms.len());
    let mut b = DVector::zeros(rows);
    for i in 0..r {
        for j in 0..cdim {
            let row = 2 * (i * cdim + j);
            b[row] = -m0[(i, j)].re;
            b[row + 1] = -m0[(i, j)].im;
            for (v, m) in ms.iter().enumerate() {
                a[(row, v)] = m[(i, j)].re;
                a[(row + 1, v)] = m[(i, j)].im;
            }
        }
    }
    (a, b)
}

impl ParamChannel {
    /// Builds and validates shapes and trace preservation.
    pub fn new(
        dim_in: usize,
        dim_out: usize,
        labels: Vec<String>,
        theta_star: Vec<f64>,
        kraus: Vec<Vec<CMat>>,
        dkraus: Vec<Vec<CMat>>,
    ) -> Result<Self> {
        let ch = Self::new_unchecked(dim_in, dim_out, labels, theta_star, kraus, dkraus)?;
        let rep = validate_cptp(&ch)?;
        if !rep.passed {
            return Err(Error::InvalidChannel(format!(
                "not trace preserving, residuals {:?}",
                rep.residuals
            )));
        }
        Ok(ch)
    }

    /// One Kraus list shared by every parameter.
    pub fn shared(
        dim_in: usize,
        dim_out: usize,
        labels: Vec<String>,
        theta_star: Vec<f64>,
        kraus: Vec<CMat>,
        dkraus: Vec<Vec<CMat>>,
    ) -> Result<Self> {
        let p = dkraus.len();
        Self::new(dim_in, dim_out, labels, theta_star, vec![kraus; p], dkraus)
    }

    /// Shape checks only; trace preservation is left to [`validate_cptp`].
    pub fn new_unchecked(
        dim_in: usize,
        dim_out: usize,
        labels: Vec<String>,
        theta_star: Vec<f64>,
        kraus: Vec<Vec<CMat>>,
        dkraus: Vec<Vec<CMat>>,
    ) -> Result<Self> {
        let p = kraus.len();
        if p == 0 {
            return Err(Error::InvalidChannel("no parameters".into()));
        }
        if dkraus.len() != p || labels.len() != p || theta_star.len() != p {
            return Err(Error::InvalidChannel(format!(
                "parameter count mismatch: kraus {p}, dkraus {}, labels {}, theta {}",
                dkraus.len(),
                labels.len(),
                theta_star.len()
            )));
        }
        for x in 0..p {
            if kraus[x].is_empty() {
                return Err(Error::InvalidChannel(format!("parameter {x} has no Kraus operators")));
            }
            if kraus[x].len() != dkraus[x].len() {
                return Err(Error::InvalidChannel(format!(
                    "parameter {x}: {} Kraus operators but {} derivatives",
                    kraus[x].len(),
                    dkraus[x].len()
                )));
            }
            for m in kraus[x].iter().chain(&dkraus[x]) {
                if m.shape() != (dim_out, dim_in) {
                    return Err(Error::InvalidChannel(format!(
                        "parameter {x}: operator shape {:?}, expected ({dim_out}, {dim_in})",
                        m.shape()
                    )));
                }
                check_finite(m, "Kraus operator").map_err(|e| Error::InvalidChannel(e.to_string()))?;
            }
        }
        Ok(ParamChannel {
            dim_in,
            dim_out,
            labels,
            theta_star,
            kraus,
            dkraus,
        })
    }

    pub fn num_params(&self) -> usize {
        self.kraus.len()
    }

    pub fn rank(&self, x: usize) -> usize {
        self.kraus[x].len()
    }

    /// True when all parameters share one Kraus list (single channel).
    pub fn is_shared(&self) -> bool {
        self.kraus.windows(2).all(|w| w[0] == w[1])
    }

    /// The one-parameter channel for parameter `x`.
    pub fn single(&self, x: usize) -> ParamChannel {
        ParamChannel {
            dim_in: self.dim_in,
            dim_out: self.dim_out,
            labels: vec![self.labels[x].clone()],
            theta_star: vec![self.theta_star[x]],
            kraus: vec![self.kraus[x].clone()],
            dkraus: vec![self.dkraus[x].clone()],
        }
    }

    /// Rescales parameter `x` by `1/c_x`, i.e. multiplies its derivatives by `c_x`.
    pub fn rescaled(&self, scale: &[f64]) -> ParamChannel {
        let mut out = self.clone();
        for (x, s) in scale.iter().enumerate() {
            out.dkraus[x] = out.dkraus[x].iter().map(|m| m * cr(*s)).collect();
        }
        out
    }

    /// Linear reparametrisation `∂'_x = Σ_y a_xy ∂_y` of a single channel.
    pub fn reparametrized(&self, a: &RMat) -> Result<ParamChannel> {
        let p = self.num_params();
        if !self.is_shared() || a.shape() != (p, p) {
            return Err(Error::InvalidInput(
                "reparametrisation needs a shared Kraus list and a p×p matrix".into(),
            ));
        }
        let mut out = self.clone();
        for x in 0..p {
            out.dkraus[x] = (0..self.rank(0))
                .map(|j| {
                    let mut acc = CMat::zeros(self.dim_out, self.dim_in);
                    for y in 0..p {
                        acc += &self.dkraus[y][j] * cr(a[(x, y)]);
                    }
                    acc
                })
                .collect();
            out.labels[x] = format!("{}'", self.labels[x]);
        }
        Ok(out)
    }

    /// Applies the unitary Kraus-index mixing `u` (co-transforming derivatives)
    /// to every parameter whose rank matches `u`.
    pub fn kraus_mixed(&self, u: &CMat) -> ParamChannel {
        let mut out = self.clone();
        for x in 0..self.num_params() {
            if self.rank(x) == u.nrows() {
                out.kraus[x] = mix(u, &self.kraus[x]);
                out.dkraus[x] = mix(u, &self.dkraus[x]);
            }
        }
        out
    }
}

pub fn validate_cptp(ch: &ParamChannel) -> Result<CptpReport> {
    let mut residuals = Vec::with_capacity(ch.num_params());
    for x in 0..ch.num_params() {
        for m in ch.kraus[x].iter().chain(&ch.dkraus[x]) {
            if m.shape() != (ch.dim_out, ch.dim_in) {
                return Err(Error::InvalidChannel(format!(
                    "parameter {x}: operator shape {:?}, expected ({}, {})",
                    m.shape(),
                    ch.dim_out,
                    ch.dim_in
                )));
            }
        }
        let s = gram(&ch.kraus[x], &ch.kraus[x]) - identity(ch.dim_in);
        residuals.push(crate::linalg::opnorm(&s));
    }
    let passed = residuals.iter().all(|r| *r <= 1e-10);
    Ok(CptpReport { residuals, passed })
}

/// Row-major vectorisation `|M⟩ = Σ M_ij |i⟩_out |j⟩_anc`.
pub fn vec_op(m: &CMat) -> DVector<C64> {
    let (r, cdim) = m.shape();
    DVector::from_fn(r * cdim, |k, _| m[(k / cdim, k % cdim)])
}

/// Choi matrix `Ω = Σ_j |K_j⟩⟨K_j|` of parameter `x`'s channel and its
/// derivative `Σ_j |∂K_j⟩⟨K_j| + |K_j⟩⟨∂K_j|`. The output factor comes
/// first, the ancilla (input copy) second.
pub fn choi_matrix(ch: &ParamChannel, x: usize) -> (CMat, CMat) {
    let n = ch.dim_out * ch.dim_in;
    let mut omega = CMat::zeros(n, n);
    let mut domega = CMat::zeros(n, n);
    for (k, dk) in ch.kraus[x].iter().zip(&ch.dkraus[x]) {
        let v = vec_op(k);
        let dv = vec_op(dk);
        omega += &v * v.adjoint();
        domega += &dv * v.adjoint() + &v * dv.adjoint();
    }
    (omega, domega)
}

/// The HKS linear system for parameter `x`: `β_x(h) = ∂K†K + i Σ h_kj K_k†K_j`
/// as real equations in the [`gauge_basis`] coordinates of `h`.
pub fn beta_system(kraus: &[CMat], dkraus: &[CMat]) -> (RMat, DVector<f64>) {
    let b0 = gram(dkraus, kraus);
    // The h-linear part of D†K is (−i hK)†K = i (hK)†K.
    let ms: Vec<CMat> = gauge_basis(kraus.len())
        .iter()
        .map(|e| gram(&mix(e, kraus), kraus) * I)
        .collect();
    complex_affine_system(&b0, &ms)
}

pub fn hks_check(ch: &ParamChannel, x: usize, tol: f64) -> SpanCheck {
    let (a, b) = beta_system(&ch.kraus[x], &ch.dkraus[x]);
    // Round-off floor for generators that vanish identically.
    let floor = 64.0 * f64::EPSILON * stack(&ch.dkraus[x]).norm() * stack(&ch.kraus[x]).norm();
    span_solution(&a, &b, tol, floor, ch.rank(x))
}

fn span_solution(a: &RMat, b: &DVector<f64>, tol: f64, floor: f64, r: usize) -> SpanCheck {
    let (y, residual) = lstsq(a, b, 1e-12);
    let satisfied = residual <= tol * b.norm() || residual <= floor;
    SpanCheck {
        satisfied,
        residual,
        gauge: gauge_from_coords(r, y.as_slice()),
    }
}

/// GKLS model `dρ/dt = −iθ_x[H_x, ρ] + Σ_j D[L_{x,j}]ρ` for each parameter.
///
/// Probes (and the inputs of every infinitesimal step) live on the first
/// `probe_dim` levels; levels above that are only reachable through the
/// dissipator, like the flag level of an erasure.
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladModel {
    pub dim: usize,
    pub probe_dim: usize,
    pub labels: Vec<String>,
    pub hamiltonians: Vec<CMat>,
    pub collapse_ops: Vec<Vec<CMat>>,
}

impl LindbladModel {
    pub fn new(dim: usize, labels: Vec<String>, hamiltonians: Vec<CMat>, collapse_ops: Vec<Vec<CMat>>) -> Result<Self> {
        let p = hamiltonians.len();
        if p == 0 || labels.len() != p || collapse_ops.len() != p {
            return Err(Error::InvalidChannel("Lindblad model parameter count mismatch".into()));
        }
        for (x, h) in hamiltonians.iter().enumerate() {
            if h.shape() != (dim, dim) || !is_hermitian(h, 1e-10) {
                return Err(Error::InvalidChannel(format!("H_{x} is not a Hermitian {dim}x{dim} matrix")));
            }
            for l in &collapse_ops[x] {
                if l.shape() != (dim, dim) {
                    return Err(Error::InvalidChannel(format!("collapse operator for {x} has wrong shape")));
                }
            }
        }
        Ok(LindbladModel {
            dim,
            probe_dim: dim,
            labels,
            hamiltonians,
            collapse_ops,
        })
    }

    pub fn num_params(&self) -> usize {
        self.hamiltonians.len()
    }

    /// Restricts probes to the first `k` levels.
    pub fn with_probe_dim(mut self, k: usize) -> Result<Self> {
        if k == 0 || k > self.dim {
            return Err(Error::InvalidChannel(format!("probe dimension {k} outside 1..={}", self.dim)));
        }
        self.probe_dim = k;
        Ok(self)
    }

    /// Oracle labels `|x⟩⟨x|`, `x = 1..d`, with uniform dephasing
    /// `L_j = √γ |j⟩⟨j|`.
    pub fn grover_dephasing(d: usize, gamma: f64) -> Result<Self> {
        check_grover(d, gamma)?;
        let ls: Vec<CMat> = (0..d).map(|j| projector(d, j) * cr(gamma.sqrt())).collect();
        Self::new(
            d,
            (1..=d).map(|x| format!("x{x}")).collect(),
            (0..d).map(|x| projector(d, x)).collect(),
            vec![ls; d],
        )
    }

    /// Oracle labels on `d` levels plus a "lost" level `|d⟩`, with
    /// `L_j = √γ |lost⟩⟨j|`; probes use the `d` physical levels only.
    pub fn grover_erasure(d: usize, gamma: f64) -> Result<Self> {
        check_grover(d, gamma)?;
        let n = d + 1;
        let ls: Vec<CMat> = (0..d)
            .map(|j| {
                let mut m = CMat::zeros(n, n);
                m[(d, j)] = cr(gamma.sqrt());
                m
            })
            .collect();
        Self::new(
            n,
            (1..=d).map(|x| format!("x{x}")).collect(),
            (0..d).map(|x| projector(n, x)).collect(),
            vec![ls; d],
        )?
        .with_probe_dim(d)
    }

    /// Qubit with `H = σ_z/2` and `L = √(γ/2) σ_z` (coherences decay as `e^{−γt}`).
    pub fn qubit_dephasing(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidConfig("gamma must be positive".into()));
        }
        let sz = pauli_z();
        Self::new(2, vec!["phi".into()], vec![&sz * cr(0.5)], vec![vec![sz * cr((gamma / 2.0).sqrt())]])
    }
}

fn check_grover(d: usize, gamma: f64) -> Result<()> {
    if d < 2 || !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidConfig(format!("need d >= 2 and gamma > 0, got d={d}, gamma={gamma}")));
    }
    Ok(())
}

/// The HLS system: `H + h0 I + Σ_j (h̄_j L_j + h_j L_j†) + Σ_jk 𝕙_jk L_j†L_k = 0`
/// in the coordinates `(h0, Re h_j, Im h_j, 𝕙 in gauge_basis order)`,
/// compressed to the first `k` (probe) levels.
pub fn lindblad_beta_terms(h: &CMat, ls: &[CMat], k: usize) -> (CMat, Vec<CMat>) {
    let d = h.nrows();
    let mut terms = vec![identity(d)];
    for l in ls {
        // h_j = a + ib: h̄_j L + h_j L† = a (L + L†) + b i (L† − L)
        terms.push(l + l.adjoint());
        terms.push((l.adjoint() - l) * I);
    }
    for e in gauge_basis(ls.len()) {
        let mut acc = CMat::zeros(d, d);
        for (j, lj) in ls.iter().enumerate() {
            for (k, lk) in ls.iter().enumerate() {
                if e[(j, k)] != C64::new(0.0, 0.0) {
                    acc += lj.adjoint() * lk * e[(j, k)];
                }
            }
        }
        terms.push(acc);
    }
    let cut = |m: &CMat| m.view((0, 0), (k, k)).into_owned();
    (cut(h), terms.iter().map(cut).collect())
}

pub fn hls_check(model: &LindbladModel, x: usize, tol: f64) -> SpanCheck {
    let (m0, ms) = lindblad_beta_terms(&model.hamiltonians[x], &model.collapse_ops[x], model.probe_dim);
    let (a, b) = complex_affine_system(&m0, &ms);
    let floor = 64.0 * f64::EPSILON * b.norm();
    let (y, residual) = lstsq(&a, &b, 1e-12);
    let j = model.collapse_ops[x].len();
    SpanCheck {
        satisfied: residual <= tol * b.norm() || residual <= floor,
        residual,
        gauge: gauge_from_coords(j, &y.as_slice()[1 + 2 * j..]),
    }
}

fn projector(n: usize, j: usize) -> CMat {
    let mut m = CMat::zeros(n, n);
    m[(j, j)] = cr(1.0);
    m
}

fn pauli_z() -> CMat {
    CMat::from_row_slice(2, 2, &[cr(1.0), cr(0.0), cr(0.0), cr(-1.0)])
}

/// `U_θ = exp(−i Σ θ_x G_x)` and its partial derivatives, exact for
/// non-commuting generators (divided differences in the eigenbasis of the
/// total Hamiltonian).
pub fn unitary_and_derivatives(generators: &[CMat], theta: &[f64]) -> (CMat, Vec<CMat>) {
    let n = generators[0].nrows();
    let mut h = CMat::zeros(n, n);
    for (g, t) in generators.iter().zip(theta) {
        h += g * cr(*t);
    }
    let eig = herm_eig_unchecked(&h);
    let v = &eig.eigenvectors;
    let lam = &eig.eigenvalues;
    let u = eig_exp(v, lam);
    let ders = generators
        .iter()
        .map(|g| {
            let b = v.adjoint() * (g * c(0.0, -1.0)) * v;
            let m = CMat::from_fn(n, n, |j, k| {
                let (a, bb) = (lam[j], lam[k]);
                let f = if (a - bb).abs() < 1e-12 {
                    C64::new(0.0, -0.5 * (a + bb)).exp()
                } else {
                    (C64::new(0.0, -a).exp() - C64::new(0.0, -bb).exp()) / c(0.0, -(a - bb))
                };
                b[(j, k)] * f
            });
            v * m * v.adjoint()
        })
        .collect();
    (u, ders)
}

fn eig_exp(v: &CMat, lam: &[f64]) -> CMat {
    let n = lam.len();
    let mut scaled = v.clone();
    for j in 0..n {
        let ph = C64::new(0.0, -lam[j]).exp();
        for i in 0..n {
            scaled[(i, j)] *= ph;
        }
    }
    &scaled * v.adjoint()
}

/// Noise after a unitary encoding: `K'_j = K_j U_θ`, `∂_x K'_j = K_j ∂_x U_θ`.
pub fn noise_after_unitary(
    noise: &[CMat],
    generators: &[CMat],
    theta: &[f64],
    labels: Vec<String>,
) -> Result<ParamChannel> {
    let (u, du) = unitary_and_derivatives(generators, theta);
    let kraus: Vec<CMat> = noise.iter().map(|k| k * &u).collect();
    let dkraus: Vec<Vec<CMat>> = du.iter().map(|d| noise.iter().map(|k| k * d).collect()).collect();
    ParamChannel::shared(u.ncols(), noise[0].nrows(), labels, theta.to_vec(), kraus, dkraus)
}

/// Noiseless channel `U_θ = exp(−i Σ θ_x G_x)`.
pub fn unitary_channel(generators: &[CMat], theta: &[f64]) -> Result<ParamChannel> {
    if generators.is_empty() {
        return Err(Error::InvalidConfig("no generators".into()));
    }
    let n = generators[0].nrows();
    for g in generators {
        if g.shape() != (n, n) || !is_hermitian(g, 1e-10) {
            return Err(Error::InvalidConfig("generators must be Hermitian and equal-sized".into()));
        }
    }
    let labels = (0..generators.len()).map(|x| format!("theta{x}")).collect();
    noise_after_unitary(&[identity(n)], generators, theta, labels)
}

/// The generator families `|j⟩⟨j|`, `(|j⟩⟨k|+|k⟩⟨j|)/2`, `i(|j⟩⟨k|−|k⟩⟨j|)/2`
/// (`j<k`); `submodel` is one of `diag`, `real`, `imag`, `full`.
pub fn u_d_generators(d: usize, submodel: &str) -> Result<(Vec<CMat>, Vec<String>)> {
    let mut gens = Vec::new();
    let mut labels = Vec::new();
    let want = |s: &str| submodel == s || submodel == "full";
    if !["diag", "real", "imag", "full"].contains(&submodel) {
        return Err(Error::InvalidConfig(format!("unknown submodel `{submodel}`")));
    }
    if want("diag") {
        for j in 0..d {
            gens.push(projector(d, j));
            labels.push(format!("diag{j}"));
        }
    }
    if want("real") {
        for j in 0..d {
            for k in (j + 1)..d {
                let mut g = CMat::zeros(d, d);
                g[(j, k)] = cr(0.5);
                g[(k, j)] = cr(0.5);
                gens.push(g);
                labels.push(format!("re{j}{k}"));
            }
        }
    }
    if want("imag") {
        for j in 0..d {
            for k in (j + 1)..d {
                let mut g = CMat::zeros(d, d);
                g[(j, k)] = c(0.0, 0.5);
                g[(k, j)] = c(0.0, -0.5);
                gens.push(g);
                labels.push(format!("im{j}{k}"));
            }
        }
    }
    Ok((gens, labels))
}

/// Erasure Kraus operators on `d` levels with a lost level appended.
pub fn erasure_kraus(d: usize, eta: f64) -> Vec<CMat> {
    let mut k0 = CMat::zeros(d + 1, d);
    for j in 0..d {
        k0[(j, j)] = cr(eta.sqrt());
    }
    let mut out = vec![k0];
    for i in 0..d {
        let mut k = CMat::zeros(d + 1, d);
        k[(d, i)] = cr((1.0 - eta).sqrt());
        out.push(k);
    }
    out
}

/// Named zoo entry with its numeric parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZooSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub submodel: Option<String>,
}

impl ZooSpec {
    pub fn new(name: &str, params: &[(&str, f64)]) -> Self {
        ZooSpec {
            name: name.to_string(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            submodel: None,
        }
    }

    pub fn with_submodel(mut self, s: &str) -> Self {
        self.submodel = Some(s.to_string());
        self
    }

    fn get(&self, key: &str) -> Result<f64> {
        self.params
            .get(key)
            .copied()
            .ok_or_else(|| Error::InvalidConfig(format!("{}: missing parameter `{key}`", self.name)))
    }

    fn get_or(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    fn count(&self, key: &str) -> Result<usize> {
        let v = self.get(key)?;
        if v.fract() != 0.0 || !(1.0..=64.0).contains(&v) {
            return Err(Error::InvalidConfig(format!("{}: `{key}` must be a small positive integer", self.name)));
        }
        Ok(v as usize)
    }

    fn unit_open(&self, key: &str) -> Result<f64> {
        let v = self.get(key)?;
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::InvalidConfig(format!("{}: `{key}` must lie in (0, 1), got {v}", self.name)));
        }
        Ok(v)
    }

    /// Evaluation point per parameter: `theta<x>` keys, else `theta`, else 0.
    fn thetas(&self, p: usize) -> Vec<f64> {
        let common = self.get_or("theta", 0.0);
        (0..p).map(|x| self.get_or(&format!("theta{x}"), common)).collect()
    }

    /// Names of the parameters in `theta_star` order, as accepted by
    /// [`ZooSpec::at`].
    fn param_keys(&self, p: usize) -> Vec<String> {
        match self.name.as_str() {
            "gad" => vec!["nu".into(), "gamma".into()],
            "phase_loss" | "phase_dephasing" => vec!["phi".into(), "eta".into()],
            _ => (0..p).map(|x| format!("theta{x}")).collect(),
        }
    }

    /// The same spec with the evaluation point moved to `theta`.
    pub fn at(&self, theta: &[f64]) -> ZooSpec {
        let mut out = self.clone();
        for (k, v) in self.param_keys(theta.len()).into_iter().zip(theta) {
            out.params.insert(k, *v);
        }
        out
    }
}

pub const ZOO_NAMES: [&str; 7] = [
    "erasure_tomography",
    "lossy_multiphase",
    "gad",
    "phase_loss",
    "phase_dephasing",
    "qudit_dephasing_unitary",
    "unitary_family",
];

pub fn zoo_build(spec: &ZooSpec) -> Result<ParamChannel> {
    match spec.name.as_str() {
        "erasure_tomography" => {
            let d = spec.count("d")?;
            let eta = spec.unit_open("eta")?;
            let sub = spec.submodel.as_deref().unwrap_or("full");
            let (gens, labels) = u_d_generators(d, sub)?;
            noise_after_unitary(&erasure_kraus(d, eta), &gens, &spec.thetas(gens.len()), labels)
        }
        "lossy_multiphase" => {
            let p = spec.count("p")?;
            let eta = spec.unit_open("eta")?;
            let extra = spec.get_or("extra_modes", 0.0);
            if extra < 0.0 || extra.fract() != 0.0 {
                return Err(Error::InvalidConfig("extra_modes must be a non-negative integer".into()));
            }
            let d = p + 1 + extra as usize;
            let gens: Vec<CMat> = (0..p).map(|x| projector(d, x)).collect();
            let labels = (0..p).map(|x| format!("phase{x}")).collect();
            noise_after_unitary(&erasure_kraus(d, eta), &gens, &spec.thetas(p), labels)
        }
        "gad" => gad(spec.unit_open("nu")?, spec.unit_open("gamma")?),
        "phase_loss" => phase_loss(spec.get_or("phi", 0.0), spec.unit_open("eta")?),
        "phase_dephasing" => phase_dephasing(spec.get_or("phi", 0.0), spec.unit_open("eta")?),
        "qudit_dephasing_unitary" => {
            let d = spec.count("d")?;
            if d < 2 {
                return Err(Error::InvalidConfig("qudit dephasing needs d >= 2".into()));
            }
            qudit_dephasing_ensemble(d, spec.unit_open("eta")?, &spec.thetas(d))
        }
        "unitary_family" => {
            let d = spec.count("d")?;
            let sub = spec.submodel.as_deref().unwrap_or("full");
            let (gens, labels) = u_d_generators(d, sub)?;
            let mut ch = unitary_channel(&gens, &spec.thetas(gens.len()))?;
            ch.labels = labels;
            Ok(ch)
        }
        other => Err(Error::InvalidConfig(format!(
            "unknown channel `{other}`; known: {}",
            ZOO_NAMES.join(", ")
        ))),
    }
}

pub fn gad(nu: f64, gamma: f64) -> Result<ParamChannel> {
    let (a, b) = ((1.0 - nu).sqrt(), nu.sqrt());
    let (s, t) = ((1.0 - gamma).sqrt(), gamma.sqrt());
    let m = |v: [f64; 4]| CMat::from_row_slice(2, 2, &v.map(cr));
    let kraus = vec![
        m([a, 0.0, 0.0, a * s]),
        m([0.0, a * t, 0.0, 0.0]),
        m([b * s, 0.0, 0.0, b]),
        m([0.0, 0.0, b * t, 0.0]),
    ];
    let (da, db) = (-0.5 / a, 0.5 / b);
    let (ds, dt) = (-0.5 / s, 0.5 / t);
    let d_nu = vec![
        m([da, 0.0, 0.0, da * s]),
        m([0.0, da * t, 0.0, 0.0]),
        m([db * s, 0.0, 0.0, db]),
        m([0.0, 0.0, db * t, 0.0]),
    ];
    let d_gamma = vec![
        m([0.0, 0.0, 0.0, a * ds]),
        m([0.0, a * dt, 0.0, 0.0]),
        m([b * ds, 0.0, 0.0, 0.0]),
        m([0.0, 0.0, b * dt, 0.0]),
    ];
    ParamChannel::shared(2, 2, vec!["nu".into(), "gamma".into()], vec![nu, gamma], kraus, vec![d_nu, d_gamma])
}

pub fn phase_loss(phi: f64, eta: f64) -> Result<ParamChannel> {
    let e = C64::new(0.0, -phi).exp();
    let z = cr(0.0);
    let mut k0 = CMat::zeros(3, 2);
    k0[(0, 0)] = e * eta.sqrt();
    k0[(1, 1)] = cr(1.0);
    let mut k1 = CMat::zeros(3, 2);
    k1[(2, 0)] = cr((1.0 - eta).sqrt());
    let mut dphi0 = CMat::zeros(3, 2);
    dphi0[(0, 0)] = e * c(0.0, -eta.sqrt());
    let dphi1 = CMat::from_element(3, 2, z);
    let mut deta0 = CMat::zeros(3, 2);
    deta0[(0, 0)] = e * (0.5 / eta.sqrt());
    let mut deta1 = CMat::zeros(3, 2);
    deta1[(2, 0)] = cr(-0.5 / (1.0 - eta).sqrt());
    ParamChannel::shared(
        2,
        3,
        vec!["phi".into(), "eta".into()],
        vec![phi, eta],
        vec![k0, k1],
        vec![vec![dphi0, dphi1], vec![deta0, deta1]],
    )
}

pub fn phase_dephasing(phi: f64, eta: f64) -> Result<ParamChannel> {
    let e = C64::new(0.0, phi).exp();
    let (a, b) = (((1.0 + eta) / 2.0).sqrt(), ((1.0 - eta) / 2.0).sqrt());
    let diag = |x: C64, y: C64| CMat::from_row_slice(2, 2, &[x, cr(0.0), cr(0.0), y]);
    let kraus = vec![diag(e * a, cr(a)), diag(e * b, cr(-b))];
    let dphi = vec![diag(e * c(0.0, a), cr(0.0)), diag(e * c(0.0, b), cr(0.0))];
    let (da, db) = (0.25 / a, -0.25 / b);
    let deta = vec![diag(e * da, cr(da)), diag(e * db, cr(-db))];
    ParamChannel::shared(2, 2, vec!["phi".into(), "eta".into()], vec![phi, eta], kraus, vec![dphi, deta])
}

/// Ensemble `{E ∘ U_x}` with `E(ρ) = ηρ + (1−η) diag(ρ)` in the non-minimal
/// `d+1` Kraus form `√η I`, `√(1−η)|j⟩⟨j|`, and `U_x = exp(−iθ_x |x⟩⟨x|)`.
pub fn qudit_dephasing_ensemble(d: usize, eta: f64, theta: &[f64]) -> Result<ParamChannel> {
    let mut noise = vec![identity(d) * cr(eta.sqrt())];
    for j in 0..d {
        noise.push(projector(d, j) * cr((1.0 - eta).sqrt()));
    }
    let mut kraus = Vec::with_capacity(d);
    let mut dkraus = Vec::with_capacity(d);
    for x in 0..d {
        let (u, du) = unitary_and_derivatives(&[projector(d, x)], &[theta[x]]);
        kraus.push(noise.iter().map(|k| k * &u).collect());
        dkraus.push(noise.iter().map(|k| k * &du[0]).collect());
    }
    ParamChannel::new(d, d, (1..=d).map(|x| format!("x{x}")).collect(), theta.to_vec(), kraus, dkraus)
}

/// Random smooth family `V(θ) = exp(−i Σ θ_x G_x) V0` of isometries, read as
/// `r` stacked Kraus operators; evaluated at `θ = 0`.
pub fn random_channel_family(rng: &mut impl Rng, dim_in: usize, dim_out: usize, rank: usize, p: usize) -> ParamChannel {
    let n = rank * dim_out;
    let v0 = random_isometry(rng, n, dim_in);
    let gens: Vec<CMat> = (0..p).map(|_| random_hermitian(rng, n)).collect();
    let split = |v: &CMat| -> Vec<CMat> { (0..rank).map(|j| v.rows(j * dim_out, dim_out).into_owned()).collect() };
    let kraus = split(&v0);
    let dkraus = gens.iter().map(|g| split(&(g * &v0 * c(0.0, -1.0)))).collect();
    ParamChannel::shared(
        dim_in,
        dim_out,
        (0..p).map(|x| format!("theta{x}")).collect(),
        vec![0.0; p],
        kraus,
        dkraus,
    )
    .expect("isometry gives a valid channel")
}

/// Maximum entrywise deviation between central differences of the builder's
/// Kraus operators and the analytic derivatives.
pub fn finite_diff_check(
    ch: &ParamChannel,
    builder: &dyn Fn(&[f64]) -> Result<ParamChannel>,
    step: f64,
) -> Result<f64> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidConfig(format!("finite-difference step must be positive, got {step}")));
    }
    let mut worst: f64 = 0.0;
    for x in 0..ch.num_params() {
        let mut tp = ch.theta_star.clone();
        let mut tm = ch.theta_star.clone();
        tp[x] += step;
        tm[x] -= step;
        let (cp, cm) = (builder(&tp)?, builder(&tm)?);
        for j in 0..ch.rank(x) {
            let fd = (&cp.kraus[x][j] - &cm.kraus[x][j]) / cr(2.0 * step);
            let diff = (fd - &ch.dkraus[x][j]).iter().map(|z| z.norm()).fold(0.0, f64::max);
            worst = worst.max(diff);
        }
    }
    Ok(worst)
}

/// `finite_diff_check` against the zoo builder for the same spec.
pub fn zoo_finite_diff(spec: &ZooSpec, step: f64) -> Result<f64> {
    let ch = zoo_build(spec)?;
    finite_diff_check(&ch, &|t: &[f64]| zoo_build(&spec.at(t)), step)
}

/// Rows of `[re, im]` pairs.
type JsonMat = Vec<Vec<[f64; 2]>>;

#[derive(Serialize, Deserialize)]
struct ChannelJson {
    dim_in: usize,
    dim_out: usize,
    params: Vec<String>,
    /// Shared Kraus list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kraus: Option<Vec<JsonMat>>,
    /// Per-parameter Kraus lists (ensembles of channels).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kraus_per_param: Option<Vec<Vec<JsonMat>>>,
    dkraus: Vec<Vec<JsonMat>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta_star: Option<Vec<f64>>,
}

fn mat_to_json(m: &CMat) -> JsonMat {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

fn mat_from_json(rows: &[Vec<[f64; 2]>], dim_out: usize, dim_in: usize) -> Result<CMat> {
    if rows.len() != dim_out || rows.iter().any(|r| r.len() != dim_in) {
        return Err(Error::InvalidChannel(format!("matrix is not {dim_out}x{dim_in}")));
    }
    Ok(CMat::from_fn(dim_out, dim_in, |i, j| c(rows[i][j][0], rows[i][j][1])))
}

/// Parses the JSON channel spec and validates trace preservation.
pub fn channel_from_json(text: &str) -> Result<ParamChannel> {
    let js: ChannelJson = serde_json::from_str(text).map_err(|e| Error::InvalidChannel(format!("channel JSON: {e}")))?;
    let conv = |list: &[JsonMat]| -> Result<Vec<CMat>> {
        list.iter().map(|m| mat_from_json(m, js.dim_out, js.dim_in)).collect()
    };
    let p = js.params.len();
    let kraus = match (&js.kraus, &js.kraus_per_param) {
        (Some(k), None) => vec![conv(k)?; p],
        (None, Some(kp)) => kp.iter().map(|k| conv(k)).collect::<Result<_>>()?,
        _ => return Err(Error::InvalidChannel("give exactly one of `kraus` and `kraus_per_param`".into())),
    };
    let dkraus = js.dkraus.iter().map(|k| conv(k)).collect::<Result<Vec<_>>>()?;
    let theta = js.theta_star.clone().unwrap_or_else(|| vec![0.0; p]);
    ParamChannel::new(js.dim_in, js.dim_out, js.params, theta, kraus, dkraus)
}

pub fn channel_to_json(ch: &ParamChannel) -> String {
    let conv = |list: &[CMat]| list.iter().map(mat_to_json).collect::<Vec<_>>();
    let shared = ch.is_shared();
    let js = ChannelJson {
        dim_in: ch.dim_in,
        dim_out: ch.dim_out,
        params: ch.labels.clone(),
        kraus: shared.then(|| conv(&ch.kraus[0])),
        kraus_per_param: (!shared).then(|| ch.kraus.iter().map(|k| conv(k)).collect()),
        dkraus: ch.dkraus.iter().map(|k| conv(k)).collect(),
        theta_star: Some(ch.theta_star.clone()),
    };
    serde_json::to_string_pretty(&js).expect("channel serialises")
}
