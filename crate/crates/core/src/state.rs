//! State-level quantum Fisher information, distinguishability metrics, and a
//! brute-force probe optimizer used to check channel bounds from below.

use nalgebra::DVector;
use rand::Rng;

use crate::channel::ParamChannel;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{
    check_finite, cr, herm_eig_unchecked, is_hermitian, psd_sqrt, sld_in_eigenbasis, trace, trace_norm, CMat, HermEig,
    RMat, C64,
};
use crate::random::{normal, rng};

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: CMat,
}

impl DensityMatrix {
    pub fn new(mat: CMat) -> Result<Self> {
        check_finite(&mat, "rho")?;
        if !mat.is_square() {
            return Err(Error::InvalidState(format!("rho is {:?}", mat.shape())));
        }
        if !is_hermitian(&mat, 1e-10) {
            return Err(Error::InvalidState("rho is not Hermitian".into()));
        }
        let tr = trace(&mat).re;
        if (tr - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("trace {tr} != 1")));
        }
        let min = herm_eig_unchecked(&mat).min();
        if min < -1e-10 {
            return Err(Error::InvalidState(format!("eigenvalue {min:.3e} < 0")));
        }
        Ok(DensityMatrix { mat })
    }

    /// `|ψ⟩⟨ψ|` for a normalized column `ψ`.
    pub fn pure(psi: &CMat) -> Result<Self> {
        Self::new(psi * psi.adjoint())
    }

    pub fn mat(&self) -> &CMat {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateModel {
    pub rho: DensityMatrix,
    pub drho: Vec<CMat>,
}

impl StateModel {
    pub fn new(rho: DensityMatrix, drho: Vec<CMat>) -> Result<Self> {
        for (i, d) in drho.iter().enumerate() {
            check_finite(d, "drho")?;
            if d.shape() != rho.mat.shape() {
                return Err(Error::DimensionMismatch(format!("drho[{i}] is {:?}", d.shape())));
            }
            if !is_hermitian(d, 1e-10) {
                return Err(Error::InvalidState(format!("drho[{i}] is not Hermitian")));
            }
            if trace(d).norm() > 1e-10 {
                return Err(Error::InvalidState(format!("drho[{i}] is not traceless")));
            }
        }
        Ok(StateModel { rho, drho })
    }
}

/// `F_ij = Re Tr[ρ L_i L_j]` together with the complex `Tr[ρ L_i L_j]`,
/// whose imaginary part decides whether the Holevo bound is attained.
#[derive(Debug, Clone, PartialEq)]
pub struct QfiMatrices {
    pub real: RMat,
    pub complex: CMat,
}

/// SLD QFI matrix. SLD components on eigenvalue pairs with `λ_i + λ_j < eps`
/// are dropped.
pub fn qfi_matrix_sld(model: &StateModel, eps: f64) -> QfiMatrices {
    let eig = herm_eig_unchecked(&model.rho.mat);
    let slds: Vec<CMat> = model.drho.iter().map(|d| sld_in_eigenbasis(&eig, d, eps)).collect();
    let p = slds.len();
    let rl: Vec<CMat> = slds.iter().map(|l| &model.rho.mat * l).collect();
    let complex = CMat::from_fn(p, p, |i, j| trace(&(&rl[i] * &slds[j])));
    let real = RMat::from_fn(p, p, |i, j| 0.5 * (complex[(i, j)].re + complex[(j, i)].re));
    QfiMatrices { real, complex }
}

/// `4 Re[∇Ψ†∇Ψ − ∇Ψ†|Ψ⟩⟨Ψ|∇Ψ]` for the columns `∇Ψ = [|∂_1Ψ⟩ … |∂_pΨ⟩]`.
pub fn qfi_matrix_purification(jacobian: &CMat, psi: &CMat) -> RMat {
    let g = jacobian.adjoint() * jacobian;
    let o = jacobian.adjoint() * psi;
    let m = g - &o * o.adjoint();
    RMat::from_fn(m.nrows(), m.ncols(), |i, j| 4.0 * m[(i, j)].re)
}

fn check_pair(r1: &DensityMatrix, r2: &DensityMatrix) -> Result<()> {
    if r1.dim() != r2.dim() {
        return Err(Error::DimensionMismatch(format!("states of dimension {} and {}", r1.dim(), r2.dim())));
    }
    Ok(())
}

/// Root fidelity `‖√ρ₁ √ρ₂‖₁`, clamped to `[0, 1]`.
pub fn fidelity(r1: &DensityMatrix, r2: &DensityMatrix) -> Result<f64> {
    check_pair(r1, r2)?;
    let m = psd_sqrt(&r1.mat) * psd_sqrt(&r2.mat);
    Ok(trace_norm(&m)?.clamp(0.0, 1.0))
}

pub fn trace_distance(r1: &DensityMatrix, r2: &DensityMatrix) -> Result<f64> {
    check_pair(r1, r2)?;
    Ok((0.5 * trace_norm(&(&r1.mat - &r2.mat))?).clamp(0.0, 1.0))
}

/// `arccos F`.
pub fn bures_angle(r1: &DensityMatrix, r2: &DensityMatrix) -> Result<f64> {
    Ok(fidelity(r1, r2)?.acos())
}

/// QFI of `(ρ, ∂ρ)` from an eigendecomposition of `ρ`; negative round-off
/// eigenvalues are clamped to zero.
fn qfi_scalar(eig: &HermEig, drho: &CMat, eps: f64) -> f64 {
    let v = &eig.eigenvectors;
    let d = v.adjoint() * drho * v;
    let lam: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
    let n = lam.len();
    let mut f = 0.0;
    for i in 0..n {
        for j in 0..n {
            let s = lam[i] + lam[j];
            if s > eps {
                f += 2.0 * d[(i, j)].norm_sqr() / s;
            }
        }
    }
    f
}

/// Output `(ρ, ∂_xρ)` of `E_x ⊗ id` on the pure probe `ψ` of the input system
/// and an ancilla of dimension `dim_a`. `ψ` is indexed `i·dim_a + a`.
pub fn output_state(ch: &ParamChannel, x: usize, psi: &DVector<C64>, dim_a: usize) -> (CMat, CMat) {
    let (din, dout) = (ch.dim_in, ch.dim_out);
    let m = CMat::from_fn(din, dim_a, |i, a| psi[i * dim_a + a]);
    let n = dout * dim_a;
    let mut rho = CMat::zeros(n, n);
    let mut drho = CMat::zeros(n, n);
    for (k, dk) in ch.kraus[x].iter().zip(&ch.dkraus[x]) {
        let km = k * &m;
        let dkm = dk * &m;
        let v = DVector::from_iterator(n, km.transpose().iter().copied());
        let dv = DVector::from_iterator(n, dkm.transpose().iter().copied());
        rho += &v * v.adjoint();
        let cross = &dv * v.adjoint();
        drho += &cross + cross.adjoint();
    }
    (rho, drho)
}

/// `Σ_x q_x F_xx` for the output of the probe `ψ`.
pub fn total_output_qfi(ch: &ParamChannel, weights: &[f64], psi: &DVector<C64>, dim_a: usize) -> f64 {
    const EPS: f64 = 1e-12;
    let shared = ch.is_shared();
    let mut cached: Option<HermEig> = None;
    let mut total = 0.0;
    for (x, q) in weights.iter().enumerate() {
        let (rho, drho) = output_state(ch, x, psi, dim_a);
        let eig = if shared {
            cached.get_or_insert_with(|| herm_eig_unchecked(&rho)).clone()
        } else {
            herm_eig_unchecked(&rho)
        };
        total += q * qfi_scalar(&eig, &drho, EPS);
    }
    total
}

/// SLD QFI matrix of the output of a single multiparameter channel on the
/// probe `ψ`.
pub fn output_qfi_matrix(ch: &ParamChannel, psi: &DVector<C64>, dim_a: usize) -> Result<QfiMatrices> {
    if !ch.is_shared() {
        return Err(Error::InvalidInput("output QFI matrix needs a single multiparameter channel".into()));
    }
    let mut rho = None;
    let mut drho = Vec::with_capacity(ch.num_params());
    for x in 0..ch.num_params() {
        let (r, d) = output_state(ch, x, psi, dim_a);
        rho.get_or_insert(r);
        // Remove round-off trace so the model validates.
        let t = trace(&d) / C64::from(d.nrows() as f64);
        drho.push(&d - CMat::identity(d.nrows(), d.nrows()) * t);
    }
    let rho = rho.ok_or_else(|| Error::InvalidInput("channel has no parameters".into()))?;
    let rho = &rho / trace(&rho);
    let model = StateModel::new(DensityMatrix::new(rho)?, drho)?;
    Ok(qfi_matrix_sld(&model, 1e-12))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSettings {
    pub restarts: usize,
    /// Initial ascent step; halved on failure, grown on success.
    pub step: f64,
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Central-difference step for the gradient.
    pub fd_step: f64,
    pub exec: Exec,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings { restarts: 64, step: 1e-2, grad_tol: 1e-7, max_iter: 4000, fd_step: 1e-6, exec: Exec::Parallel }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub value: f64,
    /// Optimal probe on system ⊗ ancilla, indexed `i·dim_in + a`.
    pub probe: DVector<C64>,
    /// Per-restart final values, in restart order.
    pub restart_values: Vec<f64>,
}

fn to_complex(v: &[f64]) -> DVector<C64> {
    let n = v.len() / 2;
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    DVector::from_fn(n, |i, _| C64::new(v[2 * i], v[2 * i + 1]) / norm)
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a /= norm);
}

fn ascend(ch: &ParamChannel, weights: &[f64], seed: u64, s: &OracleSettings) -> (f64, Vec<f64>) {
    let da = ch.dim_in;
    let n = ch.dim_in * da;
    let mut r = rng(seed);
    let mut v: Vec<f64> = (0..2 * n).map(|_| normal(&mut r)).collect();
    normalize(&mut v);
    let f = |v: &[f64]| total_output_qfi(ch, weights, &to_complex(v), da);
    let mut fv = f(&v);
    let mut step = s.step;
    let mut grad = vec![0.0; 2 * n];
    for _ in 0..s.max_iter {
        for i in 0..2 * n {
            let mut w = v.clone();
            w[i] = v[i] + s.fd_step;
            let up = f(&w);
            w[i] = v[i] - s.fd_step;
            grad[i] = (up - f(&w)) / (2.0 * s.fd_step);
        }
        // Radial component vanishes up to finite-difference error; remove it.
        let radial: f64 = grad.iter().zip(&v).map(|(g, a)| g * a).sum();
        grad.iter_mut().zip(&v).for_each(|(g, a)| *g -= radial * a);
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < s.grad_tol {
            break;
        }
        let mut moved = false;
        while step * gnorm > 1e-15 {
            let mut w: Vec<f64> = v.iter().zip(&grad).map(|(a, g)| a + step * g).collect();
            normalize(&mut w);
            let fw = f(&w);
            if fw > fv {
                v = w;
                fv = fw;
                step *= 1.5;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (fv, v)
}

/// Local-ascent maximization of `Σ_x q_x F_xx(E_x ⊗ id(|ψ⟩⟨ψ|))` over pure
/// probes with an ancilla of the input dimension. Each restart draws its
/// start from `seed + restart`; the returned value is attained by `probe`.
pub fn probe_oracle_max_total_qfi(ch: &ParamChannel, weights: &[f64], restarts: usize, seed: u64) -> Result<OracleResult> {
    probe_oracle_with(ch, weights, seed, &OracleSettings { restarts, ..Default::default() })
}

pub fn probe_oracle_with(ch: &ParamChannel, weights: &[f64], seed: u64, settings: &OracleSettings) -> Result<OracleResult> {
    if weights.len() != ch.num_params() {
        return Err(Error::InvalidInput(format!("{} weights for {} parameters", weights.len(), ch.num_params())));
    }
    if weights.iter().any(|q| !q.is_finite() || *q < 0.0) {
        return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
    }
    if settings.restarts == 0 {
        return Err(Error::InvalidConfig("at least one restart is required".into()));
    }
    let runs = settings
        .exec
        .map(settings.restarts, |k| ascend(ch, weights, seed.wrapping_add(k as u64), settings));
    let restart_values: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let (best, _) = restart_values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
    Ok(OracleResult { value: runs[best].0, probe: to_complex(&runs[best].1), restart_values })
}

/// Random pure state `|ψ⟩` of dimension `n` as a normalized column.
pub fn random_probe(r: &mut impl Rng, n: usize) -> DVector<C64> {
    let v: Vec<f64> = (0..2 * n).map(|_| normal(r)).collect();
    to_complex(&v)
}

/// `Tr_B` of `|ψ⟩⟨ψ|`-like operators on `A ⊗ B`, with `A` first.
pub fn partial_trace_b(m: &CMat, da: usize, db: usize) -> CMat {
    CMat::from_fn(da, da, |i, j| (0..db).map(|k| m[(i * db + k, j * db + k)]).sum())
}

/// Purification `Σ_i √λ_i |v_i⟩|i⟩` of `ρ` with an ancilla of the same
/// dimension, indexed `i·d + a`.
pub fn purify(rho: &CMat) -> DVector<C64> {
    let eig = herm_eig_unchecked(rho);
    let d = rho.nrows();
    DVector::from_fn(d * d, |idx, _| {
        let (k, i) = (idx / d, idx % d);
        eig.eigenvectors[(k, i)] * eig.eigenvalues[i].max(0.0).sqrt()
    })
}

pub fn maximally_mixed(d: usize) -> DensityMatrix {
    DensityMatrix { mat: CMat::identity(d, d) * cr(1.0 / d as f64) }
}
