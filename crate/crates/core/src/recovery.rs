//! Recovery of an optimal probe from a solved channel bound.
//!
//! Given an optimal gauge `h⋆`, an optimal input state is supported on the
//! top eigenspace of `ᾱ⋆ = Σ_x q_x α_x(h⋆)` and makes `Tr[ρ ᾱ(h)]` stationary
//! in every gauge direction:
//!
//! ```text
//! Re Tr[ρ i (Δh K)†(∂K − i h⋆K)] = 0      for all Hermitian Δh.
//! ```
//!
//! In SQL mode `Δh` is restricted to the null space of `Δh ↦ K†ΔhK`, the
//! directions that keep `β = 0`.

use serde_json::{json, Value};

use crate::bounds::{build_alpha_beta, gauged_derivative, matrix_json, single_use_bound_with, sql_bound_with, BoundMode, BoundResult, HermitianGauge};
use crate::channel::{gauge_basis, mix, ParamChannel};
use crate::error::{Error, Result};
use crate::linalg::{c, cr, herm_eig_unchecked, lstsq, null_space, svd, trace, CMat, RMat};
use crate::sdp::{solve_with, LinearEq, LmiBlock, SdpProblem, SdpSettings, SdpStatus};
use crate::state::{DensityMatrix, QfiMatrices};

/// Relative tolerance defining the top eigenspace of `ᾱ⋆`.
pub const CLUSTER_TOL: f64 = 1e-7;
/// Maximum accepted stationarity residual.
pub const RESIDUAL_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub rho_star: DensityMatrix,
    pub bound: BoundResult,
    /// Gauge at which `ρ⋆` is stationary: the solver's, possibly refined.
    pub gauge: HermitianGauge,
    pub refinements: usize,
    /// `None` for ensembles, where the cross terms are undefined.
    pub qfi: Option<QfiMatrices>,
    /// Largest `|Im|` entry of the complex QFI matrix.
    pub imag_part_norm: Option<f64>,
    /// `λ_max` minus the largest eigenvalue outside the cluster; `None` when
    /// the cluster is the whole space.
    pub eigen_gap: Option<f64>,
    pub top_dim: usize,
    /// Largest stationarity violation over all basis directions.
    pub constraint_residual: f64,
    /// Smallest eigenvalue of `ρ⋆` restricted to the top eigenspace.
    pub min_eigenvalue: f64,
}

impl RecoveryResult {
    pub fn to_json(&self) -> Value {
        json!({
            "rho_star": matrix_json(self.rho_star.mat()),
            "bound": self.bound.value,
            "mode": self.bound.mode,
            "qfi_matrix": self.qfi.as_ref().map(|q| {
                (0..q.real.nrows()).map(|i| q.real.row(i).iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>()
            }),
            "imag_part_norm": self.imag_part_norm,
            "eigen_gap": self.eigen_gap,
            "top_dim": self.top_dim,
            "constraint_residual": self.constraint_residual,
            "refinements": self.refinements,
        })
    }
}

/// Hermitian basis `E_jj; (E_jk+E_kj)/√2; i(E_jk−E_kj)/√2`.
fn orthonormal_hermitian_basis(r: usize) -> Vec<CMat> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    gauge_basis(r)
        .into_iter()
        .enumerate()
        .map(|(k, e)| if k < r { e } else { e * cr(s) })
        .collect()
}

/// Gauge directions for parameter `x`: the full basis, or in SQL mode a
/// basis of `{Δh : K†ΔhK = 0}`.
fn gauge_directions(ch: &ParamChannel, x: usize, sql: bool) -> Vec<CMat> {
    let r = ch.rank(x);
    let basis = orthonormal_hermitian_basis(r);
    if !sql {
        return basis;
    }
    let k = &ch.kraus[x];
    let d = ch.dim_in;
    let images: Vec<CMat> = basis.iter().map(|e| crate::channel::gram(k, &mix(e, k))).collect();
    let a = RMat::from_fn(2 * d * d, basis.len(), |row, col| {
        let z = images[col][((row / 2) / d, (row / 2) % d)];
        if row % 2 == 0 {
            z.re
        } else {
            z.im
        }
    });
    let ns = null_space(&a, 1e-10);
    (0..ns.ncols())
        .map(|j| {
            basis
                .iter()
                .enumerate()
                .fold(CMat::zeros(r, r), |acc, (i, e)| acc + e * cr(ns[(i, j)]))
        })
        .collect()
}

/// The stationarity operators `C` with constraint `Re Tr[ρ C] = 0`.
fn stationarity_operators(ch: &ParamChannel, gauge: &HermitianGauge, sql: bool) -> Vec<CMat> {
    let mut out = Vec::new();
    for x in 0..ch.num_params() {
        let d = gauged_derivative(ch, &gauge.h[x], x);
        for dh in gauge_directions(ch, x, sql) {
            let m = mix(&dh, &ch.kraus[x]);
            out.push(crate::channel::gram(&m, &d) * c(0.0, 1.0));
        }
    }
    out
}

fn max_residual(ops: &[CMat], rho: &CMat) -> f64 {
    ops.iter().map(|op| trace(&(rho * op)).re.abs()).fold(0.0, f64::max)
}

/// Finds `σ ⪰ 0`, `Tr σ = 1` minimizing `‖A vec σ‖`, then, within twice that
/// residual (plus 1e-10), either the most interior such `σ` or the one
/// minimizing `Tr[σ C]` for a preference `C`.
fn feasible_sigma(rows: &RMat, m: usize, prefer: Option<&CMat>, settings: &SdpSettings) -> Result<CMat> {
    let basis = gauge_basis(m);
    let nb = basis.len();
    if m == 1 {
        return Ok(CMat::identity(1, 1));
    }
    let dec = svd(rows);
    let smax = dec.s.first().copied().unwrap_or(0.0);
    let kept: Vec<usize> = (0..dec.s.len()).filter(|&k| dec.s[k] > 1e-12 * smax && dec.s[k] > 0.0).collect();
    // Rows S Vᵀ give the same residual norm as `rows`.
    let red = RMat::from_fn(kept.len(), nb, |i, j| dec.s[kept[i]] * dec.v[(j, kept[i])]);
    let k = red.nrows();
    let trace_eq = LinearEq { coeffs: (0..m).map(|j| (2 + j, 1.0)).collect(), rhs: 1.0 };

    // Variables: [s, t, σ coords].
    let build = |phase_two: Option<f64>| {
        let mut prob = SdpProblem::new(2 + nb);
        let mut sigma_terms: Vec<(usize, CMat)> = basis.iter().enumerate().map(|(a, b)| (2 + a, b.clone())).collect();
        if phase_two.is_some() {
            match prefer {
                Some(cm) => {
                    for (a, b) in basis.iter().enumerate() {
                        prob.objective[2 + a] = trace(&(b * cm)).re;
                    }
                    prob.equalities.push(LinearEq { coeffs: vec![(0, 1.0)], rhs: 0.0 });
                }
                None => {
                    sigma_terms.push((0, -CMat::identity(m, m)));
                    prob.objective[0] = -1.0;
                }
            }
        } else {
            prob.objective[1] = 1.0;
        }
        prob.blocks.push(LmiBlock::from_hermitian(&CMat::zeros(m, m), &sigma_terms));
        if k > 0 {
            let mut soc = LmiBlock::new(k + 1);
            match phase_two {
                Some(tmax) => {
                    for i in 0..=k {
                        soc.constant[(i, i)] = tmax;
                    }
                }
                None => soc.add_term(1, RMat::identity(k + 1, k + 1)),
            }
            for a in 0..nb {
                let mut f = RMat::zeros(k + 1, k + 1);
                for i in 0..k {
                    f[(i, k)] = red[(i, a)];
                    f[(k, i)] = red[(i, a)];
                }
                soc.add_term(2 + a, f);
            }
            prob.blocks.push(soc);
        } else if phase_two.is_none() {
            // No constraints: pin t to zero.
            prob.equalities.push(LinearEq { coeffs: vec![(1, 1.0)], rhs: 0.0 });
        }
        if phase_two.is_none() {
            prob.equalities.push(LinearEq { coeffs: vec![(0, 1.0)], rhs: 0.0 });
        } else {
            prob.equalities.push(LinearEq { coeffs: vec![(1, 1.0)], rhs: 0.0 });
        }
        prob.equalities.push(trace_eq.clone());
        prob
    };
    let run = |prob: &SdpProblem| -> Result<Vec<f64>> {
        let sol = solve_with(prob, settings).map_err(Error::Recovery)?;
        if sol.status != SdpStatus::Optimal {
            return Err(Error::Recovery(format!("feasibility program ended with {:?}", sol.status)));
        }
        Ok(sol.y)
    };
    let y1 = run(&build(None))?;
    let r1 = y1[1].max(0.0);
    let y = run(&build(Some(2.0 * r1 + 1e-10))).unwrap_or(y1);
    Ok(basis.iter().enumerate().fold(CMat::zeros(m, m), |acc, (a, b)| acc + b * cr(y[2 + a])))
}

/// Two-step optimal-state recovery for a channel bound.
pub fn recover_optimal_state(ch: &ParamChannel, weights: &[f64], mode: BoundMode) -> Result<RecoveryResult> {
    recover_optimal_state_with(ch, weights, mode, &SdpSettings::default())
}

pub fn recover_optimal_state_with(
    ch: &ParamChannel,
    weights: &[f64],
    mode: BoundMode,
    settings: &SdpSettings,
) -> Result<RecoveryResult> {
    let bound = match mode {
        BoundMode::SingleUse => single_use_bound_with(ch, weights, settings)?,
        BoundMode::Sql => sql_bound_with(ch, weights, settings)?,
        BoundMode::Markovian => {
            return Err(Error::InvalidConfig("state recovery is defined for channel bounds only".into()))
        }
    };
    recover_from_bound(ch, bound, settings)
}

struct StepTwo {
    rho: CMat,
    min_eigenvalue: f64,
    residual: f64,
    top_dim: usize,
    eigen_gap: Option<f64>,
}

/// Top eigenspace of `ᾱ(h)` and a stationary state supported on it.
fn step_two(
    ch: &ParamChannel,
    gauge: &HermitianGauge,
    weights: &[f64],
    sql: bool,
    prefer: Option<&CMat>,
    settings: &SdpSettings,
    cluster_tol: f64,
) -> Result<StepTwo> {
    let eig = herm_eig_unchecked(&weighted_alpha(ch, gauge, weights)?);
    let n = eig.eigenvalues.len();
    let lmax = eig.max();
    let scale = lmax.abs().max(eig.min().abs()).max(f64::MIN_POSITIVE);
    let top: Vec<usize> = (0..n).filter(|&i| lmax - eig.eigenvalues[i] <= cluster_tol * scale).collect();
    let eigen_gap = (0..n)
        .filter(|i| !top.contains(i))
        .map(|i| lmax - eig.eigenvalues[i])
        .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |a| a.min(g))));
    let m = top.len();
    let p = CMat::from_fn(n, m, |i, j| eig.eigenvectors[(i, top[j])]);

    let ops = stationarity_operators(ch, gauge, sql);
    let basis = gauge_basis(m);
    let reduced: Vec<CMat> = ops.iter().map(|op| p.adjoint() * op * &p).collect();
    let rows = RMat::from_fn(reduced.len(), basis.len(), |i, a| trace(&(&basis[a] * &reduced[i])).re);
    let reduced_pref = prefer.map(|cm| p.adjoint() * cm * &p);
    let sigma = feasible_sigma(&rows, m, reduced_pref.as_ref(), settings)?;
    let sigma = (&sigma + sigma.adjoint()) * cr(0.5);
    let sigma = &sigma / trace(&sigma);
    let min_eigenvalue = herm_eig_unchecked(&sigma).min();
    let rho = &p * &sigma * p.adjoint();
    let rho = (&rho + rho.adjoint()) * cr(0.5);
    let residual = max_residual(&ops, &rho);
    Ok(StepTwo { rho, min_eigenvalue, residual, top_dim: m, eigen_gap })
}

/// The gauge nearest to `gauge` at which `ρ` is exactly stationary.
/// `Tr[ρ ᾱ(h)]` is quadratic in `h`, so this is one least-squares solve per
/// parameter; in SQL mode the step stays in the `β`-preserving directions.
fn refine_gauge(ch: &ParamChannel, gauge: &HermitianGauge, rho: &CMat, sql: bool) -> HermitianGauge {
    let h = (0..ch.num_params())
        .map(|x| {
            let dirs = gauge_directions(ch, x, sql);
            if dirs.is_empty() {
                return gauge.h[x].clone();
            }
            let d = gauged_derivative(ch, &gauge.h[x], x);
            let mixed: Vec<Vec<CMat>> = dirs.iter().map(|e| mix(e, &ch.kraus[x])).collect();
            let n = dirs.len();
            let rhs = nalgebra::DVector::from_fn(n, |a, _| {
                -trace(&(rho * crate::channel::gram(&mixed[a], &d) * c(0.0, 1.0))).re
            });
            let hess = RMat::from_fn(n, n, |a, b| trace(&(rho * crate::channel::gram(&mixed[a], &mixed[b]))).re);
            let (delta, _) = lstsq(&hess, &rhs, 1e-12);
            dirs.iter().zip(delta.iter()).fold(gauge.h[x].clone(), |acc, (e, t)| acc + e * cr(*t))
        })
        .collect();
    HermitianGauge { h }
}

/// Maximum number of gauge refinements after the first step two.
pub const MAX_REFINEMENTS: usize = 8;

/// Step two of the recovery, starting from an already solved bound. When the
/// solver's gauge leaves a stationarity residual above tolerance (its error
/// is of order the square root of the duality gap), the gauge is refined and
/// step two repeated.
pub fn recover_from_bound(ch: &ParamChannel, bound: BoundResult, settings: &SdpSettings) -> Result<RecoveryResult> {
    recover_from_bound_preferring(ch, bound, None, settings)
}

/// As [`recover_from_bound`], but among the optimal states picks one
/// minimizing `Tr[ρ C]` instead of the most interior one.
pub fn recover_from_bound_preferring(
    ch: &ParamChannel,
    bound: BoundResult,
    prefer: Option<&CMat>,
    settings: &SdpSettings,
) -> Result<RecoveryResult> {
    let sql = bound.mode == BoundMode::Sql;
    let mut failure = None;
    for &tol in &CLUSTER_FALLBACKS {
        match stationary_state(ch, &bound, sql, prefer, settings, tol) {
            Ok(found) => return finish_recovery(ch, bound, found),
            Err(e) => failure = Some(e),
        }
    }
    Err(failure.expect("at least one cluster tolerance"))
}

/// Cluster tolerances tried in order. The solver's gauge is accurate to
/// about the square root of the duality gap, which can split a degenerate
/// top eigenvalue by more than [`CLUSTER_TOL`].
const CLUSTER_FALLBACKS: [f64; 3] = [CLUSTER_TOL, 1e-5, 1e-3];

fn stationary_state(
    ch: &ParamChannel,
    bound: &BoundResult,
    sql: bool,
    prefer: Option<&CMat>,
    settings: &SdpSettings,
    cluster_tol: f64,
) -> Result<(HermitianGauge, StepTwo, usize)> {
    let mut gauge = bound.gauge.clone();
    let mut step = step_two(ch, &gauge, &bound.weights, sql, prefer, settings, cluster_tol)?;
    let mut refinements = 0;
    while step.residual > RESIDUAL_TOL && refinements < MAX_REFINEMENTS {
        let next = refine_gauge(ch, &gauge, &step.rho, sql);
        let next_step = step_two(ch, &next, &bound.weights, sql, prefer, settings, cluster_tol)?;
        refinements += 1;
        gauge = next;
        step = next_step;
    }
    if step.residual > RESIDUAL_TOL || step.min_eigenvalue < -1e-9 {
        return Err(Error::Recovery(format!(
            "stationarity residual {:.3e}, min eigenvalue {:.3e}, top eigenspace dimension {}, {refinements} refinements",
            step.residual, step.min_eigenvalue, step.top_dim
        )));
    }
    Ok((gauge, step, refinements))
}

fn finish_recovery(ch: &ParamChannel, bound: BoundResult, found: (HermitianGauge, StepTwo, usize)) -> Result<RecoveryResult> {
    let (gauge, step, refinements) = found;
    let rho_star = DensityMatrix::new(step.rho)?;
    let qfi = if ch.is_shared() {
        Some(qfi_matrix_of_recovered(&rho_star, ch, &gauge)?)
    } else {
        None
    };
    let imag_part_norm = qfi.as_ref().map(|q| q.complex.iter().map(|z| z.im.abs()).fold(0.0, f64::max));
    Ok(RecoveryResult {
        rho_star,
        bound,
        gauge,
        refinements,
        qfi,
        imag_part_norm,
        eigen_gap: step.eigen_gap,
        top_dim: step.top_dim,
        constraint_residual: step.residual,
        min_eigenvalue: step.min_eigenvalue,
    })
}

/// `𝓕_xy = 4 Tr[ρ D_x†D_y]` with `D_x = ∂_xK − i h_x K`: the real part is the
/// QFI matrix, the imaginary part enters the saturation check.
pub fn qfi_matrix_of_recovered(rho: &DensityMatrix, ch: &ParamChannel, gauge: &HermitianGauge) -> Result<QfiMatrices> {
    if !ch.is_shared() {
        return Err(Error::InvalidInput("QFI matrix needs a single multiparameter channel".into()));
    }
    gauge.check(ch)?;
    if rho.dim() != ch.dim_in {
        return Err(Error::DimensionMismatch(format!("state of dimension {} for input {}", rho.dim(), ch.dim_in)));
    }
    let p = ch.num_params();
    let ds: Vec<Vec<CMat>> = (0..p).map(|x| gauged_derivative(ch, &gauge.h[x], x)).collect();
    let complex = CMat::from_fn(p, p, |i, j| trace(&(rho.mat() * crate::channel::gram(&ds[i], &ds[j]))) * 4.0);
    let real = RMat::from_fn(p, p, |i, j| 0.5 * (complex[(i, j)].re + complex[(j, i)].re));
    Ok(QfiMatrices { real, complex })
}

/// True iff every entry of the imaginary part is at most `tol` in modulus.
pub fn check_holevo_saturation(complex_qfi: &CMat, tol: f64) -> bool {
    complex_qfi.iter().all(|z| z.im.abs() <= tol)
}

/// `‖off-diagonal‖_F / ‖diagonal‖` of a QFI matrix.
pub fn off_diagonal_ratio(f: &RMat) -> f64 {
    let diag: f64 = (0..f.nrows()).map(|i| f[(i, i)].powi(2)).sum::<f64>().sqrt();
    let off: f64 = (0..f.nrows())
        .flat_map(|i| (0..f.ncols()).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| f[(i, j)].powi(2))
        .sum::<f64>()
        .sqrt();
    if diag == 0.0 {
        0.0
    } else {
        off / diag
    }
}

/// `Σ_x q_x α_x` at a given gauge.
pub fn weighted_alpha(ch: &ParamChannel, gauge: &HermitianGauge, weights: &[f64]) -> Result<CMat> {
    let mut acc = CMat::zeros(ch.dim_in, ch.dim_in);
    for (x, q) in weights.iter().enumerate() {
        acc += build_alpha_beta(ch, gauge, x)?.0 * cr(*q);
    }
    Ok(acc)
}
