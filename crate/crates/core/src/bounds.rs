//! Channel bounds on the total (weighted) QFI.
//!
//! All programs share one shape: for every parameter `x` an affine stacked
//! operator `D_x(y)` (the gauged derivative, pre-scaled by `√q_x`), and the
//! objective `min ‖Σ_x D_x†D_x‖`. It is encoded with one auxiliary Hermitian
//! `W_x` per parameter,
//!
//! ```text
//! [[W_x, D_x†], [D_x, I]] ⪰ 0,     t I − Σ_x W_x ⪰ 0,     minimize t,
//! ```
//!
//! which is the Schur-complement form of `t I ⪰ Σ_x D_x†D_x` split per
//! parameter so every block stays small.

use nalgebra::DVector;
use serde::Serialize;
use serde_json::{json, Value};

use crate::channel::{
    beta_system, gauge_basis, gauge_from_coords, gram, hks_check, hls_check, lindblad_beta_terms, mix,
    complex_affine_system, LindbladModel, ParamChannel,
};
use crate::error::{Error, Result};
use crate::linalg::{c, cr, herm_eig_unchecked, identity, is_hermitian, opnorm, svd, CMat, RMat, C64, I};
use crate::sdp::{solve_with, LinearEq, LmiBlock, SdpProblem, SdpSettings, SdpSolution, SdpStatus};

/// One Hermitian `r_x × r_x` gauge matrix per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianGauge {
    pub h: Vec<CMat>,
}

impl HermitianGauge {
    pub fn new(h: Vec<CMat>) -> Result<Self> {
        for (x, m) in h.iter().enumerate() {
            if !m.is_square() || !is_hermitian(m, 1e-12) {
                return Err(Error::InvalidInput(format!("gauge h_{x} is not Hermitian")));
            }
        }
        Ok(HermitianGauge { h })
    }

    pub fn zeros(ch: &ParamChannel) -> Self {
        HermitianGauge {
            h: (0..ch.num_params()).map(|x| CMat::zeros(ch.rank(x), ch.rank(x))).collect(),
        }
    }

    pub fn check(&self, ch: &ParamChannel) -> Result<()> {
        if self.h.len() != ch.num_params() {
            return Err(Error::DimensionMismatch(format!(
                "{} gauge matrices for {} parameters",
                self.h.len(),
                ch.num_params()
            )));
        }
        for x in 0..ch.num_params() {
            if self.h[x].shape() != (ch.rank(x), ch.rank(x)) {
                return Err(Error::DimensionMismatch(format!(
                    "gauge h_{x} is {:?}, Kraus rank is {}",
                    self.h[x].shape(),
                    ch.rank(x)
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMode {
    SingleUse,
    Sql,
    Markovian,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverSummary {
    pub status: SdpStatus,
    pub gap: f64,
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
}

impl From<&SdpSolution> for SolverSummary {
    fn from(s: &SdpSolution) -> Self {
        SolverSummary {
            status: s.status,
            gap: s.duality_gap,
            iterations: s.iterations,
            primal_objective: s.primal_objective,
            dual_objective: s.dual_objective,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundResult {
    pub value: f64,
    pub mode: BoundMode,
    pub weights: Vec<f64>,
    pub gauge: HermitianGauge,
    pub solver: SolverSummary,
    /// `‖β_x‖` at the returned gauge.
    pub beta_residuals: Vec<f64>,
    /// The weighted operator `Σ_x q_x α_x` at the returned gauge.
    pub alpha_sum: CMat,
}

impl BoundResult {
    pub fn to_json(&self) -> Value {
        json!({
            "bound": self.value,
            "mode": self.mode,
            "weights": self.weights,
            "gauge": self.gauge.h.iter().map(matrix_json).collect::<Vec<_>>(),
            "beta_residuals": self.beta_residuals,
            "solver": {"status": self.solver.status, "gap": self.solver.gap},
        })
    }
}

pub fn matrix_json(m: &CMat) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| json!([m[(i, j)].re, m[(i, j)].im])).collect()))
            .collect(),
    )
}

fn check_weights(w: &[f64], p: usize) -> Result<()> {
    if w.len() != p {
        return Err(Error::InvalidInput(format!("{} weights for {p} parameters", w.len())));
    }
    if w.iter().any(|q| !(q.is_finite() && *q > 0.0)) {
        return Err(Error::InvalidInput(format!("weights must be positive and finite, got {w:?}")));
    }
    Ok(())
}

/// Gauged derivatives `D_x = ∂K_x − i h_x K_x`.
pub fn gauged_derivative(ch: &ParamChannel, h: &CMat, x: usize) -> Vec<CMat> {
    let hk = mix(h, &ch.kraus[x]);
    ch.dkraus[x].iter().zip(&hk).map(|(d, m)| d - m * I).collect()
}

/// `α_x = D_x†D_x`, `β_x = D_x†K_x`.
pub fn build_alpha_beta(ch: &ParamChannel, gauge: &HermitianGauge, x: usize) -> Result<(CMat, CMat)> {
    gauge.check(ch)?;
    if x >= ch.num_params() {
        return Err(Error::DimensionMismatch(format!("parameter index {x} out of range")));
    }
    let d = gauged_derivative(ch, &gauge.h[x], x);
    Ok((gram(&d, &d), gram(&d, &ch.kraus[x])))
}

/// Affine stacked operator `C + Σ_v y_v T_v` over the program's gauge variables.
struct AffineOp {
    constant: CMat,
    terms: Vec<(usize, CMat)>,
}

struct NormProgram {
    dim: usize,
    ops: Vec<AffineOp>,
    num_gauge: usize,
    equalities: Vec<LinearEq>,
}

struct NormSolution {
    gauge_vars: Vec<f64>,
    solution: SdpSolution,
}

impl NormProgram {
    fn solve(&self, settings: &SdpSettings) -> Result<NormSolution> {
        let n = self.dim;
        let wbasis = gauge_basis(n);
        let nw = wbasis.len();
        let p = self.ops.len();
        let w_off = 1 + self.num_gauge;
        let mut prob = SdpProblem::new(w_off + p * nw);
        prob.objective[0] = 1.0;
        for (x, op) in self.ops.iter().enumerate() {
            let m = op.constant.nrows();
            let embed = |top_left: Option<&CMat>, low_left: Option<&CMat>, low_right: bool| {
                let mut b = CMat::zeros(n + m, n + m);
                if let Some(tl) = top_left {
                    b.view_mut((0, 0), (n, n)).copy_from(tl);
                }
                if let Some(ll) = low_left {
                    b.view_mut((n, 0), (m, n)).copy_from(ll);
                    b.view_mut((0, n), (n, m)).copy_from(&ll.adjoint());
                }
                if low_right {
                    b.view_mut((n, n), (m, m)).fill_with_identity();
                }
                b
            };
            let constant = embed(None, Some(&op.constant), true);
            let mut terms: Vec<(usize, CMat)> =
                op.terms.iter().map(|(v, t)| (1 + v, embed(None, Some(t), false))).collect();
            for (k, e) in wbasis.iter().enumerate() {
                terms.push((w_off + x * nw + k, embed(Some(e), None, false)));
            }
            prob.blocks.push(LmiBlock::from_hermitian(&constant, &terms));
        }
        let mut last: Vec<(usize, CMat)> = vec![(0, identity(n))];
        for x in 0..p {
            for (k, e) in wbasis.iter().enumerate() {
                last.push((w_off + x * nw + k, -e));
            }
        }
        prob.blocks.push(LmiBlock::from_hermitian(&CMat::zeros(n, n), &last));
        prob.equalities = self
            .equalities
            .iter()
            .map(|eq| LinearEq {
                coeffs: eq.coeffs.iter().map(|(v, a)| (1 + v, *a)).collect(),
                rhs: eq.rhs,
            })
            .collect();
        let sol = solve_with(&prob, settings).map_err(Error::InvalidInput)?;
        if sol.status != SdpStatus::Optimal {
            return Err(Error::Solver {
                status: sol.status,
                detail: format!("gap {:.3e}, equality residual {:.3e}, min block eigenvalue {:.3e}, iterations {}", sol.duality_gap, sol.max_eq_residual, sol.min_block_eig, sol.iterations),
            });
        }
        Ok(NormSolution {
            gauge_vars: sol.y[1..w_off].to_vec(),
            solution: sol,
        })
    }
}

/// Real equalities `A y = b`, reduced to an orthonormal row basis of `A`
/// (relative singular-value threshold `1e-11`), with variables offset.
fn dedup_equalities(a: &RMat, b: &DVector<f64>, offset: usize) -> Vec<LinearEq> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let dec = svd(a);
    let u = &dec.u;
    let smax = dec.s[0];
    let mut out = Vec::new();
    for k in 0..dec.s.len() {
        let s = dec.s[k];
        if s <= 1e-11 * smax || s == 0.0 {
            continue;
        }
        let uk = u.column(k);
        let row = a.transpose() * uk;
        out.push(LinearEq {
            coeffs: row.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (offset + i, *v)).collect(),
            rhs: uk.dot(b),
        });
    }
    out
}

fn channel_program(ch: &ParamChannel, w: &[f64], sql: bool) -> (NormProgram, Vec<usize>) {
    let mut ops = Vec::new();
    let mut offsets = Vec::new();
    let mut equalities = Vec::new();
    let mut off = 0;
    for x in 0..ch.num_params() {
        let r = ch.rank(x);
        let sq = cr(w[x].sqrt());
        let constant = crate::channel::stack(&ch.dkraus[x]) * sq;
        let terms = gauge_basis(r)
            .iter()
            .enumerate()
            .map(|(v, e)| (off + v, crate::channel::stack(&mix(e, &ch.kraus[x])) * (sq * c(0.0, -1.0))))
            .collect();
        ops.push(AffineOp { constant, terms });
        if sql {
            let (a, b) = beta_system(&ch.kraus[x], &ch.dkraus[x]);
            equalities.extend(dedup_equalities(&a, &b, off));
        }
        offsets.push(off);
        off += r * r;
    }
    (
        NormProgram {
            dim: ch.dim_in,
            ops,
            num_gauge: off,
            equalities,
        },
        offsets,
    )
}

fn channel_bound(ch: &ParamChannel, w: &[f64], mode: BoundMode, settings: &SdpSettings) -> Result<BoundResult> {
    check_weights(w, ch.num_params())?;
    if mode == BoundMode::Sql {
        let bad: Vec<String> = (0..ch.num_params())
            .filter(|&x| !hks_check(ch, x, 1e-9).satisfied)
            .map(|x| ch.labels[x].clone())
            .collect();
        if !bad.is_empty() {
            return Err(Error::HeisenbergPossible { params: bad });
        }
    }
    let (prog, offsets) = channel_program(ch, w, mode == BoundMode::Sql);
    let sol = prog.solve(settings)?;
    let gauge = HermitianGauge {
        h: (0..ch.num_params())
            .map(|x| gauge_from_coords(ch.rank(x), &sol.gauge_vars[offsets[x]..]))
            .collect(),
    };
    let mut alpha_sum = CMat::zeros(ch.dim_in, ch.dim_in);
    let mut beta_residuals = Vec::new();
    for x in 0..ch.num_params() {
        let (a, b) = build_alpha_beta(ch, &gauge, x)?;
        alpha_sum += a * cr(w[x]);
        beta_residuals.push(opnorm(&b));
    }
    Ok(BoundResult {
        value: 4.0 * opnorm(&alpha_sum),
        mode,
        weights: w.to_vec(),
        gauge,
        solver: (&sol.solution).into(),
        beta_residuals,
        alpha_sum,
    })
}

/// Single-use total channel QFI `4 min_h ‖Σ_x q_x α_x‖`.
pub fn single_use_bound(ch: &ParamChannel, weights: &[f64]) -> Result<BoundResult> {
    single_use_bound_with(ch, weights, &SdpSettings::default())
}

pub fn single_use_bound_with(ch: &ParamChannel, weights: &[f64], settings: &SdpSettings) -> Result<BoundResult> {
    channel_bound(ch, weights, BoundMode::SingleUse, settings)
}

/// Asymptotic SQL bound: the single-use program with `β_x = 0` for every `x`.
pub fn sql_bound(ch: &ParamChannel, weights: &[f64]) -> Result<BoundResult> {
    sql_bound_with(ch, weights, &SdpSettings::default())
}

pub fn sql_bound_with(ch: &ParamChannel, weights: &[f64], settings: &SdpSettings) -> Result<BoundResult> {
    channel_bound(ch, weights, BoundMode::Sql, settings)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SinglesMode {
    SingleUse,
    Sql,
}

/// `Σ_x q_x 𝔉_x` (or `Σ_x q_x 𝔅_x`) from independent one-parameter programs.
pub fn sum_of_singles(ch: &ParamChannel, weights: &[f64], mode: SinglesMode) -> Result<f64> {
    check_weights(weights, ch.num_params())?;
    let mut total = 0.0;
    for x in 0..ch.num_params() {
        let single = ch.single(x);
        let v = match mode {
            SinglesMode::SingleUse => single_use_bound(&single, &[1.0])?.value,
            SinglesMode::Sql => sql_bound(&single, &[1.0])?.value,
        };
        total += weights[x] * v;
    }
    Ok(total)
}

/// Evaluation of a finite-`N` bound over candidate gauges.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteNEval {
    pub value: f64,
    /// Index of the minimising candidate.
    pub best: usize,
    pub per_candidate: Vec<f64>,
    /// Candidates at which some `β_x` is non-Hermitian beyond `1e-8`
    /// (only meaningful for the parallel bound, where `β_x²` is taken literally).
    pub non_hermitian_beta: Vec<usize>,
}

struct GaugeTerms {
    alpha_norm: f64,
    beta_max: f64,
    beta_sum_norm: f64,
    beta_sq_norm: f64,
    non_hermitian: bool,
}

fn gauge_terms(ch: &ParamChannel, w: &[f64], g: &HermitianGauge) -> Result<GaugeTerms> {
    let n = ch.dim_in;
    let (mut asum, mut bsum, mut bsq) = (CMat::zeros(n, n), CMat::zeros(n, n), CMat::zeros(n, n));
    let mut beta_max: f64 = 0.0;
    let mut non_hermitian = false;
    for x in 0..ch.num_params() {
        let (a, b) = build_alpha_beta(ch, g, x)?;
        asum += a * cr(w[x]);
        bsum += &b * cr(w[x]);
        bsq += &b * &b * cr(w[x]);
        beta_max = beta_max.max(opnorm(&b));
        non_hermitian |= (&b - b.adjoint()).camax() > 1e-8;
    }
    Ok(GaugeTerms {
        alpha_norm: opnorm(&asum),
        beta_max,
        beta_sum_norm: opnorm(&bsum),
        beta_sq_norm: opnorm(&bsq),
        non_hermitian,
    })
}

fn eval_candidates(
    ch: &ParamChannel,
    w: &[f64],
    candidates: &[HermitianGauge],
    n: u64,
    f: impl Fn(&GaugeTerms, f64) -> f64,
) -> Result<FiniteNEval> {
    check_weights(w, ch.num_params())?;
    if n == 0 {
        return Err(Error::InvalidInput("N must be at least 1".into()));
    }
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidate gauges".into()));
    }
    let mut per = Vec::with_capacity(candidates.len());
    let mut flagged = Vec::new();
    for (i, g) in candidates.iter().enumerate() {
        let t = gauge_terms(ch, w, g)?;
        if t.non_hermitian {
            flagged.push(i);
        }
        per.push(f(&t, n as f64));
    }
    let best = (0..per.len()).min_by(|&a, &b| per[a].total_cmp(&per[b])).expect("non-empty");
    Ok(FiniteNEval {
        value: per[best],
        best,
        per_candidate: per,
        non_hermitian_beta: flagged,
    })
}

/// Adaptive (sequential) `N`-use bound
/// `4{N‖Σqα‖ + N(N−1) max_x‖β_x‖ [‖Σqβ‖ + 2√((Σq)‖Σqα‖)]}`, minimised over
/// the candidate gauges only.
pub fn finite_n_bound_eval(
    ch: &ParamChannel,
    weights: &[f64],
    candidates: &[HermitianGauge],
    n: u64,
) -> Result<FiniteNEval> {
    let qsum: f64 = weights.iter().sum();
    eval_candidates(ch, weights, candidates, n, |t, n| {
        4.0 * (n * t.alpha_norm
            + n * (n - 1.0) * t.beta_max * (t.beta_sum_norm + 2.0 * (qsum * t.alpha_norm).sqrt()))
    })
}

/// Parallel `N`-use bound `4{N‖Σqα‖ + N(N−1)‖Σ q β²‖}` with `β²` the literal
/// matrix square.
pub fn parallel_bound_eval(
    ch: &ParamChannel,
    weights: &[f64],
    candidates: &[HermitianGauge],
    n: u64,
) -> Result<FiniteNEval> {
    eval_candidates(ch, weights, candidates, n, |t, n| {
        4.0 * (n * t.alpha_norm + n * (n - 1.0) * t.beta_sq_norm)
    })
}

/// `{h = 0, single-use optimum, SQL optimum}`; the SQL optimum is skipped
/// when the span condition fails.
pub fn default_candidates(ch: &ParamChannel, weights: &[f64]) -> Result<Vec<HermitianGauge>> {
    let mut out = vec![HermitianGauge::zeros(ch), single_use_bound(ch, weights)?.gauge];
    match sql_bound(ch, weights) {
        Ok(r) => out.push(r.gauge),
        Err(Error::HeisenbergPossible { .. }) => {}
        Err(e) => return Err(e),
    }
    Ok(out)
}

/// Asymptotic bound per unit time for GKLS dynamics:
/// `4 min ‖Σ_x q_x α_x⁽¹⁾‖` subject to `β_x⁽¹⁾ = 0`.
pub fn markovian_sql_bound(model: &LindbladModel, weights: &[f64]) -> Result<BoundResult> {
    markovian_sql_bound_with(model, weights, &SdpSettings::default())
}

pub fn markovian_sql_bound_with(model: &LindbladModel, weights: &[f64], settings: &SdpSettings) -> Result<BoundResult> {
    let p = model.num_params();
    check_weights(weights, p)?;
    let bad: Vec<String> = (0..p)
        .filter(|&x| !hls_check(model, x, 1e-9).satisfied)
        .map(|x| model.labels[x].clone())
        .collect();
    if !bad.is_empty() {
        return Err(Error::HeisenbergPossible { params: bad });
    }
    let d = model.dim;
    let k = model.probe_dim;
    let mut ops = Vec::new();
    let mut equalities = Vec::new();
    let mut offsets = Vec::new();
    let mut off = 0;
    for x in 0..p {
        let ls = &model.collapse_ops[x];
        let j = ls.len();
        let sq = cr(weights[x].sqrt());
        let rows = j.max(1) * d;
        // Row block jj of D_x holds (h_jj I + Σ_k 𝕙_{jj,k} L_k) on the probe columns.
        let block = |jj: usize, m: &CMat| {
            let mut s = CMat::zeros(rows, k);
            s.view_mut((jj * d, 0), (d, k)).copy_from(&m.columns(0, k));
            s * sq
        };
        // Variables: h0, (Re h_j, Im h_j) pairs, then 𝕙 in gauge-basis order.
        let mut terms = Vec::new();
        for jj in 0..j {
            terms.push((off + 1 + 2 * jj, block(jj, &identity(d))));
            terms.push((off + 2 + 2 * jj, block(jj, &(identity(d) * I))));
        }
        for (v, e) in gauge_basis(j).iter().enumerate() {
            let mut s = CMat::zeros(rows, k);
            for jj in 0..j {
                let mut acc = CMat::zeros(d, d);
                for (kk, lk) in ls.iter().enumerate() {
                    if e[(jj, kk)] != C64::new(0.0, 0.0) {
                        acc += lk * e[(jj, kk)];
                    }
                }
                s.view_mut((jj * d, 0), (d, k)).copy_from(&acc.columns(0, k));
            }
            terms.push((off + 1 + 2 * j + v, s * sq));
        }
        ops.push(AffineOp {
            constant: CMat::zeros(rows, k),
            terms,
        });
        let (m0, ms) = lindblad_beta_terms(&model.hamiltonians[x], ls, k);
        let (a, b) = complex_affine_system(&m0, &ms);
        equalities.extend(dedup_equalities(&a, &b, off));
        offsets.push(off);
        off += 1 + 2 * j + j * j;
    }
    let prog = NormProgram {
        dim: k,
        ops,
        num_gauge: off,
        equalities,
    };
    let sol = prog.solve(settings)?;
    let mut alpha_sum = CMat::zeros(k, k);
    let mut gauges = Vec::new();
    let mut beta_residuals = Vec::new();
    for x in 0..p {
        let ls = &model.collapse_ops[x];
        let j = ls.len();
        let y = &sol.gauge_vars[offsets[x]..offsets[x] + 1 + 2 * j + j * j];
        let hv: Vec<C64> = (0..j).map(|jj| c(y[1 + 2 * jj], y[2 + 2 * jj])).collect();
        let hh = gauge_from_coords(j, &y[1 + 2 * j..]);
        let (m0, ms) = lindblad_beta_terms(&model.hamiltonians[x], ls, k);
        let mut beta = m0;
        for (m, v) in ms.iter().zip(y) {
            beta += m * cr(*v);
        }
        beta_residuals.push(opnorm(&beta));
        for jj in 0..j {
            let mut dj = identity(d) * hv[jj];
            for (kk, lk) in ls.iter().enumerate() {
                dj += lk * hh[(jj, kk)];
            }
            let dj = dj.columns(0, k).into_owned();
            alpha_sum += dj.adjoint() * dj * cr(weights[x]);
        }
        gauges.push(hh);
    }
    Ok(BoundResult {
        value: 4.0 * opnorm(&alpha_sum),
        mode: BoundMode::Markovian,
        weights: weights.to_vec(),
        gauge: HermitianGauge { h: gauges },
        solver: (&sol.solution).into(),
        beta_residuals,
        alpha_sum,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RldResult {
    pub finite: bool,
    /// `+∞` when not finite.
    pub value: f64,
    /// `max_x ‖(∂Ω_x)² Π⊥_x‖ / ‖(∂Ω_x)²‖`.
    pub leakage: f64,
}

/// Traces out the first (output) factor of an `(a·b) × (a·b)` operator.
pub fn trace_out_first(m: &CMat, a: usize, b: usize) -> CMat {
    CMat::from_fn(b, b, |i, j| (0..a).map(|k| m[(k * b + i, k * b + j)]).sum())
}

/// Traces out the second (ancilla) factor.
pub fn trace_out_second(m: &CMat, a: usize, b: usize) -> CMat {
    CMat::from_fn(a, a, |i, j| (0..b).map(|k| m[(i * b + k, j * b + k)]).sum())
}

/// Right-logarithmic-derivative bound `‖Σ_x q_x Tr_out[(∂Ω_x)Ω_x⁺(∂Ω_x)]‖`
/// with unit weights.
pub fn rld_bound(ch: &ParamChannel) -> RldResult {
    rld_bound_weighted(ch, &vec![1.0; ch.num_params()]).expect("unit weights are valid")
}

pub fn rld_bound_weighted(ch: &ParamChannel, weights: &[f64]) -> Result<RldResult> {
    check_weights(weights, ch.num_params())?;
    let (dout, din) = (ch.dim_out, ch.dim_in);
    let mut total = CMat::zeros(din, din);
    let mut leakage: f64 = 0.0;
    for x in 0..ch.num_params() {
        let (om, dom) = crate::channel::choi_matrix(ch, x);
        let eig = herm_eig_unchecked(&om);
        let tr: f64 = eig.eigenvalues.iter().sum();
        let cut = 1e-10 * tr;
        let pinv = eig.map(|l| if l > cut { 1.0 / l } else { 0.0 });
        let perp = eig.map(|l| if l > cut { 0.0 } else { 1.0 });
        let sq = &dom * &dom;
        let sq_norm = opnorm(&sq);
        if sq_norm > 0.0 {
            leakage = leakage.max(opnorm(&(&sq * perp)) / sq_norm);
        }
        total += trace_out_first(&(&dom * pinv * &dom), dout, din) * cr(weights[x]);
    }
    let finite = leakage <= 1e-8;
    Ok(RldResult {
        finite,
        value: if finite { opnorm(&total) } else { f64::INFINITY },
        leakage,
    })
}

/// Noiseless bound `4‖Σ_x G_x²‖` for `exp(−i Σ θ_x G_x)`.
pub fn kura_ueda_bound(generators: &[CMat]) -> Result<f64> {
    let n = generators
        .first()
        .ok_or_else(|| Error::InvalidInput("no generators".into()))?
        .nrows();
    let mut acc = CMat::zeros(n, n);
    for g in generators {
        if g.shape() != (n, n) || !is_hermitian(g, 1e-10) {
            return Err(Error::InvalidInput("generators must be Hermitian and equal-sized".into()));
        }
        acc += g * g;
    }
    Ok(4.0 * opnorm(&acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{gad, phase_dephasing, phase_loss, random_channel_family, unitary_channel, zoo_build, ZooSpec};
    use crate::random::{random_unitary, rng};

    fn sz_half() -> CMat {
        CMat::from_row_slice(2, 2, &[cr(0.5), cr(0.0), cr(0.0), cr(-0.5)])
    }

    #[test]
    fn alpha_beta_at_zero_gauge() {
        let g = gad(0.25, 0.5).unwrap();
        let (a, b) = build_alpha_beta(&g, &HermitianGauge::zeros(&g), 1).unwrap();
        assert!((a - gram(&g.dkraus[1], &g.dkraus[1])).camax() < 1e-15);
        assert!((b - gram(&g.dkraus[1], &g.kraus[1])).camax() < 1e-15);
        let bad = HermitianGauge { h: vec![CMat::zeros(3, 3); 2] };
        assert!(matches!(build_alpha_beta(&g, &bad, 0), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn alpha_beta_unitary_scalar_gauge() {
        // ∂K = −iGK, so D = −i(G + h): α = (G + h)², β = i(G + h).
        let g = sz_half();
        let ch = unitary_channel(std::slice::from_ref(&g), &[0.0]).unwrap();
        let h = 0.3;
        let gauge = HermitianGauge::new(vec![CMat::from_element(1, 1, cr(h))]).unwrap();
        let (a, b) = build_alpha_beta(&ch, &gauge, 0).unwrap();
        let s = &g + identity(2) * cr(h);
        assert!((a - &s * &s).camax() < 1e-15);
        assert!((b - s * I).camax() < 1e-15);
    }

    #[test]
    fn phase_loss_sql_gauges() {
        let eta: f64 = 0.5;
        let ch = phase_loss(0.0, eta).unwrap();
        // Displayed Kraus form: the SQL gauge is diag(0, −η/(1−η)).
        let mut h = CMat::zeros(2, 2);
        h[(1, 1)] = cr(-eta / (1.0 - eta));
        let gauge = HermitianGauge::new(vec![h, CMat::zeros(2, 2)]).unwrap();
        let (a, b) = build_alpha_beta(&ch, &gauge, 0).unwrap();
        assert!((a[(0, 0)].re * 4.0 - 4.0 * eta / (1.0 - eta)).abs() < 1e-12);
        assert!(a[(1, 1)].norm() < 1e-15 && opnorm(&b) < 1e-15);

        // Phase applied before the loss (K1 also picks up e^{−iφ}): the
        // gauge diag(0, −1/(1−η)) does the same job.
        let mut alt = ch.clone();
        alt.dkraus[0][1] = &ch.kraus[0][1] * c(0.0, -1.0);
        let mut h = CMat::zeros(2, 2);
        h[(1, 1)] = cr(-1.0 / (1.0 - eta));
        let gauge = HermitianGauge::new(vec![h, CMat::zeros(2, 2)]).unwrap();
        let (a, b) = build_alpha_beta(&alt, &gauge, 0).unwrap();
        assert!((a[(0, 0)].re * 4.0 - 4.0 * eta / (1.0 - eta)).abs() < 1e-12);
        assert!(opnorm(&b) < 1e-15);
    }

    #[test]
    fn unitary_single_use_is_spread_squared() {
        let ch = unitary_channel(&[sz_half()], &[0.0]).unwrap();
        let r = single_use_bound(&ch, &[1.0]).unwrap();
        assert!((r.value - 1.0).abs() < 1e-7);
        assert!(matches!(sql_bound(&ch, &[1.0]), Err(Error::HeisenbergPossible { .. })));
    }

    #[test]
    fn gad_single_use_and_rld() {
        let g = gad(0.25, 0.5).unwrap();
        let f = single_use_bound(&g, &[1.0, 1.0]).unwrap();
        assert!((f.value - 3.84).abs() < 0.01, "{}", f.value);
        let s = sum_of_singles(&g, &[1.0, 1.0], SinglesMode::SingleUse).unwrap();
        assert!((s - 4.72).abs() < 0.01, "{s}");
        let r = rld_bound(&g);
        assert!(r.finite);
        assert!((r.value - 10.67).abs() < 0.01);
        let b = sql_bound(&g, &[1.0, 1.0]).unwrap();
        assert!(b.value <= r.value + 1e-6);
        assert!(b.beta_residuals.iter().all(|v| *v < 1e-7));
    }

    #[test]
    fn phase_dephasing_closed_forms() {
        for eta in [0.3, 0.7] {
            let ch = phase_dephasing(0.0, eta).unwrap();
            let f = single_use_bound(&ch, &[1.0, 1.0]).unwrap();
            assert!((f.value - (eta * eta + 1.0 / (1.0 - eta * eta))).abs() < 1e-6);
            let b = sql_bound(&ch.single(0), &[1.0]).unwrap();
            assert!((b.value - eta * eta / (1.0 - eta * eta)).abs() < 1e-6);
        }
    }

    #[test]
    fn phase_loss_sql_total() {
        let ch = phase_loss(0.0, 0.5).unwrap();
        let b = sql_bound(&ch, &[1.0, 1.0]).unwrap();
        assert!((b.value - 8.0).abs() < 1e-6, "{}", b.value);
        let s = sum_of_singles(&ch, &[1.0, 1.0], SinglesMode::Sql).unwrap();
        assert!((s - 8.0).abs() < 1e-6);
    }

    #[test]
    fn qudit_dephasing_sql_closed_form() {
        // Ensemble of d channels with generators |x⟩⟨x|; total over the ensemble.
        let eta: f64 = 0.5;
        for d in [2usize, 3, 4] {
            let ch = zoo_build(&ZooSpec::new("qudit_dephasing_unitary", &[("d", d as f64), ("eta", eta)])).unwrap();
            let b = sql_bound(&ch, &vec![1.0; d]).unwrap();
            let df = d as f64;
            let expect = 4.0 * eta * (df - 1.0) / ((1.0 - eta) * (df + 2.0 / eta));
            assert!((b.value - expect).abs() < 1e-6, "d={d}: {} vs {expect}", b.value);
        }
        let ch = zoo_build(&ZooSpec::new("qudit_dephasing_unitary", &[("d", 2.0), ("eta", eta)])).unwrap();
        assert!((sql_bound(&ch, &[1.0, 1.0]).unwrap().value - 2.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn erasure_full_model_sql() {
        let eta = 0.5;
        let ch = zoo_build(&ZooSpec::new("erasure_tomography", &[("d", 3.0), ("eta", eta)])).unwrap();
        let b = sql_bound(&ch, &[1.0; 9]).unwrap();
        let expect = 20.0 / 3.0 * eta / (1.0 - eta);
        assert!((b.value - expect).abs() < 1e-5 * expect, "{} vs {expect}", b.value);
    }

    #[test]
    fn finite_n_reductions() {
        let g = gad(0.25, 0.5).unwrap();
        let w = [1.0, 1.0];
        let single = single_use_bound(&g, &w).unwrap();
        let sql = sql_bound(&g, &w).unwrap();
        let cands = vec![HermitianGauge::zeros(&g), single.gauge.clone(), sql.gauge.clone()];
        let one = finite_n_bound_eval(&g, &w, &cands[1..2], 1).unwrap();
        assert!((one.value - single.value).abs() < 1e-12);
        for n in [1, 7, 100] {
            let s = finite_n_bound_eval(&g, &w, &cands[2..3], n).unwrap();
            let a = 4.0 * opnorm(&sql.alpha_sum) * n as f64;
            let tol = 1e-6 * a;
            assert!((s.value - n as f64 * sql.value).abs() < tol);
            let p = parallel_bound_eval(&g, &w, &cands[2..3], n).unwrap();
            assert!((p.value - n as f64 * sql.value).abs() < tol);
        }
        let all = finite_n_bound_eval(&g, &w, &cands, 1).unwrap();
        assert!(all.value >= single.value - 1e-7);
        assert!(finite_n_bound_eval(&g, &w, &cands, 0).is_err());
    }

    #[test]
    fn parallel_unitary_hand_expansion() {
        // h = 0: α = G² = I/4, β = iG, β² = −G² = −I/4; ‖·‖ = 1/4.
        let ch = unitary_channel(&[sz_half()], &[0.0]).unwrap();
        let r = parallel_bound_eval(&ch, &[1.0], &[HermitianGauge::zeros(&ch)], 5).unwrap();
        assert!((r.value - 4.0 * (5.0 * 0.25 + 20.0 * 0.25)).abs() < 1e-12);
        assert!(r.non_hermitian_beta == vec![0]);
    }

    #[test]
    fn markovian_examples() {
        let m = LindbladModel::grover_dephasing(4, 1.0).unwrap();
        let b = markovian_sql_bound(&m, &[1.0; 4]).unwrap();
        assert!((b.value - 2.0).abs() < 1e-6, "{}", b.value);
        let m = LindbladModel::grover_erasure(2, 1.0).unwrap();
        let b = markovian_sql_bound(&m, &[1.0; 2]).unwrap();
        assert!((b.value - 2.0).abs() < 1e-6, "{}", b.value);
        let q = LindbladModel::qubit_dephasing(0.8).unwrap();
        let b = markovian_sql_bound(&q, &[1.0]).unwrap();
        assert!((b.value - 1.0 / 1.6).abs() < 1e-6);
        // Probes allowed on the flag level as well: the bound loosens to 4/γ.
        for d in [2, 3] {
            let mut full = LindbladModel::grover_erasure(d, 1.0).unwrap();
            full.probe_dim = full.dim;
            let b = markovian_sql_bound(&full, &vec![1.0; d]).unwrap();
            assert!((b.value - 4.0).abs() < 1e-6);
        }
    }

    #[test]
    fn rld_examples() {
        let u = unitary_channel(&[sz_half()], &[0.0]).unwrap();
        let r = rld_bound(&u);
        assert!(!r.finite && r.value.is_infinite());
        let ch = phase_dephasing(0.0, 0.5).unwrap();
        let r = rld_bound(&ch.single(0));
        assert!((r.value - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn kura_ueda_examples() {
        assert!((kura_ueda_bound(&[sz_half()]).unwrap() - 1.0).abs() < 1e-15);
        let diag: Vec<CMat> = (0..3)
            .map(|j| {
                let mut m = CMat::zeros(3, 3);
                m[(j, j)] = cr(1.0);
                m
            })
            .collect();
        assert!((kura_ueda_bound(&diag).unwrap() - 4.0).abs() < 1e-15);
        assert!(kura_ueda_bound(&[]).is_err());
    }

    #[test]
    fn kraus_mixing_invariance() {
        let mut r = rng(5);
        for _ in 0..3 {
            let ch = random_channel_family(&mut r, 2, 2, 2, 2);
            let u = random_unitary(&mut r, 2);
            let mixed = ch.kraus_mixed(&u);
            let a = single_use_bound(&ch, &[1.0, 0.7]).unwrap().value;
            let b = single_use_bound(&mixed, &[1.0, 0.7]).unwrap().value;
            assert!((a - b).abs() < 1e-8 * a.max(1.0), "{a} {b}");
        }
    }

    #[test]
    fn rejects_bad_weights() {
        let g = gad(0.25, 0.5).unwrap();
        assert!(single_use_bound(&g, &[1.0]).is_err());
        assert!(single_use_bound(&g, &[1.0, 0.0]).is_err());
        assert!(single_use_bound(&g, &[1.0, f64::NAN]).is_err());
    }
}
