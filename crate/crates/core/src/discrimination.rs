//! State and channel discrimination: Helstrom errors, the pairwise lower
//! bound, query-count speed limits from SQL bounds, and runtime bounds for
//! noisy continuous-time Grover search.

use std::fmt;

use serde::Serialize;

use crate::bounds::markovian_sql_bound;
use crate::channel::{gauge_basis, LindbladModel};
use crate::error::{Error, Result};
use crate::linalg::{cr, trace, trace_norm, CMat};
use crate::sdp::{solve, LmiBlock, SdpProblem, SdpStatus};
use crate::state::{trace_distance, DensityMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub states: Vec<DensityMatrix>,
    pub priors: Vec<f64>,
}

impl Ensemble {
    pub fn new(states: Vec<DensityMatrix>, priors: Vec<f64>) -> Result<Self> {
        if states.len() != priors.len() || states.is_empty() {
            return Err(Error::InvalidInput(format!("{} states with {} priors", states.len(), priors.len())));
        }
        if priors.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidInput("priors must be non-negative".into()));
        }
        let total: f64 = priors.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("priors sum to {total}")));
        }
        let d = states[0].dim();
        if states.iter().any(|s| s.dim() != d) {
            return Err(Error::DimensionMismatch("ensemble states differ in dimension".into()));
        }
        Ok(Ensemble { states, priors })
    }

    pub fn uniform(states: Vec<DensityMatrix>) -> Result<Self> {
        let n = states.len();
        Self::new(states, vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }
}

/// Minimum error for two equiprobable states, `½(1 − D_tr)`.
pub fn helstrom_binary(r1: &DensityMatrix, r2: &DensityMatrix) -> Result<f64> {
    Ok(0.5 * (1.0 - trace_distance(r1, r2)?))
}

/// `1 − max_Π Σ_x p_x Tr[ρ_x Π_x]` over POVMs, by SDP. The last element is
/// eliminated as `Π_p = I − Σ_{x<p} Π_x`.
pub fn helstrom_multi(ens: &Ensemble) -> Result<f64> {
    let p = ens.len();
    if p < 2 {
        return Err(Error::InvalidInput("need at least two hypotheses".into()));
    }
    let d = ens.dim();
    let basis = gauge_basis(d);
    let nb = basis.len();
    let last = ens.states[p - 1].mat() * cr(ens.priors[p - 1]);
    let mut prob = SdpProblem::new((p - 1) * nb);
    let mut rest = Vec::new();
    for x in 0..p - 1 {
        let weighted = ens.states[x].mat() * cr(ens.priors[x]) - &last;
        let mut terms = Vec::with_capacity(nb);
        for (a, b) in basis.iter().enumerate() {
            let v = x * nb + a;
            prob.objective[v] = -trace(&(&weighted * b)).re;
            terms.push((v, b.clone()));
            rest.push((v, -b.clone()));
        }
        prob.blocks.push(LmiBlock::from_hermitian(&CMat::zeros(d, d), &terms));
    }
    prob.blocks.push(LmiBlock::from_hermitian(&CMat::identity(d, d), &rest));
    let sol = solve(&prob, 1e-10).map_err(Error::InvalidInput)?;
    if sol.status != SdpStatus::Optimal {
        return Err(Error::Solver { status: sol.status, detail: format!("gap {:.3e}", sol.duality_gap) });
    }
    let success = trace(&last).re - sol.primal_objective;
    Ok((1.0 - success).clamp(0.0, 1.0))
}

/// `½(1 − (p−1)⁻¹ Σ_{x<y} ‖p_xρ_x − p_yρ_y‖₁)`.
pub fn pairwise_error_lower_bound(ens: &Ensemble) -> Result<f64> {
    let p = ens.len();
    if p < 2 {
        return Err(Error::InvalidInput("need at least two hypotheses".into()));
    }
    let mut sum = 0.0;
    for x in 0..p {
        for y in x + 1..p {
            let diff = ens.states[x].mat() * cr(ens.priors[x]) - ens.states[y].mat() * cr(ens.priors[y]);
            sum += trace_norm(&diff)?;
        }
    }
    Ok(0.5 * (1.0 - sum / (p - 1) as f64))
}

/// `θ ↦ 𝔅(θ)` for the speed limit.
pub enum BoundCurve {
    Constant(f64),
    Function(Box<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl BoundCurve {
    fn eval(&self, t: f64) -> f64 {
        match self {
            BoundCurve::Constant(v) => *v,
            BoundCurve::Function(f) => f(t),
        }
    }
}

impl fmt::Debug for BoundCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundCurve::Constant(v) => write!(f, "Constant({v})"),
            BoundCurve::Function(_) => write!(f, "Function(..)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum Target {
    /// Maximum discrimination error `ε`.
    Error(f64),
    /// Pairwise Bures angle `δ` between all final states.
    Bures(f64),
}

#[derive(Debug)]
pub struct SpeedLimitQuery {
    pub num_channels: usize,
    pub curve: BoundCurve,
    pub theta_star: f64,
    pub target: Target,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedLimit {
    /// Lower bound on the number of queries (not rounded up).
    pub queries: f64,
    /// `∫₀^θ* √𝔅 dθ`.
    pub integral: f64,
    /// Set when the target makes the bound vacuous.
    pub warning: Option<String>,
}

/// Adaptive Simpson quadrature with relative tolerance `rtol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rtol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = simpson(fa, fm, fb, a, b);
    let scale = whole.abs().max(f64::MIN_POSITIVE);
    rec(f, a, b, fa, fm, fb, whole, rtol * scale, 50)
}

/// Lower bound on the number of uses needed to reach the target:
/// `p(1−2ε)²/(∫√𝔅)²` or `pδ²/(∫√𝔅)²`.
pub fn speed_limit_queries(q: &SpeedLimitQuery) -> Result<SpeedLimit> {
    if q.num_channels < 2 {
        return Err(Error::InvalidInput("need at least two channels".into()));
    }
    if !(q.theta_star > 0.0 && q.theta_star.is_finite()) {
        return Err(Error::InvalidInput(format!("theta_star must be positive, got {}", q.theta_star)));
    }
    let numerator = match q.target {
        Target::Error(eps) => {
            if !(eps >= 0.0) {
                return Err(Error::InvalidInput(format!("error target must be non-negative, got {eps}")));
            }
            if eps >= 0.5 {
                return Ok(SpeedLimit {
                    queries: 0.0,
                    integral: f64::NAN,
                    warning: Some(format!("error target {eps} >= 1/2: the bound is trivial")),
                });
            }
            (1.0 - 2.0 * eps).powi(2)
        }
        Target::Bures(delta) => {
            if !(delta > 0.0 && delta <= std::f64::consts::FRAC_PI_2) {
                return Err(Error::InvalidInput(format!("Bures target must lie in (0, π/2], got {delta}")));
            }
            delta * delta
        }
    };
    let integral = match &q.curve {
        BoundCurve::Constant(b) => {
            if !(*b >= 0.0) {
                return Err(Error::InvalidInput(format!("bound must be non-negative, got {b}")));
            }
            b.sqrt() * q.theta_star
        }
        BoundCurve::Function(_) => {
            let f = |t: f64| q.curve.eval(t).max(0.0).sqrt();
            adaptive_simpson(&f, 0.0, q.theta_star, 1e-9)
        }
    };
    if !(integral > 0.0 && integral.is_finite()) {
        return Err(Error::InvalidInput(format!("∫√𝔅 = {integral} is not positive and finite")));
    }
    Ok(SpeedLimit { queries: q.num_channels as f64 * numerator / (integral * integral), integral, warning: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GroverNoise {
    Dephasing,
    Erasure,
}

impl std::str::FromStr for GroverNoise {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dephasing" => Ok(GroverNoise::Dephasing),
            "erasure" => Ok(GroverNoise::Erasure),
            other => Err(Error::InvalidConfig(format!("unknown noise `{other}`; known: dephasing, erasure"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroverBound {
    /// Total SQL bound on the oracle frequency, summed over the `d` oracles.
    pub b_omega: f64,
    /// Lower bound on the runtime per database element, `T/d`.
    pub runtime_per_element: f64,
    /// Lower bound on the total runtime `T`.
    pub runtime: f64,
}

/// Runtime lower bound for identifying the marked element among `d` with
/// oracle Hamiltonians `ω|x⟩⟨x|` under Markovian noise of rate `γ`, for a
/// pairwise Bures-angle target `δ`.
pub fn grover_runtime_bound(noise: GroverNoise, d: usize, gamma: f64, omega: f64, delta: f64) -> Result<GroverBound> {
    if d < 2 {
        return Err(Error::InvalidInput("database size must be at least 2".into()));
    }
    if !(gamma > 0.0 && gamma.is_finite() && omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidInput("gamma and omega must be positive".into()));
    }
    let model = match noise {
        GroverNoise::Dephasing => LindbladModel::grover_dephasing(d, gamma)?,
        GroverNoise::Erasure => LindbladModel::grover_erasure(d, gamma)?,
    };
    let b_omega = markovian_sql_bound(&model, &vec![1.0; d])?.value;
    // Over total time T the frequency QFI is at most T·𝔅_ω, so θ = ω with
    // curve T·𝔅_ω gives T ≥ dδ²/(ω²𝔅_ω).
    let limit = speed_limit_queries(&SpeedLimitQuery {
        num_channels: d,
        curve: BoundCurve::Constant(b_omega),
        theta_star: omega,
        target: Target::Bures(delta),
    })?;
    Ok(GroverBound { b_omega, runtime_per_element: limit.queries / d as f64, runtime: limit.queries })
}
