//! Probe-incompatibility costs.
//!
//! With natural weights `q_x = 1/𝔉_x` (or `1/𝔅_x`) the joint bound counts
//! how many parameters could be estimated as well as separately; the cost is
//! `p` over that number, between 1 (fully compatible) and `p`. The values
//! computed here are the efficiently computable lower bounds on the cost, not
//! the cost over all decompositions.

use serde::Serialize;
use serde_json::{json, Value};

use crate::bounds::{single_use_bound_with, sql_bound_with, BoundMode};
use crate::channel::{gram, ParamChannel};
use crate::linalg::CMat;
use crate::error::{Error, Result};
use crate::recovery::{off_diagonal_ratio, recover_from_bound_preferring};
use crate::sdp::SdpSettings;
use crate::state::{output_qfi_matrix, purify};

/// Single-parameter bounds below this are treated as vanishing.
pub const DEGENERATE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncompatReport {
    pub mode: BoundMode,
    pub labels: Vec<String>,
    /// `𝔉_x` or `𝔅_x`, each from its own single-parameter program.
    pub singles: Vec<f64>,
    pub weights: Vec<f64>,
    pub joint_bound: f64,
    pub cost: f64,
    /// See [`naturalness_check`]; `None` when recovery failed.
    pub naturalness: Option<f64>,
    pub naturalness_error: Option<String>,
}

impl IncompatReport {
    pub fn to_json(&self) -> Value {
        json!({
            "mode": self.mode,
            "labels": self.labels,
            "singles": self.singles,
            "weights": self.weights,
            "joint_bound": self.joint_bound,
            "cost": self.cost,
            "cost_kind": "lower bound from natural weights",
            "naturalness": self.naturalness,
            "naturalness_error": self.naturalness_error,
        })
    }
}

fn incompat(ch: &ParamChannel, mode: BoundMode, settings: &SdpSettings, with_naturalness: bool) -> Result<IncompatReport> {
    let p = ch.num_params();
    if p < 2 {
        return Err(Error::InvalidInput("probe incompatibility needs at least two parameters".into()));
    }
    let bound = |c: &ParamChannel, w: &[f64]| match mode {
        BoundMode::SingleUse => single_use_bound_with(c, w, settings),
        _ => sql_bound_with(c, w, settings),
    };
    let singles = settings
        .exec
        .map(p, |x| bound(&ch.single(x), &[1.0]).map(|b| b.value))
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    for (x, f) in singles.iter().enumerate() {
        if !(*f > DEGENERATE_TOL) {
            return Err(Error::DegenerateParameter(ch.labels[x].clone()));
        }
    }
    let weights: Vec<f64> = singles.iter().map(|f| 1.0 / f).collect();
    let joint_bound = bound(ch, &weights)?.value;
    let (naturalness, naturalness_error) = if with_naturalness && ch.is_shared() {
        match naturalness_check_with(ch, settings) {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };
    Ok(IncompatReport {
        mode,
        labels: ch.labels.clone(),
        singles,
        weights,
        joint_bound,
        cost: p as f64 / joint_bound,
        naturalness,
        naturalness_error,
    })
}

/// `p / 𝔉(q)` with `q_x = 1/𝔉_x` from single-use programs.
pub fn incompat_single_use(ch: &ParamChannel) -> Result<IncompatReport> {
    incompat(ch, BoundMode::SingleUse, &SdpSettings::default(), true)
}

/// `p / 𝔅(q)` with `q_x = 1/𝔅_x` from SQL programs.
pub fn incompat_asymptotic(ch: &ParamChannel) -> Result<IncompatReport> {
    incompat(ch, BoundMode::Sql, &SdpSettings::default(), true)
}

/// Cost only, skipping the naturalness diagnostic.
pub fn incompat_cost(ch: &ParamChannel, mode: BoundMode, settings: &SdpSettings) -> Result<IncompatReport> {
    incompat(ch, mode, settings, false)
}

/// For each `x`, recovers optimal single-use probes for `θ_x` alone and
/// evaluates the full QFI matrix of their outputs; returns the largest, over
/// `x`, off-diagonal-to-diagonal Frobenius ratio.
///
/// Optimal probes are often not unique. Two are tried per `x`: the most
/// interior optimal state, and the optimal state minimizing
/// `Σ_{y≠x} Tr[ρ ∂_yK†∂_yK]`, which suppresses sensitivity to the other
/// parameters. The smaller ratio is kept.
pub fn naturalness_check(ch: &ParamChannel) -> Result<f64> {
    naturalness_check_with(ch, &SdpSettings::default())
}

pub fn naturalness_check_with(ch: &ParamChannel, settings: &SdpSettings) -> Result<f64> {
    if !ch.is_shared() {
        return Err(Error::InvalidInput("naturalness needs a single multiparameter channel".into()));
    }
    let p = ch.num_params();
    let ratios = settings
        .exec
        .map(p, |x| -> Result<f64> {
            let single = ch.single(x);
            let bound = single_use_bound_with(&single, &[1.0], settings)?;
            let others = (0..p)
                .filter(|&y| y != x)
                .fold(CMat::zeros(ch.dim_in, ch.dim_in), |acc, y| acc + gram(&ch.dkraus[y], &ch.dkraus[y]));
            let ratio = |prefer: Option<&CMat>| -> Result<f64> {
                let rec = recover_from_bound_preferring(&single, bound.clone(), prefer, settings)?;
                let psi = purify(rec.rho_star.mat());
                Ok(off_diagonal_ratio(&output_qfi_matrix(ch, &psi, ch.dim_in)?.real))
            };
            let interior = ratio(None);
            let preferred = ratio(Some(&others));
            match (interior, preferred) {
                (Ok(a), Ok(b)) => Ok(a.min(b)),
                (Ok(a), Err(_)) | (Err(_), Ok(a)) => Ok(a),
                (Err(e), Err(_)) => Err(e),
            }
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    Ok(ratios.into_iter().fold(0.0, f64::max))
}
