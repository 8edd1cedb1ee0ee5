//! Registered reproduction cases with their reference values.

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use qmetro::bounds::{markovian_sql_bound, rld_bound, single_use_bound_with, sql_bound_with, sum_of_singles, BoundMode, SinglesMode};
use qmetro::channel::{gad, phase_dephasing, phase_loss, zoo_build, LindbladModel, ZooSpec};
use qmetro::discrimination::{
    grover_runtime_bound, helstrom_multi, speed_limit_queries, BoundCurve, Ensemble, GroverNoise, SpeedLimitQuery, Target,
};
use qmetro::error::Result;
use qmetro::incompat::incompat_cost;
use qmetro::sdp::SdpSettings;
use qmetro::state::{probe_oracle_with, DensityMatrix, OracleSettings};
use qmetro::linalg::{cr, CMat};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Expected {
    pub value: f64,
    pub tol: f64,
    /// Where the reference value comes from.
    pub basis: &'static str,
}

pub struct Ctx {
    pub settings: SdpSettings,
    pub seed: u64,
}

pub struct Outcome {
    pub value: f64,
    pub diagnostics: Value,
}

type Runner = fn(&Ctx) -> Result<Outcome>;

pub struct CaseSpec {
    pub id: &'static str,
    pub description: &'static str,
    pub expected: Option<Expected>,
    run: Runner,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub case_id: String,
    pub value: Option<f64>,
    pub expected: Option<Expected>,
    /// `None` when there is no expected value.
    pub pass: Option<bool>,
    pub runtime_ms: f64,
    pub diagnostics: Value,
    pub error: Option<String>,
}

fn closed(value: f64, tol: f64) -> Option<Expected> {
    Some(Expected { value, tol, basis: "closed form" })
}

fn published(value: f64, tol: f64) -> Option<Expected> {
    Some(Expected { value, tol, basis: "published numerical value" })
}

fn phase_loss_cost(eta: f64) -> f64 {
    let s = eta.sqrt();
    2.0 * ((1.0 - eta) / (eta + s - (2.0 * (1.0 + s)).sqrt())).powi(2)
}

fn bound_outcome(b: qmetro::bounds::BoundResult) -> Outcome {
    Outcome { value: b.value, diagnostics: json!({"solver": b.solver}) }
}

fn cost_outcome(ch: &qmetro::channel::ParamChannel, mode: BoundMode, ctx: &Ctx) -> Result<Outcome> {
    let r = incompat_cost(ch, mode, &ctx.settings)?;
    Ok(Outcome { value: r.cost, diagnostics: json!({"singles": r.singles, "joint_bound": r.joint_bound}) })
}

fn multiphase(p: usize, ctx: &Ctx) -> Result<Outcome> {
    let ch = zoo_build(&ZooSpec::new("lossy_multiphase", &[("p", p as f64), ("eta", 0.7)]))?;
    cost_outcome(&ch, BoundMode::Sql, ctx)
}

pub fn cases() -> Vec<CaseSpec> {
    vec![
        CaseSpec {
            id: "gad-f-singleuse",
            description: "generalized amplitude damping (nu=1/4, gamma=1/2), joint single-use bound",
            expected: published(3.84, 0.01),
            run: |ctx| Ok(bound_outcome(single_use_bound_with(&gad(0.25, 0.5)?, &[1.0, 1.0], &ctx.settings)?)),
        },
        CaseSpec {
            id: "gad-sum-singles",
            description: "generalized amplitude damping, sum of single-parameter bounds",
            expected: published(4.72, 0.01),
            run: |_| Ok(Outcome { value: sum_of_singles(&gad(0.25, 0.5)?, &[1.0, 1.0], SinglesMode::SingleUse)?, diagnostics: json!({}) }),
        },
        CaseSpec {
            id: "gad-rld",
            description: "generalized amplitude damping, RLD bound",
            expected: published(10.67, 0.01),
            run: |_| {
                let r = rld_bound(&gad(0.25, 0.5)?);
                Ok(Outcome { value: r.value, diagnostics: json!({"finite": r.finite, "leakage": r.leakage}) })
            },
        },
        CaseSpec {
            id: "gad-oracle",
            description: "generalized amplitude damping, brute-force probe optimum (seeded)",
            expected: published(3.84, 0.02),
            run: |ctx| {
                let settings = OracleSettings { restarts: 16, exec: ctx.settings.exec, ..OracleSettings::default() };
                let r = probe_oracle_with(&gad(0.25, 0.5)?, &[1.0, 1.0], ctx.seed, &settings)?;
                Ok(Outcome { value: r.value, diagnostics: json!({"seed": ctx.seed, "restarts": settings.restarts}) })
            },
        },
        CaseSpec {
            id: "phase-loss-f-phi-eta0.5",
            description: "phase with loss, single-use bound for the phase alone",
            expected: closed(4.0 * 0.5 / (1.0 + 0.5f64.sqrt()).powi(2), 1e-6),
            run: |ctx| Ok(bound_outcome(single_use_bound_with(&phase_loss(0.0, 0.5)?.single(0), &[1.0], &ctx.settings)?)),
        },
        CaseSpec {
            id: "phase-loss-b-phi-eta0.5",
            description: "phase with loss, SQL bound for the phase alone",
            expected: closed(4.0 * 0.5 / 0.5, 1e-6),
            run: |ctx| Ok(bound_outcome(sql_bound_with(&phase_loss(0.0, 0.5)?.single(0), &[1.0], &ctx.settings)?)),
        },
        CaseSpec {
            id: "phase-loss-i-eta0.5",
            description: "phase with loss, single-use incompatibility cost",
            expected: closed(phase_loss_cost(0.5), 1e-5),
            run: |ctx| cost_outcome(&phase_loss(0.0, 0.5)?, BoundMode::SingleUse, ctx),
        },
        CaseSpec {
            id: "phase-loss-iinf-eta0.5",
            description: "phase with loss, asymptotic incompatibility cost",
            expected: closed(1.0, 1e-6),
            run: |ctx| cost_outcome(&phase_loss(0.0, 0.5)?, BoundMode::Sql, ctx),
        },
        CaseSpec {
            id: "phase-dephasing-i-eta0.6",
            description: "phase with dephasing, single-use incompatibility cost",
            expected: closed(1.0, 1e-6),
            run: |ctx| cost_outcome(&phase_dephasing(0.0, 0.6)?, BoundMode::SingleUse, ctx),
        },
        CaseSpec {
            id: "erasure-iinf-d3",
            description: "erasure Hamiltonian tomography, d=3, eta=0.5, asymptotic cost",
            expected: closed(27.0 / 20.0, 1e-5),
            run: |ctx| {
                let ch = zoo_build(&ZooSpec::new("erasure_tomography", &[("d", 3.0), ("eta", 0.5)]))?;
                cost_outcome(&ch, BoundMode::Sql, ctx)
            },
        },
        CaseSpec {
            id: "multiphase-iinf-p2",
            description: "lossy multi-phase, p=2, asymptotic cost",
            expected: closed(1.0, 1e-5),
            run: |ctx| multiphase(2, ctx),
        },
        CaseSpec {
            id: "multiphase-iinf-p3",
            description: "lossy multi-phase, p=3, asymptotic cost",
            expected: closed(9.0 / 8.0, 1e-5),
            run: |ctx| multiphase(3, ctx),
        },
        CaseSpec {
            id: "multiphase-iinf-p4",
            description: "lossy multi-phase, p=4, asymptotic cost",
            expected: closed(16.0 / 12.0, 1e-5),
            run: |ctx| multiphase(4, ctx),
        },
        CaseSpec {
            id: "grover-deph-bomega-d4",
            description: "Grover oracle frequency under dephasing, d=4, gamma=1, SQL bound per unit time",
            expected: closed(2.0, 1e-6),
            run: |_| Ok(bound_outcome(markovian_sql_bound(&LindbladModel::grover_dephasing(4, 1.0)?, &[1.0; 4])?)),
        },
        CaseSpec {
            id: "grover-erasure-bomega-d2",
            description: "Grover oracle frequency under erasure, d=2, gamma=1, SQL bound per unit time",
            expected: closed(2.0, 1e-6),
            run: |_| Ok(bound_outcome(markovian_sql_bound(&LindbladModel::grover_erasure(2, 1.0)?, &[1.0; 2])?)),
        },
        CaseSpec {
            id: "grover-deph-runtime-dinf",
            description: "Grover runtime per element under dephasing, large-d cap 4/gamma, gamma=omega=1, delta=pi/2",
            expected: closed(PI * PI / 16.0, 1e-9),
            run: |_| {
                let n = 1000;
                let q = speed_limit_queries(&SpeedLimitQuery {
                    num_channels: n,
                    curve: BoundCurve::Constant(4.0),
                    theta_star: 1.0,
                    target: Target::Bures(FRAC_PI_2),
                })?;
                Ok(Outcome { value: q.queries / n as f64, diagnostics: json!({"integral": q.integral}) })
            },
        },
        CaseSpec {
            id: "grover-erasure-runtime-d2",
            description: "Grover runtime per element under erasure, d=2, gamma=omega=1, delta=pi/2",
            expected: closed(PI * PI / 8.0, 1e-6),
            run: |_| {
                let g = grover_runtime_bound(GroverNoise::Erasure, 2, 1.0, 1.0, FRAC_PI_2)?;
                Ok(Outcome { value: g.runtime_per_element, diagnostics: json!({"b_omega": g.b_omega}) })
            },
        },
        CaseSpec {
            id: "trine-helstrom",
            description: "minimum error for the three qubit trine states",
            expected: closed(1.0 / 3.0, 1e-8),
            run: |_| {
                let states = (0..3)
                    .map(|k| {
                        let t = PI * k as f64 / 3.0;
                        DensityMatrix::pure(&CMat::from_column_slice(2, 1, &[cr(t.cos()), cr(t.sin())]))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Outcome { value: helstrom_multi(&Ensemble::uniform(states)?)?, diagnostics: json!({}) })
            },
        },
    ]
}

pub fn find(id: &str) -> Option<CaseSpec> {
    cases().into_iter().find(|c| c.id == id)
}

pub fn run_case(case: &CaseSpec, ctx: &Ctx) -> CaseReport {
    let start = Instant::now();
    let out = (case.run)(ctx);
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    match out {
        Ok(o) => CaseReport {
            case_id: case.id.to_string(),
            value: Some(o.value),
            expected: case.expected,
            pass: case.expected.map(|e| (o.value - e.value).abs() <= e.tol),
            runtime_ms,
            diagnostics: o.diagnostics,
            error: None,
        },
        Err(e) => CaseReport {
            case_id: case.id.to_string(),
            value: None,
            expected: case.expected,
            pass: case.expected.map(|_| false),
            runtime_ms,
            diagnostics: json!({}),
            error: Some(e.to_string()),
        },
    }
}
