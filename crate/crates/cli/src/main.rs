mod input;
mod output;
mod registry;
mod sweep;

use std::f64::consts::FRAC_PI_2;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use qmetro::bounds::{
    default_candidates, finite_n_bound_eval, markovian_sql_bound_with, parallel_bound_eval, rld_bound_weighted,
    single_use_bound_with, sql_bound_with, BoundMode,
};
use qmetro::discrimination::{grover_runtime_bound, speed_limit_queries, BoundCurve, GroverNoise, SpeedLimitQuery, Target};
use qmetro::exec::Exec;
use qmetro::incompat::{incompat_asymptotic, incompat_single_use};
use qmetro::recovery::recover_optimal_state_with;
use qmetro::sdp::SdpSettings;
use serde_json::{json, Value};

use input::ChannelArgs;
use output::{render, OutFormat};

/// Precision bounds for multiparameter estimation with noisy quantum channels.
#[derive(Debug, Parser)]
#[command(name = "qmetro", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[arg(long, global = true, value_enum, default_value = "json")]
    out: OutFormat,
    /// Relative duality-gap tolerance for the SDP solver.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
    /// Seed for randomized computations.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Run every data-parallel loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BoundKind {
    SingleUse,
    Sql,
    FiniteN,
    Parallel,
    Markovian,
    Rld,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum IncompatKind {
    SingleUse,
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RecoverMode {
    SingleUse,
    Sql,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Noise {
    Dephasing,
    Erasure,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Channel-estimation bound on the weighted total QFI.
    Bound {
        #[arg(value_enum)]
        kind: BoundKind,
        #[command(flatten)]
        channel: ChannelArgs,
        /// Number of channel uses (finite-n and parallel).
        #[arg(long, default_value_t = 1)]
        n: u64,
    },
    /// Probe-incompatibility cost with natural weights.
    Incompat {
        #[arg(value_enum)]
        kind: IncompatKind,
        #[command(flatten)]
        channel: ChannelArgs,
    },
    /// Optimal probe state for a single-use or SQL bound.
    Recover {
        #[arg(long, value_enum, default_value = "single-use")]
        mode: RecoverMode,
        #[command(flatten)]
        channel: ChannelArgs,
    },
    /// Query-count lower bound for discriminating channels.
    Speedlimit {
        /// Number of channels to discriminate.
        #[arg(long)]
        channels: usize,
        /// Constant SQL bound along the path.
        #[arg(long)]
        bound: f64,
        #[arg(long)]
        theta_star: f64,
        /// Maximum discrimination error.
        #[arg(long, conflicts_with = "bures", required_unless_present = "bures")]
        error: Option<f64>,
        /// Pairwise Bures angle between the final states.
        #[arg(long)]
        bures: Option<f64>,
    },
    /// Runtime lower bound for noisy Grover search.
    Grover {
        #[arg(long, value_enum)]
        noise: Noise,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        omega: f64,
        #[arg(long, default_value_t = FRAC_PI_2)]
        delta: f64,
    },
    /// Run registered reproduction cases against their reference values.
    Reproduce {
        case_id: Option<String>,
        #[arg(long, conflicts_with = "case_id")]
        all: bool,
        /// List the registered cases.
        #[arg(long, conflicts_with_all = ["case_id", "all"])]
        list: bool,
    },
    /// Evaluate one quantity over a parameter grid.
    Sweep {
        #[arg(long)]
        config: String,
    },
}

fn finite_or_string(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

fn bound(kind: BoundKind, args: &ChannelArgs, n: u64, settings: &SdpSettings) -> Result<Value> {
    if kind == BoundKind::Markovian {
        let model = args.lindblad()?;
        let w = args.weights(model.num_params())?;
        let mut v = markovian_sql_bound_with(&model, &w, settings)?.to_json();
        v["labels"] = json!(model.labels);
        return Ok(v);
    }
    let ch = args.channel()?;
    let w = args.weights(ch.num_params())?;
    let mut v = match kind {
        BoundKind::SingleUse => single_use_bound_with(&ch, &w, settings)?.to_json(),
        BoundKind::Sql => sql_bound_with(&ch, &w, settings)?.to_json(),
        BoundKind::FiniteN | BoundKind::Parallel => {
            let cands = default_candidates(&ch, &w)?;
            let eval = if kind == BoundKind::FiniteN {
                finite_n_bound_eval(&ch, &w, &cands, n)?
            } else {
                parallel_bound_eval(&ch, &w, &cands, n)?
            };
            json!({
                "bound": eval.value,
                "n": n,
                "weights": w,
                "best_candidate": eval.best,
                "per_candidate": eval.per_candidate,
                "non_hermitian_beta": eval.non_hermitian_beta,
            })
        }
        BoundKind::Rld => {
            let r = rld_bound_weighted(&ch, &w)?;
            json!({"bound": finite_or_string(r.value), "finite": r.finite, "leakage": r.leakage, "weights": w})
        }
        BoundKind::Markovian => unreachable!(),
    };
    v["labels"] = json!(ch.labels);
    Ok(v)
}

fn reproduce(case_id: Option<String>, all: bool, list: bool, ctx: &registry::Ctx, out: OutFormat) -> Result<(String, bool)> {
    if list {
        let rows: Vec<Value> = registry::cases()
            .iter()
            .map(|c| json!({"case_id": c.id, "description": c.description, "expected": c.expected}))
            .collect();
        return Ok((emit_rows(&["case_id", "description", "expected"], &rows, out)?, true));
    }
    let selected = match (case_id, all) {
        (Some(id), false) => vec![registry::find(&id).with_context(|| format!("unknown case `{id}`; see --list"))?],
        (None, true) => registry::cases(),
        _ => bail!("give a case id or --all"),
    };
    let reports: Vec<registry::CaseReport> = selected.iter().map(|c| registry::run_case(c, ctx)).collect();
    let failed: Vec<&str> = reports.iter().filter(|r| r.pass == Some(false)).map(|r| r.case_id.as_str()).collect();
    if !failed.is_empty() {
        eprintln!("failing cases: {}", failed.join(", "));
    }
    let text = match out {
        OutFormat::Json => render(
            &json!({"schema_version": sweep::SCHEMA_VERSION, "cases": reports, "failed": failed}),
            OutFormat::Json,
        )?,
        OutFormat::Csv => {
            let rows: Vec<Value> = reports
                .iter()
                .map(|r| {
                    json!({
                        "case_id": r.case_id,
                        "value": r.value,
                        "expected": r.expected.map(|e| e.value),
                        "tol": r.expected.map(|e| e.tol),
                        "pass": r.pass,
                        "runtime_ms": r.runtime_ms,
                        "error": r.error,
                    })
                })
                .collect();
            emit_rows(&["case_id", "value", "expected", "tol", "pass", "runtime_ms", "error"], &rows, out)?
        }
    };
    Ok((text, failed.is_empty()))
}

fn emit_rows(columns: &[&str], rows: &[Value], out: OutFormat) -> Result<String> {
    match out {
        OutFormat::Json => render(&Value::Array(rows.to_vec()), OutFormat::Json),
        OutFormat::Csv => output::csv_table(&columns.iter().map(|c| c.to_string()).collect::<Vec<_>>(), rows),
    }
}

fn run(cli: Cli) -> Result<(String, bool)> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    let settings = SdpSettings { gap_tol: cli.tol, exec, ..SdpSettings::default() };
    let single = |v: Value| -> Result<(String, bool)> { Ok((render(&v, cli.out)?, true)) };
    match cli.cmd {
        Cmd::Bound { kind, channel, n } => single(bound(kind, &channel, n, &settings)?),
        Cmd::Incompat { kind, channel } => {
            let ch = channel.channel()?;
            let r = match kind {
                IncompatKind::SingleUse => incompat_single_use(&ch)?,
                IncompatKind::Asymptotic => incompat_asymptotic(&ch)?,
            };
            single(r.to_json())
        }
        Cmd::Recover { mode, channel } => {
            let ch = channel.channel()?;
            let w = channel.weights(ch.num_params())?;
            let mode = match mode {
                RecoverMode::SingleUse => BoundMode::SingleUse,
                RecoverMode::Sql => BoundMode::Sql,
            };
            single(recover_optimal_state_with(&ch, &w, mode, &settings)?.to_json())
        }
        Cmd::Speedlimit { channels, bound, theta_star, error, bures } => {
            let target = match (error, bures) {
                (Some(e), None) => Target::Error(e),
                (None, Some(d)) => Target::Bures(d),
                _ => bail!("give exactly one of --error and --bures"),
            };
            let q = speed_limit_queries(&SpeedLimitQuery {
                num_channels: channels,
                curve: BoundCurve::Constant(bound),
                theta_star,
                target,
            })?;
            if let Some(w) = &q.warning {
                eprintln!("warning: {w}");
            }
            single(json!({
                "queries": q.queries,
                "integral": if q.integral.is_finite() { json!(q.integral) } else { Value::Null },
                "target": target,
                "warning": q.warning,
            }))
        }
        Cmd::Grover { noise, d, gamma, omega, delta } => {
            let noise = match noise {
                Noise::Dephasing => GroverNoise::Dephasing,
                Noise::Erasure => GroverNoise::Erasure,
            };
            let g = grover_runtime_bound(noise, d, gamma, omega, delta)?;
            single(json!({
                "noise": noise,
                "d": d,
                "gamma": gamma,
                "omega": omega,
                "delta": delta,
                "b_omega": g.b_omega,
                "runtime_per_element": g.runtime_per_element,
                "runtime": g.runtime,
            }))
        }
        Cmd::Reproduce { case_id, all, list } => {
            reproduce(case_id, all, list, &registry::Ctx { settings, seed: cli.seed }, cli.out)
        }
        Cmd::Sweep { config } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("reading {config}"))?;
            let cfg = sweep::SweepConfig::parse(&text)?;
            let rows = sweep::run(&cfg, &settings);
            let failed: Vec<String> =
                rows.iter().filter(|r| !r["error"].is_null()).map(|r| r["index"].to_string()).collect();
            if !failed.is_empty() {
                eprintln!("failed rows: {}", failed.join(", "));
            }
            let text = match cli.out {
                OutFormat::Json => render(&json!({"schema_version": sweep::SCHEMA_VERSION, "rows": rows}), OutFormat::Json)?,
                OutFormat::Csv => output::csv_table(&cfg.columns(), &rows)?,
            };
            Ok((text, failed.is_empty()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok((text, ok)) => {
            print!("{text}");
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
