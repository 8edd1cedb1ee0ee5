//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Reference values are closed forms or published numbers; the
//! randomized criteria use fixed seeds.

use std::f64::consts::{FRAC_PI_2, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DVector;
use qmetro::bounds::{
    markovian_sql_bound, rld_bound, rld_bound_weighted, single_use_bound, sql_bound, sum_of_singles, BoundMode,
    SinglesMode,
};
use qmetro::channel::{
    gad, phase_dephasing, phase_loss, random_channel_family, zoo_build, LindbladModel, ParamChannel, ZooSpec,
};
use qmetro::discrimination::{
    helstrom_multi, pairwise_error_lower_bound, speed_limit_queries, BoundCurve, Ensemble, SpeedLimitQuery, Target,
};
use qmetro::error::Error;
use qmetro::exec::Exec;
use qmetro::incompat::incompat_cost;
use qmetro::linalg::{c, identity, kron, operator_norm, sylvester_sld, sym_min_eig, CMat};
use qmetro::random::{random_cmat, random_density, random_hermitian, random_pure, random_unitary, rng};
use qmetro::recovery::{recover_optimal_state, RESIDUAL_TOL};
use qmetro::sdp::SdpSettings;
use qmetro::state::{
    bures_angle, fidelity, partial_trace_b, probe_oracle_max_total_qfi, purify, qfi_matrix_purification,
    qfi_matrix_sld, total_output_qfi, trace_distance, DensityMatrix, StateModel,
};
use rand::Rng;

type Outcome = Result<String, String>;

const ETA_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

/// Collects failures instead of stopping at the first one.
#[derive(Default)]
struct Checks {
    count: usize,
    failures: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.count += 1;
        if !ok {
            self.failures.push(what());
        }
    }

    fn abs(&mut self, label: &str, got: f64, want: f64, tol: f64) {
        self.check((got - want).abs() <= tol, || format!("{label}: got {got:.12}, want {want:.12} (abs tol {tol:e})"));
    }

    fn rel(&mut self, label: &str, got: f64, want: f64, tol: f64) {
        self.check(rel_err(got, want) <= tol, || format!("{label}: got {got:.12}, want {want:.12} (rel tol {tol:e})"));
    }

    fn finish(self, summary: String) -> Outcome {
        if self.failures.is_empty() {
            Ok(format!("{} checks; {summary}", self.count))
        } else {
            let shown: Vec<&str> = self.failures.iter().take(3).map(String::as_str).collect();
            Err(format!("{}/{} checks failed; {}", self.failures.len(), self.count, shown.join("; ")))
        }
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn gad_triple() -> Outcome {
    let start = Instant::now();
    let ch = gad(0.25, 0.5).map_err(err)?;
    let w = [1.0, 1.0];
    let f = single_use_bound(&ch, &w).map_err(err)?.value;
    let s = sum_of_singles(&ch, &w, SinglesMode::SingleUse).map_err(err)?;
    let r = rld_bound(&ch);
    let elapsed = start.elapsed().as_secs_f64();
    let mut k = Checks::default();
    k.abs("joint single-use", f, 3.84, 0.01);
    k.abs("sum of singles", s, 4.72, 0.01);
    k.check(r.finite, || "RLD bound is infinite".into());
    k.abs("RLD", r.value, 10.67, 0.01);
    k.check(f < s && s < r.value, || format!("ordering violated: {f} {s} {}", r.value));
    k.check(elapsed < 5.0, || format!("runtime {elapsed:.2} s >= 5 s"));
    k.finish(format!("{f:.4} < {s:.4} < {:.4} in {elapsed:.2} s", r.value))
}

/// The four single-parameter bounds of a two-parameter channel.
fn singles(ch: &ParamChannel) -> Result<[f64; 4], String> {
    let f = |x| single_use_bound(&ch.single(x), &[1.0]).map(|b| b.value).map_err(err);
    let b = |x| sql_bound(&ch.single(x), &[1.0]).map(|b| b.value).map_err(err);
    Ok([f(0)?, b(0)?, f(1)?, b(1)?])
}

fn costs(ch: &ParamChannel) -> Result<(f64, f64), String> {
    let s = SdpSettings::default();
    let i = incompat_cost(ch, BoundMode::SingleUse, &s).map_err(err)?.cost;
    let i_inf = incompat_cost(ch, BoundMode::Sql, &s).map_err(err)?.cost;
    Ok((i, i_inf))
}

fn phase_loss_closed_forms() -> Outcome {
    let mut k = Checks::default();
    for eta in ETA_GRID {
        let ch = phase_loss(0.0, eta).map_err(err)?;
        let [f_phi, b_phi, f_eta, b_eta] = singles(&ch)?;
        let s = eta.sqrt();
        k.rel(&format!("F_phi eta={eta}"), f_phi, 4.0 * eta / (1.0 + s).powi(2), 1e-6);
        k.rel(&format!("B_phi eta={eta}"), b_phi, 4.0 * eta / (1.0 - eta), 1e-6);
        k.rel(&format!("F_eta eta={eta}"), f_eta, 1.0 / (eta * (1.0 - eta)), 1e-6);
        k.rel(&format!("B_eta eta={eta}"), b_eta, 1.0 / (eta * (1.0 - eta)), 1e-6);
        let (i, i_inf) = costs(&ch)?;
        let want = 2.0 * ((1.0 - eta) / (eta + s - (2.0 * (1.0 + s)).sqrt())).powi(2);
        k.abs(&format!("I eta={eta}"), i, want, 1e-5);
        k.abs(&format!("I_inf eta={eta}"), i_inf, 1.0, 1e-6);
    }
    k.finish(format!("eta grid of {}", ETA_GRID.len()))
}

fn phase_dephasing_closed_forms() -> Outcome {
    let mut k = Checks::default();
    for eta in ETA_GRID {
        let ch = phase_dephasing(0.0, eta).map_err(err)?;
        let [f_phi, b_phi, f_eta, _] = singles(&ch)?;
        let e2 = eta * eta;
        k.abs(&format!("F_phi eta={eta}"), f_phi, e2, 1e-6);
        k.abs(&format!("B_phi eta={eta}"), b_phi, e2 / (1.0 - e2), 1e-6);
        k.abs(&format!("F_eta eta={eta}"), f_eta, 1.0 / (1.0 - e2), 1e-6);
        let (i, i_inf) = costs(&ch)?;
        k.abs(&format!("I eta={eta}"), i, 1.0, 1e-6);
        k.abs(&format!("I_inf eta={eta}"), i_inf, 1.0, 1e-6);
    }
    k.finish(format!("eta grid of {}", ETA_GRID.len()))
}

fn erasure_tomography() -> Outcome {
    let mut k = Checks::default();
    let mut spread: f64 = 0.0;
    for d in [2usize, 3, 4] {
        let df = d as f64;
        let want_cost = df.powi(3) / (2.0 * (df * df + df - 2.0));
        let mut seen = Vec::new();
        for eta in [0.2, 0.5, 0.8] {
            let ch = zoo_build(&ZooSpec::new("erasure_tomography", &[("d", df), ("eta", eta)])).map_err(err)?;
            let w = vec![1.0; ch.num_params()];
            let b = sql_bound(&ch, &w).map_err(err)?.value;
            let want = eta / (1.0 - eta) * (4.0 * (df - 1.0) / df + 2.0 * (df - 1.0));
            k.rel(&format!("sql d={d} eta={eta}"), b, want, 1e-5);
            let (_, i_inf) = costs(&ch)?;
            k.abs(&format!("I_inf d={d} eta={eta}"), i_inf, want_cost, 1e-5);
            seen.push(i_inf);
        }
        let lo = seen.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = seen.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        spread = spread.max(hi - lo);
        k.check(hi - lo <= 1e-5, || format!("I_inf varies with eta at d={d}: {seen:?}"));
    }
    k.finish(format!("max eta spread of I_inf {spread:.1e}"))
}

fn lossy_multiphase() -> Outcome {
    let mut k = Checks::default();
    let mut shift: f64 = 0.0;
    for p in [2usize, 3, 4] {
        let pf = p as f64;
        let base = ZooSpec::new("lossy_multiphase", &[("p", pf), ("eta", 0.7)]);
        let ch = zoo_build(&base).map_err(err)?;
        let (_, i_inf) = costs(&ch)?;
        k.abs(&format!("I_inf p={p}"), i_inf, pf * pf / (4.0 * (pf - 1.0)), 1e-5);
        let mut wider = base.clone();
        wider.params.insert("extra_modes".into(), 1.0);
        let ch2 = zoo_build(&wider).map_err(err)?;
        let w = vec![1.0; p];
        let b1 = sql_bound(&ch, &w).map_err(err)?.value;
        let b2 = sql_bound(&ch2, &w).map_err(err)?.value;
        shift = shift.max((b1 - b2).abs());
        k.abs(&format!("extra mode p={p}"), b2, b1, 1e-6);
    }
    k.finish(format!("largest extra-mode shift {shift:.1e}"))
}

fn grover() -> Outcome {
    let mut k = Checks::default();
    for gamma in [1.0, 0.5] {
        for d in 2usize..=6 {
            let df = d as f64;
            let w = vec![1.0; d];
            let deph = markovian_sql_bound(&LindbladModel::grover_dephasing(d, gamma).map_err(err)?, &w).map_err(err)?;
            k.abs(&format!("dephasing d={d} gamma={gamma}"), deph.value, 4.0 * (df - 1.0) / (gamma * (df + 2.0)), 1e-6);
            let er = markovian_sql_bound(&LindbladModel::grover_erasure(d, gamma).map_err(err)?, &w).map_err(err)?;
            k.abs(&format!("erasure d={d} gamma={gamma}"), er.value, 4.0 * (df - 1.0) / (df * gamma), 1e-6);
        }
    }
    // Large-d cap 𝔅_ω → 4/γ of the dephasing bound.
    let n = 1000usize;
    for (gamma, omega) in [(1.0, 1.0), (0.5, 2.0), (3.0, 0.25)] {
        let q = speed_limit_queries(&SpeedLimitQuery {
            num_channels: n,
            curve: BoundCurve::Constant(4.0 / gamma),
            theta_star: omega,
            target: Target::Bures(FRAC_PI_2),
        })
        .map_err(err)?;
        let want = n as f64 * gamma * PI * PI / (16.0 * omega * omega);
        k.abs(&format!("runtime cap gamma={gamma} omega={omega}"), q.queries, want, 1e-9);
    }
    k.finish("d = 2..6, gamma in {1, 0.5}".into())
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let trials: Vec<Result<(f64, f64), String>> = (0..20u64)
        .map(|seed| {
            let mut r = rng(1000 + seed);
            let dout = r.random_range(2..=3usize);
            let rank = r.random_range(1..=3usize);
            let ch = random_channel_family(&mut r, 2, dout, rank, 2);
            let w = [1.0, r.random_range(0.2..2.0)];
            let b = single_use_bound(&ch, &w).map_err(err)?.value;
            let o = probe_oracle_max_total_qfi(&ch, &w, 16, seed).map_err(err)?.value;
            Ok((b, o))
        })
        .collect();
    let elapsed = start.elapsed().as_secs_f64();
    let mut k = Checks::default();
    let mut worst: f64 = 0.0;
    for (i, t) in trials.into_iter().enumerate() {
        let (b, o) = t?;
        worst = worst.max((b - o).abs() / (1.0 + b));
        k.check((b - o).abs() <= 1e-3 * (1.0 + b), || format!("channel {i}: bound {b:.8}, oracle {o:.8}"));
    }
    k.check(elapsed < 60.0, || format!("runtime {elapsed:.1} s >= 60 s"));
    k.finish(format!("worst scaled gap {worst:.1e} in {elapsed:.1} s"))
}

/// Random mixed-state model from a random purification `ψ` on system ⊗
/// ancilla with a random derivative.
fn random_model(r: &mut impl Rng, n: usize, na: usize, p: usize) -> Result<(StateModel, CMat, Vec<CMat>), String> {
    let psi = random_pure(r, n * na);
    // Removing the component along ψ keeps ∂ρ traceless.
    let jac: Vec<CMat> = (0..p)
        .map(|_| {
            let d = random_cmat(r, n * na, 1);
            let along = (psi.adjoint() * &d)[(0, 0)].re;
            d - &psi * c(along, 0.0)
        })
        .collect();
    let rho = partial_trace_b(&(&psi * psi.adjoint()), n, na);
    let drho = jac
        .iter()
        .map(|d| partial_trace_b(&(d * psi.adjoint() + &psi * d.adjoint()), n, na))
        .collect();
    let model = StateModel::new(DensityMatrix::new(rho).map_err(err)?, drho).map_err(err)?;
    Ok((model, psi, jac))
}

fn columns(cols: &[CMat]) -> CMat {
    CMat::from_fn(cols[0].nrows(), cols.len(), |i, j| cols[j][(i, 0)])
}

fn purification_qfi() -> Outcome {
    let mut k = Checks::default();
    let mut worst_eq: f64 = 0.0;
    let mut worst_slack = f64::INFINITY;
    for seed in 0..50u64 {
        let mut r = rng(7000 + seed);
        let n = r.random_range(2..=3usize);
        let p = r.random_range(1..=3usize);
        let (model, psi_rand, jac_rand) = random_model(&mut r, n, n, p)?;
        let sld = qfi_matrix_sld(&model, 1e-12).real;

        // Optimal purification: ψ0 = Σ √λ_i |e_i⟩|i⟩, ∂ψ0 = ½ (L ⊗ I) ψ0.
        let rho = model.rho.mat();
        let psi0 = CMat::from_column_slice(n * n, 1, purify(rho).as_slice());
        let ls: Vec<CMat> = model.drho.iter().map(|d| sylvester_sld(rho, d, None)).collect::<Result<_, _>>().map_err(err)?;
        let jac0: Vec<CMat> = ls.iter().map(|l| kron(l, &identity(n)) * &psi0 * c(0.5, 0.0)).collect();
        for (x, (j, d)) in jac0.iter().zip(&model.drho).enumerate() {
            let back = partial_trace_b(&(j * psi0.adjoint() + &psi0 * j.adjoint()), n, n);
            k.check((back - d).norm() < 1e-9, || format!("seed {seed}: optimal purification misses drho[{x}]"));
        }
        let f0 = qfi_matrix_purification(&columns(&jac0), &psi0);
        let dev = (&f0 - &sld).abs().max();
        worst_eq = worst_eq.max(dev);
        k.check(dev <= 1e-6, || format!("seed {seed}: SLD vs optimal purification differ by {dev:.2e}"));

        // Other purifications of the same model: the generating one, and
        // (I ⊗ U)(∂ψ0 + (I ⊗ iH_x) ψ0) for random U and Hermitian H_x.
        let mut cands = vec![(psi_rand, jac_rand)];
        for _ in 0..4 {
            let u = kron(&identity(n), &random_unitary(&mut r, n));
            let jac = jac0
                .iter()
                .map(|j| &u * (j + kron(&identity(n), &random_hermitian(&mut r, n)) * &psi0 * c(0.0, 1.0)))
                .collect();
            cands.push((&u * &psi0, jac));
        }
        for (psi, jac) in &cands {
            let f = qfi_matrix_purification(&columns(jac), psi);
            let slack = sym_min_eig(&(f - &sld));
            worst_slack = worst_slack.min(slack);
            k.check(slack >= -1e-9, || format!("seed {seed}: purification slack {slack:.2e}"));
        }
    }
    k.finish(format!("max |F_SLD − F_opt| {worst_eq:.1e}, min PSD slack {worst_slack:.1e}"))
}

const TRIALS: u64 = 200;

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// Per-trial result: `Ok(None)` on success, `Ok(Some(msg))` on a violation.
fn run_trials(exec: Exec, base: u64, f: impl Fn(u64) -> Result<Option<String>, String> + Sync + Send) -> Result<Vec<String>, String> {
    let out = exec.map(TRIALS as usize, |i| f(base + i as u64));
    let mut bad = Vec::new();
    for o in out {
        if let Some(m) = o? {
            bad.push(m);
        }
    }
    Ok(bad)
}

fn property_suites() -> Outcome {
    let exec = Exec::Parallel;
    let mut suites: Vec<(&str, Vec<String>)> = Vec::new();

    suites.push((
        "sandwich",
        run_trials(exec, 10_000, |seed| {
            let mut r = rng(seed);
            let (p, n, kk) = (r.random_range(1..4usize), r.random_range(1..5usize), r.random_range(1..4usize));
            let mut lhs = CMat::zeros(n, n);
            let mut gram = CMat::zeros(n, n);
            let mut amax: f64 = 0.0;
            for _ in 0..p {
                let a = random_hermitian(&mut r, n);
                amax = amax.max(operator_norm(&a).map_err(err)?);
                for _ in 0..kk {
                    let l = random_cmat(&mut r, n, n);
                    lhs += l.adjoint() * &a * &l;
                    gram += l.adjoint() * &l;
                }
            }
            let (a, b) = (operator_norm(&lhs).map_err(err)?, amax * operator_norm(&gram).map_err(err)?);
            Ok((a > b * (1.0 + 1e-10)).then(|| format!("sandwich seed {seed}: {a} > {b}")))
        })?,
    ));

    suites.push((
        "tensor-square",
        run_trials(exec, 20_000, |seed| {
            let mut r = rng(seed);
            let (p, n) = (r.random_range(1..4usize), r.random_range(1..4usize));
            let mut lhs = CMat::zeros(n * n, n * n);
            let mut rhs = CMat::zeros(n, n);
            for _ in 0..p {
                let a = random_hermitian(&mut r, n);
                lhs += kron(&a, &a);
                rhs += &a * &a;
            }
            let (a, b) = (operator_norm(&lhs).map_err(err)?, operator_norm(&rhs).map_err(err)?);
            Ok((a > b * (1.0 + 1e-10)).then(|| format!("tensor-square seed {seed}: {a} > {b}")))
        })?,
    ));

    suites.push((
        "fidelity-trace-distance",
        run_trials(exec, 30_000, |seed| {
            let mut r = rng(seed);
            let n = r.random_range(2..5usize);
            let (k1, k2) = (r.random_range(1..=n), r.random_range(1..=n));
            let s1 = DensityMatrix::new(random_density(&mut r, n, k1)).map_err(err)?;
            let s2 = DensityMatrix::new(random_density(&mut r, n, k2)).map_err(err)?;
            let f = fidelity(&s1, &s2).map_err(err)?;
            let d = trace_distance(&s1, &s2).map_err(err)?;
            let a = bures_angle(&s1, &s2).map_err(err)?;
            let ok = 1.0 - f <= d + 1e-10 && d <= (1.0 - f * f).max(0.0).sqrt() + 1e-10 && (0.0..=FRAC_PI_2 + 1e-12).contains(&a);
            Ok((!ok).then(|| format!("fidelity seed {seed}: F={f} D={d}")))
        })?,
    ));

    suites.push((
        "pairwise-below-helstrom",
        run_trials(exec, 40_000, |seed| {
            let mut r = rng(seed);
            let (p, n) = (r.random_range(2..5usize), r.random_range(2..5usize));
            let states = (0..p)
                .map(|_| {
                    let rank = r.random_range(1..=n);
                    DensityMatrix::new(random_density(&mut r, n, rank))
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(err)?;
            let raw: Vec<f64> = (0..p).map(|_| r.random_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let ens = Ensemble::new(states, raw.iter().map(|v| v / total).collect()).map_err(err)?;
            let (lb, h) = (pairwise_error_lower_bound(&ens).map_err(err)?, helstrom_multi(&ens).map_err(err)?);
            Ok((lb > h + 1e-8).then(|| format!("pairwise seed {seed}: {lb} > {h}")))
        })?,
    ));

    suites.push((
        "kraus-gauge",
        run_trials(exec, 50_000, |seed| {
            let mut r = rng(seed);
            let rank = r.random_range(2..4usize);
            let ch = random_channel_family(&mut r, 2, 2, rank, 2);
            let mixed = ch.kraus_mixed(&random_unitary(&mut r, rank));
            let w = [1.0, r.random_range(0.2..2.0)];
            let (a, b) = (single_use_bound(&ch, &w).map_err(err)?.value, single_use_bound(&mixed, &w).map_err(err)?.value);
            if !rel_close(a, b, 1e-8) {
                return Ok(Some(format!("gauge seed {seed}: single-use {a} vs {b}")));
            }
            match (sql_bound(&ch, &w), sql_bound(&mixed, &w)) {
                (Ok(a), Ok(b)) if !rel_close(a.value, b.value, 1e-8) => {
                    return Ok(Some(format!("gauge seed {seed}: sql {} vs {}", a.value, b.value)));
                }
                (Ok(_), Ok(_)) | (Err(Error::HeisenbergPossible { .. }), Err(Error::HeisenbergPossible { .. })) => {}
                (x, y) => return Ok(Some(format!("gauge seed {seed}: sql outcomes differ: {x:?} / {y:?}"))),
            }
            let (ra, rb) = (rld_bound_weighted(&ch, &w).map_err(err)?, rld_bound_weighted(&mixed, &w).map_err(err)?);
            if ra.finite != rb.finite || (ra.finite && !rel_close(ra.value, rb.value, 1e-8)) {
                return Ok(Some(format!("gauge seed {seed}: rld {} vs {}", ra.value, rb.value)));
            }
            Ok(None)
        })?,
    ));

    suites.push((
        "triangle",
        run_trials(exec, 60_000, |seed| {
            let mut r = rng(seed);
            let ch = random_channel_family(&mut r, 2, 2, 3, 2);
            let w = [r.random_range(0.1..2.0), r.random_range(0.1..2.0)];
            let f = single_use_bound(&ch, &w).map_err(err)?.value;
            let fs = sum_of_singles(&ch, &w, SinglesMode::SingleUse).map_err(err)?;
            if f > fs * (1.0 + 1e-7) {
                return Ok(Some(format!("triangle seed {seed}: F {f} > {fs}")));
            }
            match sql_bound(&ch, &w) {
                Ok(b) => {
                    let bs = sum_of_singles(&ch, &w, SinglesMode::Sql).map_err(err)?;
                    Ok((b.value > bs * (1.0 + 1e-7)).then(|| format!("triangle seed {seed}: B {} > {bs}", b.value)))
                }
                Err(Error::HeisenbergPossible { .. }) => Ok(None),
                Err(e) => Err(err(e)),
            }
        })?,
    ));

    let mut k = Checks::default();
    for (name, bad) in &suites {
        k.check(bad.is_empty(), || format!("{name}: {} violations, first: {}", bad.len(), bad[0]));
    }
    let names: Vec<&str> = suites.iter().map(|s| s.0).collect();
    k.finish(format!("{TRIALS} trials each: {}", names.join(", ")))
}

fn zoo_recovery() -> Outcome {
    let specs = [
        ZooSpec::new("erasure_tomography", &[("d", 2.0), ("eta", 0.5)]),
        ZooSpec::new("erasure_tomography", &[("d", 3.0), ("eta", 0.5)]).with_submodel("diag"),
        ZooSpec::new("lossy_multiphase", &[("p", 2.0), ("eta", 0.7)]),
        ZooSpec::new("gad", &[("nu", 0.25), ("gamma", 0.5)]),
        ZooSpec::new("phase_loss", &[("eta", 0.5)]),
        ZooSpec::new("phase_dephasing", &[("eta", 0.6)]),
        ZooSpec::new("qudit_dephasing_unitary", &[("d", 2.0), ("eta", 0.7)]),
        ZooSpec::new("unitary_family", &[("d", 2.0)]),
    ];
    let mut k = Checks::default();
    let mut worst_gap: f64 = 0.0;
    let mut worst_res: f64 = 0.0;
    for spec in &specs {
        let ch = zoo_build(spec).map_err(err)?;
        let w = vec![1.0; ch.num_params()];
        let rec = match recover_optimal_state(&ch, &w, BoundMode::SingleUse) {
            Ok(rec) => rec,
            Err(e) => {
                k.check(false, || format!("{}: recovery failed: {e}", spec.name));
                continue;
            }
        };
        let v = rec.bound.value;
        let probe: DVector<_> = purify(rec.rho_star.mat());
        let got = total_output_qfi(&ch, &w, &probe, ch.dim_in);
        worst_gap = worst_gap.max((got - v).abs() / (1.0 + v));
        worst_res = worst_res.max(rec.constraint_residual);
        k.abs(&format!("{} probe QFI", spec.name), got, v, 1e-5 * (1.0 + v));
        k.check(rec.constraint_residual <= RESIDUAL_TOL, || {
            format!("{}: residual {:.2e}", spec.name, rec.constraint_residual)
        });
    }
    k.finish(format!("{} channels, worst scaled gap {worst_gap:.1e}, worst residual {worst_res:.1e}", specs.len()))
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("generalized amplitude damping triple", gad_triple),
        ("phase with loss closed forms", phase_loss_closed_forms),
        ("phase with dephasing closed forms", phase_dephasing_closed_forms),
        ("erasure Hamiltonian tomography", erasure_tomography),
        ("lossy multi-phase", lossy_multiphase),
        ("Grover oracle bounds and runtime cap", grover),
        ("single-use bound is attained by a probe", oracle_equivalence),
        ("purification QFI matrix", purification_qfi),
        ("randomized inequality suites", property_suites),
        ("optimal-state recovery on the zoo", zoo_recovery),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match out {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.2} s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.2} s): {detail}", i + 1);
            }
        }
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
