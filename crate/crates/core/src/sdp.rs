//! Dense primal-dual interior-point solver for linear matrix inequalities.
//!
//! The user-facing problem is
//!
//! ```text
//! minimize    cᵀy
//! subject to  F0_b + Σ_i y_i F_{b,i} ⪰ 0     for every block b
//!             a_kᵀy = r_k                     for every equality k
//! ```
//!
//! Equalities are removed first by nullspace elimination, computed per
//! connected component of the equality graph so that a reduced variable keeps
//! touching only the blocks its original variables touched. The reduced
//! problem is the dual of a standard-form SDP and is solved by an
//! infeasible-start Mehrotra predictor-corrector method with Nesterov–Todd
//! scaling.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::linalg::{lstsq, null_space, svd, real_embed, rtrace_prod, sym_eig, sym_min_eig, CMat, RMat};

/// One affine symmetric block `F0 + Σ y_i F_i ⪰ 0`.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub dim: usize,
    pub constant: RMat,
    pub terms: Vec<(usize, RMat)>,
}

impl LmiBlock {
    pub fn new(dim: usize) -> Self {
        LmiBlock {
            dim,
            constant: RMat::zeros(dim, dim),
            terms: Vec::new(),
        }
    }

    /// Real embedding of a Hermitian affine map; PSD-equivalent to the
    /// complex block when every matrix is Hermitian.
    pub fn from_hermitian(constant: &CMat, terms: &[(usize, CMat)]) -> Self {
        let dim = 2 * constant.nrows();
        LmiBlock {
            dim,
            constant: real_embed(constant),
            terms: terms.iter().map(|(i, m)| (*i, real_embed(m))).collect(),
        }
    }

    pub fn add_term(&mut self, var: usize, m: RMat) {
        self.terms.push((var, m));
    }

    /// Evaluates `F0 + Σ y_i F_i`.
    pub fn eval(&self, y: &[f64]) -> RMat {
        let mut s = self.constant.clone();
        for (i, f) in &self.terms {
            if y[*i] != 0.0 {
                s += f * y[*i];
            }
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct LinearEq {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub blocks: Vec<LmiBlock>,
    pub equalities: Vec<LinearEq>,
}

impl SdpProblem {
    pub fn new(num_vars: usize) -> Self {
        SdpProblem {
            num_vars,
            objective: vec![0.0; num_vars],
            blocks: Vec::new(),
            equalities: Vec::new(),
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.objective.len() != self.num_vars {
            return Err(format!(
                "objective has length {}, expected {}",
                self.objective.len(),
                self.num_vars
            ));
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err("objective has non-finite entries".into());
        }
        for (b, blk) in self.blocks.iter().enumerate() {
            let mats = std::iter::once(&blk.constant).chain(blk.terms.iter().map(|(_, m)| m));
            for m in mats {
                if m.shape() != (blk.dim, blk.dim) {
                    return Err(format!("block {b}: matrix shape {:?} != dim {}", m.shape(), blk.dim));
                }
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(format!("block {b}: non-finite entries"));
                }
                let asym = (m - m.transpose()).amax();
                if asym > 1e-9 * (1.0 + m.amax()) {
                    return Err(format!("block {b}: matrix not symmetric ({asym:.2e})"));
                }
            }
            if let Some((i, _)) = blk.terms.iter().find(|(i, _)| *i >= self.num_vars) {
                return Err(format!("block {b}: variable {i} out of range"));
            }
        }
        for (k, eq) in self.equalities.iter().enumerate() {
            if eq.coeffs.iter().any(|(i, _)| *i >= self.num_vars) {
                return Err(format!("equality {k}: variable out of range"));
            }
            if !eq.rhs.is_finite() || eq.coeffs.iter().any(|(_, v)| !v.is_finite()) {
                return Err(format!("equality {k}: non-finite entries"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub y: Vec<f64>,
    /// `cᵀy` at the returned point.
    pub primal_objective: f64,
    /// Lower bound on the optimum from the dual iterate.
    pub dual_objective: f64,
    pub duality_gap: f64,
    pub max_eq_residual: f64,
    /// Smallest eigenvalue over all blocks evaluated at `y`.
    pub min_block_eig: f64,
    pub iterations: usize,
    /// Dual matrices, one per block (the multipliers of the LMIs).
    pub dual: Vec<RMat>,
}

#[derive(Debug, Clone, Copy)]
pub struct SdpSettings {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
    pub exec: Exec,
}

impl Default for SdpSettings {
    fn default() -> Self {
        SdpSettings {
            gap_tol: 1e-9,
            feas_tol: 1e-8,
            max_iter: 200,
            exec: Exec::Parallel,
        }
    }
}

/// Solves with default settings and the given gap tolerance.
pub fn solve(problem: &SdpProblem, gap_tol: f64) -> Result<SdpSolution, String> {
    let settings = SdpSettings {
        gap_tol,
        ..SdpSettings::default()
    };
    solve_with(problem, &settings)
}

pub fn solve_with(problem: &SdpProblem, settings: &SdpSettings) -> Result<SdpSolution, String> {
    problem.validate()?;
    if !(settings.gap_tol > 0.0) {
        return Err("gap_tol must be positive".into());
    }
    let red = match Reduction::build(problem) {
        Some(r) => r,
        None => {
            return Ok(trivial(problem, SdpStatus::Infeasible, vec![0.0; problem.num_vars]));
        }
    };
    let core = red.core_problem(problem);
    if core.unbounded {
        let y = red.lift(&vec![0.0; red.num_reduced]);
        return Ok(trivial(problem, SdpStatus::Unbounded, y));
    }
    let out = ipm(&core, settings);
    let mut z = vec![0.0; red.num_reduced];
    for (k, &j) in core.active.iter().enumerate() {
        z[j] = out.z[k];
    }
    let y = red.lift(&z);
    let mut sol = finish(problem, out.status, y, out.dual, out.iterations);
    sol.dual_objective = out.dual_objective + core.offset;
    sol.duality_gap = (sol.primal_objective - sol.dual_objective).max(0.0);
    if sol.status == SdpStatus::Optimal
        && (sol.min_block_eig < -1e-8 || sol.max_eq_residual > 1e-8 || sol.duality_gap > gap_bound(settings.gap_tol, sol.primal_objective))
    {
        sol.status = SdpStatus::MaxIter;
    }
    Ok(sol)
}

fn gap_bound(tol: f64, obj: f64) -> f64 {
    tol * (1.0 + obj.abs())
}

fn trivial(problem: &SdpProblem, status: SdpStatus, y: Vec<f64>) -> SdpSolution {
    let mut s = finish(problem, status, y, vec![], 0);
    s.dual_objective = match status {
        SdpStatus::Unbounded => f64::NEG_INFINITY,
        SdpStatus::Infeasible => f64::INFINITY,
        _ => s.primal_objective,
    };
    s.duality_gap = if status == SdpStatus::Optimal { 0.0 } else { f64::INFINITY };
    s
}

fn finish(problem: &SdpProblem, status: SdpStatus, y: Vec<f64>, dual: Vec<RMat>, iterations: usize) -> SdpSolution {
    let primal_objective = problem.objective.iter().zip(&y).map(|(c, v)| c * v).sum();
    let max_eq_residual = problem
        .equalities
        .iter()
        .map(|e| (e.coeffs.iter().map(|(i, a)| a * y[*i]).sum::<f64>() - e.rhs).abs())
        .fold(0.0, f64::max);
    let min_block_eig = problem
        .blocks
        .iter()
        .map(|b| sym_min_eig(&b.eval(&y)))
        .fold(f64::INFINITY, f64::min);
    SdpSolution {
        status,
        y,
        primal_objective,
        dual_objective: f64::NAN,
        duality_gap: f64::NAN,
        max_eq_residual,
        min_block_eig: if min_block_eig.is_finite() { min_block_eig } else { 0.0 },
        iterations,
        dual,
    }
}

/// Affine reparametrisation `y = y0 + N z` of the equality-feasible set.
struct Reduction {
    y0: Vec<f64>,
    /// For each reduced variable, its sparse column of `N`.
    columns: Vec<Vec<(usize, f64)>>,
    num_reduced: usize,
}

struct CoreProblem {
    /// Reduced variables that touch at least one block.
    active: Vec<usize>,
    cost: Vec<f64>,
    blocks: Vec<CoreBlock>,
    offset: f64,
    unbounded: bool,
}

struct CoreBlock {
    f0: RMat,
    /// (index into `active`, matrix)
    terms: Vec<(usize, RMat)>,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

impl Reduction {
    fn build(problem: &SdpProblem) -> Option<Self> {
        let n = problem.num_vars;
        let mut parent: Vec<usize> = (0..n).collect();
        for eq in &problem.equalities {
            let mut it = eq.coeffs.iter().filter(|(_, a)| *a != 0.0);
            if let Some(&(first, _)) = it.next() {
                for &(i, _) in it {
                    let (a, b) = (find(&mut parent, first), find(&mut parent, i));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
        let mut comp_vars: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            let r = find(&mut parent, i);
            comp_vars[r].push(i);
        }
        let mut comp_eqs: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (k, eq) in problem.equalities.iter().enumerate() {
            match eq.coeffs.iter().find(|(_, a)| *a != 0.0) {
                Some(&(i, _)) => {
                    let r = find(&mut parent, i);
                    comp_eqs[r].push(k);
                }
                None => {
                    if eq.rhs.abs() > 1e-12 {
                        return None;
                    }
                }
            }
        }
        let mut y0 = vec![0.0; n];
        let mut columns = Vec::new();
        for r in 0..n {
            let vars = &comp_vars[r];
            if vars.is_empty() {
                continue;
            }
            let eqs = &comp_eqs[r];
            if eqs.is_empty() {
                for &i in vars {
                    columns.push(vec![(i, 1.0)]);
                }
                continue;
            }
            let pos = |i: usize| vars.binary_search(&i).expect("variable in component");
            let mut a = RMat::zeros(eqs.len(), vars.len());
            let mut rhs = DVector::zeros(eqs.len());
            for (row, &k) in eqs.iter().enumerate() {
                for &(i, v) in &problem.equalities[k].coeffs {
                    a[(row, pos(i))] += v;
                }
                rhs[row] = problem.equalities[k].rhs;
            }
            let scale = a.amax().max(rhs.amax()).max(1.0);
            let (x, res) = lstsq(&a, &rhs, 1e-11);
            if res > 1e-9 * scale * (1.0 + rhs.norm()) {
                return None;
            }
            for (p, &i) in vars.iter().enumerate() {
                y0[i] = x[p];
            }
            let ns = null_space(&a, 1e-11);
            for col in 0..ns.ncols() {
                let entries: Vec<(usize, f64)> = vars
                    .iter()
                    .enumerate()
                    .filter_map(|(p, &i)| {
                        let v = ns[(p, col)];
                        (v.abs() > 1e-15).then_some((i, v))
                    })
                    .collect();
                columns.push(entries);
            }
        }
        let num_reduced = columns.len();
        Some(Reduction { y0, columns, num_reduced })
    }

    fn lift(&self, z: &[f64]) -> Vec<f64> {
        let mut y = self.y0.clone();
        for (j, col) in self.columns.iter().enumerate() {
            if z[j] != 0.0 {
                for &(i, v) in col {
                    y[i] += v * z[j];
                }
            }
        }
        y
    }

    fn core_problem(&self, problem: &SdpProblem) -> CoreProblem {
        let offset: f64 = problem.objective.iter().zip(&self.y0).map(|(c, v)| c * v).sum();
        let cost_full: Vec<f64> = self
            .columns
            .iter()
            .map(|col| col.iter().map(|&(i, v)| problem.objective[i] * v).sum())
            .collect();
        // Which reduced variables touch which blocks.
        let mut blocks_of_var: Vec<Vec<usize>> = vec![Vec::new(); problem.num_vars];
        for (b, blk) in problem.blocks.iter().enumerate() {
            for (i, _) in &blk.terms {
                if blocks_of_var[*i].last() != Some(&b) {
                    blocks_of_var[*i].push(b);
                }
            }
        }
        let mut per_block: Vec<Vec<(usize, RMat)>> = vec![Vec::new(); problem.blocks.len()];
        let mut touched = vec![false; self.num_reduced];
        for (j, col) in self.columns.iter().enumerate() {
            let mut bl: Vec<usize> = col.iter().flat_map(|&(i, _)| blocks_of_var[i].iter().copied()).collect();
            bl.sort_unstable();
            bl.dedup();
            for b in bl {
                let blk = &problem.blocks[b];
                let mut m = RMat::zeros(blk.dim, blk.dim);
                for (i, f) in &blk.terms {
                    if let Some(&(_, v)) = col.iter().find(|(k, _)| k == i) {
                        m += f * v;
                    }
                }
                if m.amax() > 1e-14 {
                    per_block[b].push((j, m));
                    touched[j] = true;
                }
            }
        }
        let mut unbounded = false;
        for j in 0..self.num_reduced {
            if !touched[j] && cost_full[j].abs() > 1e-12 {
                unbounded = true;
            }
        }
        let active: Vec<usize> = (0..self.num_reduced).filter(|&j| touched[j]).collect();
        let mut index = vec![usize::MAX; self.num_reduced];
        for (k, &j) in active.iter().enumerate() {
            index[j] = k;
        }
        let blocks = problem
            .blocks
            .iter()
            .zip(per_block)
            .map(|(blk, terms)| {
                let mut f0 = blk.constant.clone();
                for (i, f) in &blk.terms {
                    if self.y0[*i] != 0.0 {
                        f0 += f * self.y0[*i];
                    }
                }
                CoreBlock {
                    f0,
                    terms: terms.into_iter().map(|(j, m)| (index[j], m)).collect(),
                }
            })
            .collect();
        CoreProblem {
            cost: active.iter().map(|&j| cost_full[j]).collect(),
            active,
            blocks,
            offset,
            unbounded,
        }
    }
}

struct IpmOutput {
    status: SdpStatus,
    z: Vec<f64>,
    dual: Vec<RMat>,
    dual_objective: f64,
    iterations: usize,
}

/// Per-block scaling data for one iteration.
struct Scaling {
    /// `W = G Gᵀ`, the Nesterov–Todd scaling point.
    w: RMat,
    g: RMat,
    g_inv: RMat,
    /// Eigenvalues of the scaled iterate `G⁻¹XG⁻ᵀ = GᵀSG`.
    d: Vec<f64>,
}

/// `L` with `L Lᵀ = M`: Cholesky, or an eigen square root when `M` is only
/// numerically PSD.
fn sqrt_factor(m: &RMat) -> RMat {
    if let Some(ch) = m.clone().cholesky() {
        return ch.l();
    }
    let (vals, q) = sym_eig(m);
    let floor = 1e-300_f64.max(vals.iter().fold(0.0_f64, |a, &b| a.max(b)) * 1e-30);
    let mut out = q;
    for (j, v) in vals.iter().enumerate() {
        let s = v.max(floor).sqrt();
        for i in 0..out.nrows() {
            out[(i, j)] *= s;
        }
    }
    out
}

fn inverse(m: &RMat) -> RMat {
    m.clone().try_inverse().unwrap_or_else(|| {
        let d = svd(m);
        let mut out = RMat::zeros(m.ncols(), m.nrows());
        for (k, s) in d.s.iter().enumerate() {
            if *s > 0.0 {
                out += d.v.column(k) * d.u.column(k).transpose() / *s;
            }
        }
        out
    })
}

fn scaling(x: &RMat, s: &RMat) -> Scaling {
    let lx = sqrt_factor(x);
    let ls = sqrt_factor(s);
    let dec = svd(&(ls.transpose() * &lx));
    let u = dec.u;
    let vt = dec.v.transpose();
    let d: Vec<f64> = dec.s.iter().map(|v| v.max(1e-300)).collect();
    let n = d.len();
    let mut g = &lx * vt.transpose();
    for j in 0..n {
        let f = 1.0 / d[j].sqrt();
        for i in 0..n {
            g[(i, j)] *= f;
        }
    }
    // G⁻¹ = D^{-1/2} Uᵀ Lsᵀ.
    let mut g_inv = u.transpose() * ls.transpose();
    for i in 0..n {
        let f = 1.0 / d[i].sqrt();
        for j in 0..n {
            g_inv[(i, j)] *= f;
        }
    }
    let w = &g * g.transpose();
    Scaling { w, g, g_inv, d }
}

/// Largest `α ≤ 1/0.98`-capped step keeping `M + αΔ ⪰ 0`.
fn max_step(m: &RMat, delta: &RMat) -> f64 {
    let l = sqrt_factor(m);
    let linv = inverse(&l);
    let t = &linv * delta * linv.transpose();
    let lmin = sym_min_eig(&t);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn sym(m: RMat) -> RMat {
    (&m + m.transpose()) * 0.5
}

fn ipm(core: &CoreProblem, settings: &SdpSettings) -> IpmOutput {
    let m = core.cost.len();
    let nb = core.blocks.len();
    let total_dim: usize = core.blocks.iter().map(|b| b.f0.nrows()).sum();
    if total_dim == 0 || m == 0 {
        // No cone: feasible iff every constant block is PSD.
        let feasible = core.blocks.iter().all(|b| b.f0.nrows() == 0 || sym_min_eig(&b.f0) >= -1e-12);
        return IpmOutput {
            status: if feasible { SdpStatus::Optimal } else { SdpStatus::Infeasible },
            z: vec![0.0; m],
            dual: core.blocks.iter().map(|b| RMat::zeros(b.f0.nrows(), b.f0.nrows())).collect(),
            dual_objective: 0.0,
            iterations: 0,
        };
    }
    let c_norm = core.cost.iter().map(|v| v * v).sum::<f64>().sqrt();
    let f0_norm = core.blocks.iter().map(|b| b.f0.norm_squared()).sum::<f64>().sqrt();
    let a_norm_max = core
        .blocks
        .iter()
        .flat_map(|b| b.terms.iter().map(|(_, f)| f.norm()))
        .fold(0.0, f64::max);

    // Initial point in the style of SDPT3.
    let nf = (total_dim as f64).sqrt();
    let mut xi_p: f64 = 10.0_f64.max(nf);
    for b in &core.blocks {
        for (j, f) in &b.terms {
            xi_p = xi_p.max(nf * (1.0 + core.cost[*j].abs()) / (1.0 + f.norm()));
        }
    }
    let xi_d = 10.0_f64.max(nf).max(f0_norm).max(a_norm_max);
    let mut x: Vec<RMat> = core.blocks.iter().map(|b| RMat::identity(b.f0.nrows(), b.f0.nrows()) * xi_p).collect();
    let mut s: Vec<RMat> = core.blocks.iter().map(|b| RMat::identity(b.f0.nrows(), b.f0.nrows()) * xi_d).collect();
    let mut z = DVector::<f64>::zeros(m);

    let mut best: Option<(f64, DVector<f64>, Vec<RMat>, f64)> = None;
    let mut status = SdpStatus::MaxIter;
    let mut iterations = 0;
    let mut stall = 0;

    for it in 0..settings.max_iter {
        iterations = it;
        // Residuals. Primal (standard form): ⟨F_j, X⟩ = c_j. Dual: S = F0 + Σ z F.
        let mut rp = DVector::<f64>::from_iterator(m, core.cost.iter().map(|c| -c));
        for (b, blk) in core.blocks.iter().enumerate() {
            for (j, f) in &blk.terms {
                rp[*j] += rtrace_prod(f, &x[b]);
            }
        }
        let rd: Vec<RMat> = core
            .blocks
            .iter()
            .enumerate()
            .map(|(b, blk)| {
                let mut r = blk.f0.clone() - &s[b];
                for (j, f) in &blk.terms {
                    r += f * z[*j];
                }
                r
            })
            .collect();
        let xs: f64 = (0..nb).map(|b| rtrace_prod(&x[b], &s[b])).sum();
        let mu = xs / total_dim as f64;
        let obj: f64 = core.cost.iter().zip(z.iter()).map(|(c, v)| c * v).sum();
        let lower: f64 = -(0..nb).map(|b| rtrace_prod(&core.blocks[b].f0, &x[b])).sum::<f64>();
        let gap = obj - lower;
        let relp = rp.norm() / (1.0 + c_norm);
        let reld = rd.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt() / (1.0 + f0_norm);
        let merit = relp.max(reld).max(gap.abs() / (1.0 + obj.abs()));
        if best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, z.clone(), x.clone(), lower));
        }
        let tol = gap_bound(settings.gap_tol, obj);
        if relp <= settings.feas_tol && reld <= settings.feas_tol && gap.abs() <= tol && xs <= tol {
            status = SdpStatus::Optimal;
            best = Some((merit, z.clone(), x.clone(), lower));
            break;
        }
        // Infeasibility: X with ⟨F_j,X⟩ ≈ 0 and ⟨F0,X⟩ < 0.
        let f0x = -lower;
        if f0x < 0.0 {
            let tau = -f0x;
            let mut ax = DVector::<f64>::zeros(m);
            for (b, blk) in core.blocks.iter().enumerate() {
                for (j, f) in &blk.terms {
                    ax[*j] += rtrace_prod(f, &x[b]);
                }
            }
            if ax.norm() / tau < 1e-8 && tau > 1e6 {
                status = SdpStatus::Infeasible;
                break;
            }
        }
        // Unboundedness: Σ z F ⪰ 0 with cᵀz < 0, detected along a diverging z.
        if obj < -1e8 * (1.0 + c_norm) {
            let tau = -obj;
            let ok = core.blocks.iter().all(|blk| {
                let mut t = RMat::zeros(blk.f0.nrows(), blk.f0.nrows());
                for (j, f) in &blk.terms {
                    t += f * (z[*j] / tau);
                }
                sym_min_eig(&t) >= -1e-8
            });
            if ok {
                status = SdpStatus::Unbounded;
                best = Some((merit, z.clone(), x.clone(), f64::NEG_INFINITY));
                break;
            }
        }

        let sc: Vec<Scaling> = settings.exec.map(nb, |b| scaling(&x[b], &s[b]));
        let schur = assemble_schur(core, &sc, settings.exec);
        let solver = SchurSolver::new(schur);

        let direction = |rc: &[RMat]| -> (DVector<f64>, Vec<RMat>, Vec<RMat>) {
            // rhs_j = rp_j + Σ_b ⟨F_j, Rc − W Rd W⟩
            let t: Vec<RMat> = (0..nb).map(|b| &rc[b] - &sc[b].w * &rd[b] * &sc[b].w).collect();
            let mut rhs = rp.clone();
            for (b, blk) in core.blocks.iter().enumerate() {
                for (j, f) in &blk.terms {
                    rhs[*j] += rtrace_prod(f, &t[b]);
                }
            }
            let dz = solver.solve(&rhs);
            let ds: Vec<RMat> = core
                .blocks
                .iter()
                .enumerate()
                .map(|(b, blk)| {
                    let mut d = rd[b].clone();
                    for (j, f) in &blk.terms {
                        d += f * dz[*j];
                    }
                    d
                })
                .collect();
            let dx: Vec<RMat> = (0..nb).map(|b| sym(&rc[b] - &sc[b].w * &ds[b] * &sc[b].w)).collect();
            (dz, dx, ds)
        };

        let steps = |dx: &[RMat], ds: &[RMat]| -> (f64, f64) {
            let ap = (0..nb).map(|b| max_step(&x[b], &dx[b])).fold(f64::INFINITY, f64::min);
            let ad = (0..nb).map(|b| max_step(&s[b], &ds[b])).fold(f64::INFINITY, f64::min);
            (ap, ad)
        };

        // Predictor.
        let rc_aff: Vec<RMat> = x.iter().map(|v| -v.clone()).collect();
        let (_, dxa, dsa) = direction(&rc_aff);
        let (ap, ad) = steps(&dxa, &dsa);
        let (ap1, ad1) = (ap.min(1.0), ad.min(1.0));
        let xs_aff: f64 = (0..nb)
            .map(|b| rtrace_prod(&(&x[b] + &dxa[b] * ap1), &(&s[b] + &dsa[b] * ad1)))
            .sum();
        let mut sigma = ((xs_aff / xs).max(0.0)).powi(3).min(1.0);
        // Keep the complementarity from collapsing ahead of primal feasibility.
        if relp > settings.feas_tol && relp > 10.0 * xs / (1.0 + obj.abs()) {
            sigma = sigma.max(0.5);
        }

        // Corrector in the scaled space, where both iterates equal diag(d).
        let rc: Vec<RMat> = (0..nb)
            .map(|b| {
                let sb = &sc[b];
                let n = sb.d.len();
                let a = &sb.g_inv * &dxa[b] * sb.g_inv.transpose();
                let bb = sb.g.transpose() * &dsa[b] * &sb.g;
                let ab = &a * &bb;
                let prod = &ab + ab.transpose();
                let r = RMat::from_fn(n, n, |i, j| {
                    let diag = if i == j { sigma * mu / sb.d[i] - sb.d[i] } else { 0.0 };
                    diag - prod[(i, j)] / (sb.d[i] + sb.d[j])
                });
                sym(&sb.g * r * sb.g.transpose())
            })
            .collect();
        let (dz, dx, ds) = direction(&rc);
        let (ap, ad) = steps(&dx, &ds);
        let gamma = 0.98;
        let (ap, ad) = ((gamma * ap).min(1.0), (gamma * ad).min(1.0));
        if ap < 1e-10 && ad < 1e-10 {
            stall += 1;
            if stall > 3 {
                break;
            }
        } else {
            stall = 0;
        }
        for b in 0..nb {
            x[b] = sym(&x[b] + &dx[b] * ap);
            s[b] = sym(&s[b] + &ds[b] * ad);
        }
        z += dz * ad;
    }
    let (_, zb, xb, lower) = best.expect("at least one iterate");
    IpmOutput {
        status,
        z: zb.iter().copied().collect(),
        dual: xb,
        dual_objective: lower,
        iterations: iterations + 1,
    }
}

fn assemble_schur(core: &CoreProblem, sc: &[Scaling], exec: Exec) -> RMat {
    let m = core.cost.len();
    let locals: Vec<Vec<(usize, usize, f64)>> = exec.map(core.blocks.len(), |b| {
        let blk = &core.blocks[b];
        let w = &sc[b].w;
        let p: Vec<RMat> = blk.terms.iter().map(|(_, f)| w * f * w).collect();
        let mut out = Vec::with_capacity(blk.terms.len() * (blk.terms.len() + 1) / 2);
        for (a, (i, fi)) in blk.terms.iter().enumerate() {
            for (bidx, (j, _)) in blk.terms.iter().enumerate().skip(a) {
                out.push((*i, *j, rtrace_prod(fi, &p[bidx])));
            }
        }
        out
    });
    let mut schur = RMat::zeros(m, m);
    for local in locals {
        for (i, j, v) in local {
            schur[(i, j)] += v;
            if i != j {
                schur[(j, i)] += v;
            }
        }
    }
    schur
}

enum Factor {
    Chol(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Pinv(RMat),
}

/// Regularized factorization of the Schur matrix, with iterative refinement
/// against the unregularized matrix.
struct SchurSolver {
    m: RMat,
    factor: Factor,
}

impl SchurSolver {
    fn new(orig: RMat) -> Self {
        let mut m = orig.clone();
        let n = m.nrows();
        let scale = (0..n).map(|i| m[(i, i)]).fold(0.0, f64::max).max(1e-300);
        for i in 0..n {
            m[(i, i)] += 1e-13 * m[(i, i)] + 1e-15 * scale;
        }
        let factor = match m.clone().cholesky() {
            Some(ch) => Factor::Chol(ch),
            None => {
                let (vals, q) = sym_eig(&m);
                let vmax = vals.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
                let inv: Vec<f64> = vals.iter().map(|&v| if v > 1e-14 * vmax { 1.0 / v } else { 0.0 }).collect();
                let mut qi = q.clone();
                for (j, f) in inv.iter().enumerate() {
                    for i in 0..n {
                        qi[(i, j)] *= f;
                    }
                }
                Factor::Pinv(qi * q.transpose())
            }
        };
        SchurSolver { m: orig, factor }
    }

    fn apply_inverse(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match &self.factor {
            Factor::Chol(ch) => ch.solve(rhs),
            Factor::Pinv(p) => p * rhs,
        }
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut x = self.apply_inverse(rhs);
        for _ in 0..2 {
            let r = rhs - &self.m * &x;
            x += self.apply_inverse(&r);
        }
        x
    }
}
