//! Uniform baseline and max-min fair power control by bisection over a common
//! SINR target, with a second-order-cone feasibility oracle.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SecondOrderConeT, SolverStatus, SupportedConeT,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{PilotPlan, UlEstimateStats};
use crate::rates::{self, CrossTermForm, PowerAllocation};
use crate::topology::{ClusterAssignment, LinkGains};
use crate::views::OmaSide;
use crate::Mat;

/// Optimal slack above which a target is declared infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-6;
const MAX_DOUBLINGS: usize = 60;

/// Equal share per AP, scaled so the AP spends its whole budget.
pub fn uniform_allocation(
    stats: &UlEstimateStats,
    clusters: &ClusterAssignment,
    p_p: f64,
    p_s: f64,
) -> PowerAllocation {
    let side = |delta: &Mat, rho: &Mat| {
        let mut eta = Mat::zeros(rho.nrows(), rho.ncols());
        for m in 0..rho.nrows() {
            let load: f64 = (0..rho.ncols()).map(|k| delta[(m, k)] * rho[(m, k)]).sum();
            if load > 0.0 {
                for k in 0..rho.ncols() {
                    if delta[(m, k)] > 0.0 {
                        eta[(m, k)] = 1.0 / load;
                    }
                }
            }
        }
        eta
    };
    PowerAllocation {
        eta_p: side(&clusters.delta_p, &stats.rho_f),
        eta_s: side(&clusters.delta_s, &stats.rho_g),
        p_p,
        p_s,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxMinProblem {
    pub stats: UlEstimateStats,
    pub gains: LinkGains,
    pub clusters: ClusterAssignment,
    pub plan: PilotPlan,
    pub p_p: f64,
    pub p_s: f64,
    /// per-PU interference thresholds, noise-normalized
    pub i_t: Vec<f64>,
    pub epsilon: f64,
    /// None derives the bracket from the interference-free bound
    pub lambda_bounds: Option<(f64, f64)>,
    /// Accepted for completeness; a common target makes the optimum independent of them.
    pub weights: (f64, f64),
    pub form: CrossTermForm,
}

impl MaxMinProblem {
    pub fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(Error::InvalidConfig(s.into()));
        if !(self.epsilon > 0.0) {
            return bad("bisection tolerance must be positive");
        }
        if !(self.weights.0 > 0.0 && self.weights.1 > 0.0) {
            return bad("fairness weights must be positive");
        }
        if let Some((lo, hi)) = self.lambda_bounds {
            if !(lo >= 0.0 && lo < hi) {
                return bad("lambda bounds must satisfy 0 <= min < max");
            }
        }
        if self.i_t.len() != self.stats.rho_f.ncols() {
            return Err(Error::Shape(format!(
                "{} interference thresholds for {} PUs",
                self.i_t.len(),
                self.stats.rho_f.ncols()
            )));
        }
        if self.i_t.iter().any(|&x| !(x >= 0.0)) || !(self.p_p >= 0.0 && self.p_s >= 0.0) {
            return bad("powers and thresholds must be nonnegative");
        }
        Ok(())
    }

    fn side_alloc(&self, eta_p: Mat, eta_s: Mat) -> PowerAllocation {
        PowerAllocation { eta_p, eta_s, p_p: self.p_p, p_s: self.p_s }
    }

    /// Interference-free upper bound on any user's SINR.
    pub fn lambda_upper(&self) -> f64 {
        let bound = |delta: &Mat, rho: &Mat, p: f64| {
            (0..rho.ncols())
                .map(|k| {
                    let s: f64 = (0..rho.nrows()).map(|m| delta[(m, k)] * rho[(m, k)].sqrt()).sum();
                    p * s * s
                })
                .fold(0.0, f64::max)
        };
        bound(&self.clusters.delta_p, &self.stats.rho_f, self.p_p)
            .max(bound(&self.clusters.delta_s, &self.stats.rho_g, self.p_s))
    }
}

/// Column-major slot of each served (AP, user) pair in the decision vector.
#[derive(Debug, Clone)]
struct Index {
    rows: usize,
    cols: usize,
    slot: Vec<Option<usize>>,
}

impl Index {
    fn nrows(&self) -> usize {
        self.rows
    }

    fn ncols(&self) -> usize {
        self.cols
    }
}

/// Decision-variable layout: one beta per served (AP, user) pair, then the slack t.
#[derive(Debug, Clone)]
struct VarMap {
    p: Index,
    s: Index,
    n_beta: usize,
}

impl VarMap {
    fn new(c: &ClusterAssignment) -> Self {
        let mut n = 0usize;
        let mut index = |delta: &Mat| {
            let mut slot = Vec::with_capacity(delta.len());
            for &d in delta.iter() {
                slot.push((d > 0.0).then(|| {
                    n += 1;
                    n - 1
                }));
            }
            Index { rows: delta.nrows(), cols: delta.ncols(), slot }
        };
        let p = index(&c.delta_p);
        let s = index(&c.delta_s);
        VarMap { p, s, n_beta: n }
    }

    fn get(m: &Index, r: usize, c: usize) -> Option<usize> {
        m.slot[c * m.rows + r]
    }

    fn t(&self) -> usize {
        self.n_beta
    }
}

/// Affine row a.x + c0 over the decision vector.
#[derive(Debug, Clone, Default)]
struct Row {
    coef: Vec<(usize, f64)>,
    c0: f64,
}

impl Row {
    fn eval(&self, x: &[f64]) -> f64 {
        self.c0 + self.coef.iter().map(|&(j, a)| a * x[j]).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConeKind {
    SinrPrimary(usize),
    SinrSecondary(usize),
    PrimaryApBudget(usize),
    SecondaryApBudget(usize),
    Interference(usize),
}

#[derive(Debug, Clone)]
struct Cone {
    kind: ConeKind,
    head: Row,
    tail: Vec<Row>,
}

fn sinr_cone(side: &OmaSide, own: &Index, other: &Index, k: usize, lambda: f64, t: usize, form: CrossTermForm) -> (Row, Vec<Row>) {
    let mut head = Row::default();
    let g = (side.own_power / lambda).sqrt();
    for m in 0..side.aps() {
        if let Some(j) = VarMap::get(own, m, k) {
            head.coef.push((j, g * side.own_rho[(m, k)]));
        }
    }
    head.coef.push((t, 1.0));

    let mut tail = Vec::new();
    for i in 0..side.users() {
        for m in 0..side.aps() {
            if let Some(j) = VarMap::get(own, m, i) {
                let a = (side.own_power * side.own_rho[(m, i)] * side.own_zeta[(m, k)]).sqrt();
                if a > 0.0 {
                    tail.push(Row { coef: vec![(j, a)], c0: 0.0 });
                }
            }
        }
    }
    let (on, ou) = (other.nrows(), other.ncols());
    for jj in 0..ou {
        for n in 0..on {
            if let Some(j) = VarMap::get(other, n, jj) {
                let a = (side.other_power * side.other_rho[(n, jj)] * side.cross_zeta[(n, k)]).sqrt();
                if a > 0.0 {
                    tail.push(Row { coef: vec![(j, a)], c0: 0.0 });
                }
            }
        }
    }
    if side.shared[k] {
        tail.extend(contamination_rows(side, other, k, side.other_power.sqrt(), form));
    }
    tail.push(Row { coef: vec![], c0: 1.0 });
    (head, tail)
}

fn contamination_rows(side: &OmaSide, other: &Index, k: usize, scale: f64, form: CrossTermForm) -> Vec<Row> {
    let terms: Vec<(usize, f64)> = (0..other.nrows())
        .filter_map(|n| VarMap::get(other, n, k).map(|j| (j, scale * side.contam_rho[(n, k)])))
        .collect();
    match form {
        CrossTermForm::Coherent => vec![Row { coef: terms, c0: 0.0 }],
        CrossTermForm::PerAp => terms.into_iter().map(|t| Row { coef: vec![t], c0: 0.0 }).collect(),
    }
}

fn build_cones(pr: &MaxMinProblem, vars: &VarMap, lambda: f64) -> Vec<Cone> {
    // eta only matters through its support here; the view supplies the constants
    let eta_p = Mat::zeros(pr.stats.rho_f.nrows(), pr.stats.rho_f.ncols());
    let eta_s = Mat::zeros(pr.stats.rho_g.nrows(), pr.stats.rho_g.ncols());
    let alloc = pr.side_alloc(eta_p, eta_s);
    let ps = OmaSide::primary(&pr.stats, &pr.gains, &pr.clusters, &alloc, &pr.plan);
    let ss = OmaSide::secondary(&pr.stats, &pr.gains, &pr.clusters, &alloc, &pr.plan);
    let t = vars.t();
    let mut cones = Vec::new();

    for k in 0..ps.users() {
        let (head, tail) = sinr_cone(&ps, &vars.p, &vars.s, k, lambda, t, pr.form);
        cones.push(Cone { kind: ConeKind::SinrPrimary(k), head, tail });
    }
    for l in 0..ss.users() {
        let (head, tail) = sinr_cone(&ss, &vars.s, &vars.p, l, lambda, t, pr.form);
        cones.push(Cone { kind: ConeKind::SinrSecondary(l), head, tail });
    }
    for (map, rho, secondary) in [(&vars.p, &pr.stats.rho_f, false), (&vars.s, &pr.stats.rho_g, true)] {
        for m in 0..rho.nrows() {
            let tail: Vec<Row> = (0..rho.ncols())
                .filter_map(|k| VarMap::get(map, m, k).map(|j| Row { coef: vec![(j, rho[(m, k)].sqrt())], c0: 0.0 }))
                .collect();
            if tail.is_empty() {
                continue;
            }
            let kind = if secondary { ConeKind::SecondaryApBudget(m) } else { ConeKind::PrimaryApBudget(m) };
            cones.push(Cone { kind, head: Row { coef: vec![], c0: 1.0 }, tail });
        }
    }
    if pr.p_s > 0.0 {
        for k in 0..ps.users() {
            if !pr.i_t[k].is_finite() {
                continue;
            }
            let mut tail = Vec::new();
            for l in 0..ss.users() {
                for n in 0..ss.aps() {
                    if let Some(j) = VarMap::get(&vars.s, n, l) {
                        let a = (pr.stats.rho_g[(n, l)] * pr.gains.zeta_u[(n, k)]).sqrt();
                        if a > 0.0 {
                            tail.push(Row { coef: vec![(j, a)], c0: 0.0 });
                        }
                    }
                }
            }
            if ps.shared[k] {
                tail.extend(contamination_rows(&ps, &vars.s, k, 1.0, pr.form));
            }
            let head = Row { coef: vec![], c0: (pr.i_t[k] / pr.p_s).sqrt() };
            cones.push(Cone { kind: ConeKind::Interference(k), head, tail });
        }
    }
    cones
}

/// Value of one cone constraint at a given beta: satisfied iff `head >= tail_norm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SocValue {
    pub kind: ConeKind,
    pub head: f64,
    pub tail_norm: f64,
}

impl SocValue {
    pub fn violation(&self) -> f64 {
        (self.tail_norm - self.head).max(0.0)
    }
}

/// Evaluate every cone of the feasibility problem at (beta_p, beta_s) with zero slack.
pub fn build_soc_vectors(pr: &MaxMinProblem, beta_p: &Mat, beta_s: &Mat, lambda: f64) -> Vec<SocValue> {
    let vars = VarMap::new(&pr.clusters);
    let x = pack(&vars, beta_p, beta_s, 0.0);
    build_cones(pr, &vars, lambda)
        .iter()
        .map(|c| SocValue {
            kind: c.kind,
            head: c.head.eval(&x),
            tail_norm: c.tail.iter().map(|r| r.eval(&x).powi(2)).sum::<f64>().sqrt(),
        })
        .collect()
}

fn pack(vars: &VarMap, bp: &Mat, bs: &Mat, t: f64) -> Vec<f64> {
    let mut x = vec![0.0; vars.n_beta + 1];
    for (map, b) in [(&vars.p, bp), (&vars.s, bs)] {
        for r in 0..map.nrows() {
            for c in 0..map.ncols() {
                if let Some(j) = VarMap::get(map, r, c) {
                    x[j] = b[(r, c)];
                }
            }
        }
    }
    x[vars.t()] = t;
    x
}

fn unpack(vars: &VarMap, x: &[f64]) -> (Mat, Mat) {
    let f = |map: &Index| {
        Mat::from_fn(map.nrows(), map.ncols(), |r, c| VarMap::get(map, r, c).map_or(0.0, |j| x[j]))
    };
    (f(&vars.p), f(&vars.s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityResult {
    pub lambda: f64,
    pub feasible: bool,
    pub beta_p: Mat,
    pub beta_s: Mat,
    /// optimal slack t*; nonpositive means strictly feasible
    pub slack: f64,
    /// largest budget/interference/sign violation of the repaired witness
    pub max_violation: f64,
}

/// Clamp to the nonnegative orthant and pull the witness back inside the
/// per-AP budgets and the interference thresholds (solver round-off only).
fn repair(pr: &MaxMinProblem, bp: &mut Mat, bs: &mut Mat) {
    bp.iter_mut().chain(bs.iter_mut()).for_each(|b| *b = b.max(0.0));
    for (b, rho) in [(&mut *bp, &pr.stats.rho_f), (&mut *bs, &pr.stats.rho_g)] {
        for m in 0..b.nrows() {
            let load: f64 = (0..b.ncols()).map(|k| b[(m, k)].powi(2) * rho[(m, k)]).sum();
            if load > 1.0 {
                let s = load.sqrt().recip();
                b.row_mut(m).iter_mut().for_each(|x| *x *= s);
            }
        }
    }
    if pr.p_s > 0.0 {
        let eta_s = bs.map(|b| b * b);
        let alloc = pr.side_alloc(bp.map(|b| b * b), eta_s);
        let z = rates::secondary_cci_zk(&pr.stats, &pr.gains, &pr.clusters, &alloc, &pr.plan, pr.form);
        let worst = z
            .iter()
            .zip(&pr.i_t)
            .map(|(&z, &it)| pr.p_s * z / it)
            .filter(|r| r.is_finite())
            .fold(0.0, f64::max);
        if worst > 1.0 {
            let s = worst.sqrt().recip();
            bs.iter_mut().for_each(|x| *x *= s);
        }
    }
}

/// Hard-constraint violation (budgets, interference, sign) of a witness.
pub fn witness_violation(pr: &MaxMinProblem, beta_p: &Mat, beta_s: &Mat) -> f64 {
    let mut worst = beta_p.iter().chain(beta_s.iter()).map(|&b| (-b).max(0.0)).fold(0.0, f64::max);
    for v in build_soc_vectors(pr, beta_p, beta_s, 1.0) {
        if !matches!(v.kind, ConeKind::SinrPrimary(_) | ConeKind::SinrSecondary(_)) {
            worst = worst.max(v.violation());
        }
    }
    worst
}

fn column_scales(pr: &MaxMinProblem, vars: &VarMap) -> Vec<f64> {
    let mut d = vec![1.0; vars.n_beta];
    for (map, rho) in [(&vars.p, &pr.stats.rho_f), (&vars.s, &pr.stats.rho_g)] {
        for r in 0..map.nrows() {
            for c in 0..map.ncols() {
                if let Some(j) = VarMap::get(map, r, c) {
                    let x = rho[(r, c)].sqrt();
                    if x > 0.0 && x.is_finite() {
                        d[j] = x;
                    }
                }
            }
        }
    }
    d
}

/// Solve min t s.t. every SINR cone holds with slack t; feasible iff t* <= 1e-6.
pub fn feasibility_check(pr: &MaxMinProblem, lambda: f64) -> Result<FeasibilityResult> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidConfig(format!("SINR target {lambda} must be positive")));
    }
    let vars = VarMap::new(&pr.clusters);
    let cones = build_cones(pr, &vars, lambda);
    let n = vars.n_beta + 1;

    // solve in x = beta sqrt(rho), so every budget cone is the unit ball, and
    // scale each cone by its largest coefficient; neither changes the sign of t*
    let d = column_scales(pr, &vars);
    let (mut ii, mut jj, mut vv) = (Vec::new(), Vec::new(), Vec::new());
    let mut b = Vec::new();
    let mut spec: Vec<SupportedConeT<f64>> = Vec::new();
    let mut row = 0usize;
    for c in &cones {
        let rows = || std::iter::once(&c.head).chain(c.tail.iter());
        let big = rows()
            .flat_map(|r| r.coef.iter().map(|&(j, a)| if j < d.len() { a / d[j] } else { a }).chain([r.c0]))
            .fold(0.0f64, |m, a| m.max(a.abs()));
        let s = if big > 0.0 { big.recip() } else { 1.0 };
        for r in rows() {
            for &(j, a) in &r.coef {
                ii.push(row);
                jj.push(j);
                vv.push(-s * if j < d.len() { a / d[j] } else { a });
            }
            b.push(s * r.c0);
            row += 1;
        }
        spec.push(SecondOrderConeT(1 + c.tail.len()));
    }
    for j in 0..vars.n_beta {
        ii.push(row);
        jj.push(j);
        vv.push(-1.0);
        b.push(0.0);
        row += 1;
    }
    spec.push(NonnegativeConeT(vars.n_beta));

    let a = CscMatrix::new_from_triplets(row, n, ii, jj, vv);
    let p = CscMatrix::zeros((n, n));
    let mut q = vec![0.0; n];
    q[vars.t()] = 1.0;
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(200)
        .build()
        .map_err(|e| Error::Solver { lambda, status: format!("{e:?}") })?;
    let mut solver = DefaultSolver::new(&p, &q, &a, &b, &spec, settings)
        .map_err(|e| Error::Solver { lambda, status: format!("{e:?}") })?;
    solver.solve();
    let sol = &solver.solution;
    if !matches!(sol.status, SolverStatus::Solved | SolverStatus::AlmostSolved) || sol.x.iter().any(|x| !x.is_finite()) {
        return Err(Error::Solver { lambda, status: format!("{:?}", sol.status) });
    }
    let slack = sol.x[vars.t()];
    let beta: Vec<f64> = sol.x.iter().enumerate().map(|(j, &x)| if j < d.len() { x / d[j] } else { x }).collect();
    let (mut bp, mut bs) = unpack(&vars, &beta);
    repair(pr, &mut bp, &mut bs);
    let max_violation = witness_violation(pr, &bp, &bs);
    Ok(FeasibilityResult { lambda, feasible: slack <= FEASIBILITY_TOL, beta_p: bp, beta_s: bs, slack, max_violation })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxMinOutcome {
    pub allocation: PowerAllocation,
    pub lambda_star: f64,
    /// final bracket
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    /// bracket that the bisection started from (after any doubling)
    pub initial_bracket: (f64, f64),
    pub iterations: usize,
    pub iteration_bound: usize,
    /// every (lambda, feasible) evaluated, in order
    pub trajectory: Vec<(f64, bool)>,
    pub witness_violation: f64,
    pub gamma_p: Vec<f64>,
    pub gamma_s: Vec<f64>,
}

impl MaxMinOutcome {
    /// Feasible targets never sit above infeasible ones.
    pub fn trajectory_monotone(&self) -> bool {
        let max_feasible = self.trajectory.iter().filter(|t| t.1).map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
        let min_infeasible = self.trajectory.iter().filter(|t| !t.1).map(|t| t.0).fold(f64::INFINITY, f64::min);
        max_feasible < min_infeasible
    }

    pub fn min_sinr(&self) -> f64 {
        self.gamma_p.iter().chain(&self.gamma_s).copied().fold(f64::INFINITY, f64::min)
    }
}

fn all_sinrs(pr: &MaxMinProblem, alloc: &PowerAllocation) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((
        rates::sinr_primary_oma(&pr.stats, &pr.gains, &pr.clusters, alloc, &pr.plan, pr.form)?,
        rates::sinr_secondary_oma(&pr.stats, &pr.gains, &pr.clusters, alloc, &pr.plan, pr.form)?,
    ))
}

/// Scale down users above the common minimum until every SINR equals it.
/// Lowering any coefficient only removes interference and budget load, so
/// all constraints stay satisfied and the minimum never drops.
fn equalize(pr: &MaxMinProblem, alloc: &mut PowerAllocation) -> Result<()> {
    for _ in 0..500 {
        let (gp, gs) = all_sinrs(pr, alloc)?;
        let tau = gp.iter().chain(&gs).copied().fold(f64::INFINITY, f64::min);
        let top = gp.iter().chain(&gs).copied().fold(0.0, f64::max);
        if !(tau > 0.0) || top <= tau * (1.0 + 1e-10) {
            return Ok(());
        }
        for secondary in [false, true] {
            let gam = if secondary { &gs } else { &gp };
            let scales: Vec<f64> = {
                let side = if secondary {
                    OmaSide::secondary(&pr.stats, &pr.gains, &pr.clusters, alloc, &pr.plan)
                } else {
                    OmaSide::primary(&pr.stats, &pr.gains, &pr.clusters, alloc, &pr.plan)
                };
                (0..side.users())
                    .map(|k| {
                        if gam[k] <= tau {
                            return 1.0;
                        }
                        let a = side.own_power * side.mean_mu(k).powi(2);
                        let bself = side.own_power * side.v_ki(k, k);
                        let total = side.own_power * side.own_interference(k) + side.other_power * side.z(k, pr.form) + 1.0;
                        let c_rest = total - bself;
                        let den = a - tau * bself;
                        if den <= 0.0 {
                            1.0
                        } else {
                            (tau * c_rest / den).min(1.0)
                        }
                    })
                    .collect()
            };
            let eta = if secondary { &mut alloc.eta_s } else { &mut alloc.eta_p };
            for (k, s) in scales.into_iter().enumerate() {
                eta.column_mut(k).iter_mut().for_each(|x| *x *= s);
            }
        }
    }
    Ok(())
}

/// Bisection on the common SINR target.
pub fn maxmin_bisection(pr: &MaxMinProblem) -> Result<MaxMinOutcome> {
    pr.validate()?;
    let mut trajectory = Vec::new();
    let (mut lo, mut hi) = pr.lambda_bounds.unwrap_or((0.0, 2.0 * pr.lambda_upper()));
    if !(hi > lo) {
        // nothing to share: every user is silent
        hi = lo + pr.epsilon;
    }
    let mut witness: Option<FeasibilityResult> = None;
    if lo > 0.0 {
        let r = feasibility_check(pr, lo)?;
        trajectory.push((lo, r.feasible));
        if !r.feasible {
            return Err(Error::Bracket(0));
        }
        witness = Some(r);
    }
    let mut doublings = 0;
    loop {
        let r = feasibility_check(pr, hi)?;
        trajectory.push((hi, r.feasible));
        if !r.feasible {
            break;
        }
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::Bracket(MAX_DOUBLINGS));
        }
        lo = hi;
        witness = Some(r);
        hi *= 2.0;
    }
    let initial_bracket = (lo, hi);
    let iteration_bound = ((hi - lo) / pr.epsilon).log2().ceil().max(0.0) as usize;
    let mut iterations = 0;
    while hi - lo > pr.epsilon {
        let mid = 0.5 * (lo + hi);
        let r = feasibility_check(pr, mid)?;
        trajectory.push((mid, r.feasible));
        iterations += 1;
        if r.feasible {
            lo = mid;
            witness = Some(r);
        } else {
            hi = mid;
        }
    }

    let (beta_p, beta_s, viol) = match witness {
        Some(w) => (w.beta_p, w.beta_s, w.max_violation),
        None => {
            // target below epsilon: fall back to the uniform point, repaired
            let u = uniform_allocation(&pr.stats, &pr.clusters, pr.p_p, pr.p_s);
            let (mut bp, mut bs) = (u.eta_p.map(f64::sqrt), u.eta_s.map(f64::sqrt));
            repair(pr, &mut bp, &mut bs);
            let v = witness_violation(pr, &bp, &bs);
            (bp, bs, v)
        }
    };
    let mut allocation = pr.side_alloc(beta_p.map(|b| b * b), beta_s.map(|b| b * b));
    equalize(pr, &mut allocation)?;
    let (gamma_p, gamma_s) = all_sinrs(pr, &allocation)?;
    let witness_violation = viol.max(witness_violation(pr, &allocation.eta_p.map(f64::sqrt), &allocation.eta_s.map(f64::sqrt)));
    Ok(MaxMinOutcome {
        allocation,
        lambda_star: lo,
        lambda_lo: lo,
        lambda_hi: hi,
        initial_bracket,
        iterations,
        iteration_bound,
        trajectory,
        witness_violation,
        gamma_p,
        gamma_s,
    })
}
