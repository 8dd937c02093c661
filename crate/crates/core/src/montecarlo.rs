//! Realization-level oracle. Channels, pilots, estimates, DL pilots and SIC
//! errors are simulated directly and every closed-form moment is compared
//! with its sample counterpart.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimation::{
    DlPilotStatsNoma, DlPilotStatsOma, DlSideStats, NomaDlSide, NomaGains, NomaUlStats, PilotPlan, UlEstimateStats,
};
use crate::rates::{self, CrossTermForm, NomaPowerAllocation, PowerAllocation, SicModel};
use crate::topology::{stream_rng, ClusterAssignment, LinkGains, STREAM_MONTECARLO_BASE};
use crate::views::{NomaSide, OmaSide};
use crate::{Mat, C64};

pub type CMat = DMatrix<C64>;

/// Floor on |closed form| when forming relative deviations.
pub const REL_FLOOR: f64 = 1e-12;
const MAX_CHUNK: usize = 2000;

/// CN(0, var) sample.
pub fn cn<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

fn cn_mat<R: Rng + ?Sized>(rng: &mut R, var: &Mat) -> CMat {
    // column-major draw order
    let mut out = CMat::zeros(var.nrows(), var.ncols());
    for (o, &v) in out.iter_mut().zip(var.iter()) {
        *o = cn(rng, v);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub f: CMat,
    pub g: CMat,
    pub u: CMat,
    pub v: CMat,
}

pub fn draw_realization<R: Rng + ?Sized>(gains: &LinkGains, rng: &mut R) -> ChannelRealization {
    ChannelRealization {
        f: cn_mat(rng, &gains.zeta_f),
        g: cn_mat(rng, &gains.zeta_g),
        u: cn_mat(rng, &gains.zeta_u),
        v: cn_mat(rng, &gains.zeta_v),
    }
}

/// Deterministic i.i.d. stream of `trials` draws.
pub fn draw_channels(gains: &LinkGains, seed: u64, trials: usize) -> impl Iterator<Item = ChannelRealization> + '_ {
    let mut rng = stream_rng(seed, STREAM_MONTECARLO_BASE);
    (0..trials).map(move |_| draw_realization(gains, &mut rng))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationRealization {
    pub f_hat: CMat,
    pub g_hat: CMat,
    pub eps_f: CMat,
    pub eps_g: CMat,
}

/// Received UL pilots after despreading, then the MMSE estimates.
pub fn simulate_ul_estimation<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    plan: &PilotPlan,
    stats: &UlEstimateStats,
    rng: &mut R,
) -> EstimationRealization {
    let sp = stats.pilot_energy.sqrt();
    let mut f_hat = CMat::zeros(ch.f.nrows(), ch.f.ncols());
    for k in 0..ch.f.ncols() {
        for m in 0..ch.f.nrows() {
            let mut y = ch.f[(m, k)] * sp + cn(rng, 1.0);
            if plan.pu_shared[k] {
                y += ch.v[(m, k)] * sp;
            }
            f_hat[(m, k)] = y * stats.c_p[(m, k)];
        }
    }
    let mut g_hat = CMat::zeros(ch.g.nrows(), ch.g.ncols());
    for l in 0..ch.g.ncols() {
        for n in 0..ch.g.nrows() {
            let mut y = ch.g[(n, l)] * sp + cn(rng, 1.0);
            if plan.su_shared[l] {
                y += ch.u[(n, l)] * sp;
            }
            g_hat[(n, l)] = y * stats.c_s[(n, l)];
        }
    }
    EstimationRealization { eps_f: &ch.f - &f_hat, eps_g: &ch.g - &g_hat, f_hat, g_hat }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowKind {
    /// closed form equals the expectation
    Identity,
    /// closed form bounds the sample mean from above (up to 4 stderr)
    UpperBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub suite: String,
    pub name: String,
    pub kind: RowKind,
    pub closed_form: f64,
    pub empirical: f64,
    pub stderr: f64,
    pub rel_dev: f64,
    pub pass: bool,
}

impl MomentRow {
    /// Positive when an upper bound holds with room to spare.
    pub fn margin(&self) -> f64 {
        self.closed_form - self.empirical
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub seed: u64,
    pub trials: usize,
    pub rel_tol: f64,
    pub rows: Vec<MomentRow>,
}

impl MomentReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &MomentRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn find(&self, name: &str) -> Option<&MomentRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn extend(&mut self, other: MomentReport) {
        self.rows.extend(other.rows);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub trials: usize,
    pub seed: u64,
    pub rel_tol: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { trials: 100_000, seed: 0, rel_tol: 0.02 }
    }
}

/// How a row turns averaged per-trial statistics into one number.
#[derive(Debug, Clone)]
enum Expr {
    Mean(usize),
    Scaled(usize, f64),
    /// E|X|^2 - |E X|^2 from (Re X, Im X, |X|^2)
    Var { re: usize, im: usize, sq: usize },
    /// P|E X|^2 / (P (Var X + sum own) + P_o other + 1)
    Sinr { re: usize, im: usize, sq: usize, own: Vec<usize>, other: usize, p_own: f64, p_other: f64 },
}

impl Expr {
    fn eval(&self, m: &[f64]) -> f64 {
        match self {
            Expr::Mean(i) => m[*i],
            Expr::Scaled(i, a) => a * m[*i],
            Expr::Var { re, im, sq } => m[*sq] - m[*re].powi(2) - m[*im].powi(2),
            Expr::Sinr { re, im, sq, own, other, p_own, p_other } => {
                let mean2 = m[*re].powi(2) + m[*im].powi(2);
                let own_sum: f64 = own.iter().map(|&i| m[i]).sum();
                p_own * mean2 / (p_own * (m[*sq] - mean2 + own_sum) + p_other * m[*other] + 1.0)
            }
        }
    }
}

#[derive(Debug, Clone)]
struct RowSpec {
    name: String,
    kind: RowKind,
    closed_form: f64,
    expr: Expr,
}

/// Slot allocator for the per-trial statistics vector.
#[derive(Debug, Default)]
struct Layout {
    n: usize,
    rows: Vec<RowSpec>,
}

impl Layout {
    fn slot(&mut self) -> usize {
        self.n += 1;
        self.n - 1
    }

    fn slots<const N: usize>(&mut self) -> [usize; N] {
        std::array::from_fn(|_| self.slot())
    }

    fn row(&mut self, name: String, closed_form: f64, expr: Expr) {
        self.rows.push(RowSpec { name, kind: RowKind::Identity, closed_form, expr });
    }

    fn bound(&mut self, name: String, closed_form: f64, expr: Expr) {
        self.rows.push(RowSpec { name, kind: RowKind::UpperBound, closed_form, expr });
    }
}

trait Suite: Sync {
    fn name(&self) -> &str;
    fn layout(&self) -> &Layout;
    fn trial(&self, rng: &mut ChaCha8Rng, acc: &mut [f64]);
}

fn chunk_size(trials: usize) -> usize {
    (trials / 16).clamp(1, MAX_CHUNK)
}

fn run_suite(suite: &dyn Suite, cfg: &McConfig) -> MomentReport {
    let lay = suite.layout();
    let trials = cfg.trials.max(1);
    let chunk = chunk_size(trials);
    let n_chunks = trials.div_ceil(chunk);
    let partial: Vec<(Vec<f64>, usize)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(cfg.seed, STREAM_MONTECARLO_BASE + c as u64);
            let count = chunk.min(trials - c * chunk);
            let mut acc = vec![0.0; lay.n];
            for _ in 0..count {
                suite.trial(&mut rng, &mut acc);
            }
            (acc, count)
        })
        .collect();

    let mut total = vec![0.0; lay.n];
    for (acc, _) in &partial {
        for (t, a) in total.iter_mut().zip(acc) {
            *t += a;
        }
    }
    let mean: Vec<f64> = total.iter().map(|s| s / trials as f64).collect();
    let chunk_means: Vec<Vec<f64>> =
        partial.iter().map(|(acc, n)| acc.iter().map(|s| s / *n as f64).collect()).collect();

    let rows = lay
        .rows
        .iter()
        .map(|spec| {
            let empirical = spec.expr.eval(&mean);
            // batch means across chunks
            let stderr = if n_chunks > 1 {
                let vals: Vec<f64> = chunk_means.iter().map(|m| spec.expr.eval(m)).collect();
                let mu = vals.iter().sum::<f64>() / n_chunks as f64;
                let var = vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n_chunks - 1) as f64;
                (var / n_chunks as f64).sqrt()
            } else {
                0.0
            };
            let cf = spec.closed_form;
            let dev = (empirical - cf).abs();
            let pass = match spec.kind {
                RowKind::Identity => dev <= (cfg.rel_tol * cf.abs()).max(4.0 * stderr),
                // a violation has to be significant; at tiny SINR the gap sits below the noise
                RowKind::UpperBound => empirical - cf <= 4.0 * stderr,
            };
            MomentRow {
                suite: suite.name().to_string(),
                name: spec.name.clone(),
                kind: spec.kind,
                closed_form: cf,
                empirical,
                stderr,
                rel_dev: dev / cf.abs().max(REL_FLOOR),
                pass,
            }
        })
        .collect();
    MomentReport { seed: cfg.seed, trials, rel_tol: cfg.rel_tol, rows }
}

// ---------------------------------------------------------------- OMA

/// Everything the OMA oracle needs; P_S should already be the capped value.
#[derive(Debug, Clone)]
pub struct OmaScenario {
    pub gains: LinkGains,
    pub plan: PilotPlan,
    pub stats: UlEstimateStats,
    pub clusters: ClusterAssignment,
    pub alloc: PowerAllocation,
    pub dl: DlPilotStatsOma,
    /// tau_dd / tau_c
    pub dl_prelog: f64,
}

#[derive(Debug, Clone, Copy)]
struct OmaUserSlots {
    re: usize,
    im: usize,
    sq: usize,
    inter: usize,
    cross: usize,
    cross_sym: usize,
    xcorr: usize,
    err: usize,
    orth: usize,
    dl_err: usize,
    dl_hat: usize,
    dl_rate: usize,
}

struct OmaSuite {
    sc: OmaScenario,
    lay: Layout,
    est_p: Vec<usize>,
    est_s: Vec<usize>,
    user_p: Vec<OmaUserSlots>,
    user_s: Vec<OmaUserSlots>,
    /// closed-form DL denominators per user, for instantaneous rates
    dl_den_p: Vec<f64>,
    dl_den_s: Vec<f64>,
}

fn oma_user_rows(
    lay: &mut Layout,
    tag: &str,
    side: &OmaSide,
    dl: &DlSideStats,
    dl_prelog: f64,
) -> (Vec<OmaUserSlots>, Vec<f64>) {
    let form = CrossTermForm::Coherent;
    let mut slots = Vec::new();
    let mut dens = Vec::new();
    for k in 0..side.users() {
        let [re, im, sq, inter, cross, cross_sym, xcorr, err, orth, dl_err, dl_hat, dl_rate] = lay.slots::<12>();
        let s = OmaUserSlots { re, im, sq, inter, cross, cross_sym, xcorr, err, orth, dl_err, dl_hat, dl_rate };
        let own_rho_sum: f64 = side.own_rho.column(k).sum();
        let own_zeta_sum: f64 = side.own_zeta.column(k).sum();
        let contam_sum: f64 = if side.shared[k] { side.contam_rho.column(k).sum() } else { 0.0 };
        lay.row(format!("{tag}.error_variance[{k}]"), own_zeta_sum - own_rho_sum, Expr::Mean(err));
        lay.row(format!("{tag}.orthogonality[{k}]"), 0.0, Expr::Mean(orth));
        lay.row(format!("{tag}.cross_correlation[{k}]"), contam_sum, Expr::Mean(xcorr));
        lay.row(format!("{tag}.desired_mean[{k}]"), side.mean_mu(k), Expr::Mean(re));
        lay.row(format!("{tag}.detection_variance[{k}]"), side.v_ki(k, k), Expr::Var { re, im, sq });
        let inter_cf: f64 = (0..side.users()).filter(|&i| i != k).map(|i| side.v_ki(k, i)).sum();
        lay.row(format!("{tag}.inter_user[{k}]"), inter_cf, Expr::Mean(inter));
        let z = side.z(k, form);
        lay.row(format!("{tag}.cci[{k}]"), z, Expr::Mean(cross));
        lay.row(format!("{tag}.z_symbols[{k}]"), z, Expr::Mean(cross_sym));
        // received leakage power with the symbols actually sent
        lay.row(format!("{tag}.cci_power[{k}]"), side.other_power * z, Expr::Scaled(cross_sym, side.other_power));
        lay.row(
            format!("{tag}.sinr[{k}]"),
            side.sinr(k, form),
            Expr::Sinr { re, im, sq, own: vec![inter], other: cross, p_own: side.own_power, p_other: side.other_power },
        );
        lay.row(format!("{tag}.dl_kappa[{k}]"), dl.kappa[k], Expr::Mean(dl_err));
        let hat_cf = dl.mean_mu[k].powi(2) + dl.v_kk[k] - dl.kappa[k];
        lay.row(format!("{tag}.dl_mu_hat_power[{k}]"), hat_cf, Expr::Mean(dl_hat));
        let den = side.own_power * (inter_cf + dl.kappa[k]) + side.other_power * z + 1.0;
        let e_gamma = side.own_power * hat_cf / den;
        lay.bound(format!("{tag}.jensen[{k}]"), dl_prelog * (1.0 + e_gamma).log2(), Expr::Mean(dl_rate));
        slots.push(s);
        dens.push(den);
    }
    (slots, dens)
}

impl OmaSuite {
    fn new(sc: OmaScenario) -> Self {
        let mut lay = Layout::default();
        let (m, n, k, l) = sc.gains.dims();
        let mut est_p = Vec::new();
        for kk in 0..k {
            for mm in 0..m {
                let s = lay.slot();
                lay.row(format!("p.rho_f[{mm},{kk}]"), sc.stats.rho_f[(mm, kk)], Expr::Mean(s));
                est_p.push(s);
            }
        }
        let mut est_s = Vec::new();
        for ll in 0..l {
            for nn in 0..n {
                let s = lay.slot();
                lay.row(format!("s.rho_g[{nn},{ll}]"), sc.stats.rho_g[(nn, ll)], Expr::Mean(s));
                est_s.push(s);
            }
        }
        let ps = OmaSide::primary(&sc.stats, &sc.gains, &sc.clusters, &sc.alloc, &sc.plan);
        let ss = OmaSide::secondary(&sc.stats, &sc.gains, &sc.clusters, &sc.alloc, &sc.plan);
        let (user_p, dl_den_p) = oma_user_rows(&mut lay, "p", &ps, &sc.dl.primary, sc.dl_prelog);
        let (user_s, dl_den_s) = oma_user_rows(&mut lay, "s", &ss, &sc.dl.secondary, sc.dl_prelog);
        OmaSuite { sc, lay, est_p, est_s, user_p, user_s, dl_den_p, dl_den_s }
    }
}

/// Per-trial view of one system: its channels/estimates and the other system's.
struct OmaDraw<'a> {
    own: &'a CMat,
    own_hat: &'a CMat,
    own_eps: &'a CMat,
    cross: &'a CMat,
    other_hat: &'a CMat,
    delta: &'a Mat,
    eta: &'a Mat,
    other_delta: &'a Mat,
    other_eta: &'a Mat,
    shared: &'a [bool],
}

#[allow(clippy::too_many_arguments)]
fn oma_user_trial(
    rng: &mut ChaCha8Rng,
    d: &OmaDraw,
    slots: &[OmaUserSlots],
    dl: &DlSideStats,
    dl_den: &[f64],
    own_power: f64,
    dl_prelog: f64,
    acc: &mut [f64],
) {
    let (aps, users) = (d.own.nrows(), d.own.ncols());
    let (oaps, ousers) = (d.other_hat.nrows(), d.other_hat.ncols());
    let sq_pd = dl.p_pd.sqrt();
    let mu = |k: usize, i: usize| -> C64 {
        (0..aps).map(|m| d.own[(m, k)] * d.own_hat[(m, i)].conj() * (d.delta[(m, i)] * d.eta[(m, i)].sqrt())).sum()
    };
    let lambda = |k: usize, j: usize| -> C64 {
        (0..oaps)
            .map(|n| d.cross[(n, k)] * d.other_hat[(n, j)].conj() * (d.other_delta[(n, j)] * d.other_eta[(n, j)].sqrt()))
            .sum()
    };
    for (k, s) in slots.iter().enumerate() {
        let mkk = mu(k, k);
        acc[s.re] += mkk.re;
        acc[s.im] += mkk.im;
        acc[s.sq] += mkk.norm_sqr();
        acc[s.inter] += (0..users).filter(|&i| i != k).map(|i| mu(k, i).norm_sqr()).sum::<f64>();
        let lam: Vec<C64> = (0..ousers).map(|j| lambda(k, j)).collect();
        acc[s.cross] += lam.iter().map(|x| x.norm_sqr()).sum::<f64>();
        let sym: C64 = lam.iter().map(|&x| x * cn(rng, 1.0)).sum();
        acc[s.cross_sym] += sym.norm_sqr();
        if d.shared[k] {
            acc[s.xcorr] += (0..oaps).map(|n| (d.cross[(n, k)] * d.other_hat[(n, k)].conj()).re).sum::<f64>();
        }
        acc[s.err] += d.own_eps.column(k).iter().map(|e| e.norm_sqr()).sum::<f64>();
        acc[s.orth] += (0..aps).map(|m| (d.own_hat[(m, k)] * d.own_eps[(m, k)].conj()).re).sum::<f64>();

        // DL pilot of user k, contaminated by its pilot partner when shared
        let mut y = mkk * sq_pd + cn(rng, 1.0);
        if d.shared[k] {
            y += lam[k] * sq_pd;
        }
        let hat = dl.estimate(k, y);
        acc[s.dl_err] += (mkk - hat).norm_sqr();
        acc[s.dl_hat] += hat.norm_sqr();
        let g = own_power * hat.norm_sqr() / dl_den[k];
        acc[s.dl_rate] += dl_prelog * (1.0 + g).log2();
    }
}

impl Suite for OmaSuite {
    fn name(&self) -> &str {
        "oma"
    }

    fn layout(&self) -> &Layout {
        &self.lay
    }

    fn trial(&self, rng: &mut ChaCha8Rng, acc: &mut [f64]) {
        let sc = &self.sc;
        let ch = draw_realization(&sc.gains, rng);
        let est = simulate_ul_estimation(&ch, &sc.plan, &sc.stats, rng);
        for (slot, x) in self.est_p.iter().zip(est.f_hat.iter()) {
            acc[*slot] += x.norm_sqr();
        }
        for (slot, x) in self.est_s.iter().zip(est.g_hat.iter()) {
            acc[*slot] += x.norm_sqr();
        }
        let cl = &sc.clusters;
        let p = OmaDraw {
            own: &ch.f,
            own_hat: &est.f_hat,
            own_eps: &est.eps_f,
            cross: &ch.u,
            other_hat: &est.g_hat,
            delta: &cl.delta_p,
            eta: &sc.alloc.eta_p,
            other_delta: &cl.delta_s,
            other_eta: &sc.alloc.eta_s,
            shared: &sc.plan.pu_shared,
        };
        oma_user_trial(rng, &p, &self.user_p, &sc.dl.primary, &self.dl_den_p, sc.alloc.p_p, sc.dl_prelog, acc);
        let s = OmaDraw {
            own: &ch.g,
            own_hat: &est.g_hat,
            own_eps: &est.eps_g,
            cross: &ch.v,
            other_hat: &est.f_hat,
            delta: &cl.delta_s,
            eta: &sc.alloc.eta_s,
            other_delta: &cl.delta_p,
            other_eta: &sc.alloc.eta_p,
            shared: &sc.plan.su_shared,
        };
        oma_user_trial(rng, &s, &self.user_s, &sc.dl.secondary, &self.dl_den_s, sc.alloc.p_s, sc.dl_prelog, acc);
    }
}

/// OMA estimation, SINR-term, Z_k and DL-pilot identities plus the Jensen bound.
pub fn validate_oma(sc: &OmaScenario, cfg: &McConfig) -> Result<MomentReport> {
    rates::check_c3(&sc.stats, &sc.clusters, &sc.alloc)?;
    Ok(run_suite(&OmaSuite::new(sc.clone()), cfg))
}

// ---------------------------------------------------------------- NOMA

#[derive(Debug, Clone)]
pub struct NomaScenario {
    pub gains: NomaGains,
    pub plan: PilotPlan,
    pub stats: NomaUlStats,
    pub alloc: NomaPowerAllocation,
    pub sic: SicModel,
    pub dl: DlPilotStatsNoma,
    pub dl_prelog: f64,
}

#[derive(Debug, Clone, Copy)]
struct NomaUserSlots {
    alpha: usize,
    re: usize,
    im: usize,
    sq: usize,
    intra: usize,
    resid: usize,
    prop: usize,
    inter: usize,
    cross: usize,
    dl_hat: usize,
    dl_resid: usize,
    dl_rate: usize,
}

struct NomaSuite {
    sc: NomaScenario,
    lay: Layout,
    user_p: Vec<Vec<NomaUserSlots>>,
    user_s: Vec<Vec<NomaUserSlots>>,
    theta_p: Vec<Mat>,
    theta_s: Vec<Mat>,
    dl_den_p: Vec<Vec<f64>>,
    dl_den_s: Vec<Vec<f64>>,
}

fn noma_dl_den(dl: &NomaDlSide, c: usize, k: usize, own_power: f64, other_power: f64) -> f64 {
    let ns = dl.theta[c].nrows();
    let mut own = dl.varrho_other[(c, k)];
    for i in 0..ns {
        own += if i < k { dl.varrho_mu[c][(k, i)] } else { dl.varrho_mu[c][(k, i)] - dl.phi_mu[c][(k, i)] };
    }
    let lam: f64 = dl.varrho_lambda[c].iter().map(|m| m.row(k).sum()).sum();
    own_power * own + other_power * lam + 1.0
}

#[allow(clippy::type_complexity)]
fn noma_user_rows(
    lay: &mut Layout,
    tag: &str,
    side: &NomaSide,
    sic: &dyn Fn(usize) -> Vec<f64>,
    dl: &NomaDlSide,
    dl_prelog: f64,
) -> (Vec<Vec<NomaUserSlots>>, Vec<Mat>, Vec<Vec<f64>>) {
    let form = CrossTermForm::Coherent;
    let (nc, ns) = (side.clusters(), side.slots());
    let mut all = Vec::new();
    let mut thetas = Vec::new();
    let mut dens = Vec::new();
    for c in 0..nc {
        let vt = sic(c);
        let theta = Mat::from_fn(ns, ns, |k, i| side.theta(c, k, i));
        let mut users = Vec::new();
        let mut cdens = Vec::new();
        for k in 0..ns {
            let [alpha, re, im, sq, intra, resid, prop, inter, cross, dl_hat, dl_resid, dl_rate] = lay.slots::<12>();
            let t = format!("[{c},{k}]");
            lay.row(format!("{tag}.alpha{t}"), side.own_alpha[c].column(k).sum(), Expr::Mean(alpha));
            lay.row(format!("{tag}.desired_mean{t}"), theta[(k, k)], Expr::Mean(re));
            lay.row(format!("{tag}.detection_variance{t}"), side.var_own(c, k, k), Expr::Var { re, im, sq });
            let intra_cf: f64 = (0..k).map(|i| side.var_own(c, k, i) + theta[(k, i)].powi(2)).sum();
            lay.row(format!("{tag}.intra_after_sic{t}"), intra_cf, Expr::Mean(intra));
            let prop_cf: f64 = (k + 1..ns).map(|i| 2.0 * (1.0 - vt[i]) * theta[(k, i)].powi(2)).sum();
            let resid_cf: f64 = (k + 1..ns).map(|i| side.var_own(c, k, i)).sum::<f64>() + prop_cf;
            lay.row(format!("{tag}.sic_residual{t}"), resid_cf, Expr::Mean(resid));
            lay.row(format!("{tag}.sic_error_propagation{t}"), prop_cf, Expr::Mean(prop));
            lay.row(format!("{tag}.inter_cluster{t}"), side.other_clusters(c, k), Expr::Mean(inter));
            lay.row(format!("{tag}.z{t}"), side.z(c, k, form), Expr::Mean(cross));
            lay.row(
                format!("{tag}.sinr{t}"),
                side.sinr(c, k, &vt, form),
                Expr::Sinr {
                    re,
                    im,
                    sq,
                    own: vec![intra, resid, inter],
                    other: cross,
                    p_own: side.own_power,
                    p_other: side.other_power,
                },
            );
            lay.row(format!("{tag}.dl_phi{t}"), dl.phi_mu[c][(k, k)], Expr::Mean(dl_hat));
            let res_cf: f64 = (k..ns).map(|i| dl.varrho_mu[c][(k, i)] - dl.phi_mu[c][(k, i)]).sum();
            lay.row(format!("{tag}.dl_residual{t}"), res_cf, Expr::Mean(dl_resid));
            let den = noma_dl_den(dl, c, k, side.own_power, side.other_power);
            let eg = side.own_power * dl.phi_mu[c][(k, k)] / den;
            lay.bound(format!("{tag}.jensen{t}"), dl_prelog * (1.0 + eg).log2(), Expr::Mean(dl_rate));
            users.push(NomaUserSlots { alpha, re, im, sq, intra, resid, prop, inter, cross, dl_hat, dl_resid, dl_rate });
            cdens.push(den);
        }
        all.push(users);
        thetas.push(theta);
        dens.push(cdens);
    }
    (all, thetas, dens)
}

impl NomaSuite {
    fn new(sc: NomaScenario) -> Self {
        let mut lay = Layout::default();
        let ps = NomaSide::primary(&sc.gains, &sc.stats, &sc.alloc, &sc.plan);
        let ss = NomaSide::secondary(&sc.gains, &sc.stats, &sc.alloc, &sc.plan);
        let sic_p = |c: usize| sc.sic.theta_p(c);
        let sic_s = |c: usize| sc.sic.theta_s(c);
        let (user_p, theta_p, dl_den_p) = noma_user_rows(&mut lay, "p", &ps, &sic_p, &sc.dl.primary, sc.dl_prelog);
        let (user_s, theta_s, dl_den_s) = noma_user_rows(&mut lay, "s", &ss, &sic_s, &sc.dl.secondary, sc.dl_prelog);
        NomaSuite { sc, lay, user_p, user_s, theta_p, theta_s, dl_den_p, dl_den_s }
    }
}

/// Cluster-pilot estimates: every slot of a cluster is a scaled copy of one observation.
fn noma_estimates(
    rng: &mut ChaCha8Rng,
    own: &[CMat],
    cross: &[CMat],
    zeta: &[Mat],
    denom: &[Vec<f64>],
    shared: &[bool],
    pp: f64,
) -> Vec<CMat> {
    let sp = pp.sqrt();
    own.iter()
        .enumerate()
        .map(|(c, h)| {
            let mut hat = CMat::zeros(h.nrows(), h.ncols());
            for m in 0..h.nrows() {
                let mut y: C64 = h.row(m).iter().sum::<C64>() * sp + cn(rng, 1.0);
                if shared[c] && c < cross.len() {
                    y += cross[c].row(m).iter().sum::<C64>() * sp;
                }
                for i in 0..h.ncols() {
                    hat[(m, i)] = y * (sp * zeta[c][(m, i)] / denom[c][m]);
                }
            }
            hat
        })
        .collect()
}

struct NomaDraw<'a> {
    own: &'a [CMat],
    own_hat: &'a [CMat],
    cross: &'a [CMat],
    other_hat: &'a [CMat],
    eta: &'a [Mat],
    other_eta: &'a [Mat],
    shared: &'a [bool],
    theta: &'a [Mat],
    sic: Vec<Vec<f64>>,
}

#[allow(clippy::too_many_arguments)]
#[allow(clippy::needless_range_loop)]
fn noma_user_trial(
    rng: &mut ChaCha8Rng,
    d: &NomaDraw,
    slots: &[Vec<NomaUserSlots>],
    dl: &NomaDlSide,
    dl_den: &[Vec<f64>],
    own_power: f64,
    dl_prelog: f64,
    acc: &mut [f64],
) {
    let nc = d.own.len();
    let ns = d.own[0].ncols();
    let aps = d.own[0].nrows();
    let sq_pd = dl.p_pd.sqrt();
    for c in 0..nc {
        for k in 0..ns {
            let s = &slots[c][k];
            // X[c'][i] = sum_m sqrt(eta) f_mck f_hat_mc'i^*
            let x: Vec<Vec<C64>> = (0..nc)
                .map(|cc| {
                    (0..ns)
                        .map(|i| {
                            (0..aps)
                                .map(|m| d.own[c][(m, k)] * d.own_hat[cc][(m, i)].conj() * d.eta[cc][(m, i)].sqrt())
                                .sum()
                        })
                        .collect()
                })
                .collect();
            let lam: Vec<Vec<C64>> = d
                .other_hat
                .iter()
                .enumerate()
                .map(|(cc, gh)| {
                    (0..gh.ncols())
                        .map(|j| {
                            (0..gh.nrows())
                                .map(|n| d.cross[c][(n, k)] * gh[(n, j)].conj() * d.other_eta[cc][(n, j)].sqrt())
                                .sum()
                        })
                        .collect()
                })
                .collect();
            acc[s.alpha] += d.own_hat[c].column(k).iter().map(|h| h.norm_sqr()).sum::<f64>();
            let xk = x[c][k];
            acc[s.re] += xk.re;
            acc[s.im] += xk.im;
            acc[s.sq] += xk.norm_sqr();
            acc[s.intra] += (0..k).map(|i| x[c][i].norm_sqr()).sum::<f64>();

            // q_i = vartheta q_hat_i + e_i; the receiver subtracts E[X_i] q_hat_i
            let mut resid = C64::new(0.0, 0.0);
            let mut centred = 0.0;
            for i in k + 1..ns {
                let vt = d.sic[c][i];
                let q_hat = cn(rng, 1.0);
                let e = cn(rng, 1.0 - vt * vt);
                let th = d.theta[c][(k, i)];
                resid += x[c][i] * (q_hat * vt + e) - q_hat * th;
                centred += (x[c][i] - th).norm_sqr();
            }
            acc[s.resid] += resid.norm_sqr();
            acc[s.prop] += resid.norm_sqr() - centred;
            acc[s.inter] += (0..nc).filter(|&cc| cc != c).flat_map(|cc| x[cc].iter()).map(|v| v.norm_sqr()).sum::<f64>();
            acc[s.cross] += lam.iter().flatten().map(|v| v.norm_sqr()).sum::<f64>();

            let mut y = x[c].iter().sum::<C64>() * sq_pd + cn(rng, 1.0);
            if d.shared[c] && c < lam.len() {
                y += lam[c].iter().sum::<C64>() * sq_pd;
            }
            let hat_k = dl.estimate(c, k, k, y);
            acc[s.dl_hat] += hat_k.norm_sqr();
            acc[s.dl_resid] += (k..ns).map(|t| (x[c][t] - dl.estimate(c, k, t, y)).norm_sqr()).sum::<f64>();
            let g = own_power * hat_k.norm_sqr() / dl_den[c][k];
            acc[s.dl_rate] += dl_prelog * (1.0 + g).log2();
        }
    }
}

impl Suite for NomaSuite {
    fn name(&self) -> &str {
        "noma"
    }

    fn layout(&self) -> &Layout {
        &self.lay
    }

    fn trial(&self, rng: &mut ChaCha8Rng, acc: &mut [f64]) {
        let sc = &self.sc;
        let g = &sc.gains;
        let draw = |rng: &mut ChaCha8Rng, z: &[Mat]| -> Vec<CMat> { z.iter().map(|m| cn_mat(rng, m)).collect() };
        let f = draw(rng, &g.zeta_f);
        let gg = draw(rng, &g.zeta_g);
        let u = draw(rng, &g.zeta_u);
        let v = draw(rng, &g.zeta_v);
        let pp = sc.stats.pilot_energy;
        let f_hat = noma_estimates(rng, &f, &v, &g.zeta_f, &sc.stats.denom_p, &sc.plan.pu_shared, pp);
        let g_hat = noma_estimates(rng, &gg, &u, &g.zeta_g, &sc.stats.denom_s, &sc.plan.su_shared, pp);
        let p = NomaDraw {
            own: &f,
            own_hat: &f_hat,
            cross: &u,
            other_hat: &g_hat,
            eta: &sc.alloc.eta_p,
            other_eta: &sc.alloc.eta_s,
            shared: &sc.plan.pu_shared,
            theta: &self.theta_p,
            sic: (0..f.len()).map(|c| sc.sic.theta_p(c)).collect(),
        };
        noma_user_trial(rng, &p, &self.user_p, &sc.dl.primary, &self.dl_den_p, sc.alloc.p_p, sc.dl_prelog, acc);
        let s = NomaDraw {
            own: &gg,
            own_hat: &g_hat,
            cross: &v,
            other_hat: &f_hat,
            eta: &sc.alloc.eta_s,
            other_eta: &sc.alloc.eta_p,
            shared: &sc.plan.su_shared,
            theta: &self.theta_s,
            sic: (0..gg.len()).map(|c| sc.sic.theta_s(c)).collect(),
        };
        noma_user_trial(rng, &s, &self.user_s, &sc.dl.secondary, &self.dl_den_s, sc.alloc.p_s, sc.dl_prelog, acc);
    }
}

/// NOMA estimation, SIC, cross-system and DL-pilot identities plus the Jensen bound.
pub fn validate_noma(sc: &NomaScenario, cfg: &McConfig) -> Result<MomentReport> {
    rates::check_c3_noma(&sc.stats, &sc.alloc)?;
    Ok(run_suite(&NomaSuite::new(sc.clone()), cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_variance_draws() {
        let gains = LinkGains {
            zeta_f: Mat::from_element(1, 1, 1.0),
            zeta_g: Mat::from_element(1, 1, 2.0),
            zeta_u: Mat::from_element(1, 1, 0.5),
            zeta_v: Mat::from_element(1, 1, 1.0),
        };
        let n = 100_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for ch in draw_channels(&gains, 3, n) {
            let x = ch.f[(0, 0)].norm_sqr();
            s += x;
            s2 += x * x;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean} se {se}");

        let a: Vec<_> = draw_channels(&gains, 9, 5).collect();
        let b: Vec<_> = draw_channels(&gains, 9, 5).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn estimate_plus_error_is_channel() {
        let gains = LinkGains {
            zeta_f: Mat::from_element(2, 2, 0.4),
            zeta_g: Mat::from_element(2, 2, 0.9),
            zeta_u: Mat::from_element(2, 2, 0.1),
            zeta_v: Mat::from_element(2, 2, 0.2),
        };
        let plan = crate::estimation::assign_pilots_oma(2, 2, 1, 2).unwrap();
        let stats = crate::estimation::ul_stats_oma(&gains, &plan, 1.0).unwrap();
        let mut rng = stream_rng(1, STREAM_MONTECARLO_BASE);
        let ch = draw_realization(&gains, &mut rng);
        let est = simulate_ul_estimation(&ch, &plan, &stats, &mut rng);
        let back = &est.f_hat + &est.eps_f;
        for (a, b) in back.iter().zip(ch.f.iter()) {
            assert!((a - b).norm() < 1e-15);
        }
    }
}
