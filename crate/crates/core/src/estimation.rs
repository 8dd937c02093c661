//! MMSE channel-estimation statistics. Everything here is deterministic and
//! expressed in noise-normalized units (unit-variance receiver noise).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::{NomaPowerAllocation, PowerAllocation};
use crate::topology::{ClusterAssignment, LinkGains, NomaShape};
use crate::views::{NomaSide, OmaSide};
use crate::Mat;

/// Pilot assignment. Shared pairs are (PU i, SU i) for i < q; in NOMA mode
/// the same structure is read per cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotPlan {
    pub q: usize,
    pub pu_pilot: Vec<usize>,
    pub su_pilot: Vec<usize>,
    pub tau_p: usize,
    pub pu_shared: Vec<bool>,
    pub su_shared: Vec<bool>,
}

impl PilotPlan {
    /// Distinct pilot sequences in use.
    pub fn pilots_used(&self) -> usize {
        self.pu_pilot.len() + self.su_pilot.len() - self.q
    }
}

pub fn assign_pilots_oma(k: usize, l: usize, q: usize, tau_p: usize) -> Result<PilotPlan> {
    if q > k.min(l) {
        return Err(Error::PilotRange { q, k, l });
    }
    let needed = k.max(l);
    if tau_p < needed {
        return Err(Error::PilotLength { tau_p, needed });
    }
    let pu_pilot: Vec<usize> = (0..k).collect();
    let su_pilot: Vec<usize> = (0..l).map(|j| if j < q { j } else { k + j - q }).collect();
    Ok(PilotPlan {
        q,
        pu_pilot,
        su_pilot,
        tau_p,
        pu_shared: (0..k).map(|i| i < q).collect(),
        su_shared: (0..l).map(|j| j < q).collect(),
    })
}

/// Cluster-level pilots: cluster a of the primary shares with cluster a of the secondary for a < q.
pub fn assign_pilots_noma(shape: &NomaShape, q: usize, tau_p: usize) -> Result<PilotPlan> {
    assign_pilots_oma(shape.a, shape.b, q, tau_p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UlEstimateStats {
    pub c_p: Mat,
    pub c_s: Mat,
    pub rho_f: Mat,
    pub rho_g: Mat,
    /// E[u_nk g_hat_nk^*], zero for columns without a shared pilot
    pub rho_u: Mat,
    /// E[v_ml f_hat_ml^*]
    pub rho_v: Mat,
    pub pilot_energy: f64,
}

/// `p_ul` is the per-symbol UL pilot power over the noise power.
pub fn ul_stats_oma(gains: &LinkGains, plan: &PilotPlan, p_ul: f64) -> Result<UlEstimateStats> {
    let (m, n, k, l) = gains.dims();
    if plan.pu_shared.len() != k || plan.su_shared.len() != l {
        return Err(Error::Shape(format!(
            "pilot plan covers {}x{} users, gains have {k}x{l}",
            plan.pu_shared.len(),
            plan.su_shared.len()
        )));
    }
    let pp = plan.tau_p as f64 * p_ul;
    let sp = pp.sqrt();

    let mut c_p = Mat::zeros(m, k);
    let mut rho_f = Mat::zeros(m, k);
    let mut c_s = Mat::zeros(n, l);
    let mut rho_g = Mat::zeros(n, l);
    let mut rho_u = Mat::zeros(n, k);
    let mut rho_v = Mat::zeros(m, l);

    for kk in 0..k {
        // PU kk's pilot partner is SU kk when shared
        let shared = plan.pu_shared[kk];
        for mm in 0..m {
            let zf = gains.zeta_f[(mm, kk)];
            let zv = if shared { gains.zeta_v[(mm, kk)] } else { 0.0 };
            let c = sp * zf / (pp * (zf + zv) + 1.0);
            c_p[(mm, kk)] = c;
            rho_f[(mm, kk)] = sp * c * zf;
        }
    }
    for ll in 0..l {
        let shared = plan.su_shared[ll];
        for nn in 0..n {
            let zg = gains.zeta_g[(nn, ll)];
            let zu = if shared { gains.zeta_u[(nn, ll)] } else { 0.0 };
            let c = sp * zg / (pp * (zg + zu) + 1.0);
            c_s[(nn, ll)] = c;
            rho_g[(nn, ll)] = sp * c * zg;
        }
    }
    for q in 0..plan.q {
        for nn in 0..n {
            rho_u[(nn, q)] = sp * c_s[(nn, q)] * gains.zeta_u[(nn, q)];
        }
        for mm in 0..m {
            rho_v[(mm, q)] = sp * c_p[(mm, q)] * gains.zeta_v[(mm, q)];
        }
    }
    Ok(UlEstimateStats { c_p, c_s, rho_f, rho_g, rho_u, rho_v, pilot_energy: pp })
}

/// Large-scale gains regrouped by NOMA cluster. Column order inside a cluster
/// is the SIC decoding order once `reordered` has been applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NomaGains {
    pub shape: NomaShape,
    /// [a] M x K
    pub zeta_f: Vec<Mat>,
    /// [b] N x L
    pub zeta_g: Vec<Mat>,
    /// [a] N x K, S-APs to the PUs of cluster a
    pub zeta_u: Vec<Mat>,
    /// [b] M x L, P-APs to the SUs of cluster b
    pub zeta_v: Vec<Mat>,
    /// original user index of each (cluster, slot)
    pub pu_ids: Vec<Vec<usize>>,
    pub su_ids: Vec<Vec<usize>>,
}

fn column_block(src: &Mat, ids: &[usize]) -> Mat {
    Mat::from_fn(src.nrows(), ids.len(), |r, c| src[(r, ids[c])])
}

impl NomaGains {
    /// Sequential clusters: user u belongs to cluster u / K, slot u % K.
    pub fn from_link_gains(gains: &LinkGains, shape: NomaShape) -> Result<Self> {
        let (_, _, k, l) = gains.dims();
        if k != shape.a * shape.k || l != shape.b * shape.l {
            return Err(Error::Shape(format!(
                "{k} PUs / {l} SUs cannot form {}x{} and {}x{} clusters",
                shape.a, shape.k, shape.b, shape.l
            )));
        }
        let pu_ids: Vec<Vec<usize>> =
            (0..shape.a).map(|a| (a * shape.k..(a + 1) * shape.k).collect()).collect();
        let su_ids: Vec<Vec<usize>> =
            (0..shape.b).map(|b| (b * shape.l..(b + 1) * shape.l).collect()).collect();
        Ok(Self::build(gains, shape, pu_ids, su_ids))
    }

    fn build(gains: &LinkGains, shape: NomaShape, pu_ids: Vec<Vec<usize>>, su_ids: Vec<Vec<usize>>) -> Self {
        NomaGains {
            shape,
            zeta_f: pu_ids.iter().map(|ids| column_block(&gains.zeta_f, ids)).collect(),
            zeta_g: su_ids.iter().map(|ids| column_block(&gains.zeta_g, ids)).collect(),
            zeta_u: pu_ids.iter().map(|ids| column_block(&gains.zeta_u, ids)).collect(),
            zeta_v: su_ids.iter().map(|ids| column_block(&gains.zeta_v, ids)).collect(),
            pu_ids,
            su_ids,
        }
    }

    /// Apply per-cluster slot permutations (perm[c][new_slot] = old_slot).
    pub fn reordered(&self, perm_p: &[Vec<usize>], perm_s: &[Vec<usize>]) -> Self {
        let pick = |mats: &[Mat], perm: &[Vec<usize>]| -> Vec<Mat> {
            mats.iter().zip(perm).map(|(z, p)| column_block(z, p)).collect()
        };
        let ids = |ids: &[Vec<usize>], perm: &[Vec<usize>]| -> Vec<Vec<usize>> {
            ids.iter().zip(perm).map(|(v, p)| p.iter().map(|&i| v[i]).collect()).collect()
        };
        NomaGains {
            shape: self.shape,
            zeta_f: pick(&self.zeta_f, perm_p),
            zeta_g: pick(&self.zeta_g, perm_s),
            zeta_u: pick(&self.zeta_u, perm_p),
            zeta_v: pick(&self.zeta_v, perm_s),
            pu_ids: ids(&self.pu_ids, perm_p),
            su_ids: ids(&self.su_ids, perm_s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NomaUlStats {
    /// [a] M x K, E|f_hat_mak|^2
    pub alpha_f: Vec<Mat>,
    /// [b] N x L
    pub alpha_g: Vec<Mat>,
    /// [a][m], variance of the received cluster pilot at P-AP m
    pub denom_p: Vec<Vec<f64>>,
    pub denom_s: Vec<Vec<f64>>,
    pub pilot_energy: f64,
}

pub fn ul_stats_noma(gains: &NomaGains, plan: &PilotPlan, p_ul: f64) -> Result<NomaUlStats> {
    let sh = gains.shape;
    if plan.pu_shared.len() != sh.a || plan.su_shared.len() != sh.b {
        return Err(Error::Shape("pilot plan must be cluster-level in NOMA mode".into()));
    }
    let pp = plan.tau_p as f64 * p_ul;
    let side = |own: &[Mat], cross: &[Mat], shared: &[bool]| {
        let mut alpha = Vec::with_capacity(own.len());
        let mut denom = Vec::with_capacity(own.len());
        for (c, z) in own.iter().enumerate() {
            let partner = shared[c] && c < cross.len();
            let d: Vec<f64> = (0..z.nrows())
                .map(|m| {
                    let own_sum: f64 = z.row(m).sum();
                    let cross_sum: f64 = if partner { cross[c].row(m).sum() } else { 0.0 };
                    pp * (own_sum + cross_sum) + 1.0
                })
                .collect();
            alpha.push(Mat::from_fn(z.nrows(), z.ncols(), |m, k| pp * z[(m, k)].powi(2) / d[m]));
            denom.push(d);
        }
        (alpha, denom)
    };
    let (alpha_f, denom_p) = side(&gains.zeta_f, &gains.zeta_v, &plan.pu_shared);
    let (alpha_g, denom_s) = side(&gains.zeta_g, &gains.zeta_u, &plan.su_shared);
    Ok(NomaUlStats { alpha_f, alpha_g, denom_p, denom_s, pilot_energy: pp })
}

/// DL-pilot statistics of one OMA system, indexed by its own users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlSideStats {
    pub v_kk: Vec<f64>,
    pub u_kk: Vec<f64>,
    pub kappa: Vec<f64>,
    /// (k, i): E|mu_ki|^2 for i != k; the diagonal holds v_kk
    pub v_ki: Mat,
    pub mean_mu: Vec<f64>,
    pub mean_lambda: Vec<f64>,
    pub p_pd: f64,
}

impl DlSideStats {
    fn from_side(side: &OmaSide, p_pd: f64) -> Self {
        let users = side.users();
        let v_ki = Mat::from_fn(users, users, |k, i| side.v_ki(k, i));
        let v_kk: Vec<f64> = (0..users).map(|k| v_ki[(k, k)]).collect();
        let u_kk: Vec<f64> = (0..users).map(|k| side.u_kk(k)).collect();
        let kappa = v_kk
            .iter()
            .zip(&u_kk)
            .map(|(&v, &u)| v * (1.0 + p_pd * u) / (p_pd * (v + u) + 1.0))
            .collect();
        DlSideStats {
            v_kk,
            u_kk,
            kappa,
            v_ki,
            mean_mu: (0..users).map(|k| side.mean_mu(k)).collect(),
            mean_lambda: (0..users).map(|k| side.mean_lambda(k)).collect(),
            p_pd,
        }
    }

    /// LMMSE estimate of mu_kk from the received DL pilot y (noise-normalized).
    pub fn estimate(&self, k: usize, y: crate::C64) -> crate::C64 {
        let s = self.p_pd.sqrt();
        let (v, u) = (self.v_kk[k], self.u_kk[k]);
        let mean_y = s * (self.mean_mu[k] + self.mean_lambda[k]);
        crate::C64::new(self.mean_mu[k], 0.0) + (y - mean_y) * (s * v / (self.p_pd * (v + u) + 1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlPilotStatsOma {
    pub primary: DlSideStats,
    pub secondary: DlSideStats,
}

/// `p_pd` is tau_pd * P_d over the noise power.
pub fn dl_stats_oma(
    stats: &UlEstimateStats,
    gains: &LinkGains,
    clusters: &ClusterAssignment,
    alloc: &PowerAllocation,
    plan: &PilotPlan,
    p_pd: f64,
) -> DlPilotStatsOma {
    let p = OmaSide::primary(stats, gains, clusters, alloc, plan);
    let s = OmaSide::secondary(stats, gains, clusters, alloc, plan);
    DlPilotStatsOma { primary: DlSideStats::from_side(&p, p_pd), secondary: DlSideStats::from_side(&s, p_pd) }
}

/// DL-pilot statistics of one NOMA system. Outer index is the cluster, matrix
/// rows the receiving slot k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NomaDlSide {
    /// (k, i): E[mu_i] at user k
    pub theta: Vec<Mat>,
    /// (k, j): E[lambda_j] from the pilot-sharing cluster of the other system
    pub psi: Vec<Mat>,
    /// (k, t): LMMSE gain of mu_t on the received pilot
    pub omega: Vec<Mat>,
    /// (k, i): E|mu_i|^2
    pub varrho_mu: Vec<Mat>,
    /// (c, k): sum of E|mu|^2 over the other own clusters
    pub varrho_other: Mat,
    /// [c][c'] (k, j): cross-system leakage power per stream
    pub varrho_lambda: Vec<Vec<Mat>>,
    /// (k, t): E|mu_hat_t|^2
    pub phi_mu: Vec<Mat>,
    pub mean_y: Mat,
    pub var_y: Mat,
    pub p_pd: f64,
}

impl NomaDlSide {
    fn from_side(side: &NomaSide, p_pd: f64, lambda_contamination: bool) -> Self {
        let (nc, ns, naps) = (side.clusters(), side.slots(), side.aps());
        let other_clusters = side.other_zeta.len();
        let other_slots = side.other_zeta[0].ncols();
        let mut out = NomaDlSide {
            theta: Vec::new(),
            psi: Vec::new(),
            omega: Vec::new(),
            varrho_mu: Vec::new(),
            varrho_other: Mat::zeros(nc, ns),
            varrho_lambda: Vec::new(),
            phi_mu: Vec::new(),
            mean_y: Mat::zeros(nc, ns),
            var_y: Mat::zeros(nc, ns),
            p_pd,
        };
        let sq = p_pd.sqrt();
        for c in 0..nc {
            let theta = Mat::from_fn(ns, ns, |k, i| side.theta(c, k, i));
            let psi = Mat::from_fn(ns, other_slots, |k, j| side.psi(c, k, j));
            let varrho = Mat::from_fn(ns, ns, |k, i| side.var_own(c, k, i) + theta[(k, i)].powi(2));
            let mut omega = Mat::zeros(ns, ns);
            let mut phi = Mat::zeros(ns, ns);
            let mut lam: Vec<Mat> = (0..other_clusters)
                .map(|cc| {
                    Mat::from_fn(ns, side.other_eta[cc].ncols(), |k, j| {
                        (0..side.other_zeta[cc].nrows())
                            .map(|n| {
                                side.other_eta[cc][(n, j)]
                                    * side.other_alpha[cc][(n, j)]
                                    * side.cross_zeta[c][(n, k)]
                            })
                            .sum()
                    })
                })
                .collect();
            if lambda_contamination && c < other_clusters {
                for k in 0..ns {
                    for j in 0..other_slots {
                        lam[c][(k, j)] += psi[(k, j)].powi(2);
                    }
                }
            }
            for k in 0..ns {
                // own streams share one estimate direction per AP, so the mu_t are correlated
                let cov = |t: usize, i: usize| -> f64 {
                    let z = &side.own_zeta[c];
                    (0..naps)
                        .map(|m| {
                            let zk = z[(m, k)];
                            if zk == 0.0 {
                                return 0.0;
                            }
                            (side.own_eta[c][(m, t)] * side.own_eta[c][(m, i)]).sqrt()
                                * (z[(m, t)] / zk)
                                * (z[(m, i)] / zk)
                                * side.own_alpha[c][(m, k)]
                                * zk
                        })
                        .sum()
                };
                let cov_sum: Vec<f64> = (0..ns).map(|t| (0..ns).map(|i| cov(t, i)).sum()).collect();
                let var_mu: f64 = cov_sum.iter().sum();
                let var_lambda = if side.shared[c] && c < other_clusters {
                    (0..side.other_zeta[c].nrows())
                        .map(|n| {
                            let s: f64 = (0..other_slots)
                                .map(|j| side.other_eta[c][(n, j)].sqrt() * side.other_zeta[c][(n, j)])
                                .sum();
                            side.pilot_energy * s * s * side.cross_zeta[c][(n, k)] / side.other_denom[c][n]
                        })
                        .sum()
                } else {
                    0.0
                };
                let vy = p_pd * (var_mu + var_lambda) + 1.0;
                let my = sq * ((0..ns).map(|i| theta[(k, i)]).sum::<f64>() + (0..other_slots).map(|j| psi[(k, j)]).sum::<f64>());
                out.var_y[(c, k)] = vy;
                out.mean_y[(c, k)] = my;
                for t in 0..ns {
                    let w = sq * cov_sum[t] / vy;
                    omega[(k, t)] = w;
                    phi[(k, t)] = theta[(k, t)].powi(2) + w * w * vy;
                }
                out.varrho_other[(c, k)] = side.other_clusters(c, k);
            }
            out.theta.push(theta);
            out.psi.push(psi);
            out.omega.push(omega);
            out.varrho_mu.push(varrho);
            out.varrho_lambda.push(lam);
            out.phi_mu.push(phi);
        }
        out
    }

    /// LMMSE estimate of mu_t at user (c, k) from its received DL pilot.
    pub fn estimate(&self, c: usize, k: usize, t: usize, y: crate::C64) -> crate::C64 {
        crate::C64::new(self.theta[c][(k, t)], 0.0) + (y - self.mean_y[(c, k)]) * self.omega[c][(k, t)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlPilotStatsNoma {
    pub primary: NomaDlSide,
    pub secondary: NomaDlSide,
}

/// `lambda_contamination` adds the pilot-sharing mean term to the cross-system
/// leakage power (off by default).
pub fn dl_stats_noma(
    stats: &NomaUlStats,
    gains: &NomaGains,
    alloc: &NomaPowerAllocation,
    plan: &PilotPlan,
    p_pd: f64,
    lambda_contamination: bool,
) -> DlPilotStatsNoma {
    let p = NomaSide::primary(gains, stats, alloc, plan);
    let s = NomaSide::secondary(gains, stats, alloc, plan);
    DlPilotStatsNoma {
        primary: NomaDlSide::from_side(&p, p_pd, lambda_contamination),
        secondary: NomaDlSide::from_side(&s, p_pd, lambda_contamination),
    }
}
