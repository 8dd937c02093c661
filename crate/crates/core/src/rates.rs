//! Closed-form SINRs, rates and the secondary interference functionals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{DlPilotStatsNoma, DlPilotStatsOma, NomaDlSide, NomaGains, NomaUlStats, PilotPlan, UlEstimateStats};
use crate::topology::{ClusterAssignment, LinkGains, NomaShape};
use crate::views::{NomaSide, OmaSide};
use crate::Mat;

/// Slack allowed on the per-AP power normalization.
pub const C3_TOL: f64 = 1e-6;

/// OMA power coefficients. Powers are noise-normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub eta_p: Mat,
    pub eta_s: Mat,
    pub p_p: f64,
    pub p_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NomaPowerAllocation {
    /// [a] M x K
    pub eta_p: Vec<Mat>,
    /// [b] N x L
    pub eta_s: Vec<Mat>,
    pub p_p: f64,
    pub p_s: f64,
}

/// How the coherent cross terms (the pilot-sharing leakage and the NOMA mean
/// terms) are summed over APs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossTermForm {
    /// |sum over APs|^2, the exact second moment
    #[default]
    Coherent,
    /// sum over APs of per-AP squares
    PerAp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "oma-stat")]
    OmaStat,
    #[serde(rename = "oma-dlpilot")]
    OmaDlPilot,
    #[serde(rename = "noma-stat")]
    NomaStat,
    #[serde(rename = "noma-dlpilot")]
    NomaDlPilot,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::OmaStat => "oma-stat",
            Regime::OmaDlPilot => "oma-dlpilot",
            Regime::NomaStat => "noma-stat",
            Regime::NomaDlPilot => "noma-dlpilot",
        }
    }

    pub fn dl_pilot(self) -> bool {
        matches!(self, Regime::OmaDlPilot | Regime::NomaDlPilot)
    }
}

/// SIC error variances per (cluster, slot).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SicModel {
    pub sigma_e2_p: Vec<Vec<f64>>,
    pub sigma_e2_s: Vec<Vec<f64>>,
}

impl SicModel {
    pub fn perfect(shape: &NomaShape) -> Self {
        Self::from_theta(shape, 1.0).expect("theta = 1 is valid")
    }

    /// Same correlation coefficient for every stream.
    pub fn from_theta(shape: &NomaShape, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::InvalidConfig(format!("SIC correlation {theta} outside (0, 1]")));
        }
        let s = 1.0 / (theta * theta) - 1.0;
        let s = s.max(0.0);
        Ok(SicModel {
            sigma_e2_p: vec![vec![s; shape.k]; shape.a],
            sigma_e2_s: vec![vec![s; shape.l]; shape.b],
        })
    }

    fn theta(s2: f64) -> f64 {
        1.0 / (1.0 + s2).sqrt()
    }

    pub fn theta_p(&self, a: usize) -> Vec<f64> {
        self.sigma_e2_p[a].iter().map(|&s| Self::theta(s)).collect()
    }

    pub fn theta_s(&self, b: usize) -> Vec<f64> {
        self.sigma_e2_s[b].iter().map(|&s| Self::theta(s)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub regime: Regime,
    /// NOMA users are listed cluster by cluster in decoding order
    pub gamma_p: Vec<f64>,
    pub gamma_s: Vec<f64>,
    pub rate_p: Vec<f64>,
    pub rate_s: Vec<f64>,
    pub sum_primary: f64,
    pub sum_secondary: f64,
}

impl RateReport {
    pub fn new(regime: Regime, gamma_p: Vec<f64>, gamma_s: Vec<f64>, prelog: f64) -> Self {
        let r = |g: &[f64]| g.iter().map(|&x| prelog * (1.0 + x).log2()).collect::<Vec<_>>();
        let rate_p = r(&gamma_p);
        let rate_s = r(&gamma_s);
        let (sum_primary, sum_secondary) = sum_rates(&rate_p, &rate_s);
        RateReport { regime, gamma_p, gamma_s, rate_p, rate_s, sum_primary, sum_secondary }
    }

    pub fn min_rate(&self) -> f64 {
        self.rate_p.iter().chain(&self.rate_s).copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_rate(&self) -> f64 {
        self.rate_p.iter().chain(&self.rate_s).copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn sum_rates(rate_p: &[f64], rate_s: &[f64]) -> (f64, f64) {
    (rate_p.iter().sum(), rate_s.iter().sum())
}

/// Fraction of the coherence interval left for data.
pub fn prelog(tau_c: usize, overhead: usize) -> Result<f64> {
    if overhead >= tau_c {
        return Err(Error::Overhead { overhead, tau_c });
    }
    Ok((tau_c - overhead) as f64 / tau_c as f64)
}

pub fn rate_from_sinr(gamma: &[f64], tau_c: usize, overhead: usize) -> Result<Vec<f64>> {
    let p = prelog(tau_c, overhead)?;
    Ok(gamma.iter().map(|&g| p * (1.0 + g).log2()).collect())
}

/// Jensen upper bound on the DL-pilot ergodic rate, from E[gamma].
pub fn rate_dlpilot_upperbound(expected_gamma: &[f64], tau_c: usize, tau_p: usize, tau_pd: usize) -> Result<Vec<f64>> {
    rate_from_sinr(expected_gamma, tau_c, tau_p + tau_pd)
}

fn max_ap_load(delta: &Mat, eta: &Mat, rho: &Mat) -> (usize, f64) {
    (0..eta.nrows())
        .map(|m| {
            let load: f64 = (0..eta.ncols()).map(|k| delta[(m, k)] * eta[(m, k)] * rho[(m, k)]).sum();
            (m, load)
        })
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
}

/// Per-AP normalization sum_k delta eta rho <= 1 for both systems.
pub fn check_c3(stats: &UlEstimateStats, clusters: &ClusterAssignment, alloc: &PowerAllocation) -> Result<()> {
    if alloc.eta_p.shape() != stats.rho_f.shape() || alloc.eta_s.shape() != stats.rho_g.shape() {
        return Err(Error::Shape("allocation does not match the estimate tables".into()));
    }
    if alloc.eta_p.iter().chain(alloc.eta_s.iter()).any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::InvalidConfig("power coefficients must be finite and nonnegative".into()));
    }
    for (system, delta, eta, rho) in [
        ("primary", &clusters.delta_p, &alloc.eta_p, &stats.rho_f),
        ("secondary", &clusters.delta_s, &alloc.eta_s, &stats.rho_g),
    ] {
        let (ap, load) = max_ap_load(delta, eta, rho);
        if load > 1.0 + C3_TOL {
            return Err(Error::PowerBudget { system, ap, load });
        }
    }
    Ok(())
}

pub fn sinr_primary_oma(
    stats: &UlEstimateStats,
    gains: &LinkGains,
    clusters: &ClusterAssignment,
    alloc: &PowerAllocation,
    plan: &PilotPlan,
    form: CrossTermForm,
) -> Result<Vec<f64>> {
    check_c3(stats, clusters, alloc)?;
    let side = OmaSide::primary(stats, gains, clusters, alloc, plan);
    Ok((0..side.users()).map(|k| side.sinr(k, form)).collect())
}

pub fn sinr_secondary_oma(
    stats: &UlEstimateStats,
    gains: &LinkGains,
    clusters: &ClusterAssignment,
    alloc: &PowerAllocation,
    plan: &PilotPlan,
    form: CrossTermForm,
) -> Result<Vec<f64>> {
    check_c3(stats, clusters, alloc)?;
    let side = OmaSide::secondary(stats, gains, clusters, alloc, plan);
    Ok((0..side.users()).map(|k| side.sinr(k, form)).collect())
}

/// Average secondary leakage power at each PU per unit of P_S.
pub fn secondary_cci_zk(
    stats: &UlEstimateStats,
    gains: &LinkGains,
    clusters: &ClusterAssignment,
    alloc: &PowerAllocation,
    plan: &PilotPlan,
    form: CrossTermForm,
) -> Vec<f64> {
    let side = OmaSide::primary(stats, gains, clusters, alloc, plan);
    (0..side.users()).map(|k| side.z(k, form)).collect()
}

/// Largest secondary power that keeps every PU under its threshold.
pub fn cap_secondary_power(z: &[f64], i_t: &[f64], p_s: f64) -> f64 {
    z.iter()
        .zip(i_t)
        .filter(|(&z, _)| z > 0.0)
        .map(|(&z, &it)| it / z)
        .fold(p_s, f64::min)
}

fn oma_dlpilot_side(dl: &crate::estimation::DlSideStats, side: &OmaSide, form: CrossTermForm) -> Vec<f64> {
    (0..side.users())
        .map(|k| {
            let kap = dl.kappa[k];
            let num = side.own_power * (dl.mean_mu[k].powi(2) + dl.v_kk[k] - kap);
            let others: f64 = (0..side.users()).filter(|&i| i != k).map(|i| dl.v_ki[(k, i)]).sum();
            let den = side.own_power * (others + kap) + side.other_power * side.z(k, form) + 1.0;
            num / den
        })
        .collect()
}

/// Expected SINRs (primary, secondary) with beamformed DL pilots.
#[allow(clippy::too_many_arguments)]
pub fn sinr_oma_dlpilot(
    dl: &DlPilotStatsOma,
    stats: &UlEstimateStats,
    gains: &LinkGains,
    clusters: &ClusterAssignment,
    alloc: &PowerAllocation,
    plan: &PilotPlan,
    form: CrossTermForm,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_c3(stats, clusters, alloc)?;
    let p = OmaSide::primary(stats, gains, clusters, alloc, plan);
    let s = OmaSide::secondary(stats, gains, clusters, alloc, plan);
    Ok((oma_dlpilot_side(&dl.primary, &p, form), oma_dlpilot_side(&dl.secondary, &s, form)))
}

/// Per-cluster slot order by descending sum_m alpha (stable), primary then secondary.
pub fn order_noma_users(stats: &NomaUlStats) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let order = |alpha: &[Mat]| -> Vec<Vec<usize>> {
        alpha
            .iter()
            .map(|a| {
                let strength: Vec<f64> = (0..a.ncols()).map(|k| a.column(k).sum()).collect();
                let mut idx: Vec<usize> = (0..a.ncols()).collect();
                idx.sort_by(|&x, &y| strength[y].total_cmp(&strength[x]));
                idx
            })
            .collect()
    };
    (order(&stats.alpha_f), order(&stats.alpha_g))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderingViolation {
    pub secondary: bool,
    pub cluster: usize,
    pub ap: usize,
    /// slot i receives more power than slot i + 1
    pub slot: usize,
}

/// Weaker (later) slots must get at least as much power as stronger ones, at every AP.
pub fn validate_noma_power_ordering(alloc: &NomaPowerAllocation) -> std::result::Result<(), Vec<OrderingViolation>> {
    let mut bad = Vec::new();
    for (secondary, etas) in [(false, &alloc.eta_p), (true, &alloc.eta_s)] {
        for (cluster, eta) in etas.iter().enumerate() {
            for ap in 0..eta.nrows() {
                for slot in 0..eta.ncols().saturating_sub(1) {
                    if eta[(ap, slot)] > eta[(ap, slot + 1)] * (1.0 + 1e-12) {
                        bad.push(OrderingViolation { secondary, cluster, ap, slot });
                    }
                }
            }
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(bad)
    }
}

/// Ordered fixed allocation: slot k gets weight k + 1, scaled so every AP
/// spends its full budget.
pub fn noma_default_allocation(stats: &NomaUlStats, p_p: f64, p_s: f64) -> NomaPowerAllocation {
    let side = |alpha: &[Mat]| -> Vec<Mat> {
        let aps = alpha[0].nrows();
        let slots = alpha[0].ncols();
        let scale: Vec<f64> = (0..aps)
            .map(|m| {
                let s: f64 = alpha.iter().map(|a| (0..slots).map(|i| (i + 1) as f64 * a[(m, i)]).sum::<f64>()).sum();
                if s > 0.0 {
                    1.0 / s
                } else {
                    0.0
                }
            })
            .collect();
        alpha.iter().map(|_| Mat::from_fn(aps, slots, |m, i| (i + 1) as f64 * scale[m])).collect()
    };
    NomaPowerAllocation { eta_p: side(&stats.alpha_f), eta_s: side(&stats.alpha_g), p_p, p_s }
}

pub fn check_c3_noma(stats: &NomaUlStats, alloc: &NomaPowerAllocation) -> Result<()> {
    for (system, eta, alpha) in [("primary", &alloc.eta_p, &stats.alpha_f), ("secondary", &alloc.eta_s, &stats.alpha_g)] {
        if eta.len() != alpha.len() || eta.iter().zip(alpha.iter()).any(|(e, a)| e.shape() != a.shape()) {
            return Err(Error::Shape("NOMA allocation does not match the cluster tables".into()));
        }
        for ap in 0..alpha[0].nrows() {
            let load: f64 = eta.iter().zip(alpha.iter()).map(|(e, a)| e.row(ap).dot(&a.row(ap))).sum();
            if load > 1.0 + C3_TOL {
                return Err(Error::PowerBudget { system, ap, load });
            }
        }
    }
    Ok(())
}

fn noma_sinr(side: &NomaSide, theta: impl Fn(usize) -> Vec<f64>, form: CrossTermForm) -> Vec<Vec<f64>> {
    (0..side.clusters())
        .map(|c| {
            let th = theta(c);
            (0..side.slots()).map(|k| side.sinr(c, k, &th, form)).collect()
        })
        .collect()
}

/// Statistical-CSI SINR per (cluster, slot).
pub fn sinr_primary_noma(
    stats: &NomaUlStats,
    gains: &NomaGains,
    alloc: &NomaPowerAllocation,
    plan: &PilotPlan,
    sic: &SicModel,
    form: CrossTermForm,
) -> Result<Vec<Vec<f64>>> {
    check_c3_noma(stats, alloc)?;
    let side = NomaSide::primary(gains, stats, alloc, plan);
    Ok(noma_sinr(&side, |c| sic.theta_p(c), form))
}

pub fn sinr_secondary_noma(
    stats: &NomaUlStats,
    gains: &NomaGains,
    alloc: &NomaPowerAllocation,
    plan: &PilotPlan,
    sic: &SicModel,
    form: CrossTermForm,
) -> Result<Vec<Vec<f64>>> {
    check_c3_noma(stats, alloc)?;
    let side = NomaSide::secondary(gains, stats, alloc, plan);
    Ok(noma_sinr(&side, |c| sic.theta_s(c), form))
}

/// Z per primary (cluster, slot), per unit of P_S.
pub fn secondary_cci_zak(
    stats: &NomaUlStats,
    gains: &NomaGains,
    alloc: &NomaPowerAllocation,
    plan: &PilotPlan,
    form: CrossTermForm,
) -> Vec<Vec<f64>> {
    let side = NomaSide::primary(gains, stats, alloc, plan);
    (0..side.clusters()).map(|c| (0..side.slots()).map(|k| side.z(c, k, form)).collect()).collect()
}

fn noma_dlpilot_side(dl: &NomaDlSide, own_power: f64, other_power: f64) -> Vec<Vec<f64>> {
    (0..dl.theta.len())
        .map(|c| {
            let ns = dl.theta[c].nrows();
            (0..ns)
                .map(|k| {
                    let mut own = dl.varrho_other[(c, k)];
                    for i in 0..ns {
                        own += if i < k {
                            dl.varrho_mu[c][(k, i)]
                        } else {
                            dl.varrho_mu[c][(k, i)] - dl.phi_mu[c][(k, i)]
                        };
                    }
                    let lam: f64 = dl.varrho_lambda[c].iter().map(|m| m.row(k).sum()).sum();
                    own_power * dl.phi_mu[c][(k, k)] / (own_power * own + other_power * lam + 1.0)
                })
                .collect()
        })
        .collect()
}

/// Expected DL-pilot SINRs per (cluster, slot), primary and secondary.
pub fn sinr_noma_dlpilot(dl: &DlPilotStatsNoma, alloc: &NomaPowerAllocation) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    (
        noma_dlpilot_side(&dl.primary, alloc.p_p, alloc.p_s),
        noma_dlpilot_side(&dl.secondary, alloc.p_s, alloc.p_p),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{assign_pilots_oma, ul_stats_oma};
    use approx::assert_relative_eq;

    fn single(p_p: f64) -> (UlEstimateStats, LinkGains, ClusterAssignment, PowerAllocation, PilotPlan) {
        let gains = LinkGains {
            zeta_f: Mat::from_element(1, 1, 1.0),
            zeta_g: Mat::from_element(1, 1, 1.0),
            zeta_u: Mat::zeros(1, 1),
            zeta_v: Mat::zeros(1, 1),
        };
        let plan = assign_pilots_oma(1, 1, 0, 1).unwrap();
        let stats = ul_stats_oma(&gains, &plan, 1.0).unwrap();
        let alloc = PowerAllocation { eta_p: Mat::from_element(1, 1, 1.0), eta_s: Mat::zeros(1, 1), p_p, p_s: 0.0 };
        (stats, gains, ClusterAssignment::full(1, 1, 1, 1), alloc, plan)
    }

    #[test]
    fn single_link_hand_value() {
        let (st, g, cl, al, pl) = single(10.0);
        let gp = sinr_primary_oma(&st, &g, &cl, &al, &pl, CrossTermForm::Coherent).unwrap();
        assert_relative_eq!(gp[0], 2.5 / 6.0, epsilon = 1e-14);
        let (st, g, cl, al, pl) = single(0.0);
        assert_eq!(sinr_primary_oma(&st, &g, &cl, &al, &pl, CrossTermForm::Coherent).unwrap()[0], 0.0);
    }

    #[test]
    fn c3_violation_rejected() {
        let (st, g, cl, mut al, pl) = single(1.0);
        al.eta_p[(0, 0)] = 3.0;
        assert!(matches!(
            sinr_primary_oma(&st, &g, &cl, &al, &pl, CrossTermForm::Coherent),
            Err(Error::PowerBudget { .. })
        ));
    }

    #[test]
    fn zk_hand_value_and_cap() {
        let gains = LinkGains {
            zeta_f: Mat::from_element(1, 1, 1.0),
            zeta_g: Mat::from_element(1, 1, 1.0),
            zeta_u: Mat::from_element(1, 1, 1.0),
            zeta_v: Mat::from_element(1, 1, 1.0),
        };
        let plan = assign_pilots_oma(1, 1, 1, 1).unwrap();
        let st = ul_stats_oma(&gains, &plan, 1.0).unwrap();
        let al = PowerAllocation { eta_p: Mat::zeros(1, 1), eta_s: Mat::from_element(1, 1, 1.0), p_p: 1.0, p_s: 10.0 };
        let cl = ClusterAssignment::full(1, 1, 1, 1);
        let z = secondary_cci_zk(&st, &gains, &cl, &al, &plan, CrossTermForm::Coherent);
        assert_relative_eq!(z[0], 4.0 / 9.0, epsilon = 1e-14);
        assert_relative_eq!(cap_secondary_power(&z, &[1.0], 10.0), 2.25, epsilon = 1e-12);
        assert_eq!(cap_secondary_power(&z, &[f64::INFINITY], 10.0), 10.0);
        assert_eq!(cap_secondary_power(&[0.0, 0.0], &[1.0, 1.0], 10.0), 10.0);
    }

    #[test]
    fn prelog_values() {
        assert_relative_eq!(rate_from_sinr(&[1.0], 196, 10).unwrap()[0], 186.0 / 196.0);
        assert_relative_eq!(rate_dlpilot_upperbound(&[1.0], 196, 10, 10).unwrap()[0], 176.0 / 196.0);
        assert_eq!(rate_from_sinr(&[0.0], 196, 10).unwrap()[0], 0.0);
        assert!(matches!(rate_from_sinr(&[1.0], 10, 10), Err(Error::Overhead { .. })));
    }

    #[test]
    fn noma_ordering() {
        let stats = NomaUlStats {
            alpha_f: vec![Mat::from_row_slice(1, 3, &[0.1, 0.3, 0.2])],
            alpha_g: vec![Mat::from_row_slice(1, 2, &[0.2, 0.2])],
            denom_p: vec![vec![1.0]],
            denom_s: vec![vec![1.0]],
            pilot_energy: 1.0,
        };
        let (p, s) = order_noma_users(&stats);
        assert_eq!(p, vec![vec![1, 2, 0]]);
        assert_eq!(s, vec![vec![0, 1]]);

        let mk = |a: f64, b: f64| NomaPowerAllocation {
            eta_p: vec![Mat::from_row_slice(1, 2, &[a, b])],
            eta_s: vec![Mat::from_row_slice(1, 2, &[0.2, 0.2])],
            p_p: 1.0,
            p_s: 1.0,
        };
        assert!(validate_noma_power_ordering(&mk(0.1, 0.5)).is_ok());
        let v = validate_noma_power_ordering(&mk(0.5, 0.1)).unwrap_err();
        assert_eq!(v, vec![OrderingViolation { secondary: false, cluster: 0, ap: 0, slot: 0 }]);
    }

    #[test]
    fn sic_theta_round_trip() {
        let shape = NomaShape { a: 2, k: 2, b: 1, l: 2 };
        let s = SicModel::from_theta(&shape, 0.2).unwrap();
        assert_relative_eq!(s.sigma_e2_p[1][0], 24.0, epsilon = 1e-12);
        assert_relative_eq!(s.theta_p(1)[1], 0.2, epsilon = 1e-12);
        assert_eq!(SicModel::perfect(&shape).theta_s(0), vec![1.0, 1.0]);
        assert!(SicModel::from_theta(&shape, 0.0).is_err());
    }
}
