//! Config -> topology -> statistics -> allocation -> rates.

use anyhow::{Context, Result};

use cfshare_core::estimation::{assign_pilots_noma, DlPilotStatsOma};
use cfshare_core::montecarlo::{self, McConfig, MomentReport, NomaScenario, OmaScenario};
use cfshare_core::power_control::{maxmin_bisection, uniform_allocation, MaxMinOutcome, MaxMinProblem};
use cfshare_core::rates::{self, prelog, RateReport, Regime, SicModel};
use cfshare_core::{
    assign_pilots_oma, cluster_aps, colocate, compute_large_scale, dl_stats_noma, dl_stats_oma, generate_topology,
    ul_stats_noma, ul_stats_oma, ClusterAssignment, LinkGains, NomaGains, NomaPowerAllocation, NomaUlStats, PilotPlan,
    PowerAllocation, SystemConfig, UlEstimateStats,
};

use crate::config::{Access, Allocation, Csi, ExperimentSpec};

/// One receiving user in a result table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UserLabel {
    pub secondary: bool,
    /// original index within its system
    pub user: usize,
    pub cluster: Option<usize>,
    pub slot: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: RateReport,
    pub labels_p: Vec<UserLabel>,
    pub labels_s: Vec<UserLabel>,
    /// secondary transmit power actually used, watts
    pub p_s_used: f64,
    pub lambda_star: Option<f64>,
    pub maxmin: Option<MaxMinOutcome>,
}

pub fn large_scale(spec: &ExperimentSpec) -> Result<(SystemConfig, LinkGains)> {
    spec.validate().map_err(anyhow::Error::msg)?;
    let cfg = spec.system_config();
    let mut geo = generate_topology(&cfg);
    if spec.colocated {
        geo = colocate(&geo);
    }
    let gains = compute_large_scale(&geo, &cfg);
    Ok((cfg, gains))
}

#[derive(Debug, Clone)]
pub struct OmaPrepared {
    pub cfg: SystemConfig,
    pub gains: LinkGains,
    pub clusters: ClusterAssignment,
    pub plan: PilotPlan,
    pub stats: UlEstimateStats,
}

pub fn prepare_oma(spec: &ExperimentSpec) -> Result<OmaPrepared> {
    let (cfg, gains) = large_scale(spec)?;
    let clusters = match (spec.m_p, spec.n_s) {
        (None, None) => ClusterAssignment::full(cfg.m, cfg.k, cfg.n, cfg.l),
        (mp, ns) => cluster_aps(&gains, mp.unwrap_or(cfg.m), ns.unwrap_or(cfg.n))?,
    };
    let plan = assign_pilots_oma(cfg.k, cfg.l, spec.q(), cfg.tau_p)?;
    let stats = ul_stats_oma(&gains, &plan, cfg.p_ul_norm())?;
    Ok(OmaPrepared { cfg, gains, clusters, plan, stats })
}

#[derive(Debug, Clone)]
pub struct NomaPrepared {
    pub cfg: SystemConfig,
    pub gains: NomaGains,
    pub plan: PilotPlan,
    pub stats: NomaUlStats,
}

pub fn prepare_noma(spec: &ExperimentSpec) -> Result<NomaPrepared> {
    let (cfg, link) = large_scale(spec)?;
    let shape = spec.shape();
    let plan = assign_pilots_noma(&shape, spec.q(), cfg.tau_p)?;
    let seq = NomaGains::from_link_gains(&link, shape)?;
    let (perm_p, perm_s) = rates::order_noma_users(&ul_stats_noma(&seq, &plan, cfg.p_ul_norm())?);
    let gains = seq.reordered(&perm_p, &perm_s);
    let stats = ul_stats_noma(&gains, &plan, cfg.p_ul_norm())?;
    Ok(NomaPrepared { cfg, gains, plan, stats })
}

fn thresholds(spec: &ExperimentSpec, k: usize) -> Vec<f64> {
    vec![spec.i_t_norm(); k]
}

/// Allocation used for OMA reporting, with P_S noise-normalized.
pub fn oma_allocation(spec: &ExperimentSpec, prep: &OmaPrepared) -> Result<(PowerAllocation, Option<MaxMinOutcome>)> {
    let (p_p, p_s) = (prep.cfg.p_p_norm(), prep.cfg.p_s_norm());
    let it = thresholds(spec, prep.cfg.k);
    match spec.allocation {
        Allocation::Uniform => {
            let mut alloc = uniform_allocation(&prep.stats, &prep.clusters, p_p, p_s);
            let z = rates::secondary_cci_zk(&prep.stats, &prep.gains, &prep.clusters, &alloc, &prep.plan, spec.cross_terms);
            alloc.p_s = rates::cap_secondary_power(&z, &it, p_s);
            Ok((alloc, None))
        }
        Allocation::Maxmin => {
            let problem = MaxMinProblem {
                stats: prep.stats.clone(),
                gains: prep.gains.clone(),
                clusters: prep.clusters.clone(),
                plan: prep.plan.clone(),
                p_p,
                p_s,
                i_t: it,
                epsilon: spec.epsilon,
                lambda_bounds: None,
                weights: (1.0, 1.0),
                form: spec.cross_terms,
            };
            let out = maxmin_bisection(&problem).context("max-min power control failed")?;
            Ok((out.allocation.clone(), Some(out)))
        }
    }
}

pub fn oma_dl_stats(prep: &OmaPrepared, alloc: &PowerAllocation) -> DlPilotStatsOma {
    dl_stats_oma(&prep.stats, &prep.gains, &prep.clusters, alloc, &prep.plan, prep.cfg.p_pd_norm())
}

pub fn evaluate_oma(spec: &ExperimentSpec, prep: &OmaPrepared) -> Result<Evaluation> {
    let (alloc, maxmin) = oma_allocation(spec, prep)?;
    let cfg = &prep.cfg;
    let form = spec.cross_terms;
    let report = match spec.csi {
        Csi::Statistical => {
            let gp = rates::sinr_primary_oma(&prep.stats, &prep.gains, &prep.clusters, &alloc, &prep.plan, form)?;
            let gs = rates::sinr_secondary_oma(&prep.stats, &prep.gains, &prep.clusters, &alloc, &prep.plan, form)?;
            RateReport::new(Regime::OmaStat, gp, gs, prelog(cfg.tau_c, cfg.tau_p)?)
        }
        Csi::Dlpilot => {
            let dl = oma_dl_stats(prep, &alloc);
            let (gp, gs) = rates::sinr_oma_dlpilot(&dl, &prep.stats, &prep.gains, &prep.clusters, &alloc, &prep.plan, form)?;
            RateReport::new(Regime::OmaDlPilot, gp, gs, prelog(cfg.tau_c, cfg.tau_p + cfg.tau_pd)?)
        }
    };
    let label = |secondary: bool, n: usize| -> Vec<UserLabel> {
        (0..n).map(|user| UserLabel { secondary, user, cluster: None, slot: None }).collect()
    };
    Ok(Evaluation {
        labels_p: label(false, cfg.k),
        labels_s: label(true, cfg.l),
        report,
        p_s_used: alloc.p_s * cfg.noise_power,
        lambda_star: maxmin.as_ref().map(|o| o.lambda_star),
        maxmin,
    })
}

pub fn noma_allocation(spec: &ExperimentSpec, prep: &NomaPrepared) -> NomaPowerAllocation {
    let mut alloc = rates::noma_default_allocation(&prep.stats, prep.cfg.p_p_norm(), prep.cfg.p_s_norm());
    let z: Vec<f64> = rates::secondary_cci_zak(&prep.stats, &prep.gains, &alloc, &prep.plan, spec.cross_terms)
        .into_iter()
        .flatten()
        .collect();
    alloc.p_s = rates::cap_secondary_power(&z, &thresholds(spec, z.len()), alloc.p_s);
    alloc
}

pub fn sic_model(spec: &ExperimentSpec) -> Result<SicModel> {
    Ok(SicModel::from_theta(&spec.shape(), spec.sic_theta)?)
}

pub fn evaluate_noma(spec: &ExperimentSpec, prep: &NomaPrepared) -> Result<Evaluation> {
    let cfg = &prep.cfg;
    let alloc = noma_allocation(spec, prep);
    if let Err(v) = rates::validate_noma_power_ordering(&alloc) {
        anyhow::bail!("NOMA power ordering violated at {} places", v.len());
    }
    let sic = sic_model(spec)?;
    let form = spec.cross_terms;
    let flat = |x: Vec<Vec<f64>>| x.into_iter().flatten().collect::<Vec<_>>();
    let report = match spec.csi {
        Csi::Statistical => {
            let gp = rates::sinr_primary_noma(&prep.stats, &prep.gains, &alloc, &prep.plan, &sic, form)?;
            let gs = rates::sinr_secondary_noma(&prep.stats, &prep.gains, &alloc, &prep.plan, &sic, form)?;
            RateReport::new(Regime::NomaStat, flat(gp), flat(gs), prelog(cfg.tau_c, cfg.tau_p)?)
        }
        Csi::Dlpilot => {
            rates::check_c3_noma(&prep.stats, &alloc)?;
            let dl = dl_stats_noma(&prep.stats, &prep.gains, &alloc, &prep.plan, cfg.p_pd_norm(), spec.noma_lambda_contamination);
            let (gp, gs) = rates::sinr_noma_dlpilot(&dl, &alloc);
            RateReport::new(Regime::NomaDlPilot, flat(gp), flat(gs), prelog(cfg.tau_c, cfg.tau_p + cfg.tau_pd)?)
        }
    };
    let label = |secondary: bool, ids: &[Vec<usize>]| -> Vec<UserLabel> {
        ids.iter()
            .enumerate()
            .flat_map(|(c, slots)| {
                slots.iter().enumerate().map(move |(s, &user)| UserLabel { secondary, user, cluster: Some(c), slot: Some(s) })
            })
            .collect()
    };
    Ok(Evaluation {
        labels_p: label(false, &prep.gains.pu_ids),
        labels_s: label(true, &prep.gains.su_ids),
        report,
        p_s_used: alloc.p_s * cfg.noise_power,
        lambda_star: None,
        maxmin: None,
    })
}

pub fn evaluate(spec: &ExperimentSpec) -> Result<Evaluation> {
    match spec.mode {
        Access::Oma => evaluate_oma(spec, &prepare_oma(spec)?),
        Access::Noma => evaluate_noma(spec, &prepare_noma(spec)?),
    }
}

pub fn oma_scenario(spec: &ExperimentSpec) -> Result<OmaScenario> {
    let prep = prepare_oma(spec)?;
    let (alloc, _) = oma_allocation(spec, &prep)?;
    let dl = oma_dl_stats(&prep, &alloc);
    let cfg = &prep.cfg;
    Ok(OmaScenario {
        dl_prelog: prelog(cfg.tau_c, cfg.tau_p + cfg.tau_pd)?,
        gains: prep.gains,
        plan: prep.plan,
        stats: prep.stats,
        clusters: prep.clusters,
        alloc,
        dl,
    })
}

pub fn noma_scenario(spec: &ExperimentSpec) -> Result<NomaScenario> {
    let prep = prepare_noma(spec)?;
    let alloc = noma_allocation(spec, &prep);
    let cfg = &prep.cfg;
    let dl = dl_stats_noma(&prep.stats, &prep.gains, &alloc, &prep.plan, cfg.p_pd_norm(), spec.noma_lambda_contamination);
    Ok(NomaScenario {
        dl_prelog: prelog(cfg.tau_c, cfg.tau_p + cfg.tau_pd)?,
        sic: sic_model(spec)?,
        gains: prep.gains,
        plan: prep.plan,
        stats: prep.stats,
        alloc,
        dl,
    })
}

/// Monte-Carlo moment suite for the configured access mode.
pub fn validate(spec: &ExperimentSpec) -> Result<MomentReport> {
    spec.validate().map_err(anyhow::Error::msg)?;
    let mc = McConfig { trials: spec.trials, seed: spec.seed, rel_tol: spec.rel_tol };
    Ok(match spec.mode {
        Access::Oma => montecarlo::validate_oma(&oma_scenario(spec)?, &mc)?,
        Access::Noma => montecarlo::validate_noma(&noma_scenario(spec)?, &mc)?,
    })
}
