//! One system seen from its own users. The primary and secondary closed forms
//! are mirror images, so every formula is written once against this view and
//! instantiated twice.

use crate::estimation::{NomaGains, NomaUlStats, PilotPlan, UlEstimateStats};
use crate::rates::{CrossTermForm, NomaPowerAllocation, PowerAllocation};
use crate::topology::{ClusterAssignment, LinkGains};
use crate::Mat;

#[derive(Clone, Copy)]
pub(crate) struct OmaSide<'a> {
    pub own_zeta: &'a Mat,
    pub own_rho: &'a Mat,
    pub own_delta: &'a Mat,
    pub own_eta: &'a Mat,
    pub own_power: f64,
    /// other system's APs -> my users
    pub cross_zeta: &'a Mat,
    /// other system's estimate variances (its APs x its users)
    pub other_rho: &'a Mat,
    /// E[cross * other_estimate^*] for the pilot-sharing pair
    pub contam_rho: &'a Mat,
    pub other_delta: &'a Mat,
    pub other_eta: &'a Mat,
    pub other_power: f64,
    pub shared: &'a [bool],
}

impl<'a> OmaSide<'a> {
    pub fn primary(
        stats: &'a UlEstimateStats,
        gains: &'a LinkGains,
        clusters: &'a ClusterAssignment,
        alloc: &'a PowerAllocation,
        plan: &'a PilotPlan,
    ) -> Self {
        OmaSide {
            own_zeta: &gains.zeta_f,
            own_rho: &stats.rho_f,
            own_delta: &clusters.delta_p,
            own_eta: &alloc.eta_p,
            own_power: alloc.p_p,
            cross_zeta: &gains.zeta_u,
            other_rho: &stats.rho_g,
            contam_rho: &stats.rho_u,
            other_delta: &clusters.delta_s,
            other_eta: &alloc.eta_s,
            other_power: alloc.p_s,
            shared: &plan.pu_shared,
        }
    }

    pub fn secondary(
        stats: &'a UlEstimateStats,
        gains: &'a LinkGains,
        clusters: &'a ClusterAssignment,
        alloc: &'a PowerAllocation,
        plan: &'a PilotPlan,
    ) -> Self {
        OmaSide {
            own_zeta: &gains.zeta_g,
            own_rho: &stats.rho_g,
            own_delta: &clusters.delta_s,
            own_eta: &alloc.eta_s,
            own_power: alloc.p_s,
            cross_zeta: &gains.zeta_v,
            other_rho: &stats.rho_f,
            contam_rho: &stats.rho_v,
            other_delta: &clusters.delta_p,
            other_eta: &alloc.eta_p,
            other_power: alloc.p_p,
            shared: &plan.su_shared,
        }
    }

    pub fn users(&self) -> usize {
        self.own_zeta.ncols()
    }

    pub fn aps(&self) -> usize {
        self.own_zeta.nrows()
    }

    /// E[mu_kk] = sum_m delta sqrt(eta) rho
    pub fn mean_mu(&self, k: usize) -> f64 {
        (0..self.aps())
            .map(|m| self.own_delta[(m, k)] * self.own_eta[(m, k)].sqrt() * self.own_rho[(m, k)])
            .sum()
    }

    /// sum_m delta_mi eta_mi rho_mi zeta_mk, i.e. E|mu_ki|^2 for i != k, Var mu_kk for i == k
    pub fn v_ki(&self, k: usize, i: usize) -> f64 {
        (0..self.aps())
            .map(|m| {
                self.own_delta[(m, i)]
                    * self.own_eta[(m, i)]
                    * self.own_rho[(m, i)]
                    * self.own_zeta[(m, k)]
            })
            .sum()
    }

    pub fn own_interference(&self, k: usize) -> f64 {
        (0..self.users()).map(|i| self.v_ki(k, i)).sum()
    }

    /// Non-coherent part of the cross-system leakage into my user k.
    pub fn cross_variance(&self, k: usize) -> f64 {
        let mut acc = 0.0;
        for n in 0..self.other_eta.nrows() {
            let zc = self.cross_zeta[(n, k)];
            for j in 0..self.other_eta.ncols() {
                acc += self.other_delta[(n, j)] * self.other_eta[(n, j)] * self.other_rho[(n, j)] * zc;
            }
        }
        acc
    }

    /// E[lambda_kk] for the pilot-sharing pair, zero otherwise.
    pub fn mean_lambda(&self, k: usize) -> f64 {
        if !self.shared[k] {
            return 0.0;
        }
        (0..self.other_eta.nrows())
            .map(|n| {
                self.other_delta[(n, k)] * self.other_eta[(n, k)].sqrt() * self.contam_rho[(n, k)]
            })
            .sum()
    }

    pub fn contamination(&self, k: usize, form: CrossTermForm) -> f64 {
        if !self.shared[k] {
            return 0.0;
        }
        match form {
            CrossTermForm::Coherent => self.mean_lambda(k).powi(2),
            CrossTermForm::PerAp => (0..self.other_eta.nrows())
                .map(|n| {
                    self.other_delta[(n, k)] * self.other_eta[(n, k)] * self.contam_rho[(n, k)].powi(2)
                })
                .sum(),
        }
    }

    /// Z_k: average leakage power into user k per unit of the other system's power.
    pub fn z(&self, k: usize, form: CrossTermForm) -> f64 {
        self.cross_variance(k) + self.contamination(k, form)
    }

    pub fn sinr(&self, k: usize, form: CrossTermForm) -> f64 {
        let num = self.own_power * self.mean_mu(k).powi(2);
        let den = self.own_power * self.own_interference(k)
            + self.other_power * self.z(k, form)
            + 1.0;
        num / den
    }

    /// Var lambda_kk: the variance of the pilot-sharing leakage seen in the DL pilot.
    pub fn u_kk(&self, k: usize) -> f64 {
        if !self.shared[k] {
            return 0.0;
        }
        (0..self.other_eta.nrows())
            .map(|n| {
                self.other_delta[(n, k)]
                    * self.other_eta[(n, k)]
                    * self.cross_zeta[(n, k)]
                    * self.other_rho[(n, k)]
            })
            .sum()
    }
}

#[derive(Clone, Copy)]
pub(crate) struct NomaSide<'a> {
    pub own_zeta: &'a [Mat],
    pub own_alpha: &'a [Mat],
    pub own_denom: &'a [Vec<f64>],
    pub own_eta: &'a [Mat],
    pub own_power: f64,
    pub cross_zeta: &'a [Mat],
    pub other_zeta: &'a [Mat],
    pub other_alpha: &'a [Mat],
    pub other_denom: &'a [Vec<f64>],
    pub other_eta: &'a [Mat],
    pub other_power: f64,
    pub shared: &'a [bool],
    pub pilot_energy: f64,
}

impl<'a> NomaSide<'a> {
    pub fn primary(
        gains: &'a NomaGains,
        stats: &'a NomaUlStats,
        alloc: &'a NomaPowerAllocation,
        plan: &'a PilotPlan,
    ) -> Self {
        NomaSide {
            own_zeta: &gains.zeta_f,
            own_alpha: &stats.alpha_f,
            own_denom: &stats.denom_p,
            own_eta: &alloc.eta_p,
            own_power: alloc.p_p,
            cross_zeta: &gains.zeta_u,
            other_zeta: &gains.zeta_g,
            other_alpha: &stats.alpha_g,
            other_denom: &stats.denom_s,
            other_eta: &alloc.eta_s,
            other_power: alloc.p_s,
            shared: &plan.pu_shared,
            pilot_energy: stats.pilot_energy,
        }
    }

    pub fn secondary(
        gains: &'a NomaGains,
        stats: &'a NomaUlStats,
        alloc: &'a NomaPowerAllocation,
        plan: &'a PilotPlan,
    ) -> Self {
        NomaSide {
            own_zeta: &gains.zeta_g,
            own_alpha: &stats.alpha_g,
            own_denom: &stats.denom_s,
            own_eta: &alloc.eta_s,
            own_power: alloc.p_s,
            cross_zeta: &gains.zeta_v,
            other_zeta: &gains.zeta_f,
            other_alpha: &stats.alpha_f,
            other_denom: &stats.denom_p,
            other_eta: &alloc.eta_p,
            other_power: alloc.p_p,
            shared: &plan.su_shared,
            pilot_energy: stats.pilot_energy,
        }
    }

    pub fn clusters(&self) -> usize {
        self.own_zeta.len()
    }

    pub fn slots(&self) -> usize {
        self.own_zeta[0].ncols()
    }

    pub fn aps(&self) -> usize {
        self.own_zeta[0].nrows()
    }

    fn other_aps(&self) -> usize {
        self.other_zeta[0].nrows()
    }

    /// E[f_mck f_hat_mci^*]
    pub fn chi(&self, c: usize, m: usize, k: usize, i: usize) -> f64 {
        let z = &self.own_zeta[c];
        self.pilot_energy * z[(m, k)] * z[(m, i)] / self.own_denom[c][m]
    }

    /// E[X_i] with X_i = sum_m sqrt(eta_mci) f_mck f_hat_mci^*
    pub fn theta(&self, c: usize, k: usize, i: usize) -> f64 {
        (0..self.aps())
            .map(|m| self.own_eta[c][(m, i)].sqrt() * self.chi(c, m, k, i))
            .sum()
    }

    /// Var X_i
    pub fn var_own(&self, c: usize, k: usize, i: usize) -> f64 {
        (0..self.aps())
            .map(|m| self.own_eta[c][(m, i)] * self.own_alpha[c][(m, i)] * self.own_zeta[c][(m, k)])
            .sum()
    }

    /// sum_m sum_c' sum_i eta alpha zeta_mck (variances of every own-system stream)
    pub fn interference_all(&self, c: usize, k: usize) -> f64 {
        let mut acc = 0.0;
        for cc in 0..self.clusters() {
            for i in 0..self.slots() {
                for m in 0..self.aps() {
                    acc += self.own_eta[cc][(m, i)] * self.own_alpha[cc][(m, i)] * self.own_zeta[c][(m, k)];
                }
            }
        }
        acc
    }

    pub fn other_clusters(&self, c: usize, k: usize) -> f64 {
        let own: f64 = (0..self.slots()).map(|i| self.var_own(c, k, i)).sum();
        self.interference_all(c, k) - own
    }

    fn pairs_with_other(&self, c: usize) -> bool {
        self.shared[c] && c < self.other_zeta.len()
    }

    /// E[cross_nck other_hat_ncj^*] for the pilot-sharing cluster pair.
    pub fn xi(&self, c: usize, n: usize, k: usize, j: usize) -> f64 {
        self.pilot_energy * self.other_zeta[c][(n, j)] * self.cross_zeta[c][(n, k)] / self.other_denom[c][n]
    }

    pub fn psi(&self, c: usize, k: usize, j: usize) -> f64 {
        if !self.pairs_with_other(c) {
            return 0.0;
        }
        (0..self.other_aps())
            .map(|n| self.other_eta[c][(n, j)].sqrt() * self.xi(c, n, k, j))
            .sum()
    }

    /// Var lambda^{ck}_{c'j} summed over every other-system stream.
    pub fn cross_variance(&self, c: usize, k: usize) -> f64 {
        let mut acc = 0.0;
        for cc in 0..self.other_zeta.len() {
            for j in 0..self.other_eta[cc].ncols() {
                for n in 0..self.other_aps() {
                    acc += self.other_eta[cc][(n, j)] * self.other_alpha[cc][(n, j)] * self.cross_zeta[c][(n, k)];
                }
            }
        }
        acc
    }

    pub fn contamination(&self, c: usize, k: usize, form: CrossTermForm) -> f64 {
        if !self.pairs_with_other(c) {
            return 0.0;
        }
        let lj = self.other_eta[c].ncols();
        match form {
            CrossTermForm::Coherent => (0..lj).map(|j| self.psi(c, k, j).powi(2)).sum(),
            CrossTermForm::PerAp => (0..lj)
                .map(|j| {
                    (0..self.other_aps())
                        .map(|n| self.other_eta[c][(n, j)] * self.xi(c, n, k, j).powi(2))
                        .sum::<f64>()
                })
                .sum(),
        }
    }

    pub fn z(&self, c: usize, k: usize, form: CrossTermForm) -> f64 {
        self.cross_variance(c, k) + self.contamination(c, k, form)
    }

    /// |E X_i|^2, or the per-AP sum the printed closed form uses.
    pub fn coherent_power(&self, c: usize, k: usize, i: usize, form: CrossTermForm) -> f64 {
        match form {
            CrossTermForm::Coherent => self.theta(c, k, i).powi(2),
            CrossTermForm::PerAp => (0..self.aps())
                .map(|m| self.own_eta[c][(m, i)] * self.chi(c, m, k, i).powi(2))
                .sum(),
        }
    }

    /// Statistical-CSI SINR of slot k in cluster c; `vartheta[i]` is the SIC
    /// correlation for stream i of this cluster.
    #[allow(clippy::needless_range_loop)]
    pub fn sinr(&self, c: usize, k: usize, vartheta: &[f64], form: CrossTermForm) -> f64 {
        let num = self.own_power * self.theta(c, k, k).powi(2);
        let mut intra = 0.0;
        for i in 0..self.slots() {
            if i < k {
                intra += self.coherent_power(c, k, i, form);
            } else if i > k {
                intra += 2.0 * (1.0 - vartheta[i]) * self.coherent_power(c, k, i, form);
            }
        }
        let den = self.own_power * (self.interference_all(c, k) + intra)
            + self.other_power * self.z(c, k, form)
            + 1.0;
        num / den
    }
}
