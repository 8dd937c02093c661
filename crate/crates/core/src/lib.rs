//! Underlay spectrum sharing on cell-free massive MIMO: large-scale topology,
//! MMSE estimation statistics, closed-form SINRs for OMA/NOMA under statistical
//! and DL-pilot CSI, max-min power control, and a Monte-Carlo oracle.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimation;
pub mod montecarlo;
pub mod power_control;
pub mod rates;
pub mod topology;
mod views;

pub use error::{Error, Result};
pub use estimation::{
    assign_pilots_oma, dl_stats_noma, dl_stats_oma, ul_stats_noma, ul_stats_oma, DlPilotStatsNoma,
    DlPilotStatsOma, NomaGains, NomaUlStats, PilotPlan, UlEstimateStats,
};
pub use power_control::{
    feasibility_check, maxmin_bisection, uniform_allocation, FeasibilityResult, MaxMinOutcome,
    MaxMinProblem,
};
pub use rates::{
    CrossTermForm, NomaPowerAllocation, PowerAllocation, RateReport, Regime, SicModel,
};
pub use topology::{
    cluster_aps, colocate, compute_large_scale, generate_topology, ClusterAssignment, LinkGains,
    Mode, NetworkGeometry, NomaShape, SystemConfig,
};

/// Dense real matrix used for every AP x user table.
pub type Mat = nalgebra::DMatrix<f64>;
pub type C64 = num_complex::Complex64;

/// dB to linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
