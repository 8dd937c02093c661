use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use cfshare_core::montecarlo::{validate_oma, McConfig, OmaScenario};
use cfshare_core::power_control::{feasibility_check, maxmin_bisection, uniform_allocation, MaxMinProblem};
use cfshare_core::rates::{self, prelog, CrossTermForm};
use cfshare_core::*;

struct Setup {
    cfg: SystemConfig,
    gains: LinkGains,
    plan: PilotPlan,
    stats: UlEstimateStats,
    clusters: ClusterAssignment,
}

fn setup(m: usize, k: usize) -> Setup {
    let cfg = SystemConfig { m, n: m, k, l: k, tau_p: k, noise_power: 1e-6, ..Default::default() };
    let gains = compute_large_scale(&generate_topology(&cfg), &cfg);
    let plan = assign_pilots_oma(k, k, k, k).unwrap();
    let stats = ul_stats_oma(&gains, &plan, cfg.p_ul_norm()).unwrap();
    Setup { clusters: ClusterAssignment::full(m, k, m, k), cfg, gains, plan, stats }
}

fn problem(s: &Setup) -> MaxMinProblem {
    MaxMinProblem {
        stats: s.stats.clone(),
        gains: s.gains.clone(),
        clusters: s.clusters.clone(),
        plan: s.plan.clone(),
        p_p: s.cfg.p_p_norm(),
        p_s: s.cfg.p_s_norm(),
        i_t: vec![1.0; s.cfg.k],
        epsilon: 1e-3,
        lambda_bounds: None,
        weights: (1.0, 1.0),
        form: CrossTermForm::Coherent,
    }
}

fn closed_forms(c: &mut Criterion) {
    let s = setup(32, 10);
    c.bench_function("ul_stats_oma 32x10", |b| b.iter(|| ul_stats_oma(&s.gains, &s.plan, s.cfg.p_ul_norm()).unwrap()));
    let alloc = uniform_allocation(&s.stats, &s.clusters, s.cfg.p_p_norm(), s.cfg.p_s_norm());
    c.bench_function("sinr_oma 32x10", |b| {
        b.iter(|| {
            let p = rates::sinr_primary_oma(&s.stats, &s.gains, &s.clusters, &alloc, &s.plan, CrossTermForm::Coherent).unwrap();
            let q = rates::sinr_secondary_oma(&s.stats, &s.gains, &s.clusters, &alloc, &s.plan, CrossTermForm::Coherent).unwrap();
            (p, q)
        })
    });
    c.bench_function("dl_stats_oma 32x10", |b| {
        b.iter(|| dl_stats_oma(&s.stats, &s.gains, &s.clusters, &alloc, &s.plan, s.cfg.p_pd_norm()))
    });
}

fn solver(c: &mut Criterion) {
    let mut g = c.benchmark_group("power_control");
    g.sample_size(10);
    let s = setup(16, 4);
    let pr = problem(&s);
    let lambda = 0.5 * pr.lambda_upper();
    g.bench_function("feasibility_check 16x4", |b| b.iter(|| feasibility_check(&pr, lambda).unwrap()));
    g.bench_function("maxmin_bisection 16x4", |b| b.iter(|| maxmin_bisection(&pr).unwrap()));
    g.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let mut g = c.benchmark_group("montecarlo");
    g.sample_size(10);
    let s = setup(8, 2);
    let alloc = uniform_allocation(&s.stats, &s.clusters, s.cfg.p_p_norm(), s.cfg.p_s_norm());
    let dl = dl_stats_oma(&s.stats, &s.gains, &s.clusters, &alloc, &s.plan, s.cfg.p_pd_norm());
    let sc = OmaScenario {
        gains: s.gains.clone(),
        plan: s.plan.clone(),
        stats: s.stats.clone(),
        clusters: s.clusters.clone(),
        alloc,
        dl,
        dl_prelog: prelog(s.cfg.tau_c, s.cfg.tau_p + s.cfg.tau_pd).unwrap(),
    };
    g.bench_function("validate_oma 8x2 10k trials", |b| {
        b.iter_batched(
            || McConfig { trials: 10_000, seed: 1, rel_tol: 0.02 },
            |cfg| validate_oma(&sc, &cfg).unwrap(),
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

criterion_group!(benches, closed_forms, solver, monte_carlo);
criterion_main!(benches);
