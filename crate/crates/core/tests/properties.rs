use cfshare_core::estimation::assign_pilots_noma;
use cfshare_core::power_control::uniform_allocation;
use cfshare_core::rates::{self, prelog, CrossTermForm, SicModel};
use cfshare_core::*;
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Net {
    cfg: SystemConfig,
    gains: LinkGains,
    q: usize,
}

fn net() -> impl Strategy<Value = Net> {
    (1usize..7, 1usize..7, 1usize..4, 1usize..4, any::<u64>(), -90.0f64..-40.0)
        .prop_flat_map(|(m, n, k, l, seed, noise_db)| (Just((m, n, k, l, seed, noise_db)), 0..=k.min(l)))
        .prop_map(|((m, n, k, l, seed, noise_db), q)| {
            let cfg = SystemConfig {
                m,
                n,
                k,
                l,
                tau_p: k.max(l),
                noise_power: db_to_linear(noise_db),
                area_side: 400.0,
                seed,
                ..Default::default()
            };
            let gains = compute_large_scale(&generate_topology(&cfg), &cfg);
            Net { cfg, gains, q }
        })
}

fn noma_net() -> impl Strategy<Value = (SystemConfig, NomaGains, usize)> {
    (1usize..4, 1usize..4, 1usize..4, 1usize..4, 2usize..6, any::<u64>())
        .prop_map(|(a, k, b, l, m, seed)| {
            let shape = NomaShape { a, k, b, l };
            let cfg = SystemConfig {
                m,
                n: m,
                k: a * k,
                l: b * l,
                tau_p: a.max(b),
                noise_power: 1e-7,
                area_side: 400.0,
                seed,
                ..Default::default()
            };
            let link = compute_large_scale(&generate_topology(&cfg), &cfg);
            (cfg, NomaGains::from_link_gains(&link, shape).unwrap(), a.min(b))
        })
}

fn stats(n: &Net, p_ul: f64) -> (PilotPlan, UlEstimateStats) {
    let plan = assign_pilots_oma(n.cfg.k, n.cfg.l, n.q, n.cfg.tau_p).unwrap();
    let st = ul_stats_oma(&n.gains, &plan, p_ul).unwrap();
    (plan, st)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimate_variance_bounded_by_gain(n in net(), p_db in -20.0f64..20.0) {
        let (_, st) = stats(&n, db_to_linear(p_db) / n.cfg.noise_power);
        for (r, z) in st.rho_f.iter().zip(n.gains.zeta_f.iter()).chain(st.rho_g.iter().zip(n.gains.zeta_g.iter())) {
            prop_assert!(*r >= 0.0 && *r <= *z * (1.0 + 1e-12));
        }
    }

    #[test]
    fn estimate_variance_grows_with_pilot_power(n in net(), p_db in -20.0f64..20.0, step in 0.0f64..10.0) {
        let p = db_to_linear(p_db) / n.cfg.noise_power;
        let (_, lo) = stats(&n, p);
        let (_, hi) = stats(&n, p * db_to_linear(step));
        for (a, b) in lo.rho_f.iter().zip(hi.rho_f.iter()).chain(lo.rho_g.iter().zip(hi.rho_g.iter())) {
            prop_assert!(*b >= *a * (1.0 - 1e-12));
        }
    }

    #[test]
    fn uniform_allocation_fills_every_budget(n in net()) {
        let (plan, st) = stats(&n, n.cfg.p_ul_norm());
        let cl = ClusterAssignment::full(n.cfg.m, n.cfg.k, n.cfg.n, n.cfg.l);
        let alloc = uniform_allocation(&st, &cl, n.cfg.p_p_norm(), n.cfg.p_s_norm());
        prop_assert!(rates::check_c3(&st, &cl, &alloc).is_ok());
        for m in 0..n.cfg.m {
            let load: f64 = (0..n.cfg.k).map(|k| alloc.eta_p[(m, k)] * st.rho_f[(m, k)]).sum();
            prop_assert!((load - 1.0).abs() < 1e-9);
        }
        let gp = rates::sinr_primary_oma(&st, &n.gains, &cl, &alloc, &plan, CrossTermForm::Coherent).unwrap();
        let gs = rates::sinr_secondary_oma(&st, &n.gains, &cl, &alloc, &plan, CrossTermForm::PerAp).unwrap();
        prop_assert!(gp.iter().chain(&gs).all(|g| g.is_finite() && *g >= 0.0));
    }

    #[test]
    fn dl_error_between_zero_and_variance(n in net(), pd_db in -10.0f64..30.0) {
        let (plan, st) = stats(&n, n.cfg.p_ul_norm());
        let cl = ClusterAssignment::full(n.cfg.m, n.cfg.k, n.cfg.n, n.cfg.l);
        let alloc = uniform_allocation(&st, &cl, n.cfg.p_p_norm(), n.cfg.p_s_norm());
        let dl = dl_stats_oma(&st, &n.gains, &cl, &alloc, &plan, db_to_linear(pd_db) / n.cfg.noise_power);
        for side in [&dl.primary, &dl.secondary] {
            for (k, v) in side.kappa.iter().zip(&side.v_kk) {
                prop_assert!(*k >= 0.0 && *k <= *v * (1.0 + 1e-12));
            }
        }
        let (gp, gs) = rates::sinr_oma_dlpilot(&dl, &st, &n.gains, &cl, &alloc, &plan, CrossTermForm::Coherent).unwrap();
        prop_assert!(gp.iter().chain(&gs).all(|g| g.is_finite() && *g >= 0.0));
    }

    #[test]
    fn cap_keeps_every_pu_under_threshold(n in net(), it_db in -30.0f64..30.0) {
        let (plan, st) = stats(&n, n.cfg.p_ul_norm());
        let cl = ClusterAssignment::full(n.cfg.m, n.cfg.k, n.cfg.n, n.cfg.l);
        let alloc = uniform_allocation(&st, &cl, n.cfg.p_p_norm(), n.cfg.p_s_norm());
        let z = rates::secondary_cci_zk(&st, &n.gains, &cl, &alloc, &plan, CrossTermForm::Coherent);
        let it = vec![db_to_linear(it_db); z.len()];
        let p = rates::cap_secondary_power(&z, &it, alloc.p_s);
        prop_assert!(p <= alloc.p_s && p >= 0.0);
        for (zk, t) in z.iter().zip(&it) {
            prop_assert!(p * zk <= t * (1.0 + 1e-12));
        }
    }

    #[test]
    fn secondary_sinr_grows_with_its_power(n in net(), lo in 0.0f64..1.0) {
        let (plan, st) = stats(&n, n.cfg.p_ul_norm());
        let cl = ClusterAssignment::full(n.cfg.m, n.cfg.k, n.cfg.n, n.cfg.l);
        let full = uniform_allocation(&st, &cl, n.cfg.p_p_norm(), n.cfg.p_s_norm());
        let low = PowerAllocation { p_s: full.p_s * lo, ..full.clone() };
        let a = rates::sinr_secondary_oma(&st, &n.gains, &cl, &low, &plan, CrossTermForm::Coherent).unwrap();
        let b = rates::sinr_secondary_oma(&st, &n.gains, &cl, &full, &plan, CrossTermForm::Coherent).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(*y >= *x * (1.0 - 1e-12));
        }
    }

    #[test]
    fn prelog_in_unit_interval(tau_c in 2usize..500, frac in 0.0f64..1.0) {
        let overhead = ((tau_c - 1) as f64 * frac) as usize;
        let p = prelog(tau_c, overhead).unwrap();
        prop_assert!(p > 0.0 && p <= 1.0);
        if overhead + 1 < tau_c {
            prop_assert!(prelog(tau_c, overhead + 1).unwrap() < p);
        }
    }

    #[test]
    fn noma_estimates_and_sic(net in noma_net(), theta in 0.05f64..1.0) {
        let (cfg, gains, q) = net;
        let plan = assign_pilots_noma(&gains.shape, q, cfg.tau_p).unwrap();
        let st = ul_stats_noma(&gains, &plan, cfg.p_ul_norm()).unwrap();
        for (a, z) in st.alpha_f.iter().zip(&gains.zeta_f).chain(st.alpha_g.iter().zip(&gains.zeta_g)) {
            prop_assert!(a.iter().zip(z.iter()).all(|(a, z)| *a >= 0.0 && *a <= *z * (1.0 + 1e-12)));
        }
        let alloc = rates::noma_default_allocation(&st, cfg.p_p_norm(), cfg.p_s_norm());
        prop_assert!(rates::check_c3_noma(&st, &alloc).is_ok());
        prop_assert!(rates::validate_noma_power_ordering(&alloc).is_ok());
        let perfect = SicModel::perfect(&gains.shape);
        let lossy = SicModel::from_theta(&gains.shape, theta).unwrap();
        for form in [CrossTermForm::Coherent, CrossTermForm::PerAp] {
            let a = rates::sinr_primary_noma(&st, &gains, &alloc, &plan, &perfect, form).unwrap();
            let b = rates::sinr_primary_noma(&st, &gains, &alloc, &plan, &lossy, form).unwrap();
            let c = rates::sinr_secondary_noma(&st, &gains, &alloc, &plan, &perfect, form).unwrap();
            let d = rates::sinr_secondary_noma(&st, &gains, &alloc, &plan, &lossy, form).unwrap();
            for (x, y) in a.iter().flatten().zip(b.iter().flatten()).chain(c.iter().flatten().zip(d.iter().flatten())) {
                prop_assert!(y.is_finite() && *y >= 0.0);
                prop_assert!(*x >= *y * (1.0 - 1e-12), "perfect {x} < imperfect {y}");
            }
        }
    }

    #[test]
    fn noma_ordering_sorts_by_strength(net in noma_net()) {
        let (cfg, gains, q) = net;
        let plan = assign_pilots_noma(&gains.shape, q, cfg.tau_p).unwrap();
        let st = ul_stats_noma(&gains, &plan, cfg.p_ul_norm()).unwrap();
        let (pp, ps) = rates::order_noma_users(&st);
        let sorted = gains.reordered(&pp, &ps);
        let st2 = ul_stats_noma(&sorted, &plan, cfg.p_ul_norm()).unwrap();
        for a in st2.alpha_f.iter().chain(&st2.alpha_g) {
            let s: Vec<f64> = (0..a.ncols()).map(|k| a.column(k).sum()).collect();
            prop_assert!(s.windows(2).all(|w| w[0] >= w[1]));
        }
        // the permutation only relabels users
        let mut ids: Vec<usize> = sorted.pu_ids.iter().flatten().copied().collect();
        ids.sort_unstable();
        prop_assert_eq!(ids, (0..cfg.k).collect::<Vec<_>>());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn bisection_contract(n in net(), it_db in -10.0f64..20.0, eps_exp in 1i32..5) {
        use cfshare_core::power_control::{maxmin_bisection, MaxMinProblem};
        let (plan, st) = stats(&n, n.cfg.p_ul_norm());
        let pr = MaxMinProblem {
            stats: st,
            gains: n.gains.clone(),
            clusters: ClusterAssignment::full(n.cfg.m, n.cfg.k, n.cfg.n, n.cfg.l),
            plan,
            p_p: n.cfg.p_p_norm(),
            p_s: n.cfg.p_s_norm(),
            i_t: vec![db_to_linear(it_db); n.cfg.k],
            epsilon: 10f64.powi(-eps_exp),
            lambda_bounds: None,
            weights: (1.0, 1.0),
            form: CrossTermForm::Coherent,
        };
        let out = maxmin_bisection(&pr).unwrap();
        let (lo, hi) = out.initial_bracket;
        prop_assert!(out.lambda_hi - out.lambda_lo <= pr.epsilon);
        prop_assert!(out.iterations <= ((hi - lo) / pr.epsilon).log2().ceil().max(0.0) as usize);
        prop_assert!(out.witness_violation <= 1e-6);
        prop_assert!(out.trajectory_monotone());
        prop_assert!(out.min_sinr() >= out.lambda_lo * (1.0 - 1e-9));
    }
}
