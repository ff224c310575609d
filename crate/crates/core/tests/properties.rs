//! Property tests for the invariants each module promises.

use proptest::prelude::*;
use roadhawkes::background::{compute_background_weights, estimate_spatial};
use roadhawkes::catalog::catalog_from_csv;
use roadhawkes::localizer::synthetic::{generate, Incident, LoopFixture};
use roadhawkes::localizer::{event_impact_scores, prepare, significance_filter, Aggregation};
use roadhawkes::monotone::d0;
use roadhawkes::triggering::{compute_rho, enumerate_pairs};
use roadhawkes::validation::{qq_band, transform_times};
use roadhawkes::*;

fn domain() -> StudyDomain {
    StudyDomain::new(20_000.0, 30_000.0).unwrap()
}

fn catalog() -> impl Strategy<Value = EventCatalog> {
    prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 12..80).prop_map(|pts| {
        let d = domain();
        let events = pts
            .into_iter()
            .map(|(u, v)| Event::new(u * d.t_max, v * d.x_max))
            .collect();
        EventCatalog::new(d, events).unwrap()
    })
}

fn random_model(cat: &EventCatalog, a: f64) -> ModelComponents {
    let cfg = FitConfig::default();
    let mut m = ModelComponents::initial(cat.domain(), &cfg, Enabled::all(), cat.len());
    m.a = a;
    // a non-flat spatial factor so background terms differ between events
    let w: Vec<f64> = (0..cat.len()).map(|i| 0.5 + (i % 3) as f64).collect();
    m.spatial = estimate_spatial(cat, &w, cfg.bw_spatial, cfg.grid_dx).unwrap();
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn catalog_csv_round_trip_is_exact(cat in catalog()) {
        let back = catalog_from_csv(&cat.to_csv_string(None), *cat.domain()).unwrap();
        prop_assert_eq!(back.events(), cat.events());
        prop_assert!(cat.events().windows(2).all(|w| w[0].t <= w[1].t));
    }

    #[test]
    fn responsibilities_partition_each_event(cat in catalog(), a in 0.0f64..0.95) {
        let m = random_model(&cat, a);
        let w = compute_background_weights(&cat, &m).unwrap();
        let mut pairs = enumerate_pairs(&cat, m.config.trigger_horizon_t, m.config.trigger_horizon_x);
        compute_rho(&mut pairs, &cat, &m).unwrap();
        for (psi, rho) in w.psi.iter().zip(pairs.rho_sums()) {
            prop_assert!((psi + rho - 1.0).abs() <= 1e-10);
        }
        let ev = cat.events();
        for p in &pairs.pairs {
            prop_assert!(ev[p.i].t < ev[p.j].t && ev[p.i].x > ev[p.j].x);
        }
    }

    #[test]
    fn background_curves_have_mean_one(cat in catalog(), bw in 500.0f64..8000.0) {
        let w: Vec<f64> = (0..cat.len()).map(|i| ((i * 7) % 5) as f64 / 4.0).collect();
        let c = estimate_spatial(&cat, &w, bw, 100.0).unwrap();
        prop_assert!((c.mean() - 1.0).abs() <= 1e-6);
        prop_assert!(c.cache.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn compensator_never_decreases(cat in catalog(), a in 0.0f64..0.95) {
        let lambda = transform_times(&random_model(&cat, a), &cat);
        prop_assert!(lambda.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(lambda[0] >= 0.0);
    }

    #[test]
    fn qq_bands_mirror_and_narrow(n in 1usize..200, frac in 0.0f64..1.0) {
        let k = 1 + ((n - 1) as f64 * frac) as usize;
        let (lo, hi) = qq_band(n, k, 0.05).unwrap();
        let (lo2, hi2) = qq_band(n, n + 1 - k, 0.05).unwrap();
        prop_assert!((lo - (1.0 - hi2)).abs() < 1e-9 && (hi - (1.0 - lo2)).abs() < 1e-9);
        // same rank fraction, more data, narrower band
        let (wlo, whi) = qq_band(2 * n + 1, 2 * k, 0.05).unwrap();
        let (mlo, mhi) = qq_band(4 * n + 3, 4 * k, 0.05).unwrap();
        prop_assert!(whi - wlo > mhi - mlo);
    }

    #[test]
    fn significance_is_nested(
        seasonal in prop::collection::vec(20.0f64..120.0, 1..40),
        drops in prop::collection::vec(-0.2f64..0.9, 40),
        t1 in 0.0f64..99.0,
        t2 in 0.0f64..99.0,
    ) {
        let measured: Vec<Option<f64>> = seasonal.iter().zip(&drops).map(|(s, d)| Some(s * (1.0 - d))).collect();
        let seasonal: Vec<Option<f64>> = seasonal.into_iter().map(Some).collect();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let strict = significance_filter(&measured, &seasonal, hi).unwrap();
        let loose = significance_filter(&measured, &seasonal, lo).unwrap();
        prop_assert!(!strict.keep || loose.keep);
    }
}

/// Monotone instances that stay feasible: a center at the origin, whose
/// mirrored kernel decreases on its own, plus a few nearby ones.
fn monotone_problem() -> impl Strategy<Value = MonotoneProblem> {
    (prop::collection::vec((0.0f64..2.5, 0.5f64..3.0), 1..5), 0.6f64..1.2).prop_map(|(rest, omega)| {
        let mut centers = vec![0.0];
        let mut base_weights = vec![1.0];
        for (c, y) in rest {
            centers.push(c * omega);
            base_weights.push(y);
        }
        MonotoneProblem {
            centers,
            base_weights,
            bandwidth: omega,
            check_grid: (0..=60).map(|k| k as f64 * 0.1).collect(),
            eps: 0.0,
            mirror_at_zero: true,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn monotone_solution_is_feasible_and_stationary(prob in monotone_problem()) {
        let sol = solve_monotone(&prob).unwrap();
        let n = sol.p.len();
        prop_assert!(sol.d0 >= -1e-12);
        prop_assert!((sol.p.iter().sum::<f64>() - 1.0).abs() <= 1e-8);
        prop_assert!(sol.p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let feasible = |p: &[f64]| prob.check_grid.iter().all(|&x| prob.slope(p, x) <= prob.eps + 1e-9);
        prop_assert!(feasible(&sol.p));
        // no feasible transfer of 1e-6 between two coordinates helps by more than 1e-8
        let delta = 1e-6;
        for i in 0..n {
            for k in 0..n {
                if i == k || sol.p[i] < delta {
                    continue;
                }
                let mut q = sol.p.clone();
                q[i] -= delta;
                q[k] += delta;
                let strictly_feasible = prob.check_grid.iter().all(|&x| prob.slope(&q, x) <= prob.eps);
                if strictly_feasible {
                    prop_assert!(d0(&q) >= sol.d0 - 1e-8, "transfer {}->{} improves {} -> {}", i, k, sol.d0, d0(&q));
                }
            }
        }
    }

    #[test]
    fn tightening_eps_never_lowers_d0(prob in monotone_problem(), e1 in 0.0f64..0.05, e2 in 0.0f64..0.05) {
        let (tight, loose) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let solve = |eps| solve_monotone(&MonotoneProblem { eps, ..prob.clone() }).unwrap().d0;
        prop_assert!(solve(tight) >= solve(loose) - 1e-9);
    }
}

proptest! {
    // each case generates five weeks of loop data
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn localization_ignores_a_common_speed_shift(seed in 0u64..1000, k in 0usize..3, shift in -40.0f64..40.0) {
        let fix = LoopFixture { n_loops: 4, seed, ..LoopFixture::default() };
        let start = 4 * 10080 + 600;
        let inc = Incident { loop_index: k, start, duration: 30, speed_drop: 30.0, occupancy_rise: 20.0 };
        let set = generate(&fix, Some(inc));
        let mut moved = set.clone();
        for l in &mut moved.loops {
            for s in l.speed.iter_mut().flatten() {
                *s += shift;
            }
        }
        let w = EventWindow::new(start - 10, start + 40, 0.0, 1e6, &set).unwrap();
        let (a, b) = (prepare(set).unwrap(), prepare(moved).unwrap());
        let sa = event_impact_scores(&w, &a, Aggregation::Max).unwrap();
        let sb = event_impact_scores(&w, &b, Aggregation::Max).unwrap();
        for (x, y) in sa.iter().zip(&sb) {
            prop_assert!((x.score.unwrap() - y.score.unwrap()).abs() <= 1e-9);
        }
        let (la, lb) = (localize(&w, &a, Aggregation::Max), localize(&w, &b, Aggregation::Max));
        prop_assert_eq!(la.pair, lb.pair);
        prop_assert_eq!(la.pair, Some((k, k + 1)));
    }
}
