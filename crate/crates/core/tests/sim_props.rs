mod common;

use common::{closed_loop, outer_box};
use cwhnet_core::admissible::{build_admissible_set, AdmissibleOptions};
use cwhnet_core::geometry::decompose_free_space;
use cwhnet_core::numerics::{psd_factor, sample_standard_normal, RngStream};
use cwhnet_core::sim::{
    beta_tube_analytic, beta_tube_empirical, empirical_error_covariance, monte_carlo, run_episode, step, ErrorInit,
    MonteCarloConfig, Route, SimState, Trace, TraceRecord,
};
use cwhnet_core::Vector;
use nalgebra::dvector;
use proptest::prelude::*;

fn route(
    r: Vector,
) -> (
    cwhnet_core::dynamics::ClosedLoop,
    cwhnet_core::geometry::RegionSet,
    Route,
) {
    let cl = closed_loop();
    let regions = decompose_free_space(outer_box(), None).unwrap();
    let set = build_admissible_set(&cl, &regions.regions()[0], &r, &AdmissibleOptions::new(0.1)).unwrap();
    let route = Route::new(&cl, vec![0], vec![r], vec![set]).unwrap();
    (cl, regions, route)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn step_matches_error_dynamics(x in prop::collection::vec(-50.0f64..50.0, 6), xh in prop::collection::vec(-50.0f64..50.0, 6),
                                   w in prop::collection::vec(-3.0f64..3.0, 3), v in prop::collection::vec(-3.0f64..3.0, 3)) {
        let (cl, _, route) = route(dvector![20.0, 10.0, 0.0]);
        let s = SimState { k: 0, x: Vector::from_vec(x), x_hat: Vector::from_vec(xh), cursor: 0 };
        let (w, v) = (Vector::from_vec(w), Vector::from_vec(v));
        let (next, u) = step(&cl, &route, &s, &w, &v).unwrap();
        let sys = cl.sys();
        let expected = cl.a_o() * s.error() + &sys.gamma * &w + cl.l() * &sys.f * &v;
        prop_assert!((next.error() - expected).norm() <= 1e-9 * (1.0 + s.error().norm()));
        prop_assert!((u - (cl.k() * &s.x_hat + cl.g() * dvector![20.0, 10.0, 0.0])).norm() < 1e-12);
    }
}

#[test]
fn sampled_error_covariance_matches_p_inf() {
    let cl = closed_loop();
    let f = psd_factor(cl.p_inf(), 1e-12).unwrap();
    let mut rng = RngStream::new(77);
    let records = (0..100_000)
        .map(|_| TraceRecord {
            k: 0,
            x: &f * sample_standard_normal(&mut rng, 6),
            x_hat: Vector::zeros(6),
            u: Vector::zeros(3),
            cursor: 0,
            region: 0,
            box_ok: true,
            obstacle_ok: true,
            region_ok: true,
        })
        .collect();
    let cov = empirical_error_covariance(&[Trace { records, arrival: None }]).unwrap();
    let rel = (&cov - cl.p_inf()).norm() / cl.p_inf().norm();
    assert!(rel <= 0.05, "{rel}");
}

#[test]
fn analytic_tubes_cover_simulated_positions() {
    let r = dvector![97.0, 0.0, 0.0];
    let (cl, regions, route) = route(r.clone());
    let x_tilde0 = dvector![-20.0, 15.0, 0.0, 0.0, 0.0, 0.0];
    let x_hat0 = cl.equilibrium_state(&r).unwrap() + &x_tilde0;
    let steps = 60;
    let beta = 0.9;
    let tubes = beta_tube_analytic(&cl, &r, &x_tilde0, steps, beta).unwrap();
    let n = 1000;
    let mut inside = vec![0usize; steps + 1];
    for mut stream in RngStream::substreams(5, n) {
        let t = run_episode(
            &cl,
            &regions,
            &route,
            &x_hat0,
            &ErrorInit::SteadyState,
            steps,
            &mut stream,
        )
        .unwrap();
        for rec in &t.records {
            inside[rec.k] += tubes[rec.k].contains(&rec.x.rows(0, 3).into_owned()) as usize;
        }
    }
    let tol = 3.0 * (beta * (1.0 - beta) / n as f64).sqrt();
    let pooled = inside.iter().sum::<usize>() as f64 / (n * (steps + 1)) as f64;
    assert!((pooled - beta).abs() <= tol, "{pooled}");
    let worst = inside
        .iter()
        .map(|&c| (c as f64 / n as f64 - beta).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 5.0 * tol, "{worst}");
}

#[test]
fn empirical_tubes_cover_their_own_runs() {
    let r = dvector![97.0, 0.0, 0.0];
    let (cl, regions, route) = route(r.clone());
    let x_tilde0 = dvector![10.0, -25.0, 5.0, 0.0, 0.0, 0.0];
    let x_hat0 = cl.equilibrium_state(&r).unwrap() + &x_tilde0;
    let (n, steps, beta) = (1000, 40, 0.9);
    let config = MonteCarloConfig {
        n_runs: n,
        steps,
        seed: 8,
        init: ErrorInit::SteadyState,
        x_hat0: x_hat0.clone(),
        require_admissible_start: true,
    };
    let summary = monte_carlo(&cl, &regions, &route, &config).unwrap();
    let tubes = beta_tube_empirical(&summary, beta).unwrap();
    let analytic = beta_tube_analytic(&cl, &r, &x_tilde0, steps, beta).unwrap();
    let mut inside = 0usize;
    for mut stream in RngStream::substream_range(8, 0, n) {
        let t = run_episode(
            &cl,
            &regions,
            &route,
            &x_hat0,
            &ErrorInit::SteadyState,
            steps,
            &mut stream,
        )
        .unwrap();
        for rec in &t.records {
            inside += tubes[rec.k].contains(&rec.x.rows(0, 3).into_owned()) as usize;
        }
    }
    let pooled = inside as f64 / (n * (steps + 1)) as f64;
    assert!(
        (pooled - beta).abs() <= 3.0 * (beta * (1.0 - beta) / n as f64).sqrt(),
        "{pooled}"
    );
    for (e, a) in tubes.iter().zip(&analytic) {
        assert_eq!(e.radius_sq, a.radius_sq);
        let sd = a.shape.diagonal().map(f64::sqrt);
        for i in 0..3 {
            assert!((e.center[i] - a.center[i]).abs() <= 4.0 * sd[i] / (n as f64).sqrt());
            assert!((e.shape[(i, i)] / a.shape[(i, i)] - 1.0).abs() <= 0.15);
        }
    }
}
