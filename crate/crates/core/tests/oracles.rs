//! Statistical and cross-module oracles.

use robust_bridge::bounds::{compute_bound, compute_f, distorted_integral};
use robust_bridge::calibration::{
    empirical_moments, fit_constants, theoretical_moments, CountRecord, CountSeries,
};
use robust_bridge::moments::mean_curve;
use robust_bridge::montecarlo::{
    estimate_entropy, estimate_integral, simulate, simulate_trajectories, Scenario, SimConfig,
};
use robust_bridge::numerics::trapezoid;
use robust_bridge::{solve_a, BridgeParams, Case, Curve, TimeGrid};

fn grid(n: usize) -> TimeGrid {
    TimeGrid::new(n).unwrap()
}

#[test]
fn upper_mc_mean_and_entropy_match_ode() {
    let p = BridgeParams::reference();
    let g = grid(2000);
    let sol = solve_a(&p, Case::Upper, 10.0, &g).unwrap();
    let ens = simulate(
        &p,
        Scenario::Distorted(Case::Upper),
        10.0,
        Some(&sol),
        40_000,
        21,
        &g,
        &SimConfig::default(),
    )
    .unwrap();
    let ode = compute_bound(&p, Case::Upper, 10.0, &grid(200_000)).unwrap();
    let mean = estimate_integral(&ens);
    let ent = estimate_entropy(&ens);
    assert!(
        mean.z_score(ode.distorted_integral) < 3.0,
        "{mean:?} vs {}",
        ode.distorted_integral
    );
    assert!(ent.z_score(ode.kappa) < 3.0, "{ent:?} vs {}", ode.kappa);
    assert!(ens.min_value >= 0.0);
}

#[test]
fn entropy_identity_holds_deterministically() {
    // kappa from the bound difference equals 1/2 E_Q int (A sigma psi)^2 r/(1-t) X dt.
    let p = BridgeParams::reference();
    let g = grid(200_000);
    let (r, s) = (0.71, 0.7252);
    for (case, psi) in [(Case::Lower, 50.0), (Case::Upper, 13.0)] {
        let sol = solve_a(&p, case, psi, &g).unwrap();
        let res = compute_bound(&p, case, psi, &g).unwrap();
        let n = g.n_steps();
        let m = mean_curve(&vec![0.03673; n + 1], r, &g, |k| {
            case.reversion_factor(s * s * psi * sol.a[k])
        });
        let integrand: Vec<f64> = (0..=n)
            .map(|k| {
                if k == n {
                    return 0.0;
                }
                let u = sol.a[k] * s * psi;
                0.5 * u * u * r / (1.0 - g.t(k)) * m[k]
            })
            .collect();
        let direct = trapezoid(&integrand, g.dt());
        assert!(
            ((direct - res.kappa) / res.kappa).abs() < 2e-3,
            "{case} {psi}: {direct} vs {}",
            res.kappa
        );
        assert_eq!(res.distorted_integral, distorted_integral(&p, &sol));
    }
}

fn simulated_days(n_days: usize, seed: u64) -> CountSeries {
    let g = grid(8700);
    let ids: Vec<usize> = (0..n_days).collect();
    let trajs = simulate_trajectories(
        &BridgeParams::reference(),
        Scenario::Benchmark,
        0.0,
        None,
        &ids,
        seed,
        &g,
        &SimConfig::default(),
        88,
    )
    .unwrap();
    let records = trajs
        .iter()
        .enumerate()
        .flat_map(|(d, traj)| {
            traj.iter().map(move |&(t, x)| CountRecord {
                day: format!("d{d}"),
                t,
                count: x,
            })
        })
        .collect();
    CountSeries::from_records(records).unwrap()
}

#[test]
fn binned_simulation_tracks_closed_form_mean() {
    let (a, r) = (0.03673, 0.71);
    let series = simulated_days(4000, 2);
    assert_eq!(series.n_days, 4000);
    let n_bins = 12;
    let emp = empirical_moments(&series, n_bins).unwrap();
    let exact = |t: f64| a * ((1.0 - t) - (1.0 - t).powf(r)) / (r - 1.0);
    // Records of one day are correlated, so the standard error comes from per-day bin averages.
    let bin_of = |t: f64| ((t * n_bins as f64) as usize).min(n_bins - 1);
    let mut day_sum = vec![vec![0.0; n_bins]; series.n_days];
    let mut day_cnt = vec![vec![0usize; n_bins]; series.n_days];
    let mut target = vec![0.0; n_bins];
    for rec in &series.records {
        let d: usize = rec.day[1..].parse().unwrap();
        let b = bin_of(rec.t);
        day_sum[d][b] += rec.count;
        day_cnt[d][b] += 1;
        target[b] += exact(rec.t);
    }
    for b in 0..n_bins {
        let target = target[b] / emp.counts_per_bin[b] as f64;
        let avgs: Vec<f64> = (0..series.n_days)
            .map(|d| day_sum[d][b] / day_cnt[d][b] as f64)
            .collect();
        let mean = avgs.iter().sum::<f64>() / avgs.len() as f64;
        let var = avgs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (avgs.len() - 1) as f64;
        let se = (var / avgs.len() as f64).sqrt();
        assert!((mean - emp.means[b]).abs() < 1e-12);
        assert!(
            (emp.means[b] - target).abs() <= 3.0 * se,
            "bin {b}: {} vs {target} (se {se})",
            emp.means[b]
        );
    }
}

#[test]
fn noisy_round_trip_within_ten_percent() {
    let series = simulated_days(10_000, 5);
    let emp = empirical_moments(&series, 24).unwrap();
    let fit = fit_constants(&emp, &BridgeParams::constant(0.05, 1.0, 0.5), &grid(5000)).unwrap();
    let Curve::Constant(a) = fit.params.a else {
        panic!()
    };
    let Curve::Constant(s) = fit.params.sigma else {
        panic!()
    };
    let rel = |x: f64, y: f64| ((x - y) / y).abs();
    assert!(rel(a, 0.03673) < 0.1, "{fit:?}");
    assert!(rel(fit.params.r, 0.71) < 0.1, "{fit:?}");
    assert!(rel(s, 0.7252) < 0.1, "{fit:?}");
    assert!(fit.history.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn model_mean_is_the_benchmark_mean() {
    let p = BridgeParams::reference();
    let g = grid(50_000);
    let m = theoretical_moments(&p, &g).unwrap();
    let direct = mean_curve(&p.a.on_grid(&g), p.r, &g, |_| 1.0);
    assert_eq!(m.mean, direct);
    assert_eq!(trapezoid(&m.mean, g.dt()), compute_f(&p, &g).unwrap());
}
