//! Benchmark expectation, worst-case bound values, relative entropy and psi sweeps.
//!
//! For a Riccati solution `A` the bound value is `B_0 = int_0^1 a_s A_s ds`. The expected
//! integral under the worst-case drift comes from the mean equation with reversion multiplier
//! `1 - sigma^2 psi A` (upper) or `1 + sigma^2 psi A` (lower), and the entropy of the distortion
//! follows from the difference of the two:
//!
//! ```text
//! lower: kappa = psi (B_0 - E_Q[int X]),    upper: kappa = psi (E_Q[int X] - B_0).
//! ```

use std::io::Write;
use std::path::Path;

use crate::error::{BridgeError, Result};
use crate::exec::Execution;
use crate::moments::{integral, mean_curve, mean_curve_with, MeanScheme};
use crate::numerics::fmt_sig;
use crate::params::{validate_params, AmbiguityLevel, BridgeParams, Case, TimeGrid};
use crate::riccati::{solve_a, RiccatiSolution};

/// Header of the sweep CSV.
pub const SWEEP_HEADER: &str = "case,psi,bound,distorted_integral,kappa,count_ratio,blow_up";

#[derive(Debug, Clone, PartialEq)]
pub struct BoundResult {
    pub case: Case,
    pub psi: f64,
    /// `G(0,0)` (lower) or `H(0,0)` (upper). `NaN` on blow-up, as are the fields below.
    pub bound_value: f64,
    /// Expected integral under the worst-case dynamics.
    pub distorted_integral: f64,
    pub kappa: f64,
    /// `distorted_integral / F`.
    pub count_ratio: f64,
    pub blow_up: bool,
}

impl BoundResult {
    fn blown(case: Case, psi: f64) -> Self {
        Self {
            case,
            psi,
            bound_value: f64::NAN,
            distorted_integral: f64::NAN,
            kappa: f64::NAN,
            count_ratio: f64::NAN,
            blow_up: true,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.case,
            fmt_sig(self.psi, 12),
            fmt_sig(self.bound_value, 12),
            fmt_sig(self.distorted_integral, 12),
            fmt_sig(self.kappa, 12),
            fmt_sig(self.count_ratio, 12),
            self.blow_up
        )
    }
}

/// Writes results under [`SWEEP_HEADER`].
pub fn write_sweep_csv<W: Write>(mut out: W, results: &[BoundResult]) -> Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in results {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

pub fn write_sweep_csv_file(path: &Path, results: &[BoundResult]) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_sweep_csv(file, results)
}

/// Benchmark expectation `F = E[int_0^1 X_s ds]`.
pub fn compute_f(params: &BridgeParams, grid: &TimeGrid) -> Result<f64> {
    compute_f_with(params, grid, MeanScheme::default())
}

pub fn compute_f_with(params: &BridgeParams, grid: &TimeGrid, scheme: MeanScheme) -> Result<f64> {
    validate_params(params)?;
    let m = mean_curve_with(&params.a.on_grid(grid), params.r, grid, |_| 1.0, scheme);
    Ok(integral(&m, grid))
}

/// Expected integral under the worst-case drift built from `riccati`.
pub fn distorted_integral(params: &BridgeParams, riccati: &RiccatiSolution) -> f64 {
    let grid = &riccati.grid;
    let sigma = params.sigma.on_grid(grid);
    let psi = riccati.psi;
    let case = riccati.case;
    let m = mean_curve(&params.a.on_grid(grid), params.r, grid, |k| {
        case.reversion_factor(sigma[k] * sigma[k] * psi * riccati.a[k])
    });
    integral(&m, grid)
}

/// Bound, distorted expectation and entropy at a single `psi`.
pub fn compute_bound(
    params: &BridgeParams,
    case: Case,
    psi: f64,
    grid: &TimeGrid,
) -> Result<BoundResult> {
    let f = compute_f(params, grid)?;
    bound_with_benchmark(params, case, psi, grid, f)
}

/// As [`compute_bound`] with a precomputed benchmark `F`.
pub fn bound_with_benchmark(
    params: &BridgeParams,
    case: Case,
    psi: f64,
    grid: &TimeGrid,
    benchmark: f64,
) -> Result<BoundResult> {
    let riccati = solve_a(params, case, psi, grid)?;
    Ok(bound_from_riccati(params, &riccati, benchmark))
}

pub fn bound_from_riccati(
    params: &BridgeParams,
    riccati: &RiccatiSolution,
    benchmark: f64,
) -> BoundResult {
    let (case, psi) = (riccati.case, riccati.psi);
    if riccati.blow_up {
        return BoundResult::blown(case, psi);
    }
    let bound_value = riccati.b0;
    let distorted = distorted_integral(params, riccati);
    let kappa = match case {
        Case::Lower => psi * (bound_value - distorted),
        Case::Upper => psi * (distorted - bound_value),
    } + 0.0;
    BoundResult {
        case,
        psi,
        bound_value,
        distorted_integral: distorted,
        kappa,
        count_ratio: distorted / benchmark,
        blow_up: false,
    }
}

/// One result per `psi`, in input order; blow-ups are flagged, not dropped.
pub fn sweep_psi(
    params: &BridgeParams,
    case: Case,
    psi_values: &[f64],
    grid: &TimeGrid,
) -> Result<Vec<BoundResult>> {
    sweep_psi_with(params, case, psi_values, grid, Execution::default())
}

pub fn sweep_psi_with(
    params: &BridgeParams,
    case: Case,
    psi_values: &[f64],
    grid: &TimeGrid,
    exec: Execution,
) -> Result<Vec<BoundResult>> {
    for &psi in psi_values {
        AmbiguityLevel::new(psi)?;
    }
    if psi_values.is_empty() {
        return Ok(Vec::new());
    }
    let f = compute_f(params, grid)?;
    exec.map_indexed(psi_values.len(), |i| {
        bound_with_benchmark(params, case, psi_values[i], grid, f)
    })
    .into_iter()
    .collect()
}

/// `start, start + step, ...` up to `end` inclusive (with a little slack for rounding).
pub fn psi_range(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if step.is_nan() || step <= 0.0 || !start.is_finite() || !end.is_finite() || end < start {
        return Err(BridgeError::InvalidConfig(format!(
            "bad psi range {start}..{end} step {step}"
        )));
    }
    let count = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| start + i as f64 * step).collect())
}

/// Smallest `psi` in `[0, psi_max]` whose entropy reaches `kappa_target`, by bisection.
///
/// Relies on `kappa` increasing in `psi`. A blow-up inside the bracket counts as infinite
/// entropy.
pub fn invert_kappa(
    params: &BridgeParams,
    case: Case,
    kappa_target: f64,
    grid: &TimeGrid,
    psi_max: f64,
) -> Result<f64> {
    if !kappa_target.is_finite() || kappa_target < 0.0 {
        return Err(BridgeError::InvalidConfig(format!(
            "target entropy must be finite and nonnegative, got {kappa_target}"
        )));
    }
    AmbiguityLevel::new(psi_max)?;
    if kappa_target == 0.0 {
        return Ok(0.0);
    }
    let f = compute_f(params, grid)?;
    let kappa = |psi: f64| -> Result<f64> {
        let res = bound_with_benchmark(params, case, psi, grid, f)?;
        Ok(if res.blow_up {
            f64::INFINITY
        } else {
            res.kappa
        })
    };
    let tol = 1e-6 * kappa_target.max(1.0);
    let top = kappa(psi_max)?;
    if top < kappa_target - tol {
        return Err(BridgeError::NotBracketed {
            target: kappa_target,
            psi_max,
            reached: top,
        });
    }
    if (top - kappa_target).abs() <= tol {
        return Ok(psi_max);
    }
    let (mut lo, mut hi) = (0.0, psi_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let k = kappa(mid)?;
        if (k - kappa_target).abs() <= tol {
            return Ok(mid);
        }
        if k < kappa_target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * psi_max {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(n).unwrap()
    }

    #[test]
    fn benchmark_matches_closed_form() {
        let p = BridgeParams::reference();
        let g = grid(100_000);
        let f = compute_f(&p, &g).unwrap();
        let exact = 0.03673 / (2.0 * 1.71);
        assert!(((f - exact) / exact).abs() <= 1e-7);
        assert!((f - 0.01074).abs() < 1e-5);
        // Implicit Euler lands on exactly (1 - dt) times the true value.
        let euler = compute_f_with(&p, &g, MeanScheme::ImplicitEuler).unwrap();
        assert!(((euler - exact) / exact - (-1e-5)).abs() < 1e-12);
    }

    #[test]
    fn zero_source_gives_zero_benchmark() {
        let p = BridgeParams::constant(0.0, 0.71, 0.7252);
        assert_eq!(compute_f(&p, &grid(1000)).unwrap(), 0.0);
    }

    #[test]
    fn neutral_bound_is_benchmark() {
        let p = BridgeParams::reference();
        let g = grid(100_000);
        let f = compute_f(&p, &g).unwrap();
        for case in [Case::Lower, Case::Upper] {
            let b = compute_bound(&p, case, 0.0, &g).unwrap();
            assert_eq!(b.kappa, 0.0);
            assert_eq!(b.count_ratio, 1.0);
            assert!(((b.bound_value - f) / f).abs() < 2e-5);
        }
    }

    #[test]
    fn entropy_signs_and_sandwich() {
        let p = BridgeParams::reference();
        let g = grid(50_000);
        let f = compute_f(&p, &g).unwrap();
        let lower = compute_bound(&p, Case::Lower, 100.0, &g).unwrap();
        assert!(lower.bound_value >= lower.distorted_integral);
        assert!(lower.kappa > 0.0 && lower.bound_value < f);
        let upper = compute_bound(&p, Case::Upper, 10.0, &g).unwrap();
        assert!(upper.distorted_integral >= upper.bound_value);
        assert!(upper.kappa > 0.0 && upper.bound_value > f);
    }

    #[test]
    fn table_rows_at_moderate_resolution() {
        let p = BridgeParams::reference();
        let g = grid(100_000);
        let close = |x: f64, y: f64| ((x - y) / y).abs() < 0.02;
        let l = compute_bound(&p, Case::Lower, 100.0, &g).unwrap();
        assert!(
            close(l.kappa, 1.73e-1) && close(l.count_ratio, 2.60e-1),
            "{l:?}"
        );
        let u = compute_bound(&p, Case::Upper, 10.0, &g).unwrap();
        assert!(
            close(u.kappa, 1.13e-1) && close(u.count_ratio, 2.57),
            "{u:?}"
        );
    }

    #[test]
    fn blow_up_is_flagged_not_an_error() {
        let p = BridgeParams::reference();
        let res = compute_bound(&p, Case::Upper, 16.0, &grid(20_000)).unwrap();
        assert!(res.blow_up);
        assert!(res.kappa.is_nan());
        assert!(res.csv_row().ends_with(",NaN,NaN,NaN,NaN,true"));
    }

    #[test]
    fn sweep_keeps_order_and_flags() {
        let p = BridgeParams::reference();
        let g = grid(20_000);
        assert!(sweep_psi(&p, Case::Upper, &[], &g).unwrap().is_empty());
        let psis = [16.5, 0.0, 5.0];
        let seq = sweep_psi_with(&p, Case::Upper, &psis, &g, Execution::Sequential).unwrap();
        let par = sweep_psi_with(&p, Case::Upper, &psis, &g, Execution::Parallel).unwrap();
        let rows = |v: &[BoundResult]| v.iter().map(BoundResult::csv_row).collect::<Vec<_>>();
        assert_eq!(rows(&seq), rows(&par));
        assert!(seq[0].blow_up && !seq[1].blow_up && !seq[2].blow_up);
        assert_eq!(seq[1].psi, 0.0);
        assert!(sweep_psi(&p, Case::Upper, &[-1.0], &g).is_err());
    }

    #[test]
    fn psi_range_is_inclusive() {
        let r = psi_range(15.0, 16.5, 0.1).unwrap();
        assert_eq!(r.len(), 16);
        assert!((r[15] - 16.5).abs() < 1e-12);
        assert!(psi_range(1.0, 0.0, 0.1).is_err());
        assert!(psi_range(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn inversion_round_trips() {
        let p = BridgeParams::reference();
        let g = grid(20_000);
        assert_eq!(invert_kappa(&p, Case::Lower, 0.0, &g, 500.0).unwrap(), 0.0);
        let k = compute_bound(&p, Case::Lower, 37.0, &g).unwrap().kappa;
        let psi = invert_kappa(&p, Case::Lower, k, &g, 500.0).unwrap();
        assert!((psi - 37.0).abs() < 1e-3, "{psi}");
        assert!(matches!(
            invert_kappa(&p, Case::Upper, 10.0, &g, 15.0),
            Err(BridgeError::NotBracketed { .. })
        ));
    }

    #[test]
    fn sweep_csv_layout() {
        let p = BridgeParams::reference();
        let rows = sweep_psi(&p, Case::Lower, &[0.0, 5.0], &grid(1000)).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], SWEEP_HEADER);
        assert!(lines[1].starts_with("lower,0,"));
        assert!(lines[1].ends_with(",0,1,false"));
        assert!(text.ends_with('\n'));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(16))]

            #[test]
            fn bounds_monotone_and_entropy_nondecreasing(
                a in 0.005f64..0.2, r in 0.2f64..2.0, sigma in 0.2f64..1.2,
            ) {
                let p = BridgeParams::constant(a, r, sigma);
                let g = TimeGrid::new(5_000).unwrap();
                let f = compute_f(&p, &g).unwrap();
                let lower = sweep_psi(&p, Case::Lower, &[0.0, 1.0, 10.0, 100.0], &g).unwrap();
                let thr = crate::riccati::check_sufficient(&p, 0.0).unwrap().threshold;
                let upper = sweep_psi(&p, Case::Upper, &[0.0, 0.3 * thr, 0.6 * thr, 0.9 * thr], &g).unwrap();
                for w in lower.windows(2) {
                    prop_assert!(w[1].bound_value <= w[0].bound_value);
                    prop_assert!(w[1].kappa >= w[0].kappa);
                }
                for w in upper.windows(2) {
                    prop_assert!(w[1].bound_value >= w[0].bound_value);
                    prop_assert!(w[1].kappa >= w[0].kappa);
                }
                for res in lower.iter().chain(&upper) {
                    prop_assert!(res.kappa >= 0.0);
                }
                for res in lower.iter().skip(1) {
                    prop_assert!(res.bound_value <= f);
                }
                for res in upper.iter().skip(1) {
                    prop_assert!(res.bound_value >= f);
                }
            }
        }
    }
}
