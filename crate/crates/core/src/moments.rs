//! One-step integrators for the first two moments of the bridge.
//!
//! The mean of a bridge with reversion multiplier `c_t` satisfies
//!
//! ```text
//! dm/dt = a_t - r/(1-t) c_t m,   m_0 = 0.
//! ```
//!
//! At `t = 1` the reversion is infinite and every scheme returns the pinned value 0.
//! [`MeanScheme::Trapezoidal`] is second order away from the endpoint;
//! [`MeanScheme::ImplicitEuler`] takes the reversion at the new node,
//! `m_{k+1} = (m_k + dt a_k) / (1 + dt r/(1-t_{k+1}) c_{k+1})`, and is first order.

use crate::numerics::trapezoid;
use crate::params::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeanScheme {
    #[default]
    Trapezoidal,
    ImplicitEuler,
}

/// Mean curve on `grid` for a reversion multiplier given per node.
///
/// `a` holds the source at every node.
pub fn mean_curve<F>(a: &[f64], r: f64, grid: &TimeGrid, factor: F) -> Vec<f64>
where
    F: Fn(usize) -> f64,
{
    mean_curve_with(a, r, grid, factor, MeanScheme::default())
}

pub fn mean_curve_with<F>(
    a: &[f64],
    r: f64,
    grid: &TimeGrid,
    factor: F,
    scheme: MeanScheme,
) -> Vec<f64>
where
    F: Fn(usize) -> f64,
{
    let n = grid.n_steps();
    debug_assert_eq!(a.len(), n + 1);
    let dt = grid.dt();
    let mut m = vec![0.0; n + 1];
    // dt r / (1 - t_k) is r / (n - k).
    match scheme {
        MeanScheme::ImplicitEuler => {
            for k in 0..n - 1 {
                let next = r / (n - k - 1) as f64;
                m[k + 1] = (m[k] + dt * a[k]) / (1.0 + next * factor(k + 1));
            }
        }
        MeanScheme::Trapezoidal => {
            let mut c_here = factor(0);
            for k in 0..n - 1 {
                let c_next = factor(k + 1);
                let here = 0.5 * r / (n - k) as f64;
                let next = 0.5 * r / (n - k - 1) as f64;
                m[k + 1] = (m[k] * (1.0 - here * c_here) + 0.5 * dt * (a[k] + a[k + 1]))
                    / (1.0 + next * c_next);
                c_here = c_next;
            }
        }
    }
    m
}

/// `int_0^1 m dt` by the trapezoidal rule.
pub fn integral(m: &[f64], grid: &TimeGrid) -> f64 {
    trapezoid(m, grid.dt())
}

/// Second moment `q = E[X^2]` of the benchmark bridge given its mean curve.
///
/// Integrates `dq/dt = 2 a m - 2 r/(1-t) q + sigma^2 r/(1-t) m` with the same implicit
/// treatment as [`mean_curve`]; `sigma2` holds `sigma_t^2` per node.
pub fn second_moment_curve(
    a: &[f64],
    sigma2: &[f64],
    r: f64,
    mean: &[f64],
    grid: &TimeGrid,
) -> Vec<f64> {
    let n = grid.n_steps();
    let dt = grid.dt();
    let mut q = vec![0.0; n + 1];
    for k in 0..n - 1 {
        let step_rate = r / (n - k - 1) as f64;
        let source = dt * 2.0 * a[k] * mean[k + 1] + sigma2[k + 1] * step_rate * mean[k + 1];
        q[k + 1] = (q[k] + source) / (1.0 + 2.0 * step_rate);
    }
    q
}
