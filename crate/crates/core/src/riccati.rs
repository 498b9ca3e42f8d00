//! Backward Riccati equations for the value-function slope `A_t`, plus the well-posedness
//! diagnostics that go with them.
//!
//! The upper and lower problems share the value form `A_t x + B_t` with
//!
//! ```text
//! -dA/dt = r/(1-t) (-A +/- sigma_t^2 psi A^2 / 2) + 1,   A_1 = 0,
//! B_t    = int_t^1 a_s A_s ds,
//! ```
//!
//! `+` for the upper (overestimating) case and `-` for the lower one. In reversed time
//! `s = 1 - t` and with `A_{1-s} = s (1 + Y_s) / (1 + r)` the equation becomes
//!
//! ```text
//! dY/ds = -(r+1)/s Y +/- r/(2(r+1)) omega_s^2 psi (Y + 1)^2,   Y_0 = 0,   omega_s = sigma_{1-s},
//! ```
//!
//! whose only singular coefficient multiplies the linear term. The marching schemes below take
//! that term implicitly and the quadratic term explicitly. The upper-case solution can escape to
//! infinity before `s = 1`; that is reported as a blow-up rather than an error.

use std::io::Write;
use std::path::Path;

use crate::error::{BridgeError, Result};
use crate::numerics::{fmt_sig, interp_uniform, trapezoid, trapezoid_product};
use crate::params::{validate_params, AmbiguityLevel, BridgeParams, Case, TimeGrid};

/// `|Y_s|` beyond this value counts as divergence.
pub const BLOW_UP_LIMIT: f64 = 1e8;

/// Time stepping used for the transformed Riccati equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RiccatiScheme {
    /// Trapezoidal rule on the singular linear term with a second-order Adams-Bashforth
    /// extrapolation of the quadratic term. Second order.
    #[default]
    ImexTrapezoidal,
    /// Backward Euler on the linear term, forward Euler on the quadratic term. First order.
    SemiImplicitEuler,
}

#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub case: Case,
    pub psi: f64,
    pub grid: TimeGrid,
    /// `A` at `t_k = k dt`, forward time. `NaN` where the solution was not reached.
    pub a: Vec<f64>,
    /// Transformed solution `Y` at `s_j = j dt` (reversed time).
    pub y: Vec<f64>,
    pub a0: f64,
    /// `B_0 = int_0^1 a_s A_s ds`; the bound value at the origin.
    pub b0: f64,
    pub blow_up: bool,
    /// Forward time at which divergence was detected.
    pub blow_up_time: Option<f64>,
    /// `max_t sigma_t^2 psi A_t`.
    pub max_sigma2_psi_a: f64,
}

impl RiccatiSolution {
    /// `A` at an arbitrary forward time, linearly interpolated.
    pub fn a_at(&self, t: f64) -> f64 {
        interp_uniform(&self.a, t)
    }

    /// Writes `t,A` rows, decimated by a uniform stride to at most `max_rows` rows.
    pub fn write_csv<W: Write>(&self, mut out: W, max_rows: usize) -> Result<()> {
        let n = self.grid.n_steps();
        let stride = n.div_ceil(max_rows.max(2) - 1).max(1);
        writeln!(out, "t,A")?;
        for k in (0..=n).step_by(stride) {
            writeln!(
                out,
                "{},{}",
                fmt_sig(self.grid.t(k), 12),
                fmt_sig(self.a[k], 12)
            )?;
        }
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path, max_rows: usize) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(file, max_rows)
    }
}

/// Per-node coefficients of the transformed problem.
struct Transformed {
    r: f64,
    n: usize,
    /// `sigma^2` at forward nodes.
    sigma2: Vec<f64>,
}

impl Transformed {
    fn new(params: &BridgeParams, grid: &TimeGrid) -> Self {
        let sigma2 = params
            .sigma
            .on_grid(grid)
            .into_iter()
            .map(|s| s * s)
            .collect();
        Self {
            r: params.r,
            n: grid.n_steps(),
            sigma2,
        }
    }

    /// `omega_s^2` at reversed node `j`.
    fn omega2(&self, j: usize) -> f64 {
        self.sigma2[self.n - j]
    }

    /// Coefficient `r / (2 (r + 1)) omega^2 psi` at reversed node `j`.
    fn quad_coeff(&self, j: usize, psi: f64) -> f64 {
        self.r / (2.0 * (self.r + 1.0)) * self.omega2(j) * psi
    }
}

struct March {
    values: Vec<f64>,
    diverged_at: Option<usize>,
}

/// Integrates `dZ/ds = -(r+1)/s Z + g(j, Z)`, `Z_0 = 0`, on `s_j = j / n`.
///
/// `g(j, z)` is the non-singular part evaluated at node `j`.
fn march<G>(n: usize, r: f64, scheme: RiccatiScheme, g: G) -> March
where
    G: Fn(usize, f64) -> f64,
{
    let h = 1.0 / n as f64;
    let lin = r + 1.0;
    let mut z = vec![f64::NAN; n + 1];
    z[0] = 0.0;
    let mut g_prev = g(0, 0.0);
    // s_1 = h, so the implicit factor is 1 + (r+1) h / s_1 = 2 + r.
    z[1] = h * g_prev / (1.0 + lin);
    if !z[1].is_finite() || z[1].abs() > BLOW_UP_LIMIT {
        return March {
            values: z,
            diverged_at: Some(1),
        };
    }
    for j in 1..n {
        let zj = z[j];
        let gj = g(j, zj);
        let jf = j as f64;
        // (r+1) h / s_j = (r+1) / j. Backward Euler until the trapezoidal amplification
        // factor 1 - (r+1)/(2j) is at least 1/2, so large r does not make the start oscillate.
        let next = if scheme == RiccatiScheme::SemiImplicitEuler || jf < lin {
            (zj + h * gj) / (1.0 + lin / (jf + 1.0))
        } else {
            let explicit = 1.5 * gj - 0.5 * g_prev;
            (zj * (1.0 - 0.5 * lin / jf) + h * explicit) / (1.0 + 0.5 * lin / (jf + 1.0))
        };
        g_prev = gj;
        if !next.is_finite() || next.abs() > BLOW_UP_LIMIT {
            return March {
                values: z,
                diverged_at: Some(j + 1),
            };
        }
        z[j + 1] = next;
    }
    March {
        values: z,
        diverged_at: None,
    }
}

/// Solves for `A` with the default scheme.
pub fn solve_a(
    params: &BridgeParams,
    case: Case,
    psi: f64,
    grid: &TimeGrid,
) -> Result<RiccatiSolution> {
    solve_a_with(params, case, psi, grid, RiccatiScheme::default())
}

pub fn solve_a_with(
    params: &BridgeParams,
    case: Case,
    psi: f64,
    grid: &TimeGrid,
    scheme: RiccatiScheme,
) -> Result<RiccatiSolution> {
    validate_params(params)?;
    let psi = AmbiguityLevel::new(psi)?.value();
    let tr = Transformed::new(params, grid);
    let sign = case.sign();
    let coeff: Vec<f64> = (0..=tr.n).map(|j| sign * tr.quad_coeff(j, psi)).collect();
    let march = march(tr.n, tr.r, scheme, |j, y| coeff[j] * (y + 1.0) * (y + 1.0));
    if case == Case::Lower {
        if let Some(j) = march.diverged_at {
            return Err(BridgeError::Unstable { t: 1.0 - grid.t(j) });
        }
    }
    Ok(finish(params, case, psi, grid, &tr, march))
}

fn finish(
    params: &BridgeParams,
    case: Case,
    psi: f64,
    grid: &TimeGrid,
    tr: &Transformed,
    march: March,
) -> RiccatiSolution {
    let n = tr.n;
    let y = march.values;
    let reached = march.diverged_at.unwrap_or(n + 1);
    let mut a = vec![f64::NAN; n + 1];
    for j in 0..reached {
        a[n - j] = grid.t(j) * (1.0 + y[j]) / (1.0 + tr.r);
    }
    a[n] = 0.0;
    let blow_up = march.diverged_at.is_some();
    let (a0, b0, max_sigma2_psi_a) = if blow_up {
        (f64::NAN, f64::NAN, f64::INFINITY)
    } else {
        let source = params.a.on_grid(grid);
        let b0 = trapezoid_product(&source, &a, grid.dt());
        let max = a
            .iter()
            .zip(&tr.sigma2)
            .map(|(ak, s2)| s2 * psi * ak)
            .fold(f64::NEG_INFINITY, f64::max);
        (a[0], b0, max)
    };
    RiccatiSolution {
        case,
        psi,
        grid: *grid,
        a,
        y,
        a0,
        b0,
        blow_up,
        blow_up_time: march.diverged_at.map(|j| 1.0 - grid.t(j)),
        max_sigma2_psi_a,
    }
}

/// Iteration limits for [`solve_a_picard`].
#[derive(Debug, Clone, Copy)]
pub struct PicardOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-10,
        }
    }
}

/// Upper-case `A` from the fixed-point form of the transformed equation,
///
/// ```text
/// Y_s = r psi / (2 (r+1)) s^-(r+1) int_0^s m^(r+1) omega_m^2 (Y_m + 1)^2 dm,
/// ```
///
/// iterated from `Y = 0` with cumulative trapezoidal quadrature until the sup-norm update is at
/// most `tol`. Independent of the marching schemes, so it serves as a cross-check.
pub fn solve_a_picard(
    params: &BridgeParams,
    psi: f64,
    grid: &TimeGrid,
    opts: PicardOptions,
) -> Result<RiccatiSolution> {
    validate_params(params)?;
    let psi = AmbiguityLevel::new(psi)?.value();
    let tr = Transformed::new(params, grid);
    let n = tr.n;
    let h = grid.dt();
    let pre = tr.r * psi / (2.0 * (tr.r + 1.0));
    // (s_j / s_{j+1})^(r+1): carries the running integral from node j to j+1 without forming
    // s^(r+1), which underflows for large r.
    let carry: Vec<f64> = (0..n)
        .map(|j| (j as f64 / (j + 1) as f64).powf(tr.r + 1.0))
        .collect();
    let omega2: Vec<f64> = (0..=n).map(|j| tr.omega2(j)).collect();

    let mut y = vec![0.0; n + 1];
    let mut next = vec![0.0; n + 1];
    let mut last_update = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let mut scaled = 0.0; // s_j^-(r+1) int_0^{s_j} m^(r+1) f(m) dm
        let mut update: f64 = 0.0;
        next[0] = 0.0;
        for j in 0..n {
            let fj = omega2[j] * (y[j] + 1.0) * (y[j] + 1.0);
            let fj1 = omega2[j + 1] * (y[j + 1] + 1.0) * (y[j + 1] + 1.0);
            scaled = carry[j] * (scaled + 0.5 * h * fj) + 0.5 * h * fj1;
            next[j + 1] = pre * scaled;
            update = update.max((next[j + 1] - y[j + 1]).abs());
        }
        std::mem::swap(&mut y, &mut next);
        last_update = update;
        if !update.is_finite() || y.iter().any(|v| v.abs() > BLOW_UP_LIMIT) {
            break;
        }
        if update <= opts.tol {
            let march = March {
                values: y,
                diverged_at: None,
            };
            return Ok(finish(params, Case::Upper, psi, grid, &tr, march));
        }
    }
    Err(BridgeError::NoConvergence {
        iterations: opts.max_iter,
        last_update,
    })
}

/// Outcome of the closed-form sufficient condition `sigma_bar^2 psi < r / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SufficientCondition {
    pub holds: bool,
    /// `r / (2 sigma_bar^2)`.
    pub threshold: f64,
}

pub fn check_sufficient(params: &BridgeParams, psi: f64) -> Result<SufficientCondition> {
    let sigma_bar = validate_params(params)?;
    let psi = AmbiguityLevel::new(psi)?.value();
    let threshold = feasibility_bound(params.r) / (sigma_bar * sigma_bar);
    Ok(SufficientCondition {
        holds: psi < threshold,
        threshold,
    })
}

/// Smallest admissible value of `sigma_bar^2 psi` over the five constraints of the feasibility
/// lemma. Always equals `r / 2`, but the full minimum is taken.
pub fn feasibility_bound(r: f64) -> f64 {
    let r1 = r + 1.0;
    [
        r1,
        r1 * r1 / (2.0 * r),
        2.0 * r1 * r1 / r,
        r1 * (r + 4.0) / (2.0 * (r + 2.0)),
        r / 2.0,
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min)
}

/// Admissible range for the truncation level `Y_bar` of the relaxed fixed-point problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lemma1Feasibility {
    /// Every `Y_bar` with `low < Y_bar < high` satisfies all four conditions.
    Feasible {
        q: f64,
        low: f64,
        high: f64,
    },
    Infeasible {
        q: f64,
    },
}

impl Lemma1Feasibility {
    pub fn interval(&self) -> Option<(f64, f64)> {
        match *self {
            Lemma1Feasibility::Feasible { low, high, .. } => Some((low, high)),
            Lemma1Feasibility::Infeasible { .. } => None,
        }
    }

    pub fn q(&self) -> f64 {
        match *self {
            Lemma1Feasibility::Feasible { q, .. } | Lemma1Feasibility::Infeasible { q } => q,
        }
    }
}

/// Intersects the four truncation constraints with `Q = r sigma_bar^2 psi / ((r+1)(r+2))`.
pub fn lemma1_feasible_interval(params: &BridgeParams, psi: f64) -> Result<Lemma1Feasibility> {
    let sigma_bar = validate_params(params)?;
    let psi = AmbiguityLevel::new(psi)?.value();
    if psi == 0.0 {
        return Err(BridgeError::InvalidPsi(psi));
    }
    let r = params.r;
    let q = r * sigma_bar * sigma_bar * psi / ((r + 1.0) * (r + 2.0));
    if q >= 0.5 {
        return Ok(Lemma1Feasibility::Infeasible { q });
    }
    let root = (1.0 - 2.0 * q).sqrt();
    // (1 - sqrt(1 - 2Q)) / Q written without cancellation for small Q
    let low = 2.0 / (1.0 + root) - 1.0;
    let high = [
        (1.0 + root) / q - 1.0,
        1.0 / q - 1.0,
        r / ((r + 2.0) * q) - 1.0,
        (2.0 * (r + 1.0) / ((r + 2.0) * q)).sqrt() - 1.0,
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min);
    if low < high && high > 0.0 {
        Ok(Lemma1Feasibility::Feasible {
            q,
            low: low.max(0.0),
            high,
        })
    } else {
        Ok(Lemma1Feasibility::Infeasible { q })
    }
}

/// Numerical realization of the exponential-moment argument for the worst-case drift.
#[derive(Debug, Clone)]
pub struct NovikovReport {
    pub psi: f64,
    /// Auxiliary solution `W_s` in reversed time; `NaN` past a divergence.
    pub w: Vec<f64>,
    /// The transformed Riccati solution `Z_s = Y_s`.
    pub z: Vec<f64>,
    /// `W_s <= Z_s + 1` at every node.
    pub comparison_holds: bool,
    /// `psi int_0^1 a_{1-s} s / (1 + r) W_s ds`; infinite if `W` diverged.
    pub i0: f64,
}

/// Solves
///
/// ```text
/// dW/ds = -(r+1)/s W + r/(2(r+1)) omega_s^2 psi W^2 + r/(2(1+r)) omega_s^2 psi (1 + Y_s)^2,
/// ```
///
/// `W_0 = 0`, with the default marching scheme, driven by the upper-case solution `Y`.
pub fn novikov_check(
    params: &BridgeParams,
    psi: f64,
    grid: &TimeGrid,
    riccati: &RiccatiSolution,
) -> Result<NovikovReport> {
    validate_params(params)?;
    let psi = AmbiguityLevel::new(psi)?.value();
    if riccati.blow_up {
        return Err(BridgeError::InconsistentInput(
            "Riccati solution blew up".into(),
        ));
    }
    if riccati.case != Case::Upper {
        return Err(BridgeError::InconsistentInput(
            "the exponential-moment check applies to the upper case".into(),
        ));
    }
    if riccati.grid != *grid || riccati.psi != psi {
        return Err(BridgeError::InconsistentInput(format!(
            "Riccati solution was computed for psi={} on {} steps, check requested psi={} on {} steps",
            riccati.psi,
            riccati.grid.n_steps(),
            psi,
            grid.n_steps()
        )));
    }
    let tr = Transformed::new(params, grid);
    let n = tr.n;
    let y = &riccati.y;
    let coeff: Vec<f64> = (0..=n).map(|j| tr.quad_coeff(j, psi)).collect();
    let march = march(n, tr.r, RiccatiScheme::default(), |j, w| {
        coeff[j] * (w * w + (1.0 + y[j]) * (1.0 + y[j]))
    });
    let w = march.values;
    let (comparison_holds, i0) = if march.diverged_at.is_some() {
        (false, f64::INFINITY)
    } else {
        let holds = w.iter().zip(y).all(|(wj, zj)| *wj <= zj + 1.0);
        let source = params.a.on_grid(grid);
        let integrand: Vec<f64> = (0..=n)
            .map(|j| source[n - j] * grid.t(j) / (1.0 + tr.r) * w[j])
            .collect();
        (holds, psi * trapezoid(&integrand, grid.dt()))
    };
    Ok(NovikovReport {
        psi,
        w,
        z: y.clone(),
        comparison_holds,
        i0,
    })
}
