//! Path simulation of the benchmark and worst-case bridges.
//!
//! The scheme is full-truncation Euler with the exploding reversion taken implicitly:
//!
//! ```text
//! x_{k+1} = (x_k + dt a_k + sigma_k sqrt(r/(1-t_k) x_k^+) dB_k) / (1 + dt r/(1-t_{k+1}) c_{k+1})
//! ```
//!
//! with `c = 1` for the benchmark and `c = 1 -/+ sigma^2 psi A` under the upper/lower worst-case
//! drift. The internal state `x` may dip below zero; the process value is `X = x^+`, which is
//! what the diffusion, the entropy and all reported quantities see. Paths are advanced up to
//! `t = 1 - epsilon` (the last node before 1 on coarser grids) and pinned to 0 at `t = 1`.

mod rng;

use std::io::Write;
use std::path::Path;

use crate::error::{BridgeError, Result};
use crate::exec::Execution;
use crate::numerics::fmt_sig;
use crate::params::{validate_params, AmbiguityLevel, BridgeParams, Case, TimeGrid};
use crate::riccati::RiccatiSolution;

pub use rng::PathRng;

pub const DEFAULT_EPSILON: f64 = 1e-4;
pub const DEFAULT_MC_STEPS: usize = 10_000;
pub const PATHS_HEADER: &str = "path,integral,entropy,end_value";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Benchmark,
    Distorted(Case),
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scenario::Benchmark => f.write_str("benchmark"),
            Scenario::Distorted(case) => write!(f, "{case}"),
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = BridgeError;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("benchmark") {
            Ok(Scenario::Benchmark)
        } else {
            s.parse().map(Scenario::Distorted)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Paths are simulated on `[0, 1 - epsilon]`.
    pub epsilon: f64,
    pub execution: Execution,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub scenario: Scenario,
    pub psi: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub grid: TimeGrid,
    pub epsilon: f64,
    /// Per-path `int_0^1 X dt`, trapezoidal along the path.
    pub integrals: Vec<f64>,
    /// Per-path `1/2 int u^2 dt`; empty for the benchmark.
    pub entropies: Vec<f64>,
    pub min_value: f64,
    pub max_value: f64,
    /// `X` at the last simulated node `1 - epsilon`.
    pub end_values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    /// Sample mean and standard error (`n - 1` normalisation).
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std_error: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self {
                mean,
                std_error: f64::NAN,
            };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Self {
            mean,
            std_error: (var / n as f64).sqrt(),
        }
    }

    /// `|mean - target|` in standard errors.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target).abs() / self.std_error
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinningDiagnostics {
    pub max_end_value: f64,
    pub mean_end_value: f64,
}

/// Node coefficients shared by every path.
struct Kernel {
    k_end: usize,
    dt: f64,
    drift: Vec<f64>,
    diffusion: Vec<f64>,
    denom: Vec<f64>,
    entropy: Vec<f64>,
}

impl Kernel {
    fn build(
        params: &BridgeParams,
        scenario: Scenario,
        psi: f64,
        riccati: Option<&RiccatiSolution>,
        grid: &TimeGrid,
        epsilon: f64,
    ) -> Result<Self> {
        let n = grid.n_steps();
        let dt = grid.dt();
        // On grids coarser than epsilon the last node before the pin is used.
        let k_end = (((1.0 - epsilon) * n as f64).round() as usize).min(n - 1);
        if k_end == 0 {
            return Err(BridgeError::InvalidConfig(format!(
                "epsilon {epsilon} leaves no simulated interval on {n} steps"
            )));
        }
        let r = params.r;
        let mut kern = Self {
            k_end,
            dt,
            drift: Vec::with_capacity(k_end + 1),
            diffusion: Vec::with_capacity(k_end + 1),
            denom: Vec::with_capacity(k_end + 1),
            entropy: Vec::with_capacity(k_end + 1),
        };
        for k in 0..=k_end {
            let t = grid.t(k);
            let rate = r / (1.0 - t);
            let sigma = params.sigma.value_at(t);
            let (c, e) = match (scenario, riccati) {
                (Scenario::Distorted(case), Some(sol)) => {
                    let a = sol.a_at(t);
                    let u = a * sigma * psi;
                    (
                        case.reversion_factor(sigma * sigma * psi * a),
                        0.5 * u * u * rate * dt,
                    )
                }
                _ => (1.0, 0.0),
            };
            let denom = 1.0 + dt * rate * c;
            if denom.is_nan() || denom <= 0.0 {
                return Err(BridgeError::Unstable { t });
            }
            kern.drift.push(dt * params.a.value_at(t));
            kern.diffusion.push(sigma * (rate * dt).sqrt());
            kern.denom.push(denom);
            kern.entropy.push(e);
        }
        Ok(kern)
    }

    /// Runs one path, reporting `(k, X_k)` at every node up to `k_end`.
    #[inline]
    fn run<F: FnMut(usize, f64)>(&self, rng: &mut PathRng, mut observe: F) -> PathOutcome {
        let mut x = 0.0_f64;
        let mut xp = 0.0_f64;
        let mut area = 0.0;
        let mut ent = 0.0;
        let mut lo = f64::INFINITY;
        let mut hi = 0.0_f64;
        observe(0, 0.0);
        for k in 0..self.k_end {
            let z = rng.normal();
            ent += self.entropy[k] * xp;
            x = (x + self.drift[k] + self.diffusion[k] * xp.sqrt() * z) / self.denom[k + 1];
            let next = x.max(0.0);
            area += xp + next;
            xp = next;
            lo = lo.min(xp);
            hi = hi.max(xp);
            observe(k + 1, xp);
        }
        let t_end = self.k_end as f64 * self.dt;
        PathOutcome {
            integral: 0.5 * self.dt * area + 0.5 * (1.0 - t_end) * xp,
            entropy: ent,
            end_value: xp,
            min: lo.min(0.0),
            max: hi,
        }
    }
}

struct PathOutcome {
    integral: f64,
    entropy: f64,
    end_value: f64,
    min: f64,
    max: f64,
}

fn check_inputs(
    params: &BridgeParams,
    scenario: Scenario,
    psi: f64,
    riccati: Option<&RiccatiSolution>,
    epsilon: f64,
) -> Result<()> {
    validate_params(params)?;
    AmbiguityLevel::new(psi)?;
    if !(epsilon > 0.0 && epsilon < 0.1) {
        return Err(BridgeError::InvalidConfig(format!(
            "epsilon must lie in (0, 0.1), got {epsilon}"
        )));
    }
    if let Scenario::Distorted(case) = scenario {
        let sol = riccati.ok_or(BridgeError::MissingRiccati)?;
        if sol.blow_up {
            return Err(BridgeError::BlowUpInput);
        }
        if sol.case != case || sol.psi != psi {
            return Err(BridgeError::InconsistentInput(format!(
                "Riccati solution is for {} psi={}, simulation asks for {case} psi={psi}",
                sol.case, sol.psi
            )));
        }
    }
    Ok(())
}

/// Simulates `n_paths` independent paths; identical inputs give bit-identical ensembles
/// regardless of [`Execution`] or thread count.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    params: &BridgeParams,
    scenario: Scenario,
    psi: f64,
    riccati: Option<&RiccatiSolution>,
    n_paths: usize,
    seed: u64,
    grid: &TimeGrid,
    config: &SimConfig,
) -> Result<PathEnsemble> {
    check_inputs(params, scenario, psi, riccati, config.epsilon)?;
    if n_paths == 0 {
        return Err(BridgeError::InvalidConfig(
            "n_paths must be positive".into(),
        ));
    }
    let psi = if scenario == Scenario::Benchmark {
        0.0
    } else {
        psi
    };
    let kern = Kernel::build(params, scenario, psi, riccati, grid, config.epsilon)?;
    let outcomes = config
        .execution
        .map_indexed(n_paths, |p| kern.run(&mut PathRng::new(seed, p), |_, _| {}));
    let mut ens = PathEnsemble {
        scenario,
        psi,
        n_paths,
        seed,
        grid: *grid,
        epsilon: config.epsilon,
        integrals: Vec::with_capacity(n_paths),
        entropies: Vec::new(),
        min_value: f64::INFINITY,
        max_value: 0.0,
        end_values: Vec::with_capacity(n_paths),
    };
    if scenario != Scenario::Benchmark {
        ens.entropies.reserve(n_paths);
    }
    for o in outcomes {
        ens.integrals.push(o.integral);
        if scenario != Scenario::Benchmark {
            ens.entropies.push(o.entropy);
        }
        ens.end_values.push(o.end_value);
        ens.min_value = ens.min_value.min(o.min);
        ens.max_value = ens.max_value.max(o.max);
    }
    Ok(ens)
}

/// Trajectories of the listed paths, each decimated to at most `max_points` nodes plus the
/// pinned endpoint `(1, 0)`. Path `p` is the same path `p` that [`simulate`] produces.
#[allow(clippy::too_many_arguments)]
pub fn simulate_trajectories(
    params: &BridgeParams,
    scenario: Scenario,
    psi: f64,
    riccati: Option<&RiccatiSolution>,
    paths: &[usize],
    seed: u64,
    grid: &TimeGrid,
    config: &SimConfig,
    max_points: usize,
) -> Result<Vec<Vec<(f64, f64)>>> {
    check_inputs(params, scenario, psi, riccati, config.epsilon)?;
    let psi = if scenario == Scenario::Benchmark {
        0.0
    } else {
        psi
    };
    let kern = Kernel::build(params, scenario, psi, riccati, grid, config.epsilon)?;
    let stride = kern.k_end.div_ceil(max_points.max(2) - 1).max(1);
    Ok(config.execution.map_indexed(paths.len(), |i| {
        let mut pts = Vec::new();
        kern.run(&mut PathRng::new(seed, paths[i]), |k, x| {
            if k % stride == 0 || k == kern.k_end {
                pts.push((grid.t(k), x));
            }
        });
        pts.push((1.0, 0.0));
        pts
    }))
}

/// Mean and standard error of the per-path integrals.
pub fn estimate_integral(ens: &PathEnsemble) -> Estimate {
    Estimate::from_samples(&ens.integrals)
}

/// Mean and standard error of the per-path entropies (zero for the benchmark).
pub fn estimate_entropy(ens: &PathEnsemble) -> Estimate {
    if ens.scenario == Scenario::Benchmark {
        return Estimate {
            mean: 0.0,
            std_error: 0.0,
        };
    }
    Estimate::from_samples(&ens.entropies)
}

pub fn pinning_diagnostics(ens: &PathEnsemble) -> PinningDiagnostics {
    let n = ens.end_values.len().max(1) as f64;
    PinningDiagnostics {
        max_end_value: ens.end_values.iter().copied().fold(0.0, f64::max),
        mean_end_value: ens.end_values.iter().sum::<f64>() / n,
    }
}

/// Per-path rows under [`PATHS_HEADER`]; the entropy column is empty for the benchmark.
pub fn write_paths_csv<W: Write>(mut out: W, ens: &PathEnsemble) -> Result<()> {
    writeln!(out, "{PATHS_HEADER}")?;
    for p in 0..ens.n_paths {
        let ent = ens
            .entropies
            .get(p)
            .map(|&e| fmt_sig(e, 12))
            .unwrap_or_default();
        writeln!(
            out,
            "{p},{},{ent},{}",
            fmt_sig(ens.integrals[p], 12),
            fmt_sig(ens.end_values[p], 12)
        )?;
    }
    Ok(())
}

pub fn write_paths_csv_file(path: &Path, ens: &PathEnsemble) -> Result<()> {
    write_paths_csv(std::io::BufWriter::new(std::fs::File::create(path)?), ens)
}

/// `path,t,x` rows for trajectories from [`simulate_trajectories`].
pub fn write_trajectories_csv<W: Write>(
    mut out: W,
    paths: &[usize],
    trajectories: &[Vec<(f64, f64)>],
) -> Result<()> {
    writeln!(out, "path,t,x")?;
    for (p, traj) in paths.iter().zip(trajectories) {
        for &(t, x) in traj {
            writeln!(out, "{p},{},{}", fmt_sig(t, 12), fmt_sig(x, 12))?;
        }
    }
    Ok(())
}
