//! Moment-matching fit of constant `(a, r, sigma)` to binned count data.
//!
//! Counts are pooled across days into uniform time bins; the per-bin mean and (population)
//! standard deviation are compared with the benchmark moment curves and the sum of squared
//! mean and std errors, weighted equally, is minimised by Nelder–Mead over `log a, log r,
//! log sigma`.

mod ingest;
pub mod nelder_mead;

use std::io::Write;
use std::path::Path;

use crate::error::{BridgeError, Result};
use crate::moments::{mean_curve, second_moment_curve};
use crate::numerics::{fmt_sig, interp_uniform};
use crate::params::{validate_params, BridgeParams, Curve, TimeGrid};

pub use ingest::{ingest, CountRecord, CountSeries, IngestMode, NORMALIZED_HEADER, RAW_HEADER};
pub use nelder_mead::{minimize, Minimum, NelderMeadOptions};

pub const FIT_HEADER: &str = "a,r,sigma,objective,n_bins_used";
pub const MIN_BINS: usize = 4;
/// Grid used by the fit objective unless the caller supplies one.
pub const DEFAULT_FIT_STEPS: usize = 10_000;
const LOG_RANGE: (f64, f64) = (-40.0, 6.0);

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMoments {
    pub bin_centers: Vec<f64>,
    /// `NaN` for empty bins, as is the matching std.
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub counts_per_bin: Vec<usize>,
}

impl EmpiricalMoments {
    pub fn usable_bins(&self) -> usize {
        self.counts_per_bin.iter().filter(|&&c| c > 0).count()
    }
}

/// Pools every record into `n_bins` uniform bins on `[0, 1]` (`t = 1` falls in the last bin).
pub fn empirical_moments(series: &CountSeries, n_bins: usize) -> Result<EmpiricalMoments> {
    if n_bins < MIN_BINS {
        return Err(BridgeError::InvalidConfig(format!(
            "need at least {MIN_BINS} bins, got {n_bins}"
        )));
    }
    let mut sum = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    let bin = |t: f64| ((t * n_bins as f64) as usize).min(n_bins - 1);
    for rec in &series.records {
        let b = bin(rec.t);
        sum[b] += rec.count;
        counts[b] += 1;
    }
    let means: Vec<f64> = (0..n_bins)
        .map(|b| {
            if counts[b] > 0 {
                sum[b] / counts[b] as f64
            } else {
                f64::NAN
            }
        })
        .collect();
    let mut sq = vec![0.0; n_bins];
    for rec in &series.records {
        let b = bin(rec.t);
        sq[b] += (rec.count - means[b]).powi(2);
    }
    Ok(EmpiricalMoments {
        bin_centers: (0..n_bins)
            .map(|b| (b as f64 + 0.5) / n_bins as f64)
            .collect(),
        stds: (0..n_bins)
            .map(|b| {
                if counts[b] > 0 {
                    (sq[b] / counts[b] as f64).sqrt()
                } else {
                    f64::NAN
                }
            })
            .collect(),
        means,
        counts_per_bin: counts,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoreticalMoments {
    pub grid: TimeGrid,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl TheoreticalMoments {
    pub fn mean_at(&self, t: f64) -> f64 {
        interp_uniform(&self.mean, t)
    }

    pub fn std_at(&self, t: f64) -> f64 {
        interp_uniform(&self.std, t)
    }
}

/// Benchmark mean and standard deviation on `grid`.
pub fn theoretical_moments(params: &BridgeParams, grid: &TimeGrid) -> Result<TheoreticalMoments> {
    validate_params(params)?;
    let a = params.a.on_grid(grid);
    let sigma2: Vec<f64> = params.sigma.on_grid(grid).iter().map(|s| s * s).collect();
    let mean = mean_curve(&a, params.r, grid, |_| 1.0);
    let q = second_moment_curve(&a, &sigma2, params.r, &mean, grid);
    let std = q
        .iter()
        .zip(&mean)
        .map(|(q, m)| (q - m * m).max(0.0).sqrt())
        .collect();
    Ok(TheoreticalMoments {
        grid: *grid,
        mean,
        std,
    })
}

/// Equal-weight sum of squared mean and std residuals over the non-empty bins.
pub fn objective(emp: &EmpiricalMoments, model: &TheoreticalMoments) -> f64 {
    (0..emp.bin_centers.len())
        .filter(|&b| emp.counts_per_bin[b] > 0)
        .map(|b| {
            let t = emp.bin_centers[b];
            (model.mean_at(t) - emp.means[b]).powi(2) + (model.std_at(t) - emp.stds[b]).powi(2)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub params: BridgeParams,
    pub objective: f64,
    pub n_bins_used: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Best objective after each Nelder–Mead iteration.
    pub history: Vec<f64>,
    /// Set when every usable empirical moment is zero; `a` is then driven towards 0 and
    /// `r`, `sigma` carry no information.
    pub degenerate: bool,
    pub weighting: &'static str,
}

impl FitReport {
    pub fn csv_row(&self) -> String {
        let c = |curve: &Curve| match curve {
            Curve::Constant(v) => *v,
            Curve::Sampled { .. } => f64::NAN,
        };
        format!(
            "{},{},{},{},{}",
            fmt_sig(c(&self.params.a), 12),
            fmt_sig(self.params.r, 12),
            fmt_sig(c(&self.params.sigma), 12),
            fmt_sig(self.objective, 12),
            self.n_bins_used
        )
    }
}

pub fn write_fit_csv<W: Write>(mut out: W, report: &FitReport) -> Result<()> {
    writeln!(out, "{FIT_HEADER}")?;
    writeln!(out, "{}", report.csv_row())?;
    Ok(())
}

pub fn write_fit_csv_file(path: &Path, report: &FitReport) -> Result<()> {
    write_fit_csv(
        std::io::BufWriter::new(std::fs::File::create(path)?),
        report,
    )
}

fn constant_value(curve: &Curve, name: &str) -> Result<f64> {
    match curve {
        Curve::Constant(v) if *v > 0.0 => Ok(*v),
        _ => Err(BridgeError::InvalidConfig(format!(
            "initial {name} must be a positive constant"
        ))),
    }
}

fn from_logs(x: &[f64]) -> BridgeParams {
    let e = |v: f64| v.clamp(LOG_RANGE.0, LOG_RANGE.1).exp();
    BridgeParams::constant(e(x[0]), e(x[1]), e(x[2]))
}

/// Fits constant coefficients starting from `init`.
pub fn fit_constants(
    emp: &EmpiricalMoments,
    init: &BridgeParams,
    grid: &TimeGrid,
) -> Result<FitReport> {
    fit_constants_with(emp, init, grid, NelderMeadOptions::default())
}

pub fn fit_constants_with(
    emp: &EmpiricalMoments,
    init: &BridgeParams,
    grid: &TimeGrid,
    opts: NelderMeadOptions,
) -> Result<FitReport> {
    let usable = emp.usable_bins();
    if usable < MIN_BINS {
        return Err(BridgeError::DegenerateData { usable });
    }
    let x0 = [
        constant_value(&init.a, "a")?.ln(),
        init.r.ln(),
        constant_value(&init.sigma, "sigma")?.ln(),
    ];
    let min = minimize(
        |x| match theoretical_moments(&from_logs(x), grid) {
            Ok(model) => objective(emp, &model),
            Err(_) => f64::INFINITY,
        },
        &x0,
        opts,
    );
    let degenerate = (0..emp.means.len())
        .filter(|&b| emp.counts_per_bin[b] > 0)
        .all(|b| emp.means[b] == 0.0 && emp.stds[b] == 0.0);
    Ok(FitReport {
        params: from_logs(&min.x),
        objective: min.value,
        n_bins_used: usable,
        iterations: min.iterations,
        converged: min.converged,
        history: min.history,
        degenerate,
        weighting: "equal weights on mean and std residuals",
    })
}
