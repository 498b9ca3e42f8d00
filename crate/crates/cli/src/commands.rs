use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use robust_bridge::bounds::{psi_range, sweep_psi, write_sweep_csv, BoundResult};
use robust_bridge::calibration::{
    empirical_moments, fit_constants, ingest, write_fit_csv, IngestMode, DEFAULT_FIT_STEPS,
};
use robust_bridge::montecarlo::{
    estimate_entropy, estimate_integral, pinning_diagnostics, simulate as run_ensemble,
    simulate_trajectories, write_paths_csv_file, write_trajectories_csv, Scenario, SimConfig,
    DEFAULT_MC_STEPS,
};
use robust_bridge::numerics::fmt_sig;
use robust_bridge::riccati::{
    check_sufficient, lemma1_feasible_interval, novikov_check, Lemma1Feasibility,
};
use robust_bridge::{compute_bound, solve_a, BridgeParams, Case, TimeGrid};

use crate::Common;

pub const LOWER_TABLE_PSI: [f64; 5] = [5.0, 10.0, 50.0, 100.0, 400.0];
pub const UPPER_TABLE_PSI: [f64; 5] = [5.0, 10.0, 13.0, 14.0, 15.0];
const FAST_STEPS: usize = 100_000;

pub enum Outcome {
    Done,
    BlowUp,
}

impl Common {
    fn params(&self) -> Result<BridgeParams> {
        match &self.params {
            Some(path) => BridgeParams::from_file(path)
                .with_context(|| format!("reading parameters from {}", path.display())),
            None => Ok(BridgeParams::reference()),
        }
    }

    fn grid_or(&self, default: usize) -> Result<TimeGrid> {
        let n = self
            .n_steps
            .unwrap_or(if self.fast { FAST_STEPS } else { default });
        Ok(TimeGrid::new(n)?)
    }

    fn grid(&self) -> Result<TimeGrid> {
        self.grid_or(TimeGrid::DEFAULT_STEPS)
    }
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn bound(common: &Common, case: Case, psi: f64, out: Option<PathBuf>) -> Result<Outcome> {
    let res = compute_bound(&common.params()?, case, psi, &common.grid()?)?;
    let mut w = sink(&out)?;
    write_sweep_csv(&mut w, std::slice::from_ref(&res))?;
    w.flush()?;
    if res.blow_up {
        eprintln!("Riccati solution blows up for {case} psi={psi}");
        return Ok(Outcome::BlowUp);
    }
    Ok(Outcome::Done)
}

fn write_table(path: &Path, rows: &[BoundResult]) -> Result<()> {
    let mut w =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(w, "psi,kappa,count_ratio")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{}",
            fmt_sig(r.psi, 12),
            fmt_sig(r.kappa, 12),
            fmt_sig(r.count_ratio, 12)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn tables(common: &Common, out_dir: &Path) -> Result<Outcome> {
    let params = common.params()?;
    let grid = common.grid()?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    for (name, case, psis) in [
        ("table1.csv", Case::Lower, &LOWER_TABLE_PSI),
        ("table2.csv", Case::Upper, &UPPER_TABLE_PSI),
    ] {
        let rows = sweep_psi(&params, case, psis, &grid)?;
        let path = out_dir.join(name);
        write_table(&path, &rows)?;
        println!("wrote {}", path.display());
    }
    Ok(Outcome::Done)
}

pub fn sweep(
    common: &Common,
    case: Case,
    psi_min: f64,
    psi_max: f64,
    psi_step: f64,
    out: Option<PathBuf>,
) -> Result<Outcome> {
    let psis = psi_range(psi_min, psi_max, psi_step)?;
    let rows = sweep_psi(&common.params()?, case, &psis, &common.grid()?)?;
    let mut w = sink(&out)?;
    write_sweep_csv(&mut w, &rows)?;
    w.flush()?;
    if let Some(first) = rows.iter().find(|r| r.blow_up) {
        eprintln!("first blow-up at psi={}", fmt_sig(first.psi, 6));
    }
    Ok(Outcome::Done)
}

pub fn riccati(
    common: &Common,
    case: Case,
    psi: f64,
    rows: usize,
    out: Option<PathBuf>,
) -> Result<Outcome> {
    if rows < 2 {
        bail!("--rows must be at least 2");
    }
    let sol = solve_a(&common.params()?, case, psi, &common.grid()?)?;
    let mut w = sink(&out)?;
    sol.write_csv(&mut w, rows)?;
    w.flush()?;
    if let Some(t) = sol.blow_up_time {
        eprintln!("Riccati solution blows up at t={}", fmt_sig(t, 6));
        return Ok(Outcome::BlowUp);
    }
    Ok(Outcome::Done)
}

pub struct SimArgs {
    pub scenario: Scenario,
    pub psi: f64,
    pub paths: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub out: Option<PathBuf>,
    pub trajectories: usize,
    pub trajectory_out: Option<PathBuf>,
}

pub fn simulate(common: &Common, args: SimArgs) -> Result<Outcome> {
    let params = common.params()?;
    let grid = common.grid_or(DEFAULT_MC_STEPS)?;
    let config = SimConfig {
        epsilon: args.epsilon,
        ..SimConfig::default()
    };
    let sol = match args.scenario {
        Scenario::Benchmark => None,
        Scenario::Distorted(case) => {
            let sol = solve_a(&params, case, args.psi, &grid)?;
            if sol.blow_up {
                eprintln!("Riccati solution blows up for {case} psi={}", args.psi);
                return Ok(Outcome::BlowUp);
            }
            Some(sol)
        }
    };
    let ens = run_ensemble(
        &params,
        args.scenario,
        args.psi,
        sol.as_ref(),
        args.paths,
        args.seed,
        &grid,
        &config,
    )?;
    let integral = estimate_integral(&ens);
    let pin = pinning_diagnostics(&ens);
    let mut line = format!(
        "{} psi={} paths={} seed={} mean_integral={} se={}",
        ens.scenario,
        fmt_sig(ens.psi, 6),
        ens.n_paths,
        ens.seed,
        fmt_sig(integral.mean, 6),
        fmt_sig(integral.std_error, 3)
    );
    if args.scenario != Scenario::Benchmark {
        let ent = estimate_entropy(&ens);
        line += &format!(
            " entropy={} entropy_se={}",
            fmt_sig(ent.mean, 6),
            fmt_sig(ent.std_error, 3)
        );
    }
    line += &format!(
        " min_value={} mean_end_value={}",
        fmt_sig(ens.min_value, 3),
        fmt_sig(pin.mean_end_value, 3)
    );
    println!("{line}");
    if let Some(path) = &args.out {
        write_paths_csv_file(path, &ens)?;
    }
    if let Some(path) = &args.trajectory_out {
        let ids: Vec<usize> = (0..args.trajectories.min(args.paths)).collect();
        let trajs = simulate_trajectories(
            &params,
            args.scenario,
            args.psi,
            sol.as_ref(),
            &ids,
            args.seed,
            &grid,
            &config,
            1001,
        )?;
        let mut w = BufWriter::new(File::create(path)?);
        write_trajectories_csv(&mut w, &ids, &trajs)?;
        w.flush()?;
    }
    Ok(Outcome::Done)
}

pub fn check(common: &Common, psi: f64) -> Result<Outcome> {
    let params = common.params()?;
    let suff = check_sufficient(&params, psi)?;
    println!(
        "sufficient: {} (threshold {})",
        if suff.holds { "yes" } else { "no" },
        fmt_sig(suff.threshold, 3)
    );
    if psi == 0.0 {
        println!("lemma1: not applicable at psi=0");
    } else {
        match lemma1_feasible_interval(&params, psi)? {
            Lemma1Feasibility::Feasible { q, low, high } => println!(
                "lemma1: feasible, Ybar in [{}, {}] (Q={})",
                fmt_sig(low, 6),
                fmt_sig(high, 6),
                fmt_sig(q, 6)
            ),
            Lemma1Feasibility::Infeasible { q } => {
                println!("lemma1: infeasible (Q={})", fmt_sig(q, 6))
            }
        }
    }
    let grid = common.grid()?;
    let sol = solve_a(&params, Case::Upper, psi, &grid)?;
    if sol.blow_up {
        println!("novikov: skipped, upper Riccati solution blows up");
        return Ok(Outcome::Done);
    }
    let rep = novikov_check(&params, psi, &grid, &sol)?;
    println!(
        "novikov: comparison {} (I0={})",
        if rep.comparison_holds {
            "holds"
        } else {
            "fails"
        },
        fmt_sig(rep.i0, 6)
    );
    Ok(Outcome::Done)
}

pub fn calibrate(
    common: &Common,
    data: &Path,
    mode: IngestMode,
    bins: usize,
    out: Option<PathBuf>,
) -> Result<Outcome> {
    let init = common.params()?;
    let grid = common.grid_or(DEFAULT_FIT_STEPS)?;
    let series = ingest(data, mode)?;
    let emp = empirical_moments(&series, bins)?;
    let fit = fit_constants(&emp, &init, &grid)?;
    eprintln!(
        "{} records over {} days, {} usable bins; {}",
        series.records.len(),
        series.n_days,
        fit.n_bins_used,
        fit.weighting
    );
    if fit.degenerate {
        eprintln!("warning: all usable moments are zero; r and sigma are not identified");
    }
    if !fit.converged {
        eprintln!(
            "warning: Nelder-Mead stopped after {} iterations without converging",
            fit.iterations
        );
    }
    let mut w = sink(&out)?;
    write_fit_csv(&mut w, &fit)?;
    w.flush()?;
    Ok(Outcome::Done)
}
