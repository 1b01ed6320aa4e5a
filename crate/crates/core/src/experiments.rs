//! Monte-Carlo harness: averaged error paths, iteration-complexity
//! estimates `T(eps, gamma)` and log-log slope fits.
//!
//! Trials run in parallel but each owns its random stream `(base_seed,
//! trial)`, and the reduction walks trials in index order with compensated
//! summation, so results do not depend on the thread count.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{calibrate_constant, rescaled_linear_parts, poly_bound_parts, dominates, AffineBound, BoundInputs, Calibration};
use crate::error::{invalid, Error, Result};
use crate::mdp::{Mdp, QTable};
use crate::problems::ProblemSpec;
use crate::qlearn::error_path;
use crate::rng::SampleStream;
use crate::schedules::{ScheduleSpec, StepsizeSchedule};
use crate::stats::{loglog_fit, mean_stderr};

/// Which iterates are recorded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RecordGrid {
    /// Roughly `per_decade` log-spaced iterates per factor of ten.
    Geometric { per_decade: u32 },
    /// Every `every`-th iterate.
    Stride { every: u64 },
}

impl Default for RecordGrid {
    fn default() -> Self {
        RecordGrid::Geometric { per_decade: 50 }
    }
}

impl RecordGrid {
    /// Recorded iterate indices for a run of `iters` steps. Always contains
    /// iterate 1 and the final iterate `iters + 1`.
    pub fn points(&self, iters: u64) -> Result<Vec<u64>> {
        let last = iters + 1;
        let mut pts = vec![1u64];
        match *self {
            RecordGrid::Geometric { per_decade } => {
                if per_decade == 0 {
                    return Err(invalid("points per decade must be >= 1"));
                }
                let mut j = 1u32;
                loop {
                    let k = 10f64.powf(j as f64 / per_decade as f64).round() as u64;
                    if k >= last {
                        break;
                    }
                    if k > *pts.last().unwrap() {
                        pts.push(k);
                    }
                    j += 1;
                }
            }
            RecordGrid::Stride { every } => {
                if every == 0 {
                    return Err(invalid("record stride must be >= 1"));
                }
                let mut k = 1 + every;
                while k < last {
                    pts.push(k);
                    k += every;
                }
            }
        }
        if *pts.last().unwrap() != last {
            pts.push(last);
        }
        Ok(pts)
    }
}

fn default_epsilons() -> Vec<f64> {
    vec![(-2.0f64).exp()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub schedule: ScheduleSpec,
    pub iters: u64,
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub record: RecordGrid,
    #[serde(default = "default_epsilons")]
    pub epsilon_list: Vec<f64>,
    #[serde(default)]
    pub gamma_grid: Vec<f64>,
}

impl ExperimentConfig {
    pub fn new(problem: ProblemSpec, schedule: ScheduleSpec, iters: u64, trials: usize, base_seed: u64) -> Self {
        Self {
            problem,
            schedule,
            iters,
            trials,
            base_seed,
            record: RecordGrid::default(),
            epsilon_list: default_epsilons(),
            gamma_grid: Vec::new(),
        }
    }

    /// Replication scale for the gamma sweep: `gamma in {0.60, 0.61, ..., 0.90}`,
    /// `10^6` steps, `10^3` trials, 1000 record points per decade.
    pub fn full_scale(schedule: ScheduleSpec, base_seed: u64) -> Self {
        Self {
            problem: ProblemSpec::Hard { gamma: 0.6 },
            schedule,
            iters: 1_000_000,
            trials: 1000,
            base_seed,
            record: RecordGrid::Geometric { per_decade: 1000 },
            epsilon_list: default_epsilons(),
            gamma_grid: (60..=90).map(|i| i as f64 / 100.0).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials must be >= 1"));
        }
        if self.iters == 0 {
            return Err(invalid("iters must be >= 1"));
        }
        if self.epsilon_list.iter().any(|e| !(*e >= 0.0)) {
            return Err(invalid("epsilons must be >= 0"));
        }
        if self.gamma_grid.iter().any(|g| !(*g > 0.0 && *g < 1.0)) {
            return Err(invalid("gamma grid values must lie in (0, 1)"));
        }
        self.record.points(self.iters)?;
        Ok(())
    }
}

/// Mean error across trials at one recorded iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorPoint {
    pub iter: u64,
    pub mean_error: f64,
    pub stderr: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// Schedule after binding defaults to the problem's discount.
    pub schedule: StepsizeSchedule,
    pub points: Vec<ErrorPoint>,
    pub wall_time_secs: f64,
}

impl ExperimentResult {
    /// CSV with columns `iter,mean_error,stderr`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iter,mean_error,stderr")?;
        for p in &self.points {
            writeln!(out, "{},{},{}", p.iter, p.mean_error, p.stderr)?;
        }
        Ok(())
    }

    pub fn iters(&self) -> Vec<u64> {
        self.points.iter().map(|p| p.iter).collect()
    }

    pub fn mean_errors(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean_error).collect()
    }
}

/// Runs `f` on a dedicated pool of `threads` workers (`None` = rayon's
/// default, one per core).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::ThreadPool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Averages the sup-norm error of `trials` independent Q-learning paths
/// from `theta_1 = 0` at the iterates in `grid`. Trial `t` draws from
/// stream `(seed, t)`.
#[allow(clippy::too_many_arguments)]
pub fn average_error_paths(
    mdp: &Mdp,
    theta_star: &QTable,
    schedule: &StepsizeSchedule,
    iters: u64,
    trials: usize,
    seed: u64,
    grid: &[u64],
    threads: Option<usize>,
) -> Result<Vec<ErrorPoint>> {
    if trials == 0 {
        return Err(invalid("trials must be >= 1"));
    }
    let initial = QTable::zeros_like(mdp);
    let paths: Vec<Vec<f64>> = with_threads(threads, || {
        (0..trials as u64)
            .into_par_iter()
            .map(|t| {
                error_path(
                    mdp,
                    schedule,
                    iters,
                    &initial,
                    theta_star,
                    SampleStream::new(seed, t),
                    grid,
                )
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let mut column = vec![0.0; trials];
    Ok(grid
        .iter()
        .enumerate()
        .map(|(i, &iter)| {
            for (c, path) in column.iter_mut().zip(&paths) {
                *c = path[i];
            }
            let (mean_error, stderr) = mean_stderr(&column);
            ErrorPoint {
                iter,
                mean_error,
                stderr,
                trials,
            }
        })
        .collect())
}

/// Runs `cfg.trials` independent Q-learning paths from `theta_1 = 0` and
/// averages their sup-norm errors on the record grid.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentResult> {
    let start = Instant::now();
    cfg.validate()?;
    let mdp = cfg.problem.build()?;
    let star = cfg.problem.qstar(&mdp)?;
    let schedule = cfg.schedule.resolve(mdp.discount())?;
    schedule.stepsize_at(1)?;
    let grid = cfg.record.points(cfg.iters)?;
    let points = average_error_paths(
        &mdp,
        &star,
        &schedule,
        cfg.iters,
        cfg.trials,
        cfg.base_seed,
        &grid,
        threads,
    )?;
    Ok(ExperimentResult {
        config: cfg.clone(),
        schedule,
        points,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// First recorded iterate whose mean error is strictly below `epsilon`;
/// `None` if the path never gets there or `epsilon <= 0`. With a sparse
/// grid this over-estimates `T` by at most one grid gap.
pub fn iteration_complexity_estimate(res: &ExperimentResult, epsilon: f64) -> Option<u64> {
    if !(epsilon > 0.0) {
        return None;
    }
    res.points.iter().find(|p| p.mean_error < epsilon).map(|p| p.iter)
}

/// Log-log least squares with a t-test of `slope = null_slope`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    /// `None` when there are no residual degrees of freedom.
    pub slope_stderr: Option<f64>,
    pub null_slope: f64,
    pub t_stat: Option<f64>,
    pub p_value: Option<f64>,
    pub n: usize,
    pub residual_dof: usize,
}

/// OLS of `ln y` on `ln x`. Two points give an exact line with no
/// standard error or test.
pub fn ols_loglog_fit(xs: &[f64], ys: &[f64], null_slope: f64) -> Result<FitResult> {
    let fit = loglog_fit(xs, ys)?;
    Ok(FitResult {
        slope: fit.slope,
        intercept: fit.intercept,
        slope_stderr: fit.slope_stderr,
        null_slope,
        t_stat: fit.t_stat(null_slope),
        p_value: fit.p_value(null_slope),
        n: fit.n,
        residual_dof: fit.n - 2,
    })
}

/// Least-squares slope of log mean error against log iterate over the
/// recorded points with `lo <= iter <= hi`.
pub fn decay_slope(res: &ExperimentResult, lo: u64, hi: u64) -> Result<FitResult> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = res
        .points
        .iter()
        .filter(|p| p.iter >= lo && p.iter <= hi)
        .map(|p| (p.iter as f64, p.mean_error))
        .unzip();
    ols_loglog_fit(&xs, &ys, 0.0)
}

/// Slope over the final decade `[(iters+1)/10, iters+1]`.
pub fn last_decade_slope(res: &ExperimentResult) -> Result<FitResult> {
    let last = res.config.iters + 1;
    decay_slope(res, last / 10, last)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonFit {
    pub epsilon: f64,
    /// `T(eps, gamma)` per grid value, `None` where the path never crossed.
    pub t: Vec<Option<u64>>,
    /// Grid values left out of the fit because they never crossed.
    pub excluded: Vec<f64>,
    /// Fit of `log T` against `log 1/(1-gamma)`; `None` with fewer than two
    /// usable points.
    pub fit: Option<FitResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub gammas: Vec<f64>,
    pub schedules: Vec<StepsizeSchedule>,
    pub final_mean_error: Vec<f64>,
    pub fits: Vec<EpsilonFit>,
    pub null_slope: f64,
    pub record_grid: RecordGrid,
}

impl SweepResult {
    /// CSV table `gamma,complexity,T_eps=<eps>...`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "gamma,complexity")?;
        for f in &self.fits {
            write!(out, ",T_eps={}", f.epsilon)?;
        }
        writeln!(out)?;
        for (i, g) in self.gammas.iter().enumerate() {
            write!(out, "{},{}", g, 1.0 / (1.0 - g))?;
            for f in &self.fits {
                match f.t[i] {
                    Some(t) => write!(out, ",{t}")?,
                    None => write!(out, ",")?,
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Runs [`run_experiment`] for every discount in `cfg.gamma_grid` (problem
/// and schedule rebound per gamma), estimates `T(eps, gamma)` for each
/// epsilon and fits `log T` against `log 1/(1-gamma)` with null slope 4.
pub fn complexity_sweep(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<SweepResult> {
    cfg.validate()?;
    if cfg.gamma_grid.is_empty() {
        return Err(invalid("gamma grid is empty"));
    }
    if cfg.epsilon_list.is_empty() {
        return Err(invalid("epsilon list is empty"));
    }
    // fail early on bad problem/schedule combinations
    for &g in &cfg.gamma_grid {
        cfg.problem.with_gamma(g).build()?;
        cfg.schedule.resolve(g)?.stepsize_at(1)?;
    }
    let null_slope = 4.0;
    let mut results = Vec::with_capacity(cfg.gamma_grid.len());
    for &g in &cfg.gamma_grid {
        let run_cfg = ExperimentConfig {
            problem: cfg.problem.with_gamma(g),
            gamma_grid: Vec::new(),
            ..cfg.clone()
        };
        results.push(run_experiment(&run_cfg, threads)?);
    }
    let fits = cfg
        .epsilon_list
        .iter()
        .map(|&eps| {
            let t: Vec<Option<u64>> = results.iter().map(|r| iteration_complexity_estimate(r, eps)).collect();
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            let mut excluded = Vec::new();
            for (&g, t) in cfg.gamma_grid.iter().zip(&t) {
                match t {
                    Some(t) => {
                        xs.push(1.0 / (1.0 - g));
                        ys.push(*t as f64);
                    }
                    None => excluded.push(g),
                }
            }
            let fit = if xs.len() >= 2 {
                Some(ols_loglog_fit(&xs, &ys, null_slope)?)
            } else {
                None
            };
            Ok(EpsilonFit {
                epsilon: eps,
                t,
                excluded,
                fit,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        gammas: cfg.gamma_grid.clone(),
        schedules: results.iter().map(|r| r.schedule).collect(),
        final_mean_error: results.iter().map(|r| r.points.last().unwrap().mean_error).collect(),
        fits,
        null_slope,
        record_grid: cfg.record,
    })
}

/// Calibrated bound constant for an averaged error path, and whether the
/// calibrated curve dominates it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundDominance {
    pub calibration: Calibration,
    pub dominates: bool,
    /// Recorded iterates compared (the polynomial bound only applies past
    /// its threshold).
    pub compared: usize,
    pub skipped: usize,
}

/// Calibrates the rescaled-linear bound (shifted-linear schedules) or the
/// polynomial bound (polynomial schedules) against the averaged path of
/// `res`. The error at iterate `j` is compared with the bound at `k = j-1`.
pub fn calibrate_bound(res: &ExperimentResult) -> Result<BoundDominance> {
    let mdp = res.config.problem.build()?;
    let star = res.config.problem.qstar(&mdp)?;
    let base = BoundInputs::from_mdp(&mdp, &star, &QTable::zeros_like(&mdp))?;
    let (inputs, poly) = match res.schedule {
        StepsizeSchedule::ShiftedRescaledLinear { nu } if nu == mdp.discount() => (base, false),
        StepsizeSchedule::Polynomial { omega } => (base.with_omega(omega), true),
        ref s => {
            return Err(invalid(format!(
                "no bound is stated for schedule {s} on this problem"
            )))
        }
    };
    let parts = |k: u64| -> Result<AffineBound> {
        if poly {
            poly_bound_parts(&inputs, k)
        } else {
            rescaled_linear_parts(&inputs, k)
        }
    };
    let mut points = Vec::new();
    let mut skipped = 0;
    for p in &res.points {
        let k = p.iter.saturating_sub(1);
        if k == 0 {
            skipped += 1;
            continue;
        }
        match parts(k) {
            Ok(_) => points.push((k, p.mean_error)),
            Err(Error::BelowThreshold { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    let calibration = calibrate_constant(&points, parts)?;
    Ok(BoundDominance {
        calibration,
        dominates: dominates(&points, calibration.c_star, parts)?,
        compared: points.len(),
        skipped,
    })
}
