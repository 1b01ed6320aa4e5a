//! `cone-sa`: solve benchmark MDPs, run Q-learning with sandwich checking,
//! tabulate bounds, run the discount sweep and verify the auxiliary lemmas.
//!
//! Exit codes: 0 success, 1 invalid input, 2 a checked invariant failed.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use cone_sa::bounds::{rescaled_linear_parts, poly_bound_parts, iter_complexity, AffineBound, BoundInputs, ComplexityKind};
use cone_sa::experiments::{complexity_sweep, run_experiment, ExperimentConfig, RecordGrid};
use cone_sa::lemmas::{verify_lemmas, GridName};
use cone_sa::mdp::{noise_std, span_seminorm};
use cone_sa::{q_learning_run, ProblemSpec, QTable, QlearnConfig, ScheduleSpec, StepsizeSchedule};

#[derive(Debug, Parser)]
#[command(name = "cone-sa", version, about = "Stochastic approximation with cone-monotone operators and Q-learning")]
struct Cli {
    /// Worker threads for trial-level parallelism (default: one per core).
    #[arg(long, global = true, env = "CONE_SA_THREADS")]
    threads: Option<usize>,

    /// JSON file with settings keyed by long flag name. A setting given both
    /// here and as a flag is an error.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a problem and print theta*, its span and the largest noise std.
    Solve(SolveArgs),
    /// Run Q-learning; one trial writes the full trace, more write the
    /// averaged error path.
    Qlearn(QlearnArgs),
    /// Run Q-learning and check the sandwich relation at every iterate.
    Sandwich(SandwichArgs),
    /// Tabulate the error bound over an iterate grid, or the complexity
    /// expressions with `--table complexity`.
    Bounds(BoundsArgs),
    /// Run the discount sweep and fit log T against log 1/(1-gamma).
    Complexity(ComplexityArgs),
    /// Run the numeric lemma checks and print one line per check.
    VerifyLemmas(LemmaArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct SolveArgs {
    /// e.g. `hard:gamma=0.75`, `nonsharp:gamma=0.9`,
    /// `random:n=20,m=4,rmax=1,gamma=0.9,seed=7`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    problem: Option<ProblemSpec>,
    /// Also write a JSON summary here.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct QlearnArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    problem: Option<ProblemSpec>,
    /// e.g. `shifted-linear`, `shifted-linear:nu=0.25`, `poly:omega=0.75`,
    /// `linear`, `const:0.1`. A missing `nu` binds to the discount.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    schedule: Option<ScheduleSpec>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    iters: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    trials: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Record points per decade for multi-trial runs.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    per_decade: Option<u32>,
    /// CSV output (default: stdout).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct SandwichArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    problem: Option<ProblemSpec>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    schedule: Option<ScheduleSpec>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    iters: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    trials: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// CSV output: the trace for one trial, a per-trial summary otherwise.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum BoundsTable {
    /// Bound value per iterate.
    Curve,
    /// Iteration-complexity expressions per epsilon.
    Complexity,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct BoundsArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    problem: Option<ProblemSpec>,
    /// `shifted-linear` (with nu = gamma) or `poly:omega=...`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    schedule: Option<ScheduleSpec>,
    /// Largest iterate index of the curve.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    iters: Option<u64>,
    /// Value used for the unknown universal constant.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    per_decade: Option<u32>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    table: Option<BoundsTable>,
    /// Target accuracies for the complexity table (comma separated).
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<Vec<f64>>,
    /// Polynomial exponent for the complexity table when the schedule does
    /// not fix one.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    omega: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct ComplexityArgs {
    /// Problem family; its discount is replaced by each grid value.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    problem: Option<ProblemSpec>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    schedule: Option<ScheduleSpec>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    iters: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    trials: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Discount grid (comma separated).
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    gammas: Option<Vec<f64>>,
    /// Target accuracies (comma separated).
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    per_decade: Option<u32>,
    /// Replication scale: gamma in 0.60..0.90 step 0.01, 10^6 steps,
    /// 10^3 trials.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    full_scale: bool,
    /// CSV table output (default: stdout).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// JSON summary with the config, T table and fits.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Grid {
    #[value(alias = "full")]
    Default,
    Quick,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct LemmaArgs {
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<Grid>,
    /// Base seed of the Monte-Carlo checks.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug)]
enum CliError {
    /// Output closed early by the reader, e.g. `| head`.
    BrokenPipe,
    Invalid(String),
    Invariant(String),
}

impl From<cone_sa::Error> for CliError {
    fn from(e: cone_sa::Error) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::BrokenPipe {
            return CliError::BrokenPipe;
        }
        CliError::Invalid(format!("i/o: {e}"))
    }
}

type CliResult<T> = Result<T, CliError>;

fn invalid<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Invalid(msg.into()))
}

/// Combines flags with the config file. Keys set in both are rejected.
fn merge<T: Serialize + DeserializeOwned>(flags: &T, file: Option<&Map<String, Value>>) -> CliResult<T> {
    let Some(file) = file else {
        return Ok(serde_json::from_value(serde_json::to_value(flags).unwrap()).unwrap());
    };
    let Value::Object(mut merged) = serde_json::to_value(flags).unwrap() else {
        unreachable!("argument structs serialize to objects")
    };
    let mut both: Vec<&str> = file.keys().filter(|k| merged.contains_key(*k)).map(|k| k.as_str()).collect();
    if !both.is_empty() {
        both.sort_unstable();
        return invalid(format!("set both as flag and in the config file: {}", both.join(", ")));
    }
    merged.extend(file.clone());
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Invalid(format!("config file: {e}")))
}

fn load_config(path: &Path) -> CliResult<Map<String, Value>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => invalid(format!("{}: expected a JSON object", path.display())),
        Err(e) => invalid(format!("{}: {e}", path.display())),
    }
}

fn required<T>(value: Option<T>, name: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::Invalid(format!("--{name} is required")))
}

fn print_resolved(command: &str, resolved: &impl Serialize, threads: Option<usize>) {
    let mut value = serde_json::to_value(resolved).unwrap();
    if let Value::Object(map) = &mut value {
        map.insert("command".into(), Value::from(command));
        map.insert("threads".into(), threads.map_or(Value::from("auto"), Value::from));
    }
    eprintln!("config: {value}");
}

fn open_out(out: &Option<PathBuf>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn check_threads(threads: Option<usize>) -> CliResult<()> {
    if threads == Some(0) {
        return invalid("--threads must be >= 1");
    }
    Ok(())
}

fn solve(args: SolveArgs, threads: Option<usize>) -> CliResult<()> {
    let problem = required(args.problem, "problem")?;
    print_resolved("solve", &args, threads);
    let mdp = problem.build()?;
    let star = problem.qstar(&mdp)?;
    let sigma = noise_std(&mdp, &star)?;
    let span = span_seminorm(&star);
    let mut out = io::stdout().lock();
    writeln!(out, "problem={problem}")?;
    writeln!(out, "span={span}")?;
    writeln!(out, "sigma_max={}", sigma.max)?;
    writeln!(out, "state,action,q_star,sigma")?;
    for s in 0..star.num_states() {
        for a in 0..star.num_actions() {
            writeln!(out, "{s},{a},{},{}", star.get(s, a), sigma.table.get(s, a))?;
        }
    }
    if let Some(path) = &args.out {
        #[derive(Serialize)]
        struct Summary<'a> {
            problem: String,
            span: f64,
            sigma_max: f64,
            q_star: &'a [f64],
            num_states: usize,
            num_actions: usize,
        }
        let summary = Summary {
            problem: problem.to_string(),
            span,
            sigma_max: sigma.max,
            q_star: star.as_slice(),
            num_states: star.num_states(),
            num_actions: star.num_actions(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&summary).unwrap() + "\n")?;
    }
    Ok(())
}

fn schedule_for(spec: &ScheduleSpec, problem: &ProblemSpec) -> CliResult<StepsizeSchedule> {
    let s = spec.resolve(problem.gamma())?;
    s.stepsize_at(1)?;
    Ok(s)
}

fn qlearn(mut args: QlearnArgs, threads: Option<usize>) -> CliResult<()> {
    let problem = required(args.problem, "problem")?;
    let spec = required(args.schedule, "schedule")?;
    let iters = *args.iters.get_or_insert(10_000);
    let trials = *args.trials.get_or_insert(1);
    let seed = *args.seed.get_or_insert(0);
    if trials == 0 {
        return invalid("--trials must be >= 1");
    }
    if trials == 1 && args.per_decade.is_some() {
        return invalid("--per-decade only applies to multi-trial runs");
    }
    print_resolved("qlearn", &args, threads);
    let mdp = problem.build()?;
    let star = problem.qstar(&mdp)?;
    let schedule = schedule_for(&spec, &problem)?;
    let mut out = open_out(&args.out)?;
    if trials == 1 {
        let cfg = QlearnConfig::new(mdp, schedule, iters, seed);
        let trace = q_learning_run(&cfg, &star, false)?;
        trace.write_csv(&mut out)?;
    } else {
        let mut cfg = ExperimentConfig::new(problem, spec, iters, trials, seed);
        if let Some(per_decade) = args.per_decade {
            cfg.record = RecordGrid::Geometric { per_decade };
        }
        run_experiment(&cfg, threads)?.write_csv(&mut out)?;
    }
    out.flush()?;
    Ok(())
}

fn sandwich(mut args: SandwichArgs, threads: Option<usize>) -> CliResult<()> {
    let problem = required(args.problem, "problem")?;
    let spec = required(args.schedule, "schedule")?;
    let iters = *args.iters.get_or_insert(10_000);
    let trials = *args.trials.get_or_insert(1);
    let seed = *args.seed.get_or_insert(0);
    if trials == 0 {
        return invalid("--trials must be >= 1");
    }
    print_resolved("sandwich", &args, threads);
    let mdp = problem.build()?;
    let star = problem.qstar(&mdp)?;
    let schedule = schedule_for(&spec, &problem)?;

    let mut summaries = Vec::with_capacity(trials);
    let mut single = None;
    for trial in 0..trials as u64 {
        let mut cfg = QlearnConfig::new(mdp.clone(), schedule, iters, seed);
        cfg.trial = trial;
        let trace = q_learning_run(&cfg, &star, true)?;
        let min_slack = trace.records.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
        let final_error = trace.records.last().map_or(f64::NAN, |r| r.error);
        summaries.push((trial, trace.violations, trace.first_violation(), min_slack, final_error));
        if trials == 1 {
            single = Some(trace);
        }
    }
    if let Some(path) = &args.out {
        let mut out = BufWriter::new(File::create(path)?);
        match &single {
            Some(trace) => trace.write_csv(&mut out)?,
            None => {
                writeln!(out, "trial,violations,first_violation,min_slack,final_error")?;
                for (t, v, first, slack, err) in &summaries {
                    let first = first.map_or(String::new(), |k| k.to_string());
                    writeln!(out, "{t},{v},{first},{slack},{err}")?;
                }
            }
        }
        out.flush()?;
    }
    let violations: usize = summaries.iter().map(|s| s.1).sum();
    let min_slack = summaries.iter().map(|s| s.3).fold(f64::INFINITY, f64::min);
    println!(
        "runs={trials} iters={iters} schedule={schedule} violations={violations} min_slack={min_slack:e}"
    );
    if violations > 0 {
        let (t, _, first, _, _) = summaries.iter().find(|s| s.1 > 0).unwrap();
        return Err(CliError::Invariant(format!(
            "sandwich relation violated {violations} times; first in trial {t} at iterate {}",
            first.unwrap()
        )));
    }
    Ok(())
}

fn bound_grid(iters: u64, per_decade: u32) -> CliResult<Vec<u64>> {
    let mut ks: Vec<u64> = RecordGrid::Geometric { per_decade }
        .points(iters)?
        .into_iter()
        .filter(|&k| k <= iters)
        .collect();
    if ks.last() != Some(&iters) {
        ks.push(iters);
    }
    Ok(ks)
}

fn bounds(mut args: BoundsArgs, threads: Option<usize>) -> CliResult<()> {
    let problem = required(args.problem, "problem")?;
    let table = *args.table.get_or_insert(BoundsTable::Curve);
    let c = *args.c.get_or_insert(1.0);
    let mdp = problem.build()?;
    let star = problem.qstar(&mdp)?;
    let inputs = BoundInputs::from_mdp(&mdp, &star, &QTable::zeros_like(&mdp))?.with_c(c);
    let schedule = args.schedule.map(|s| schedule_for(&s, &problem)).transpose()?;

    match table {
        BoundsTable::Curve => {
            let schedule = required(schedule, "schedule")?;
            if args.epsilon.is_some() || args.omega.is_some() {
                return invalid("--epsilon and --omega only apply to --table complexity");
            }
            let iters = *args.iters.get_or_insert(100_000);
            let per_decade = *args.per_decade.get_or_insert(20);
            if iters == 0 {
                return invalid("--iters must be >= 1");
            }
            print_resolved("bounds", &args, threads);
            let (inputs, poly) = match schedule {
                StepsizeSchedule::ShiftedRescaledLinear { nu } if nu == inputs.gamma => (inputs, false),
                StepsizeSchedule::Polynomial { omega } => (inputs.with_omega(omega), true),
                s => return invalid(format!("no bound is stated for schedule {s} on this problem")),
            };
            let mut out = open_out(&args.out)?;
            writeln!(out, "k,bound,fixed,per_c")?;
            for k in bound_grid(iters, per_decade)? {
                let parts: CliResult<AffineBound> = if poly {
                    match poly_bound_parts(&inputs, k) {
                        Err(cone_sa::Error::BelowThreshold { .. }) => continue,
                        other => other.map_err(Into::into),
                    }
                } else {
                    rescaled_linear_parts(&inputs, k).map_err(Into::into)
                };
                let p = parts?;
                writeln!(out, "{k},{},{},{}", p.at(c), p.fixed, p.per_c)?;
            }
            out.flush()?;
        }
        BoundsTable::Complexity => {
            if args.iters.is_some() || args.per_decade.is_some() {
                return invalid("--iters and --per-decade only apply to --table curve");
            }
            let from_schedule = match schedule {
                Some(StepsizeSchedule::Polynomial { omega }) => Some(omega),
                _ => None,
            };
            let omega = match (args.omega, from_schedule) {
                (Some(a), Some(b)) if a != b => {
                    return invalid(format!("--omega {a} disagrees with the schedule's omega {b}"))
                }
                (a, b) => a.or(b).unwrap_or(0.75),
            };
            args.omega = Some(omega);
            let eps = args.epsilon.get_or_insert_with(|| vec![(-2.0f64).exp()]).clone();
            print_resolved("bounds", &args, threads);
            let inputs = inputs.with_omega(omega);
            let rmax = mdp.reward_bound();
            let mut out = open_out(&args.out)?;
            writeln!(out, "kind,epsilon,iterations")?;
            for e in eps {
                for kind in ComplexityKind::ALL {
                    let v = iter_complexity(kind, &inputs, e, rmax)?;
                    writeln!(out, "{},{e},{v}", kind.name())?;
                }
            }
            out.flush()?;
        }
    }
    Ok(())
}

fn complexity(mut args: ComplexityArgs, threads: Option<usize>) -> CliResult<()> {
    let spec = required(args.schedule, "schedule")?;
    let mut cfg = if args.full_scale {
        let overlap: Vec<&str> = [
            ("iters", args.iters.is_some()),
            ("trials", args.trials.is_some()),
            ("gammas", args.gammas.is_some()),
            ("per-decade", args.per_decade.is_some()),
        ]
        .iter()
        .filter(|(_, set)| *set)
        .map(|(n, _)| *n)
        .collect();
        if !overlap.is_empty() {
            return invalid(format!("--full-scale fixes {}", overlap.join(", ")));
        }
        let mut cfg = ExperimentConfig::full_scale(spec, args.seed.unwrap_or(0));
        if let Some(p) = args.problem {
            cfg.problem = p;
        }
        cfg
    } else {
        let problem = args.problem.unwrap_or(ProblemSpec::Hard { gamma: 0.6 });
        let mut cfg = ExperimentConfig::new(
            problem,
            spec,
            args.iters.unwrap_or(200_000),
            args.trials.unwrap_or(200),
            args.seed.unwrap_or(0),
        );
        cfg.gamma_grid = args.gammas.clone().unwrap_or_else(|| vec![0.6, 0.7, 0.8]);
        if let Some(per_decade) = args.per_decade {
            cfg.record = RecordGrid::Geometric { per_decade };
        }
        cfg
    };
    if let Some(eps) = &args.epsilon {
        cfg.epsilon_list = eps.clone();
    }
    args.problem = Some(cfg.problem);
    args.iters = Some(cfg.iters);
    args.trials = Some(cfg.trials);
    args.seed = Some(cfg.base_seed);
    args.gammas = Some(cfg.gamma_grid.clone());
    args.epsilon = Some(cfg.epsilon_list.clone());
    if let RecordGrid::Geometric { per_decade } = cfg.record {
        args.per_decade = Some(per_decade);
    }
    print_resolved("complexity", &args, threads);

    let sweep = complexity_sweep(&cfg, threads)?;
    let mut out = open_out(&args.out)?;
    sweep.write_csv(&mut out)?;
    out.flush()?;
    drop(out);
    for f in &sweep.fits {
        match &f.fit {
            Some(fit) => eprintln!(
                "eps={}: slope={} stderr={} t={} p={} n={} excluded={:?}",
                f.epsilon,
                fit.slope,
                fmt_opt(fit.slope_stderr),
                fmt_opt(fit.t_stat),
                fmt_opt(fit.p_value),
                fit.n,
                f.excluded
            ),
            None => eprintln!("eps={}: too few crossings to fit, excluded={:?}", f.epsilon, f.excluded),
        }
    }
    if let Some(path) = &args.summary {
        #[derive(Serialize)]
        struct Summary<'a> {
            config: &'a ExperimentConfig,
            sweep: &'a cone_sa::experiments::SweepResult,
        }
        let text = serde_json::to_string_pretty(&Summary {
            config: &cfg,
            sweep: &sweep,
        })
        .unwrap();
        std::fs::write(path, text + "\n")?;
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("NA".into(), |x| x.to_string())
}

fn verify(mut args: LemmaArgs, threads: Option<usize>) -> CliResult<()> {
    let grid_name = match *args.grid.get_or_insert(Grid::Default) {
        Grid::Default => GridName::Default,
        Grid::Quick => GridName::Quick,
    };
    let mut grid = grid_name.grid();
    grid.seed = *args.seed.get_or_insert(grid.seed);
    print_resolved("verify-lemmas", &args, threads);
    let report = cone_sa::experiments::with_threads(threads, || verify_lemmas(&grid))??;
    let mut out = open_out(&args.out)?;
    for item in &report.items {
        writeln!(out, "{item}")?;
    }
    let failed = report.failures().count();
    let expected = report.items.iter().filter(|i| i.expected_to_hold).count();
    writeln!(
        out,
        "{} of {expected} checks passed; {} informational",
        expected - failed,
        report.items.len() - expected
    )?;
    out.flush()?;
    if failed > 0 {
        return Err(CliError::Invariant(format!("{failed} lemma checks failed")));
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    check_threads(cli.threads)?;
    let file = cli.config.as_deref().map(load_config).transpose()?;
    let file = file.as_ref();
    let threads = cli.threads;
    match cli.command {
        Command::Solve(a) => solve(merge(&a, file)?, threads),
        Command::Qlearn(a) => qlearn(merge(&a, file)?, threads),
        Command::Sandwich(a) => sandwich(merge(&a, file)?, threads),
        Command::Bounds(a) => bounds(merge(&a, file)?, threads),
        Command::Complexity(a) => complexity(merge(&a, file)?, threads),
        Command::VerifyLemmas(a) => verify(merge(&a, file)?, threads),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) | Err(CliError::BrokenPipe) => ExitCode::SUCCESS,
        Err(CliError::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Invariant(msg)) => {
            eprintln!("invariant violated: {msg}");
            ExitCode::from(2)
        }
    }
}
