//! Numeric verification of the auxiliary stepsize and noise lemmas over a
//! parameter grid.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::bounds::{exp_weighted_sum_sweep, mgf_bound_check, MgfSetup, NoiseLaw};
use crate::error::{Error, Result};
use crate::schedules::{satisfies_step_bound, satisfies_step_inequality, StepsizeSchedule};

/// Parameter grid for [`verify_lemmas`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaGrid {
    /// Horizon of the stepsize sweeps.
    pub step_k_max: u64,
    /// `nu` values for the shifted rescaled linear family.
    pub nus: Vec<f64>,
    /// `omega` values for the polynomial family.
    pub omegas: Vec<f64>,
    pub exp_gammas: Vec<f64>,
    pub exp_omegas: Vec<f64>,
    pub exp_k_max: u64,
    pub exp_c: f64,
    pub mgf_ks: Vec<u64>,
    pub mgf_s: Vec<f64>,
    pub mgf_trials: usize,
    pub seed: u64,
}

impl LemmaGrid {
    /// Full grid: sweeps to `10^5`, `gamma in {0.50, 0.55, ..., 0.95}`,
    /// `omega in {0.55, 0.65, 0.75, 0.85}`, `c = 10`.
    pub fn full() -> Self {
        Self {
            step_k_max: 100_000,
            nus: vec![0.25, 0.5, 0.75, 0.9, 0.99],
            omegas: vec![0.55, 0.65, 0.75, 0.85],
            exp_gammas: (0..10).map(|i| 0.5 + 0.05 * i as f64).collect(),
            exp_omegas: vec![0.55, 0.65, 0.75, 0.85],
            exp_k_max: 100_000,
            exp_c: 10.0,
            mgf_ks: vec![1, 2, 10, 100],
            mgf_s: vec![-0.9, -0.3, 0.2, 0.9],
            mgf_trials: 20_000,
            seed: 0,
        }
    }

    /// Reduced grid for smoke tests.
    pub fn quick() -> Self {
        Self {
            step_k_max: 10_000,
            nus: vec![0.5, 0.9],
            omegas: vec![0.55, 0.85],
            exp_gammas: vec![0.5, 0.75],
            exp_omegas: vec![0.55, 0.75],
            exp_k_max: 10_000,
            exp_c: 10.0,
            mgf_ks: vec![1, 10],
            mgf_s: vec![-0.5, 0.5],
            mgf_trials: 2_000,
            seed: 0,
        }
    }
}

/// Named grids accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridName {
    Default,
    Quick,
}

impl FromStr for GridName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" | "full" => Ok(GridName::Default),
            "quick" => Ok(GridName::Quick),
            _ => Err(Error::Parse {
                what: "lemma grid",
                input: s.to_string(),
                reason: "expected `default` or `quick`".into(),
            }),
        }
    }
}

impl GridName {
    pub fn grid(&self) -> LemmaGrid {
        match self {
            GridName::Default => LemmaGrid::full(),
            GridName::Quick => LemmaGrid::quick(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaItem {
    pub lemma: &'static str,
    pub case: String,
    pub passed: bool,
    /// `false` for checks of statements known to be false as written; their
    /// outcome is reported but does not count toward [`LemmaReport::all_passed`].
    pub expected_to_hold: bool,
    pub detail: String,
}

impl fmt::Display for LemmaItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        let note = if self.expected_to_hold { "" } else { " (stated form, known false)" };
        write!(f, "{tag} {} [{}] {}{note}", self.lemma, self.case, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub items: Vec<LemmaItem>,
}

impl LemmaReport {
    /// Every check expected to hold passed.
    pub fn all_passed(&self) -> bool {
        self.failures().next().is_none()
    }

    /// Failed checks that were expected to hold.
    pub fn failures(&self) -> impl Iterator<Item = &LemmaItem> {
        self.items.iter().filter(|i| i.expected_to_hold && !i.passed)
    }

    pub fn count(&self, lemma: &str) -> usize {
        self.items.iter().filter(|i| i.lemma == lemma).count()
    }
}

pub const STEP_INEQUALITY: &str = "step-inequality";
pub const STEP_BOUND: &str = "step-bound";
pub const EXP_SUM_A: &str = "exp-weighted-sum-A";
/// Inequality (B) exactly as stated; known to fail for large `k`.
pub const EXP_SUM_B_STATED: &str = "exp-weighted-sum-B-stated";
/// Inequality (B) with the `k^{-w}` rate.
pub const EXP_SUM_B_RATE: &str = "exp-weighted-sum-B-rate";
pub const MGF: &str = "noise-mgf";

/// Runs every check on the grid. Errors only on invalid grid parameters;
/// failed checks are reported, not raised.
pub fn verify_lemmas(grid: &LemmaGrid) -> Result<LemmaReport> {
    let mut items = Vec::new();
    let mut schedules = Vec::new();
    for &nu in &grid.nus {
        schedules.push(StepsizeSchedule::shifted_linear(nu)?);
    }
    for &w in &grid.omegas {
        schedules.push(StepsizeSchedule::polynomial(w)?);
    }

    for s in &schedules {
        let out = satisfies_step_inequality(s, grid.step_k_max)?;
        items.push(LemmaItem {
            lemma: STEP_INEQUALITY,
            case: s.to_string(),
            passed: out.holds,
            expected_to_hold: true,
            detail: format!("checked k <= {} first_violation={:?}", out.checked_through, out.first_violation),
        });
    }
    for &nu in &grid.nus {
        let s = StepsizeSchedule::shifted_linear(nu)?;
        let out = satisfies_step_bound(&s, nu, grid.step_k_max)?;
        items.push(LemmaItem {
            lemma: STEP_BOUND,
            case: s.to_string(),
            passed: out.holds,
            expected_to_hold: true,
            detail: format!("checked k <= {} first_violation={:?}", out.checked_through, out.first_violation),
        });
    }

    for &g in &grid.exp_gammas {
        for &w in &grid.exp_omegas {
            let sweep = exp_weighted_sum_sweep(g, w, grid.exp_k_max, grid.exp_c)?;
            if sweep.checked == 0 {
                continue;
            }
            let case = format!("gamma={g:.2},omega={w}");
            for (lemma, summary, expected) in [
                (EXP_SUM_A, sweep.a, true),
                (EXP_SUM_B_STATED, sweep.b, false),
                (EXP_SUM_B_RATE, sweep.b_rate, true),
            ] {
                items.push(LemmaItem {
                    lemma,
                    case: case.clone(),
                    passed: summary.holds(),
                    expected_to_hold: expected,
                    detail: format!(
                        "k in [{}, {}] worst lhs/rhs={:.4} at k={} c={}",
                        sweep.threshold, grid.exp_k_max, summary.worst_ratio, summary.worst_k, grid.exp_c
                    ),
                });
            }
        }
    }

    let laws = [(NoiseLaw::Rademacher, 1.0), (NoiseLaw::Uniform, 1.0 / 3f64.sqrt())];
    let mut case_seed = grid.seed;
    for s in &schedules {
        for &(law, sigma) in &laws {
            for &k in &grid.mgf_ks {
                for &sv in &grid.mgf_s {
                    let setup = MgfSetup {
                        law,
                        noise_bound: 1.0,
                        sigma,
                        trials: grid.mgf_trials,
                        seed: case_seed,
                    };
                    case_seed += 1;
                    let r = mgf_bound_check(s, &setup, sv, k)?;
                    items.push(LemmaItem {
                        lemma: MGF,
                        case: format!("{s},{law:?},k={k},s={sv}"),
                        passed: r.holds,
                        expected_to_hold: true,
                        detail: format!(
                            "log mgf={:.6} bound={:.6} se={:.2e}",
                            r.mc_log_mgf, r.bound, r.mc_stderr
                        ),
                    });
                }
            }
        }
    }
    Ok(LemmaReport { items })
}
