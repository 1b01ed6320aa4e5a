//! Stepsize schedules and their admissibility checks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::parse::{parse_kv, parse_num};

/// Relative slack used by the admissibility sweeps. Shifted rescaled linear
/// steps meet the step bound with equality, so rounding must not count as
/// a violation.
const SWEEP_SLACK: f64 = 1e-12;

/// A closed-form stepsize rule `k -> alpha_k`, `k >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StepsizeSchedule {
    /// `1 / ((1 - nu) k)`, defined from `k >= 1 / (1 - nu)`. With `clamp`,
    /// earlier iterations use `alpha = 1` instead of failing.
    RescaledLinear { nu: f64, clamp: bool },
    /// `1 / (1 + (1 - nu) k)`.
    ShiftedRescaledLinear { nu: f64 },
    /// `k^{-omega}`.
    Polynomial { omega: f64 },
    /// `1 / k`.
    UnrescaledLinear,
    /// A fixed `alpha`.
    Constant { alpha: f64 },
}

fn check_unit_open(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {x} must lie in (0, 1)")))
    }
}

impl StepsizeSchedule {
    pub fn rescaled_linear(nu: f64) -> Result<Self> {
        check_unit_open("nu", nu)?;
        Ok(Self::RescaledLinear { nu, clamp: false })
    }

    pub fn shifted_linear(nu: f64) -> Result<Self> {
        check_unit_open("nu", nu)?;
        Ok(Self::ShiftedRescaledLinear { nu })
    }

    pub fn polynomial(omega: f64) -> Result<Self> {
        check_unit_open("omega", omega)?;
        Ok(Self::Polynomial { omega })
    }

    pub fn constant(alpha: f64) -> Result<Self> {
        check_unit_open("alpha", alpha)?;
        Ok(Self::Constant { alpha })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::RescaledLinear { nu, .. } | Self::ShiftedRescaledLinear { nu } => {
                check_unit_open("nu", nu)
            }
            Self::Polynomial { omega } => check_unit_open("omega", omega),
            Self::Constant { alpha } => check_unit_open("alpha", alpha),
            Self::UnrescaledLinear => Ok(()),
        }
    }

    /// First iteration at which the closed form is a valid stepsize.
    pub fn first_valid(&self) -> u64 {
        match *self {
            Self::RescaledLinear { nu, clamp: false } => (1.0 / (1.0 - nu)).ceil() as u64,
            _ => 1,
        }
    }

    pub fn stepsize_at(&self, k: u64) -> Result<f64> {
        if k == 0 {
            return Err(invalid("iterations are numbered from 1"));
        }
        let kf = k as f64;
        let alpha = match *self {
            Self::RescaledLinear { nu, clamp } => {
                let threshold = (1.0 / (1.0 - nu)).ceil() as u64;
                if k < threshold {
                    if clamp {
                        return Ok(1.0);
                    }
                    return Err(Error::BelowThreshold { k, threshold });
                }
                (1.0 / ((1.0 - nu) * kf)).min(1.0)
            }
            Self::ShiftedRescaledLinear { nu } => 1.0 / (1.0 + (1.0 - nu) * kf),
            Self::Polynomial { omega } => kf.powf(-omega),
            Self::UnrescaledLinear => 1.0 / kf,
            Self::Constant { alpha } => alpha,
        };
        Ok(alpha)
    }
}

/// Outcome of a finite-horizon admissibility sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SweepOutcome {
    pub holds: bool,
    pub first_violation: Option<u64>,
    pub checked_through: u64,
}

fn sweep(s: &StepsizeSchedule, k_max: u64, ok: impl Fn(f64, f64) -> bool) -> Result<SweepOutcome> {
    let start = s.first_valid() + 1;
    let mut prev = s.stepsize_at(start - 1)?;
    for k in start..=k_max {
        let cur = s.stepsize_at(k)?;
        if !ok(prev, cur) {
            return Ok(SweepOutcome {
                holds: false,
                first_violation: Some(k),
                checked_through: k,
            });
        }
        prev = cur;
    }
    Ok(SweepOutcome {
        holds: true,
        first_violation: None,
        checked_through: k_max,
    })
}

/// Checks `1 - (1 - nu) alpha_k <= alpha_k / alpha_{k-1}` for
/// `k = 2..=k_max` (from the schedule's first valid iterate).
pub fn satisfies_step_bound(s: &StepsizeSchedule, nu: f64, k_max: u64) -> Result<SweepOutcome> {
    check_unit_open("nu", nu)?;
    sweep(s, k_max, |prev, cur| {
        let lhs = 1.0 - (1.0 - nu) * cur;
        let rhs = cur / prev;
        lhs <= rhs * (1.0 + SWEEP_SLACK)
    })
}

/// Checks `(1 - alpha_k) alpha_{k-1} <= alpha_k` for `k = 2..=k_max`.
pub fn satisfies_step_inequality(s: &StepsizeSchedule, k_max: u64) -> Result<SweepOutcome> {
    sweep(s, k_max, |prev, cur| (1.0 - cur) * prev <= cur * (1.0 + SWEEP_SLACK))
}

/// `prod_{i=t0}^{t1} (1 - (1 - nu) / i^omega)`, evaluated as a sum of logs.
pub fn poly_contraction_product(nu: f64, omega: f64, t0: u64, t1: u64) -> f64 {
    (t0..=t1)
        .map(|i| (-(1.0 - nu) * (i as f64).powf(-omega)).ln_1p())
        .sum::<f64>()
        .exp()
}

/// Upper bound `exp(-(1 - nu)/(1 - omega) (t1^{1-omega} - t0^{1-omega}))`
/// on [`poly_contraction_product`].
pub fn poly_contraction_product_bound(nu: f64, omega: f64, t0: u64, t1: u64) -> f64 {
    let q = 1.0 - omega;
    (-(1.0 - nu) / q * ((t1 as f64).powf(q) - (t0 as f64).powf(q))).exp()
}

/// `prod_{i=1}^{k} (1 - (1 - gamma)/i)`: the initialization decay under the
/// unrescaled `1/k` step.
pub fn unrescaled_linear_decay(gamma: f64, k: u64) -> f64 {
    (1..=k)
        .map(|i| (-(1.0 - gamma) / i as f64).ln_1p())
        .sum::<f64>()
        .exp()
}

impl fmt::Display for StepsizeSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::RescaledLinear { nu, clamp: false } => write!(f, "rescaled-linear:nu={nu}"),
            Self::RescaledLinear { nu, clamp: true } => {
                write!(f, "rescaled-linear:nu={nu},clamp=true")
            }
            Self::ShiftedRescaledLinear { nu } => write!(f, "shifted-linear:nu={nu}"),
            Self::Polynomial { omega } => write!(f, "poly:omega={omega}"),
            Self::UnrescaledLinear => write!(f, "linear"),
            Self::Constant { alpha } => write!(f, "const:{alpha}"),
        }
    }
}

impl FromStr for StepsizeSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScheduleSpec::from_str(s)?.resolve_strict()
    }
}

impl TryFrom<String> for StepsizeSchedule {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StepsizeSchedule> for String {
    fn from(s: StepsizeSchedule) -> Self {
        s.to_string()
    }
}

/// A schedule as written on the command line. The rescaled families may
/// leave `nu` out, in which case it is bound to the problem's discount.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ScheduleSpec {
    RescaledLinear { nu: Option<f64>, clamp: bool },
    ShiftedLinear { nu: Option<f64> },
    Poly { omega: f64 },
    Linear,
    Const { alpha: f64 },
}

impl ScheduleSpec {
    /// Binds a missing `nu` to `gamma`.
    pub fn resolve(&self, gamma: f64) -> Result<StepsizeSchedule> {
        let sched = match *self {
            Self::RescaledLinear { nu, clamp } => StepsizeSchedule::RescaledLinear {
                nu: nu.unwrap_or(gamma),
                clamp,
            },
            Self::ShiftedLinear { nu } => StepsizeSchedule::ShiftedRescaledLinear {
                nu: nu.unwrap_or(gamma),
            },
            Self::Poly { omega } => StepsizeSchedule::Polynomial { omega },
            Self::Linear => StepsizeSchedule::UnrescaledLinear,
            Self::Const { alpha } => StepsizeSchedule::Constant { alpha },
        };
        sched.validate()?;
        Ok(sched)
    }

    fn resolve_strict(&self) -> Result<StepsizeSchedule> {
        match self {
            Self::RescaledLinear { nu: None, .. } | Self::ShiftedLinear { nu: None } => {
                Err(invalid(format!("schedule `{self}` needs an explicit nu")))
            }
            _ => self.resolve(0.5),
        }
    }
}

impl From<StepsizeSchedule> for ScheduleSpec {
    fn from(s: StepsizeSchedule) -> Self {
        match s {
            StepsizeSchedule::RescaledLinear { nu, clamp } => Self::RescaledLinear {
                nu: Some(nu),
                clamp,
            },
            StepsizeSchedule::ShiftedRescaledLinear { nu } => Self::ShiftedLinear { nu: Some(nu) },
            StepsizeSchedule::Polynomial { omega } => Self::Poly { omega },
            StepsizeSchedule::UnrescaledLinear => Self::Linear,
            StepsizeSchedule::Constant { alpha } => Self::Const { alpha },
        }
    }
}

impl fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::RescaledLinear { nu, clamp } => {
                write!(f, "rescaled-linear")?;
                let mut sep = ':';
                if let Some(nu) = nu {
                    write!(f, "{sep}nu={nu}")?;
                    sep = ',';
                }
                if *clamp {
                    write!(f, "{sep}clamp=true")?;
                }
                Ok(())
            }
            Self::ShiftedLinear { nu: Some(nu) } => write!(f, "shifted-linear:nu={nu}"),
            Self::ShiftedLinear { nu: None } => write!(f, "shifted-linear"),
            Self::Poly { omega } => write!(f, "poly:omega={omega}"),
            Self::Linear => write!(f, "linear"),
            Self::Const { alpha } => write!(f, "const:{alpha}"),
        }
    }
}

impl FromStr for ScheduleSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        const WHAT: &str = "schedule";
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let fail = |reason: String| Error::Parse {
            what: WHAT,
            input: s.to_string(),
            reason,
        };
        if name.trim() == "const" {
            let alpha = parse_num(WHAT, s, args.trim_start_matches("alpha=").trim())?;
            return Ok(Self::Const { alpha });
        }
        let kv = parse_kv(WHAT, s, args)?;
        let allow = |keys: &[&str]| -> Result<()> {
            match kv.keys().find(|k| !keys.contains(k)) {
                Some(k) => Err(fail(format!("unknown key `{k}`"))),
                None => Ok(()),
            }
        };
        let nu = kv.get("nu").map(|v| parse_num::<f64>(WHAT, s, v)).transpose()?;
        match name.trim() {
            "shifted-linear" => {
                allow(&["nu"])?;
                Ok(Self::ShiftedLinear { nu })
            }
            "rescaled-linear" => {
                allow(&["nu", "clamp"])?;
                let clamp = kv
                    .get("clamp")
                    .map(|v| parse_num::<bool>(WHAT, s, v))
                    .transpose()?
                    .unwrap_or(false);
                Ok(Self::RescaledLinear { nu, clamp })
            }
            "poly" => {
                allow(&["omega"])?;
                let omega = kv
                    .get("omega")
                    .ok_or_else(|| fail("missing `omega`".into()))?;
                Ok(Self::Poly {
                    omega: parse_num(WHAT, s, omega)?,
                })
            }
            "linear" => {
                allow(&[])?;
                Ok(Self::Linear)
            }
            other => Err(fail(format!("unknown schedule `{other}`"))),
        }
    }
}

impl TryFrom<String> for ScheduleSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ScheduleSpec> for String {
    fn from(s: ScheduleSpec) -> Self {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stepsize_examples() {
        let s = StepsizeSchedule::shifted_linear(0.5).unwrap();
        assert!((s.stepsize_at(1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let p = StepsizeSchedule::polynomial(0.75).unwrap();
        assert!((p.stepsize_at(16).unwrap() - 0.125).abs() < 1e-15);
        assert_eq!(StepsizeSchedule::UnrescaledLinear.stepsize_at(4).unwrap(), 0.25);
        assert_eq!(StepsizeSchedule::constant(0.1).unwrap().stepsize_at(9).unwrap(), 0.1);
        assert!(s.stepsize_at(0).is_err());
    }

    #[test]
    fn rescaled_linear_threshold() {
        let s = StepsizeSchedule::rescaled_linear(0.75).unwrap();
        assert_eq!(s.first_valid(), 4);
        assert!(matches!(
            s.stepsize_at(3),
            Err(Error::BelowThreshold { k: 3, threshold: 4 })
        ));
        assert_eq!(s.stepsize_at(4).unwrap(), 1.0);
        assert_eq!(s.stepsize_at(8).unwrap(), 0.5);
        let clamped = StepsizeSchedule::RescaledLinear { nu: 0.75, clamp: true };
        assert_eq!(clamped.stepsize_at(1).unwrap(), 1.0);
        assert_eq!(clamped.first_valid(), 1);
    }

    #[test]
    fn parameters_are_validated() {
        assert!(StepsizeSchedule::shifted_linear(1.0).is_err());
        assert!(StepsizeSchedule::polynomial(0.0).is_err());
        assert!(StepsizeSchedule::constant(1.5).is_err());
        assert!("poly:omega=1.2".parse::<StepsizeSchedule>().is_err());
    }

    #[test]
    fn step_bound_examples() {
        for nu in [0.1, 0.5, 0.75, 0.9, 0.99] {
            let s = StepsizeSchedule::shifted_linear(nu).unwrap();
            assert!(satisfies_step_bound(&s, nu, 100_000).unwrap().holds, "nu {nu}");
            let r = StepsizeSchedule::rescaled_linear(nu).unwrap();
            assert!(satisfies_step_bound(&r, nu, 100_000).unwrap().holds, "nu {nu}");
        }
        let out = satisfies_step_bound(&StepsizeSchedule::UnrescaledLinear, 0.5, 100_000).unwrap();
        assert!(!out.holds);
        assert_eq!(out.first_violation, Some(2));
        let c = StepsizeSchedule::constant(0.3).unwrap();
        assert!(satisfies_step_bound(&c, 0.5, 1000).unwrap().holds);
    }

    #[test]
    fn step_inequality_examples() {
        let s = StepsizeSchedule::shifted_linear(0.1).unwrap();
        assert!(satisfies_step_inequality(&s, 100_000).unwrap().holds);
        let p = StepsizeSchedule::polynomial(0.75).unwrap();
        assert!(satisfies_step_inequality(&p, 100_000).unwrap().holds);
        let c = StepsizeSchedule::constant(0.5).unwrap();
        assert!(satisfies_step_inequality(&c, 100).unwrap().holds);
        assert!(satisfies_step_inequality(&StepsizeSchedule::UnrescaledLinear, 1000).unwrap().holds);
    }

    #[test]
    fn unrescaled_linear_slowdown() {
        for gamma in [0.5, 0.9] {
            for k in [100u64, 1_000, 10_000, 100_000] {
                let prod = unrescaled_linear_decay(gamma, k);
                let approx = (k as f64).powf(-(1.0 - gamma));
                let ratio = prod / approx;
                assert!((1.0 / 3.0..=3.0).contains(&ratio), "gamma {gamma} k {k} ratio {ratio}");
            }
        }
    }

    #[test]
    fn spec_strings() {
        let s: StepsizeSchedule = "shifted-linear:nu=0.25".parse().unwrap();
        assert_eq!(s, StepsizeSchedule::ShiftedRescaledLinear { nu: 0.25 });
        assert_eq!(
            "poly:omega=0.75".parse::<StepsizeSchedule>().unwrap(),
            StepsizeSchedule::Polynomial { omega: 0.75 }
        );
        assert_eq!("linear".parse::<StepsizeSchedule>().unwrap(), StepsizeSchedule::UnrescaledLinear);
        assert_eq!(
            "const:0.1".parse::<StepsizeSchedule>().unwrap(),
            StepsizeSchedule::Constant { alpha: 0.1 }
        );
        assert_eq!(
            "rescaled-linear:nu=0.5,clamp=true".parse::<StepsizeSchedule>().unwrap(),
            StepsizeSchedule::RescaledLinear { nu: 0.5, clamp: true }
        );
        assert!("shifted-linear".parse::<StepsizeSchedule>().is_err());
        let spec: ScheduleSpec = "shifted-linear".parse().unwrap();
        assert_eq!(
            spec.resolve(0.8).unwrap(),
            StepsizeSchedule::ShiftedRescaledLinear { nu: 0.8 }
        );
        assert!("linear:nu=0.5".parse::<ScheduleSpec>().is_err());
        assert!("cosine".parse::<ScheduleSpec>().is_err());
        for text in ["shifted-linear", "rescaled-linear", "poly:omega=0.55", "const:0.25"] {
            let spec: ScheduleSpec = text.parse().unwrap();
            assert_eq!(spec.to_string().parse::<ScheduleSpec>().unwrap(), spec);
        }
    }

    fn schedule_strategy() -> impl Strategy<Value = StepsizeSchedule> {
        prop_oneof![
            (0.01..0.99_f64).prop_map(|nu| StepsizeSchedule::ShiftedRescaledLinear { nu }),
            (0.01..0.99_f64).prop_map(|nu| StepsizeSchedule::RescaledLinear { nu, clamp: false }),
            (0.01..0.99_f64).prop_map(|omega| StepsizeSchedule::Polynomial { omega }),
            Just(StepsizeSchedule::UnrescaledLinear),
            (0.01..0.99_f64).prop_map(|alpha| StepsizeSchedule::Constant { alpha }),
        ]
    }

    proptest! {
        #[test]
        fn schedules_are_valid_and_nonincreasing(s in schedule_strategy(), k in 1u64..1_000_000) {
            let k = k.max(s.first_valid());
            let a = s.stepsize_at(k).unwrap();
            let b = s.stepsize_at(k + 1).unwrap();
            prop_assert!(a > 0.0 && a <= 1.0 && a.is_finite());
            prop_assert!(b <= a);
        }

        #[test]
        fn poly_product_bound(
            nu in 0.01..0.99_f64,
            omega in 0.05..0.95_f64,
            t0 in 1u64..10_000,
            len in 1u64..10_000,
        ) {
            let t1 = (t0 + len).min(10_000);
            prop_assume!(t1 > t0);
            let prod = poly_contraction_product(nu, omega, t0, t1);
            let bound = poly_contraction_product_bound(nu, omega, t0, t1);
            prop_assert!(prod <= bound * (1.0 + 1e-12), "{prod} > {bound}");
        }
    }
}
