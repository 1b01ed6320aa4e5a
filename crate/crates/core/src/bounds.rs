//! Evaluators for the finite-sample Q-learning bounds and numeric checks of
//! the auxiliary lemmas behind them.
//!
//! The universal constants in the bounds are unknown, so every evaluator
//! takes `c` explicitly. All bounds are affine in `c`, which makes the
//! smallest dominating constant a closed-form maximum (see
//! [`calibrate_constant`]).

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::mdp::{bellman_into, noise_std, span_seminorm, state_values_into, Mdp, QTable};
use crate::rng::SampleStream;
use crate::schedules::{satisfies_step_inequality, StepsizeSchedule};
use crate::stats::mean_stderr;

/// Problem-dependent quantities entering the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInputs {
    pub gamma: f64,
    /// `||theta_1 - theta*||_inf`.
    pub init_error: f64,
    /// `||sigma(theta*)||_inf`.
    pub sigma_max: f64,
    /// `||theta*||_span`.
    pub span: f64,
    /// Number of state-action pairs `D`.
    pub d_pairs: usize,
    /// Stand-in for the universal constant.
    pub c: f64,
    pub omega: Option<f64>,
}

impl BoundInputs {
    /// Inputs for an MDP with `theta_1 = initial`, `c = 1`.
    pub fn from_mdp(mdp: &Mdp, theta_star: &QTable, initial: &QTable) -> Result<Self> {
        let sigma = noise_std(mdp, theta_star)?;
        let b = Self {
            gamma: mdp.discount(),
            init_error: initial.linf_distance(theta_star),
            sigma_max: sigma.max,
            span: span_seminorm(theta_star),
            d_pairs: mdp.num_pairs(),
            c: 1.0,
            omega: None,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn with_c(self, c: f64) -> Self {
        Self { c, ..self }
    }

    pub fn with_omega(self, omega: f64) -> Self {
        Self {
            omega: Some(omega),
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(invalid(format!("discount {} not in (0, 1)", self.gamma)));
        }
        for (name, v) in [
            ("init_error", self.init_error),
            ("sigma_max", self.sigma_max),
            ("span", self.span),
            ("c", self.c),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.d_pairs == 0 {
            return Err(invalid("D must be at least 1"));
        }
        if let Some(w) = self.omega {
            if !(w > 0.0 && w < 1.0) {
                return Err(invalid(format!("omega {w} not in (0, 1)")));
            }
        }
        Ok(())
    }

    fn omega_required(&self) -> Result<f64> {
        self.omega
            .ok_or_else(|| invalid("this bound needs omega"))
    }

    fn log_2d(&self) -> f64 {
        (2.0 * self.d_pairs as f64).ln()
    }
}

/// A bound of the form `fixed + c * per_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AffineBound {
    pub fixed: f64,
    pub per_c: f64,
}

impl AffineBound {
    pub fn at(&self, c: f64) -> f64 {
        self.fixed + c * self.per_c
    }
}

/// Rescaled-linear bound `E||theta_{k+1} - theta*||` as an affine function
/// of `c`:
///
/// ```text
/// init / (1 + (1-g) k)
///   + c/(1-g) [ sigma sqrt(log 2D) / sqrt(1 + (1-g) k)
///               + span log(2 e D (1 + (1-g) k)) / (1 + (1-g) k) ]
/// ```
pub fn rescaled_linear_parts(b: &BoundInputs, k: u64) -> Result<AffineBound> {
    b.validate()?;
    if k == 0 {
        return Err(invalid("bound is defined for k >= 1"));
    }
    let g1 = 1.0 - b.gamma;
    let t = 1.0 + g1 * k as f64;
    let d = b.d_pairs as f64;
    let noise = b.sigma_max * b.log_2d().sqrt() / t.sqrt()
        + b.span * (2.0 * std::f64::consts::E * d * t).ln() / t;
    Ok(AffineBound {
        fixed: b.init_error / t,
        per_c: noise / g1,
    })
}

pub fn rescaled_linear_bound(b: &BoundInputs, k: u64) -> Result<f64> {
    Ok(rescaled_linear_parts(b, k)?.at(b.c))
}

/// Smallest `k` from which the polynomial-stepsize bound is stated:
/// `ceil((3 w / (2 (1 - g)))^{1/(1-w)})`, at least 1.
pub fn poly_bound_threshold(gamma: f64, omega: f64) -> u64 {
    let t = (3.0 * omega / (2.0 * (1.0 - gamma))).powf(1.0 / (1.0 - omega));
    (t.ceil() as u64).max(1)
}

/// Polynomial-stepsize bound as an affine function of `c`:
///
/// ```text
/// exp(-(1-g)/(1-w) (k^{1-w} - 1)) { init + c (1-g)^{-1/(1-w)} }
///   + c/(1-g) { sigma sqrt(log 2D) / k^{w/2} + span log 2D / k^w }
/// ```
pub fn poly_bound_parts(b: &BoundInputs, k: u64) -> Result<AffineBound> {
    b.validate()?;
    let w = b.omega_required()?;
    let threshold = poly_bound_threshold(b.gamma, w);
    if k < threshold {
        return Err(Error::BelowThreshold { k, threshold });
    }
    let g1 = 1.0 - b.gamma;
    let q = 1.0 - w;
    let kf = k as f64;
    let decay = (-(g1 / q) * (kf.powf(q) - 1.0)).exp();
    let noise = b.sigma_max * b.log_2d().sqrt() / kf.powf(w / 2.0) + b.span * b.log_2d() / kf.powf(w);
    Ok(AffineBound {
        fixed: decay * b.init_error,
        per_c: decay * g1.powf(-1.0 / q) + noise / g1,
    })
}

pub fn poly_bound(b: &BoundInputs, k: u64) -> Result<f64> {
    Ok(poly_bound_parts(b, k)?.at(b.c))
}

/// Which order-level iteration-complexity expression to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ComplexityKind {
    /// Rescaled linear stepsize, instance-dependent.
    LinearRescaled,
    /// Polynomial stepsize, instance-dependent.
    Poly,
    /// Earlier epoch-based polynomial-stepsize result.
    EvenDarMansourPoly,
    /// Rescaled linear, worst case over `rmax`-bounded rewards.
    LinearWorst,
    /// Polynomial, worst case over `rmax`-bounded rewards.
    PolyWorst,
}

impl ComplexityKind {
    pub const ALL: [ComplexityKind; 5] = [
        ComplexityKind::LinearRescaled,
        ComplexityKind::Poly,
        ComplexityKind::EvenDarMansourPoly,
        ComplexityKind::LinearWorst,
        ComplexityKind::PolyWorst,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ComplexityKind::LinearRescaled => "linear_rescaled",
            ComplexityKind::Poly => "poly",
            ComplexityKind::EvenDarMansourPoly => "eveman_poly",
            ComplexityKind::LinearWorst => "linear_worst",
            ComplexityKind::PolyWorst => "poly_worst",
        }
    }
}

impl std::str::FromStr for ComplexityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse {
                what: "complexity kind",
                input: s.to_string(),
                reason: "expected one of linear_rescaled, poly, eveman_poly, linear_worst, poly_worst".into(),
            })
    }
}

/// Order-level iteration complexity, constants set to `c` and logarithms
/// kept only where the expressions print them. A negative logarithm (only
/// possible when `eps > rmax / (1 - g)`) is clamped to zero.
///
/// - `LinearRescaled`: `(init/(1-g) + span/(1-g)^2)/eps + sigma^2/((1-g)^3 eps^2)`
/// - `Poly`: `(sigma^2/((1-g)^2 eps^2))^{1/w} + (span^2/((1-g)^2 eps^2))^{1/(2w)} + L^{1/(1-w)}`
/// - `EvenDarMansourPoly`, `PolyWorst`: `(rmax^2/((1-g)^4 eps^2))^{1/w} + L^{1/(1-w)}`
/// - `LinearWorst`: `rmax^2 / ((1-g)^5 eps^2)`
///
/// where `L = log(rmax / ((1-g) eps)) / (1-g)`.
pub fn iter_complexity(kind: ComplexityKind, b: &BoundInputs, epsilon: f64, rmax: f64) -> Result<f64> {
    b.validate()?;
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon must be > 0"));
    }
    if !(rmax >= 0.0) {
        return Err(invalid("rmax must be >= 0"));
    }
    let g1 = 1.0 - b.gamma;
    let eps2 = epsilon * epsilon;
    let log_term = || (rmax / (g1 * epsilon)).ln().max(0.0) / g1;
    let value = match kind {
        ComplexityKind::LinearRescaled => {
            (b.init_error / g1 + b.span / (g1 * g1)) / epsilon + b.sigma_max.powi(2) / (g1.powi(3) * eps2)
        }
        ComplexityKind::Poly => {
            let w = b.omega_required()?;
            (b.sigma_max.powi(2) / (g1 * g1 * eps2)).powf(1.0 / w)
                + (b.span.powi(2) / (g1 * g1 * eps2)).powf(1.0 / (2.0 * w))
                + log_term().powf(1.0 / (1.0 - w))
        }
        ComplexityKind::EvenDarMansourPoly | ComplexityKind::PolyWorst => {
            let w = b.omega_required()?;
            (rmax * rmax / (g1.powi(4) * eps2)).powf(1.0 / w) + log_term().powf(1.0 / (1.0 - w))
        }
        ComplexityKind::LinearWorst => rmax * rmax / (g1.powi(5) * eps2),
    };
    Ok(b.c * value)
}

/// Both sides of the exponential-weighted-sum inequalities at one `k`.
///
/// `rhs_b` is inequality (B) as stated, with `k^{-3w/2}` in the noise
/// term. Its left side decays only like `k^{-w}/(1-g)`, so (B) fails for
/// large `k` at any fixed `c`. `rhs_b_rate` replaces `k^{-3w/2}` by `k^{-w}`,
/// the rate the polynomial-stepsize bound actually uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpSumCheck {
    pub k: u64,
    pub lhs_a: f64,
    pub rhs_a: f64,
    pub lhs_b: f64,
    pub rhs_b: f64,
    pub rhs_b_rate: f64,
    pub holds_a: bool,
    pub holds_b: bool,
    pub holds_b_rate: bool,
    /// `holds_a && holds_b`: the inequalities as stated.
    pub holds: bool,
    /// Whether `k` is at or past the threshold from which the inequalities
    /// are claimed.
    pub above_threshold: bool,
}

/// Right-hand sides `(A, B, B with k^{-w})` without the constant.
fn exp_sum_rhs(gamma: f64, omega: f64, k: u64) -> (f64, f64, f64) {
    let g1 = 1.0 - gamma;
    let q = 1.0 - omega;
    let kf = k as f64;
    let init = (-(g1 / q) * (kf.powf(q) - 1.0)).exp() / g1.powf(1.0 / q);
    (
        init + 1.0 / (g1 * kf.powf(omega / 2.0)),
        init + 1.0 / (g1 * kf.powf(1.5 * omega)),
        init + 1.0 / (g1 * kf.powf(omega)),
    )
}

fn check_exp_sum_args(gamma: f64, omega: f64, c: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid(format!("discount {gamma} not in (0, 1)")));
    }
    if !(omega > 0.0 && omega < 1.0) {
        return Err(invalid(format!("omega {omega} not in (0, 1)")));
    }
    if !(c > 0.0) {
        return Err(invalid("c must be > 0"));
    }
    Ok(())
}

/// Checks
///
/// ```text
/// (A) sum_{i<=k} exp(a (i^{1-w} - k^{1-w})) i^{-3w/2} <= c { E_k + 1/((1-g) k^{w/2}) }
/// (B) sum_{i<=k} exp(a (i^{1-w} - k^{1-w})) i^{-2w}   <= c { E_k + 1/((1-g) k^{3w/2}) }
/// ```
///
/// with `a = (1-g)/(1-w)` and `E_k = exp(-a (k^{1-w} - 1)) / (1-g)^{1/(1-w)}`,
/// plus (B) with `k^{-w}` in place of `k^{-3w/2}`.
/// Each summand is evaluated as the exponential of a nonpositive exponent,
/// so nothing overflows. Values below the threshold are still computed and
/// flagged through `above_threshold`.
pub fn exp_weighted_sum_check(gamma: f64, omega: f64, k: u64, c: f64) -> Result<ExpSumCheck> {
    check_exp_sum_args(gamma, omega, c)?;
    if k == 0 {
        return Err(invalid("k must be >= 1"));
    }
    let threshold = poly_bound_threshold(gamma, omega);
    let q = 1.0 - omega;
    let a = (1.0 - gamma) / q;
    let kq = (k as f64).powf(q);
    let (mut lhs_a, mut lhs_b) = (0.0, 0.0);
    for i in 1..=k {
        let li = (i as f64).ln();
        let base = a * ((i as f64).powf(q) - kq);
        lhs_a += (base - 1.5 * omega * li).exp();
        lhs_b += (base - 2.0 * omega * li).exp();
    }
    let (rhs_a, rhs_b, rhs_b_rate) = exp_sum_rhs(gamma, omega, k);
    let holds_a = lhs_a <= c * rhs_a;
    let holds_b = lhs_b <= c * rhs_b;
    Ok(ExpSumCheck {
        k,
        lhs_a,
        rhs_a,
        lhs_b,
        rhs_b,
        rhs_b_rate,
        holds_a,
        holds_b,
        holds_b_rate: lhs_b <= c * rhs_b_rate,
        holds: holds_a && holds_b,
        above_threshold: k >= threshold,
    })
}

/// Worst case of one inequality over a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioSummary {
    /// Largest `lhs / rhs`.
    pub worst_ratio: f64,
    pub worst_k: u64,
    /// First `k` with `lhs > c rhs`.
    pub first_failure: Option<u64>,
}

impl RatioSummary {
    fn new() -> Self {
        Self {
            worst_ratio: 0.0,
            worst_k: 0,
            first_failure: None,
        }
    }

    fn push(&mut self, k: u64, ratio: f64, c: f64) {
        if ratio > self.worst_ratio {
            self.worst_ratio = ratio;
            self.worst_k = k;
        }
        if ratio > c && self.first_failure.is_none() {
            self.first_failure = Some(k);
        }
    }

    pub fn holds(&self) -> bool {
        self.first_failure.is_none()
    }
}

/// Result of checking the exponential-sum inequalities at every `k` from
/// the threshold through `k_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpSumSweep {
    pub gamma: f64,
    pub omega: f64,
    pub threshold: u64,
    pub checked: u64,
    pub a: RatioSummary,
    pub b: RatioSummary,
    pub b_rate: RatioSummary,
}

impl ExpSumSweep {
    /// (A) and (B) as stated.
    pub fn holds(&self) -> bool {
        self.a.holds() && self.b.holds()
    }
}

/// Sweeps `k` over `threshold..=k_max` using the one-step recursion
/// `S_k = S_{k-1} exp(-a (k^{1-w} - (k-1)^{1-w})) + k^{-p}` for both sums.
/// Returns `checked = 0` when the threshold exceeds `k_max`.
pub fn exp_weighted_sum_sweep(gamma: f64, omega: f64, k_max: u64, c: f64) -> Result<ExpSumSweep> {
    check_exp_sum_args(gamma, omega, c)?;
    let threshold = poly_bound_threshold(gamma, omega);
    let mut out = ExpSumSweep {
        gamma,
        omega,
        threshold,
        checked: 0,
        a: RatioSummary::new(),
        b: RatioSummary::new(),
        b_rate: RatioSummary::new(),
    };
    if threshold > k_max {
        return Ok(out);
    }
    let q = 1.0 - omega;
    let a = (1.0 - gamma) / q;
    let (mut sa, mut sb) = (0.0_f64, 0.0_f64);
    let mut prev_pow = 0.0_f64;
    for k in 1..=k_max {
        let kf = k as f64;
        let pow = kf.powf(q);
        let decay = (-a * (pow - prev_pow)).exp();
        prev_pow = pow;
        let lk = kf.ln();
        sa = sa * decay + (-1.5 * omega * lk).exp();
        sb = sb * decay + (-2.0 * omega * lk).exp();
        if k < threshold {
            continue;
        }
        let (ra, rb, rb_rate) = exp_sum_rhs(gamma, omega, k);
        out.a.push(k, sa / ra, c);
        out.b.push(k, sb / rb, c);
        out.b_rate.push(k, sb / rb_rate, c);
        out.checked += 1;
    }
    Ok(out)
}

/// Bounded zero-mean noise for the autoregression checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NoiseLaw {
    /// `+-B` with equal probability; variance `B^2`.
    Rademacher,
    /// Uniform on `[-B, B]`; variance `B^2 / 3`.
    Uniform,
}

impl NoiseLaw {
    fn variance(&self, bound: f64) -> f64 {
        match self {
            NoiseLaw::Rademacher => bound * bound,
            NoiseLaw::Uniform => bound * bound / 3.0,
        }
    }

    fn draw(&self, bound: f64, u: f64) -> f64 {
        match self {
            NoiseLaw::Rademacher => {
                if u < 0.5 {
                    -bound
                } else {
                    bound
                }
            }
            NoiseLaw::Uniform => bound * (2.0 * u - 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MgfCheck {
    pub k: u64,
    pub s: f64,
    /// `log` of the Monte-Carlo mean of `exp(s V_k)`.
    pub mc_log_mgf: f64,
    /// Standard error of the Monte-Carlo mean of `exp(s V_k)`.
    pub mc_stderr: f64,
    /// `s^2 sigma^2 alpha_{k-1} / (1 - B alpha_{k-1} |s|)`; zero at `k = 1`.
    pub bound: f64,
    /// `mean - 3 stderr <= exp(bound)`.
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MgfSetup {
    pub law: NoiseLaw,
    /// Almost-sure bound `B` on the noise.
    pub noise_bound: f64,
    /// Declared variance proxy; must be at least the law's variance.
    pub sigma: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Simulates `V_{j+1} = (1 - alpha_j) V_j + alpha_j xi_j`, `V_1 = 0`, up to
/// `V_k` and compares the Monte-Carlo log-MGF at `s` with the lemma's bound.
pub fn mgf_bound_check(schedule: &StepsizeSchedule, setup: &MgfSetup, s: f64, k: u64) -> Result<MgfCheck> {
    let MgfSetup {
        law,
        noise_bound,
        sigma,
        trials,
        seed,
    } = *setup;
    if k == 0 {
        return Err(invalid("k must be >= 1"));
    }
    if trials == 0 {
        return Err(invalid("trials must be >= 1"));
    }
    if !(noise_bound > 0.0) || !(sigma >= 0.0) {
        return Err(invalid("noise bound must be > 0 and sigma >= 0"));
    }
    if sigma * sigma < law.variance(noise_bound) * (1.0 - 1e-12) {
        return Err(invalid(format!(
            "sigma^2 = {} is below the noise variance {}",
            sigma * sigma,
            law.variance(noise_bound)
        )));
    }
    let step = satisfies_step_inequality(schedule, k.max(2))?;
    if !step.holds {
        return Err(invalid(format!(
            "schedule {schedule} violates the stepsize inequality at k = {:?}",
            step.first_violation
        )));
    }
    if k == 1 {
        return Ok(MgfCheck {
            k,
            s,
            mc_log_mgf: 0.0,
            mc_stderr: 0.0,
            bound: 0.0,
            holds: true,
        });
    }
    let alphas: Vec<f64> = (1..k).map(|j| schedule.stepsize_at(j)).collect::<Result<_>>()?;
    let alpha_prev = alphas[alphas.len() - 1];
    if s.abs() * noise_bound * alpha_prev >= 1.0 {
        return Err(invalid(format!(
            "|s| = {} must be below 1/(B alpha_(k-1)) = {}",
            s.abs(),
            1.0 / (noise_bound * alpha_prev)
        )));
    }
    let bound = s * s * sigma * sigma * alpha_prev / (1.0 - noise_bound * alpha_prev * s.abs());
    let samples: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut stream = SampleStream::new(seed, t);
            let mut v = 0.0;
            for &a in &alphas {
                v = (1.0 - a) * v + a * law.draw(noise_bound, stream.uniform());
            }
            (s * v).exp()
        })
        .collect();
    let (mean, se) = mean_stderr(&samples);
    Ok(MgfCheck {
        k,
        s,
        mc_log_mgf: mean.ln(),
        mc_stderr: se,
        bound,
        holds: mean - 3.0 * se <= bound.exp(),
    })
}

/// `c (sqrt(alpha_k) sigma sqrt(log 2D) + alpha_k span log 2D)`.
pub fn expected_pnorm_bound(b: &BoundInputs, schedule: &StepsizeSchedule, k: u64) -> Result<f64> {
    Ok(expected_pnorm_parts(b, schedule, k)?.at(b.c))
}

pub fn expected_pnorm_parts(b: &BoundInputs, schedule: &StepsizeSchedule, k: u64) -> Result<AffineBound> {
    b.validate()?;
    let step = satisfies_step_inequality(schedule, k.max(2))?;
    if !step.holds {
        return Err(invalid(format!(
            "schedule {schedule} violates the stepsize inequality at k = {:?}",
            step.first_violation
        )));
    }
    let alpha = schedule.stepsize_at(k)?;
    let l = b.log_2d();
    Ok(AffineBound {
        fixed: 0.0,
        per_c: alpha.sqrt() * b.sigma_max * l.sqrt() + alpha * b.span * l,
    })
}

/// Monte-Carlo mean and standard error of `||P_k||_inf` for Q-learning,
/// where `P_{j+1} = (1 - alpha_j) P_j + alpha_j (B̂_j(theta*) - B(theta*))`.
/// Trial `t` uses stream `(seed, t)`.
pub fn pnorm_monte_carlo(
    mdp: &Mdp,
    theta_star: &QTable,
    schedule: &StepsizeSchedule,
    k: u64,
    trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if trials == 0 || k == 0 {
        return Err(invalid("need k >= 1 and trials >= 1"));
    }
    let dim = mdp.num_pairs();
    if theta_star.as_slice().len() != dim {
        return Err(invalid("theta* does not match the MDP"));
    }
    let alphas: Vec<f64> = (1..k).map(|j| schedule.stepsize_at(j)).collect::<Result<_>>()?;
    let mut values = vec![0.0; mdp.num_states()];
    state_values_into(mdp, theta_star.as_slice(), &mut values);
    let mut mean_next = vec![0.0; dim];
    bellman_into(mdp, &values, &mut mean_next);
    let gamma = mdp.discount();
    let norms: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut stream = SampleStream::new(seed, t);
            let mut p = vec![0.0; dim];
            for &a in &alphas {
                for (pair, pv) in p.iter_mut().enumerate() {
                    let j = mdp.sample_next(pair, stream.uniform());
                    let w = mdp.rewards()[pair] + gamma * values[j] - mean_next[pair];
                    *pv = (1.0 - a) * *pv + a * w;
                }
            }
            p.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
        })
        .collect();
    Ok(mean_stderr(&norms))
}

/// Smallest constant making an affine bound dominate observed errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    pub c_star: f64,
    /// Bound index `k` at which `c_star` is attained.
    pub binding_k: Option<u64>,
    /// Points compared.
    pub checked: usize,
}

/// `c* = max_k (err_k - fixed_k) / per_c_k`, clamped at zero, over the
/// given `(k, err_k)` pairs. Points with `per_c_k = 0` must already satisfy
/// `err_k <= fixed_k`, otherwise no constant works.
pub fn calibrate_constant(points: &[(u64, f64)], parts: impl Fn(u64) -> Result<AffineBound>) -> Result<Calibration> {
    let mut out = Calibration {
        c_star: 0.0,
        binding_k: None,
        checked: 0,
    };
    for &(k, err) in points {
        let p = parts(k)?;
        out.checked += 1;
        let excess = err - p.fixed;
        if excess <= 0.0 {
            continue;
        }
        if p.per_c <= 0.0 {
            return Err(invalid(format!("no constant dominates the error at k = {k}")));
        }
        let c = excess / p.per_c;
        if c > out.c_star {
            out.c_star = c;
            out.binding_k = Some(k);
        }
    }
    Ok(out)
}

/// Whether `fixed + c per_c >= err` at every point, allowing relative
/// rounding slack `1e-12`.
pub fn dominates(points: &[(u64, f64)], c: f64, parts: impl Fn(u64) -> Result<AffineBound>) -> Result<bool> {
    for &(k, err) in points {
        let bound = parts(k)?.at(c);
        if err > bound * (1.0 + 1e-12) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Draws `n` i.i.d. zero-mean variables with the given law and bound; used
/// by tests and the lemma suite to sanity-check the noise generator.
pub fn sample_noise(law: NoiseLaw, bound: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut stream = SampleStream::new(seed, 0);
    (0..n)
        .map(|_| law.draw(bound, stream.uniform()))
        .collect()
}
