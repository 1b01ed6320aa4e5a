//! The stochastic approximation recursion
//! `theta_{k+1} = (1 - alpha_k) theta_k + alpha_k (H_k(theta_k) + eps_k)`
//! with runtime tracking of the sandwich sequences.
//!
//! For monotone, `nu_k`-quasi-contractive operators the error satisfies
//!
//! ```text
//! -(D_k + A_k) e + P_k  ⪯  theta_k - theta*  ⪯  (D_k + A_k) e + P_k
//! ```
//!
//! where `P_k` is the effective-noise autoregression, `D_k` the decayed
//! initial error and `A_k` the noise coupling term. [`run_sa`] recomputes
//! these alongside the iterates and checks the relation at every step.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cone::{GaugeElement, GaugeVector, OrthantCone};
use crate::error::{check_dims, invalid, Result};
use crate::rng::SampleStream;
use crate::schedules::StepsizeSchedule;

/// One draw of the random operator `H_k`, plus optional extrinsic noise.
///
/// `draw` is called exactly once per iteration before any evaluation, so
/// all evaluations within an iteration see the same randomness.
pub trait SaOperator {
    fn dim(&self) -> usize;

    /// Draws the randomness for iteration `k` (1-based).
    fn draw(&mut self, k: u64);

    /// Writes `H_k(theta)` into `out`.
    fn apply(&mut self, theta: &[f64], out: &mut [f64]);

    /// Writes `eps_k`, which may depend on the current iterate. Zero unless
    /// overridden.
    fn extrinsic_noise(&mut self, _theta: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    /// Declared quasi-contraction coefficient `nu_k` of the current draw.
    fn contraction(&self) -> f64;
}

/// `(1 - alpha) theta + alpha (h + noise)`.
pub fn sa_step(
    theta: &GaugeVector,
    h_of_theta: &GaugeVector,
    noise: &GaugeVector,
    alpha: f64,
) -> Result<GaugeVector> {
    check_alpha(alpha)?;
    check_dims(theta.dim(), h_of_theta.dim())?;
    check_dims(theta.dim(), noise.dim())?;
    let mut out = theta.as_slice().to_vec();
    sa_step_in_place(&mut out, h_of_theta, noise, alpha);
    GaugeVector::new(out)
}

#[inline]
pub(crate) fn sa_step_in_place(theta: &mut [f64], h: &[f64], noise: &[f64], alpha: f64) {
    let keep = 1.0 - alpha;
    for ((t, h), n) in theta.iter_mut().zip(h).zip(noise) {
        *t = keep * *t + alpha * (h + n);
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("stepsize {alpha} not in (0, 1]")))
    }
}

fn check_nu(nu: f64) -> Result<()> {
    if nu > 0.0 && nu < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("contraction coefficient {nu} not in (0, 1)")))
    }
}

/// How the noise-coupling term `A_k` picks up `||P_{k-1}||`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum Coupling {
    /// `A_k = (1 - (1 - nu_{k-1}) alpha_{k-1}) A_{k-1} + nu_{k-1} alpha_{k-1} ||P_{k-1}||`,
    /// the form the induction actually establishes.
    #[default]
    SameStep,
    /// `A_k = (1 - (1 - nu_{k-1}) alpha_{k-1}) A_{k-1} + gamma alpha_k ||P_{k-1}||`,
    /// kept for numerical comparison.
    NextStep { gamma: f64 },
}

/// The scalar pair `(D_k, A_k)` and the vector `P_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichState {
    pub d: f64,
    pub a: f64,
    pub p: Vec<f64>,
}

impl SandwichState {
    /// `D_1 = ||theta_1 - theta*||`, `A_1 = 0`, `P_1 = 0`.
    pub fn initial(init_error: f64, dim: usize) -> Self {
        Self {
            d: init_error,
            a: 0.0,
            p: vec![0.0; dim],
        }
    }

    /// Half-width `D_k + A_k` of the bracket around `P_k`.
    pub fn radius(&self) -> f64 {
        self.d + self.a
    }

    fn advance(
        &mut self,
        w: &[f64],
        alpha_prev: f64,
        alpha_cur: f64,
        nu_prev: f64,
        e: &GaugeElement,
        coupling: Coupling,
    ) {
        let p_norm_prev = e.norm_unchecked(&self.p);
        let decay = 1.0 - (1.0 - nu_prev) * alpha_prev;
        let inject = match coupling {
            Coupling::SameStep => nu_prev * alpha_prev,
            Coupling::NextStep { gamma } => gamma * alpha_cur,
        };
        self.d *= decay;
        self.a = decay * self.a + inject * p_norm_prev;
        let keep = 1.0 - alpha_prev;
        for (p, w) in self.p.iter_mut().zip(w) {
            *p = keep * *p + alpha_prev * w;
        }
    }
}

/// One step of the sandwich recursions (same-step coupling):
/// `P <- (1 - a) P + a W`, `D <- (1 - (1 - nu) a) D`,
/// `A <- (1 - (1 - nu) a) A + nu a ||P_prev||`.
pub fn sandwich_update(
    state: &SandwichState,
    noise_effective: &[f64],
    alpha_prev: f64,
    nu_prev: f64,
    e: &GaugeElement,
) -> Result<SandwichState> {
    sandwich_update_with(
        state,
        noise_effective,
        alpha_prev,
        alpha_prev,
        nu_prev,
        e,
        Coupling::SameStep,
    )
}

/// [`sandwich_update`] with an explicit coupling rule. `alpha_cur` is only
/// read by [`Coupling::NextStep`].
pub fn sandwich_update_with(
    state: &SandwichState,
    noise_effective: &[f64],
    alpha_prev: f64,
    alpha_cur: f64,
    nu_prev: f64,
    e: &GaugeElement,
    coupling: Coupling,
) -> Result<SandwichState> {
    check_alpha(alpha_prev)?;
    check_nu(nu_prev)?;
    check_dims(state.p.len(), noise_effective.len())?;
    check_dims(state.p.len(), e.dim())?;
    let mut next = state.clone();
    next.advance(noise_effective, alpha_prev, alpha_cur, nu_prev, e, coupling);
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub check_sandwich: bool,
    pub coupling: Coupling,
    pub cone: OrthantCone,
    /// Store every iterate in the trace.
    pub keep_iterates: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            check_sandwich: true,
            coupling: Coupling::SameStep,
            cone: OrthantCone::default(),
            keep_iterates: false,
        }
    }
}

/// Per-iterate record. `iter = k` describes `theta_k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iter: u64,
    pub error: f64,
    pub d: f64,
    pub a: f64,
    pub p_norm: f64,
    /// Smallest slack of the two-sided bracket; negative means breached.
    pub slack: f64,
    /// `None` when the run did not check the relation.
    pub sandwich_ok: Option<bool>,
    #[serde(skip)]
    pub theta: Option<Vec<f64>>,
}

/// Everything [`run_sa`] observed: `iters + 1` records plus the stepsizes
/// and coefficients used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaTrace {
    pub records: Vec<TraceRecord>,
    /// `alpha_1 ..= alpha_iters`.
    pub alphas: Vec<f64>,
    /// `nu_1 ..= nu_iters`.
    pub nus: Vec<f64>,
    pub violations: usize,
}

impl SaTrace {
    pub fn errors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.error).collect()
    }

    pub fn first_violation(&self) -> Option<u64> {
        self.records
            .iter()
            .find(|r| r.sandwich_ok == Some(false))
            .map(|r| r.iter)
    }

    /// CSV with columns `iter,linf_error,D,A,P_norm,sandwich_ok`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iter,linf_error,D,A,P_norm,sandwich_ok")?;
        for r in &self.records {
            let ok = match r.sandwich_ok {
                Some(true) => "true",
                Some(false) => "false",
                None => "",
            };
            writeln!(out, "{},{},{},{},{},{}", r.iter, r.error, r.d, r.a, r.p_norm, ok)?;
        }
        Ok(())
    }
}

/// Runs `iters` steps of the recursion from `initial`, tracking the error
/// against `theta_star` and the sandwich sequences.
///
/// The effective noise is `W_k = H_k(theta*) - theta* + eps_k`. Violations
/// of the sandwich relation are counted in the trace, never dropped.
pub fn run_sa<O: SaOperator + ?Sized>(
    initial: &GaugeVector,
    theta_star: &GaugeVector,
    op: &mut O,
    schedule: &StepsizeSchedule,
    iters: u64,
    e: &GaugeElement,
    opts: &RunOptions,
) -> Result<SaTrace> {
    let dim = initial.dim();
    check_dims(dim, theta_star.dim())?;
    check_dims(dim, e.dim())?;
    check_dims(dim, op.dim())?;
    schedule.validate()?;

    let star = theta_star.as_slice();
    let mut theta = initial.as_slice().to_vec();
    let mut delta: Vec<f64> = theta.iter().zip(star).map(|(t, s)| t - s).collect();
    let mut state = SandwichState::initial(e.norm_unchecked(&delta), dim);
    let mut h = vec![0.0; dim];
    let mut noise = vec![0.0; dim];
    let mut w = vec![0.0; dim];

    let mut trace = SaTrace {
        records: Vec::with_capacity(iters as usize + 1),
        alphas: Vec::with_capacity(iters as usize),
        nus: Vec::with_capacity(iters as usize),
        violations: 0,
    };
    let record = |k: u64, theta: &[f64], delta: &[f64], state: &SandwichState, trace: &mut SaTrace| -> Result<()> {
        let slack = opts
            .cone
            .interval_slack(delta, &state.p, state.radius(), e)?;
        let ok = opts.check_sandwich.then_some(slack >= -opts.cone.tolerance);
        if ok == Some(false) {
            trace.violations += 1;
        }
        trace.records.push(TraceRecord {
            iter: k,
            error: e.norm_unchecked(delta),
            d: state.d,
            a: state.a,
            p_norm: e.norm_unchecked(&state.p),
            slack,
            sandwich_ok: ok,
            theta: opts.keep_iterates.then(|| theta.to_vec()),
        });
        Ok(())
    };
    record(1, &theta, &delta, &state, &mut trace)?;

    let mut alpha = if iters > 0 { schedule.stepsize_at(1)? } else { 1.0 };
    for k in 1..=iters {
        op.draw(k);
        let nu = op.contraction();
        check_nu(nu)?;
        // effective noise at theta*
        op.apply(star, &mut w);
        op.extrinsic_noise(&theta, &mut noise);
        for ((w, s), n) in w.iter_mut().zip(star).zip(&noise) {
            *w = *w - s + n;
        }
        op.apply(&theta, &mut h);
        sa_step_in_place(&mut theta, &h, &noise, alpha);

        let alpha_next = if k < iters || matches!(opts.coupling, Coupling::NextStep { .. }) {
            schedule.stepsize_at(k + 1)?
        } else {
            alpha
        };
        state.advance(&w, alpha, alpha_next, nu, e, opts.coupling);
        trace.alphas.push(alpha);
        trace.nus.push(nu);
        for ((d, t), s) in delta.iter_mut().zip(&theta).zip(star) {
            *d = t - s;
        }
        record(k + 1, &theta, &delta, &state, &mut trace)?;
        alpha = alpha_next;
    }
    Ok(trace)
}

/// Result of checking a realized error path against a deterministic
/// corollary bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RealizedBoundCheck {
    pub checked: usize,
    pub violations: usize,
    /// Smallest `bound - error` seen.
    pub min_slack: f64,
}

impl RealizedBoundCheck {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }

    fn push(&mut self, error: f64, bound: f64, tol: f64) {
        self.checked += 1;
        let slack = bound - error;
        self.min_slack = self.min_slack.min(slack);
        if slack < -tol {
            self.violations += 1;
        }
    }
}

fn realized_inputs(trace: &SaTrace) -> Result<(Vec<f64>, Vec<f64>)> {
    let errors = trace.errors();
    let p_norms: Vec<f64> = trace.records.iter().map(|r| r.p_norm).collect();
    if errors.len() != trace.alphas.len() + 1 {
        return Err(invalid("trace does not hold one record per iterate"));
    }
    Ok((errors, p_norms))
}

/// Checks, for every `k`,
/// `||theta_{k+1} - theta*|| <= alpha_k (||theta_1 - theta*|| / alpha_1 + nu sum_{i<=k} ||P_i||) + ||P_{k+1}||`.
///
/// Valid for stepsizes passing [`crate::schedules::satisfies_step_bound`].
pub fn check_linear_step_bound(trace: &SaTrace, nu: f64, tol: f64) -> Result<RealizedBoundCheck> {
    let (errors, p_norms) = realized_inputs(trace)?;
    let mut out = RealizedBoundCheck {
        checked: 0,
        violations: 0,
        min_slack: f64::INFINITY,
    };
    let Some(&alpha_1) = trace.alphas.first() else {
        return Ok(out);
    };
    let lead = errors[0] / alpha_1;
    let mut p_sum = 0.0;
    for (i, &alpha) in trace.alphas.iter().enumerate() {
        p_sum += p_norms[i];
        let bound = alpha * (lead + nu * p_sum) + p_norms[i + 1];
        out.push(errors[i + 1], bound, tol);
    }
    Ok(out)
}

/// Checks the polynomial-stepsize bound
/// `||theta_{k+1} - theta*|| <= exp(-c (k^{1-w} - 1)) ||theta_1 - theta*||
///   + exp(-c k^{1-w}) sum_{i<=k} exp(c i^{1-w}) i^{-w} ||P_i|| + ||P_{k+1}||`
/// with `c = (1 - nu)/(1 - w)`, for `alpha_k = k^{-w}`.
pub fn check_poly_step_bound(
    trace: &SaTrace,
    nu: f64,
    omega: f64,
    tol: f64,
) -> Result<RealizedBoundCheck> {
    let (errors, p_norms) = realized_inputs(trace)?;
    let q = 1.0 - omega;
    let c = (1.0 - nu) / q;
    let mut out = RealizedBoundCheck {
        checked: 0,
        violations: 0,
        min_slack: f64::INFINITY,
    };
    // weighted = exp(-c k^q) sum_{i<=k} exp(c i^q) i^{-w} ||P_i||, updated
    // multiplicatively so nothing overflows.
    let mut weighted = 0.0;
    let mut prev_pow = 0.0_f64;
    for k in 1..=trace.alphas.len() {
        let kf = k as f64;
        let pow = kf.powf(q);
        weighted = weighted * (-c * (pow - prev_pow)).exp() + kf.powf(-omega) * p_norms[k - 1];
        prev_pow = pow;
        let bound = (-c * (pow - 1.0)).exp() * errors[0] + weighted + p_norms[k];
        out.push(errors[k], bound, tol);
    }
    Ok(out)
}

/// Synthetic monotone contraction `H_k(theta) = theta* + nu S (theta - theta*)`
/// with `S` a fixed row-stochastic matrix, plus optional i.i.d. extrinsic
/// noise uniform on `[-noise_scale, noise_scale]`.
#[derive(Debug, Clone)]
pub struct AveragingContraction {
    nu: f64,
    center: Vec<f64>,
    mixing: Vec<f64>,
    noise_scale: f64,
    stream: SampleStream,
    noise: Vec<f64>,
}

impl AveragingContraction {
    /// `mixing` is row-major `d x d` and must be row-stochastic.
    pub fn new(
        nu: f64,
        center: Vec<f64>,
        mixing: Vec<f64>,
        noise_scale: f64,
        stream: SampleStream,
    ) -> Result<Self> {
        check_nu(nu)?;
        let d = center.len();
        check_dims(d * d, mixing.len())?;
        for row in mixing.chunks_exact(d) {
            if row.iter().any(|m| *m < 0.0) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(invalid("mixing matrix must be row-stochastic"));
            }
        }
        if !(noise_scale >= 0.0) {
            return Err(invalid("noise scale must be >= 0"));
        }
        Ok(Self {
            nu,
            noise: vec![0.0; d],
            center,
            mixing,
            noise_scale,
            stream,
        })
    }

    /// `H(theta) = nu * theta`: the scalar contraction toward zero.
    pub fn scalar(nu: f64, dim: usize) -> Result<Self> {
        let mut mixing = vec![0.0; dim * dim];
        for i in 0..dim {
            mixing[i * dim + i] = 1.0;
        }
        Self::new(nu, vec![0.0; dim], mixing, 0.0, SampleStream::new(0, 0))
    }

    /// Random dense mixing matrix and center, seeded.
    pub fn random(nu: f64, dim: usize, noise_scale: f64, seed: u64) -> Result<Self> {
        let mut stream = SampleStream::new(seed, u64::MAX);
        let rng = stream.rng_mut();
        let center = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut mixing = Vec::with_capacity(dim * dim);
        for _ in 0..dim {
            let row: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() + 1e-3).collect();
            let total: f64 = row.iter().sum();
            mixing.extend(row.iter().map(|x| x / total));
        }
        Self::new(nu, center, mixing, noise_scale, SampleStream::new(seed, 0))
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }
}

impl SaOperator for AveragingContraction {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn draw(&mut self, _k: u64) {
        if self.noise_scale > 0.0 {
            for n in &mut self.noise {
                *n = self.noise_scale * (2.0 * self.stream.uniform() - 1.0);
            }
        }
    }

    fn apply(&mut self, theta: &[f64], out: &mut [f64]) {
        let d = self.center.len();
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.mixing[i * d..(i + 1) * d];
            let mixed: f64 = row
                .iter()
                .zip(theta)
                .zip(&self.center)
                .map(|((m, t), c)| m * (t - c))
                .sum();
            *o = self.center[i] + self.nu * mixed;
        }
    }

    fn extrinsic_noise(&mut self, _theta: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.noise);
    }

    fn contraction(&self) -> f64 {
        self.nu
    }
}
