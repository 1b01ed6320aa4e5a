//! Synchronous tabular Q-learning as an instance of the SA recursion.
//!
//! Every iteration draws one next state for every state-action pair and
//! applies the empirical Bellman operator. The operator is monotone and
//! `gamma`-quasi-contractive in the sup norm, so `nu_k = gamma`.

use serde::Serialize;

use crate::cone::{GaugeElement, GaugeVector};
use crate::error::{invalid, Result};
use crate::mdp::{
    bellman_into, empirical_bellman_into, state_values_into, Mdp, QTable, TransitionSample,
};
use crate::rng::SampleStream;
use crate::sa::{run_sa, RunOptions, SaOperator, SaTrace};
use crate::schedules::StepsizeSchedule;

/// How the Q-learning update is split into operator and extrinsic noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Decomposition {
    /// `H_k = B̂_k`, `eps_k = 0`.
    #[default]
    EmpiricalOperator,
    /// `H_k = B`, `eps_k = B̂_k(theta_k) - B(theta_k)`.
    PopulationPlusNoise,
}

/// The random operator sequence of synchronous Q-learning.
#[derive(Debug, Clone)]
pub struct QLearningOperator<'a> {
    mdp: &'a Mdp,
    stream: SampleStream,
    decomposition: Decomposition,
    next: Vec<usize>,
    values: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> QLearningOperator<'a> {
    pub fn new(mdp: &'a Mdp, stream: SampleStream, decomposition: Decomposition) -> Self {
        Self {
            mdp,
            stream,
            decomposition,
            next: vec![0; mdp.num_pairs()],
            values: vec![0.0; mdp.num_states()],
            scratch: vec![0.0; mdp.num_pairs()],
        }
    }

    /// Next states drawn for the current iteration.
    pub fn sample(&self) -> TransitionSample {
        TransitionSample::new(self.next.clone())
    }
}

impl SaOperator for QLearningOperator<'_> {
    fn dim(&self) -> usize {
        self.mdp.num_pairs()
    }

    fn draw(&mut self, _k: u64) {
        for (pair, n) in self.next.iter_mut().enumerate() {
            *n = self.mdp.sample_next(pair, self.stream.uniform());
        }
    }

    fn apply(&mut self, theta: &[f64], out: &mut [f64]) {
        state_values_into(self.mdp, theta, &mut self.values);
        match self.decomposition {
            Decomposition::EmpiricalOperator => {
                empirical_bellman_into(self.mdp, &self.values, &self.next, out)
            }
            Decomposition::PopulationPlusNoise => bellman_into(self.mdp, &self.values, out),
        }
    }

    fn extrinsic_noise(&mut self, theta: &[f64], out: &mut [f64]) {
        match self.decomposition {
            Decomposition::EmpiricalOperator => out.fill(0.0),
            Decomposition::PopulationPlusNoise => {
                state_values_into(self.mdp, theta, &mut self.values);
                empirical_bellman_into(self.mdp, &self.values, &self.next, out);
                bellman_into(self.mdp, &self.values, &mut self.scratch);
                for (o, b) in out.iter_mut().zip(&self.scratch) {
                    *o -= b;
                }
            }
        }
    }

    fn contraction(&self) -> f64 {
        self.mdp.discount()
    }
}

#[derive(Debug, Clone)]
pub struct QlearnConfig {
    pub mdp: Mdp,
    pub schedule: StepsizeSchedule,
    pub iters: u64,
    pub initial: QTable,
    pub seed: u64,
    /// Stream id within `seed`; independent trials use distinct values.
    pub trial: u64,
}

impl QlearnConfig {
    /// Zero initialization, trial 0.
    pub fn new(mdp: Mdp, schedule: StepsizeSchedule, iters: u64, seed: u64) -> Self {
        let initial = QTable::zeros_like(&mdp);
        Self {
            mdp,
            schedule,
            iters,
            initial,
            seed,
            trial: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(invalid("iteration count must be positive"));
        }
        if self.initial.num_states() != self.mdp.num_states()
            || self.initial.num_actions() != self.mdp.num_actions()
        {
            return Err(invalid("initial table does not match the MDP"));
        }
        self.schedule.validate()?;
        self.schedule.stepsize_at(1)?;
        Ok(())
    }
}

/// Runs synchronous Q-learning and tracks the error and sandwich sequences
/// against `theta_star`.
pub fn q_learning_run(cfg: &QlearnConfig, theta_star: &QTable, check_sandwich: bool) -> Result<SaTrace> {
    q_learning_run_with(cfg, theta_star, check_sandwich, Decomposition::EmpiricalOperator)
}

/// [`q_learning_run`] with an explicit operator/noise split.
pub fn q_learning_run_with(
    cfg: &QlearnConfig,
    theta_star: &QTable,
    check_sandwich: bool,
    decomposition: Decomposition,
) -> Result<SaTrace> {
    cfg.validate()?;
    let dim = cfg.mdp.num_pairs();
    if theta_star.as_slice().len() != dim {
        return Err(invalid("theta* does not match the MDP"));
    }
    let mut op = QLearningOperator::new(
        &cfg.mdp,
        SampleStream::new(cfg.seed, cfg.trial),
        decomposition,
    );
    let opts = RunOptions {
        check_sandwich,
        ..RunOptions::default()
    };
    run_sa(
        &GaugeVector::new(cfg.initial.as_slice().to_vec())?,
        &GaugeVector::new(theta_star.as_slice().to_vec())?,
        &mut op,
        &cfg.schedule,
        cfg.iters,
        &GaugeElement::ones(dim),
        &opts,
    )
}

/// `B̂(theta*; sample) - B(theta*)`.
pub fn effective_noise(mdp: &Mdp, theta_star: &QTable, sample: &TransitionSample) -> Result<QTable> {
    let emp = crate::mdp::empirical_bellman_apply(mdp, theta_star, sample)?;
    let pop = crate::mdp::bellman_apply(mdp, theta_star)?;
    let values = emp
        .as_slice()
        .iter()
        .zip(pop.as_slice())
        .map(|(a, b)| a - b)
        .collect();
    QTable::from_flat(mdp.num_states(), mdp.num_actions(), values)
}

/// Sup-norm error `||theta_k - theta*||_inf` at the iterates listed in
/// `record_at` (sorted, within `1..=iters + 1`), without sandwich tracking.
///
/// Performs the same floating-point operations in the same order as
/// [`q_learning_run`], so the errors agree bit for bit.
pub fn error_path(
    mdp: &Mdp,
    schedule: &StepsizeSchedule,
    iters: u64,
    initial: &QTable,
    theta_star: &QTable,
    mut stream: SampleStream,
    record_at: &[u64],
) -> Result<Vec<f64>> {
    let dim = mdp.num_pairs();
    if initial.as_slice().len() != dim || theta_star.as_slice().len() != dim {
        return Err(invalid("table does not match the MDP"));
    }
    if record_at.windows(2).any(|w| w[0] >= w[1])
        || record_at.first().is_some_and(|&k| k < 1)
        || record_at.last().is_some_and(|&k| k > iters + 1)
    {
        return Err(invalid("record points must be strictly increasing within 1..=iters+1"));
    }
    schedule.validate()?;
    let star = theta_star.as_slice();
    let gamma = mdp.discount();
    let rewards = mdp.rewards();
    let mut theta = initial.as_slice().to_vec();
    let mut values = vec![0.0; mdp.num_states()];
    let mut out = Vec::with_capacity(record_at.len());
    let mut next_record = record_at.iter().peekable();
    let err = |theta: &[f64]| -> f64 {
        theta
            .iter()
            .zip(star)
            .fold(0.0_f64, |m, (t, s)| m.max((t - s).abs()))
    };
    if next_record.next_if_eq(&&1).is_some() {
        out.push(err(&theta));
    }
    for k in 1..=iters {
        let alpha = schedule.stepsize_at(k)?;
        let keep = 1.0 - alpha;
        state_values_into(mdp, &theta, &mut values);
        for (pair, t) in theta.iter_mut().enumerate() {
            let j = mdp.sample_next(pair, stream.uniform());
            let h = rewards[pair] + gamma * values[j];
            *t = keep * *t + alpha * (h + 0.0);
        }
        if next_record.next_if_eq(&&(k + 1)).is_some() {
            out.push(err(&theta));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{noise_std, solve, span_seminorm};
    use crate::problems::{hard_mdp, hard_qstar, random_mdp};

    fn deterministic_mdp() -> Mdp {
        Mdp::new(
            0.8,
            vec![vec![1.0, 0.0], vec![0.5, -1.0]],
            vec![
                vec![vec![0.0, 1.0], vec![1.0, 0.0]],
                vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            ],
        )
        .unwrap()
    }

    #[test]
    fn deterministic_mdp_has_no_noise() {
        let mdp = deterministic_mdp();
        let star = solve(&mdp).unwrap();
        let cfg = QlearnConfig::new(mdp.clone(), StepsizeSchedule::shifted_linear(0.8).unwrap(), 300, 1);
        let trace = q_learning_run(&cfg, &star, true).unwrap();
        assert_eq!(trace.violations, 0);
        // theta* is exact only up to the value-iteration residual
        for r in &trace.records {
            assert!(r.p_norm <= 1e-10);
            assert!(r.error <= r.d + 1e-9);
        }
        let sample = TransitionSample::new(vec![1, 0, 1, 0]);
        let w = effective_noise(&mdp, &star, &sample).unwrap();
        assert!(w.linf_norm() <= 1e-12);
    }

    #[test]
    fn starting_at_the_fixed_point_leaves_only_noise_terms() {
        let mdp = hard_mdp(0.75).unwrap();
        let star = hard_qstar(0.75).unwrap();
        let mut cfg = QlearnConfig::new(mdp, StepsizeSchedule::polynomial(0.7).unwrap(), 2000, 5);
        cfg.initial = star.clone();
        let trace = q_learning_run(&cfg, &star, true).unwrap();
        assert_eq!(trace.violations, 0);
        for r in &trace.records {
            assert_eq!(r.d, 0.0);
            assert!(r.error <= r.a + r.p_norm + 1e-9);
        }
    }

    #[test]
    fn decompositions_produce_the_same_iterates() {
        let mdp = random_mdp(4, 3, 1.0, 0.85, 11).unwrap();
        let star = solve(&mdp).unwrap();
        let cfg = QlearnConfig::new(mdp, StepsizeSchedule::shifted_linear(0.85).unwrap(), 500, 3);
        let a = q_learning_run_with(&cfg, &star, true, Decomposition::EmpiricalOperator).unwrap();
        let b = q_learning_run_with(&cfg, &star, true, Decomposition::PopulationPlusNoise).unwrap();
        assert_eq!(a.violations, 0);
        assert_eq!(b.violations, 0);
        for (x, y) in a.records.iter().zip(&b.records) {
            assert!((x.error - y.error).abs() <= 1e-12, "iter {}", x.iter);
        }
    }

    #[test]
    fn fast_error_path_matches_full_run() {
        let mdp = hard_mdp(0.75).unwrap();
        let star = hard_qstar(0.75).unwrap();
        let sched = StepsizeSchedule::shifted_linear(0.75).unwrap();
        let mut cfg = QlearnConfig::new(mdp.clone(), sched, 1000, 9);
        cfg.trial = 4;
        let full = q_learning_run(&cfg, &star, false).unwrap();
        let at: Vec<u64> = vec![1, 2, 10, 500, 1001];
        let fast = error_path(&mdp, &sched, 1000, &cfg.initial, &star, SampleStream::new(9, 4), &at).unwrap();
        for (k, e) in at.iter().zip(&fast) {
            assert_eq!(full.records[*k as usize - 1].error.to_bits(), e.to_bits());
        }
        assert!(error_path(&mdp, &sched, 10, &cfg.initial, &star, SampleStream::new(9, 4), &[12]).is_err());
    }

    #[test]
    fn effective_noise_is_centered() {
        let mdp = hard_mdp(0.75).unwrap();
        let star = hard_qstar(0.75).unwrap();
        let sigma = noise_std(&mdp, &star).unwrap();
        let n = 100_000;
        let mut stream = SampleStream::new(1, 0);
        let mut sums = vec![0.0; mdp.num_pairs()];
        for _ in 0..n {
            let next = (0..mdp.num_pairs())
                .map(|p| mdp.sample_next(p, stream.uniform()))
                .collect();
            let w = effective_noise(&mdp, &star, &TransitionSample::new(next)).unwrap();
            for (s, x) in sums.iter_mut().zip(w.as_slice()) {
                *s += x;
            }
        }
        for (i, s) in sums.iter().enumerate() {
            let mean = s / n as f64;
            let tol = 4.0 * sigma.table.as_slice()[i] / (n as f64).sqrt();
            assert!(mean.abs() <= tol.max(1e-12), "pair {i}: {mean} vs {tol}");
        }
    }

    /// Enumerates every next-state outcome of every pair: the noise is
    /// bounded by `gamma * span(theta*)` and its variance is `sigma^2`.
    fn exhaustive_noise_check(mdp: &Mdp, star: &QTable) {
        let sigma = noise_std(mdp, star).unwrap();
        let bound = mdp.discount() * span_seminorm(star) + 1e-12;
        let n = mdp.num_states();
        for pair in 0..mdp.num_pairs() {
            let (s, a) = (pair / mdp.num_actions(), pair % mdp.num_actions());
            let row = mdp.row(s, a);
            let mut var = 0.0;
            for (j, &p) in row.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let mut next = vec![0; mdp.num_pairs()];
                next[pair] = j;
                let w = effective_noise(mdp, star, &TransitionSample::new(next)).unwrap();
                let x = w.as_slice()[pair];
                assert!(x.abs() <= bound, "pair {pair}, next {j}: {x} > {bound}");
                var += p * x * x;
            }
            let expected = sigma.table.as_slice()[pair].powi(2);
            assert!((var - expected).abs() <= 1e-12, "pair {pair}: {var} vs {expected}");
            assert!(n > 0);
        }
    }

    #[test]
    fn exhaustive_noise_bounds_and_variance() {
        exhaustive_noise_check(&hard_mdp(0.75).unwrap(), &hard_qstar(0.75).unwrap());
        exhaustive_noise_check(&hard_mdp(0.9).unwrap(), &hard_qstar(0.9).unwrap());
        for seed in 0..5 {
            let mdp = random_mdp(4, 2, 1.0, 0.7, seed).unwrap();
            let star = solve(&mdp).unwrap();
            exhaustive_noise_check(&mdp, &star);
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mdp = hard_mdp(0.75).unwrap();
        let star = hard_qstar(0.75).unwrap();
        let cfg = QlearnConfig::new(mdp.clone(), StepsizeSchedule::rescaled_linear(0.75).unwrap(), 10, 0);
        assert!(q_learning_run(&cfg, &star, true).is_err());
        let cfg = QlearnConfig::new(mdp, StepsizeSchedule::polynomial(0.7).unwrap(), 0, 0);
        assert!(q_learning_run(&cfg, &star, true).is_err());
    }
}
