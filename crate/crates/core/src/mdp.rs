//! Finite discounted MDPs and the Bellman operators acting on Q-tables.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, invalid, Error, Result};

const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// A finite MDP with `n` states, `m` actions, row-stochastic transitions,
/// bounded rewards and a discount in `(0, 1)`.
///
/// Tables are stored flat: pair `(s, a)` has index `s * m + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    num_states: usize,
    num_actions: usize,
    discount: f64,
    rewards: Vec<f64>,
    transitions: Vec<f64>,
    support: Vec<Support>,
}

/// Nonzero part of one transition row, with the running CDF for sampling.
#[derive(Debug, Clone, PartialEq)]
struct Support {
    states: Vec<usize>,
    cdf: Vec<f64>,
}

/// On-disk JSON layout of an MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub discount: f64,
    pub rewards: Vec<Vec<f64>>,
    pub transitions: Vec<Vec<Vec<f64>>>,
}

impl Mdp {
    /// Builds and validates an MDP from nested tables `rewards[s][a]` and
    /// `transitions[s][a][s']`.
    pub fn new(
        discount: f64,
        rewards: Vec<Vec<f64>>,
        transitions: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let n = rewards.len();
        if n == 0 {
            return Err(invalid("MDP needs at least one state"));
        }
        let m = rewards[0].len();
        if m == 0 {
            return Err(invalid("MDP needs at least one action"));
        }
        check_dims(n, transitions.len())?;
        let mut flat_r = Vec::with_capacity(n * m);
        let mut flat_p = Vec::with_capacity(n * m * n);
        for (s, (rs, ps)) in rewards.iter().zip(&transitions).enumerate() {
            check_dims(m, rs.len())?;
            check_dims(m, ps.len())?;
            flat_r.extend_from_slice(rs);
            for (a, row) in ps.iter().enumerate() {
                if row.len() != n {
                    return Err(invalid(format!(
                        "transition row ({s},{a}) has {} entries, expected {n}",
                        row.len()
                    )));
                }
                flat_p.extend_from_slice(row);
            }
        }
        Self::from_flat(n, m, discount, flat_r, flat_p)
    }

    /// Builds from flat row-major tables.
    pub fn from_flat(
        num_states: usize,
        num_actions: usize,
        discount: f64,
        rewards: Vec<f64>,
        transitions: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(invalid("MDP needs at least one state and one action"));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(invalid(format!("discount {discount} not in (0, 1)")));
        }
        let pairs = num_states * num_actions;
        check_dims(pairs, rewards.len())?;
        check_dims(pairs * num_states, transitions.len())?;
        if let Some(i) = rewards.iter().position(|r| !r.is_finite()) {
            return Err(invalid(format!("reward {i} is not finite")));
        }
        let mut support = Vec::with_capacity(pairs);
        for (i, row) in transitions.chunks_exact(num_states).enumerate() {
            if let Some(j) = row.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(invalid(format!(
                    "transition ({},{}) -> {j} is not a probability",
                    i / num_actions,
                    i % num_actions
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(invalid(format!(
                    "transition row ({},{}) sums to {sum}",
                    i / num_actions,
                    i % num_actions
                )));
            }
            let mut states = Vec::new();
            let mut cdf = Vec::new();
            let mut acc = 0.0;
            for (j, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    acc += p;
                    states.push(j);
                    cdf.push(acc);
                }
            }
            support.push(Support { states, cdf });
        }
        Ok(Self {
            num_states,
            num_actions,
            discount,
            rewards,
            transitions,
            support,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Number of state-action pairs `D = |S| * |A|`.
    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.num_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// Transition row `P[s][a][.]`.
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let i = s * self.num_actions + a;
        &self.transitions[i * self.num_states..(i + 1) * self.num_states]
    }

    /// Largest absolute reward.
    pub fn reward_bound(&self) -> f64 {
        self.rewards.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Each transition row is a point mass.
    pub fn is_deterministic(&self) -> bool {
        self.support.iter().all(|s| s.states.len() == 1)
    }

    /// Maps a uniform draw `u` in `[0, 1)` to a next state of pair `pair`
    /// by inverting the row CDF.
    #[inline]
    pub fn sample_next(&self, pair: usize, u: f64) -> usize {
        let sup = &self.support[pair];
        let j = sup.cdf.partition_point(|c| *c <= u);
        sup.states[j.min(sup.states.len() - 1)]
    }

    pub fn to_file(&self) -> MdpFile {
        let (n, m) = (self.num_states, self.num_actions);
        MdpFile {
            num_states: n,
            num_actions: m,
            discount: self.discount,
            rewards: self.rewards.chunks(m).map(<[f64]>::to_vec).collect(),
            transitions: (0..n)
                .map(|s| (0..m).map(|a| self.row(s, a).to_vec()).collect())
                .collect(),
        }
    }

    pub fn from_file(file: MdpFile) -> Result<Self> {
        let mdp = Self::new(file.discount, file.rewards, file.transitions)?;
        check_dims(file.num_states, mdp.num_states)?;
        check_dims(file.num_actions, mdp.num_actions)?;
        Ok(mdp)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    fn check_table(&self, theta: &QTable) -> Result<()> {
        check_dims(self.num_states, theta.num_states)?;
        check_dims(self.num_actions, theta.num_actions)
    }
}

/// A real-valued table over state-action pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            values: vec![0.0; num_states * num_actions],
        }
    }

    pub fn zeros_like(mdp: &Mdp) -> Self {
        Self::zeros(mdp.num_states, mdp.num_actions)
    }

    pub fn from_flat(num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(invalid("Q-table needs at least one state and one action"));
        }
        check_dims(num_states * num_actions, values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("Q-table entry {i} is not finite")));
        }
        Ok(Self {
            num_states,
            num_actions,
            values,
        })
    }

    /// Table with `values[s][a] = f(s, a)`.
    pub fn from_fn(num_states: usize, num_actions: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let values = (0..num_states)
            .flat_map(|s| (0..num_actions).map(move |a| (s, a)))
            .map(|(s, a)| f(s, a))
            .collect();
        Self {
            num_states,
            num_actions,
            values,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `max_a theta(s, a)`.
    pub fn state_value(&self, s: usize) -> f64 {
        max_of(&self.values[s * self.num_actions..(s + 1) * self.num_actions])
    }

    /// Greedy action at `s`; ties go to the lowest action index.
    pub fn greedy_action(&self, s: usize) -> usize {
        let row = &self.values[s * self.num_actions..(s + 1) * self.num_actions];
        let mut best = 0;
        for (a, v) in row.iter().enumerate().skip(1) {
            if *v > row[best] {
                best = a;
            }
        }
        best
    }

    pub fn linf_norm(&self) -> f64 {
        linf(&self.values)
    }

    pub fn linf_distance(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn max(&self) -> f64 {
        max_of(&self.values)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[inline]
pub(crate) fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[inline]
pub(crate) fn linf(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// One next-state draw per state-action pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionSample {
    pub next_states: Vec<usize>,
}

impl TransitionSample {
    pub fn new(next_states: Vec<usize>) -> Self {
        Self { next_states }
    }

    fn validate(&self, mdp: &Mdp) -> Result<()> {
        check_dims(mdp.num_pairs(), self.next_states.len())?;
        match self.next_states.iter().find(|&&j| j >= mdp.num_states) {
            Some(&index) => Err(Error::SampleOutOfRange {
                index,
                num_states: mdp.num_states,
            }),
            None => Ok(()),
        }
    }
}

pub(crate) fn state_values_into(mdp: &Mdp, theta: &[f64], out: &mut [f64]) {
    let m = mdp.num_actions;
    for (s, v) in out.iter_mut().enumerate() {
        *v = max_of(&theta[s * m..(s + 1) * m]);
    }
}

pub(crate) fn bellman_into(mdp: &Mdp, values: &[f64], out: &mut [f64]) {
    let g = mdp.discount;
    for (i, o) in out.iter_mut().enumerate() {
        let row = &mdp.transitions[i * mdp.num_states..(i + 1) * mdp.num_states];
        let ev: f64 = row.iter().zip(values).map(|(p, v)| p * v).sum();
        *o = mdp.rewards[i] + g * ev;
    }
}

pub(crate) fn empirical_bellman_into(mdp: &Mdp, values: &[f64], next: &[usize], out: &mut [f64]) {
    let g = mdp.discount;
    for ((o, r), &j) in out.iter_mut().zip(&mdp.rewards).zip(next) {
        *o = r + g * values[j];
    }
}

/// Population Bellman operator:
/// `B(theta)(s,a) = r(s,a) + gamma * E_{s'~P(s,a)} max_a' theta(s',a')`.
pub fn bellman_apply(mdp: &Mdp, theta: &QTable) -> Result<QTable> {
    mdp.check_table(theta)?;
    let mut values = vec![0.0; mdp.num_states];
    state_values_into(mdp, &theta.values, &mut values);
    let mut out = QTable::zeros_like(mdp);
    bellman_into(mdp, &values, &mut out.values);
    Ok(out)
}

/// Empirical Bellman operator for one synchronous sample:
/// `r(s,a) + gamma * max_a' theta(x(s,a), a')`.
pub fn empirical_bellman_apply(
    mdp: &Mdp,
    theta: &QTable,
    sample: &TransitionSample,
) -> Result<QTable> {
    mdp.check_table(theta)?;
    sample.validate(mdp)?;
    let mut values = vec![0.0; mdp.num_states];
    state_values_into(mdp, &theta.values, &mut values);
    let mut out = QTable::zeros_like(mdp);
    empirical_bellman_into(mdp, &values, &sample.next_states, &mut out.values);
    Ok(out)
}

/// Default residual tolerance for the fixed-point oracle.
pub const DEFAULT_VI_TOLERANCE: f64 = 1e-12;

/// Value iteration from `theta = 0` until `||B(theta) - theta||_inf <= tol`.
///
/// By contraction the returned table is within `tol / (1 - gamma)` of the
/// true fixed point.
pub fn value_iteration(mdp: &Mdp, tol: f64, max_iters: usize) -> Result<QTable> {
    if !(tol > 0.0) {
        return Err(invalid("value iteration tolerance must be > 0"));
    }
    let mut theta = QTable::zeros_like(mdp);
    let mut next = theta.clone();
    let mut values = vec![0.0; mdp.num_states];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        state_values_into(mdp, &theta.values, &mut values);
        bellman_into(mdp, &values, &mut next.values);
        residual = next.linf_distance(&theta);
        if residual <= tol {
            // Return the iterate whose residual was measured.
            return Ok(theta);
        }
        std::mem::swap(&mut theta, &mut next);
    }
    Err(Error::NotConverged {
        iters: max_iters,
        residual,
    })
}

/// Value iteration with the default tolerance and a budget large enough
/// for any discount below `1 - 1e-4`.
pub fn solve(mdp: &Mdp) -> Result<QTable> {
    value_iteration(mdp, DEFAULT_VI_TOLERANCE, 1_000_000)
}

/// Span seminorm: largest entry minus smallest entry.
pub fn span_seminorm(theta: &QTable) -> f64 {
    theta.max() - theta.min()
}

/// Entrywise noise standard deviations of the empirical Bellman operator at
/// `theta_star`, together with their maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseStd {
    pub table: QTable,
    pub max: f64,
}

/// `sigma(s,a) = gamma * sd_{s'~P(s,a)}[ max_a' theta*(s',a') ]`, using the
/// two-pass variance formula.
pub fn noise_std(mdp: &Mdp, theta_star: &QTable) -> Result<NoiseStd> {
    mdp.check_table(theta_star)?;
    let mut values = vec![0.0; mdp.num_states];
    state_values_into(mdp, &theta_star.values, &mut values);
    let g = mdp.discount;
    let mut table = QTable::zeros_like(mdp);
    for (i, out) in table.values.iter_mut().enumerate() {
        let row = &mdp.transitions[i * mdp.num_states..(i + 1) * mdp.num_states];
        let mean: f64 = row.iter().zip(&values).map(|(p, v)| p * v).sum();
        let var: f64 = row
            .iter()
            .zip(&values)
            .map(|(p, v)| p * (v - mean) * (v - mean))
            .sum();
        *out = g * var.max(0.0).sqrt();
    }
    let max = table.max();
    Ok(NoiseStd { table, max })
}

/// Uniform difficulty bounds over all MDPs with `|r| <= rmax`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorstCaseBounds {
    /// `rmax / (1 - gamma)`, the sup-norm bound on `theta*`.
    pub qstar_sup: f64,
    /// `2 gamma rmax / (1 - gamma)`, the span bound as printed in the lemma.
    pub span_sup: f64,
    /// `2 rmax / (1 - gamma)`, twice `qstar_sup`; the span bound that
    /// follows from `span <= 2 ||theta*||_inf`.
    pub span_sup_from_qstar: f64,
    /// `rmax / (1 - gamma)`, the lemma's standard-deviation bound.
    pub sigma_sup: f64,
    /// `2 gamma rmax / (1 - gamma)`, the looser bound from the variance
    /// estimate `4 gamma^2 ||theta*||^2`.
    pub sigma_sup_loose: f64,
}

pub fn worst_case_bounds(gamma: f64, rmax: f64) -> Result<WorstCaseBounds> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid(format!("discount {gamma} not in (0, 1)")));
    }
    if !(rmax >= 0.0) {
        return Err(invalid("rmax must be >= 0"));
    }
    let q = rmax / (1.0 - gamma);
    Ok(WorstCaseBounds {
        qstar_sup: q,
        span_sup: 2.0 * gamma * q,
        span_sup_from_qstar: 2.0 * q,
        sigma_sup: q,
        sigma_sup_loose: 2.0 * gamma * q,
    })
}
