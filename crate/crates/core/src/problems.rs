//! Benchmark MDPs: the five-state hard instance, the two-leaf non-sharp
//! instance, and a seeded random generator.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mdp::{solve, Mdp, QTable};
use crate::parse::{parse_kv, parse_num};

/// Action indices of the hard instance.
pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// Parameters of the hard instance: discount and the self-loop probability
/// `p = (4 gamma - 1) / (3 gamma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardMdpSpec {
    pub gamma: f64,
    pub p: f64,
}

impl HardMdpSpec {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.25 && gamma < 1.0) {
            return Err(invalid(format!(
                "hard MDP needs discount in (1/4, 1), got {gamma}"
            )));
        }
        Ok(Self {
            gamma,
            p: (4.0 * gamma - 1.0) / (3.0 * gamma),
        })
    }
}

/// The hard five-state, two-action MDP (states 1..5 map to indices 0..4).
///
/// From state 1, `L` moves to state 2 and `R` to state 3. States 2 and 3
/// stay put with probability `p` and otherwise fall into the absorbing
/// states 4 and 5 respectively. States 2 and 3 pay reward 1 for either
/// action; everything else pays 0.
pub fn hard_mdp(gamma: f64) -> Result<Mdp> {
    let HardMdpSpec { p, .. } = HardMdpSpec::new(gamma)?;
    let point = |j: usize| -> Vec<f64> { (0..5).map(|k| if k == j { 1.0 } else { 0.0 }).collect() };
    let split = |stay: usize, exit: usize| -> Vec<f64> {
        let mut row = vec![0.0; 5];
        row[stay] = p;
        row[exit] = 1.0 - p;
        row
    };
    let transitions = vec![
        vec![point(1), point(2)],
        vec![split(1, 3), split(1, 3)],
        vec![split(2, 4), split(2, 4)],
        vec![point(3), point(3)],
        vec![point(4), point(4)],
    ];
    let rewards = vec![
        vec![0.0, 0.0],
        vec![1.0, 1.0],
        vec![1.0, 1.0],
        vec![0.0, 0.0],
        vec![0.0, 0.0],
    ];
    Mdp::new(gamma, rewards, transitions)
}

/// Closed-form optimal Q-function of [`hard_mdp`].
pub fn hard_qstar(gamma: f64) -> Result<QTable> {
    HardMdpSpec::new(gamma)?;
    // 1 / (1 - p gamma) with p gamma = (4 gamma - 1) / 3
    let inner = 3.0 / (4.0 * (1.0 - gamma));
    let per_state = [gamma * inner, inner, inner, 0.0, 0.0];
    Ok(QTable::from_fn(5, 2, |s, _| per_state[s]))
}

/// Root state 0 moves to state 1 or 2 with probability 1/2 each; states 1
/// and 2 are absorbing with per-step rewards -1 and +1. One action.
pub fn nonsharp_mdp(gamma: f64) -> Result<Mdp> {
    Mdp::new(
        gamma,
        vec![vec![0.0], vec![-1.0], vec![1.0]],
        vec![
            vec![vec![0.0, 0.5, 0.5]],
            vec![vec![0.0, 1.0, 0.0]],
            vec![vec![0.0, 0.0, 1.0]],
        ],
    )
}

/// Closed-form optimal Q-function of [`nonsharp_mdp`].
pub fn nonsharp_qstar(gamma: f64) -> Result<QTable> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid(format!("discount {gamma} not in (0, 1)")));
    }
    let leaf = 1.0 / (1.0 - gamma);
    QTable::from_flat(3, 1, vec![0.0, -leaf, leaf])
}

/// Random MDP with Dirichlet(1, ..., 1) transition rows and rewards uniform
/// on `[-rmax, rmax]`. Bit-identical for a given seed.
pub fn random_mdp(
    n_states: usize,
    n_actions: usize,
    rmax: f64,
    gamma: f64,
    seed: u64,
) -> Result<Mdp> {
    if n_states == 0 || n_actions == 0 {
        return Err(invalid("random MDP needs at least one state and action"));
    }
    if !(rmax >= 0.0 && rmax.is_finite()) {
        return Err(invalid("rmax must be finite and >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = n_states * n_actions;
    let mut transitions = Vec::with_capacity(pairs * n_states);
    for _ in 0..pairs {
        let draws: Vec<f64> = (0..n_states).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = draws.iter().sum();
        transitions.extend(draws.iter().map(|d| d / total));
    }
    let rewards = (0..pairs)
        .map(|_| {
            if rmax == 0.0 {
                0.0
            } else {
                rng.random_range(-rmax..=rmax)
            }
        })
        .collect();
    Mdp::from_flat(n_states, n_actions, gamma, rewards, transitions)
}

/// A named benchmark problem, parsed from strings such as
/// `hard:gamma=0.75`, `nonsharp:gamma=0.9` or
/// `random:n=20,m=4,rmax=1,gamma=0.9,seed=7`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ProblemSpec {
    Hard {
        gamma: f64,
    },
    NonSharp {
        gamma: f64,
    },
    Random {
        n: usize,
        m: usize,
        rmax: f64,
        gamma: f64,
        seed: u64,
    },
}

impl ProblemSpec {
    pub fn gamma(&self) -> f64 {
        match *self {
            Self::Hard { gamma } | Self::NonSharp { gamma } | Self::Random { gamma, .. } => gamma,
        }
    }

    /// Same problem family at another discount.
    pub fn with_gamma(&self, gamma: f64) -> Self {
        let mut out = *self;
        match &mut out {
            Self::Hard { gamma: g } | Self::NonSharp { gamma: g } | Self::Random { gamma: g, .. } => {
                *g = gamma
            }
        }
        out
    }

    pub fn build(&self) -> Result<Mdp> {
        match *self {
            Self::Hard { gamma } => hard_mdp(gamma),
            Self::NonSharp { gamma } => nonsharp_mdp(gamma),
            Self::Random {
                n,
                m,
                rmax,
                gamma,
                seed,
            } => random_mdp(n, m, rmax, gamma, seed),
        }
    }

    /// Optimal Q-function: closed form where one exists, value iteration
    /// otherwise.
    pub fn qstar(&self, mdp: &Mdp) -> Result<QTable> {
        match *self {
            Self::Hard { gamma } => hard_qstar(gamma),
            Self::NonSharp { gamma } => nonsharp_qstar(gamma),
            Self::Random { .. } => solve(mdp),
        }
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Hard { gamma } => write!(f, "hard:gamma={gamma}"),
            Self::NonSharp { gamma } => write!(f, "nonsharp:gamma={gamma}"),
            Self::Random {
                n,
                m,
                rmax,
                gamma,
                seed,
            } => write!(f, "random:n={n},m={m},rmax={rmax},gamma={gamma},seed={seed}"),
        }
    }
}

impl FromStr for ProblemSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        const WHAT: &str = "problem";
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let kv = parse_kv(WHAT, s, args)?;
        let get = |key: &str| -> Result<&str> {
            kv.get(key).copied().ok_or_else(|| Error::Parse {
                what: WHAT,
                input: s.to_string(),
                reason: format!("missing `{key}`"),
            })
        };
        let allow = |keys: &[&str]| -> Result<()> {
            match kv.keys().find(|k| !keys.contains(k)) {
                Some(k) => Err(Error::Parse {
                    what: WHAT,
                    input: s.to_string(),
                    reason: format!("unknown key `{k}`"),
                }),
                None => Ok(()),
            }
        };
        let spec = match name.trim() {
            "hard" => {
                allow(&["gamma"])?;
                Self::Hard {
                    gamma: parse_num(WHAT, s, get("gamma")?)?,
                }
            }
            "nonsharp" => {
                allow(&["gamma"])?;
                Self::NonSharp {
                    gamma: parse_num(WHAT, s, get("gamma")?)?,
                }
            }
            "random" => {
                allow(&["n", "m", "rmax", "gamma", "seed"])?;
                Self::Random {
                    n: parse_num(WHAT, s, get("n")?)?,
                    m: parse_num(WHAT, s, get("m")?)?,
                    rmax: parse_num(WHAT, s, get("rmax")?)?,
                    gamma: parse_num(WHAT, s, get("gamma")?)?,
                    seed: parse_num(WHAT, s, get("seed")?)?,
                }
            }
            other => {
                return Err(Error::Parse {
                    what: WHAT,
                    input: s.to_string(),
                    reason: format!("unknown problem `{other}`"),
                })
            }
        };
        Ok(spec)
    }
}

impl TryFrom<String> for ProblemSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ProblemSpec> for String {
    fn from(p: ProblemSpec) -> Self {
        p.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{bellman_apply, noise_std, span_seminorm, worst_case_bounds};

    #[test]
    fn hard_p_values() {
        assert!((HardMdpSpec::new(0.75).unwrap().p - 8.0 / 9.0).abs() < 1e-15);
        assert!((HardMdpSpec::new(0.5).unwrap().p - 2.0 / 3.0).abs() < 1e-15);
        assert!(HardMdpSpec::new(0.25).is_err());
        assert!(HardMdpSpec::new(1.0).is_err());
        assert!(hard_mdp(0.2).is_err());
        assert!(hard_qstar(0.2).is_err());
    }

    #[test]
    fn hard_rows_are_exactly_stochastic() {
        for gamma in [0.3, 0.5, 0.75, 0.9, 0.99] {
            let mdp = hard_mdp(gamma).unwrap();
            for s in 0..5 {
                for a in 0..2 {
                    assert_eq!(mdp.row(s, a).iter().sum::<f64>(), 1.0);
                }
            }
        }
    }

    #[test]
    fn hard_layout() {
        let mdp = hard_mdp(0.75).unwrap();
        assert_eq!(mdp.row(0, LEFT)[1], 1.0);
        assert_eq!(mdp.row(0, RIGHT)[2], 1.0);
        assert_eq!(mdp.row(3, LEFT)[3], 1.0);
        assert_eq!(mdp.row(4, RIGHT)[4], 1.0);
        assert_eq!(mdp.reward(1, RIGHT), 1.0);
        assert_eq!(mdp.reward(0, LEFT), 0.0);
    }

    #[test]
    fn hard_qstar_closed_form() {
        let qs = hard_qstar(0.75).unwrap();
        let expect = [2.25, 3.0, 3.0, 0.0, 0.0];
        for (s, e) in expect.iter().enumerate() {
            assert!((qs.get(s, LEFT) - e).abs() < 1e-12);
            assert!((qs.get(s, RIGHT) - e).abs() < 1e-12);
        }
        for gamma in [0.3, 0.5, 0.75, 0.9] {
            let mdp = hard_mdp(gamma).unwrap();
            let qs = hard_qstar(gamma).unwrap();
            assert!(solve(&mdp).unwrap().linf_distance(&qs) <= 1e-10);
            assert!(bellman_apply(&mdp, &qs).unwrap().linf_distance(&qs) <= 1e-10);
            let span = span_seminorm(&qs);
            assert!((span - 0.75 / (1.0 - gamma)).abs() <= 1e-12 * span);
            // saturates the worst-case span up to a constant
            assert!(span >= 0.37 * worst_case_bounds(gamma, 1.0).unwrap().span_sup_from_qstar);
        }
    }

    #[test]
    fn hard_noise_concentrates_on_states_two_and_three() {
        for gamma in [0.5, 0.75, 0.95] {
            let mdp = hard_mdp(gamma).unwrap();
            let sd = noise_std(&mdp, &hard_qstar(gamma).unwrap()).unwrap();
            let (argmax, _) = sd
                .table
                .as_slice()
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, v)| if *v > best.1 { (i, *v) } else { best });
            assert!([1, 2].contains(&(argmax / 2)));
            for s in [0, 3, 4] {
                assert_eq!(sd.table.get(s, LEFT), 0.0);
            }
        }
    }

    #[test]
    fn nonsharp_values() {
        for gamma in [0.3, 0.5, 0.9] {
            let mdp = nonsharp_mdp(gamma).unwrap();
            let qs = solve(&mdp).unwrap();
            let leaf = 1.0 / (1.0 - gamma);
            assert!((qs.get(1, 0) + leaf).abs() < 1e-9);
            assert!((qs.get(2, 0) - leaf).abs() < 1e-9);
            assert!(qs.get(0, 0).abs() < 1e-9);
            assert!(nonsharp_qstar(gamma).unwrap().linf_distance(&qs) < 1e-9);
        }
        let var = |g: f64| {
            let sd = noise_std(&nonsharp_mdp(g).unwrap(), &nonsharp_qstar(g).unwrap()).unwrap();
            sd.table.get(0, 0).powi(2)
        };
        let ratio = var(0.9) / var(0.8);
        assert!((ratio / 4.0 - 1.0).abs() <= 0.3, "ratio {ratio}");
    }

    #[test]
    fn random_mdp_is_deterministic() {
        let a = random_mdp(6, 3, 1.0, 0.9, 7).unwrap();
        let b = random_mdp(6, 3, 1.0, 0.9, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, random_mdp(6, 3, 1.0, 0.9, 8).unwrap());
        assert!(a.reward_bound() <= 1.0);
    }

    #[test]
    fn single_state_random_mdp() {
        let mdp = random_mdp(1, 1, 1.0, 0.6, 3).unwrap();
        assert_eq!(mdp.row(0, 0), &[1.0]);
        let qs = solve(&mdp).unwrap();
        assert!((qs.get(0, 0) - mdp.reward(0, 0) / 0.4).abs() < 1e-10);
    }

    #[test]
    fn spec_strings() {
        let p: ProblemSpec = "hard:gamma=0.75".parse().unwrap();
        assert_eq!(p, ProblemSpec::Hard { gamma: 0.75 });
        let r: ProblemSpec = "random:n=20,m=4,rmax=1,gamma=0.9,seed=7".parse().unwrap();
        assert_eq!(
            r,
            ProblemSpec::Random {
                n: 20,
                m: 4,
                rmax: 1.0,
                gamma: 0.9,
                seed: 7
            }
        );
        assert_eq!(r.to_string().parse::<ProblemSpec>().unwrap(), r);
        assert_eq!("nonsharp:gamma=0.9".parse::<ProblemSpec>().unwrap().gamma(), 0.9);
        assert!("hard".parse::<ProblemSpec>().is_err());
        assert!("hard:gamma=x".parse::<ProblemSpec>().is_err());
        assert!("hard:gamma=0.5,foo=1".parse::<ProblemSpec>().is_err());
        assert!("maze:gamma=0.5".parse::<ProblemSpec>().is_err());
        assert_eq!(p.with_gamma(0.6), ProblemSpec::Hard { gamma: 0.6 });
    }
}
