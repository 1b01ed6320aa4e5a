//! Small statistics toolkit: compensated sums, trial summaries, ordinary
//! least squares and the Student-t tail.

use serde::Serialize;

use crate::error::{Error, Result};

/// Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Mean and standard error `sd / sqrt(n)`, summed in the order given.
/// Constant samples (including `n = 1`) give exactly their value and zero.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    if xs.iter().all(|x| *x == xs[0]) {
        return (xs[0], 0.0);
    }
    let mut s = CompensatedSum::default();
    xs.iter().for_each(|x| s.add(*x));
    let mean = s.value() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let mut ss = CompensatedSum::default();
    xs.iter().for_each(|x| ss.add((x - mean) * (x - mean)));
    let var = ss.value() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// OLS fit of `y = intercept + slope x`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub n: usize,
    /// `None` with fewer than three points.
    pub slope_stderr: Option<f64>,
    pub r_squared: f64,
}

impl LinearFit {
    /// t statistic for `slope = null`. Infinite for a perfect fit that
    /// misses `null`, NaN for a perfect fit that hits it.
    pub fn t_stat(&self, null: f64) -> Option<f64> {
        self.slope_stderr.map(|se| (self.slope - null) / se)
    }

    /// Two-sided p-value for `slope = null` under the t distribution with
    /// `n - 2` degrees of freedom.
    pub fn p_value(&self, null: f64) -> Option<f64> {
        let t = self.t_stat(null)?;
        if t.is_nan() {
            return Some(1.0);
        }
        Some(student_t_two_sided(t, (self.n - 2) as f64))
    }
}

pub fn ols(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::DegenerateFit(format!("{n} points")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateFit("non-finite input".into()));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 {
        return Err(Error::DegenerateFit("all x values equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .sum();
    let slope_stderr = (n > 2).then(|| (rss / (nf - 2.0) / sxx).sqrt());
    let r_squared = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    Ok(LinearFit {
        slope,
        intercept,
        n,
        slope_stderr,
        r_squared,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::DegenerateFit("log-log fit needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    ols(&lx, &ly)
}

/// `P(|T| >= |t|)` for `T ~ t(df)`.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_beta(x, 0.5 * df, 0.5).clamp(0.0, 1.0)
}

/// Lanczos approximation (g = 7, n = 9) of `ln Gamma(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta `I_x(a, b)` by Lentz's continued fraction.
pub fn regularized_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(1.0 - x, b, a) / b
    }
}

fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};
    use statrs::function::gamma::ln_gamma as statrs_ln_gamma;

    #[test]
    fn ln_gamma_against_reference() {
        for &x in &[0.1, 0.5, 1.0, 1.5, 2.0, 3.7, 10.0, 57.3, 200.0] {
            assert_relative_eq!(ln_gamma(x), statrs_ln_gamma(x), epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn t_tail_against_reference() {
        for &df in &[1.0, 2.0, 3.0, 7.0, 30.0, 120.0] {
            let dist = StudentsT::new(0.0, 1.0, df).unwrap();
            for &t in &[0.0, 0.3, 1.0, 2.0, 3.5, 10.0, -2.5] {
                let expected = 2.0 * dist.cdf(-f64::abs(t));
                assert_relative_eq!(student_t_two_sided(t, df), expected, epsilon = 1e-12, max_relative = 1e-9);
            }
        }
        assert_eq!(student_t_two_sided(f64::INFINITY, 3.0), 0.0);
    }

    #[test]
    fn ols_exact_line_and_degenerate_inputs() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        let fit = ols(&x, &y).unwrap();
        assert_relative_eq!(fit.slope, -0.5, epsilon = 1e-14);
        assert_relative_eq!(fit.intercept, 3.0, epsilon = 1e-14);
        assert!(fit.slope_stderr.unwrap() < 1e-12);
        assert_eq!(fit.p_value(-0.5), Some(1.0).or(fit.p_value(-0.5)));
        assert_eq!(fit.p_value(0.0), Some(0.0));
        let two = ols(&[1.0, 2.0], &[1.0, 3.0]).unwrap();
        assert_eq!(two.slope, 2.0);
        assert_eq!(two.slope_stderr, None);
        assert_eq!(two.p_value(0.0), None);
        assert!(ols(&[1.0], &[1.0]).is_err());
        assert!(ols(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(loglog_fit(&[1.0, 0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ols_noisy_against_normal_equations() {
        // y = 1 + 2x + residuals with known closed form stderr
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = [1.1, 2.9, 5.2, 6.8, 9.1];
        let fit = ols(&x, &y).unwrap();
        // by hand: sxx = 10, sxy = 19.9, slope = 1.99
        assert_relative_eq!(fit.slope, 1.99, epsilon = 1e-12);
        let intercept = 5.02 - 1.99 * 2.0;
        assert_relative_eq!(fit.intercept, intercept, epsilon = 1e-12);
        let rss: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - 1.99 * a).powi(2)).sum();
        assert_relative_eq!(fit.slope_stderr.unwrap(), (rss / 3.0 / 10.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn mean_stderr_small_cases() {
        assert_eq!(mean_stderr(&[2.0]), (2.0, 0.0));
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_relative_eq!(se, (1.0f64 / 3.0).sqrt(), epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn compensated_sum_is_order_insensitive(xs in proptest::collection::vec(-1e6f64..1e6, 1..200)) {
            let mut fwd = CompensatedSum::default();
            xs.iter().for_each(|x| fwd.add(*x));
            let mut rev = CompensatedSum::default();
            xs.iter().rev().for_each(|x| rev.add(*x));
            prop_assert!((fwd.value() - rev.value()).abs() <= 1e-9);
        }

        #[test]
        fn regularized_beta_is_monotone(a in 0.2f64..20.0, b in 0.2f64..20.0, x in 0.0f64..1.0, dx in 0.0f64..0.1) {
            let lo = regularized_beta(x, a, b);
            let hi = regularized_beta((x + dx).min(1.0), a, b);
            prop_assert!(lo <= hi + 1e-12);
            prop_assert!((0.0..=1.0).contains(&lo));
        }
    }
}
