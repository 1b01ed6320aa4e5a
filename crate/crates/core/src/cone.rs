//! Orthant-cone partial order and Minkowski gauge norms on `R^d`.
//!
//! For the nonnegative orthant and an interior element `e` (all entries
//! strictly positive), the gauge norm of the order interval `[-e, e]` is the
//! weighted sup norm `max_j |theta_j| / e_j`. With `e = 1` it is the plain
//! `l_inf` norm.

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, invalid, Result};

/// Default absolute tolerance used by [`OrthantCone`] comparisons.
pub const DEFAULT_ORDER_TOLERANCE: f64 = 1e-9;

/// A finite real vector: an element of the ambient space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GaugeVector(Vec<f64>);

impl GaugeVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(invalid("vector must have dimension >= 1"));
        }
        if let Some(j) = entries.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("entry {j} is not finite")));
        }
        Ok(Self(entries))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "vector must have dimension >= 1");
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `self + other`.
    pub fn add(&self, other: &GaugeVector) -> Result<GaugeVector> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
    }

    /// `self - other`.
    pub fn sub(&self, other: &GaugeVector) -> Result<GaugeVector> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()))
    }

    pub fn scale(&self, c: f64) -> GaugeVector {
        Self(self.0.iter().map(|v| c * v).collect())
    }
}

impl TryFrom<Vec<f64>> for GaugeVector {
    type Error = crate::Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<GaugeVector> for Vec<f64> {
    fn from(v: GaugeVector) -> Self {
        v.0
    }
}

impl std::ops::Deref for GaugeVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// An interior element of the orthant cone, defining the gauge norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GaugeElement(Vec<f64>);

impl GaugeElement {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(invalid("gauge element must have dimension >= 1"));
        }
        if let Some(j) = entries.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid(format!(
                "gauge element entry {j} must be finite and strictly positive"
            )));
        }
        Ok(Self(entries))
    }

    /// The all-ones element; its gauge norm is `l_inf`.
    pub fn ones(dim: usize) -> Self {
        assert!(dim >= 1, "gauge element must have dimension >= 1");
        Self(vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Gauge norm of a raw slice. Dimensions are checked.
    pub fn norm_of(&self, theta: &[f64]) -> Result<f64> {
        check_dims(self.dim(), theta.len())?;
        Ok(self.norm_unchecked(theta))
    }

    #[inline]
    pub(crate) fn norm_unchecked(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(&self.0)
            .fold(0.0_f64, |m, (t, e)| m.max(t.abs() / e))
    }
}

impl TryFrom<Vec<f64>> for GaugeElement {
    type Error = crate::Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<GaugeElement> for Vec<f64> {
    fn from(v: GaugeElement) -> Self {
        v.0
    }
}

/// Minkowski gauge norm `inf { s > 0 : theta / s in [-e, e] }`.
pub fn gauge_norm(theta: &GaugeVector, e: &GaugeElement) -> Result<f64> {
    e.norm_of(theta)
}

/// `a ⪯ b` in the orthant order with the default tolerance.
pub fn cone_leq(a: &GaugeVector, b: &GaugeVector) -> Result<bool> {
    OrthantCone::default().leq(a, b)
}

/// The nonnegative orthant with an absolute tolerance on the order test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthantCone {
    pub tolerance: f64,
}

impl Default for OrthantCone {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_ORDER_TOLERANCE,
        }
    }
}

impl OrthantCone {
    pub fn with_tolerance(tolerance: f64) -> Result<Self> {
        if !(tolerance >= 0.0 && tolerance.is_finite()) {
            return Err(invalid("order tolerance must be finite and >= 0"));
        }
        Ok(Self { tolerance })
    }

    /// True iff every entry of `b - a` is `>= -tolerance`.
    pub fn leq(&self, a: &GaugeVector, b: &GaugeVector) -> Result<bool> {
        self.leq_slices(a, b)
    }

    pub fn leq_slices(&self, a: &[f64], b: &[f64]) -> Result<bool> {
        check_dims(a.len(), b.len())?;
        Ok(a.iter().zip(b).all(|(x, y)| y - x >= -self.tolerance))
    }

    /// Tests `center - radius*e ⪯ x ⪯ center + radius*e` without allocating.
    ///
    /// Returns the smallest slack over both sides; the relation holds iff the
    /// slack is `>= -tolerance`.
    pub fn interval_slack(
        &self,
        x: &[f64],
        center: &[f64],
        radius: f64,
        e: &GaugeElement,
    ) -> Result<f64> {
        check_dims(x.len(), center.len())?;
        check_dims(x.len(), e.dim())?;
        let mut slack = f64::INFINITY;
        for ((xj, cj), ej) in x.iter().zip(center).zip(e.as_slice()) {
            let upper = cj + radius * ej - xj;
            let lower = xj - (cj - radius * ej);
            slack = slack.min(upper).min(lower);
        }
        Ok(slack)
    }

    pub fn interval_contains(
        &self,
        x: &[f64],
        center: &[f64],
        radius: f64,
        e: &GaugeElement,
    ) -> Result<bool> {
        Ok(self.interval_slack(x, center, radius, e)? >= -self.tolerance)
    }
}
