//! The chart abstraction shared by catalog entries and parsed expressions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jets::{seed_all, Jet2, MAX_DIM};

/// Which space form a chart maps into.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceKind {
    /// Dimension of the space form.
    pub n: usize,
    /// Sectional curvature, `<= 0`.
    pub kappa: f64,
}

impl SpaceKind {
    pub fn euclidean(n: usize) -> Self {
        SpaceKind { n, kappa: 0.0 }
    }

    pub fn hyperbolic(n: usize, kappa: f64) -> Self {
        SpaceKind { n, kappa }
    }

    pub fn is_flat(&self) -> bool {
        self.kappa == 0.0
    }

    /// Number of model coordinates: `n` for Cartesian space, `n + 1` for the
    /// hyperboloid in Lorentz space.
    pub fn coords(&self) -> usize {
        if self.is_flat() {
            self.n
        } else {
            self.n + 1
        }
    }
}

/// One axis of a chart's parameter box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisDomain {
    pub lo: f64,
    pub hi: f64,
    /// The axis wraps around: `lo` and `hi` are identified.
    pub periodic: bool,
    /// The low face is a truncation of an unbounded direction, so reaching
    /// it counts as running off to infinity.
    pub lo_truncated: bool,
    pub hi_truncated: bool,
}

impl AxisDomain {
    /// A finite interval whose faces are treated as truncation faces.
    pub fn truncated(lo: f64, hi: f64) -> Self {
        AxisDomain {
            lo,
            hi,
            periodic: false,
            lo_truncated: true,
            hi_truncated: true,
        }
    }

    /// A finite interval whose faces are chart cuts, not ends.
    pub fn cut(lo: f64, hi: f64) -> Self {
        AxisDomain {
            lo,
            hi,
            periodic: false,
            lo_truncated: false,
            hi_truncated: false,
        }
    }

    pub fn periodic(lo: f64, hi: f64) -> Self {
        AxisDomain {
            lo,
            hi,
            periodic: true,
            lo_truncated: false,
            hi_truncated: false,
        }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    fn slack(&self) -> f64 {
        1e-12 * self.lo.abs().max(self.hi.abs()).max(1.0)
    }

    pub fn contains(&self, x: f64) -> bool {
        x.is_finite() && x >= self.lo - self.slack() && x <= self.hi + self.slack()
    }
}

/// A parametrization `U ⊆ R^m → M^n(κ)`.
pub trait Chart: Send + Sync {
    fn name(&self) -> String;

    /// Chart dimension `m`.
    fn dim(&self) -> usize;

    fn space(&self) -> SpaceKind;

    fn domain(&self) -> &[AxisDomain];

    /// Model coordinates with first and second derivatives. Callers go
    /// through [`Chart::eval_jets`], which checks the domain first.
    fn jets_unchecked(&self, jets: &[Jet2]) -> Result<Vec<Jet2>>;

    /// Model coordinates only.
    fn position_unchecked(&self, u: &[f64]) -> Result<Vec<f64>>;

    /// Chart point whose image is the default pole.
    fn basepoint(&self) -> Vec<f64> {
        self.domain()
            .iter()
            .map(|d| {
                if d.periodic {
                    d.lo
                } else {
                    0.5 * (d.lo + d.hi)
                }
            })
            .collect()
    }

    /// An explicit ambient pole, when the natural pole is not on the image.
    fn pole(&self) -> Option<Vec<f64>> {
        None
    }

    fn check_point(&self, u: &[f64]) -> Result<()> {
        let m = self.dim();
        if u.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "chart point has {} coordinates, chart dimension is {m}",
                u.len()
            )));
        }
        if self.domain().iter().zip(u).all(|(d, &x)| d.contains(x)) {
            Ok(())
        } else {
            Err(Error::OutOfDomain { point: u.to_vec() })
        }
    }

    fn eval_jets(&self, u: &[f64]) -> Result<Vec<Jet2>> {
        self.check_point(u)?;
        if u.len() > MAX_DIM {
            return Err(Error::domain("chart dimension too large"));
        }
        self.jets_unchecked(&seed_all(u)?)
    }

    fn eval_position(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_point(u)?;
        self.position_unchecked(u)
    }
}

/// Require every axis of a chart domain to be bounded.
pub fn require_bounded(chart: &dyn Chart) -> Result<()> {
    for (k, d) in chart.domain().iter().enumerate() {
        if !d.is_bounded() {
            return Err(Error::Truncation(format!(
                "axis u{} of `{}` is unbounded; supply a truncation",
                k + 1,
                chart.name()
            )));
        }
        if !(d.hi > d.lo) {
            return Err(Error::domain(format!(
                "axis u{} of `{}` has an empty interval",
                k + 1,
                chart.name()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinate_counts() {
        assert_eq!(SpaceKind::euclidean(3).coords(), 3);
        assert_eq!(SpaceKind::hyperbolic(3, -1.0).coords(), 4);
    }

    #[test]
    fn containment_has_rounding_slack() {
        let d = AxisDomain::cut(0.0, 1.0);
        assert!(d.contains(1.0 + 1e-14));
        assert!(!d.contains(1.001));
        assert!(!d.contains(f64::NAN));
    }
}
