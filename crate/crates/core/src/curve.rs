//! Sampled one-dimensional curves.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Monotonicity {
    Constant,
    Increasing,
    Decreasing,
    NonDecreasing,
    NonIncreasing,
    None,
}

/// `t ↦ value` samples with increasing `t`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Curve {
    pub t: Vec<f64>,
    pub values: Vec<f64>,
    pub monotonicity: Monotonicity,
}

fn classify(values: &[f64]) -> Monotonicity {
    let (mut up, mut down, mut flat) = (false, false, false);
    for w in values.windows(2) {
        match w[1].total_cmp(&w[0]) {
            std::cmp::Ordering::Greater => up = true,
            std::cmp::Ordering::Less => down = true,
            std::cmp::Ordering::Equal => flat = true,
        }
    }
    match (up, down, flat) {
        (false, false, _) => Monotonicity::Constant,
        (true, false, false) => Monotonicity::Increasing,
        (true, false, true) => Monotonicity::NonDecreasing,
        (false, true, false) => Monotonicity::Decreasing,
        (false, true, true) => Monotonicity::NonIncreasing,
        (true, true, _) => Monotonicity::None,
    }
}

impl Curve {
    pub fn new(t: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if t.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "curve has {} abscissae and {} values",
                t.len(),
                values.len()
            )));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("curve abscissae must be strictly increasing"));
        }
        let monotonicity = classify(&values);
        Ok(Curve { t, values, monotonicity })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }

    pub fn is_non_increasing(&self) -> bool {
        matches!(
            self.monotonicity,
            Monotonicity::Constant | Monotonicity::Decreasing | Monotonicity::NonIncreasing
        )
    }

    pub fn is_non_decreasing(&self) -> bool {
        matches!(
            self.monotonicity,
            Monotonicity::Constant | Monotonicity::Increasing | Monotonicity::NonDecreasing
        )
    }

    /// Index where the final `fraction` of the samples starts. Always leaves
    /// at least `min_len` samples when the curve is long enough.
    pub fn tail_start(&self, fraction: f64, min_len: usize) -> usize {
        let n = self.len();
        let keep = ((n as f64 * fraction).ceil() as usize).max(min_len).min(n);
        n - keep
    }

    /// The sub-curve from index `start` on.
    pub fn slice_from(&self, start: usize) -> Curve {
        let t = self.t[start..].to_vec();
        let values = self.values[start..].to_vec();
        let monotonicity = classify(&values);
        Curve { t, values, monotonicity }
    }

    /// Least-squares slope of `value` against `t`.
    pub fn slope(&self) -> f64 {
        let n = self.len() as f64;
        if self.len() < 2 {
            return 0.0;
        }
        let mt = self.t.iter().sum::<f64>() / n;
        let mv = self.values.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let mut den = 0.0;
        for (t, v) in self.t.iter().zip(&self.values) {
            num += (t - mt) * (v - mv);
            den += (t - mt) * (t - mt);
        }
        num / den
    }

    pub fn min(&self) -> Option<(f64, f64)> {
        self.t
            .iter()
            .zip(&self.values)
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(t, v)| (*t, *v))
    }

    pub fn max(&self) -> Option<(f64, f64)> {
        self.t
            .iter()
            .zip(&self.values)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(t, v)| (*t, *v))
    }

    /// `(max − min) / |max|`, zero for an empty or all-zero curve.
    pub fn oscillation(&self) -> f64 {
        match (self.min(), self.max()) {
            (Some((_, lo)), Some((_, hi))) if hi != 0.0 => (hi - lo) / hi.abs(),
            _ => 0.0,
        }
    }

    /// Trapezoidal integral over the sampled range.
    pub fn integral(&self) -> f64 {
        self.t
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotonicity_labels() {
        let t = vec![0.0, 1.0, 2.0, 3.0];
        assert_eq!(Curve::new(t.clone(), vec![1.0; 4]).unwrap().monotonicity, Monotonicity::Constant);
        assert_eq!(
            Curve::new(t.clone(), vec![3.0, 2.0, 2.0, 1.0]).unwrap().monotonicity,
            Monotonicity::NonIncreasing
        );
        assert_eq!(
            Curve::new(t.clone(), vec![0.0, 1.0, 4.0, 9.0]).unwrap().monotonicity,
            Monotonicity::Increasing
        );
        assert_eq!(Curve::new(t, vec![0.0, 1.0, 0.0, 1.0]).unwrap().monotonicity, Monotonicity::None);
    }

    #[test]
    fn rejects_bad_abscissae() {
        assert!(Curve::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(Curve::new(vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn slope_and_integral_of_a_line() {
        let t: Vec<f64> = (0..11).map(|k| k as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|x| 3.0 * x - 1.0).collect();
        let c = Curve::new(t, v).unwrap();
        assert!((c.slope() - 3.0).abs() < 1e-12);
        assert!((c.integral() - 0.5).abs() < 1e-12);
        assert_eq!(c.tail_start(0.25, 2), 8);
        assert_eq!(c.slice_from(8).len(), 3);
    }
}
