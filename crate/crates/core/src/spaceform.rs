//! Space forms of curvature `κ <= 0`.
//!
//! Flat space uses Cartesian coordinates. For `κ < 0` points live on the
//! upper sheet of the hyperboloid `<x,x> = 1/κ` in Lorentz space with
//! signature `(+, …, +, −)`; the last coordinate is the time-like one.

use serde::{Deserialize, Serialize};

use crate::chart::{Chart, SpaceKind};
use crate::error::{Error, Result};
use crate::quadrature;

/// Lorentz inner product, last coordinate negative.
pub fn lorentz(a: &[f64], b: &[f64]) -> f64 {
    let k = a.len() - 1;
    let mut s = -a[k] * b[k];
    for i in 0..k {
        s += a[i] * b[i];
    }
    s
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_t(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("radius must be finite and >= 0, got {t}")))
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa <= 0.0 && kappa.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("curvature must be finite and <= 0, got {kappa}")))
    }
}

/// `S_κ(t)`: `t` for `κ = 0`, `sinh(√−κ t)/√−κ` for `κ < 0`.
pub fn s_kappa(kappa: f64, t: f64) -> Result<f64> {
    check_kappa(kappa)?;
    check_t(t)?;
    Ok(s_raw(kappa, t))
}

/// `C_κ(t) = S_κ'(t)`.
pub fn c_kappa(kappa: f64, t: f64) -> Result<f64> {
    check_kappa(kappa)?;
    check_t(t)?;
    Ok(c_raw(kappa, t))
}

/// `C_κ/S_κ`, the radial Hessian factor. Undefined at `t = 0`.
pub fn ct_kappa(kappa: f64, t: f64) -> Result<f64> {
    check_kappa(kappa)?;
    check_t(t)?;
    if t == 0.0 {
        return Err(Error::Singularity("C/S is unbounded at t = 0".into()));
    }
    if kappa == 0.0 {
        Ok(1.0 / t)
    } else {
        let k = (-kappa).sqrt();
        Ok(k / (k * t).tanh())
    }
}

pub(crate) fn s_raw(kappa: f64, t: f64) -> f64 {
    if kappa == 0.0 {
        t
    } else {
        let k = (-kappa).sqrt();
        (k * t).sinh() / k
    }
}

pub(crate) fn c_raw(kappa: f64, t: f64) -> f64 {
    if kappa == 0.0 {
        1.0
    } else {
        ((-kappa).sqrt() * t).cosh()
    }
}

/// Volume of the Euclidean unit `m`-ball.
pub fn omega(m: usize) -> f64 {
    match m {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / m as f64 * omega(m - 2),
    }
}

/// Geodesic ball and sphere volumes of radius `t` in `M^m(κ)`.
pub fn model_volumes(kappa: f64, m: usize, t: f64) -> Result<(f64, f64)> {
    check_kappa(kappa)?;
    if m == 0 {
        return Err(Error::domain("dimension must be >= 1"));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::domain(format!("radius must be positive, got {t}")));
    }
    let w = omega(m);
    let e = (m - 1) as i32;
    if kappa == 0.0 {
        return Ok((w * t.powi(m as i32), m as f64 * w * t.powi(e)));
    }
    let sphere = |s: f64| m as f64 * w * s_raw(kappa, s).powi(e);
    let ball = quadrature::integrate(sphere, 0.0, t, 1e-12)?;
    Ok((ball, sphere(t)))
}

/// The model geodesic ball volume alone.
pub fn model_ball(kappa: f64, m: usize, t: f64) -> Result<f64> {
    model_volumes(kappa, m, t).map(|v| v.0)
}

/// The model geodesic sphere volume alone.
pub fn model_sphere(kappa: f64, m: usize, t: f64) -> Result<f64> {
    model_volumes(kappa, m, t).map(|v| v.1)
}

/// Relative residual tolerance for points on the hyperboloid.
pub const MODEL_TOL: f64 = 1e-8;

/// A space form with a chosen pole.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ambient {
    pub n: usize,
    pub kappa: f64,
    pub pole: Vec<f64>,
}

impl Ambient {
    pub fn new(space: SpaceKind, pole: Vec<f64>) -> Result<Self> {
        check_kappa(space.kappa)?;
        if pole.len() != space.coords() {
            return Err(Error::DimensionMismatch(format!(
                "pole has {} coordinates, the model needs {}",
                pole.len(),
                space.coords()
            )));
        }
        let amb = Ambient {
            n: space.n,
            kappa: space.kappa,
            pole,
        };
        amb.check_on_model(&amb.pole)?;
        Ok(amb)
    }

    /// The ambient of a chart, with its explicit pole or else the image of
    /// its basepoint.
    pub fn for_chart(chart: &dyn Chart) -> Result<Self> {
        let pole = match chart.pole() {
            Some(p) => p,
            None => chart.eval_position(&chart.basepoint())?,
        };
        Ambient::new(chart.space(), pole)
    }

    pub fn euclidean(n: usize) -> Self {
        Ambient {
            n,
            kappa: 0.0,
            pole: vec![0.0; n],
        }
    }

    /// Hyperbolic space with the pole at the hyperboloid vertex.
    pub fn hyperbolic(n: usize, kappa: f64) -> Result<Self> {
        check_kappa(kappa)?;
        if kappa == 0.0 {
            return Err(Error::domain("hyperbolic space needs kappa < 0"));
        }
        let mut pole = vec![0.0; n + 1];
        pole[n] = 1.0 / (-kappa).sqrt();
        Ok(Ambient { n, kappa, pole })
    }

    pub fn space(&self) -> SpaceKind {
        SpaceKind {
            n: self.n,
            kappa: self.kappa,
        }
    }

    pub fn is_flat(&self) -> bool {
        self.kappa == 0.0
    }

    pub fn coords(&self) -> usize {
        self.space().coords()
    }

    /// The model's ambient inner product (Euclidean or Lorentz).
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        if self.is_flat() {
            euclid(a, b)
        } else {
            lorentz(a, b)
        }
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).max(0.0).sqrt()
    }

    /// Error unless `p` lies on the model manifold.
    pub fn check_on_model(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.coords() {
            return Err(Error::DimensionMismatch(format!(
                "point has {} coordinates, the model needs {}",
                p.len(),
                self.coords()
            )));
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::geometry(format!("non-finite point {p:?}")));
        }
        if self.is_flat() {
            return Ok(());
        }
        let scale = euclid(p, p) * -self.kappa;
        let resid = (lorentz(p, p) * self.kappa - 1.0).abs();
        if resid > MODEL_TOL * scale.max(1.0) || p[p.len() - 1] <= 0.0 {
            return Err(Error::geometry(format!(
                "point {p:?} is off the hyperboloid (residual {resid:e})"
            )));
        }
        Ok(())
    }

    /// Distance to the pole.
    pub fn distance(&self, p: &[f64]) -> Result<f64> {
        self.check_on_model(p)?;
        Ok(self.distance_unchecked(p))
    }

    pub(crate) fn distance_unchecked(&self, p: &[f64]) -> f64 {
        let d: Vec<f64> = p.iter().zip(&self.pole).map(|(a, b)| a - b).collect();
        if self.is_flat() {
            return euclid(&d, &d).sqrt();
        }
        // Chordal form: <p-o,p-o> = (4/k²) sinh²(k r / 2); stable near the pole.
        let k = (-self.kappa).sqrt();
        let q = lorentz(&d, &d).max(0.0);
        2.0 / k * (0.5 * k * q.sqrt()).asinh()
    }

    /// Project an ambient vector onto the model's tangent space at `p`.
    pub fn project_tangent(&self, p: &[f64], w: &[f64]) -> Vec<f64> {
        if self.is_flat() {
            return w.to_vec();
        }
        let c = self.kappa * lorentz(w, p);
        w.iter().zip(p).map(|(wi, pi)| wi - c * pi).collect()
    }

    /// Unit radial field `∇r` at `p`.
    pub fn radial_gradient(&self, p: &[f64]) -> Result<Vec<f64>> {
        let raw: Vec<f64> = if self.is_flat() {
            p.iter().zip(&self.pole).map(|(a, b)| a - b).collect()
        } else {
            // Tangential part of p - o; points away from the pole.
            let d: Vec<f64> = p.iter().zip(&self.pole).map(|(a, b)| a - b).collect();
            self.project_tangent(p, &d)
        };
        let norm = self.norm(&raw);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Singularity("the radial field is undefined at the pole".into()));
        }
        Ok(raw.into_iter().map(|x| x / norm).collect())
    }

    /// `∇r(p)` and `Hess r(u, v)` for tangent vectors `u`, `v` at `p`.
    pub fn distance_gradient_hessian(&self, p: &[f64], u: &[f64], v: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_on_model(p)?;
        let r = self.distance_unchecked(p);
        let grad = self.radial_gradient(p)?;
        let ct = ct_kappa(self.kappa, r)?;
        let h = ct * (self.inner(u, v) - self.inner(&grad, u) * self.inner(&grad, v));
        Ok((grad, h))
    }

    /// Geodesic from `p` with initial velocity `v`, evaluated at time 1.
    pub fn exp_map(&self, p: &[f64], v: &[f64]) -> Vec<f64> {
        if self.is_flat() {
            return p.iter().zip(v).map(|(a, b)| a + b).collect();
        }
        let len = self.norm(v);
        if len == 0.0 {
            return p.to_vec();
        }
        let k = (-self.kappa).sqrt();
        let (c, s) = ((k * len).cosh(), (k * len).sinh() / (k * len));
        p.iter().zip(v).map(|(a, b)| c * a + s * b).collect()
    }

    /// The point at distance `t` from the pole in the unit tangent direction
    /// `dir` (ambient vector tangent at the pole).
    pub fn point_at(&self, dir: &[f64], t: f64) -> Vec<f64> {
        let d: Vec<f64> = dir.iter().map(|x| x * t).collect();
        self.exp_map(&self.pole, &d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn comparison_functions() {
        assert_eq!(s_kappa(0.0, 2.0).unwrap(), 2.0);
        assert!((s_kappa(-1.0, 1.0).unwrap() - 1.175_201_193_643_801_4).abs() < 1e-15);
        assert_eq!(c_kappa(0.0, 3.0).unwrap(), 1.0);
        let (c, s) = (c_kappa(-1.0, 0.7).unwrap(), s_kappa(-1.0, 0.7).unwrap());
        assert!((c * c - s * s - 1.0).abs() < 1e-12);
        assert!(matches!(s_kappa(-1.0, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn pythagorean_identity_on_grid() {
        for &kappa in &[0.0, -0.5, -1.0, -2.0] {
            for i in 0..=100 {
                let t = i as f64 * 0.05;
                let c = c_kappa(kappa, t).unwrap();
                let s = s_kappa(kappa, t).unwrap();
                assert!((c * c + kappa * s * s - 1.0).abs() < 1e-14 * c * c, "{kappa} {t}");
            }
        }
    }

    #[test]
    fn distances() {
        let e = Ambient::euclidean(3);
        assert_eq!(e.distance(&[3.0, 4.0, 0.0]).unwrap(), 5.0);
        let h = Ambient::hyperbolic(2, -1.0).unwrap();
        let p = [1f64.sinh(), 0.0, 1f64.cosh()];
        assert!((h.distance(&p).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(h.distance(&h.pole.clone()).unwrap(), 0.0);
        assert!(matches!(h.distance(&[0.0, 0.0, 2.0]), Err(Error::Geometry(_))));
    }

    #[test]
    fn tiny_hyperbolic_distances_keep_precision() {
        let h = Ambient::hyperbolic(2, -1.0).unwrap();
        let d: f64 = 1e-9;
        let p = [d.sinh(), 0.0, d.cosh()];
        assert!((h.distance(&p).unwrap() - d).abs() < 1e-22);
    }

    #[test]
    fn hessian_examples() {
        let e = Ambient::euclidean(3);
        let (_, h) = e
            .distance_gradient_hessian(&[2.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0])
            .unwrap();
        assert!((h - 0.5).abs() < 1e-15);
        let hy = Ambient::hyperbolic(2, -1.0).unwrap();
        let p = [1f64.sinh(), 0.0, 1f64.cosh()];
        let u = [0.0, 1.0, 0.0];
        let (g, h) = hy.distance_gradient_hessian(&p, &u, &u).unwrap();
        assert!((h - 1.0 / 1f64.tanh()).abs() < 1e-12);
        let (_, hr) = hy.distance_gradient_hessian(&p, &g, &g).unwrap();
        assert!(hr.abs() < 1e-12);
        assert!(matches!(
            hy.distance_gradient_hessian(&hy.pole.clone(), &u, &u),
            Err(Error::Singularity(_))
        ));
    }

    fn random_tangent(amb: &Ambient, p: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let w: Vec<f64> = (0..p.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        amb.project_tangent(p, &w)
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &kappa in &[0.0, -1.0, -0.5] {
            let amb = if kappa == 0.0 {
                Ambient::euclidean(3)
            } else {
                Ambient::hyperbolic(3, kappa).unwrap()
            };
            for _ in 0..60 {
                let dir = random_tangent(&amb, &amb.pole.clone(), &mut rng);
                let dir: Vec<f64> = dir.iter().map(|x| x / amb.norm(&dir)).collect();
                let p = amb.point_at(&dir, rng.gen_range(0.3..2.5));
                let u = random_tangent(&amb, &p, &mut rng);
                let v = random_tangent(&amb, &p, &mut rng);
                let (_, h) = amb.distance_gradient_hessian(&p, &u, &v).unwrap();
                let f = |a: f64, b: f64| {
                    let w: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
                    amb.distance(&amb.exp_map(&p, &w)).unwrap()
                };
                let e = 1e-4;
                let fd = (f(e, e) - f(e, -e) - f(-e, e) + f(-e, -e)) / (4.0 * e * e);
                let scale = h.abs().max(1.0);
                assert!((fd - h).abs() / scale < 1e-6, "kappa {kappa}: {fd} vs {h}");
            }
        }
    }

    #[test]
    fn model_volume_examples() {
        let (b, s) = model_volumes(0.0, 2, 1.0).unwrap();
        assert!((b - std::f64::consts::PI).abs() < 1e-15);
        assert!((s - 2.0 * std::f64::consts::PI).abs() < 1e-15);
        let (b, s) = model_volumes(0.0, 3, 2.0).unwrap();
        assert!((b - 4.0 / 3.0 * std::f64::consts::PI * 8.0).abs() < 1e-12);
        assert!((s - 4.0 * std::f64::consts::PI * 4.0).abs() < 1e-12);
        let (b, s) = model_volumes(-1.0, 2, 1.0).unwrap();
        let tau = 2.0 * std::f64::consts::PI;
        assert!((s - tau * 1f64.sinh()).abs() < 1e-12);
        assert!((b - tau * (1f64.cosh() - 1.0)).abs() / b < 1e-10);
    }

    #[test]
    fn omega_table() {
        let pi = std::f64::consts::PI;
        let table = [
            2.0,
            pi,
            4.0 * pi / 3.0,
            pi * pi / 2.0,
            8.0 * pi * pi / 15.0,
            pi.powi(3) / 6.0,
            16.0 * pi.powi(3) / 105.0,
            pi.powi(4) / 24.0,
            32.0 * pi.powi(4) / 945.0,
            pi.powi(5) / 120.0,
        ];
        for (m, want) in table.iter().enumerate() {
            assert!((omega(m + 1) - want).abs() < 1e-13 * want);
        }
    }

    proptest! {
        #[test]
        fn ball_derivative_is_sphere(kappa in -2.0f64..0.0, m in 1usize..6, t in 0.1f64..3.0) {
            let h = 1e-3 * t;
            let b = |s: f64| model_ball(kappa, m, s).unwrap();
            let d = (8.0 * (b(t + h) - b(t - h)) - (b(t + 2.0 * h) - b(t - 2.0 * h))) / (12.0 * h);
            let s = model_sphere(kappa, m, t).unwrap();
            prop_assert!((d - s).abs() / s < 1e-8, "{} vs {}", d, s);
            prop_assert!(model_ball(kappa, m, t + h).unwrap() > model_ball(kappa, m, t).unwrap());
        }
    }
}
