//! Built-in immersions with closed-form ground truth.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::chart::{AxisDomain, Chart, SpaceKind};
use crate::error::{Error, Result};
use crate::jets::{Jet2, Scalar, MAX_DIM};
use crate::spaceform::s_raw;

pub type Params = BTreeMap<String, f64>;

/// Angular margin that keeps sphere charts away from their poles.
pub const POLE_MARGIN: f64 = 0.05;

#[derive(Clone, Debug, Serialize)]
pub struct ParamInfo {
    pub name: &'static str,
    pub default: Option<f64>,
    pub range: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct EntryInfo {
    pub name: &'static str,
    pub summary: &'static str,
    pub params: Vec<ParamInfo>,
    pub ground_truth: &'static str,
}

fn p(name: &'static str, default: Option<f64>, range: &'static str) -> ParamInfo {
    ParamInfo { name, default, range }
}

/// Every catalog entry with its parameters.
pub fn entries() -> Vec<EntryInfo> {
    vec![
        EntryInfo {
            name: "flat-subspace",
            summary: "R^m as a coordinate subspace of R^n",
            params: vec![
                p("m", Some(2.0), "1..=5"),
                p("n", None, "> m, default m + 1"),
                p("truncation", Some(2.0), "> 0, half-width of the chart box"),
            ],
            ground_truth: "alpha = 0, a = b = 0, one end, K = 0",
        },
        EntryInfo {
            name: "totally-geodesic",
            summary: "H^m(kappa) as a totally geodesic graph in H^n(kappa)",
            params: vec![
                p("m", Some(2.0), "1..=5"),
                p("n", None, "> m, default m + 1"),
                p("kappa", Some(-1.0), "< 0"),
                p("truncation", None, "> 0, chart half-width, default S_kappa(2)"),
            ],
            ground_truth: "alpha = 0, a = b = 0, one end, K = kappa",
        },
        EntryInfo {
            name: "cylinder",
            summary: "round cylinder S^1(R) x R in R^3, pole on the surface",
            params: vec![p("radius", Some(1.0), "> 0"), p("truncation", Some(5.0), "> 0")],
            ground_truth: "|alpha| = 1/R, a = b = infinity, two ends",
        },
        EntryInfo {
            name: "sphere",
            summary: "round sphere of radius R in R^3 without its polar caps",
            params: vec![p("radius", Some(1.0), "> 0")],
            ground_truth: "|alpha| = sqrt(2)/R, K = 1/R^2, compact",
        },
        EntryInfo {
            name: "catenoid",
            summary: "catenoid (cosh u cos v, cosh u sin v, u) in R^3, pole at the waist",
            params: vec![p("truncation", Some(5.0), "> 0")],
            ground_truth: "|alpha| = sqrt(2)/cosh^2 u, a = 0, two ends",
        },
        EntryInfo {
            name: "rotation-hypersurface",
            summary: "rotation hypersurface of H^(n+1)(-1) with profile x1(s) = (a cosh 2s - 1/2)^(1/2)",
            params: vec![
                p("n", Some(2.0), "2..=5"),
                p("a", Some(1.0), "> 1/2"),
                p("truncation", Some(6.0), "> 0, bound on |s|"),
            ],
            ground_truth: "|alpha|^2 = n (a^2 - 1/4)/(a cosh 2s - 1/2)^2, b = sqrt(n (a^2 - 1/4))/(2a), a = 0, two ends",
        },
        EntryInfo {
            name: "circle",
            summary: "circle of radius R in R^2 centred at the pole",
            params: vec![p("radius", Some(1.0), "> 0")],
            ground_truth: "|grad^M r| = 0 everywhere, compact",
        },
    ]
}

/// Closed-form `‖α‖` as a function of the chart point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum AlphaProfile {
    Constant(f64),
    /// `√2 / cosh² u1`.
    Catenoid,
    /// `√(n (a² − ¼)) / (a cosh 2s − ½)` with `s = u1`.
    Rotation { n: usize, a: f64 },
}

impl AlphaProfile {
    pub fn at(&self, u: &[f64]) -> f64 {
        match *self {
            AlphaProfile::Constant(v) => v,
            AlphaProfile::Catenoid => 2f64.sqrt() / u[0].cosh().powi(2),
            AlphaProfile::Rotation { n, a } => {
                (n as f64 * (a * a - 0.25)).sqrt() / (a * (2.0 * u[0]).cosh() - 0.5)
            }
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct GroundTruth {
    pub alpha_norm: Option<AlphaProfile>,
    /// `f64::INFINITY` when the invariant is infinite.
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub ends: Option<usize>,
    pub sectional_curvature: Option<f64>,
    /// Where the closed forms come from.
    pub source: &'static str,
}

/// Precomputed angle profile of the rotation hypersurface.
///
/// The profile curve is `(x1, R sinh ψ, R cosh ψ)` with `R = √(1 + x1²)`,
/// which keeps it on the hyperboloid for any `ψ`; unit speed then fixes
/// `ψ' = √(a² − ¼) / (x1 (1 + x1²))`. `ψ` is tabulated by RK4 and read back
/// by cubic Hermite interpolation.
#[derive(Debug)]
pub struct RotationProfile {
    a: f64,
    c: f64,
    h: f64,
    psi: Vec<f64>,
}

impl RotationProfile {
    pub const STEP: f64 = 1.0 / 1024.0;

    pub fn new(a: f64, s_max: f64) -> Self {
        let c = (a * a - 0.25).sqrt();
        let h = Self::STEP;
        let steps = (s_max / h).ceil() as usize + 2;
        let mut prof = RotationProfile {
            a,
            c,
            h,
            psi: Vec::with_capacity(steps + 1),
        };
        let mut y = 0.0;
        prof.psi.push(y);
        for k in 0..steps {
            let s = k as f64 * h;
            // dψ/ds depends on s only, so the RK4 stages collapse to Simpson.
            let k1 = prof.dpsi(s);
            let k2 = prof.dpsi(s + 0.5 * h);
            let k4 = prof.dpsi(s + h);
            y += h / 6.0 * (k1 + 4.0 * k2 + k4);
            prof.psi.push(y);
        }
        prof
    }

    fn x1(&self, s: f64) -> f64 {
        (self.a * (2.0 * s).cosh() - 0.5).sqrt()
    }

    pub fn dpsi(&self, s: f64) -> f64 {
        let x = self.x1(s);
        self.c / (x * (1.0 + x * x))
    }

    pub fn ddpsi(&self, s: f64) -> f64 {
        let x = self.x1(s);
        let dx = self.a * (2.0 * s).sinh() / x;
        let q = 1.0 + x * x;
        -self.c * dx * (1.0 + 3.0 * x * x) / (x * x * q * q)
    }

    pub fn psi(&self, s: f64) -> f64 {
        if s < 0.0 {
            return -self.psi(-s);
        }
        let t = s / self.h;
        let k = (t.floor() as usize).min(self.psi.len() - 2);
        let s0 = k as f64 * self.h;
        let x = (s - s0) / self.h;
        let (y0, y1) = (self.psi[k], self.psi[k + 1]);
        let (d0, d1) = (self.dpsi(s0) * self.h, self.dpsi(s0 + self.h) * self.h);
        let x2 = x * x;
        let x3 = x2 * x;
        (2.0 * x3 - 3.0 * x2 + 1.0) * y0 + (x3 - 2.0 * x2 + x) * d0 + (-2.0 * x3 + 3.0 * x2) * y1 + (x3 - x2) * d1
    }

    pub fn max_s(&self) -> f64 {
        (self.psi.len() - 1) as f64 * self.h
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Flat,
    TotallyGeodesic,
    Cylinder { radius: f64 },
    Sphere { radius: f64 },
    Catenoid,
    Rotation { a: f64, profile: Arc<RotationProfile> },
    Circle { radius: f64 },
}

/// A catalog immersion.
#[derive(Clone, Debug)]
pub struct CatalogChart {
    name: String,
    kind: Kind,
    m: usize,
    space: SpaceKind,
    domain: Vec<AxisDomain>,
    basepoint: Vec<f64>,
    pole: Option<Vec<f64>>,
    resolution: Vec<usize>,
    source: Option<String>,
}

/// Unit `d`-sphere in orthogonal angular coordinates, `d + 1` components.
fn sphere_coords<S: Scalar>(angles: &[S]) -> Result<Vec<S>> {
    let d = angles.len();
    let mut out = Vec::with_capacity(d + 1);
    let mut prod = S::from_f64(1.0);
    for th in &angles[..d - 1] {
        out.push(prod * th.cos()?);
        prod = prod * th.sin()?;
    }
    let last = angles[d - 1];
    out.push(prod * last.cos()?);
    out.push(prod * last.sin()?);
    Ok(out)
}

fn sphere_axes(d: usize) -> Vec<AxisDomain> {
    let mut axes = vec![AxisDomain::cut(POLE_MARGIN, PI - POLE_MARGIN); d - 1];
    axes.push(AxisDomain::periodic(0.0, 2.0 * PI));
    axes
}

impl CatalogChart {
    pub fn coords<S: Scalar>(&self, u: &[S]) -> Result<Vec<S>> {
        let zero = S::from_f64(0.0);
        match &self.kind {
            Kind::Flat => {
                let mut x = u.to_vec();
                x.resize(self.space.n, zero);
                Ok(x)
            }
            Kind::TotallyGeodesic => {
                let mut sq = S::from_f64(-1.0 / self.space.kappa);
                for &v in u {
                    sq = sq + v * v;
                }
                let mut x = u.to_vec();
                x.resize(self.space.n, zero);
                x.push(sq.sqrt()?);
                Ok(x)
            }
            Kind::Cylinder { radius } => Ok(vec![u[0].cos()? * *radius, u[0].sin()? * *radius, u[1]]),
            Kind::Sphere { radius } => {
                let s = sphere_coords(u)?;
                // Put the polar axis last: (sin θ cos φ, sin θ sin φ, cos θ).
                Ok(vec![s[1] * *radius, s[2] * *radius, s[0] * *radius])
            }
            Kind::Catenoid => {
                let c = u[0].cosh()?;
                Ok(vec![c * u[1].cos()?, c * u[1].sin()?, u[0]])
            }
            Kind::Rotation { a, profile } => {
                let s = u[0];
                let sv = s.value();
                let x1 = ((s * 2.0).cosh()? * *a - 0.5).sqrt()?;
                let big_r = (x1 * x1 + 1.0).sqrt()?;
                let psi = s.lift(profile.psi(sv), profile.dpsi(sv), profile.ddpsi(sv));
                let mut x: Vec<S> = sphere_coords(&u[1..])?.into_iter().map(|c| x1 * c).collect();
                x.push(big_r * psi.sinh()?);
                x.push(big_r * psi.cosh()?);
                Ok(x)
            }
            Kind::Circle { radius } => Ok(vec![u[0].cos()? * *radius, u[0].sin()? * *radius]),
        }
    }

    /// Suggested grid resolution.
    pub fn default_resolution(&self) -> Vec<usize> {
        self.resolution.clone()
    }

    /// The same immersion in the chart language, when it has a closed form.
    pub fn expression_source(&self) -> Option<&str> {
        self.source.as_deref()
    }
}

impl Chart for CatalogChart {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn dim(&self) -> usize {
        self.m
    }

    fn space(&self) -> SpaceKind {
        self.space
    }

    fn domain(&self) -> &[AxisDomain] {
        &self.domain
    }

    fn jets_unchecked(&self, u: &[Jet2]) -> Result<Vec<Jet2>> {
        self.coords(u)
    }

    fn position_unchecked(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.coords(u)
    }

    fn basepoint(&self) -> Vec<f64> {
        self.basepoint.clone()
    }

    fn pole(&self) -> Option<Vec<f64>> {
        self.pole.clone()
    }
}

struct Reader<'a> {
    entry: &'a str,
    params: Params,
}

impl Reader<'_> {
    fn get(&mut self, key: &str, default: f64) -> f64 {
        self.params.remove(key).unwrap_or(default)
    }

    fn dim(&mut self, key: &str, default: usize) -> Result<usize> {
        let v = self.get(key, default as f64);
        if v.fract() != 0.0 || v < 1.0 {
            return Err(Error::domain(format!("{}: `{key}` must be a positive integer", self.entry)));
        }
        Ok(v as usize)
    }

    fn positive(&mut self, key: &str, default: f64) -> Result<f64> {
        let v = self.get(key, default);
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(format!("{}: `{key}` must be positive, got {v}", self.entry)));
        }
        Ok(v)
    }

    fn finish(self) -> Result<()> {
        match self.params.keys().next() {
            Some(k) => Err(Error::domain(format!("{}: unknown parameter `{k}`", self.entry))),
            None => Ok(()),
        }
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v:?}")
}

/// Build a catalog immersion by name.
pub fn catalog_build(name: &str, params: &Params) -> Result<(CatalogChart, GroundTruth)> {
    let mut rd = Reader {
        entry: name,
        params: params.clone(),
    };
    let built = match name {
        "flat-subspace" => {
            let m = rd.dim("m", 2)?;
            let n = rd.dim("n", m + 1)?;
            let t = rd.positive("truncation", 2.0)?;
            check_dims(name, m, n)?;
            let coords: Vec<String> = (1..=n)
                .map(|k| if k <= m { format!("x{k} = u{k}") } else { format!("x{k} = 0") })
                .collect();
            let axes: Vec<String> = (1..=m).map(|k| format!("u{k} in [-T, T]")).collect();
            let source = format!(
                "m = {m}; n = {n}; ambient = euclidean\nconst T = {}\n{}\ndomain {}\nbasepoint = ({})",
                fmt_f(t),
                coords.join("\n"),
                axes.join(", "),
                vec!["0"; m].join(", ")
            );
            (
                CatalogChart {
                    name: name.into(),
                    kind: Kind::Flat,
                    m,
                    space: SpaceKind::euclidean(n),
                    domain: vec![AxisDomain::truncated(-t, t); m],
                    basepoint: vec![0.0; m],
                    pole: None,
                    resolution: vec![if m <= 2 { 161 } else { 41 }; m],
                    source: Some(source),
                },
                GroundTruth {
                    alpha_norm: Some(AlphaProfile::Constant(0.0)),
                    a: Some(0.0),
                    b: Some(0.0),
                    ends: Some(1),
                    sectional_curvature: Some(0.0),
                    source: "totally geodesic subspace",
                },
            )
        }
        "totally-geodesic" => {
            let m = rd.dim("m", 2)?;
            let n = rd.dim("n", m + 1)?;
            let kappa = rd.get("kappa", -1.0);
            if !(kappa < 0.0 && kappa.is_finite()) {
                return Err(Error::domain(format!("{name}: `kappa` must be negative, got {kappa}")));
            }
            let t = rd.positive("truncation", s_raw(kappa, 2.0))?;
            check_dims(name, m, n)?;
            let mut coords: Vec<String> = (1..=n)
                .map(|k| if k <= m { format!("x{k} = u{k}") } else { format!("x{k} = 0") })
                .collect();
            let sq: Vec<String> = (1..=m).map(|k| format!("u{k}^2")).collect();
            coords.push(format!("x{} = sqrt(-1/K + {})", n + 1, sq.join(" + ")));
            let axes: Vec<String> = (1..=m).map(|k| format!("u{k} in [-T, T]")).collect();
            let source = format!(
                "m = {m}; n = {n}; ambient = hyperbolic(K)\nconst K = {}\nconst T = {}\n{}\ndomain {}\nbasepoint = ({})",
                fmt_f(kappa),
                fmt_f(t),
                coords.join("\n"),
                axes.join(", "),
                vec!["0"; m].join(", ")
            );
            (
                CatalogChart {
                    name: name.into(),
                    kind: Kind::TotallyGeodesic,
                    m,
                    space: SpaceKind::hyperbolic(n, kappa),
                    domain: vec![AxisDomain::truncated(-t, t); m],
                    basepoint: vec![0.0; m],
                    pole: None,
                    resolution: vec![if m <= 2 { 161 } else { 41 }; m],
                    source: Some(source),
                },
                GroundTruth {
                    alpha_norm: Some(AlphaProfile::Constant(0.0)),
                    a: Some(0.0),
                    b: Some(0.0),
                    ends: Some(1),
                    sectional_curvature: Some(kappa),
                    source: "totally geodesic subspace",
                },
            )
        }
        "cylinder" => {
            let radius = rd.positive("radius", 1.0)?;
            let t = rd.positive("truncation", 5.0)?;
            let source = format!(
                "m = 2; n = 3; ambient = euclidean\nconst R = {}\nconst T = {}\nx1 = R*cos(u1)\nx2 = R*sin(u1)\nx3 = u2\ndomain u1 in [0, 2*pi] periodic, u2 in [-T, T]\nbasepoint = (0, 0)",
                fmt_f(radius),
                fmt_f(t)
            );
            (
                CatalogChart {
                    name: name.into(),
                    kind: Kind::Cylinder { radius },
                    m: 2,
                    space: SpaceKind::euclidean(3),
                    domain: vec![AxisDomain::periodic(0.0, 2.0 * PI), AxisDomain::truncated(-t, t)],
                    basepoint: vec![0.0, 0.0],
                    pole: None,
                    resolution: vec![64, 161],
                    source: Some(source),
                },
                GroundTruth {
                    alpha_norm: Some(AlphaProfile::Constant(1.0 / radius)),
                    a: Some(f64::INFINITY),
                    b: Some(f64::INFINITY),
                    ends: Some(2),
                    sectional_curvature: Some(0.0),
                    source: "principal curvatures (1/R, 0)",
                },
            )
        }
        "sphere" => {
            let radius = rd.positive("radius", 1.0)?;
            let source = format!(
                "m = 2; n = 3; ambient = euclidean\nconst R = {}\nx1 = R*sin(u1)*cos(u2)\nx2 = R*sin(u1)*sin(u2)\nx3 = R*cos(u1)\ndomain u1 in [{}, pi - {}] cut, u2 in [0, 2*pi] periodic\nbasepoint = (pi/2, 0)",
                fmt_f(radius),
                fmt_f(POLE_MARGIN),
                fmt_f(POLE_MARGIN)
            );
            (
                CatalogChart {
                    name: name.into(),
                    kind: Kind::Sphere { radius },
                    m: 2,
                    space: SpaceKind::euclidean(3),
                    domain: sphere_axes(2),
                    basepoint: vec![PI / 2.0, 0.0],
                    pole: None,
                    resolution: vec![64, 64],
                    source: Some(source),
                },
                GroundTruth {
                    alpha_norm: Some(AlphaProfile::Constant(2f64.sqrt() / radius)),
                    a: None,
                    b: None,
                    ends: Some(0),
                    sectional_curvature: Some(1.0 / (radius * radius)),
                    source: "umbilic, principal curvatures 1/R",
                },
            )
        }
        "catenoid" => {
            let t = rd.positive("truncation", 5.0)?;
            let source = format!(
                "m = 2; n = 3; ambient = euclidean\nconst T = {}\nx1 = cosh(u1)*cos(u2)\nx2 = cosh(u1)*sin(u2)\nx3 = u1\ndomain u1 in [-T, T], u2 in [0, 2*pi] periodic\nbasepoint = (0, 0)",
                fmt_f(t)
            );
            (
                CatalogChart {
                    name: name.into(),
                    kind: Kind::Catenoid,
                    m: 2,
                    space: SpaceKind::euclidean(3),
                    domain: vec![AxisDomain::truncated(-t, t), AxisDomain::periodic(0.0, 2.0 * PI)],
                    basepoint: vec![0.0, 0.0],
                    pole: None,
                    resolution: vec![200, 64],
                    source: Some(source),
                },
                GroundTruth {
                    alpha_norm: Some(AlphaProfile::Catenoid),
                    a: Some(0.0),
                    b: None,
                    ends: Some(2),
                    sectional_curvature: None,
                    source: "classical minimal surface, principal curvatures ±1/cosh² u",
                },
            )
        }
        "rotation-hypersurface" => {
            let n = rd.dim("n", 2)?;
            let a = rd.get("a", 1.0);
            let t = rd.positive("truncation", 6.0)?;
            if !(a > 0.5 && a.is_finite()) {
                return Err(Error::domain(format!("{name}: `a` must satisfy a > 1/2, got {a}")));
            }
            if !(2..=MAX_DIM).contains(&n) {
                return Err(Error::domain(format!("{name}: `n` must lie in 2..={MAX_DIM}, got {n}")));
            }
            let profile = Arc::new(RotationProfile::new(a, t + 1.0));
            let mut domain = vec![AxisDomain::truncated(-t, t)];
            domain.extend(sphere_axes(n - 1));
            let mut pole = vec![0.0; n + 2];
            pole[n + 1] = 1.0;
            let mut basepoint = vec![0.0];
            basepoint.extend(domain[1..].iter().map(|d| if d.periodic { 0.0 } else { PI / 2.0 }));
            let resolution = match n {
                2 => vec![400, 32],
                3 => vec![400, 8, 16],
                _ => {
                    let mut r = vec![200];
                    r.extend(vec![6; n - 2]);
                    r.push(12);
                    r
                }
            };
            (
                CatalogChart {
                    name: name.into(),
                    kind: Kind::Rotation { a, profile },
                    m: n,
                    space: SpaceKind::hyperbolic(n + 1, -1.0),
                    domain,
                    basepoint,
                    pole: Some(pole),
                    resolution,
                    source: None,
                },
                GroundTruth {
                    alpha_norm: Some(AlphaProfile::Rotation { n, a }),
                    a: Some(0.0),
                    b: Some((n as f64 * (a * a - 0.25)).sqrt() / (2.0 * a)),
                    ends: Some(2),
                    sectional_curvature: None,
                    source: "principal curvatures lambda = -mu = -sqrt(a^2 - 1/4)/x1^2",
                },
            )
        }
        "circle" => {
            let radius = rd.positive("radius", 1.0)?;
            let source = format!(
                "m = 1; n = 2; ambient = euclidean\nconst R = {}\nx1 = R*cos(u1)\nx2 = R*sin(u1)\ndomain u1 in [0, 2*pi] periodic\nbasepoint = (0)\npole = (0, 0)",
                fmt_f(radius)
            );
            (
                CatalogChart {
                    name: name.into(),
                    kind: Kind::Circle { radius },
                    m: 1,
                    space: SpaceKind::euclidean(2),
                    domain: vec![AxisDomain::periodic(0.0, 2.0 * PI)],
                    basepoint: vec![0.0],
                    pole: Some(vec![0.0, 0.0]),
                    resolution: vec![256],
                    source: Some(source),
                },
                GroundTruth {
                    alpha_norm: Some(AlphaProfile::Constant(1.0 / radius)),
                    a: None,
                    b: None,
                    ends: Some(0),
                    sectional_curvature: None,
                    source: "round circle about the pole",
                },
            )
        }
        other => return Err(Error::domain(format!("unknown catalog entry `{other}`"))),
    };
    rd.finish()?;
    Ok(built)
}

fn check_dims(name: &str, m: usize, n: usize) -> Result<()> {
    if m > MAX_DIM {
        return Err(Error::domain(format!("{name}: `m` must be at most {MAX_DIM}")));
    }
    if n <= m {
        return Err(Error::domain(format!("{name}: need n > m, got m = {m}, n = {n}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_chart;
    use crate::immersion::point_geometry;
    use crate::spaceform::Ambient;

    fn build(name: &str, kv: &[(&str, f64)]) -> (CatalogChart, GroundTruth) {
        let params = kv.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        catalog_build(name, &params).unwrap()
    }

    fn ambient_for(chart: &dyn Chart) -> Ambient {
        let space = chart.space();
        let pole = match chart.pole() {
            Some(p) => p,
            None => chart.eval_position(&chart.basepoint()).unwrap(),
        };
        Ambient::new(space, pole).unwrap()
    }

    #[test]
    fn invalid_parameters() {
        let params: Params = [("n".to_string(), 3.0), ("a".to_string(), 0.4)].into();
        match catalog_build("rotation-hypersurface", &params) {
            Err(Error::Domain(msg)) => assert!(msg.contains("a > 1/2")),
            other => panic!("{other:?}"),
        }
        let params: Params = [("radius".to_string(), 1.0), ("bogus".to_string(), 1.0)].into();
        assert!(catalog_build("sphere", &params).is_err());
        assert!(catalog_build("klein-bottle", &Params::new()).is_err());
    }

    #[test]
    fn rotation_profile_stays_on_constraints() {
        let (chart, truth) = build("rotation-hypersurface", &[("n", 2.0), ("a", 1.0)]);
        for &s in &[-5.5, -1.0, 0.0, 0.3, 2.0, 5.9] {
            let jets = chart.eval_jets(&[s, 0.4]).unwrap();
            let x: Vec<f64> = jets.iter().map(|j| j.value()).collect();
            let q = crate::spaceform::lorentz(&x, &x);
            assert!((q + 1.0).abs() < 1e-8 * x[3] * x[3]);
            let v: Vec<f64> = jets.iter().map(|j| j.partial(0)).collect();
            let speed = crate::spaceform::lorentz(&v, &v);
            assert!((speed - 1.0).abs() < 1e-8, "speed {speed} at {s}");
        }
        let alpha0 = truth.alpha_norm.unwrap().at(&[0.0]);
        assert!((alpha0 * alpha0 - 6.0).abs() < 1e-12);
    }

    #[test]
    fn profile_table_matches_quadrature() {
        let prof = RotationProfile::new(1.0, 7.0);
        let exact = crate::quadrature::integrate(|s| prof.dpsi(s), 0.0, 3.3, 1e-14).unwrap();
        assert!((prof.psi(3.3) - exact).abs() < 1e-12);
        assert_eq!(prof.psi(-1.25), -prof.psi(1.25));
        let h = 1e-5;
        let fd = (prof.dpsi(1.7 + h) - prof.dpsi(1.7 - h)) / (2.0 * h);
        assert!((fd - prof.ddpsi(1.7)).abs() < 1e-8);
    }

    #[test]
    fn rotation_alpha_matches_closed_form() {
        for (n, a) in [(2usize, 1.0), (3, 1.0), (2, 2.0)] {
            let (chart, truth) = build("rotation-hypersurface", &[("n", n as f64), ("a", a)]);
            let amb = ambient_for(&chart);
            let prof = truth.alpha_norm.unwrap();
            for &s in &[0.0, 0.5, 1.5, 3.0, 5.5] {
                let mut u = chart.basepoint();
                u[0] = s;
                let pg = point_geometry(&amb, &chart, &u).unwrap();
                let want = prof.at(&u);
                assert!(
                    (pg.alpha_norm - want).abs() / want < 1e-6,
                    "n={n} a={a} s={s}: {} vs {want}",
                    pg.alpha_norm
                );
            }
        }
    }

    #[test]
    fn expression_forms_agree() {
        for (name, kv) in [
            ("flat-subspace", vec![("m", 3.0)]),
            ("totally-geodesic", vec![("m", 2.0), ("kappa", -0.5)]),
            ("cylinder", vec![("radius", 1.5)]),
            ("sphere", vec![("radius", 2.0)]),
            ("catenoid", vec![]),
            ("circle", vec![("radius", 0.7)]),
        ] {
            let (chart, _) = build(name, &kv);
            let spec = parse_chart(chart.expression_source().unwrap()).unwrap();
            assert_eq!(spec.domain(), chart.domain(), "{name}");
            let u = chart.basepoint();
            let a = chart.eval_jets(&u).unwrap();
            let b = spec.eval_jets(&u).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x.value() - y.value()).abs() < 1e-12, "{name}");
            }
        }
    }
}
