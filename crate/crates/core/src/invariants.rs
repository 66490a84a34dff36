//! Tameness invariants, their classification, and the pinching functions
//! behind the volume-growth bounds.

use serde::{Deserialize, Serialize};

use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::mesh::MeshGraph;
use crate::quadrature::integrate;
use crate::spaceform::{c_raw, s_raw};

/// Tail value below which the immersion is reported asymptotically flat.
pub const FLATNESS_TOL: f64 = 0.05;
/// `‖α‖` below this is roundoff from a vanishing second fundamental form.
pub const ALPHA_ROUNDOFF: f64 = 1e-10;
/// Relative oscillation allowed in the final window of a bounded `b` tail.
pub const OSCILLATION_TOL: f64 = 0.10;
/// Number of exhaustion radii when none are supplied.
pub const DEFAULT_RADII: usize = 16;

/// Model for the decreasing function `δ(t)` in the gradient estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DeltaModel {
    /// `δ ≡ 0`, the idealised limit.
    #[default]
    Zero,
    /// `δ(t) = d0 · t0 / t`.
    Inverse { d0: f64, t0: f64 },
}

impl DeltaModel {
    /// `δ(t)`; `None` means `t = ∞`.
    pub fn at(&self, t: Option<f64>) -> f64 {
        match (*self, t) {
            (DeltaModel::Zero, _) | (DeltaModel::Inverse { .. }, None) => 0.0,
            (DeltaModel::Inverse { d0, t0 }, Some(t)) => d0 * t0 / t,
        }
    }

    pub fn label(&self) -> String {
        match self {
            DeltaModel::Zero => "delta=0".into(),
            DeltaModel::Inverse { d0, t0 } => format!("delta={d0}*{t0}/t"),
        }
    }
}

/// Decay profile `G(s)` of `‖α‖` feeding the gradient estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DecayProfile {
    /// `c / s`.
    Inverse { c: f64 },
    /// `c / (S_κ(s) C_κ(s))`.
    SinhCosh { c: f64 },
    /// `c / S_κ(s)`.
    Sinh { c: f64 },
}

/// `δ(t) + (1/S_κ(t)) ∫_{R0}^t S_κ(s) G(s) ds`.
pub fn kasue_bound(kappa: f64, profile: DecayProfile, r0: f64, t: f64, delta: DeltaModel) -> Result<f64> {
    if !(kappa <= 0.0 && kappa.is_finite()) {
        return Err(Error::domain(format!("curvature must be finite and <= 0, got {kappa}")));
    }
    if !(r0 > 0.0) {
        return Err(Error::domain(format!("R0 must be positive, got {r0}")));
    }
    if !(t > r0) {
        return Err(Error::domain(format!("need t > R0, got t = {t}, R0 = {r0}")));
    }
    let integrand = |s: f64| match profile {
        DecayProfile::Inverse { c } => s_raw(kappa, s) * c / s,
        DecayProfile::SinhCosh { c } => c / c_raw(kappa, s),
        DecayProfile::Sinh { c } => c,
    };
    let integral = integrate(integrand, r0, t, 1e-12)?;
    Ok(delta.at(Some(t)) + integral / s_raw(kappa, t))
}

/// The pinching functions at one radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Pinching {
    pub f: f64,
    pub lambda0: f64,
    pub lambda: f64,
    pub u_c: f64,
    pub delta: f64,
}

/// `F(c, ∞) = (1 − 4c²) / (c² + (1 + c²)² / (1 − c²))`.
pub fn f_infinity(c: f64) -> Result<f64> {
    pinching_functions(0.0, c, None, DeltaModel::Zero, 0.0).map(|p| p.f)
}

/// Evaluate `F(c, t)`, `Λ⁰_c(t)`, `Λ_c(t)` and `u_c(t)`; `t = None` is
/// `t = ∞`.
///
/// For `κ = 0`, `u_c = δ + c` and `Λ_c` reduces to `Λ⁰_c`. For `κ < 0`,
/// `u_c(t) = δ(t) + c (t − R0) / S_κ(t)`.
pub fn pinching_functions(kappa: f64, c: f64, t: Option<f64>, delta: DeltaModel, r0: f64) -> Result<Pinching> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::domain(format!("c must be finite and >= 0, got {c}")));
    }
    if !(kappa <= 0.0) {
        return Err(Error::domain(format!("curvature must be <= 0, got {kappa}")));
    }
    if let Some(t) = t {
        if !(t > 0.0) {
            return Err(Error::domain(format!("t must be positive, got {t}")));
        }
    }
    let d = delta.at(t);
    let dc = d + c;
    if !(dc < 1.0) {
        return Err(Error::domain(format!("F(c, t) needs delta + c < 1, got {dc}")));
    }
    let lambda0 = 1.0 - 2.0 * c * (c + dc);
    let f = lambda0 / (c * c + (1.0 + c * dc).powi(2) / (1.0 - dc * dc));
    let (lambda, u_c) = if kappa == 0.0 {
        (lambda0, dc)
    } else {
        match t {
            None => (1.0, 0.0),
            Some(t) => {
                let u = d + c * (t - r0) / s_raw(kappa, t);
                let cc = c / c_raw(kappa, t);
                (1.0 - 2.0 * cc * cc - 2.0 * c * u, u)
            }
        }
    };
    Ok(Pinching {
        f,
        lambda0,
        lambda,
        u_c,
        delta: d,
    })
}

/// The critical constant with `F(c*, ∞) = 1/4`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Threshold {
    pub closed_form: f64,
    pub bisection: f64,
}

impl Threshold {
    pub fn discrepancy(&self) -> f64 {
        (self.closed_form - self.bisection).abs()
    }
}

pub fn threshold_c_star() -> Threshold {
    let closed_form = ((23.0 - 337f64.sqrt()) / 32.0).sqrt();
    let g = |c: f64| f_infinity(c).expect("c lies in [0, 1/2]") - 0.25;
    let (mut lo, mut hi) = (0.0, 0.5);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Threshold {
        closed_form,
        bisection: 0.5 * (lo + hi),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    StronglyTamed,
    ExtrinsicallyAsymptoticallyFlat,
    Tamed,
    NotTamed,
    Inconclusive,
}

/// Summary of a tail curve: last value and the trend of its final third.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailEstimate {
    pub last: f64,
    pub slope: f64,
    pub window: (f64, f64),
    pub oscillation: f64,
}

fn estimate(tail: &Curve) -> TailEstimate {
    let start = tail.tail_start(1.0 / 3.0, 2);
    let win = tail.slice_from(start);
    TailEstimate {
        last: tail.last().unwrap_or(0.0),
        slope: win.slope(),
        window: (win.t[0], *win.t.last().unwrap_or(&win.t[0])),
        oscillation: win.oscillation(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct InvariantReport {
    pub kappa: f64,
    pub radii: Vec<f64>,
    /// `t_i ↦ a_i`, suprema over `r ≥ t_i`.
    pub a_tail: Curve,
    pub b_tail: Curve,
    /// Maxima over the shells `t_i ≤ r < t_{i+1}`, used to detect growth.
    pub a_shell: Curve,
    pub b_shell: Curve,
    pub a_estimate: TailEstimate,
    /// `None` when the `b` weights grow across the final window.
    pub b_estimate: Option<TailEstimate>,
    pub b_infinite: bool,
    pub tamed: bool,
    pub strongly_tamed: bool,
    pub asymptotically_flat: bool,
    pub classification: Classification,
    pub unreached: usize,
    pub warnings: Vec<String>,
}

/// Evenly spaced exhaustion radii up to `0.9 ×` the safe radius.
pub fn default_radii(mesh: &MeshGraph, count: usize) -> Vec<f64> {
    let top = 0.9 * mesh.safe_radius();
    let start = mesh.min_r();
    let count = count.max(2);
    (1..=count)
        .map(|k| start + (top - start) * k as f64 / count as f64)
        .collect()
}

fn weights(kappa: f64, rho: f64) -> (f64, f64) {
    if kappa == 0.0 {
        (rho, rho)
    } else {
        let (s, c) = (s_raw(kappa, rho), c_raw(kappa, rho));
        (s / c, s * c)
    }
}

fn is_growing(shell: &Curve) -> bool {
    if shell.len() < 2 {
        return false;
    }
    let win = shell.slice_from(shell.tail_start(1.0 / 3.0, 2));
    win.is_non_decreasing() && win.last() > win.values.first().copied()
}

/// Tail suprema of `(S/C)(ρ)‖α‖` and `(C·S)(ρ)‖α‖` over `r ≥ t_i`.
pub fn invariant_tails(mesh: &MeshGraph, radii: &[f64]) -> Result<InvariantReport> {
    if radii.is_empty() {
        return Err(Error::MissingInput("exhaustion radii".into()));
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("exhaustion radii must be strictly increasing"));
    }
    let limit = 0.9 * mesh.safe_radius();
    if let Some(&t) = radii.iter().find(|&&t| t > limit * (1.0 + 1e-12)) {
        return Err(Error::Truncation(format!(
            "exhaustion radius {t} exceeds 0.9 × safe radius = {limit}"
        )));
    }
    let kappa = mesh.kappa();
    let samples: Vec<(f64, f64, f64)> = mesh
        .vertices
        .iter()
        .filter(|v| v.rho.is_finite())
        .map(|v| {
            let (wa, wb) = weights(kappa, v.rho);
            let alpha = if v.alpha_norm < ALPHA_ROUNDOFF { 0.0 } else { v.alpha_norm };
            (v.r, wa * alpha, wb * alpha)
        })
        .collect();
    let n = radii.len();
    let mut a_tail = vec![f64::NEG_INFINITY; n];
    let mut b_tail = vec![f64::NEG_INFINITY; n];
    let mut a_shell = vec![f64::NEG_INFINITY; n];
    let mut b_shell = vec![f64::NEG_INFINITY; n];
    for &(r, a, b) in &samples {
        // Index of the last radius not exceeding r.
        let k = radii.partition_point(|&t| t <= r);
        if k == 0 {
            continue;
        }
        a_shell[k - 1] = a_shell[k - 1].max(a);
        b_shell[k - 1] = b_shell[k - 1].max(b);
    }
    let (mut ra, mut rb) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for i in (0..n).rev() {
        ra = ra.max(a_shell[i]);
        rb = rb.max(b_shell[i]);
        if ra == f64::NEG_INFINITY {
            return Err(Error::EmptyTail(radii[i]));
        }
        a_tail[i] = ra;
        b_tail[i] = rb;
    }
    let shell_curve = |vals: &[f64]| -> Result<Curve> {
        let (t, v): (Vec<f64>, Vec<f64>) = radii
            .iter()
            .zip(vals)
            .filter(|(_, v)| v.is_finite())
            .map(|(t, v)| (*t, *v))
            .unzip();
        Curve::new(t, v)
    };
    let a_tail = Curve::new(radii.to_vec(), a_tail)?;
    let b_tail = Curve::new(radii.to_vec(), b_tail)?;
    let a_shell = shell_curve(&a_shell)?;
    let b_shell = shell_curve(&b_shell)?;

    let a_estimate = estimate(&a_tail);
    let b_infinite = is_growing(&b_shell);
    let b_estimate = (!b_infinite).then(|| estimate(&b_tail));
    let a_growing = is_growing(&a_shell);

    let asymptotically_flat = a_estimate.last < FLATNESS_TOL && a_estimate.slope <= 0.0;
    let tamed = a_estimate.last < 1.0 && a_estimate.slope <= 0.0;
    let strongly_tamed = kappa < 0.0 && b_estimate.is_some_and(|b| b.oscillation < OSCILLATION_TOL);
    let classification = if strongly_tamed {
        Classification::StronglyTamed
    } else if asymptotically_flat {
        Classification::ExtrinsicallyAsymptoticallyFlat
    } else if tamed {
        Classification::Tamed
    } else if a_estimate.last >= 1.0 && a_growing {
        Classification::NotTamed
    } else {
        Classification::Inconclusive
    };
    let mut warnings = Vec::new();
    if mesh.unreached > 0 {
        warnings.push(format!(
            "{} vertices unreachable from the basepoint were excluded",
            mesh.unreached
        ));
    }
    if strongly_tamed && !asymptotically_flat {
        warnings.push(format!(
            "b tail is bounded but the last a_i = {:.4} is not below {FLATNESS_TOL}; refine the mesh",
            a_estimate.last
        ));
    }
    Ok(InvariantReport {
        kappa,
        radii: radii.to_vec(),
        a_tail,
        b_tail,
        a_shell,
        b_shell,
        a_estimate,
        b_estimate,
        b_infinite,
        tamed,
        strongly_tamed,
        asymptotically_flat,
        classification,
        unreached: mesh.unreached,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{catalog_build, Params};
    use crate::chart::Chart;
    use crate::exec::Exec;
    use crate::mesh::build_mesh;
    use crate::spaceform::Ambient;
    use proptest::prelude::*;

    fn mesh_for(name: &str, kv: &[(&str, f64)], res: Option<&[usize]>) -> MeshGraph {
        let params: Params = kv.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let (chart, _) = catalog_build(name, &params).unwrap();
        let pole = chart
            .pole()
            .unwrap_or_else(|| chart.eval_position(&chart.basepoint()).unwrap());
        let amb = Ambient::new(chart.space(), pole).unwrap();
        let res = res.map_or_else(|| chart.default_resolution(), |r| r.to_vec());
        build_mesh(&amb, &chart, &res, Exec::Parallel).unwrap()
    }

    #[test]
    fn kasue_examples() {
        let v = kasue_bound(0.0, DecayProfile::Inverse { c: 0.3 }, 1.0, 10.0, DeltaModel::Zero).unwrap();
        assert!((v - 0.27).abs() < 1e-12);
        let v = kasue_bound(-1.0, DecayProfile::Sinh { c: 0.3 }, 1.0, 5.0, DeltaModel::Zero).unwrap();
        assert!((v - 0.3 * 4.0 / 5f64.sinh()).abs() < 1e-12);
        assert!((v - 0.01617).abs() < 1e-5);
        let d = DeltaModel::Inverse { d0: 0.2, t0: 2.0 };
        let v = kasue_bound(-0.5, DecayProfile::SinhCosh { c: 0.0 }, 1.0, 4.0, d).unwrap();
        assert_eq!(v, 0.1);
        assert!(kasue_bound(0.0, DecayProfile::Inverse { c: 0.3 }, 2.0, 2.0, DeltaModel::Zero).is_err());
    }

    #[test]
    fn sinh_cosh_profile_closed_form() {
        // ∫ S · c/(S C) = c ∫ 1/cosh = 2c (atan(tanh(s/2))) for κ = −1.
        let gd = |s: f64| 2.0 * (s / 2.0).tanh().atan();
        let v = kasue_bound(-1.0, DecayProfile::SinhCosh { c: 0.4 }, 0.5, 3.0, DeltaModel::Zero).unwrap();
        let want = 0.4 * (gd(3.0) - gd(0.5)) / 3f64.sinh();
        assert!((v - want).abs() < 1e-12);
    }

    fn catenoid_mesh() -> &'static MeshGraph {
        static MESH: std::sync::OnceLock<MeshGraph> = std::sync::OnceLock::new();
        MESH.get_or_init(|| mesh_for("catenoid", &[], Some(&[100, 32])))
    }

    proptest! {
        #[test]
        fn tails_never_increase(mask in prop::collection::vec(any::<bool>(), 16)) {
            let mesh = catenoid_mesh();
            let radii: Vec<f64> = default_radii(mesh, 16).into_iter().zip(&mask).filter(|(_, &k)| k).map(|(t, _)| t).collect();
            prop_assume!(!radii.is_empty());
            let rep = invariant_tails(mesh, &radii).unwrap();
            for tail in [&rep.a_tail, &rep.b_tail] {
                prop_assert!(tail.values.windows(2).all(|w| w[1] <= w[0]), "{:?}", tail.values);
            }
        }
    }

    proptest! {
        #[test]
        fn kasue_flat_closed_form(c in 0.0..1.0f64, r0 in 0.01..10.0f64, gap in 0.01..50.0f64) {
            let t = r0 + gap;
            let v = kasue_bound(0.0, DecayProfile::Inverse { c }, r0, t, DeltaModel::Zero).unwrap();
            prop_assert!((v - c * (1.0 - r0 / t)).abs() < 1e-10);
        }
    }

    #[test]
    fn pinching_examples() {
        assert_eq!(f_infinity(0.0).unwrap(), 1.0);
        let p = pinching_functions(0.0, 0.3, None, DeltaModel::Zero, 0.0).unwrap();
        assert!((p.lambda0 - 0.64).abs() < 1e-15);
        assert_eq!(p.lambda, p.lambda0);
        assert!(f_infinity(1.0).is_err());
        let th = threshold_c_star();
        assert!((f_infinity(th.closed_form).unwrap() - 0.25).abs() < 1e-12);
        assert!(th.discrepancy() < 1e-10);
        assert!((th.closed_form - 0.380_888_773_5).abs() < 1e-10);
        assert!(f_infinity(th.closed_form - 1e-6).unwrap() > 0.25);
        assert!(f_infinity(th.closed_form + 1e-6).unwrap() < 0.25);
    }

    #[test]
    fn hyperbolic_pinching_uses_u_c() {
        let p = pinching_functions(-1.0, 0.3, Some(5.0), DeltaModel::Zero, 1.0).unwrap();
        let u = 0.3 * 4.0 / 5f64.sinh();
        assert!((p.u_c - u).abs() < 1e-15);
        let want = 1.0 - 2.0 * (0.3 / 5f64.cosh()).powi(2) - 2.0 * 0.3 * u;
        assert!((p.lambda - want).abs() < 1e-15);
        let inf = pinching_functions(-1.0, 0.3, None, DeltaModel::Zero, 1.0).unwrap();
        assert_eq!(inf.lambda, 1.0);
    }

    #[test]
    fn f_infinity_strictly_decreasing() {
        let mut prev = f_infinity(0.0).unwrap();
        for k in 1..1000 {
            let c = 0.49 * k as f64 / 999.0;
            let v = f_infinity(c).unwrap();
            assert!(v - prev < 0.0, "c = {c}");
            prev = v;
        }
    }

    #[test]
    fn flat_plane_is_asymptotically_flat() {
        let mesh = mesh_for("flat-subspace", &[], Some(&[41, 41]));
        let rep = invariant_tails(&mesh, &default_radii(&mesh, DEFAULT_RADII)).unwrap();
        assert!(rep.a_tail.values.iter().all(|&a| a == 0.0));
        assert_eq!(rep.classification, Classification::ExtrinsicallyAsymptoticallyFlat);
    }

    #[test]
    fn totally_geodesic_is_strongly_tamed() {
        let mesh = mesh_for("totally-geodesic", &[("m", 3.0)], Some(&[15, 15, 15]));
        let rep = invariant_tails(&mesh, &default_radii(&mesh, DEFAULT_RADII)).unwrap();
        assert!(!rep.b_infinite);
        assert_eq!(rep.b_estimate.unwrap().last, 0.0);
        assert_eq!(rep.classification, Classification::StronglyTamed);
    }

    #[test]
    fn cylinder_is_not_tamed() {
        let mesh = mesh_for("cylinder", &[], Some(&[32, 81]));
        let rep = invariant_tails(&mesh, &default_radii(&mesh, DEFAULT_RADII)).unwrap();
        assert_eq!(rep.classification, Classification::NotTamed);
        assert!(rep.b_infinite);
        assert!(rep.a_tail.is_non_increasing());
    }

    #[test]
    fn catenoid_is_asymptotically_flat() {
        let mesh = mesh_for("catenoid", &[], Some(&[200, 32]));
        let rep = invariant_tails(&mesh, &default_radii(&mesh, DEFAULT_RADII)).unwrap();
        assert!(rep.a_estimate.last < FLATNESS_TOL, "{:?}", rep.a_estimate);
        assert_eq!(rep.classification, Classification::ExtrinsicallyAsymptoticallyFlat);
    }

    #[test]
    fn rotation_hypersurface_b() {
        let mesh = mesh_for("rotation-hypersurface", &[("n", 2.0), ("a", 1.0)], None);
        let rep = invariant_tails(&mesh, &default_radii(&mesh, DEFAULT_RADII)).unwrap();
        let want = 1.5f64.sqrt() / 2.0;
        let b = rep.b_estimate.unwrap().last;
        assert!((b - want).abs() < 0.05 * want, "b = {b}");
        assert_eq!(rep.classification, Classification::StronglyTamed);
        assert!(rep.asymptotically_flat);
        assert!(rep.b_tail.is_non_increasing());
    }

    #[test]
    fn radii_validation() {
        let mesh = mesh_for("flat-subspace", &[], Some(&[21, 21]));
        assert!(invariant_tails(&mesh, &[]).is_err());
        assert!(invariant_tails(&mesh, &[0.5, 0.4]).is_err());
        assert!(matches!(invariant_tails(&mesh, &[0.5, 5.0]), Err(Error::Truncation(_))));
    }
}
