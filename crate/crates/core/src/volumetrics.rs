//! Volumes of extrinsic balls and spheres, model ratios and the
//! volume-growth verdicts.
//!
//! Every grid cell is split into `3^m` equal boxes sampled at their
//! centres. A box contributes to `D_t` with the fraction of its extent in
//! the `r` direction that lies below `t`, which keeps ball volumes smooth in
//! `t`. Sphere volumes come from differentiating the coarea-weighted
//! cumulative `∫_{D_t} |∇^M r| dV`.

use serde::Serialize;

use crate::chart::Chart;
use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::immersion::{metric, point_geometry, radial_sample, sectional_curvature_m};
use crate::invariants::InvariantReport;
use crate::mesh::MeshGraph;
use crate::spaceform::{model_ball, model_sphere, omega};

/// Default relative tolerance of the growth verdicts.
pub const VERDICT_TOL: f64 = 0.03;
/// Number of radii on a default volume curve.
pub const DEFAULT_CURVE_POINTS: usize = 32;

#[derive(Clone, Copy, Debug)]
struct Sample {
    r: f64,
    w: f64,
    wc: f64,
    half: f64,
}

impl Sample {
    fn fraction(&self, t: f64) -> f64 {
        if self.half == 0.0 {
            return if self.r < t { 1.0 } else { 0.0 };
        }
        ((t - self.r) / (2.0 * self.half) + 0.5).clamp(0.0, 1.0)
    }
}

/// Sorted volume samples of a mesh.
#[derive(Debug)]
pub struct VolumeProfile<'a> {
    mesh: &'a MeshGraph,
    samples: Vec<Sample>,
    prefix_w: Vec<f64>,
    prefix_wc: Vec<f64>,
    max_half: f64,
}

fn sub_offsets(m: usize) -> Vec<Vec<f64>> {
    let total = 3usize.pow(m as u32);
    (0..total)
        .map(|mut c| {
            (0..m)
                .map(|_| {
                    let k = c % 3;
                    c /= 3;
                    (k as f64 + 0.5) / 3.0
                })
                .collect()
        })
        .collect()
}

impl<'a> VolumeProfile<'a> {
    pub fn build(mesh: &'a MeshGraph, chart: &dyn Chart, exec: Exec) -> Result<Self> {
        if chart.name() != mesh.chart_name || chart.dim() != mesh.dim() {
            return Err(Error::DimensionMismatch(format!(
                "mesh was built for `{}`, got chart `{}`",
                mesh.chart_name,
                chart.name()
            )));
        }
        let grid = &mesh.grid;
        let m = grid.dim();
        let offsets = sub_offsets(m);
        let weight = grid.cell_measure() / offsets.len() as f64;
        let side: Vec<f64> = grid.spacing.iter().map(|h| h / 3.0).collect();
        let per_cell: Vec<Vec<Sample>> = exec.try_map_range(grid.cell_count(), |cell| {
            offsets
                .iter()
                .map(|frac| {
                    let u = grid.wrap(grid.cell_point(cell, frac));
                    let s = radial_sample(&mesh.ambient, chart, &u)?;
                    let extent: f64 = s.dr.iter().zip(&side).map(|(d, h)| d.abs() * h).sum();
                    let w = s.sqrt_det_g * weight;
                    Ok(Sample {
                        r: s.r,
                        w,
                        wc: w * s.tangential_norm,
                        half: 0.5 * extent,
                    })
                })
                .collect()
        })?;
        let mut samples: Vec<Sample> = per_cell.into_iter().flatten().collect();
        samples.sort_by(|a, b| a.r.total_cmp(&b.r));
        let mut prefix_w = Vec::with_capacity(samples.len() + 1);
        let mut prefix_wc = Vec::with_capacity(samples.len() + 1);
        let (mut acc_w, mut acc_wc) = (0.0, 0.0);
        prefix_w.push(0.0);
        prefix_wc.push(0.0);
        for s in &samples {
            acc_w += s.w;
            acc_wc += s.wc;
            prefix_w.push(acc_w);
            prefix_wc.push(acc_wc);
        }
        let max_half = samples.iter().map(|s| s.half).fold(0.0, f64::max);
        Ok(VolumeProfile {
            mesh,
            samples,
            prefix_w,
            prefix_wc,
            max_half,
        })
    }

    pub fn mesh(&self) -> &MeshGraph {
        self.mesh
    }

    fn compact(&self) -> bool {
        !self.mesh.grid.has_truncation_faces()
    }

    /// Largest radius at which balls are trusted.
    pub fn ball_limit(&self) -> f64 {
        if self.compact() {
            f64::INFINITY
        } else {
            0.9 * self.mesh.safe_radius()
        }
    }

    fn cumulative(&self, t: f64, coarea: bool) -> f64 {
        let lo = self.samples.partition_point(|s| s.r < t - self.max_half);
        let hi = self.samples.partition_point(|s| s.r <= t + self.max_half);
        let prefix = if coarea { &self.prefix_wc } else { &self.prefix_w };
        let mut total = prefix[lo];
        for s in &self.samples[lo..hi] {
            total += s.fraction(t) * if coarea { s.wc } else { s.w };
        }
        total
    }

    fn check_radius(&self, t: f64) -> Result<()> {
        if !(t > 0.0) {
            return Err(Error::domain(format!("radius must be positive, got {t}")));
        }
        let limit = self.ball_limit();
        if t > limit * (1.0 + 1e-12) {
            return Err(Error::Truncation(format!(
                "radius {t} exceeds 0.9 × safe radius = {limit}"
            )));
        }
        Ok(())
    }

    /// `vol(D_t)`.
    pub fn ball_volume(&self, t: f64) -> Result<f64> {
        self.check_radius(t)?;
        Ok(self.cumulative(t, false))
    }

    /// `∫_{D_t} |∇^M r| dV`.
    pub fn coarea_volume(&self, t: f64) -> Result<f64> {
        self.check_radius(t)?;
        Ok(self.cumulative(t, true))
    }

    /// Finite-difference step used for `vol(∂D_t)`: twice the median `|Δr|`
    /// of the axis edges crossing `t`.
    pub fn sphere_step(&self, t: f64) -> Result<f64> {
        let mut steps = self.mesh.axis_steps_across(t);
        if steps.is_empty() {
            return Err(Error::Truncation(format!("no grid edge crosses r = {t}")));
        }
        steps.sort_by(f64::total_cmp);
        Ok(2.0 * steps[steps.len() / 2])
    }

    /// `vol(∂D_t)` by a central difference of the coarea cumulative.
    pub fn sphere_volume(&self, t: f64) -> Result<f64> {
        self.check_radius(t)?;
        let h = self.sphere_step(t)?;
        let top = if self.compact() { self.mesh.max_r() } else { self.mesh.safe_radius() };
        if !(t - h > 0.0) || t + h > top {
            return Err(Error::Truncation(format!(
                "finite-difference window [{:.4}, {:.4}] leaves the sampled range (0, {top:.4}]",
                t - h,
                t + h
            )));
        }
        Ok((self.cumulative(t + h, true) - self.cumulative(t - h, true)) / (2.0 * h))
    }

    /// Radii on which both volumes are trusted: a few cells past the
    /// basepoint up to `0.9 ×` the safe radius, minus room for the
    /// difference stencil.
    pub fn reliable_window(&self) -> (f64, f64) {
        let step = self.mesh.r_step();
        let lo = self.mesh.min_r() + 4.0 * step;
        let hi = if self.compact() {
            0.9 * self.mesh.max_r()
        } else {
            0.9 * self.mesh.safe_radius() - step
        };
        (lo, hi)
    }

    pub fn default_radii(&self, count: usize) -> Result<Vec<f64>> {
        let (lo, hi) = self.reliable_window();
        if !(hi > lo) {
            return Err(Error::Truncation(format!(
                "reliable window [{lo:.4}, {hi:.4}] is empty; raise the truncation or the resolution"
            )));
        }
        let count = count.max(2);
        Ok((0..count)
            .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
            .collect())
    }
}

/// Ball and sphere volumes against the model space.
#[derive(Clone, Debug, Serialize)]
pub struct VolumeCurve {
    pub kappa: f64,
    pub m: usize,
    pub radii: Vec<f64>,
    pub ball_vol: Vec<f64>,
    pub sphere_vol: Vec<f64>,
    pub ball_ratio: Vec<f64>,
    pub sphere_ratio: Vec<f64>,
    /// Finite-difference step at each radius.
    pub sphere_step: Vec<f64>,
}

impl VolumeCurve {
    pub fn ball_ratio_curve(&self) -> Result<Curve> {
        Curve::new(self.radii.clone(), self.ball_ratio.clone())
    }

    pub fn sphere_ratio_curve(&self) -> Result<Curve> {
        Curve::new(self.radii.clone(), self.sphere_ratio.clone())
    }
}

pub fn volume_curve(profile: &VolumeProfile, radii: &[f64]) -> Result<VolumeCurve> {
    if radii.is_empty() {
        return Err(Error::MissingInput("volume radii".into()));
    }
    let mesh = profile.mesh();
    let (kappa, m) = (mesh.kappa(), mesh.dim());
    let mut out = VolumeCurve {
        kappa,
        m,
        radii: radii.to_vec(),
        ball_vol: Vec::new(),
        sphere_vol: Vec::new(),
        ball_ratio: Vec::new(),
        sphere_ratio: Vec::new(),
        sphere_step: Vec::new(),
    };
    for &t in radii {
        let b = profile.ball_volume(t)?;
        let s = profile.sphere_volume(t)?;
        out.ball_vol.push(b);
        out.sphere_vol.push(s);
        out.ball_ratio.push(b / model_ball(kappa, m, t)?);
        out.sphere_ratio.push(s / model_sphere(kappa, m, t)?);
        out.sphere_step.push(profile.sphere_step(t)?);
    }
    Ok(out)
}

/// Length of `{r = t}` on a surface mesh by marching squares, using the
/// induced metric at each segment midpoint.
pub fn level_set_length(mesh: &MeshGraph, chart: &dyn Chart, t: f64) -> Result<f64> {
    let grid = &mesh.grid;
    if grid.dim() != 2 {
        return Err(Error::DimensionMismatch("marching squares needs a surface".into()));
    }
    // Corners in cyclic order as (bit pattern, local coordinates).
    const CYCLE: [(usize, [f64; 2]); 4] = [(0, [0.0, 0.0]), (1, [1.0, 0.0]), (3, [1.0, 1.0]), (2, [0.0, 1.0])];
    let mut total = 0.0;
    for cell in 0..grid.cell_count() {
        let ids = grid.cell_vertices(cell);
        let mut crossings: Vec<[f64; 2]> = Vec::new();
        for k in 0..4 {
            let (ba, pa) = CYCLE[k];
            let (bb, pb) = CYCLE[(k + 1) % 4];
            let (ra, rb) = (mesh.vertices[ids[ba]].r - t, mesh.vertices[ids[bb]].r - t);
            if (ra < 0.0) != (rb < 0.0) {
                let s = ra / (ra - rb);
                crossings.push([pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])]);
            }
        }
        for pair in crossings.chunks(2) {
            if let [p, q] = pair {
                let d = [(q[0] - p[0]) * grid.spacing[0], (q[1] - p[1]) * grid.spacing[1]];
                let mid = grid.wrap(grid.cell_point(cell, &[0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]));
                let g = metric(&mesh.ambient, chart, &mid)?;
                let q2 = g[(0, 0)] * d[0] * d[0] + 2.0 * g[(0, 1)] * d[0] * d[1] + g[(1, 1)] * d[1] * d[1];
                total += q2.max(0.0).sqrt();
            }
        }
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictStatus {
    Satisfied,
    Violated,
    Inconclusive,
}

/// One inequality checked on a finite window.
#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub check: String,
    pub status: VerdictStatus,
    /// Minimum of the ratio over the final quarter of the window.
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    /// `rhs − lhs`.
    pub margin: Option<f64>,
    pub liminf_at: Option<f64>,
    pub window: Option<(f64, f64)>,
    pub reason: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthVerdicts {
    pub kappa: f64,
    pub m: usize,
    pub ends: usize,
    pub a_estimate: f64,
    pub tolerance: f64,
    /// `m < 3`: the bounds are evaluated but the hypotheses do not apply.
    pub exploratory: bool,
    pub verdicts: Vec<Verdict>,
    pub warnings: Vec<String>,
}

impl GrowthVerdicts {
    pub fn all_satisfied(&self) -> bool {
        self.verdicts.iter().all(|v| v.status == VerdictStatus::Satisfied)
    }
}

fn liminf(curve: &Curve) -> (f64, f64, (f64, f64)) {
    let win = curve.slice_from(curve.tail_start(0.25, 2));
    let (t, v) = win.min().expect("non-empty window");
    (v, t, (win.t[0], *win.t.last().expect("non-empty window")))
}

fn judge(check: &str, curve: &Curve, rhs: f64, tol: f64) -> Verdict {
    let (lhs, at, window) = liminf(curve);
    let status = if lhs <= rhs * (1.0 + tol) {
        VerdictStatus::Satisfied
    } else {
        VerdictStatus::Violated
    };
    Verdict {
        check: check.into(),
        status,
        lhs: Some(lhs),
        rhs: Some(rhs),
        margin: Some(rhs - lhs),
        liminf_at: Some(at),
        window: Some(window),
        reason: None,
    }
}

fn skipped(check: &str, reason: &str) -> Verdict {
    Verdict {
        check: check.into(),
        status: VerdictStatus::Inconclusive,
        lhs: None,
        rhs: None,
        margin: None,
        liminf_at: None,
        window: None,
        reason: Some(reason.into()),
    }
}

/// Compare the volume growth of extrinsic spheres and balls with the bounds
/// in terms of the number of ends.
///
/// For `κ = 0` the bounds need `a(M) < 1/2`:
/// `liminf vol(∂D_t) / (m ω_m t^{m−1}) ≤ E / (1 − 4a²)^{(m−1)/2}` and
/// `liminf vol(D_t) / (ω_m t^m) ≤ E / ((1 − a²)^{1/2} (1 − 4a²)^{(m−1)/2})`.
/// For `κ < 0` they need `b(M) < ∞` and both model ratios are bounded by `E`.
pub fn verify_growth_bounds(
    curve: &VolumeCurve,
    report: &InvariantReport,
    ends: Option<usize>,
    tolerance: f64,
) -> Result<GrowthVerdicts> {
    let ends = ends.ok_or_else(|| Error::MissingInput("ends count".into()))?;
    if curve.radii.len() < 2 {
        return Err(Error::MissingInput("volume curve with at least two radii".into()));
    }
    let (kappa, m) = (curve.kappa, curve.m);
    let a = report.a_estimate.last;
    let e = ends as f64;
    let sphere = curve.sphere_ratio_curve()?;
    let ball = curve.ball_ratio_curve()?;
    let mut warnings = Vec::new();
    let exploratory = m < 3;
    if exploratory {
        warnings.push(format!("m = {m} < 3: the bounds are evaluated in exploratory mode"));
    }
    let verdicts = if kappa == 0.0 {
        let (sc, bc) = ("sphere-growth-flat", "ball-growth-flat");
        if !(report.tamed && a < 0.5) {
            let reason = "hypothesis a(M) < 1/2 fails";
            vec![skipped(sc, reason), skipped(bc, reason)]
        } else {
            let q = (1.0 - 4.0 * a * a).powf((m as f64 - 1.0) / 2.0);
            vec![
                judge(sc, &sphere, e / q, tolerance),
                judge(bc, &ball, e / ((1.0 - a * a).sqrt() * q), tolerance),
            ]
        }
    } else {
        let (sc, bc) = ("sphere-growth-hyperbolic", "ball-growth-hyperbolic");
        if !report.strongly_tamed {
            let reason = "hypothesis b(M) < infinity fails";
            vec![skipped(sc, reason), skipped(bc, reason)]
        } else {
            vec![judge(sc, &sphere, e, tolerance), judge(bc, &ball, e, tolerance)]
        }
    };
    Ok(GrowthVerdicts {
        kappa,
        m,
        ends,
        a_estimate: a,
        tolerance,
        exploratory,
        verdicts,
        warnings,
    })
}

/// Sectional curvatures above this margin over `κ` count as violations.
const CURVATURE_SLACK: f64 = 1e-8;
/// Cap on the number of vertices probed for the curvature hypothesis.
const CURVATURE_PROBES: usize = 512;

/// Probe `K_M ≤ κ` on coordinate planes at a spread of vertices.
pub fn check_curvature_upper_bound(mesh: &MeshGraph, chart: &dyn Chart, exec: Exec) -> Result<()> {
    let m = mesh.dim();
    if m < 2 {
        return Ok(());
    }
    let kappa = mesh.kappa();
    let stride = mesh.len().div_ceil(CURVATURE_PROBES).max(1);
    let probes: Vec<usize> = (0..mesh.len()).step_by(stride).collect();
    let worst: Vec<Option<f64>> = exec.try_map_range(probes.len(), |k| {
        let v = probes[k];
        let pg = point_geometry(&mesh.ambient, chart, &mesh.vertices[v].param)?;
        let mut max_k = f64::NEG_INFINITY;
        for i in 0..m {
            for j in i + 1..m {
                let mut a = vec![0.0; m];
                let mut b = vec![0.0; m];
                a[i] = 1.0;
                b[j] = 1.0;
                max_k = max_k.max(sectional_curvature_m(&pg, &a, &b)?);
            }
        }
        Ok(Some(max_k))
    })?;
    let offending: Vec<usize> = probes
        .iter()
        .zip(&worst)
        .filter(|(_, k)| k.is_some_and(|k| k > kappa + CURVATURE_SLACK * kappa.abs().max(1.0)))
        .map(|(v, _)| *v)
        .collect();
    if offending.is_empty() {
        Ok(())
    } else {
        Err(Error::HypothesisViolated {
            reason: format!("sectional curvature of M exceeds kappa = {kappa}"),
            points: offending,
        })
    }
}

/// `vol(D_t) / vol(B_t^{κ,m})` after checking `K_M ≤ κ`.
pub fn gap_ratio(profile: &VolumeProfile, chart: &dyn Chart, radii: &[f64], exec: Exec) -> Result<Curve> {
    let mesh = profile.mesh();
    check_curvature_upper_bound(mesh, chart, exec)?;
    let (kappa, m) = (mesh.kappa(), mesh.dim());
    let values = radii
        .iter()
        .map(|&t| Ok(profile.ball_volume(t)? / model_ball(kappa, m, t)?))
        .collect::<Result<Vec<f64>>>()?;
    Curve::new(radii.to_vec(), values)
}

/// Euclidean model sphere `m ω_m t^{m−1}`.
pub fn euclidean_sphere(m: usize, t: f64) -> f64 {
    m as f64 * omega(m) * t.powi(m as i32 - 1)
}
