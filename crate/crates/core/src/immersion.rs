//! Pointwise extrinsic geometry of a chart.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::jets::Jet2;
use crate::spaceform::{ct_kappa, Ambient};

/// Smallest admissible singular value of the chart Jacobian.
pub const RANK_TOL: f64 = 1e-10;

/// Decomposition `∇r = ∇^M r + ∇^⊥ r` of the ambient radial field.
#[derive(Clone, Debug, Serialize)]
pub struct RadialSplit {
    /// Ambient unit radial field.
    pub grad_r: Vec<f64>,
    /// `∇^M r` in chart components.
    pub grad_m: Vec<f64>,
    /// `∇^⊥ r` as an ambient vector.
    pub grad_perp: Vec<f64>,
    pub tangential_norm: f64,
    pub normal_norm: f64,
}

#[derive(Clone, Debug)]
pub struct PointGeometry {
    pub kappa: f64,
    pub param: Vec<f64>,
    pub position: Vec<f64>,
    /// Columns `∂φ/∂u_i` as ambient vectors.
    pub jacobian: Vec<Vec<f64>>,
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub sqrt_det_g: f64,
    pub min_singular_value: f64,
    /// `alpha[i][j]`, ambient normal vectors.
    pub alpha: Vec<Vec<Vec<f64>>>,
    pub alpha_norm: f64,
    pub r: f64,
    /// `None` at the pole.
    pub split: Option<RadialSplit>,
    /// Intrinsic distance from the basepoint, when known.
    pub rho: Option<f64>,
}

fn inner(kappa: f64, a: &[f64], b: &[f64]) -> f64 {
    let k = a.len() - 1;
    let last = if kappa == 0.0 { a[k] * b[k] } else { -a[k] * b[k] };
    a[..k].iter().zip(&b[..k]).map(|(x, y)| x * y).sum::<f64>() + last
}

struct Frame {
    position: Vec<f64>,
    jacobian: Vec<Vec<f64>>,
    hessian: Vec<Vec<Vec<f64>>>,
    g: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    sqrt_det_g: f64,
    sigma: f64,
}

fn frame(amb: &Ambient, chart: &dyn Chart, p: &[f64], with_hessian: bool) -> Result<Frame> {
    if chart.space() != amb.space() {
        return Err(Error::DimensionMismatch(format!(
            "chart maps into {:?}, ambient is {:?}",
            chart.space(),
            amb.space()
        )));
    }
    let jets: Vec<Jet2> = chart.eval_jets(p)?;
    let m = chart.dim();
    let position: Vec<f64> = jets.iter().map(|j| j.value()).collect();
    amb.check_on_model(&position)?;
    let jacobian: Vec<Vec<f64>> = (0..m).map(|i| jets.iter().map(|j| j.partial(i)).collect()).collect();
    let hessian = if with_hessian {
        (0..m)
            .map(|i| (0..m).map(|k| jets.iter().map(|j| j.second(i, k)).collect()).collect())
            .collect()
    } else {
        Vec::new()
    };
    let kappa = amb.kappa;
    let g = DMatrix::from_fn(m, m, |i, k| inner(kappa, &jacobian[i], &jacobian[k]));
    let eig = SymmetricEigen::new(g.clone());
    let lmin = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let sigma = lmin.max(0.0).sqrt();
    let degenerate = || Error::DegenerateImmersion {
        location: format!("{p:?}"),
        sigma,
    };
    if !(sigma > RANK_TOL) {
        return Err(degenerate());
    }
    let chol = g.clone().cholesky().ok_or_else(degenerate)?;
    let sqrt_det_g = chol.l().diagonal().product();
    Ok(Frame {
        position,
        jacobian,
        hessian,
        g,
        chol,
        sqrt_det_g,
        sigma,
    })
}

impl Frame {
    /// Components `c` with `w_tan = Σ c_k J_k`.
    fn tangent_coeffs(&self, kappa: f64, w: &[f64]) -> DVector<f64> {
        let b = DVector::from_iterator(self.jacobian.len(), self.jacobian.iter().map(|j| inner(kappa, w, j)));
        self.chol.solve(&b)
    }

    fn normal_part(&self, kappa: f64, w: &[f64]) -> Vec<f64> {
        let c = self.tangent_coeffs(kappa, w);
        let mut out = w.to_vec();
        for (k, col) in self.jacobian.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(col) {
                *o -= c[k] * x;
            }
        }
        out
    }
}

fn split_at(amb: &Ambient, f: &Frame, r: f64) -> Result<Option<RadialSplit>> {
    if r == 0.0 {
        return Ok(None);
    }
    let grad_r = match amb.radial_gradient(&f.position) {
        Ok(v) => v,
        Err(Error::Singularity(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let c = f.tangent_coeffs(amb.kappa, &grad_r);
    let mut perp = grad_r.clone();
    for (k, col) in f.jacobian.iter().enumerate() {
        for (o, x) in perp.iter_mut().zip(col) {
            *o -= c[k] * x;
        }
    }
    let b = DVector::from_iterator(f.jacobian.len(), f.jacobian.iter().map(|j| inner(amb.kappa, &grad_r, j)));
    let tan_sq = b.dot(&c).max(0.0);
    let normal_norm = inner(amb.kappa, &perp, &perp).max(0.0).sqrt();
    Ok(Some(RadialSplit {
        grad_m: c.iter().copied().collect(),
        grad_perp: perp,
        grad_r,
        tangential_norm: tan_sq.sqrt(),
        normal_norm,
    }))
}

/// Metric, second fundamental form and radial split at chart point `p`.
pub fn point_geometry(amb: &Ambient, chart: &dyn Chart, p: &[f64]) -> Result<PointGeometry> {
    let f = frame(amb, chart, p, true)?;
    let kappa = amb.kappa;
    let m = p.len();
    let mut alpha = vec![vec![Vec::new(); m]; m];
    for i in 0..m {
        for j in i..m {
            let h = &f.hessian[i][j];
            // Covariant derivative on the hyperboloid drops the position
            // component before the tangential projection.
            let v = if kappa == 0.0 {
                h.clone()
            } else {
                amb.project_tangent(&f.position, h)
            };
            let a = f.normal_part(kappa, &v);
            alpha[i][j] = a.clone();
            alpha[j][i] = a;
        }
    }
    let g_inv = f.chol.inverse();
    let mut norm_sq = 0.0;
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                for l in 0..m {
                    let w = g_inv[(i, k)] * g_inv[(j, l)];
                    if w != 0.0 {
                        norm_sq += w * inner(kappa, &alpha[i][j], &alpha[k][l]);
                    }
                }
            }
        }
    }
    let r = amb.distance_unchecked(&f.position);
    let split = split_at(amb, &f, r)?;
    Ok(PointGeometry {
        kappa,
        param: p.to_vec(),
        position: f.position,
        jacobian: f.jacobian,
        g: f.g,
        g_inv,
        sqrt_det_g: f.sqrt_det_g,
        min_singular_value: f.sigma,
        alpha,
        alpha_norm: norm_sq.max(0.0).sqrt(),
        r,
        split,
        rho: None,
    })
}

/// The radial quantities needed for volume integration, without `α`.
#[derive(Clone, Debug)]
pub struct RadialSample {
    pub r: f64,
    pub sqrt_det_g: f64,
    /// `|∇^M r|`, zero at the pole.
    pub tangential_norm: f64,
    /// `∂r/∂u_k`, zero at the pole.
    pub dr: Vec<f64>,
}

pub fn radial_sample(amb: &Ambient, chart: &dyn Chart, p: &[f64]) -> Result<RadialSample> {
    let f = frame(amb, chart, p, false)?;
    let r = amb.distance_unchecked(&f.position);
    let split = split_at(amb, &f, r)?;
    let (tangential_norm, dr) = match split {
        Some(s) => (
            s.tangential_norm,
            f.jacobian.iter().map(|j| inner(amb.kappa, &s.grad_r, j)).collect(),
        ),
        None => (0.0, vec![0.0; p.len()]),
    };
    Ok(RadialSample {
        r,
        sqrt_det_g: f.sqrt_det_g,
        tangential_norm,
        dr,
    })
}

/// Induced metric at a chart point.
pub fn metric(amb: &Ambient, chart: &dyn Chart, p: &[f64]) -> Result<DMatrix<f64>> {
    frame(amb, chart, p, false).map(|f| f.g)
}

/// The radial split of an already computed point.
pub fn radial_split(pg: &PointGeometry) -> Result<&RadialSplit> {
    pg.split
        .as_ref()
        .ok_or_else(|| Error::Singularity("the point is the pole".into()))
}

impl PointGeometry {
    pub fn dim(&self) -> usize {
        self.param.len()
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        inner(self.kappa, a, b)
    }

    /// `g(x, y)` for chart vectors.
    pub fn g_inner(&self, x: &[f64], y: &[f64]) -> f64 {
        let m = self.dim();
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                s += x[i] * self.g[(i, j)] * y[j];
            }
        }
        s
    }

    /// `α(x, y)` for chart vectors.
    pub fn alpha_at(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let m = self.dim();
        let mut out = vec![0.0; self.position.len()];
        for i in 0..m {
            for j in 0..m {
                let w = x[i] * y[j];
                if w != 0.0 {
                    for (o, a) in out.iter_mut().zip(&self.alpha[i][j]) {
                        *o += w * a;
                    }
                }
            }
        }
        out
    }

    /// Push a chart vector forward to an ambient vector.
    pub fn push_forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.position.len()];
        for (xi, col) in x.iter().zip(&self.jacobian) {
            for (o, c) in out.iter_mut().zip(col) {
                *o += xi * c;
            }
        }
        out
    }

    /// `dr(x) = g(∇^M r, x)` for a chart vector.
    pub fn dr(&self, x: &[f64]) -> Result<f64> {
        let s = radial_split(self)?;
        Ok(self.inner(&s.grad_r, &self.push_forward(x)))
    }

    /// A `g`-orthonormal basis of the tangent space of the level set of `r`.
    pub fn level_set_basis(&self) -> Result<Vec<Vec<f64>>> {
        let s = radial_split(self)?;
        let m = self.dim();
        let nsq = s.tangential_norm * s.tangential_norm;
        if s.tangential_norm <= CRITICAL_TOL {
            return Err(Error::CriticalPoint(s.tangential_norm));
        }
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for k in 0..m {
            let mut v = vec![0.0; m];
            v[k] = 1.0;
            let d = self.dr(&v)?;
            for (vi, gi) in v.iter_mut().zip(&s.grad_m) {
                *vi -= d / nsq * gi;
            }
            for b in &basis {
                let c = self.g_inner(&v, b);
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= c * bi;
                }
            }
            let len = self.g_inner(&v, &v).max(0.0).sqrt();
            if len > 1e-8 {
                basis.push(v.into_iter().map(|x| x / len).collect());
            }
            if basis.len() == m - 1 {
                break;
            }
        }
        Ok(basis)
    }
}

/// Principal curvatures of a hypersurface, ascending.
///
/// The unit normal is fixed up to sign, so the spectrum is only defined up
/// to an overall sign flip.
pub fn principal_curvatures(pg: &PointGeometry) -> Result<Vec<f64>> {
    let m = pg.dim();
    let coords = pg.position.len();
    let n = if pg.kappa == 0.0 { coords } else { coords - 1 };
    if n != m + 1 {
        return Err(Error::DimensionMismatch(format!(
            "principal curvatures need codimension one, got m = {m}, n = {n}"
        )));
    }
    let p = &pg.position;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for k in 0..coords {
        let mut w = vec![0.0; coords];
        w[k] = 1.0;
        if pg.kappa != 0.0 {
            let c = pg.kappa * pg.inner(&w, p);
            for (wi, pi) in w.iter_mut().zip(p) {
                *wi -= c * pi;
            }
        }
        let b = DVector::from_iterator(m, pg.jacobian.iter().map(|j| pg.inner(&w, j)));
        let c = &pg.g_inv * b;
        for (k, col) in pg.jacobian.iter().enumerate() {
            for (wi, x) in w.iter_mut().zip(col) {
                *wi -= c[k] * x;
            }
        }
        let len = pg.inner(&w, &w);
        if best.as_ref().is_none_or(|(l, _)| len > *l) {
            best = Some((len, w));
        }
    }
    let (len, nu) = best.expect("at least one ambient coordinate");
    let nu: Vec<f64> = nu.iter().map(|x| x / len.sqrt()).collect();
    let h = DMatrix::from_fn(m, m, |i, j| pg.inner(&pg.alpha[i][j], &nu));
    let chol = pg
        .g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::DegenerateImmersion {
            location: format!("{:?}", pg.param),
            sigma: pg.min_singular_value,
        })?;
    let l_inv = chol.l().try_inverse().expect("Cholesky factor is invertible");
    let shape = &l_inv * h * l_inv.transpose();
    let shape = (&shape + shape.transpose()) * 0.5;
    let mut out: Vec<f64> = SymmetricEigen::new(shape).eigenvalues.iter().copied().collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Gram–Schmidt in `g`, starting from the longer vector; ties keep the
/// given order.
pub fn orthonormal_pair(pg: &PointGeometry, u: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = pg.dim();
    if u.len() != m || v.len() != m {
        return Err(Error::DimensionMismatch(format!("plane vectors must have {m} components")));
    }
    let (nu, nv) = (pg.g_inner(u, u).sqrt(), pg.g_inner(v, v).sqrt());
    let (a, b, na) = if nv > nu { (v, u, nv) } else { (u, v, nu) };
    if !(na > 0.0) {
        return Err(Error::DegeneratePlane("zero vector".into()));
    }
    let e1: Vec<f64> = a.iter().map(|x| x / na).collect();
    let c = pg.g_inner(b, &e1);
    let w: Vec<f64> = b.iter().zip(&e1).map(|(x, y)| x - c * y).collect();
    let nw = pg.g_inner(&w, &w).max(0.0).sqrt();
    let nb = pg.g_inner(b, b).sqrt();
    if !(nw > 1e-10 * nb) {
        return Err(Error::DegeneratePlane("the two vectors are linearly dependent".into()));
    }
    let e2 = w.into_iter().map(|x| x / nw).collect();
    Ok((e1, e2))
}

/// Sectional curvature of `M` on the plane spanned by two chart vectors.
pub fn sectional_curvature_m(pg: &PointGeometry, u: &[f64], v: &[f64]) -> Result<f64> {
    let (e1, e2) = orthonormal_pair(pg, u, v)?;
    let a11 = pg.alpha_at(&e1, &e1);
    let a22 = pg.alpha_at(&e2, &e2);
    let a12 = pg.alpha_at(&e1, &e2);
    let g11 = pg.g_inner(&e1, &e1);
    let g22 = pg.g_inner(&e2, &e2);
    let g12 = pg.g_inner(&e1, &e2);
    let area = g11 * g22 - g12 * g12;
    Ok(pg.kappa + (pg.inner(&a11, &a22) - pg.inner(&a12, &a12)) / area)
}

/// `|∇^M r|` at or below this is treated as a critical point.
pub const CRITICAL_TOL: f64 = 1e-8;

/// Exact sectional curvature of a level set of `r`, with the two-sided
/// bound that holds once `C/S(r) > |∇^⊥ r| ‖α‖`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SphereCurvature {
    pub exact: f64,
    pub lower: f64,
    pub upper: f64,
    /// Whether the bounds are guaranteed at this point.
    pub admissible: bool,
}

/// Sectional curvature of the extrinsic sphere through `pg` on the plane
/// spanned by two chart vectors tangent to the level set.
///
/// The mixed-index term `<∇^⊥ r, α(e_i, e_j)>²` enters the exact value, as
/// the second fundamental form of the level set in `M` requires.
pub fn sphere_curvature_at(pg: &PointGeometry, u: &[f64], v: &[f64]) -> Result<SphereCurvature> {
    let m = pg.dim();
    if m < 3 {
        return Err(Error::DegeneratePlane(format!(
            "level sets of a {m}-dimensional submanifold contain no 2-planes"
        )));
    }
    let s = radial_split(pg)?;
    let gm = s.tangential_norm;
    if gm <= CRITICAL_TOL {
        return Err(Error::CriticalPoint(gm));
    }
    for x in [u, v] {
        let len = pg.g_inner(x, x).sqrt();
        if pg.dr(x)?.abs() > 1e-8 * len {
            return Err(Error::domain("plane is not tangent to the level set of r"));
        }
    }
    let (ei, ej) = orthonormal_pair(pg, u, v)?;
    let aii = pg.alpha_at(&ei, &ei);
    let ajj = pg.alpha_at(&ej, &ej);
    let aij = pg.alpha_at(&ei, &ej);
    let ct = ct_kappa(pg.kappa, pg.r)?;
    let h = |a: &[f64]| pg.inner(&s.grad_perp, a);
    let (hii, hjj, hij) = (h(&aii), h(&ajj), h(&aij));
    let gm2 = gm * gm;
    let exact = pg.kappa + pg.inner(&aii, &ajj) - pg.inner(&aij, &aij)
        + ((ct + hii) * (ct + hjj) - hij * hij) / gm2;
    let a = pg.alpha_norm;
    let perp = s.normal_norm;
    let upper = pg.kappa + a * a + (ct + perp * a).powi(2) / gm2;
    let lower = pg.kappa - 2.0 * a * a + (ct * ct - 2.0 * perp * a * ct) / gm2;
    Ok(SphereCurvature {
        exact,
        lower,
        upper,
        admissible: ct > perp * a,
    })
}

/// [`sphere_curvature_at`] evaluated from scratch at chart point `p`.
pub fn extrinsic_sphere_curvature(
    amb: &Ambient,
    chart: &dyn Chart,
    p: &[f64],
    plane: (&[f64], &[f64]),
) -> Result<SphereCurvature> {
    if chart.dim() < 3 {
        return Err(Error::DegeneratePlane(format!(
            "level sets of a {}-dimensional submanifold contain no 2-planes",
            chart.dim()
        )));
    }
    let pg = point_geometry(amb, chart, p)?;
    sphere_curvature_at(&pg, plane.0, plane.1)
}
