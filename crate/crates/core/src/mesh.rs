//! Sampled parameter grids, graph distances, extrinsic balls and ends.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use serde::Serialize;

use crate::chart::{require_bounded, AxisDomain, Chart};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::immersion::{metric, point_geometry};
use crate::spaceform::Ambient;

/// Default threshold on `|∇^M r|` below which a vertex counts as critical.
pub const DEFAULT_EPSILON_CRIT: f64 = 1e-3;

/// Vertices whose `r` is within this relative tolerance of the minimum are
/// all treated as basepoints.
const BASEPOINT_TIE: f64 = 1e-9;

/// A regular grid over a bounded chart box.
///
/// Non-periodic axes include both endpoints. Periodic axes sample
/// `[lo, hi)` and wrap around.
#[derive(Clone, Debug, Serialize)]
pub struct Grid {
    pub axes: Vec<AxisDomain>,
    pub counts: Vec<usize>,
    pub spacing: Vec<f64>,
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(axes: &[AxisDomain], counts: &[usize]) -> Result<Self> {
        if axes.len() != counts.len() {
            return Err(Error::DimensionMismatch(format!(
                "resolution has {} entries for a {}-dimensional chart",
                counts.len(),
                axes.len()
            )));
        }
        if let Some(&c) = counts.iter().find(|&&c| c < 3) {
            return Err(Error::domain(format!("resolution must be at least 3 per axis, got {c}")));
        }
        let spacing = axes
            .iter()
            .zip(counts)
            .map(|(a, &n)| if a.periodic { a.len() / n as f64 } else { a.len() / (n - 1) as f64 })
            .collect();
        let mut strides = vec![1; counts.len()];
        for k in 1..counts.len() {
            strides[k] = strides[k - 1] * counts[k - 1];
        }
        Ok(Grid {
            axes: axes.to_vec(),
            counts: counts.to_vec(),
            spacing,
            strides,
        })
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(k, s)| k * s).sum()
    }

    pub fn multi(&self, mut idx: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.dim());
        for &n in &self.counts {
            out.push(idx % n);
            idx /= n;
        }
        out
    }

    pub fn coord(&self, axis: usize, k: f64) -> f64 {
        let a = &self.axes[axis];
        if !a.periodic && k as usize == self.counts[axis] - 1 && k.fract() == 0.0 {
            return a.hi;
        }
        a.lo + k * self.spacing[axis]
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.multi(idx)
            .into_iter()
            .enumerate()
            .map(|(ax, k)| self.coord(ax, k as f64))
            .collect()
    }

    /// Neighbour of `idx` at integer offset, wrapping periodic axes.
    pub fn neighbor(&self, idx: usize, offset: &[i64]) -> Option<usize> {
        let multi = self.multi(idx);
        let mut out = 0;
        for (ax, (&k, &o)) in multi.iter().zip(offset).enumerate() {
            let n = self.counts[ax] as i64;
            let mut j = k as i64 + o;
            if self.axes[ax].periodic {
                j = j.rem_euclid(n);
            } else if j < 0 || j >= n {
                return None;
            }
            out += j as usize * self.strides[ax];
        }
        Some(out)
    }

    /// Whether the vertex lies on a face that truncates an unbounded
    /// direction.
    pub fn on_truncation_face(&self, idx: usize) -> bool {
        self.multi(idx).iter().enumerate().any(|(ax, &k)| {
            let a = &self.axes[ax];
            !a.periodic && ((k == 0 && a.lo_truncated) || (k == self.counts[ax] - 1 && a.hi_truncated))
        })
    }

    pub fn has_truncation_faces(&self) -> bool {
        self.axes.iter().any(|a| !a.periodic && (a.lo_truncated || a.hi_truncated))
    }

    /// Number of cells per axis.
    pub fn cell_counts(&self) -> Vec<usize> {
        self.counts
            .iter()
            .zip(&self.axes)
            .map(|(&n, a)| if a.periodic { n } else { n - 1 })
            .collect()
    }

    pub fn cell_count(&self) -> usize {
        self.cell_counts().iter().product()
    }

    /// Lower-corner multi-index of a cell.
    pub fn cell_corner(&self, cell: usize) -> Vec<usize> {
        let mut c = cell;
        self.cell_counts()
            .into_iter()
            .map(|n| {
                let k = c % n;
                c /= n;
                k
            })
            .collect()
    }

    /// The `2^m` vertices of a cell.
    pub fn cell_vertices(&self, cell: usize) -> Vec<usize> {
        let corner = self.index(&self.cell_corner(cell));
        let m = self.dim();
        (0..1usize << m)
            .map(|bits| {
                let off: Vec<i64> = (0..m).map(|ax| ((bits >> ax) & 1) as i64).collect();
                self.neighbor(corner, &off).expect("cell corners lie on the grid")
            })
            .collect()
    }

    /// Chart point at fractional position `frac ∈ [0, 1]^m` inside a cell.
    pub fn cell_point(&self, cell: usize, frac: &[f64]) -> Vec<f64> {
        self.cell_corner(cell)
            .iter()
            .zip(frac)
            .enumerate()
            .map(|(ax, (&k, &f))| self.coord(ax, k as f64 + f))
            .collect()
    }

    pub fn cell_measure(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Parameter-space displacement for an integer offset.
    pub fn displacement(&self, offset: &[i64]) -> Vec<f64> {
        offset.iter().zip(&self.spacing).map(|(&o, h)| o as f64 * h).collect()
    }

    /// Wrap a chart point back into the box along periodic axes.
    pub fn wrap(&self, mut u: Vec<f64>) -> Vec<f64> {
        for (x, a) in u.iter_mut().zip(&self.axes) {
            if a.periodic {
                *x = a.lo + (*x - a.lo).rem_euclid(a.len());
            }
        }
        u
    }
}

/// Per-vertex geometry cache.
#[derive(Clone, Debug, Serialize)]
pub struct Vertex {
    pub param: Vec<f64>,
    pub r: f64,
    /// Graph distance from the basepoint set, `+∞` when unreached.
    pub rho: f64,
    pub alpha_norm: f64,
    /// `|∇^M r|`, zero at the pole.
    pub tangential_norm: f64,
    /// `∂r/∂u_k`, zero at the pole.
    pub dr: Vec<f64>,
    pub normal_norm: f64,
    pub sqrt_det_g: f64,
    /// The vertex maps to the pole, where `∇r` is undefined.
    pub is_pole: bool,
}

/// Sampled immersion with an 8-neighbour (in general `3^m − 1`) stencil.
#[derive(Clone, Debug)]
pub struct MeshGraph {
    pub grid: Grid,
    pub ambient: Ambient,
    pub chart_name: String,
    pub vertices: Vec<Vertex>,
    /// Vertices tied at minimal `r`; all have `rho = 0`.
    pub sources: Vec<usize>,
    pub unreached: usize,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    lengths: Vec<f64>,
    axis_edge: Vec<bool>,
}

fn stencil(m: usize) -> Vec<Vec<i64>> {
    let total = 3usize.pow(m as u32);
    (0..total)
        .map(|mut c| {
            (0..m)
                .map(|_| {
                    let d = (c % 3) as i64 - 1;
                    c /= 3;
                    d
                })
                .collect::<Vec<i64>>()
        })
        .filter(|o| o.iter().any(|&d| d != 0))
        .collect()
}

/// First nonzero component positive.
fn is_forward(o: &[i64]) -> bool {
    o.iter().find(|&&d| d != 0).is_some_and(|&d| d > 0)
}

fn quad(g: &[f64], d: &[f64]) -> f64 {
    let m = d.len();
    let mut s = 0.0;
    for i in 0..m {
        for j in 0..m {
            s += d[i] * g[i * m + j] * d[j];
        }
    }
    s.max(0.0).sqrt()
}

struct BuiltVertex {
    vertex: Vertex,
    g: Vec<f64>,
}

/// Sample `chart` on a grid, weight the edges by induced length and run
/// the graph distance from the vertices closest to the pole.
pub fn build_mesh(amb: &Ambient, chart: &dyn Chart, resolution: &[usize], exec: Exec) -> Result<MeshGraph> {
    require_bounded(chart)?;
    let grid = Grid::new(chart.domain(), resolution)?;
    let m = grid.dim();
    let built: Vec<BuiltVertex> = exec.try_map_range(grid.len(), |v| {
        let u = grid.point(v);
        let pg = point_geometry(amb, chart, &u).map_err(|e| name_vertex(e, v, &u))?;
        let g = pg.g.transpose().iter().copied().collect();
        let (tangential_norm, normal_norm) = pg
            .split
            .as_ref()
            .map_or((0.0, 0.0), |s| (s.tangential_norm, s.normal_norm));
        let dr = if pg.split.is_some() {
            let mut e = vec![0.0; m];
            (0..m)
                .map(|k| {
                    e.fill(0.0);
                    e[k] = 1.0;
                    pg.dr(&e)
                })
                .collect::<Result<Vec<f64>>>()?
        } else {
            vec![0.0; m]
        };
        Ok(BuiltVertex {
            vertex: Vertex {
                param: u,
                r: pg.r,
                rho: f64::INFINITY,
                alpha_norm: pg.alpha_norm,
                tangential_norm,
                dr,
                normal_norm,
                sqrt_det_g: pg.sqrt_det_g,
                is_pole: pg.split.is_none(),
            },
            g,
        })
    })?;

    let all = stencil(m);
    let forward: Vec<Vec<i64>> = all.iter().filter(|o| is_forward(o)).cloned().collect();
    // Simpson rule along the straight parameter segment of every forward edge.
    let forward_len: Vec<Vec<Option<f64>>> = exec.try_map_range(grid.len(), |v| {
        forward
            .iter()
            .map(|o| {
                let Some(w) = grid.neighbor(v, o) else {
                    return Ok(None);
                };
                let d = grid.displacement(o);
                let a = &built[v].vertex.param;
                let mid: Vec<f64> = a.iter().zip(&d).map(|(x, dx)| x + 0.5 * dx).collect();
                let mid = grid.wrap(mid);
                let gm = metric(amb, chart, &mid).map_err(|e| name_vertex(e, v, &mid))?;
                let gm: Vec<f64> = gm.transpose().iter().copied().collect();
                let len = (quad(&built[v].g, &d) + 4.0 * quad(&gm, &d) + quad(&built[w].g, &d)) / 6.0;
                if !(len > 0.0) {
                    return Err(Error::geometry(format!("edge from vertex {v} has zero induced length")));
                }
                Ok(Some(len))
            })
            .collect()
    })?;

    let mut offsets = vec![0];
    let mut targets = Vec::new();
    let mut lengths = Vec::new();
    let mut axis_edge = Vec::new();
    for v in 0..grid.len() {
        for o in &all {
            let Some(w) = grid.neighbor(v, o) else { continue };
            let len = if is_forward(o) {
                let k = forward.iter().position(|f| f == o).expect("forward offset");
                forward_len[v][k]
            } else {
                let back: Vec<i64> = o.iter().map(|d| -d).collect();
                let k = forward.iter().position(|f| *f == back).expect("forward offset");
                forward_len[w][k]
            };
            targets.push(w);
            lengths.push(len.expect("neighbour exists both ways"));
            axis_edge.push(o.iter().filter(|&&d| d != 0).count() == 1);
        }
        offsets.push(targets.len());
    }

    let vertices: Vec<Vertex> = built.into_iter().map(|b| b.vertex).collect();
    let mut mesh = MeshGraph {
        grid,
        ambient: amb.clone(),
        chart_name: chart.name(),
        vertices,
        sources: Vec::new(),
        unreached: 0,
        offsets,
        targets,
        lengths,
        axis_edge,
    };
    mesh.intrinsic_distances();
    Ok(mesh)
}

fn name_vertex(e: Error, v: usize, u: &[f64]) -> Error {
    match e {
        Error::DegenerateImmersion { sigma, .. } => Error::DegenerateImmersion {
            location: format!("vertex {v} at {u:?}"),
            sigma,
        },
        other => other,
    }
}

#[derive(PartialEq)]
struct Dist(f64);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Vertices partitioned into the ends and the bounded pieces of `{r > R}`.
#[derive(Clone, Debug, Serialize)]
pub struct EndsCount {
    pub radius: f64,
    pub count: usize,
    pub ends: Vec<Vec<usize>>,
    pub bounded: Vec<Vec<usize>>,
}

/// Ends counts over a range of radii.
#[derive(Clone, Debug, Serialize)]
pub struct EndsStability {
    /// Vertex estimate, see [`MeshGraph::critical_free_radius`].
    pub critical_radius: f64,
    /// See [`MeshGraph::critical_cell_radius`].
    pub critical_cell_radius: f64,
    pub margin: f64,
    pub rows: Vec<(f64, usize)>,
    /// Longest run of radii with the same count, and that count.
    pub stable_interval: Option<(f64, f64)>,
    pub count: usize,
    /// Every sampled radius gave the same count.
    pub stable: bool,
}

/// Vertices of an extrinsic ball and the cells cut by its boundary.
#[derive(Clone, Debug, Serialize)]
pub struct ExtrinsicBall {
    pub radius: f64,
    pub vertices: Vec<usize>,
    pub boundary_cells: Vec<usize>,
    /// The radius exceeds every sampled `r`.
    pub truncated: bool,
}

impl MeshGraph {
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn kappa(&self) -> f64 {
        self.ambient.kappa
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    /// `(neighbour, length, is_axis_edge)` for every edge leaving `v`.
    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, f64, bool)> + '_ {
        let range = self.offsets[v]..self.offsets[v + 1];
        range.map(move |e| (self.targets[e], self.lengths[e], self.axis_edge[e]))
    }

    pub fn edge_length(&self, a: usize, b: usize) -> Option<f64> {
        self.neighbors(a).find(|(w, _, _)| *w == b).map(|(_, l, _)| l)
    }

    /// The first basepoint.
    pub fn basepoint(&self) -> usize {
        self.sources[0]
    }

    pub fn min_r(&self) -> f64 {
        self.vertices.iter().map(|v| v.r).fold(f64::INFINITY, f64::min)
    }

    pub fn max_r(&self) -> f64 {
        self.vertices.iter().map(|v| v.r).fold(0.0, f64::max)
    }

    /// Recompute `rho` by multi-source Dijkstra from the vertices of
    /// minimal `r`.
    pub fn intrinsic_distances(&mut self) {
        let rmin = self.min_r();
        self.sources = (0..self.len())
            .filter(|&v| self.vertices[v].r <= rmin * (1.0 + BASEPOINT_TIE))
            .collect();
        let mut dist = vec![f64::INFINITY; self.len()];
        let mut heap = BinaryHeap::new();
        for &s in &self.sources {
            dist[s] = 0.0;
            heap.push(Reverse((Dist(0.0), s)));
        }
        while let Some(Reverse((Dist(d), v))) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for (w, len, _) in self.neighbors(v) {
                let nd = d + len;
                if nd < dist[w] {
                    dist[w] = nd;
                    heap.push(Reverse((Dist(nd), w)));
                }
            }
        }
        self.unreached = dist.iter().filter(|d| d.is_infinite()).count();
        for (v, d) in self.vertices.iter_mut().zip(dist) {
            v.rho = d;
        }
    }

    /// Smallest `r` on a truncation face, or the largest sampled `r` when
    /// the chart has no truncation faces.
    pub fn safe_radius(&self) -> f64 {
        if !self.grid.has_truncation_faces() {
            return self.max_r();
        }
        (0..self.len())
            .filter(|&v| self.grid.on_truncation_face(v))
            .map(|v| self.vertices[v].r)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn extrinsic_ball(&self, t: f64) -> Result<ExtrinsicBall> {
        if !(t > 0.0) {
            return Err(Error::domain(format!("ball radius must be positive, got {t}")));
        }
        let vertices = (0..self.len()).filter(|&v| self.vertices[v].r < t).collect();
        let boundary_cells = (0..self.grid.cell_count())
            .filter(|&c| {
                let corners = self.grid.cell_vertices(c);
                let below = corners.iter().any(|&v| self.vertices[v].r < t);
                let above = corners.iter().any(|&v| self.vertices[v].r >= t);
                below && above
            })
            .collect();
        Ok(ExtrinsicBall {
            radius: t,
            vertices,
            boundary_cells,
            truncated: t > self.max_r(),
        })
    }

    /// Largest `r` at a non-pole vertex with `|∇^M r| < epsilon`, or zero.
    pub fn critical_free_radius(&self, epsilon: f64) -> f64 {
        self.vertices
            .iter()
            .filter(|v| !v.is_pole && v.tangential_norm < epsilon)
            .map(|v| v.r)
            .fold(0.0, f64::max)
    }

    /// Largest `r` over the cells that may hold a critical point of `r`
    /// between vertices: every component of `∂r/∂u` changes sign across the
    /// cell. Cells touching the pole are skipped.
    pub fn critical_cell_radius(&self) -> f64 {
        let m = self.dim();
        (0..self.grid.cell_count())
            .filter_map(|c| {
                let corners = self.grid.cell_vertices(c);
                if corners.iter().any(|&v| self.vertices[v].is_pole) {
                    return None;
                }
                let straddles = (0..m).all(|k| {
                    let (lo, hi) = corners.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                        let d = self.vertices[v].dr[k];
                        (lo.min(d), hi.max(d))
                    });
                    lo <= 0.0 && hi >= 0.0
                });
                straddles.then(|| corners.iter().map(|&v| self.vertices[v].r).fold(0.0, f64::max))
            })
            .fold(0.0, f64::max)
    }

    /// Components of `{r > R}`; those touching a truncation face are ends.
    pub fn count_ends(&self, radius: f64) -> Result<EndsCount> {
        if !(radius < self.max_r()) {
            return Err(Error::Truncation(format!(
                "radius {radius} exceeds the sampled range (max r = {})",
                self.max_r()
            )));
        }
        let outside = |v: usize| self.vertices[v].r > radius;
        let mut seen = vec![false; self.len()];
        let mut ends = Vec::new();
        let mut bounded = Vec::new();
        for start in 0..self.len() {
            if seen[start] || !outside(start) {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for (w, _, _) in self.neighbors(v) {
                    if !seen[w] && outside(w) {
                        seen[w] = true;
                        comp.push(w);
                        queue.push_back(w);
                    }
                }
            }
            if comp.iter().any(|&v| self.grid.on_truncation_face(v)) {
                ends.push(comp);
            } else {
                bounded.push(comp);
            }
        }
        Ok(EndsCount {
            radius,
            count: ends.len(),
            ends,
            bounded,
        })
    }

    /// Largest `|Δr|` along an edge, a resolution scale in `r` units.
    pub fn r_step(&self) -> f64 {
        (0..self.len())
            .flat_map(|v| self.neighbors(v).map(move |(w, _, _)| (v, w)))
            .map(|(v, w)| (self.vertices[v].r - self.vertices[w].r).abs())
            .fold(0.0, f64::max)
    }

    /// `|Δr|` of the axis edges whose endpoints straddle `t`.
    pub fn axis_steps_across(&self, t: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for v in 0..self.len() {
            let rv = self.vertices[v].r;
            for (w, _, axis) in self.neighbors(v) {
                let rw = self.vertices[w].r;
                if axis && v < w && (rv - t) * (rw - t) < 0.0 {
                    out.push((rv - rw).abs());
                }
            }
        }
        out
    }

    /// Count ends at evenly spaced radii in `[R0 + margin, 0.8 · safe]`,
    /// where `R0` also covers critical points caught between vertices.
    pub fn ends_stability(&self, epsilon: f64, samples: usize) -> Result<EndsStability> {
        let r0 = self.critical_free_radius(epsilon);
        let cell_r0 = self.critical_cell_radius();
        let margin = self.r_step();
        if !self.grid.has_truncation_faces() {
            return Ok(EndsStability {
                critical_radius: r0,
                critical_cell_radius: cell_r0,
                margin,
                rows: Vec::new(),
                stable_interval: None,
                count: 0,
                stable: true,
            });
        }
        let lo = r0.max(cell_r0) + margin;
        let hi = 0.8 * self.safe_radius();
        if !(hi > lo) {
            return Err(Error::Truncation(format!(
                "no room to count ends: R0 + margin = {lo:.4} but 0.8 × safe radius = {hi:.4}"
            )));
        }
        let samples = samples.max(2);
        let mut rows = Vec::with_capacity(samples);
        for k in 0..samples {
            let radius = lo + (hi - lo) * k as f64 / (samples - 1) as f64;
            rows.push((radius, self.count_ends(radius)?.count));
        }
        let (mut best, mut run_start) = ((0, 0), 0);
        for k in 1..=rows.len() {
            if k == rows.len() || rows[k].1 != rows[run_start].1 {
                if k - run_start > best.1 - best.0 {
                    best = (run_start, k);
                }
                run_start = k;
            }
        }
        let stable = best.1 - best.0 == rows.len();
        Ok(EndsStability {
            critical_radius: r0,
            critical_cell_radius: cell_r0,
            margin,
            stable_interval: Some((rows[best.0].0, rows[best.1 - 1].0)),
            count: rows[best.0].1,
            rows,
            stable,
        })
    }
}
