//! Acceptance checks, one line per criterion. Runs as a plain binary so
//! that every criterion is reported even when an earlier one fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tamed_core::battery::{curvature_samples, run_battery, BatteryOptions, SANDWICH_SHARE, SANDWICH_SLACK};
use tamed_core::catalog::{catalog_build, CatalogChart, GroundTruth, Params};
use tamed_core::immersion::{point_geometry, principal_curvatures};
use tamed_core::invariants::{
    default_radii, f_infinity, invariant_tails, kasue_bound, pinching_functions, threshold_c_star, DecayProfile,
    DeltaModel, DEFAULT_RADII,
};
use tamed_core::mesh::{build_mesh, MeshGraph, DEFAULT_EPSILON_CRIT};
use tamed_core::spaceform::{c_kappa, ct_kappa, s_kappa};
use tamed_core::volumetrics::{
    gap_ratio, verify_growth_bounds, volume_curve, VerdictStatus, VolumeProfile, DEFAULT_CURVE_POINTS,
};
use tamed_core::{Ambient, Chart, Exec};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn entry(name: &str, params: &[(&str, f64)]) -> (CatalogChart, GroundTruth) {
    let params: Params = params.iter().map(|&(k, v)| (k.to_string(), v)).collect();
    catalog_build(name, &params).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn mesh_for(chart: &CatalogChart, resolution: &[usize]) -> MeshGraph {
    let amb = Ambient::for_chart(chart).unwrap();
    build_mesh(&amb, chart, resolution, Exec::Parallel).unwrap()
}

/// Interior lattice of `k^m` chart points.
fn interior_points(chart: &dyn Chart, k: usize) -> Vec<Vec<f64>> {
    let dom = chart.domain();
    let total = k.pow(dom.len() as u32);
    (0..total)
        .map(|mut idx| {
            dom.iter()
                .map(|d| {
                    let i = idx % k;
                    idx /= k;
                    d.lo + (d.hi - d.lo) * (i as f64 + 0.5) / k as f64
                })
                .collect()
        })
        .collect()
}

fn comparison_identities() -> Outcome {
    let mut identity: f64 = 0.0;
    for kappa in [0.0, -0.25, -0.5, -1.0, -2.0, -4.0] {
        for i in 0..=100 {
            let t = i as f64 * 0.05;
            let (c, s) = (c_kappa(kappa, t).unwrap(), s_kappa(kappa, t).unwrap());
            identity = identity.max((c * c + kappa * s * s - 1.0).abs() / (c * c));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut hess: f64 = 0.0;
    for case in 0..200 {
        let n = 2 + case % 4;
        let kappa = if case % 5 == 0 { 0.0 } else { -rng.gen_range(0.1..2.0) };
        let amb = if kappa == 0.0 {
            Ambient::euclidean(n)
        } else {
            Ambient::hyperbolic(n, kappa).unwrap()
        };
        let tangent = |p: &[f64], rng: &mut ChaCha8Rng| {
            let w: Vec<f64> = (0..p.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            amb.project_tangent(p, &w)
        };
        let dir = tangent(&amb.pole.clone(), &mut rng);
        let dir: Vec<f64> = dir.iter().map(|x| x / amb.norm(&dir)).collect();
        let r = rng.gen_range(0.3..2.5);
        let p = amb.point_at(&dir, r);
        let (u, v) = (tangent(&p, &mut rng), tangent(&p, &mut rng));
        let (_, exact) = amb.distance_gradient_hessian(&p, &u, &v).unwrap();
        let f = |a: f64, b: f64| {
            let w: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
            amb.distance(&amb.exp_map(&p, &w)).unwrap()
        };
        let h = 1e-4;
        let fd = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
        let scale = ct_kappa(kappa, r).unwrap() * amb.norm(&u) * amb.norm(&v);
        hess = hess.max((fd - exact).abs() / scale);
    }
    outcome(
        identity <= 1e-12 && hess < 1e-6,
        format!("identity rel err {identity:.1e}, Hessian rel err {hess:.1e} over 200 cases"),
    )
}

fn alpha_oracles() -> Outcome {
    let worst = |chart: &CatalogChart, want: f64| -> f64 {
        let amb = Ambient::for_chart(chart).unwrap();
        interior_points(chart, if chart.dim() == 2 { 15 } else { 6 })
            .iter()
            .map(|p| (point_geometry(&amb, chart, p).unwrap().alpha_norm - want).abs())
            .fold(0.0, f64::max)
    };
    let mut curved: f64 = 0.0;
    for radius in [1.0, 2.5] {
        let (s, _) = entry("sphere", &[("radius", radius)]);
        curved = curved.max(worst(&s, 2f64.sqrt() / radius));
    }
    let (c, _) = entry("cylinder", &[]);
    curved = curved.max(worst(&c, 1.0));
    let mut flat: f64 = 0.0;
    for m in [2.0, 3.0] {
        let (f, _) = entry("flat-subspace", &[("m", m)]);
        flat = flat.max(worst(&f, 0.0));
        let (g, _) = entry("totally-geodesic", &[("m", m)]);
        flat = flat.max(worst(&g, 0.0));
    }
    outcome(
        curved < 1e-8 && flat < 1e-10,
        format!("sphere/cylinder err {curved:.1e}, flat/totally geodesic |alpha| {flat:.1e}"),
    )
}

fn rotation_example() -> Outcome {
    let mut stated: f64 = 0.0;
    let mut consistent: f64 = 0.0;
    let mut split: f64 = 0.0;
    let mut b_err: f64 = 0.0;
    for (n, a) in [(2usize, 1.0), (3, 1.0), (2, 2.0)] {
        let (chart, _) = entry(
            "rotation-hypersurface",
            &[("n", n as f64), ("a", a), ("truncation", 6.0)],
        );
        let amb = Ambient::for_chart(&chart).unwrap();
        let nf = n as f64;
        let mut p = chart.basepoint();
        for i in 0..=60 {
            let s = i as f64 * 0.1;
            p[0] = s;
            let pg = point_geometry(&amb, &chart, &p).unwrap();
            let got = pg.alpha_norm * pg.alpha_norm;
            let lambda_sq = (a * a - 0.25) / (a * (2.0 * s).cosh() - 0.5).powi(2);
            stated = stated.max((got - 2.0 * nf * lambda_sq).abs() / (2.0 * nf * lambda_sq));
            consistent = consistent.max((got - nf * lambda_sq).abs() / (nf * lambda_sq));

            let k = principal_curvatures(&pg).unwrap();
            let scale = k.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let err = |lam: f64, mu: f64, rest: &[f64]| {
                rest.iter().map(|x| (x - lam).abs()).fold((lam + mu).abs(), f64::max) / scale
            };
            let low = err(k[n - 1], k[0], &k[1..n]);
            let high = err(k[0], k[n - 1], &k[..n - 1]);
            split = split.max(low.min(high));
        }
        let mesh = mesh_for(&chart, &chart.default_resolution());
        let rep = invariant_tails(&mesh, &default_radii(&mesh, DEFAULT_RADII)).unwrap();
        let want = (nf * (a * a - 0.25)).sqrt() / (2.0 * a);
        let got = rep.b_tail.last().unwrap();
        b_err = b_err.max((got - want).abs() / want);
    }
    outcome(
        stated < 1e-6 && split < 1e-6 && b_err < 0.05,
        format!(
            "|alpha|^2 vs 2n(a^2-1/4)/(a cosh 2s-1/2)^2 rel err {stated:.2e} (vs n lambda^2: {consistent:.1e}), \
             lambda+mu {split:.1e}, b tail rel err {b_err:.2e}"
        ),
    )
}

fn pinching() -> Outcome {
    let th = threshold_c_star();
    let at_star = (f_infinity(th.closed_form).unwrap() - 0.25).abs();
    let grid: Vec<f64> = (0..1000).map(|i| 0.49 * i as f64 / 999.0).collect();
    let values: Vec<f64> = grid.iter().map(|&c| f_infinity(c).unwrap()).collect();
    let decreasing = values.windows(2).all(|w| w[1] < w[0]);
    let exact = grid.iter().all(|&c| {
        [(0.0, 0.0), (-1.0, 1.0)].iter().all(|&(kappa, r0)| {
            pinching_functions(kappa, c, None, DeltaModel::Zero, r0).unwrap().lambda0 == 1.0 - 4.0 * c * c
        })
    });
    outcome(
        th.discrepancy() < 1e-10 && at_star < 1e-10 && decreasing && exact,
        format!(
            "c* = {:.12}, bisection gap {:.1e}, |F(c*) - 1/4| = {at_star:.1e}, decreasing {decreasing}, \
             Lambda0 = 1 - 4c^2 exactly {exact}",
            th.closed_form,
            th.discrepancy()
        ),
    )
}

fn kasue() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut flat, mut hyp): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let c = rng.gen_range(0.01..2.0);
        let r0 = rng.gen_range(0.1..5.0);
        let t = r0 + rng.gen_range(0.01..20.0);
        let got = kasue_bound(0.0, DecayProfile::Inverse { c }, r0, t, DeltaModel::Zero).unwrap();
        flat = flat.max((got - c * (1.0 - r0 / t)).abs());
        let got = kasue_bound(-1.0, DecayProfile::Sinh { c }, r0, t, DeltaModel::Zero).unwrap();
        hyp = hyp.max((got - c * (t - r0) / t.sinh()).abs());
    }
    outcome(
        flat < 1e-10 && hyp < 1e-8,
        format!("kappa = 0 err {flat:.1e}, kappa = -1 err {hyp:.1e} over 100 triples"),
    )
}

fn ends() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, want) in [("flat-subspace", 1usize), ("cylinder", 2), ("catenoid", 2)] {
        let (chart, _) = entry(name, &[]);
        let base = chart.default_resolution();
        let doubled: Vec<usize> = base.iter().map(|n| 2 * n).collect();
        let mut counts = Vec::new();
        for res in [base, doubled] {
            let st = mesh_for(&chart, &res).ends_stability(DEFAULT_EPSILON_CRIT, 12).unwrap();
            pass &= st.stable && st.count == want;
            counts.push(format!("{}{}", st.count, if st.stable { "" } else { "*" }));
        }
        parts.push(format!("{name} {}", counts.join("/")));
    }
    outcome(pass, parts.join(", "))
}

fn growth() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["flat-subspace", "totally-geodesic"] {
        let (chart, _) = entry(name, &[("m", 3.0), ("n", 4.0)]);
        let mesh = mesh_for(&chart, &chart.default_resolution());
        let profile = VolumeProfile::build(&mesh, &chart, Exec::Parallel).unwrap();
        let curve = volume_curve(&profile, &profile.default_radii(DEFAULT_CURVE_POINTS).unwrap()).unwrap();
        let rep = invariant_tails(&mesh, &default_radii(&mesh, DEFAULT_RADII)).unwrap();
        let count = mesh.ends_stability(DEFAULT_EPSILON_CRIT, 12).unwrap().count;
        let gv = verify_growth_bounds(&curve, &rep, Some(count), 0.03).unwrap();
        for v in &gv.verdicts {
            let (lhs, rhs) = (v.lhs.unwrap_or(f64::NAN), v.rhs.unwrap_or(f64::NAN));
            pass &= v.status == VerdictStatus::Satisfied && (lhs - 1.0).abs() < 0.03 && (rhs - 1.0).abs() < 1e-12;
            parts.push(format!("{} {lhs:.4}/{rhs}", v.check));
        }
        pass &= gv.verdicts.len() == 2;
    }
    outcome(pass, parts.join(", "))
}

fn gap_ratios() -> Outcome {
    let mut worst: f64 = 0.0;
    for name in ["flat-subspace", "totally-geodesic"] {
        for m in [2.0, 3.0] {
            let (chart, _) = entry(name, &[("m", m)]);
            let mesh = mesh_for(&chart, &chart.default_resolution());
            let profile = VolumeProfile::build(&mesh, &chart, Exec::Parallel).unwrap();
            let radii = profile.default_radii(DEFAULT_CURVE_POINTS).unwrap();
            let ratio = gap_ratio(&profile, &chart, &radii, Exec::Parallel).unwrap();
            worst = ratio.values.iter().map(|v| (v - 1.0).abs()).fold(worst, f64::max);
        }
    }
    outcome(worst < 0.01, format!("max |ratio - 1| = {worst:.2e}"))
}

fn sandwich() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["flat-subspace", "totally-geodesic"] {
        let (chart, _) = entry(name, &[("m", 3.0), ("n", 4.0)]);
        let mesh = mesh_for(&chart, &chart.default_resolution());
        let samples = curvature_samples(&mesh, &chart, 200, 0, Exec::Parallel).unwrap();
        let admissible: Vec<_> = samples.iter().filter(|s| s.admissible).collect();
        let good = admissible.iter().filter(|s| s.sandwiched(SANDWICH_SLACK)).count();
        let share = good as f64 / admissible.len().max(1) as f64;
        pass &= !admissible.is_empty() && share >= SANDWICH_SHARE;
        if name == "flat-subspace" {
            let spread = admissible
                .iter()
                .map(|s| (s.upper - s.lower).abs().max((s.exact - s.lower).abs()))
                .fold(0.0, f64::max);
            pass &= spread <= 1e-9;
            parts.push(format!("{name} {good}/{} (spread {spread:.1e})", admissible.len()));
        } else {
            parts.push(format!("{name} {good}/{}", admissible.len()));
        }
    }
    outcome(pass, parts.join(", "))
}

fn determinism() -> Outcome {
    let (chart, truth) = entry("flat-subspace", &[("m", 3.0), ("n", 4.0)]);
    let opts = BatteryOptions::new(chart.default_resolution());
    let run = || serde_json::to_vec(&run_battery(&chart, Some(&truth), &opts).unwrap()).unwrap();
    let (first, second) = (run(), run());
    outcome(first == second, format!("{} bytes, identical {}", first.len(), first == second))
}

fn main() {
    type Criterion = (&'static str, f64, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("comparison functions", 1.0, comparison_identities),
        ("second fundamental form oracles", 5.0, alpha_oracles),
        ("rotation hypersurface", 60.0, rotation_example),
        ("pinching threshold", 1.0, pinching),
        ("gradient estimate closed forms", 1.0, kasue),
        ("ends counting", 120.0, ends),
        ("volume growth verdicts", 120.0, growth),
        ("gap ratios", 120.0, gap_ratios),
        ("curvature sandwich", 60.0, sandwich),
        ("determinism", f64::INFINITY, determinism),
    ];
    let mut failed = 0;
    for (k, (name, budget, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check));
        let secs = start.elapsed().as_secs_f64();
        let out = result.unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let pass = out.pass && secs < budget;
        failed += usize::from(!pass);
        let budget = if budget.is_finite() { format!("{budget}s") } else { "-".into() };
        println!(
            "criterion {:>2} {:<32} {} [{secs:.2}s / {budget}] {}",
            k + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            out.detail
        );
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
