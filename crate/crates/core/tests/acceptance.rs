//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use gravcontact::electromagnetic::{EmField, JoinedStructure};
use gravcontact::geometry::{self, DiffConfig};
use gravcontact::multivector::{full_contraction, killing_field_names, pi_star, schouten_sym, SymmetricMultivectorField};
use gravcontact::phase::{normalization_residual, verify_jacobi_pair, PhasePoint, PhaseStructures};
use gravcontact::report::{sample_points, ResidualReport, SampleBox};
use gravcontact::spacetime::{kerr, minkowski, ScaleConstants, DEFAULT_MARGIN};
use gravcontact::suite::{run_orbit, OrbitSpec, Suite, Tolerances};
use gravcontact::symmetry::killing_conservation_identity_residual;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{catalog_metrics, odd_scales, polynomial_field, structures};

const SEED: u64 = 20_240_611;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn all_pass(reports: &[ResidualReport]) -> Check {
    let worst = reports.iter().find(|r| !r.pass);
    match worst {
        Some(r) => Err(r.summary_line()),
        None => Ok(format!("{} reports within tolerance", reports.len())),
    }
}

fn suite(s: Arc<dyn PhaseStructures>, n: usize) -> Suite {
    let name = s.metric().name().to_string();
    Suite::new(s, &SampleBox::for_metric(&name), n, SEED, Tolerances::default()).expect("sampling")
}

fn timed(limit_s: f64, start: Instant, inner: Check) -> Check {
    let t = start.elapsed().as_secs_f64();
    let detail = inner?;
    if t > limit_s {
        return Err(format!("{detail}; took {t:.1} s (limit {limit_s} s)"));
    }
    Ok(format!("{detail}; {t:.2} s"))
}

fn normalization() -> Check {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for m in catalog_metrics() {
        for scales in [ScaleConstants::default(), odd_scales()] {
            let s = structures(m.clone(), scales);
            for p in sample_points(s.as_ref(), &SampleBox::for_metric(m.name()), 200, SEED).map_err(|e| e.to_string())? {
                worst = worst.max(normalization_residual(&s.frame(&p).map_err(|e| e.to_string())?));
            }
        }
    }
    let inner = if worst <= 1e-12 { Ok(format!("max residual {worst:.2e}")) } else { Err(format!("max residual {worst:.2e}")) };
    timed(5.0, start, inner)
}

fn contact_pair() -> Check {
    let start = Instant::now();
    let mut reports = vec![];
    for m in catalog_metrics() {
        let all = suite(structures(m, odd_scales()), 50).check_structures().map_err(|e| e.to_string())?;
        // the Jacobi pair is criterion 3
        reports.extend(all.into_iter().filter(|r| !r.identity.starts_with("Jacobi") && !r.identity.starts_with("normalization")));
    }
    timed(30.0, start, all_pass(&reports))
}

fn jacobi_pair() -> Check {
    let mut worst: f64 = 0.0;
    for m in catalog_metrics() {
        let st = suite(structures(m, odd_scales()), 20);
        for p in &st.points {
            worst = worst.max(verify_jacobi_pair(st.structures.clone(), p).map_err(|e| e.to_string())?.max());
        }
    }
    if worst <= 1e-6 { Ok(format!("max residual {worst:.2e}")) } else { Err(format!("max residual {worst:.2e}")) }
}

/// `{f, g} = ∂_p f · ∂_x g − ∂_x f · ∂_p g` on T*R⁴ by central differences.
fn canonical_bracket(k: &SymmetricMultivectorField, l: &SymmetricMultivectorField, x: &[f64], p: &[f64]) -> f64 {
    let cfg = DiffConfig::default();
    let grad = |f: &SymmetricMultivectorField| {
        let z: Vec<f64> = x.iter().chain(p).copied().collect();
        geometry::gradient(|z| pi_star(f, &z[..4], &z[4..]), &z, &cfg).unwrap()
    };
    let (gk, gl) = (grad(k), grad(l));
    (0..4).map(|i| gk[4 + i] * gl[i] - gk[i] * gl[4 + i]).sum()
}

fn schouten_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for (a, b) in [(1, 1), (1, 2), (2, 2)] {
        for _ in 0..50 {
            let k = polynomial_field(&mut rng, a, 4, [1.0, 0.5, 0.2]);
            let l = polynomial_field(&mut rng, b, 4, [1.0, 0.5, 0.2]);
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let p: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lhs = full_contraction(&schouten_sym(&k, &l, &x).map_err(|e| e.to_string())?, &p).map_err(|e| e.to_string())?;
            let rhs = canonical_bracket(&k, &l, &x, &p);
            worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1.0));
        }
    }
    if worst <= 1e-8 { Ok(format!("max relative error {worst:.2e}")) } else { Err(format!("max relative error {worst:.2e}")) }
}

fn killing_suite() -> Check {
    let mut reports = vec![];
    for m in catalog_metrics() {
        let names = killing_field_names(m.name()).map_err(|e| e.to_string())?;
        let st = suite(structures(m, ScaleConstants::default()), 50);
        for name in names {
            reports.extend(st.check_killing(name).map_err(|e| e.to_string())?);
        }
    }
    all_pass(&reports)
}

fn hidden_symmetries() -> Check {
    let mut reports = vec![];
    for m in catalog_metrics() {
        let mut names: Vec<&str> = killing_field_names(m.name()).map_err(|e| e.to_string())?.to_vec();
        names.push("compton_metric");
        let st = suite(structures(m, odd_scales()), 50);
        for name in names {
            reports.extend(st.build_symmetry(name).map_err(|e| e.to_string())?);
        }
    }
    all_pass(&reports)
}

fn reeb_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 7);
    let mut worst: f64 = 0.0;
    let metrics = catalog_metrics();
    for i in 0..20 {
        let m = metrics[i % metrics.len()].clone();
        let s = structures(m.clone(), odd_scales());
        let k = polynomial_field(&mut rng, 2, 4, [1.0, 0.1, 0.01]);
        let pts = sample_points(s.as_ref(), &SampleBox::for_metric(m.name()), 5, SEED + i as u64).map_err(|e| e.to_string())?;
        for p in &pts {
            worst = worst.max(killing_conservation_identity_residual(&k, s.clone(), p).map_err(|e| e.to_string())?.abs());
        }
    }
    let detail = format!("gamma.K(tau) = +1/2 [K, G](tau), max residual {worst:.2e}");
    if worst <= 1e-7 { Ok(detail) } else { Err(detail) }
}

fn homomorphism() -> Check {
    let mut reports = vec![];
    let kerr_suite = suite(structures(kerr(1.0, 0.6, DEFAULT_MARGIN).unwrap(), odd_scales()), 25);
    let mink_suite = suite(structures(minkowski(), odd_scales()), 25);
    for (st, a, b) in [(&kerr_suite, "dt", "dphi"), (&mink_suite, "boost_x", "dx"), (&kerr_suite, "carter", "dt")] {
        reports.extend(st.verify_homomorphism(a, b).map_err(|e| e.to_string())?);
    }
    all_pass(&reports)
}

fn kerr_orbit() -> OrbitSpec {
    OrbitSpec {
        name: "kerr".into(),
        initial: PhasePoint::new([0.0, 8.0, std::f64::consts::FRAC_PI_2 - 0.3, 0.0], [0.005, 0.003, 0.045]),
        length: 100.0,
        tolerance: 1e-10,
        monitors: vec!["dt".into(), "dphi".into(), "carter".into(), "radial_square".into()],
        convergence_step: Some(0.5),
    }
}

fn dynamics() -> Check {
    let start = Instant::now();
    let s = structures(kerr(1.0, 0.6, DEFAULT_MARGIN).unwrap(), ScaleConstants::default());
    let out = run_orbit(s, &kerr_orbit(), &Tolerances::default(), SEED).map_err(|e| e.to_string())?;
    all_pass(&out.reports)?;
    let killing = out.drift.entries.iter().filter(|e| e.name != "radial_square(tau)");
    let worst = killing.map(|e| e.relative_drift).fold(0.0, f64::max);
    let aux = out.drift.entry("radial_square(tau)").ok_or("missing non-Killing monitor")?.relative_drift;
    if aux <= 1e-3 {
        return Err(format!("non-Killing monitor drift only {aux:.2e}"));
    }
    let ratio = out.reports.last().map(|r| r.identity.clone()).unwrap_or_default();
    timed(60.0, start, Ok(format!("Killing drift {worst:.2e}, non-Killing drift {aux:.2e}, {ratio}")))
}

fn electromagnetic() -> Check {
    let field = EmField::constant([0.3, -0.2, 0.1], [0.05, 0.4, -0.25]);
    let charged = ScaleConstants::new(1.3, 0.7, 1.9, 0.6).unwrap();
    let s: Arc<dyn PhaseStructures> = Arc::new(JoinedStructure::new(minkowski(), charged, field.clone()).unwrap());
    let tol = Tolerances { duality: 1e-8, ..Tolerances::default() };
    let st = Suite::new(s, &SampleBox::for_metric("minkowski"), 20, SEED, tol).map_err(|e| e.to_string())?;
    let reports = st.verify_em().map_err(|e| e.to_string())?;
    all_pass(&reports)?;
    // q = 0: identical to the metric structures
    let neutral = ScaleConstants { q: 0.0, ..charged };
    let joined = JoinedStructure::new(minkowski(), neutral, field).unwrap();
    let plain = structures(minkowski(), neutral);
    for p in &st.points {
        if joined.evaluate(p).map_err(|e| e.to_string())? != plain.evaluate(p).map_err(|e| e.to_string())? {
            return Err("q = 0 differs from the metric structures".into());
        }
    }
    Ok(format!("{} reports within tolerance; q = 0 identical", reports.len()))
}

fn determinism() -> Check {
    let run = || -> Result<String, String> {
        let st = suite(structures(kerr(1.0, 0.6, DEFAULT_MARGIN).unwrap(), odd_scales()), 10);
        let mut reports = st.check_structures().map_err(|e| e.to_string())?;
        reports.extend(st.build_symmetry("carter").map_err(|e| e.to_string())?);
        let s = structures(kerr(1.0, 0.6, DEFAULT_MARGIN).unwrap(), ScaleConstants::default());
        let spec = OrbitSpec { length: 10.0, convergence_step: None, ..kerr_orbit() };
        let orbit = run_orbit(s, &spec, &Tolerances::default(), SEED).map_err(|e| e.to_string())?;
        let mut map = BTreeMap::new();
        map.insert("reports", serde_json::to_value(&reports).unwrap());
        map.insert("drift", serde_json::to_value(&orbit.drift).unwrap());
        Ok(serde_json::to_string(&map).unwrap())
    };
    let (a, b) = (run()?, run()?);
    if a == b { Ok(format!("{} bytes identical", a.len())) } else { Err("reports differ between runs".into()) }
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("normalization of contact map and time form", normalization),
        ("contact pair: exactness, regularity, duality", contact_pair),
        ("Jacobi pair brackets", jacobi_pair),
        ("symmetric Schouten bracket against canonical Poisson bracket", schouten_oracle),
        ("Killing fields and closure", killing_suite),
        ("hidden symmetries", hidden_symmetries),
        ("Reeb derivative of K(tau) for non-Killing K", reeb_identity),
        ("bracket homomorphism", homomorphism),
        ("Kerr orbit conservation and convergence", dynamics),
        ("joined electromagnetic pair", electromagnetic),
        ("determinism under fixed seed", determinism),
    ];
    let mut failures = 0;
    for (i, (title, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {:>2} {title}: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL {:>2} {title}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
