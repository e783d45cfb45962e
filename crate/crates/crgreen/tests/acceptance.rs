//! Acceptance gate: every primary criterion, each printed as one pass/fail
//! line with its measured value and stated tolerance.
//!
//! Run with: `cargo test --release --test acceptance -- --nocapture`

use std::time::Instant;

use crgreen::cover::{s_exponent, CoverModel, LensAction};
use crgreen::field::{GaugePowerField, PolyField, ScalarField};
use crgreen::heis::{gauge_norm, HPoint, SpherePoint};
use crgreen::jet::Jet;
use crgreen::mass::{mass_report, MassFitConfig, MassVerdict};
use crgreen::nil::{standard_basis, IdentityGrams, NilWorkspace, Nilmanifold};
use crgreen::ops::{
    bochner_residual, cr_laplacian_flat, cr_laplacian_rescaled, webster_r_conformal,
};
use crgreen::solver::{
    assemble, calibrate_c, consistency_order, dirichlet_green, exhaustion_green,
    near_pole_profile, Grid, NodeKind,
};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(criterion: &str, pass: bool, detail: &str) {
    println!("{} criterion {criterion}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn random_point<R: Rng>(n: usize, lo: f64, hi: f64, rng: &mut R) -> HPoint {
    loop {
        let z: Vec<C64> =
            (0..n).map(|_| C64::new(rng.gen_range(-hi..hi), rng.gen_range(-hi..hi))).collect();
        let p = HPoint { z, t: rng.gen_range(-hi * hi..hi * hi) };
        let r = gauge_norm(&p);
        if r >= lo && r <= hi {
            return p;
        }
    }
}

fn random_sphere<R: Rng>(n: usize, rng: &mut R) -> SpherePoint {
    let zeta: Vec<C64> =
        (0..=n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    SpherePoint::new(zeta).normalized()
}

struct UnitField(usize);

impl ScalarField for UnitField {
    fn n(&self) -> usize {
        self.0
    }
    fn jet(&self, _p: &HPoint) -> Jet {
        Jet::constant_re(2 * self.0 + 1, 1.0)
    }
}

#[test]
fn criterion_1_convention_lock() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for n in 1..=2usize {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + n as u64);
        for _ in 0..50 {
            let f = PolyField::random(n, 4, &mut rng);
            let p = random_point(n, 0.05, 1.5, &mut rng);
            worst = worst.max(bochner_residual(&f.jet(&p), &p));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        "1 (convention lock)",
        worst <= 1e-9 && elapsed < 10.0,
        &format!("Bochner residual {worst:.3e} <= 1e-9 on 50 fields, n in {{1,2}}, {elapsed:.1}s < 10s"),
    );
}

#[test]
fn criterion_2_fundamental_solution() {
    let start = Instant::now();
    let mut worst_harm = 0.0f64;
    for n in 1..=3usize {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + n as u64);
        let kernel = GaugePowerField::kernel(HPoint::origin(n), 1.0);
        for _ in 0..100 {
            let p = random_point(n, 0.5, 4.0, &mut rng);
            worst_harm = worst_harm.max(cr_laplacian_flat(&kernel.jet(&p), &p).value_re().abs());
        }
    }
    let mut worst_cal = 0.0f64;
    for n in 1..=2usize {
        let (c1, sweep) = calibrate_c(n, 1.0);
        let (c2, _) = calibrate_c(n, 1.7);
        worst_cal = worst_cal.max((c1 - c2).abs() / c1).max(sweep / c1);
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        "2 (fundamental solution)",
        worst_harm <= 1e-9 && worst_cal <= 1e-6 && elapsed < 60.0,
        &format!(
            "harmonicity {worst_harm:.3e} <= 1e-9 (100 pts, n in {{1,2,3}}), calibration drift {worst_cal:.3e} <= 1e-6, {elapsed:.1}s < 60s"
        ),
    );
}

#[test]
fn criterion_3_integrated_identities() {
    let start = Instant::now();
    let nm = Nilmanifold::standard(2);
    let ws = NilWorkspace::build(nm, standard_basis(2));
    let grams = IdentityGrams::from_workspace(&ws);
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let mut worst_ibf = 0.0f64;
    let mut min_paneitz = f64::INFINITY;
    let mut min_reeb = f64::INFINITY;
    for _ in 0..200 {
        let c: Vec<f64> = (0..ws.basis.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (res, scale) = grams.ibf_residual(&c);
        worst_ibf = worst_ibf.max(res.abs() / scale);
        min_paneitz = min_paneitz.min(grams.paneitz_energy(&c));
        min_reeb = min_reeb.min(grams.reeb_margin(&c));
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        "3 (integrated identities, n = 2)",
        worst_ibf <= 1e-8 && min_paneitz >= -1e-9 && min_reeb >= -1e-9 && elapsed < 120.0,
        &format!(
            "identity residual {worst_ibf:.3e} <= 1e-8, Paneitz energy min {min_paneitz:.3e} >= -1e-9, Reeb margin {min_reeb:.3e} >= -1e-9 on 200 fields, {elapsed:.1}s < 120s"
        ),
    );
}

#[test]
fn criterion_4_transformation_law() {
    let mut worst_cov = 0.0f64;
    for n in 1..=2usize {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + n as u64);
        for _ in 0..50 {
            let w = PolyField::random(n, 3, &mut rng);
            let f = PolyField::random(n, 4, &mut rng);
            let p = random_point(n, 0.05, 1.5, &mut rng);
            let jw = w.jet(&p);
            let ju = jw.mul(&jw).add(&Jet::constant_re(jw.dim, 1.0));
            let jf = f.jet(&p);
            let lhs = cr_laplacian_flat(&ju.mul(&jf), &p).value_re();
            let rhs =
                ju.value_re().powf(1.0 + 2.0 / n as f64) * cr_laplacian_rescaled(&ju, &jf, &p);
            worst_cov = worst_cov.max((lhs - rhs).abs() / (1.0 + lhs.abs().max(rhs.abs())));
        }
    }
    // Webster flatness of the pulled-back sphere structure away from poles
    let model = CoverModel::SphereTrivial { pole: SpherePoint::south(1) };
    let field = model.flat_factor_field();
    let mut rng = ChaCha8Rng::seed_from_u64(410);
    let mut worst_flat = 0.0f64;
    for _ in 0..50 {
        let p = random_point(1, 0.3, 2.5, &mut rng);
        worst_flat = worst_flat.max(webster_r_conformal(&field.jet(&p), &p).abs());
    }
    report(
        "4 (transformation law)",
        worst_cov <= 1e-9 && worst_flat <= 1e-9,
        &format!(
            "covariance mismatch {worst_cov:.3e} <= 1e-9 on 50 pairs, Webster flatness {worst_flat:.3e} <= 1e-9"
        ),
    );
}

#[test]
fn criterion_5_solver() {
    let start = Instant::now();
    let unit = UnitField(1);
    let (c1, _) = calibrate_c(1, 1.0);

    // consistency order
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let f = PolyField::random(1, 4, &mut rng);
    let probe = HPoint { z: vec![C64::new(0.3, -0.2)], t: 0.15 };
    let (order, errs) = consistency_order(1, &unit, true, &f, &[0.2, 0.1, 0.05, 0.025], &probe);
    let order_ok = order >= 1.8 || errs.iter().all(|e| *e < 1e-8);

    // Dirichlet Green structure
    let grid = Grid::centered_box(1, 0.05, 0.45, 0.21);
    let sys = assemble(&grid, &unit, false);
    let pole = vec![0i64, 0, 0];
    let g = dirichlet_green(&sys, &pole).unwrap();
    let mut boundary_max = 0.0f64;
    let mut interior_min = f64::INFINITY;
    for (lin, v) in g.values.iter().enumerate() {
        match grid.classify(&grid.unlinear(lin)) {
            NodeKind::Boundary => boundary_max = boundary_max.max(v.abs()),
            NodeKind::Interior => interior_min = interior_min.min(*v),
            _ => {}
        }
    }
    let q = vec![2i64, 1, 0];
    let g_q = dirichlet_green(&sys, &q).unwrap();
    let sym_gap = (g.values[grid.linear(&q).unwrap()] - g_q.values[grid.linear(&pole).unwrap()]).abs();

    // near-pole profile on the finest grid
    let fine = Grid::centered_box(1, 0.025, 0.45, 0.21);
    let fine_sys = assemble(&fine, &unit, false);
    let near = near_pole_profile(&fine_sys, &pole, c1, 0.2, 0.3).unwrap();

    // exhaustion against the calibrated kernel barrier
    let grids: Vec<Grid> =
        [0.25, 0.35, 0.45].iter().map(|&half| Grid::centered_box(1, 0.05, half, half * half)).collect();
    let barrier = GaugePowerField::kernel(HPoint::origin(1), c1);
    let (_, steps) = exhaustion_green(&grids, &unit, &pole, Some(&barrier), 0.3).unwrap();
    let exhaustion_ok = steps.iter().all(|s| s.barrier_ok)
        && steps.iter().skip(1).all(|s| s.sup_increment >= -1e-12);

    let elapsed = start.elapsed().as_secs_f64();
    report(
        "5 (solver, n = 1)",
        order_ok
            && boundary_max == 0.0
            && interior_min >= -1e-12
            && sym_gap <= 1e-9
            && near <= 0.05
            && exhaustion_ok
            && elapsed < 600.0,
        &format!(
            "order {order:.2} >= 1.8, boundary {boundary_max:.1e} = 0, interior min {interior_min:.1e} >= -1e-12, symmetry {sym_gap:.1e} <= 1e-9, near-pole {near:.4} <= 0.05, exhaustion monotone and barrier-dominated, {elapsed:.0}s < 600s"
        ),
    );
}

#[test]
fn criterion_6_covers() {
    let mut rng = ChaCha8Rng::seed_from_u64(600);
    let hopf = CoverModel::HeisenbergHopf {
        n: 1,
        pole: random_point(1, 0.5, 1.5, &mut rng),
        lambda: 2.0,
    };
    let lens = CoverModel::Lens { pole: random_sphere(1, &mut rng), action: LensAction::standard(3, 1) };

    let mut worst_deck = 0.0f64;
    let mut v_min = f64::INFINITY;
    let mut v_max = f64::NEG_INFINITY;
    for _ in 0..100 {
        let p = random_point(1, 0.4, 3.0, &mut rng);
        worst_deck = worst_deck.max(hopf.deck_residual(&p).unwrap());
        worst_deck = worst_deck.max(lens.deck_residual(&p).unwrap());
        let (v, _) = hopf.v_ratio(&p).unwrap();
        v_min = v_min.min(v);
        v_max = v_max.max(v);
    }
    let mut worst_harm = 0.0f64;
    for _ in 0..30 {
        let p = random_point(1, 0.4, 3.0, &mut rng);
        worst_harm = worst_harm.max(hopf.v_harmonicity_residual(&p).unwrap());
    }
    let s_est = s_exponent(&hopf, &[0.0, 0.25, 0.5, 0.75, 1.0, 1.05], 4, 16).unwrap().estimate;
    report(
        "6 (covers)",
        worst_deck <= 1e-10 && v_min > 0.0 && v_max <= 1.0 + 1e-10 && worst_harm <= 1e-8 && s_est <= 1.05,
        &format!(
            "deck residual {worst_deck:.1e} <= 1e-10, v in [{v_min:.3e}, {v_max:.6}] within (0, 1+1e-10] at 100 pts, harmonicity {worst_harm:.1e} <= 1e-8, s(M) estimate {s_est} <= 1.05"
        ),
    );
}

#[test]
fn criterion_7_mass() {
    let start = Instant::now();
    let config = MassFitConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(700);

    let sphere = CoverModel::SphereTrivial { pole: random_sphere(1, &mut rng) };
    let sphere_report = mass_report(&sphere, &config).unwrap();
    let sphere_ok =
        sphere_report.a_b.abs() <= 1e-10 && sphere_report.verdict == MassVerdict::Zero;

    let mut lens_ok = true;
    let mut detail = String::new();
    for n in 1..=2usize {
        for k in [2u32, 3] {
            let model = CoverModel::Lens {
                pole: random_sphere(n, &mut rng),
                action: LensAction::standard(k, n),
            };
            let r = mass_report(&model, &config).unwrap();
            let rel = (r.a_b - r.closed_form).abs() / r.closed_form;
            let coeffs_ok = r.lower_coeffs.iter().all(|c| c.abs() <= 1e-6 * r.a_b);
            let slope_ok = r.remainder_slope.map_or(true, |s| s >= 2.0 * n as f64 + 0.8);
            let bound_ok = r.a_b + 1e-9 >= r.boundary_bound;
            let positive = matches!(r.verdict, MassVerdict::Positive { .. });
            lens_ok &= rel <= 1e-6 && coeffs_ok && slope_ok && bound_ok && positive;
            detail.push_str(&format!("k={k},n={n}: rel {rel:.1e}; "));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        "7 (mass)",
        sphere_ok && lens_ok && elapsed < 60.0,
        &format!(
            "trivial model A_b {:.1e} = 0, {detail}lower coefficients, remainder order, boundary bound, positivity all hold, {elapsed:.1}s < 60s",
            sphere_report.a_b
        ),
    );
}

#[test]
fn criterion_8_determinism() {
    use crgreen::cli::{run, Command, RunConfig};
    let dir = tempfile::tempdir().unwrap();
    let mut config = RunConfig::default();
    config.seed = 42;
    config.out_dir = dir.path().to_path_buf();

    let mut ok = true;
    let mut detail = String::new();
    for (cmd, files) in [
        (Command::Mass { model: None, k: None, n: None }, vec!["mass_report.json", "mass_residuals.csv"]),
        (Command::Cover { model: None, k: None, lambda: None, n: None, points: None }, vec!["cover_report.json", "cover_v_ratio.csv"]),
        (Command::Sexp { lambda: None, annuli: None, resolution: None }, vec!["sexp_report.json", "sexp_probes.csv"]),
        (Command::Conventions, vec!["conventions_report.json"]),
    ] {
        run(&cmd, &config).unwrap();
        let first: Vec<Vec<u8>> =
            files.iter().map(|f| std::fs::read(dir.path().join(f)).unwrap()).collect();
        run(&cmd, &config).unwrap();
        for (f, bytes) in files.iter().zip(&first) {
            let again = std::fs::read(dir.path().join(f)).unwrap();
            let same = &again == bytes;
            ok &= same;
            if !same {
                detail.push_str(&format!("{f} differs; "));
            }
        }
    }
    report(
        "8 (determinism)",
        ok,
        &format!("reruns with seed 42 are bitwise identical across mass/cover/sexp/conventions reports {detail}"),
    );
}
