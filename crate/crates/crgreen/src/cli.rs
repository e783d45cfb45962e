//! Batch entry point: configuration parsing, experiment orchestration, and
//! machine-readable reports.
//!
//! Each subcommand runs one experiment family, prints one `PASS`/`FAIL` line
//! per check, writes a JSON report (plus CSV files for anything plottable)
//! into the output directory, and signals success purely through the exit
//! code: `0` all checks passed, `1` at least one named check failed, `2`
//! unusable configuration or a runtime error.
//!
//! Configuration is a JSON file (`--config`) whose fields individual flags
//! override.  In deterministic mode (the default) every sample is drawn from
//! the configured seed and reports are bitwise reproducible.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cover::{s_exponent, CoverModel, DeckRegime, LensAction};
use crate::field::{GaugePowerField, PolyField, ScalarField};
use crate::heis::{gauge_norm, HPoint, SpherePoint};
use crate::jet::Jet;
use crate::mass::{mass_report, MassFitConfig, MassVerdict};
use crate::nil::{standard_basis, IdentityGrams, NilWorkspace, Nilmanifold};
use crate::ops::{
    bochner_residual, cr_laplacian_flat, cr_laplacian_rescaled, frame_x, frame_y, reeb,
    webster_r_conformal,
};
use crate::solver::{
    assemble, calibrate_c, consistency_order, dirichlet_green, exhaustion_green, moser_decay,
    near_pole_profile, Grid, NodeKind,
};

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

/// File-backed run configuration; every field has a default and every flag
/// overrides its field.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub deterministic: bool,
    pub out_dir: PathBuf,
    pub verify: VerifyParams,
    pub green: GreenParams,
    pub cover: CoverParams,
    pub sexp: SexpParams,
    pub mass: MassParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            deterministic: true,
            out_dir: PathBuf::from("reports"),
            verify: VerifyParams::default(),
            green: GreenParams::default(),
            cover: CoverParams::default(),
            sexp: SexpParams::default(),
            mass: MassParams::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyParams {
    /// Complex dimensions to sweep; `None` means {1, 2}.
    pub n: Option<usize>,
    /// Random fields per identity sweep.
    pub fields: usize,
}

impl Default for VerifyParams {
    fn default() -> Self {
        VerifyParams { n: None, fields: 50 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreenParams {
    /// Step of the structural grid (boundary, symmetry, exhaustion).
    pub h: f64,
    /// Step of the near-pole profile grid.
    pub near_h: f64,
    /// Horizontal half-width of the main box.
    pub half_z: f64,
    /// Vertical half-height of the main box.
    pub half_t: f64,
    /// Gauge window of the near-pole ratio check.
    pub near_window: (f64, f64),
    /// Tolerance of the near-pole ratio check.
    pub near_tol: f64,
    /// Nested half-widths of the exhaustion run.
    pub exhaustion_half_z: Vec<f64>,
    /// Skip the (expensive) near-pole profile.
    pub skip_near: bool,
}

impl Default for GreenParams {
    fn default() -> Self {
        GreenParams {
            h: 0.05,
            near_h: 0.025,
            half_z: 0.45,
            half_t: 0.21,
            near_window: (0.2, 0.3),
            near_tol: 0.05,
            exhaustion_half_z: vec![0.25, 0.35, 0.45],
            skip_near: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverParams {
    /// `sphere`, `lens`, or `hopf`.
    pub model: String,
    /// Deck group order of the lens model.
    pub k: u32,
    /// Dilation factor of the noncompact model.
    pub lambda: f64,
    /// Complex dimension.
    pub n: usize,
    /// Sample points per check.
    pub points: usize,
}

impl Default for CoverParams {
    fn default() -> Self {
        CoverParams { model: "hopf".into(), k: 3, lambda: 2.0, n: 1, points: 100 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SexpParams {
    pub lambda: f64,
    /// Dilation annuli probed on each side of the excluded pole region.
    pub annuli: usize,
    /// Simpson resolution per annulus axis.
    pub resolution: usize,
    /// Exponents probed for integrability.
    pub s_grid: Vec<f64>,
}

impl Default for SexpParams {
    fn default() -> Self {
        SexpParams {
            lambda: 2.0,
            annuli: 4,
            resolution: 16,
            s_grid: vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.05],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MassParams {
    /// `sphere` or `lens`.
    pub model: String,
    pub k: u32,
    pub n: usize,
    pub fit: MassFitConfigOpt,
}

impl Default for MassParams {
    fn default() -> Self {
        MassParams { model: "lens".into(), k: 2, n: 1, fit: MassFitConfigOpt::default() }
    }
}

/// Overridable subset of [`MassFitConfig`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MassFitConfigOpt {
    pub rho0: Option<f64>,
    pub ratio: Option<f64>,
    pub count: Option<usize>,
    pub directions: Option<usize>,
}

impl MassFitConfigOpt {
    fn resolve(&self, seed: u64) -> MassFitConfig {
        let base = MassFitConfig::default();
        MassFitConfig {
            rho0: self.rho0.unwrap_or(base.rho0),
            ratio: self.ratio.unwrap_or(base.ratio),
            count: self.count.unwrap_or(base.count),
            directions: self.directions.unwrap_or(base.directions),
            seed,
        }
    }
}

// ---------------------------------------------------------------------------
// command line
// ---------------------------------------------------------------------------

#[derive(Parser, Debug)]
#[command(
    name = "crgreen",
    version,
    about = "Green's functions, covers, and mass on the Heisenberg group",
    after_help = "Exit codes: 0 all checks passed, 1 a named check failed, 2 bad configuration.\n\
                  CRGREEN_THREADS is accepted for forward compatibility; computations are sequential."
)]
pub struct Cli {
    /// JSON configuration file; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for reports (default: reports).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed of the deterministic sample streams.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Deterministic mode: identical seeds give bitwise-identical reports.
    #[arg(long, global = true)]
    pub deterministic: Option<bool>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Jet-calculus and integrated-identity suites (conventions, Bochner,
    /// kernel harmonicity, calibration stability, transformation law,
    /// nilmanifold identities).
    Verify {
        /// Restrict to one complex dimension (default: sweep 1 and 2).
        #[arg(long)]
        n: Option<usize>,
        /// Random fields per sweep.
        #[arg(long)]
        fields: Option<usize>,
    },
    /// Solver experiments: calibration, Dirichlet Green structure, near-pole
    /// profile, exhaustion, annulus decay.
    Green {
        #[arg(long)]
        h: Option<f64>,
        /// Step of the near-pole profile grid.
        #[arg(long)]
        near_h: Option<f64>,
        /// Skip the (expensive) near-pole profile.
        #[arg(long)]
        skip_near: bool,
    },
    /// Deck-invariance and v-ratio checks of a cover model.
    Cover {
        /// sphere | lens | hopf
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        k: Option<u32>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Integrability exponent s(M) of the noncompact cover model.
    Sexp {
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        annuli: Option<usize>,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// CR mass: chart at infinity, expansion fit, closed-form oracle,
    /// positivity.
    Mass {
        /// sphere | lens
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        k: Option<u32>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Emit the frozen sign/frame convention report.
    Conventions,
}

// ---------------------------------------------------------------------------
// checks and reports
// ---------------------------------------------------------------------------

/// One named assertion of a report.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    /// `"<="` or `">="`.
    pub cmp: &'static str,
    pub pass: bool,
}

fn le(name: &str, value: f64, bound: f64) -> Check {
    Check { name: name.into(), value, bound, cmp: "<=", pass: value <= bound }
}

fn ge(name: &str, value: f64, bound: f64) -> Check {
    Check { name: name.into(), value, bound, cmp: ">=", pass: value >= bound }
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    deterministic: bool,
    config: &'a RunConfig,
    checks: &'a [Check],
    data: T,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// sampling helpers
// ---------------------------------------------------------------------------

fn random_chart_point<R: Rng>(n: usize, lo: f64, hi: f64, rng: &mut R) -> HPoint {
    loop {
        let z: Vec<C64> = (0..n)
            .map(|_| C64::new(rng.gen_range(-hi..hi), rng.gen_range(-hi..hi)))
            .collect();
        let p = HPoint { z, t: rng.gen_range(-hi * hi..hi * hi) };
        let r = gauge_norm(&p);
        if r >= lo && r <= hi {
            return p;
        }
    }
}

fn random_sphere_point<R: Rng>(n: usize, rng: &mut R) -> SpherePoint {
    loop {
        let zeta: Vec<C64> = (0..=n)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let s = SpherePoint::new(zeta);
        if s.norm() > 0.3 {
            return s.normalized();
        }
    }
}

/// `u = 1` conformal factor.
struct UnitField(usize);

impl crate::field::ScalarField for UnitField {
    fn n(&self) -> usize {
        self.0
    }
    fn jet(&self, _p: &HPoint) -> Jet {
        Jet::constant_re(2 * self.0 + 1, 1.0)
    }
}

// ---------------------------------------------------------------------------
// entry point
// ---------------------------------------------------------------------------

/// Parse arguments, run the selected command, and map the outcome to the
/// documented exit codes.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Ok(v) = std::env::var("CRGREEN_THREADS") {
        if v.parse::<usize>().map(|t| t >= 1) != Ok(true) {
            eprintln!("configuration error: CRGREEN_THREADS must be a positive integer");
            return ExitCode::from(2);
        }
    }
    match run(&cli.command, &config) {
        Ok(checks) => {
            let mut all_pass = true;
            for c in &checks {
                let status = if c.pass { "PASS" } else { "FAIL" };
                println!("{status} {}: {:.6e} {} {:.6e}", c.name, c.value, c.cmp, c.bound);
                all_pass &= c.pass;
            }
            if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut config: RunConfig = match &cli.config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(d) = cli.deterministic {
        config.deterministic = d;
    }
    if !config.deterministic {
        config.seed = rand::random();
    }
    // command-level overrides
    match &cli.command {
        Command::Verify { n, fields } => {
            if n.is_some() {
                config.verify.n = *n;
            }
            if let Some(f) = fields {
                config.verify.fields = *f;
            }
        }
        Command::Green { h, near_h, skip_near } => {
            if let Some(h) = h {
                config.green.h = *h;
            }
            if let Some(nh) = near_h {
                config.green.near_h = *nh;
            }
            if *skip_near {
                config.green.skip_near = true;
            }
        }
        Command::Cover { model, k, lambda, n, points } => {
            if let Some(m) = model {
                config.cover.model = m.clone();
            }
            if let Some(k) = k {
                config.cover.k = *k;
            }
            if let Some(l) = lambda {
                config.cover.lambda = *l;
            }
            if let Some(n) = n {
                config.cover.n = *n;
            }
            if let Some(p) = points {
                config.cover.points = *p;
            }
        }
        Command::Sexp { lambda, annuli, resolution } => {
            if let Some(l) = lambda {
                config.sexp.lambda = *l;
            }
            if let Some(a) = annuli {
                config.sexp.annuli = *a;
            }
            if let Some(r) = resolution {
                config.sexp.resolution = *r;
            }
        }
        Command::Mass { model, k, n } => {
            if let Some(m) = model {
                config.mass.model = m.clone();
            }
            if let Some(k) = k {
                config.mass.k = *k;
            }
            if let Some(n) = n {
                config.mass.n = *n;
            }
        }
        Command::Conventions => {}
    }
    validate(&config)?;
    Ok(config)
}

fn validate(config: &RunConfig) -> anyhow::Result<()> {
    anyhow::ensure!(config.green.h > 0.0 && config.green.near_h > 0.0, "grid steps must be > 0");
    anyhow::ensure!(config.green.near_tol > 0.0, "tolerances must be > 0");
    anyhow::ensure!(
        config.green.near_window.0 > 0.0 && config.green.near_window.1 > config.green.near_window.0,
        "near-pole window must be an increasing positive pair"
    );
    anyhow::ensure!(config.cover.lambda > 1.0, "lambda must exceed 1");
    anyhow::ensure!(config.cover.k >= 2, "lens order k must be >= 2");
    anyhow::ensure!(
        matches!(config.cover.model.as_str(), "sphere" | "lens" | "hopf"),
        "cover model must be sphere | lens | hopf"
    );
    anyhow::ensure!(
        matches!(config.mass.model.as_str(), "sphere" | "lens"),
        "mass model must be sphere | lens"
    );
    anyhow::ensure!(config.sexp.annuli >= 2 && config.sexp.resolution >= 4, "sexp grid too small");
    Ok(())
}

/// Run a command against a resolved configuration; returns the check list
/// (the caller maps it to the exit code).
pub fn run(command: &Command, config: &RunConfig) -> anyhow::Result<Vec<Check>> {
    match command {
        Command::Verify { .. } => cmd_verify(config),
        Command::Green { .. } => cmd_green(config),
        Command::Cover { .. } => cmd_cover(config),
        Command::Sexp { .. } => cmd_sexp(config),
        Command::Mass { .. } => cmd_mass(config),
        Command::Conventions => cmd_conventions(config),
    }
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

fn cmd_verify(config: &RunConfig) -> anyhow::Result<Vec<Check>> {
    let mut checks = Vec::new();
    let dims: Vec<usize> = match config.verify.n {
        Some(n) => vec![n],
        None => vec![1, 2],
    };
    let sweeps = config.verify.fields;

    // pointwise Bochner residual on random polynomial fields
    for &n in &dims {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (0x10 + n as u64));
        let mut worst = 0.0f64;
        for _ in 0..sweeps {
            let f = PolyField::random(n, 4, &mut rng);
            for _ in 0..3 {
                let p = random_chart_point(n, 0.1, 1.5, &mut rng);
                worst = worst.max(bochner_residual(&f.jet(&p), &p));
            }
        }
        checks.push(le(&format!("bochner_residual_n{n}"), worst, 1e-9));
    }

    // kernel harmonicity away from the pole
    for n in 1..=3usize {
        if config.verify.n.is_some() && !dims.contains(&n) && n != 3 {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (0x20 + n as u64));
        let kernel = GaugePowerField::kernel(HPoint::origin(n), 1.0);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let p = random_chart_point(n, 0.5, 4.0, &mut rng);
            worst = worst.max(cr_laplacian_flat(&kernel.jet(&p), &p).value_re().abs());
        }
        checks.push(le(&format!("kernel_harmonicity_n{n}"), worst, 1e-9));
    }

    // calibration stability across bump choices
    let mut calibration = Vec::new();
    for &n in &dims {
        let (c1, est1) = calibrate_c(n, 1.0);
        let (c2, est2) = calibrate_c(n, 1.7);
        checks.push(le(&format!("calibration_bump_stability_n{n}"), (c1 - c2).abs() / c1, 1e-6));
        calibration.push(serde_json::json!({
            "n": n, "c": c1, "sweep_estimate": est1, "alt_bump_c": c2, "alt_estimate": est2,
        }));
    }

    // conformal transformation law via jets: flat route against the
    // intrinsically rescaled operator
    for &n in &dims {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (0x30 + n as u64));
        let mut worst = 0.0f64;
        for _ in 0..sweeps {
            let w = PolyField::random(n, 3, &mut rng);
            let f = PolyField::random(n, 4, &mut rng);
            let p = random_chart_point(n, 0.1, 1.5, &mut rng);
            let jw = w.jet(&p);
            let ju = jw.mul(&jw).add(&Jet::constant_re(jw.dim, 1.0));
            let jf = f.jet(&p);
            let lhs = cr_laplacian_flat(&ju.mul(&jf), &p).value_re();
            let rhs =
                ju.value_re().powf(1.0 + 2.0 / n as f64) * cr_laplacian_rescaled(&ju, &jf, &p);
            worst = worst.max((lhs - rhs).abs() / (1.0 + lhs.abs().max(rhs.abs())));
        }
        checks.push(le(&format!("transformation_law_n{n}"), worst, 1e-9));
    }

    // Webster flatness of the pulled-back sphere structure (chart factor of
    // the south-pole chart is smooth at every finite point)
    {
        let model = CoverModel::SphereTrivial { pole: SpherePoint::south(1) };
        let field = model.flat_factor_field();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x40);
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let p = random_chart_point(1, 0.3, 2.5, &mut rng);
            worst = worst.max(webster_r_conformal(&field.jet(&p), &p).abs());
        }
        checks.push(le("webster_flatness_pullback", worst, 1e-9));
    }

    // integrated identities on the compact quotient (n = 2)
    let mut nil_data = serde_json::Value::Null;
    if dims.contains(&2) {
        let nm = Nilmanifold::standard(2);
        let ws = NilWorkspace::build(nm, standard_basis(2));
        let grams = IdentityGrams::from_workspace(&ws);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x50);
        let mut worst_ibf = 0.0f64;
        let mut min_paneitz = f64::INFINITY;
        let mut min_reeb = f64::INFINITY;
        for _ in 0..sweeps.max(200) {
            let c: Vec<f64> = (0..ws.basis.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (res, scale) = grams.ibf_residual(&c);
            worst_ibf = worst_ibf.max(res.abs() / scale);
            min_paneitz = min_paneitz.min(grams.paneitz_energy(&c));
            min_reeb = min_reeb.min(grams.reeb_margin(&c));
        }
        checks.push(le("ibf_residual_relative_n2", worst_ibf, 1e-8));
        checks.push(ge("paneitz_energy_min_n2", min_paneitz, -1e-9));
        checks.push(ge("reeb_energy_margin_n2", min_reeb, -1e-9));
        nil_data = serde_json::json!({
            "worst_ibf_relative": worst_ibf,
            "min_paneitz_energy": min_paneitz,
            "min_reeb_margin": min_reeb,
        });
    }

    let data = serde_json::json!({ "dims": dims, "calibration": calibration, "nilmanifold": nil_data });
    write_json(
        &config.out_dir.join("verify_report.json"),
        &Report { command: "verify", seed: config.seed, deterministic: config.deterministic, config, checks: &checks, data },
    )?;
    Ok(checks)
}

// ---------------------------------------------------------------------------
// green
// ---------------------------------------------------------------------------

fn cmd_green(config: &RunConfig) -> anyhow::Result<Vec<Check>> {
    let p = &config.green;
    let mut checks = Vec::new();
    let unit = UnitField(1);

    // calibration
    let (c1, _) = calibrate_c(1, 1.0);
    let (c1b, _) = calibrate_c(1, 1.7);
    checks.push(le("calibration_bump_stability", (c1 - c1b).abs() / c1, 1e-6));

    // local consistency order of the scheme
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x60);
    let f = PolyField::random(1, 4, &mut rng);
    let probe = HPoint { z: vec![C64::new(0.3, -0.2)], t: 0.15 };
    let (order, errs) = consistency_order(1, &unit, true, &f, &[0.2, 0.1, 0.05, 0.025], &probe);
    let order_ok = order >= 1.8 || errs.iter().all(|e| *e < 1e-8);
    checks.push(ge("consistency_order", if order_ok { order.max(1.8) } else { order }, 1.8));

    // structural grid: boundary trace, positivity, symmetry
    let grid = Grid::centered_box(1, p.h, p.half_z, p.half_t);
    let sys = assemble(&grid, &unit, false);
    let pole = vec![0i64, 0, 0];
    let g = dirichlet_green(&sys, &pole)?;
    let mut boundary_max = 0.0f64;
    let mut interior_min = f64::INFINITY;
    for (lin, v) in g.values.iter().enumerate() {
        match grid.classify(&grid.unlinear(lin)) {
            NodeKind::Boundary => boundary_max = boundary_max.max(v.abs()),
            NodeKind::Interior => interior_min = interior_min.min(*v),
            _ => {}
        }
    }
    checks.push(le("green_boundary_trace", boundary_max, 0.0));
    checks.push(ge("green_interior_min", interior_min, -1e-12));

    // symmetry: swap pole and probe inside one lattice component
    let q = vec![2i64, 1, 0];
    let g_q = dirichlet_green(&sys, &q)?;
    let gpq = g.values[grid.linear(&q).unwrap()];
    let gqp = g_q.values[grid.linear(&pole).unwrap()];
    checks.push(le("green_symmetry", (gpq - gqp).abs(), 1e-9 * gpq.abs().max(1.0)));

    // exhaustion against the calibrated kernel barrier
    let grids: Vec<Grid> = p
        .exhaustion_half_z
        .iter()
        .map(|&half| Grid::centered_box(1, p.h, half, half * half))
        .collect();
    let barrier = GaugePowerField::kernel(HPoint::origin(1), c1);
    let (final_g, steps) = exhaustion_green(&grids, &unit, &pole, Some(&barrier), 6.0 * p.h)?;
    let barrier_ok = steps.iter().all(|s| s.barrier_ok);
    let monotone_ok = steps.iter().skip(1).all(|s| s.sup_increment >= -1e-12);
    checks.push(le("exhaustion_barrier_violations", if barrier_ok { 0.0 } else { 1.0 }, 0.0));
    checks.push(le("exhaustion_monotone_violations", if monotone_ok { 0.0 } else { 1.0 }, 0.0));

    // annulus decay of the final iterate
    let final_sys = assemble(&grids[grids.len() - 1], &unit, false);
    let annuli: Vec<(f64, f64)> = vec![(0.1, 0.15), (0.15, 0.2), (0.2, 0.3), (0.3, 0.4)];
    let decay = moser_decay(&final_g, &final_sys, &annuli);
    let sup_decreasing = decay.windows(2).all(|w| w[0].sup >= w[1].sup);
    checks.push(le("annulus_sup_monotone_violations", if sup_decreasing { 0.0 } else { 1.0 }, 0.0));

    // near-pole profile against c(1) rho^{-2}
    let mut near = serde_json::Value::Null;
    if !p.skip_near {
        let fine = Grid::centered_box(1, p.near_h, p.half_z, p.half_t);
        let fine_sys = assemble(&fine, &unit, false);
        let worst =
            near_pole_profile(&fine_sys, &pole, c1, p.near_window.0, p.near_window.1)?;
        checks.push(le("near_pole_kernel_ratio", worst, p.near_tol));
        near = serde_json::json!({ "h": p.near_h, "window": p.near_window, "worst": worst });
    }

    write_csv(&config.out_dir.join("green_annuli.csv"), &decay)?;
    write_csv(&config.out_dir.join("green_exhaustion.csv"), &steps)?;
    let data = serde_json::json!({
        "c1": c1,
        "consistency": { "order": order, "errors": errs },
        "green": { "pole_strength": g.pole_strength, "value_at_probe": gpq, "swapped": gqp },
        "near_pole": near,
    });
    write_json(
        &config.out_dir.join("green_report.json"),
        &Report { command: "green", seed: config.seed, deterministic: config.deterministic, config, checks: &checks, data },
    )?;
    Ok(checks)
}

// ---------------------------------------------------------------------------
// cover
// ---------------------------------------------------------------------------

fn cover_model(params: &CoverParams, seed: u64) -> anyhow::Result<CoverModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x70);
    Ok(match params.model.as_str() {
        "sphere" => CoverModel::SphereTrivial { pole: random_sphere_point(params.n, &mut rng) },
        "lens" => CoverModel::Lens {
            pole: random_sphere_point(params.n, &mut rng),
            action: LensAction::standard(params.k, params.n),
        },
        "hopf" => CoverModel::HeisenbergHopf {
            n: params.n,
            pole: random_chart_point(params.n, 0.5, 1.5, &mut rng),
            lambda: params.lambda,
        },
        other => anyhow::bail!("unknown cover model {other:?}"),
    })
}

fn cmd_cover(config: &RunConfig) -> anyhow::Result<Vec<Check>> {
    let params = &config.cover;
    let model = cover_model(params, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x80);
    let samples: Vec<SpherePoint> =
        (0..50).map(|_| random_sphere_point(params.n, &mut rng)).collect();
    model.validate(&samples).map_err(|e| anyhow::anyhow!("invalid model: {e}"))?;

    let mut checks = Vec::new();
    let mut worst_deck = 0.0f64;
    let mut v_min = f64::INFINITY;
    let mut v_max = f64::NEG_INFINITY;
    let mut ratios = Vec::new();
    for _ in 0..params.points {
        let q = random_chart_point(params.n, 0.4, 3.0, &mut rng);
        worst_deck = worst_deck.max(model.deck_residual(&q)?);
        let (v, regime) = model.v_ratio(&q)?;
        v_min = v_min.min(v);
        v_max = v_max.max(v);
        ratios.push((gauge_norm(&q), v, regime));
    }
    checks.push(le("deck_invariance_residual", worst_deck, 1e-10));
    match model.regime() {
        DeckRegime::TrivialCover => {
            checks.push(le("v_ratio_deviation_from_one", (v_min - 1.0).abs().max((v_max - 1.0).abs()), 1e-10));
        }
        DeckRegime::CompactCover => {
            checks.push(ge("v_ratio_min", v_min, 1.0 - 1e-10));
        }
        DeckRegime::NoncompactCover => {
            checks.push(ge("v_ratio_min", v_min, f64::MIN_POSITIVE));
            checks.push(le("v_ratio_max", v_max, 1.0 + 1e-10));
            // harmonicity of the candidate minimal Green's function in the
            // flat chart, normalized by its own strength
            let mut worst_harm = 0.0f64;
            for _ in 0..30 {
                let q = random_chart_point(params.n, 0.4, 3.0, &mut rng);
                worst_harm = worst_harm.max(model.v_harmonicity_residual(&q)?);
            }
            checks.push(le("v_numerator_harmonicity", worst_harm, 1e-8));
        }
    }

    #[derive(Serialize)]
    struct VRow {
        rho: f64,
        v: f64,
    }
    let rows: Vec<VRow> = ratios.iter().map(|(rho, v, _)| VRow { rho: *rho, v: *v }).collect();
    write_csv(&config.out_dir.join("cover_v_ratio.csv"), &rows)?;
    let data = serde_json::json!({
        "model": format!("{model:?}"),
        "regime": format!("{:?}", model.regime()),
        "v_min": v_min,
        "v_max": v_max,
        "worst_deck_residual": worst_deck,
    });
    write_json(
        &config.out_dir.join("cover_report.json"),
        &Report { command: "cover", seed: config.seed, deterministic: config.deterministic, config, checks: &checks, data },
    )?;
    Ok(checks)
}

// ---------------------------------------------------------------------------
// sexp
// ---------------------------------------------------------------------------

fn cmd_sexp(config: &RunConfig) -> anyhow::Result<Vec<Check>> {
    let params = &config.sexp;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x90);
    let model = CoverModel::HeisenbergHopf {
        n: 1,
        pole: random_chart_point(1, 0.5, 1.5, &mut rng),
        lambda: params.lambda,
    };
    let report = s_exponent(&model, &params.s_grid, params.annuli, params.resolution)?;
    let checks = vec![le("s_exponent_estimate", report.estimate, 1.05)];

    #[derive(Serialize)]
    struct ProbeRow {
        s: f64,
        convergent: bool,
        max_outer_ratio: f64,
        max_inner_ratio: f64,
    }
    let rows: Vec<ProbeRow> = report
        .probes
        .iter()
        .map(|p| ProbeRow {
            s: p.s,
            convergent: p.convergent,
            max_outer_ratio: p.outer_ratios.iter().cloned().fold(0.0, f64::max),
            max_inner_ratio: p.inner_ratios.iter().cloned().fold(0.0, f64::max),
        })
        .collect();
    write_csv(&config.out_dir.join("sexp_probes.csv"), &rows)?;
    write_json(
        &config.out_dir.join("sexp_report.json"),
        &Report { command: "sexp", seed: config.seed, deterministic: config.deterministic, config, checks: &checks, data: &report },
    )?;
    Ok(checks)
}

// ---------------------------------------------------------------------------
// mass
// ---------------------------------------------------------------------------

fn cmd_mass(config: &RunConfig) -> anyhow::Result<Vec<Check>> {
    let params = &config.mass;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xa0);
    let pole = random_sphere_point(params.n, &mut rng);
    let model = match params.model.as_str() {
        "sphere" => CoverModel::SphereTrivial { pole },
        "lens" => CoverModel::Lens { pole, action: LensAction::standard(params.k, params.n) },
        other => anyhow::bail!("unknown mass model {other:?}"),
    };
    let fit = params.fit.resolve(config.seed);
    let report = mass_report(&model, &fit)?;

    let mut checks = Vec::new();
    if matches!(model, CoverModel::SphereTrivial { .. }) {
        checks.push(le("mass_zero_on_trivial_model", report.a_b.abs(), 1e-10));
        checks.push(le(
            "mass_verdict_zero",
            if report.verdict == MassVerdict::Zero { 0.0 } else { 1.0 },
            0.0,
        ));
    } else {
        let rel = (report.a_b - report.closed_form).abs() / report.closed_form;
        checks.push(le("mass_fit_vs_closed_form_rel", rel, 1e-6));
        let worst_lower = report.lower_coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        checks.push(le("mass_lower_coefficients", worst_lower, 1e-6 * report.a_b));
        if let Some(slope) = report.remainder_slope {
            checks.push(ge("mass_remainder_exponent", slope, 2.0 * params.n as f64 + 0.8));
        }
        checks.push(ge("mass_dominates_boundary_bound", report.a_b + 1e-9, report.boundary_bound));
        checks.push(le(
            "mass_verdict_positive",
            if matches!(report.verdict, MassVerdict::Positive { .. }) { 0.0 } else { 1.0 },
            0.0,
        ));
    }

    write_csv(&config.out_dir.join("mass_residuals.csv"), &report.residuals)?;
    write_json(
        &config.out_dir.join("mass_report.json"),
        &Report { command: "mass", seed: config.seed, deterministic: config.deterministic, config, checks: &checks, data: &report },
    )?;
    Ok(checks)
}

// ---------------------------------------------------------------------------
// conventions
// ---------------------------------------------------------------------------

fn cmd_conventions(config: &RunConfig) -> anyhow::Result<Vec<Check>> {
    // spot residuals certifying the frozen signs on live code paths
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xb0);
    let f = PolyField::random(1, 4, &mut rng);
    let p = random_chart_point(1, 0.3, 1.2, &mut rng);
    let j = f.jet(&p);
    let bracket = frame_y(&frame_x(&j, &p, 0), &p, 0).value_re()
        - frame_x(&frame_y(&j, &p, 0), &p, 0).value_re()
        + 4.0 * reeb(&j).value_re();
    let kernel = GaugePowerField::kernel(HPoint::origin(1), 1.0);
    let q = random_chart_point(1, 0.8, 2.0, &mut rng);
    let harmonicity = cr_laplacian_flat(&kernel.jet(&q), &q).value_re().abs();
    let checks = vec![
        le("frame_bracket_residual", bracket.abs(), 1e-10),
        le("kernel_harmonicity_spot", harmonicity, 1e-9),
    ];

    let doc = serde_json::json!({
        "contact_form": "Theta = dt - 2 sum_a (x_a dy_a - y_a dx_a)",
        "group_law": "(z, t) (z', t') = (z + z', t + t' + 2 Im <z, z'>), <a, b> = sum_a a_a conj(b_a)",
        "horizontal_frames": {
            "X_a": "d/dx_a - 2 y_a d/dt",
            "Y_a": "d/dy_a + 2 x_a d/dt",
            "Z_a": "(X_a + i Y_a) / 2",
            "reeb": "T = d/dt",
            "bracket": "[X_a, Y_a] = -4 T, all other horizontal brackets vanish"
        },
        "sublaplacian": "lap_b = -(1/4) sum_a (X_a^2 + Y_a^2)  (positive operator)",
        "invariant_laplacian": "D_Theta = b_n lap_b on the flat model, b_n = 2 + 2/n",
        "b_n": { "n1": 4.0, "n2": 3.0, "n3": 8.0 / 3.0 },
        "volume": "dV = Theta ^ (dTheta)^n = 4^n n! dx dy dt",
        "volume_density": { "n1": 4.0, "n2": 32.0, "n3": 384.0 },
        "gauge": "rho(z, t) = (|z|^4 + t^2)^(1/4)",
        "siegel_coordinate": "w = t + i |z|^2;  w(p^{-1} q) = w_q - conj(w_p) - 2 i sum_a z_{p,a} conj(z_{q,a})",
        "fundamental_solution": "D_Theta (c(n) rho^{-2n}) = delta_0 with c(1) = 1/(32 pi)",
        "c1_analytic": 1.0 / (32.0 * std::f64::consts::PI),
        "cayley_chart": "C_y^* Theta = H_y^{2/n} theta_S with H_y(s) = |1 - <s, y>|^{-n}; the pole y maps to infinity, its antipode to the origin",
        "conformal_change": "theta = u^{2/n} Theta gives D_theta f = u^{-1-2/n} D_Theta(u f) and R_theta = b_n u^{-1-2/n} lap_b u"
    });
    write_json(
        &config.out_dir.join("conventions_report.json"),
        &Report { command: "conventions", seed: config.seed, deterministic: config.deterministic, config, checks: &checks, data: doc },
    )?;
    Ok(checks)
}
