//! CR mass of compact quotient models.
//!
//! For a compact quotient of the sphere with base point `b`, the chart at
//! infinity centred at a lift `p` of `b` expresses the quotient Green's
//! function through the flat contact form as `h^{2/n} Theta`.  The function
//! `h` tends to `1` at infinity and admits the expansion
//!
//! ```text
//! h(z, t) = 1 + A_b rho(z, t)^{-2n} + O(rho^{-2n-1}),
//! ```
//!
//! with no terms of order `rho^{-1}, ..., rho^{-2n+1}`.  The constant `A_b`
//! is the CR mass.  This module constructs `h` from the deck orbit, fits the
//! expansion by Richardson extrapolation, evaluates the finite orbit sum in
//! closed form as an independent oracle, and checks positivity with an
//! explicit uncertainty so a strict inequality is never manufactured from
//! noise.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::cover::{CoverError, CoverModel};
use crate::heis::{cayley_inv, dilate, gauge_norm, siegel_w, HPoint, SpherePoint};

/// Errors of the mass pipeline.
#[derive(Debug, Error)]
pub enum MassError {
    #[error(
        "mass asymptotics need a compact quotient; a noncompact cover has no chart at infinity with h -> 1"
    )]
    NoncompactModel,
    #[error("extrapolation did not converge: diagonal spread {spread:e} against scale {scale:e}")]
    NonConvergent { spread: f64, scale: f64 },
    #[error("need at least {0} geometrically spaced radii")]
    BadRadiusGrid(usize),
    #[error(transparent)]
    Cover(#[from] CoverError),
}

/// The chart-at-infinity function `h` of a compact quotient model.
///
/// In the Cayley chart with pole at the base lift `p` the pulled-back orbit
/// Green's function factors as `h^{2/n} Theta` with
///
/// ```text
/// h(q) = 1 + sum_{x in orbit, x != p} ( |1 - <s(q), p>| / |1 - <s(q), x>| )^n,
/// ```
///
/// where `s(q)` is the sphere point under the chart with normalisation
/// `|1 - <s(q), p>| = 2 / |i + w(q)|`.  The numerator is evaluated through
/// that closed form, so `h - 1` carries no cancellation even at very large
/// gauge radius.
#[derive(Debug, Clone)]
pub struct ChartAtInfinity {
    n: usize,
    pole: SpherePoint,
    others: Vec<SpherePoint>,
}

impl ChartAtInfinity {
    pub fn new(model: &CoverModel) -> Result<Self, MassError> {
        match model {
            CoverModel::SphereTrivial { .. } | CoverModel::Lens { .. } => {
                let orbit = model.sphere_orbit();
                Ok(ChartAtInfinity {
                    n: model.n(),
                    pole: orbit[0].clone(),
                    others: orbit[1..].to_vec(),
                })
            }
            CoverModel::HeisenbergHopf { .. } => Err(MassError::NoncompactModel),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `h(q) - 1`, computed directly (no subtraction of near-equal terms).
    pub fn correction(&self, q: &HPoint) -> f64 {
        if self.others.is_empty() {
            return 0.0;
        }
        let w = siegel_w(q);
        let numer = 2.0 / (C64::new(0.0, 1.0) + w).norm();
        let s = cayley_inv(&self.pole, q);
        let nn = self.n as f64;
        self.others
            .iter()
            .map(|x| {
                let d = (C64::new(1.0, 0.0) - s.pairing(x)).norm();
                (numer / d).powf(nn)
            })
            .sum()
    }

    /// `h(q)`.
    pub fn value(&self, q: &HPoint) -> f64 {
        1.0 + self.correction(q)
    }
}

/// Build the chart-at-infinity function of a model.
pub fn h_field(model: &CoverModel) -> Result<ChartAtInfinity, MassError> {
    ChartAtInfinity::new(model)
}

/// Closed-form CR mass of a compact quotient: the finite orbit sum of the
/// regular-part limits,
///
/// ```text
/// A_b = 2^n sum_{x in orbit, x != p} |1 - <p, x>|^{-n}.
/// ```
///
/// Each non-pole orbit term is smooth at infinity in the chart and its
/// leading coefficient is the displayed limit; the sum is exact up to
/// floating point and serves as the oracle for [`mass_fit`].
pub fn mass_closed_form(model: &CoverModel) -> Result<f64, MassError> {
    match model {
        CoverModel::SphereTrivial { .. } => Ok(0.0),
        CoverModel::Lens { .. } => {
            let orbit = model.sphere_orbit();
            let p = &orbit[0];
            let nn = model.n() as f64;
            Ok(orbit[1..]
                .iter()
                .map(|x| {
                    let d = (C64::new(1.0, 0.0) - p.pairing(x)).norm();
                    (2.0 / d).powf(nn)
                })
                .sum())
        }
        CoverModel::HeisenbergHopf { .. } => Err(MassError::NoncompactModel),
    }
}

/// Positivity verdict carried by a [`MassReport`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum MassVerdict {
    /// `A_b` clears both the uncertainty and the absolute floor.
    Positive { margin: f64 },
    /// Trivial model branch: `|A_b|` below the zero tolerance.
    Zero,
    /// The uncertainty swallows the value; never silently positive.
    Inconclusive { reason: String },
}

/// Absolute floor below which a fitted mass is not called positive.
pub const MASS_ZERO_TOL: f64 = 1e-10;

/// Positivity check with an uncertainty gate.  `trivial` selects the
/// single-orbit branch where the mass must vanish.
pub fn positivity_check(a_b: f64, uncertainty: f64, trivial: bool) -> MassVerdict {
    if trivial {
        if a_b.abs() <= MASS_ZERO_TOL {
            MassVerdict::Zero
        } else {
            MassVerdict::Inconclusive {
                reason: format!("single-orbit model with A_b = {a_b:e} != 0"),
            }
        }
    } else if a_b > uncertainty.max(MASS_ZERO_TOL) {
        MassVerdict::Positive { margin: a_b - uncertainty.max(MASS_ZERO_TOL) }
    } else {
        MassVerdict::Inconclusive {
            reason: format!("A_b = {a_b:e} does not clear uncertainty {uncertainty:e}"),
        }
    }
}

/// One fitted radius of a mass report.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualRow {
    pub rho: f64,
    /// Direction-averaged `h - 1`.
    pub h_minus_one: f64,
    /// `h - 1 - A_b rho^{-2n}` with the extrapolated `A_b`.
    pub remainder: f64,
}

/// Result of fitting the expansion of `h` at infinity.
#[derive(Debug, Clone, Serialize)]
pub struct MassFit {
    pub n: usize,
    /// Richardson-extrapolated mass.
    pub a_b: f64,
    /// max(extrapolation spread, disagreement with the ansatz fit).
    pub uncertainty: f64,
    /// `A_b` re-fitted from the full power-law ansatz (cross-check).
    pub ansatz_a_b: f64,
    /// Fitted coefficients of `rho^{-1}, ..., rho^{-2n+1}`; the expansion
    /// has none, so these must vanish within tolerance.
    pub lower_coeffs: Vec<f64>,
    /// Log-log slope of the remainder over the outer radius decade
    /// (`None` when the remainder is at machine zero, e.g. an exact model).
    pub remainder_slope: Option<f64>,
    pub residuals: Vec<ResidualRow>,
}

/// Sampling parameters of [`mass_fit`].
#[derive(Debug, Clone, Serialize)]
pub struct MassFitConfig {
    /// Smallest gauge radius.
    pub rho0: f64,
    /// Geometric step between radii.
    pub ratio: f64,
    /// Number of radii.
    pub count: usize,
    /// Number of gauge-sphere directions averaged per radius.
    pub directions: usize,
    /// Seed of the deterministic direction set.
    pub seed: u64,
}

impl Default for MassFitConfig {
    fn default() -> Self {
        MassFitConfig { rho0: 10.0, ratio: std::f64::consts::SQRT_2, count: 14, directions: 32, seed: 7 }
    }
}

/// Deterministic set of gauge-unit directions.
pub fn direction_set(n: usize, count: usize, seed: u64) -> Vec<HPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dirs = Vec::with_capacity(count);
    while dirs.len() < count {
        let z: Vec<C64> = (0..n)
            .map(|_| C64::new(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0))
            .collect();
        let t = rng.gen::<f64>() * 2.0 - 1.0;
        let p = HPoint::new(z, t);
        let r = gauge_norm(&p);
        if r > 0.3 {
            dirs.push(dilate(&p, 1.0 / r));
        }
    }
    dirs
}

/// Fit the expansion `h - 1 = A_b rho^{-2n} + O(rho^{-2n-1})`.
///
/// `h_minus_one` is evaluated on gauge spheres of geometrically spaced radii
/// and averaged over a deterministic direction set; `A_b` is the Richardson
/// (Neville) extrapolation of `(h - 1) rho^{2n}` in `1/rho`.  A separate
/// least-squares fit of the full ansatz `sum_k d_k rho^{-k}` provides the
/// lower-order coefficients `d_1, ..., d_{2n-1}` (which must vanish) and an
/// independent estimate of `A_b`; the reported uncertainty dominates both
/// the extrapolation spread and the disagreement of the two fits.
pub fn mass_fit(
    h_minus_one: &dyn Fn(&HPoint) -> f64,
    n: usize,
    config: &MassFitConfig,
) -> Result<MassFit, MassError> {
    if config.count < 6 || config.ratio <= 1.0 || config.rho0 <= 0.0 {
        return Err(MassError::BadRadiusGrid(6));
    }
    let radii: Vec<f64> = (0..config.count).map(|i| config.rho0 * config.ratio.powi(i as i32)).collect();
    let dirs = direction_set(n, config.directions, config.seed);

    // Direction-averaged h - 1 per radius (deterministic reduction order).
    let g: Vec<f64> = radii
        .iter()
        .map(|&rho| {
            dirs.iter().map(|d| h_minus_one(&dilate(d, rho))).sum::<f64>() / dirs.len() as f64
        })
        .collect();

    // Richardson extrapolation of (h - 1) rho^{2n} at 1/rho -> 0.
    let xs: Vec<f64> = radii.iter().map(|&rho| 1.0 / rho).collect();
    let fs: Vec<f64> = g.iter().zip(&radii).map(|(&gi, &rho)| gi * rho.powi(2 * n as i32)).collect();
    let (a_b, spread) = neville_at_zero(&xs, &fs);
    let scale = fs.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    if !a_b.is_finite() || spread > 0.05 * scale + 1e-12 {
        return Err(MassError::NonConvergent { spread, scale });
    }

    // Full ansatz h - 1 = sum_{k=1}^{2n+3} d_k rho^{-k}, scaled basis
    // u^k with u = rho_min / rho for conditioning.
    let kmax = 2 * n + 3;
    let rows = radii.len();
    let mut a = vec![vec![0.0; kmax]; rows];
    for (i, &rho) in radii.iter().enumerate() {
        let u = radii[0] / rho;
        let mut p = 1.0;
        for k in 0..kmax {
            p *= u;
            a[i][k] = p;
        }
    }
    let e = least_squares(&a, &g);
    // column k carries the basis power u^{k+1} = (rho_min / rho)^{k+1}, so
    // the coefficient of rho^{-(k+1)} is e_k rho_min^{k+1}
    let d: Vec<f64> = e
        .iter()
        .enumerate()
        .map(|(k, &ek)| ek * radii[0].powi(k as i32 + 1))
        .collect();
    let ansatz_a_b = d[2 * n - 1];
    let lower_coeffs = d[..2 * n - 1].to_vec();

    let residuals: Vec<ResidualRow> = radii
        .iter()
        .zip(&g)
        .map(|(&rho, &gi)| ResidualRow {
            rho,
            h_minus_one: gi,
            remainder: gi - a_b * rho.powi(-2 * (n as i32)),
        })
        .collect();
    let remainder_slope = remainder_slope(&residuals, a_b, n);

    Ok(MassFit {
        n,
        a_b,
        uncertainty: spread.max((a_b - ansatz_a_b).abs()),
        ansatz_a_b,
        lower_coeffs,
        remainder_slope,
        residuals,
    })
}

/// Log-log slope (decay exponent) of the remainder over the outer radius
/// decade; `None` when the remainder is at machine zero relative to the
/// fitted term.
fn remainder_slope(rows: &[ResidualRow], a_b: f64, n: usize) -> Option<f64> {
    let rho_max = rows.last()?.rho;
    let floor = 1e-12 * a_b.abs().max(1e-300);
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.rho >= rho_max / 10.0)
        .filter(|r| r.remainder.abs() > floor * r.rho.powi(-2 * n as i32))
        .map(|r| (r.rho.ln(), r.remainder.abs().ln()))
        .collect();
    if pts.len() < 4 {
        return None;
    }
    // ordinary least squares slope of ln|rem| against ln rho
    let m = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    Some(-(m * sxy - sx * sy) / (m * sxx - sx * sx))
}

/// Full mass report of a model.
#[derive(Debug, Clone, Serialize)]
pub struct MassReport {
    pub model: String,
    pub n: usize,
    pub a_b: f64,
    pub uncertainty: f64,
    pub lower_coeffs: Vec<f64>,
    pub remainder_slope: Option<f64>,
    /// Independent orbit-sum oracle (compact models).
    pub closed_form: f64,
    /// Maximum-principle lower bound `m L^{2n}` with
    /// `m = min_{gauge sphere of radius L} (h - 1)`.
    pub boundary_bound: f64,
    /// Radius of the boundary sphere used for the bound.
    pub boundary_radius: f64,
    /// Closed-form value at an alternate base point (chart/base-point
    /// dependence is measured and reported, not asserted away).
    pub alternate_base_a_b: f64,
    pub residuals: Vec<ResidualRow>,
    pub verdict: MassVerdict,
}

/// Run the whole mass pipeline on a compact model: build `h`, fit the
/// expansion, evaluate the closed-form oracle, measure the boundary lower
/// bound and the base-point variation, and issue a positivity verdict whose
/// uncertainty also dominates the oracle disagreement.
pub fn mass_report(model: &CoverModel, config: &MassFitConfig) -> Result<MassReport, MassError> {
    let chart = ChartAtInfinity::new(model)?;
    let n = model.n();
    let fit = mass_fit(&|q| chart.correction(q), n, config)?;
    let closed = mass_closed_form(model)?;
    let uncertainty = fit.uncertainty.max((fit.a_b - closed).abs());

    // Lower bound of the maximum-principle argument at a moderate radius.
    let boundary_radius = 4.0 * config.rho0;
    let m = direction_set(n, 4 * config.directions, config.seed ^ 0x9e37_79b9)
        .iter()
        .map(|d| chart.correction(&dilate(d, boundary_radius)))
        .fold(f64::INFINITY, f64::min);
    let boundary_bound = m * boundary_radius.powi(2 * n as i32);

    // Base-point dependence, report-only: rerun the closed form at a
    // second, generic pole.
    let alternate = alternate_base_model(model);
    let alternate_base_a_b = mass_closed_form(&alternate)?;

    let trivial = matches!(model, CoverModel::SphereTrivial { .. });
    let verdict = positivity_check(fit.a_b, uncertainty, trivial);
    Ok(MassReport {
        model: model_label(model),
        n,
        a_b: fit.a_b,
        uncertainty,
        lower_coeffs: fit.lower_coeffs,
        remainder_slope: fit.remainder_slope,
        closed_form: closed,
        boundary_bound,
        boundary_radius,
        alternate_base_a_b,
        residuals: fit.residuals,
        verdict,
    })
}

fn model_label(model: &CoverModel) -> String {
    match model {
        CoverModel::SphereTrivial { pole } => format!("sphere (n = {})", pole.n()),
        CoverModel::Lens { pole, action } => {
            format!("lens k = {} weights {:?} (n = {})", action.k, action.weights, pole.n())
        }
        CoverModel::HeisenbergHopf { n, lambda, .. } => {
            format!("hopf lambda = {lambda} (n = {n})")
        }
    }
}

/// The same model with a different generic base pole.
fn alternate_base_model(model: &CoverModel) -> CoverModel {
    let shift = |pole: &SpherePoint| {
        let mut zeta = pole.zeta.clone();
        for (j, z) in zeta.iter_mut().enumerate() {
            *z += C64::new(0.17 + 0.05 * j as f64, -0.23 + 0.04 * j as f64);
        }
        SpherePoint::new(zeta).normalized()
    };
    match model {
        CoverModel::SphereTrivial { pole } => CoverModel::SphereTrivial { pole: shift(pole) },
        CoverModel::Lens { pole, action } => {
            CoverModel::Lens { pole: shift(pole), action: action.clone() }
        }
        other => other.clone(),
    }
}

/// Neville polynomial extrapolation of `(x_i, f_i)` to `x = 0`; returns the
/// value and the absolute difference of the two deepest diagonal entries
/// (the extrapolation spread).
fn neville_at_zero(xs: &[f64], fs: &[f64]) -> (f64, f64) {
    let m = xs.len();
    let mut t = fs.to_vec();
    let mut prev = t[0];
    for order in 1..m {
        for i in 0..m - order {
            t[i] = (xs[i + order] * t[i] - xs[i] * t[i + 1]) / (xs[i + order] - xs[i]);
        }
        if order == m - 2 {
            prev = t[0];
        }
    }
    (t[0], (t[0] - prev).abs())
}

/// Dense least squares by Householder QR (small systems).
fn least_squares(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let m = a.len();
    let k = a[0].len();
    let mut r: Vec<Vec<f64>> = a.to_vec();
    let mut y = b.to_vec();
    for col in 0..k {
        let norm: f64 = (col..m).map(|i| r[i][col] * r[i][col]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[col][col] >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (col..m).map(|i| r[i][col]).collect();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv < 1e-300 {
            continue;
        }
        for j in col..k {
            let dot: f64 = (col..m).map(|i| v[i - col] * r[i][j]).sum();
            let scale = 2.0 * dot / vv;
            for i in col..m {
                r[i][j] -= scale * v[i - col];
            }
        }
        let dot: f64 = (col..m).map(|i| v[i - col] * y[i]).sum();
        let scale = 2.0 * dot / vv;
        for i in col..m {
            y[i] -= scale * v[i - col];
        }
    }
    // back substitution on the upper-triangular part
    let mut x = vec![0.0; k];
    for j in (0..k).rev() {
        let mut s = y[j];
        for l in j + 1..k {
            s -= r[j][l] * x[l];
        }
        x[j] = if r[j][j].abs() > 1e-300 { s / r[j][j] } else { 0.0 };
    }
    x
}
