//! Quadrature and integrated identities on a compact quotient of the model
//! group by the standard integer lattice (Gaussian-integer `z` components,
//! integer `t` shifts).
//!
//! The fundamental domain is the unit box in chart coordinates; a uniform
//! tensor grid with the left endpoints is the periodic trapezoid rule, which
//! integrates chart-periodic trig polynomials below the Nyquist degree
//! exactly and lattice-periodic theta characters to spectral accuracy.
//!
//! Lattice-periodic fields come in two families:
//! * pure `z`-characters `exp(2 pi i (a . x + b . y))` with integer
//!   frequencies — unaffected by the twisted `t`-identification;
//! * theta characters `Re/Im(exp(2 pi i k t) prod_a G_a(z_a))`, where each
//!   `G_a` is a lattice-summed Gaussian with the covariance
//!   `G(z + m) = exp(-4 pi i k Im(conj(m) z)) G(z)` that exactly compensates
//!   the `t` shift of the group law.
//!
//! Plain `t`-characters alone are *not* lattice-periodic; the theta
//! construction is the correct replacement.

use crate::heis::{group_mul, volume_density, HPoint};
use crate::jet::Jet;
use crate::ops::{frame_z, paneitz, reeb, sublaplacian, JetPoint};
use crate::field::ScalarField;
use num_complex::Complex64 as C64;
use rand::Rng;
use std::f64::consts::PI;

/// Fields with a finite lattice-character expansion (hence exactly
/// lattice-periodic).  The decomposition is what lets the quadrature layer
/// evaluate operator data through per-coordinate jet caches.
pub trait PeriodicField: ScalarField {
    /// The field as a weighted sum of single characters.
    fn characters(&self) -> Vec<(f64, CharacterField)>;
}

/// The compact quotient: lattice resolution data and quadrature rule.
#[derive(Debug, Clone)]
pub struct Nilmanifold {
    pub n: usize,
    /// Grid resolution per axis, ordered `(x_1, y_1, ..., x_n, y_n, t)`.
    pub res: Vec<usize>,
}

impl Nilmanifold {
    pub fn new(n: usize, res_per_axis: usize) -> Nilmanifold {
        Nilmanifold { n, res: vec![res_per_axis; 2 * n + 1] }
    }

    /// Standard defaults: 16 per axis for `n = 1`, 10 per axis for `n = 2`
    /// (8 per axis leaves theta-character aliasing near 3e-8 relative, which
    /// is above the 1e-8 identity tolerance; 10 reaches 1e-12).
    pub fn standard(n: usize) -> Nilmanifold {
        let r = if n == 1 { 16 } else { 10 };
        Nilmanifold::new(n, r)
    }

    /// The `2n + 1` lattice generators: unit Gaussian-integer shifts in each
    /// complex coordinate and the unit `t` shift.
    pub fn generators(&self) -> Vec<HPoint> {
        let n = self.n;
        let mut gens = Vec::with_capacity(2 * n + 1);
        for a in 0..n {
            for unit in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
                let mut z = vec![C64::new(0.0, 0.0); n];
                z[a] = unit;
                gens.push(HPoint { z, t: 0.0 });
            }
        }
        gens.push(HPoint { z: vec![C64::new(0.0, 0.0); n], t: 1.0 });
        gens
    }

    /// Reduce a point to its unique representative in the fundamental box
    /// `[0,1)^{2n+1}`, acting by left lattice translations.
    pub fn reduce(&self, p: &HPoint) -> HPoint {
        // first remove the Gaussian-integer part of z
        let mz: Vec<C64> = p
            .z
            .iter()
            .map(|z| C64::new(z.re.floor(), z.im.floor()))
            .collect();
        let gamma = HPoint { z: mz, t: 0.0 };
        let mut q = group_mul(&gamma.inverse(), p);
        // then the integer part of t
        q.t -= q.t.floor();
        for z in q.z.iter_mut() {
            // clean up exact-boundary round-off
            if z.re >= 1.0 {
                z.re -= 1.0;
            }
            if z.im >= 1.0 {
                z.im -= 1.0;
            }
        }
        q
    }

    pub fn node_count(&self) -> usize {
        self.res.iter().product()
    }

    /// Quadrature weight per node: cell Lebesgue volume times the constant
    /// density of the contact volume form.
    pub fn weight(&self) -> f64 {
        volume_density(self.n) / self.node_count() as f64
    }

    /// Total contact volume of the fundamental domain.
    pub fn volume(&self) -> f64 {
        volume_density(self.n)
    }

    /// Coordinates of grid node `idx` (mixed-radix over the axes, last axis
    /// fastest).
    pub fn node(&self, idx: usize) -> HPoint {
        let d = 2 * self.n + 1;
        let mut rem = idx;
        let mut coords = vec![0.0f64; d];
        for ax in (0..d).rev() {
            let r = self.res[ax];
            coords[ax] = (rem % r) as f64 / r as f64;
            rem /= r;
        }
        HPoint::from_reals(&coords)
    }

    /// Tensor-grid quadrature of a pointwise-evaluable integrand against the
    /// contact volume form; fixed summation order, bitwise deterministic.
    pub fn integrate_with<F: FnMut(&HPoint) -> f64>(&self, mut f: F) -> f64 {
        let mut acc = 0.0;
        for idx in 0..self.node_count() {
            acc += f(&self.node(idx));
        }
        acc * self.weight()
    }

    /// Quadrature of a field's values.
    pub fn integrate(&self, f: &dyn ScalarField) -> f64 {
        self.integrate_with(|p| f.value(p))
    }

    /// Largest residual of `f(gamma q) - f(q)` over random `q` in the box and
    /// all generators (both directions).
    pub fn periodicity_residual<R: Rng>(
        &self,
        f: &dyn ScalarField,
        samples: usize,
        rng: &mut R,
    ) -> f64 {
        let mut worst = 0.0f64;
        let gens = self.generators();
        for _ in 0..samples {
            let d = 2 * self.n + 1;
            let coords: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
            let q = HPoint::from_reals(&coords);
            let v = f.value(&q);
            for g in &gens {
                for dir in [g.clone(), g.inverse()] {
                    let shifted = group_mul(&dir, &q);
                    worst = worst.max((f.value(&shifted) - v).abs());
                }
            }
        }
        worst
    }

    /// Nodal operator data of a single character, evaluated through the
    /// per-coordinate jet cache.
    pub fn nodal_data(&self, field: &CharacterField) -> NodalData {
        let n = self.n;
        let node_count = self.node_count();
        let cache = FactorJetCache::build(self, field);
        let mut val = Vec::with_capacity(node_count);
        let mut f0 = Vec::with_capacity(node_count);
        let mut lap = Vec::with_capacity(node_count);
        let mut pan = Vec::with_capacity(node_count);
        let mut grad = Vec::with_capacity(node_count * n);
        for idx in 0..node_count {
            let p = self.node(idx);
            let j = cache.jet(self, field, idx);
            val.push(j.value_re());
            f0.push(reeb(&j).value_re());
            lap.push(sublaplacian(&j, &p).value_re());
            pan.push(paneitz(&j, &p).value().re);
            for a in 0..n {
                grad.push(frame_z(&j, &p, a).value());
            }
        }
        NodalData { val, f0, lap, pan, grad }
    }

    /// Combined nodal data of a character expansion.
    fn expansion_data(&self, f: &dyn PeriodicField) -> NodalData {
        let parts = f.characters();
        let mut acc: Option<NodalData> = None;
        for (c, field) in &parts {
            let d = self.nodal_data(field);
            match acc.as_mut() {
                None => {
                    let mut d = d;
                    d.scale(*c);
                    acc = Some(d);
                }
                Some(t) => t.axpy(*c, &d),
            }
        }
        acc.expect("empty character expansion")
    }

    /// Integrated Bochner residual
    /// `int f_0^2 - (1/n^2) int (lap_b f)^2 + (1/(2 n^2)) int f P f`
    /// (torsion term absent on this flat quotient).  Returns
    /// `(residual, largest_term)` so callers can form a relative error.
    pub fn ibf_residual(&self, f: &dyn PeriodicField) -> (f64, f64) {
        let n2 = (self.n * self.n) as f64;
        let d = self.expansion_data(f);
        let w = self.weight();
        let i0 = dot(&d.f0, &d.f0) * w;
        let i2 = dot(&d.lap, &d.lap) * w / n2;
        let ip = dot(&d.val, &d.pan) * w / (2.0 * n2);
        (i0 - i2 + ip, i0.abs().max(i2.abs()).max(ip.abs()))
    }

    /// Paneitz energy `int f P f dV`.
    pub fn paneitz_energy(&self, f: &dyn PeriodicField) -> f64 {
        let d = self.expansion_data(f);
        dot(&d.val, &d.pan) * self.weight()
    }

    /// Reeb-energy margin `(1/n^2) int (lap_b f)^2 - int f_0^2`; nonnegative
    /// on the torsion-free quotient for `n >= 2`.
    pub fn reeb_energy_inequality(&self, f: &dyn PeriodicField) -> f64 {
        let n2 = (self.n * self.n) as f64;
        let d = self.expansion_data(f);
        let w = self.weight();
        (dot(&d.lap, &d.lap) / n2 - dot(&d.f0, &d.f0)) * w
    }

    /// Scale-invariant conformal energy quotient
    /// `(int (b_n |grad_b u|^2 + R u^2) dV) / (int u^{b_n} dV)^{2/b_n}`.
    /// Errors if `u` is not strictly positive on the grid.
    pub fn yamabe_quotient(
        &self,
        u: &dyn PeriodicField,
        r_field: &dyn ScalarField,
    ) -> Result<f64, NilError> {
        let bn = crate::ops::b_n(self.n);
        let d = self.expansion_data(u);
        let mut num = 0.0;
        let mut den = 0.0;
        let n = self.n;
        for idx in 0..self.node_count() {
            let uv = d.val[idx];
            if uv <= 0.0 {
                return Err(NilError::NonPositive { node: idx, value: uv });
            }
            let mut g = 0.0;
            for a in 0..n {
                g += d.grad[idx * n + a].norm_sqr();
            }
            num += bn * g + r_field.value(&self.node(idx)) * uv * uv;
            den += uv.powf(bn);
        }
        let w = self.weight();
        Ok((num * w) / (den * w).powf(2.0 / bn))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// Nodal values of a field and of every operator the integrated identities
/// consume.
pub struct NodalData {
    pub val: Vec<f64>,
    pub f0: Vec<f64>,
    pub lap: Vec<f64>,
    pub pan: Vec<f64>,
    /// `[node * n + a]` complex frame derivatives `Z_a f`.
    pub grad: Vec<C64>,
}

impl NodalData {
    fn scale(&mut self, c: f64) {
        for v in self
            .val
            .iter_mut()
            .chain(&mut self.f0)
            .chain(&mut self.lap)
            .chain(&mut self.pan)
        {
            *v *= c;
        }
        for g in self.grad.iter_mut() {
            *g *= c;
        }
    }

    fn axpy(&mut self, c: f64, o: &NodalData) {
        for (v, u) in self
            .val
            .iter_mut()
            .zip(&o.val)
            .chain(self.f0.iter_mut().zip(&o.f0))
            .chain(self.lap.iter_mut().zip(&o.lap))
            .chain(self.pan.iter_mut().zip(&o.pan))
        {
            *v += c * u;
        }
        for (g, h) in self.grad.iter_mut().zip(&o.grad) {
            *g += c * h;
        }
    }
}

/// Errors from nilmanifold functionals.
#[derive(Debug, thiserror::Error)]
pub enum NilError {
    #[error("conformal factor is not positive at node {node}: {value}")]
    NonPositive { node: usize, value: f64 },
}

/// One multiplicative per-coordinate factor of a character field.
#[derive(Debug, Clone)]
pub enum CoordFactor {
    /// Lattice-summed Gaussian `sum_m exp(-pi |z + m - a|^2
    /// + 4 pi i k Im(conj(m) z))`, covariant for `t`-frequency `k`.
    Theta { center: C64, trunc: i32 },
    /// Plain integer-frequency wave `exp(2 pi i (a x + b y))`.
    Wave { a: i32, b: i32 },
}

/// A lattice-periodic character: `Re` or `Im` of
/// `exp(2 pi i k t) prod_a factor_a(z_a)`.
#[derive(Debug, Clone)]
pub struct CharacterField {
    pub k: i32,
    pub factors: Vec<CoordFactor>,
    pub imag: bool,
}

impl CharacterField {
    pub fn constant_one(n: usize) -> CharacterField {
        CharacterField {
            k: 0,
            factors: vec![CoordFactor::Wave { a: 0, b: 0 }; n],
            imag: false,
        }
    }

    /// A theta character with per-coordinate Gaussian centers.
    pub fn theta(k: i32, centers: &[C64]) -> CharacterField {
        CharacterField {
            k,
            factors: centers
                .iter()
                .map(|&c| CoordFactor::Theta { center: c, trunc: 5 })
                .collect(),
            imag: false,
        }
    }

    /// A pure `z`-character with integer frequency pairs per coordinate.
    pub fn wave(freqs: &[(i32, i32)]) -> CharacterField {
        CharacterField {
            k: 0,
            factors: freqs.iter().map(|&(a, b)| CoordFactor::Wave { a, b }).collect(),
            imag: false,
        }
    }

    pub fn imag_part(mut self) -> CharacterField {
        self.imag = true;
        self
    }

    /// Complex scalar value of one coordinate factor at `z`.
    fn factor_value(factor: &CoordFactor, k: i32, z: C64) -> C64 {
        match factor {
            CoordFactor::Wave { a, b } => {
                C64::new(0.0, 2.0 * PI * (*a as f64 * z.re + *b as f64 * z.im)).exp()
            }
            CoordFactor::Theta { center, trunc } => {
                let mut acc = C64::new(0.0, 0.0);
                for mx in -trunc..=*trunc {
                    for my in -trunc..=*trunc {
                        let dx = z.re + mx as f64 - center.re;
                        let dy = z.im + my as f64 - center.im;
                        let phase = 4.0 * PI * k as f64 * (mx as f64 * z.im - my as f64 * z.re);
                        acc += C64::new(-PI * (dx * dx + dy * dy), phase).exp();
                    }
                }
                acc
            }
        }
    }

    /// Jet of one coordinate factor at base `z`, embedded in the full space.
    fn factor_jet(factor: &CoordFactor, k: i32, dim: usize, axis_x: usize, z: C64) -> Jet {
        let xj = Jet::coordinate(dim, axis_x, z.re);
        let yj = Jet::coordinate(dim, axis_x + 1, z.im);
        match factor {
            CoordFactor::Wave { a, b } => {
                let arg = xj
                    .scale(C64::new(0.0, 2.0 * PI * *a as f64))
                    .add(&yj.scale(C64::new(0.0, 2.0 * PI * *b as f64)));
                arg.exp()
            }
            CoordFactor::Theta { center, trunc } => {
                let mut acc = Jet::constant_re(dim, 0.0);
                for mx in -trunc..=*trunc {
                    for my in -trunc..=*trunc {
                        let dx = xj.add(&Jet::constant_re(dim, mx as f64 - center.re));
                        let dy = yj.add(&Jet::constant_re(dim, my as f64 - center.im));
                        let mut arg = dx.mul(&dx).add(&dy.mul(&dy)).scale_re(-PI);
                        let kk = 4.0 * PI * k as f64;
                        arg = arg.add(&yj.scale(C64::new(0.0, kk * mx as f64)));
                        arg = arg.add(&xj.scale(C64::new(0.0, -kk * my as f64)));
                        acc = acc.add(&arg.exp());
                    }
                }
                acc
            }
        }
    }

    /// Complex value of the full character (before taking `Re`/`Im`).
    pub fn complex_value(&self, p: &HPoint) -> C64 {
        let mut acc = C64::new(0.0, 2.0 * PI * self.k as f64 * p.t).exp();
        for (a, fac) in self.factors.iter().enumerate() {
            acc *= Self::factor_value(fac, self.k, p.z[a]);
        }
        acc
    }

    /// Complex jet of the full character.
    pub fn complex_jet(&self, p: &HPoint) -> Jet {
        let jp = JetPoint::new(p);
        let dim = jp.dim();
        let mut acc = jp.t().scale(C64::new(0.0, 2.0 * PI * self.k as f64)).exp();
        for (a, fac) in self.factors.iter().enumerate() {
            acc = acc.mul(&Self::factor_jet(fac, self.k, dim, 2 * a, p.z[a]));
        }
        acc
    }
}

impl ScalarField for CharacterField {
    fn n(&self) -> usize {
        self.factors.len()
    }

    fn value(&self, p: &HPoint) -> f64 {
        let v = self.complex_value(p);
        if self.imag {
            v.im
        } else {
            v.re
        }
    }

    fn jet(&self, p: &HPoint) -> Jet {
        let j = self.complex_jet(p);
        if self.imag {
            j.sub(&j.conj()).scale(C64::new(0.0, -0.5))
        } else {
            j.add(&j.conj()).scale_re(0.5)
        }
    }
}

impl PeriodicField for CharacterField {
    fn characters(&self) -> Vec<(f64, CharacterField)> {
        vec![(1.0, self.clone())]
    }
}

/// A fixed linear combination of characters (still lattice-periodic).
pub struct CharacterSum {
    pub parts: Vec<(f64, CharacterField)>,
}

impl ScalarField for CharacterSum {
    fn n(&self) -> usize {
        self.parts[0].1.n()
    }

    fn value(&self, p: &HPoint) -> f64 {
        self.parts.iter().map(|(c, f)| c * f.value(p)).sum()
    }

    fn jet(&self, p: &HPoint) -> Jet {
        let dim = 2 * self.n() + 1;
        let mut acc = Jet::constant_re(dim, 0.0);
        for (c, f) in &self.parts {
            acc = acc.add(&f.jet(p).scale_re(*c));
        }
        acc
    }
}

impl PeriodicField for CharacterSum {
    fn characters(&self) -> Vec<(f64, CharacterField)> {
        self.parts.clone()
    }
}

/// Precomputed nodal data for a character basis: values and the outputs of
/// every operator the integrated identities need.  Quadratic functionals of
/// arbitrary linear combinations then reduce to small Gram forms, which is
/// what makes large random-field sweeps cheap.
pub struct NilWorkspace {
    pub nm: Nilmanifold,
    pub basis: Vec<CharacterField>,
    /// `[field][node]` nodal values.
    pub val: Vec<Vec<f64>>,
    pub f0: Vec<Vec<f64>>,
    pub lap: Vec<Vec<f64>>,
    pub pan: Vec<Vec<f64>>,
    /// `[field][node * n + a]` complex frame derivatives `Z_a f`.
    pub grad: Vec<Vec<C64>>,
}

impl NilWorkspace {
    pub fn build(nm: Nilmanifold, basis: Vec<CharacterField>) -> NilWorkspace {
        let mut val = Vec::with_capacity(basis.len());
        let mut f0 = Vec::with_capacity(basis.len());
        let mut lap = Vec::with_capacity(basis.len());
        let mut pan = Vec::with_capacity(basis.len());
        let mut grad = Vec::with_capacity(basis.len());
        for field in &basis {
            let d = nm.nodal_data(field);
            val.push(d.val);
            f0.push(d.f0);
            lap.push(d.lap);
            pan.push(d.pan);
            grad.push(d.grad);
        }
        NilWorkspace { nm, basis, val, f0, lap, pan, grad }
    }

    fn gram(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let m = a.len();
        let w = self.nm.weight();
        let mut g = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..m {
                let mut s = 0.0;
                for (u, v) in a[i].iter().zip(&b[j]) {
                    s += u * v;
                }
                g[i][j] = s * w;
            }
        }
        g
    }

    /// `int (T b_i)(T b_j)`.
    pub fn gram_reeb(&self) -> Vec<Vec<f64>> {
        self.gram(&self.f0, &self.f0)
    }

    /// `int (lap_b b_i)(lap_b b_j)`.
    pub fn gram_lap(&self) -> Vec<Vec<f64>> {
        self.gram(&self.lap, &self.lap)
    }

    /// `int b_i (P b_j)`.
    pub fn gram_paneitz(&self) -> Vec<Vec<f64>> {
        self.gram(&self.val, &self.pan)
    }

    /// `int (lap_b b_i) b_j` — self-adjointness means this is symmetric.
    pub fn gram_lap_val(&self) -> Vec<Vec<f64>> {
        self.gram(&self.lap, &self.val)
    }

    /// `int <grad_b b_i, grad_b b_j>`.
    pub fn gram_grad(&self) -> Vec<Vec<f64>> {
        let m = self.basis.len();
        let w = self.nm.weight();
        let mut g = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..m {
                let mut s = 0.0;
                for (u, v) in self.grad[i].iter().zip(&self.grad[j]) {
                    s += (u * v.conj()).re;
                }
                g[i][j] = s * w;
            }
        }
        g
    }

    /// Nodal values of the combination `sum_i c_i b_i`.
    pub fn combo_values(&self, coeffs: &[f64]) -> Vec<f64> {
        let node_count = self.nm.node_count();
        let mut out = vec![0.0; node_count];
        for (c, v) in coeffs.iter().zip(&self.val) {
            for (o, x) in out.iter_mut().zip(v) {
                *o += c * x;
            }
        }
        out
    }
}

fn quad_form(g: &[Vec<f64>], c: &[f64]) -> f64 {
    let mut s = 0.0;
    for (i, ci) in c.iter().enumerate() {
        for (j, cj) in c.iter().enumerate() {
            s += ci * cj * g[i][j];
        }
    }
    s
}

/// Precomputed Gram matrices for the integrated-identity sweeps.
pub struct IdentityGrams {
    pub n: usize,
    pub reeb: Vec<Vec<f64>>,
    pub lap: Vec<Vec<f64>>,
    pub paneitz: Vec<Vec<f64>>,
}

impl IdentityGrams {
    pub fn from_workspace(ws: &NilWorkspace) -> IdentityGrams {
        IdentityGrams {
            n: ws.nm.n,
            reeb: ws.gram_reeb(),
            lap: ws.gram_lap(),
            paneitz: ws.gram_paneitz(),
        }
    }

    /// `(residual, largest_term)` of the integrated Bochner identity for the
    /// combination `c`.
    pub fn ibf_residual(&self, c: &[f64]) -> (f64, f64) {
        let n2 = (self.n * self.n) as f64;
        let i0 = quad_form(&self.reeb, c);
        let i2 = quad_form(&self.lap, c) / n2;
        let ip = quad_form(&self.paneitz, c) / (2.0 * n2);
        (i0 - i2 + ip, i0.abs().max(i2.abs()).max(ip.abs()))
    }

    pub fn paneitz_energy(&self, c: &[f64]) -> f64 {
        quad_form(&self.paneitz, c)
    }

    pub fn reeb_margin(&self, c: &[f64]) -> f64 {
        let n2 = (self.n * self.n) as f64;
        quad_form(&self.lap, c) / n2 - quad_form(&self.reeb, c)
    }
}

/// Per-coordinate jet cache: each character factor depends on a single
/// complex coordinate (or on `t`), so on a tensor grid only
/// `res_x * res_y` distinct factor jets occur per coordinate.
struct FactorJetCache {
    /// `[coord][iy * res_x + ix]`
    coord: Vec<Vec<Jet>>,
    /// `[it]` jets of the `t` phase
    tphase: Vec<Jet>,
}

impl FactorJetCache {
    fn build(nm: &Nilmanifold, field: &CharacterField) -> FactorJetCache {
        let n = nm.n;
        let dim = 2 * n + 1;
        let mut coord = Vec::with_capacity(n);
        for a in 0..n {
            let rx = nm.res[2 * a];
            let ry = nm.res[2 * a + 1];
            let mut jets = Vec::with_capacity(rx * ry);
            for iy in 0..ry {
                for ix in 0..rx {
                    let z = C64::new(ix as f64 / rx as f64, iy as f64 / ry as f64);
                    jets.push(CharacterField::factor_jet(
                        &field.factors[a],
                        field.k,
                        dim,
                        2 * a,
                        z,
                    ));
                }
            }
            coord.push(jets);
        }
        let rt = nm.res[2 * n];
        let mut tphase = Vec::with_capacity(rt);
        for it in 0..rt {
            let t = it as f64 / rt as f64;
            tphase.push(
                Jet::coordinate(dim, 2 * n, t)
                    .scale(C64::new(0.0, 2.0 * PI * field.k as f64))
                    .exp(),
            );
        }
        FactorJetCache { coord, tphase }
    }

    /// Assemble the real jet of the field at grid node `idx`.
    fn jet(&self, nm: &Nilmanifold, field: &CharacterField, idx: usize) -> Jet {
        let n = nm.n;
        // decode the mixed-radix node index per axis (last axis fastest)
        let d = 2 * n + 1;
        let mut rem = idx;
        let mut axis_idx = vec![0usize; d];
        for ax in (0..d).rev() {
            axis_idx[ax] = rem % nm.res[ax];
            rem /= nm.res[ax];
        }
        let mut acc = self.tphase[axis_idx[2 * n]].clone();
        for a in 0..n {
            let key = axis_idx[2 * a + 1] * nm.res[2 * a] + axis_idx[2 * a];
            acc = acc.mul(&self.coord[a][key]);
        }
        if field.imag {
            acc.sub(&acc.conj()).scale(C64::new(0.0, -0.5))
        } else {
            acc.add(&acc.conj()).scale_re(0.5)
        }
    }
}

/// Standard mixed basis of theta characters and waves for identity sweeps.
pub fn standard_basis(n: usize) -> Vec<CharacterField> {
    let mut basis = Vec::new();
    let centers_a: Vec<C64> = (0..n).map(|a| C64::new(0.15 + 0.1 * a as f64, 0.35)).collect();
    let centers_b: Vec<C64> = (0..n).map(|a| C64::new(0.6, 0.2 + 0.15 * a as f64)).collect();
    for k in [1, -1] {
        basis.push(CharacterField::theta(k, &centers_a));
        basis.push(CharacterField::theta(k, &centers_a).imag_part());
        basis.push(CharacterField::theta(k, &centers_b));
        basis.push(CharacterField::theta(k, &centers_b).imag_part());
    }
    // a few pure z-characters (t-independent)
    let mut freqs = vec![(0, 0); n];
    freqs[0] = (1, 0);
    basis.push(CharacterField::wave(&freqs));
    basis.push(CharacterField::wave(&freqs).imag_part());
    freqs[0] = (1, 1);
    if n > 1 {
        freqs[1] = (0, 1);
    }
    basis.push(CharacterField::wave(&freqs));
    basis.push(CharacterField::wave(&freqs).imag_part());
    basis
}
