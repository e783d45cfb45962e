//! Scalar fields on the model group with order-4 jet evaluation.
//!
//! Every field knows how to produce the truncated Taylor expansion of itself
//! at an arbitrary point, which is what the operator layer consumes.  Fields
//! include dense random polynomials and Gaussian bumps (test inputs), powers
//! of the gauge norm of a group-translated argument (fundamental-solution
//! candidates and gauge kernels), and sphere Green factors pulled back
//! through the stereographic chart.

use crate::heis::{HPoint, SpherePoint};
use crate::jet::Jet;
use crate::ops::JetPoint;
use num_complex::Complex64 as C64;
use rand::Rng;

/// A real scalar field with jet evaluation.
pub trait ScalarField {
    /// Number of complex coordinates of the underlying group.
    fn n(&self) -> usize;
    /// Order-4 Taylor expansion at `p`.
    fn jet(&self, p: &HPoint) -> Jet;
    /// Pointwise value (default: constant term of the jet).
    fn value(&self, p: &HPoint) -> f64 {
        self.jet(p).value_re()
    }
}

/// Coordinate jets of the left-translated argument `q -> g^{-1} q`, expanded
/// at `q = p`.  Returns `(x'_1, y'_1, ..., x'_n, y'_n, t')` — all affine in
/// the coordinates of `q`, so order 4 is preserved.
pub fn translated_coordinate_jets(g: &HPoint, p: &HPoint) -> Vec<Jet> {
    let n = g.z.len();
    let jp = JetPoint::new(p);
    let mut out = Vec::with_capacity(2 * n + 1);
    for a in 0..n {
        out.push(jp.x(a).sub(&Jet::constant_re(jp.dim(), g.z[a].re)));
        out.push(jp.y(a).sub(&Jet::constant_re(jp.dim(), g.z[a].im)));
    }
    // t' = t - t_g - 2 sum_a (x_g y - y_g x)
    let mut tj = jp.t().sub(&Jet::constant_re(jp.dim(), g.t));
    for a in 0..n {
        tj = tj.sub(&jp.y(a).scale_re(2.0 * g.z[a].re));
        tj = tj.add(&jp.x(a).scale_re(2.0 * g.z[a].im));
    }
    out.push(tj);
    out
}

/// Jet of `rho(g^{-1} q)^4 = |z'|^4 + t'^2` expanded at `q = p`.
pub fn translated_gauge_4_jet(g: &HPoint, p: &HPoint) -> Jet {
    let n = g.z.len();
    let coords = translated_coordinate_jets(g, p);
    let dim = 2 * n + 1;
    let mut zsq = Jet::constant_re(dim, 0.0);
    for a in 0..n {
        zsq = zsq.add(&coords[2 * a].mul(&coords[2 * a]));
        zsq = zsq.add(&coords[2 * a + 1].mul(&coords[2 * a + 1]));
    }
    let tj = &coords[2 * n];
    zsq.mul(&zsq).add(&tj.mul(tj))
}

/// `c * rho(g^{-1} q)^s`: a power of the gauge distance to a movable pole.
pub struct GaugePowerField {
    pub pole: HPoint,
    pub exponent: f64,
    pub coeff: f64,
}

impl GaugePowerField {
    /// Gauge kernel `c * rho(p^{-1} q)^{-2n}`, the fundamental-solution shape.
    pub fn kernel(pole: HPoint, c: f64) -> GaugePowerField {
        let n = pole.z.len();
        GaugePowerField { pole, exponent: -2.0 * n as f64, coeff: c }
    }
}

impl ScalarField for GaugePowerField {
    fn n(&self) -> usize {
        self.pole.z.len()
    }

    fn jet(&self, p: &HPoint) -> Jet {
        translated_gauge_4_jet(&self.pole, p)
            .powf(self.exponent / 4.0)
            .scale_re(self.coeff)
    }
}

/// Dense random polynomial in `(x_1, y_1, ..., x_n, y_n, t)`.
pub struct PolyField {
    pub n: usize,
    /// Monomials as `(coefficient, exponents)`; exponent vector has length
    /// `2n + 1`.
    pub terms: Vec<(f64, Vec<u8>)>,
}

impl PolyField {
    /// Random polynomial of total degree `<= deg` with coefficients in
    /// `[-1, 1]`.
    pub fn random<R: Rng>(n: usize, deg: u8, rng: &mut R) -> PolyField {
        let dim = 2 * n + 1;
        let mut terms = Vec::new();
        let mut stack: Vec<Vec<u8>> = vec![vec![]];
        while let Some(partial) = stack.pop() {
            if partial.len() == dim {
                terms.push((rng.gen_range(-1.0..1.0), partial));
                continue;
            }
            let used: u8 = partial.iter().sum();
            for k in 0..=(deg - used) {
                let mut next = partial.clone();
                next.push(k);
                stack.push(next);
            }
        }
        PolyField { n, terms }
    }
}

impl ScalarField for PolyField {
    fn n(&self) -> usize {
        self.n
    }

    fn jet(&self, p: &HPoint) -> Jet {
        let jp = JetPoint::new(p);
        let dim = jp.dim();
        let mut coords = Vec::with_capacity(dim);
        for a in 0..self.n {
            coords.push(jp.x(a));
            coords.push(jp.y(a));
        }
        coords.push(jp.t());
        let mut acc = Jet::constant_re(dim, 0.0);
        for (c, exps) in &self.terms {
            let mut term = Jet::constant_re(dim, *c);
            for (ax, &e) in exps.iter().enumerate() {
                for _ in 0..e {
                    term = term.mul(&coords[ax]);
                }
            }
            acc = acc.add(&term);
        }
        acc
    }
}

/// Gaussian bump `c * exp(-k * (|z - z_0|^2 + (t - t_0)^2))`.
pub struct BumpField {
    pub center: HPoint,
    pub width: f64,
    pub coeff: f64,
}

impl ScalarField for BumpField {
    fn n(&self) -> usize {
        self.center.z.len()
    }

    fn jet(&self, p: &HPoint) -> Jet {
        let jp = JetPoint::new(p);
        let dim = jp.dim();
        let mut q = Jet::constant_re(dim, 0.0);
        for a in 0..self.n() {
            let dx = jp.x(a).sub(&Jet::constant_re(dim, self.center.z[a].re));
            let dy = jp.y(a).sub(&Jet::constant_re(dim, self.center.z[a].im));
            q = q.add(&dx.mul(&dx)).add(&dy.mul(&dy));
        }
        let dt = jp.t().sub(&Jet::constant_re(dim, self.center.t));
        q = q.add(&dt.mul(&dt));
        q.scale_re(-self.width).exp().scale_re(self.coeff)
    }
}

/// Linear combination of boxed fields.
pub struct SumField {
    pub n: usize,
    pub parts: Vec<(f64, Box<dyn ScalarField>)>,
}

impl ScalarField for SumField {
    fn n(&self) -> usize {
        self.n
    }

    fn jet(&self, p: &HPoint) -> Jet {
        let dim = 2 * self.n + 1;
        let mut acc = Jet::constant_re(dim, 0.0);
        for (c, f) in &self.parts {
            acc = acc.add(&f.jet(p).scale_re(*c));
        }
        acc
    }
}

/// Jet of the complex sphere pairing deficit `1 - <s, y>` where
/// `s = C^{-1}(q)` is the inverse stereographic image of the running point.
/// Rational in the group coordinates, hence exact on order-4 jets.
pub fn pairing_deficit_jet(y: &SpherePoint, p: &HPoint) -> Jet {
    let n = y.zeta.len() - 1;
    let jp = JetPoint::new(p);
    let dim = jp.dim();
    // w = t + i |z|^2, zeta_{n+1} = (i - w) / (i + w), zeta_a = conj(z_a) (1 + zeta_{n+1})
    let i1 = C64::new(0.0, 1.0);
    let w = jp.t().add(&jp.z_norm_sq().scale(i1));
    let denom = Jet::constant(dim, i1).add(&w);
    let zeta_last = Jet::constant(dim, i1).sub(&w).div(&denom);
    let one_plus = Jet::constant_re(dim, 1.0).add(&zeta_last);
    // 1 - sum_a conj(y_a) zeta_a - conj(y_{n+1}) zeta_{n+1}
    let mut acc = Jet::constant_re(dim, 1.0).sub(&zeta_last.scale(y.zeta[n].conj()));
    for a in 0..n {
        let zeta_a = jp.z(a).conj().mul(&one_plus);
        acc = acc.sub(&zeta_a.scale(y.zeta[a].conj()));
    }
    acc
}

/// Sphere Green factor `|1 - <s, y>|^{-n}` as a field on the group via the
/// stereographic chart, optionally scaled.
pub struct SphereGreenField {
    pub pole: SpherePoint,
    pub coeff: f64,
}

impl ScalarField for SphereGreenField {
    fn n(&self) -> usize {
        self.pole.zeta.len() - 1
    }

    fn jet(&self, p: &HPoint) -> Jet {
        let n = self.n();
        pairing_deficit_jet(&self.pole, p)
            .abs_sq()
            .powf(-(n as f64) / 2.0)
            .scale_re(self.coeff)
    }
}

/// The stereographic conformal factor `|1 + zeta_{n+1}|` raised to a power,
/// as a field on the group: with `w = t + i|z|^2`,
/// `1 + zeta_{n+1} = 2i / (i + w)`, so `|1 + zeta_{n+1}|^2 = 4 / |i + w|^2`.
pub struct ChartFactorField {
    pub n: usize,
    pub exponent: f64,
}

impl ScalarField for ChartFactorField {
    fn n(&self) -> usize {
        self.n
    }

    fn jet(&self, p: &HPoint) -> Jet {
        let jp = JetPoint::new(p);
        let dim = jp.dim();
        let i1 = C64::new(0.0, 1.0);
        let w = jp.t().add(&jp.z_norm_sq().scale(i1));
        let denom_sq = Jet::constant(dim, i1).add(&w).abs_sq();
        denom_sq
            .scale_re(0.25)
            .powf(-self.exponent / 2.0)
    }
}
