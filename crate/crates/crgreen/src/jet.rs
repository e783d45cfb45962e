//! Truncated multivariate Taylor arithmetic (forward-mode jets) of total
//! order 4 in `d = 2n + 1` real variables.
//!
//! A [`Jet`] stores the Taylor *coefficients* `c_gamma` of a function around a
//! base point, `f(p + u) = sum_{|gamma| <= ord} c_gamma u^gamma + O(|u|^{ord+1})`,
//! with complex coefficients so that complexified frame derivatives can be
//! propagated directly.  Every jet carries an `ord` field: arithmetic on jets
//! of different valid orders truncates to the smaller one, and a coordinate
//! derivative lowers the order by one.  Starting real-analytic fields at
//! order 4 therefore yields exact values for operators of order up to 4
//! (sublaplacian, Reeb derivative, full subhessian, Paneitz-type operator).

use num_complex::Complex64 as C64;
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

pub const MAX_ORDER: usize = 4;
const MAX_DIM: usize = 8;

type Expo = [u8; MAX_DIM];

/// Precomputed combinatorial tables for jets of a fixed dimension.
pub struct JetSpace {
    pub dim: usize,
    /// Number of multi-indices of total degree `<= MAX_ORDER`.
    pub len: usize,
    /// Graded list of exponent multi-indices.
    pub exps: Vec<Expo>,
    /// Total degree of each multi-index.
    pub degree: Vec<u8>,
    /// Flattened multiplication table: `(ia, ib, iout)` triples.
    mul_table: Vec<(u32, u32, u32)>,
    /// Per-axis derivative table: `(src, dst, factor)` meaning
    /// `out[dst] += factor * in[src]`.
    deriv_table: Vec<Vec<(u32, u32, f64)>>,
    /// Per-axis shift-up table: `(src, dst)` meaning coefficient of
    /// `x_axis * f`: `out[dst] += in[src]` where `dst = src + e_axis`.
    shift_table: Vec<Vec<(u32, u32)>>,
    /// Per complex coordinate `a`: fused table for the `t`-derivative part of
    /// the frame fields.  Entries `(src, dst, fac, dst_x, dst_y)` encode
    /// `d_t f` coefficients and where they land after multiplication by an
    /// affine function of `(x_a, y_a)`; `u32::MAX` marks truncation.
    frame_table: Vec<Vec<(u32, u32, f64, u32, u32)>>,
    index: HashMap<Expo, u32>,
}

fn enumerate_exps(dim: usize) -> Vec<Expo> {
    let mut out: Vec<Expo> = Vec::new();
    // enumerate by total degree (graded), lexicographic within a degree
    fn rec(dim: usize, pos: usize, left: usize, cur: &mut Expo, out: &mut Vec<Expo>) {
        if pos == dim {
            if left == 0 {
                out.push(*cur);
            }
            return;
        }
        for k in (0..=left).rev() {
            cur[pos] = k as u8;
            rec(dim, pos + 1, left - k, cur, out);
        }
        cur[pos] = 0;
    }
    for deg in 0..=MAX_ORDER {
        let mut cur = [0u8; MAX_DIM];
        rec(dim, 0, deg, &mut cur, &mut out);
    }
    out
}

impl JetSpace {
    fn build(dim: usize) -> JetSpace {
        assert!(dim <= MAX_DIM);
        let exps = enumerate_exps(dim);
        let len = exps.len();
        let mut index = HashMap::with_capacity(len);
        let mut degree = Vec::with_capacity(len);
        for (i, e) in exps.iter().enumerate() {
            index.insert(*e, i as u32);
            degree.push(e.iter().take(dim).sum::<u8>());
        }
        let mut mul_table = Vec::new();
        for (ia, ea) in exps.iter().enumerate() {
            for (ib, eb) in exps.iter().enumerate() {
                let dsum = degree[ia] + degree[ib];
                if dsum as usize > MAX_ORDER {
                    continue;
                }
                let mut ec = [0u8; MAX_DIM];
                for k in 0..dim {
                    ec[k] = ea[k] + eb[k];
                }
                mul_table.push((ia as u32, ib as u32, index[&ec]));
            }
        }
        let mut deriv_table = Vec::with_capacity(dim);
        let mut shift_table = Vec::with_capacity(dim);
        for ax in 0..dim {
            let mut dt = Vec::new();
            let mut st = Vec::new();
            for (i, e) in exps.iter().enumerate() {
                if e[ax] > 0 {
                    let mut e2 = *e;
                    e2[ax] -= 1;
                    let j = index[&e2];
                    dt.push((i as u32, j, e[ax] as f64));
                    st.push((j, i as u32));
                }
            }
            deriv_table.push(dt);
            shift_table.push(st);
        }
        let n_pairs = (dim - 1) / 2;
        let taxis = dim - 1;
        let mut frame_table = Vec::with_capacity(n_pairs);
        for a in 0..n_pairs {
            let mut ft = Vec::new();
            for &(src, dst, fac) in &deriv_table[taxis] {
                let shifted = |ax: usize| -> u32 {
                    let e = &exps[dst as usize];
                    if (degree[dst as usize] as usize) + 1 > MAX_ORDER {
                        return u32::MAX;
                    }
                    let mut e2 = *e;
                    e2[ax] += 1;
                    index[&e2]
                };
                ft.push((src, dst, fac, shifted(2 * a), shifted(2 * a + 1)));
            }
            frame_table.push(ft);
        }
        JetSpace {
            dim,
            len,
            exps,
            degree,
            mul_table,
            deriv_table,
            shift_table,
            frame_table,
            index,
        }
    }

    pub fn index_of(&self, e: &[u8]) -> usize {
        let mut key = [0u8; MAX_DIM];
        key[..e.len()].copy_from_slice(e);
        self.index[&key] as usize
    }
}

/// Fetch (and cache) the jet space for a given dimension.
pub fn jet_space(dim: usize) -> &'static JetSpace {
    static CACHE: OnceLock<Mutex<HashMap<usize, &'static JetSpace>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard.entry(dim).or_insert_with(|| Box::leak(Box::new(JetSpace::build(dim)))) as &&'static JetSpace
}

/// A truncated Taylor expansion with complex coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub dim: usize,
    /// Valid total order: coefficients of degree `> ord` are zero/meaningless.
    pub ord: usize,
    pub c: Vec<C64>,
}

impl Jet {
    pub fn constant(dim: usize, v: C64) -> Jet {
        let sp = jet_space(dim);
        let mut c = vec![C64::new(0.0, 0.0); sp.len];
        c[0] = v;
        Jet { dim, ord: MAX_ORDER, c }
    }

    pub fn constant_re(dim: usize, v: f64) -> Jet {
        Jet::constant(dim, C64::new(v, 0.0))
    }

    /// Jet of the coordinate function `x_axis` around a base point with value `v`.
    pub fn coordinate(dim: usize, axis: usize, v: f64) -> Jet {
        let sp = jet_space(dim);
        let mut c = vec![C64::new(0.0, 0.0); sp.len];
        c[0] = C64::new(v, 0.0);
        let mut e = [0u8; MAX_DIM];
        e[axis] = 1;
        c[sp.index[&e] as usize] = C64::new(1.0, 0.0);
        Jet { dim, ord: MAX_ORDER, c }
    }

    pub fn value(&self) -> C64 {
        self.c[0]
    }

    pub fn value_re(&self) -> f64 {
        self.c[0].re
    }

    /// Zero the coefficients of degree greater than `ord`.
    fn truncate(&mut self, ord: usize) {
        let sp = jet_space(self.dim);
        self.ord = ord;
        for i in 0..sp.len {
            if sp.degree[i] as usize > ord {
                self.c[i] = C64::new(0.0, 0.0);
            }
        }
    }

    pub fn add(&self, o: &Jet) -> Jet {
        assert_eq!(self.dim, o.dim);
        let mut c = self.c.clone();
        for (a, b) in c.iter_mut().zip(&o.c) {
            *a += b;
        }
        let mut r = Jet { dim: self.dim, ord: self.ord.min(o.ord), c };
        r.truncate(r.ord);
        r
    }

    pub fn sub(&self, o: &Jet) -> Jet {
        assert_eq!(self.dim, o.dim);
        let mut c = self.c.clone();
        for (a, b) in c.iter_mut().zip(&o.c) {
            *a -= b;
        }
        let mut r = Jet { dim: self.dim, ord: self.ord.min(o.ord), c };
        r.truncate(r.ord);
        r
    }

    pub fn neg(&self) -> Jet {
        Jet { dim: self.dim, ord: self.ord, c: self.c.iter().map(|v| -v).collect() }
    }

    pub fn scale(&self, s: C64) -> Jet {
        Jet { dim: self.dim, ord: self.ord, c: self.c.iter().map(|v| v * s).collect() }
    }

    pub fn scale_re(&self, s: f64) -> Jet {
        self.scale(C64::new(s, 0.0))
    }

    pub fn mul(&self, o: &Jet) -> Jet {
        assert_eq!(self.dim, o.dim);
        let sp = jet_space(self.dim);
        let ord = self.ord.min(o.ord) as u8;
        let mut c = vec![C64::new(0.0, 0.0); sp.len];
        for &(ia, ib, io) in &sp.mul_table {
            if sp.degree[io as usize] > ord {
                continue;
            }
            let a = self.c[ia as usize];
            if a.re == 0.0 && a.im == 0.0 {
                continue;
            }
            c[io as usize] += a * o.c[ib as usize];
        }
        Jet { dim: self.dim, ord: ord as usize, c }
    }

    /// Coefficient-wise complex conjugate: the jet of `conj . f`.
    pub fn conj(&self) -> Jet {
        Jet { dim: self.dim, ord: self.ord, c: self.c.iter().map(|v| v.conj()).collect() }
    }

    /// Jet of `|f|^2 = f conj(f)`.
    pub fn abs_sq(&self) -> Jet {
        self.mul(&self.conj())
    }

    /// Partial derivative along a coordinate axis; lowers the order by one.
    pub fn deriv(&self, axis: usize) -> Jet {
        assert!(self.ord >= 1, "jet order exhausted");
        let sp = jet_space(self.dim);
        let mut c = vec![C64::new(0.0, 0.0); sp.len];
        for &(src, dst, f) in &sp.deriv_table[axis] {
            c[dst as usize] += self.c[src as usize] * f;
        }
        let mut r = Jet { dim: self.dim, ord: self.ord - 1, c };
        r.truncate(r.ord);
        r
    }

    /// Fast multiplication by the affine function `a + b * x_axis`, where
    /// `x_axis` has base value `x0` (so the affine function's jet is
    /// `(a + b x0) + b u_axis`).  Does not lower the order beyond truncation.
    pub fn mul_affine(&self, axis: usize, a: C64, b: C64, x0: f64) -> Jet {
        let sp = jet_space(self.dim);
        let a0 = a + b * x0;
        let mut c: Vec<C64> = self.c.iter().map(|v| v * a0).collect();
        for &(src, dst) in &sp.shift_table[axis] {
            c[dst as usize] += self.c[src as usize] * b;
        }
        let mut r = Jet { dim: self.dim, ord: self.ord, c };
        r.truncate(r.ord);
        r
    }

    /// Compose with a univariate analytic function given its derivatives
    /// `derivs[m] = g^{(m)}(f(p))`, `m = 0..=ord`.
    pub fn compose(&self, derivs: &[C64]) -> Jet {
        let n = self.dim;
        let mut nil = self.clone();
        nil.c[0] = C64::new(0.0, 0.0);
        // Horner evaluation of sum_m derivs[m]/m! nil^m
        let mut fact = 1.0f64;
        let mut coeff = Vec::with_capacity(self.ord + 1);
        for (m, d) in derivs.iter().enumerate().take(self.ord + 1) {
            if m > 0 {
                fact *= m as f64;
            }
            coeff.push(d / fact);
        }
        let mut r = Jet::constant(n, *coeff.last().unwrap());
        for k in (0..coeff.len() - 1).rev() {
            r = r.mul(&nil).add(&Jet::constant(n, coeff[k]));
        }
        r.ord = self.ord;
        r.truncate(r.ord);
        r
    }

    /// Jet of `exp(f)`.
    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        let derivs = vec![e; self.ord + 1];
        self.compose(&derivs)
    }

    /// Jet of `f^s` for real exponent `s`; requires `f(p)` real and positive.
    pub fn powf(&self, s: f64) -> Jet {
        let v = self.value();
        assert!(
            v.re > 0.0 && v.im.abs() <= 1e-9 * (1.0 + v.re.abs()),
            "powf requires a positive real base value, got {v}"
        );
        let x = v.re;
        let mut derivs = Vec::with_capacity(self.ord + 1);
        let mut coef = 1.0;
        for m in 0..=self.ord {
            derivs.push(C64::new(coef * x.powf(s - m as f64), 0.0));
            coef *= s - m as f64;
        }
        self.compose(&derivs)
    }

    /// Jet of `1 / f`; requires `f(p) != 0`.
    pub fn recip(&self) -> Jet {
        let v = self.value();
        assert!(v.norm() > 0.0, "recip of zero value");
        let mut derivs = Vec::with_capacity(self.ord + 1);
        let mut cur = C64::new(1.0, 0.0) / v;
        let mut sign = 1.0;
        let mut fact = 1.0;
        for m in 0..=self.ord {
            // d^m/dx^m (1/x) = (-1)^m m! x^{-m-1}
            derivs.push(sign * fact * cur);
            cur /= v;
            sign = -sign;
            fact *= (m + 1) as f64;
        }
        self.compose(&derivs)
    }

    pub fn div(&self, o: &Jet) -> Jet {
        self.mul(&o.recip())
    }

    /// Fused complexified frame derivative:
    /// `Z_a f = (d_x f + i d_y f) / 2 + i z_a d_t f` (with `conjugate`,
    /// `conj(Z_a) f = (d_x f - i d_y f) / 2 - i conj(z_a) d_t f`), where
    /// `z_a` is the value of the `a`-th complex coordinate at the base point.
    /// Single output allocation; the affine coordinate multiplication is
    /// folded into the `t`-derivative table.
    pub fn frame_complex(&self, a: usize, z_a: C64, conjugate: bool) -> Jet {
        assert!(self.ord >= 1, "jet order exhausted");
        let sp = jet_space(self.dim);
        let half = C64::new(0.5, 0.0);
        let half_i = if conjugate {
            C64::new(0.0, -0.5)
        } else {
            C64::new(0.0, 0.5)
        };
        // coefficient of d_t f: i z_a = i(x + iy), or -i conj(z_a) = -i(x - iy)
        let (c0, cx, cy) = if conjugate {
            (
                C64::new(0.0, -1.0) * z_a.conj(),
                C64::new(0.0, -1.0),
                C64::new(-1.0, 0.0),
            )
        } else {
            (
                C64::new(0.0, 1.0) * z_a,
                C64::new(0.0, 1.0),
                C64::new(-1.0, 0.0),
            )
        };
        let new_ord = (self.ord - 1) as u8;
        let mut c = vec![C64::new(0.0, 0.0); sp.len];
        for &(src, dst, fac) in &sp.deriv_table[2 * a] {
            if sp.degree[dst as usize] > new_ord {
                continue;
            }
            c[dst as usize] += half * fac * self.c[src as usize];
        }
        for &(src, dst, fac) in &sp.deriv_table[2 * a + 1] {
            if sp.degree[dst as usize] > new_ord {
                continue;
            }
            c[dst as usize] += half_i * fac * self.c[src as usize];
        }
        for &(src, dst, fac, dstx, dsty) in &sp.frame_table[a] {
            if sp.degree[dst as usize] > new_ord {
                continue;
            }
            let ft = fac * self.c[src as usize];
            c[dst as usize] += c0 * ft;
            // the shifted targets sit one degree higher
            if sp.degree[dst as usize] < new_ord {
                if dstx != u32::MAX {
                    c[dstx as usize] += cx * ft;
                }
                if dsty != u32::MAX {
                    c[dsty as usize] += cy * ft;
                }
            }
        }
        Jet { dim: self.dim, ord: new_ord as usize, c }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn space_sizes_match_binomials() {
        // C(d + 4, 4) multi-indices of degree <= 4
        assert_eq!(jet_space(3).len, 35);
        assert_eq!(jet_space(5).len, 126);
        assert_eq!(jet_space(7).len, 330);
    }

    #[test]
    fn product_rule_and_derivatives() {
        // f = (x + 2y)^2 * t at (1, -1, 2); check d/dx and d/dy d/dt values
        let x = Jet::coordinate(3, 0, 1.0);
        let y = Jet::coordinate(3, 1, -1.0);
        let t = Jet::coordinate(3, 2, 2.0);
        let s = x.add(&y.scale_re(2.0)); // value -1
        let f = s.mul(&s).mul(&t);
        assert_abs_diff_eq!(f.value_re(), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(f.deriv(0).value_re(), 2.0 * -1.0 * 2.0, epsilon = 1e-14);
        let fyt = f.deriv(1).deriv(2);
        assert_abs_diff_eq!(fyt.value_re(), 4.0 * -1.0, epsilon = 1e-14);
        assert_eq!(fyt.ord, 2);
    }

    #[test]
    fn exp_and_powf_against_closed_forms() {
        // g = exp(x) at x0 = 0.3: all pure-x Taylor coefficients are e^{0.3}/k!
        let x = Jet::coordinate(3, 0, 0.3);
        let g = x.exp();
        let sp = jet_space(3);
        let e = 0.3f64.exp();
        for k in 0..=MAX_ORDER {
            let idx = sp.index_of(&[k as u8, 0, 0]);
            let fact: f64 = (1..=k).map(|m| m as f64).product();
            assert_abs_diff_eq!(g.c[idx].re, e / fact, epsilon = 1e-12);
        }
        // h = (1 + x^2)^{-3/2}: compare second derivative with hand value
        let one = Jet::constant_re(3, 1.0);
        let h = one.add(&x.mul(&x)).powf(-1.5);
        let x0: f64 = 0.3;
        let d2 = h.deriv(0).deriv(0).value_re();
        let expect = -3.0 * (1.0 + x0 * x0).powf(-2.5)
            + 15.0 * x0 * x0 * (1.0 + x0 * x0).powf(-3.5);
        assert_abs_diff_eq!(d2, expect, epsilon = 1e-12);
    }

    #[test]
    fn recip_is_multiplicative_inverse() {
        let x = Jet::coordinate(5, 2, 0.7);
        let y = Jet::coordinate(5, 4, -0.2);
        let f = Jet::constant_re(5, 2.0).add(&x.mul(&y)).add(&x);
        let prod = f.mul(&f.recip());
        for (i, c) in prod.c.iter().enumerate() {
            let expect = if i == 0 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(c.re, expect, epsilon = 1e-12);
            assert_abs_diff_eq!(c.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn mul_affine_matches_explicit_product() {
        let x = Jet::coordinate(3, 0, 0.4);
        let t = Jet::coordinate(3, 2, -1.1);
        let f = x.mul(&x).add(&t.exp());
        let a = C64::new(0.5, -0.25);
        let b = C64::new(-2.0, 1.0);
        let affine = Jet::constant(3, a).add(&Jet::coordinate(3, 1, 0.9).scale(b));
        let lhs = f.mul_affine(1, a, b, 0.9);
        let rhs = f.mul(&affine);
        for (u, v) in lhs.c.iter().zip(&rhs.c) {
            assert_abs_diff_eq!((u - v).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn conj_commutes_with_arithmetic() {
        let z = Jet::coordinate(3, 0, 0.2).add(&Jet::coordinate(3, 1, -0.4).scale(C64::new(0.0, 1.0)));
        let f = z.mul(&z).add(&z.scale(C64::new(0.0, 3.0)));
        let lhs = f.conj().mul(&f.conj());
        let rhs = f.mul(&f).conj();
        for (u, v) in lhs.c.iter().zip(&rhs.c) {
            assert_abs_diff_eq!((u - v).norm(), 0.0, epsilon = 1e-13);
        }
    }
}
