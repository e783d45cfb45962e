//! Heisenberg group and CR sphere primitives.
//!
//! The model space is `H^n = C^n x R` with coordinates `(z, t)` and contact
//! form `Theta = dt - i sum_a (z^a dzbar^a - zbar^a dz^a)`.  In real
//! coordinates `z^a = x_a + i y_a` this reads `Theta = dt - 2 sum_a (x_a dy_a
//! - y_a dx_a)`.  The group law below is the unique one making `Theta`
//! left-invariant; the horizontal frame and the rest of the calculus live in
//! [`crate::ops`].

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// A point of the Heisenberg group `H^n` (also used as a group element).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HPoint {
    /// Complex horizontal coordinates, length `n`.
    pub z: Vec<C64>,
    /// Vertical (center) coordinate.
    pub t: f64,
}

/// Alias emphasising the group structure of [`HPoint`].
pub type GroupElement = HPoint;

impl HPoint {
    pub fn new(z: Vec<C64>, t: f64) -> Self {
        HPoint { z, t }
    }

    /// The identity element (origin).
    pub fn origin(n: usize) -> Self {
        HPoint { z: vec![C64::new(0.0, 0.0); n], t: 0.0 }
    }

    /// Number of complex horizontal coordinates.
    pub fn n(&self) -> usize {
        self.z.len()
    }

    /// Build from interleaved real coordinates `(x_1, y_1, ..., x_n, y_n, t)`.
    pub fn from_reals(v: &[f64]) -> Self {
        assert!(v.len() % 2 == 1, "expected 2n+1 coordinates");
        let n = v.len() / 2;
        let z = (0..n).map(|a| C64::new(v[2 * a], v[2 * a + 1])).collect();
        HPoint { z, t: v[2 * n] }
    }

    /// Interleaved real coordinates `(x_1, y_1, ..., x_n, y_n, t)`.
    pub fn to_reals(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.n() + 1);
        for za in &self.z {
            v.push(za.re);
            v.push(za.im);
        }
        v.push(self.t);
        v
    }

    /// `|z|^2 = sum_a |z^a|^2`.
    pub fn z_norm_sq(&self) -> f64 {
        self.z.iter().map(|za| za.norm_sqr()).sum()
    }

    /// Group inverse `(-z, -t)`.
    pub fn inverse(&self) -> Self {
        HPoint { z: self.z.iter().map(|za| -za).collect(), t: -self.t }
    }
}

/// Group multiplication: `(z_p, t_p) . (z_q, t_q) = (z_p + z_q, t_p + t_q + 2 Im <z_p, z_q>)`
/// with `<z_p, z_q> = sum_a conj(z_p^a) z_q^a`.  Left translations by this law
/// preserve `Theta` exactly.
pub fn group_mul(p: &HPoint, q: &HPoint) -> HPoint {
    assert_eq!(p.n(), q.n());
    let z: Vec<C64> = p.z.iter().zip(&q.z).map(|(a, b)| a + b).collect();
    let twist: f64 = p.z.iter().zip(&q.z).map(|(a, b)| (a.conj() * b).im).sum();
    HPoint { z, t: p.t + q.t + 2.0 * twist }
}

/// Homogeneous gauge `rho_0(z,t) = (|z|^4 + t^2)^{1/4}`.
pub fn gauge_norm(p: &HPoint) -> f64 {
    let zz = p.z_norm_sq();
    (zz * zz + p.t * p.t).powf(0.25)
}

/// Left-invariant gauge distance `d(p, q) = rho_0(q^{-1} . p)`.
pub fn gauge_distance(p: &HPoint, q: &HPoint) -> f64 {
    gauge_norm(&group_mul(&q.inverse(), p))
}

/// Parabolic dilation `delta_lambda(z, t) = (lambda z, lambda^2 t)`.
pub fn dilate(p: &HPoint, lambda: f64) -> HPoint {
    HPoint { z: p.z.iter().map(|za| lambda * za).collect(), t: lambda * lambda * p.t }
}

/// CR inversion about the unit gauge sphere:
/// `theta(z, t) = (i z / conj(w), -t / |w|^2)` with `w = t + i |z|^2`.
///
/// This is an involution, satisfies `rho_0(theta(p)) = 1 / rho_0(p)`, and
/// pulls `Theta` back to `|w|^{-2} Theta`.  (The sign pattern is forced by
/// requiring a genuine CR map for the contact form above; see the conventions
/// report.)  Panics at the origin, where the inversion has its pole.
pub fn inversion(p: &HPoint) -> HPoint {
    let w = C64::new(p.t, p.z_norm_sq());
    let wn = w.norm_sqr();
    assert!(wn > 0.0, "inversion pole at the origin");
    let iw = C64::new(0.0, 1.0) / w.conj();
    HPoint { z: p.z.iter().map(|za| iw * za).collect(), t: -p.t / wn }
}

/// Siegel coordinate `w = t + i |z|^2` of a point.
pub fn siegel_w(p: &HPoint) -> C64 {
    C64::new(p.t, p.z_norm_sq())
}

/// A point of the unit sphere `S^{2n+1}` in `C^{n+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpherePoint {
    /// Complex coordinates, length `n + 1`, with `|zeta| = 1`.
    pub zeta: Vec<C64>,
}

impl SpherePoint {
    pub fn new(zeta: Vec<C64>) -> Self {
        SpherePoint { zeta }
    }

    /// `n` for a sphere `S^{2n+1}` embedded in `C^{n+1}`.
    pub fn n(&self) -> usize {
        self.zeta.len() - 1
    }

    pub fn norm(&self) -> f64 {
        self.zeta.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Renormalise onto the unit sphere.
    pub fn normalized(&self) -> Self {
        let r = self.norm();
        SpherePoint { zeta: self.zeta.iter().map(|c| c / r).collect() }
    }

    /// South pole `(0, ..., 0, -1)`.
    pub fn south(n: usize) -> Self {
        let mut zeta = vec![C64::new(0.0, 0.0); n + 1];
        zeta[n] = C64::new(-1.0, 0.0);
        SpherePoint { zeta }
    }

    pub fn antipode(&self) -> Self {
        SpherePoint { zeta: self.zeta.iter().map(|c| -c).collect() }
    }

    /// Hermitian pairing `sum_j s_j conj(y_j)`.
    pub fn pairing(&self, other: &SpherePoint) -> C64 {
        self.zeta.iter().zip(&other.zeta).map(|(a, b)| a * b.conj()).sum()
    }
}

/// Image of a Cayley chart: either a finite Heisenberg point or the point at
/// infinity (the chart pole itself maps there).
#[derive(Debug, Clone, PartialEq)]
pub enum CayleyImage {
    Finite(HPoint),
    Infinity,
}

impl CayleyImage {
    /// Unwrap a finite image, panicking at the pole.
    pub fn unwrap_finite(self) -> HPoint {
        match self {
            CayleyImage::Finite(p) => p,
            CayleyImage::Infinity => panic!("Cayley image at infinity"),
        }
    }
}

/// A unitary matrix `U` (rows) with `U y = -e_{n+1}`, used to move a chart
/// pole to the south pole.  Built from a complex Householder reflection
/// followed by a diagonal phase; the last row is always `-conj(y)`.
pub fn pole_unitary(y: &SpherePoint) -> Vec<Vec<C64>> {
    let m = y.zeta.len();
    let south = SpherePoint::south(m - 1);
    let mut v: Vec<C64> = y.zeta.clone();
    // phase of y_{n+1} (use 1 when the component vanishes)
    let ylast = y.zeta[m - 1];
    let phase = if ylast.norm() > 1e-300 { ylast / ylast.norm() } else { C64::new(1.0, 0.0) };
    // v = y + phase * e_{n+1}; reflection R = I - 2 v v* / (v* v) maps
    // y -> -phase * e_{n+1}; then rescale the last coordinate by conj(phase).
    v[m - 1] += phase;
    let vv: f64 = v.iter().map(|c| c.norm_sqr()).sum();
    let mut u = vec![vec![C64::new(0.0, 0.0); m]; m];
    if vv < 1e-300 {
        // y is already the south pole
        for (i, row) in u.iter_mut().enumerate() {
            row[i] = C64::new(1.0, 0.0);
        }
        return u;
    }
    for i in 0..m {
        for j in 0..m {
            let id = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            u[i][j] = id - 2.0 * v[i] * v[j].conj() / vv;
        }
    }
    // diagonal phase on the last coordinate
    for j in 0..m {
        u[m - 1][j] *= phase.conj();
    }
    // sanity: U y = -e_{n+1}
    debug_assert!({
        let im: Vec<C64> =
            u.iter().map(|row| row.iter().zip(&y.zeta).map(|(a, b)| a * b).sum()).collect();
        let diff: f64 = im
            .iter()
            .zip(&south.zeta)
            .map(|(a, b)| (a - b).norm())
            .sum();
        diff < 1e-10
    });
    u
}

fn apply_unitary(u: &[Vec<C64>], s: &SpherePoint) -> SpherePoint {
    let zeta = u
        .iter()
        .map(|row| row.iter().zip(&s.zeta).map(|(a, b)| a * b).sum())
        .collect();
    SpherePoint { zeta }
}

fn apply_unitary_adjoint(u: &[Vec<C64>], s: &SpherePoint) -> SpherePoint {
    let m = s.zeta.len();
    let mut zeta = vec![C64::new(0.0, 0.0); m];
    for (i, row) in u.iter().enumerate() {
        for (j, uij) in row.iter().enumerate() {
            zeta[j] += uij.conj() * s.zeta[i];
        }
    }
    SpherePoint { zeta }
}

/// South-pole Cayley chart `C: S^{2n+1} \ {south} -> H^n`:
/// `z_a = conj(zeta_a / (1 + zeta_{n+1}))`, `t = Re(i (1 - zeta_{n+1}) / (1 + zeta_{n+1}))`.
///
/// Pulls `Theta` back to `|1 + zeta_{n+1}|^{-2} theta_S` where
/// `theta_S = i sum_j (zeta^j dzbar^j - zbar^j dzeta^j)` is the round contact
/// form.  The conjugation on `z` matches the frame orientation chosen for
/// `Theta` (see the conventions report).
pub fn cayley_south(s: &SpherePoint) -> CayleyImage {
    let m = s.zeta.len();
    let last = s.zeta[m - 1];
    let denom = C64::new(1.0, 0.0) + last;
    if denom.norm() < 1e-14 {
        return CayleyImage::Infinity;
    }
    let z: Vec<C64> = s.zeta[..m - 1].iter().map(|za| (za / denom).conj()).collect();
    let w = C64::new(0.0, 1.0) * (C64::new(1.0, 0.0) - last) / denom;
    CayleyImage::Finite(HPoint { z, t: w.re })
}

/// Inverse of [`cayley_south`].
pub fn cayley_south_inv(p: &HPoint) -> SpherePoint {
    let w = siegel_w(p);
    let i = C64::new(0.0, 1.0);
    let last = (i - w) / (i + w);
    let denom = C64::new(1.0, 0.0) + last;
    let mut zeta: Vec<C64> = p.z.iter().map(|za| za.conj() * denom).collect();
    zeta.push(last);
    SpherePoint { zeta }
}

/// Cayley chart with pole `y`: `C_y = C_south . U_y` where `U_y` is
/// [`pole_unitary`].  `C_y(y) = Infinity`; the antipode `-y` maps to the
/// origin.  Satisfies `C_y^* Theta = H_y^{2/n} theta_S` with `H_y` given by
/// [`sphere_green`].
pub fn cayley(y: &SpherePoint, s: &SpherePoint) -> CayleyImage {
    let u = pole_unitary(y);
    cayley_south(&apply_unitary(&u, s))
}

/// Inverse of [`cayley`].
pub fn cayley_inv(y: &SpherePoint, p: &HPoint) -> SpherePoint {
    let u = pole_unitary(y);
    apply_unitary_adjoint(&u, &cayley_south_inv(p))
}

/// Conformal factor of the Cayley chart: `C_y^* Theta = lambda_y theta_S`
/// with `lambda_y(s) = |1 - <s, y>|^{-2}` where `<s, y> = sum_j s_j conj(y_j)`.
pub fn cayley_factor(y: &SpherePoint, s: &SpherePoint) -> f64 {
    let d = C64::new(1.0, 0.0) - s.pairing(y);
    1.0 / d.norm_sqr()
}

/// Green-type kernel of the CR sphere with pole `y`, normalised by the
/// contact identity `C_y^* Theta = H_y^{2/n} theta_S`:
/// `H_y(s) = |1 - <s, y>|^{-n}`.
pub fn sphere_green(y: &SpherePoint, s: &SpherePoint) -> f64 {
    let n = y.n() as f64;
    cayley_factor(y, s).powf(n / 2.0)
}

/// `b_n = 2 + 2/n`, the conformal exponent entering `D_theta = b_n Delta_b + R`.
pub fn b_n(n: usize) -> f64 {
    2.0 + 2.0 / n as f64
}

/// Volume density of `dV = Theta ^ (dTheta)^n` against Lebesgue measure
/// `dx dy dt`: `4^n n!`.
pub fn volume_density(n: usize) -> f64 {
    let mut f = 1.0;
    for k in 1..=n {
        f *= 4.0 * k as f64;
    }
    f
}

/// Coefficients of `Theta` at `p` on the real coordinate basis
/// `(dx_1, dy_1, ..., dx_n, dy_n, dt)`: `(2 y_a, -2 x_a, ..., 1)`.
pub fn theta_coeffs(p: &HPoint) -> Vec<f64> {
    let mut v = Vec::with_capacity(2 * p.n() + 1);
    for za in &p.z {
        v.push(2.0 * za.im);
        v.push(-2.0 * za.re);
    }
    v.push(1.0);
    v
}

/// Residual of left-invariance of `Theta` under translation by `p`, evaluated
/// at `q`: `max |(L_p^* Theta - Theta)(e_k)|` over coordinate directions.
/// The differential of a left translation is affine-explicit, so this is an
/// exact (non-numeric) evaluation.
pub fn theta_left_invariance_residual(p: &HPoint, q: &HPoint) -> f64 {
    // L_p(q) has z' = z_p + z_q, t' = t_p + t_q + 2 Im <z_p, z_q>;
    // dL_p maps (dz_q, dt_q) -> (dz_q, dt_q + 2 Im(conj(z_p) dz_q)).
    let pq = group_mul(p, q);
    let th_pq = theta_coeffs(&pq);
    let th_q = theta_coeffs(q);
    let n = p.n();
    let mut worst = 0.0f64;
    for k in 0..(2 * n + 1) {
        // pushforward of the k-th coordinate direction
        let mut dt_extra = 0.0;
        if k < 2 * n {
            let a = k / 2;
            let zp = p.z[a];
            // d/dx_a: Im(conj(z_p) * 1) = -y_p ; d/dy_a: Im(conj(z_p) * i) = x_p
            dt_extra = if k % 2 == 0 { -2.0 * zp.im } else { 2.0 * zp.re };
        }
        let val = if k == 2 * n { th_pq[2 * n] } else { th_pq[k] + th_pq[2 * n] * dt_extra };
        worst = worst.max((val - th_q[k]).abs());
    }
    worst
}
