//! Forward-mode jet calculus on the Heisenberg group: left-invariant frames,
//! their bracket relations, the pointwise Bochner identity, and the conformal
//! covariance of the invariant Laplacian, all evaluated on random polynomial
//! fields.
//!
//! Run with: `cargo run --release --example jets_and_frames`

use crgreen::field::{PolyField, ScalarField};
use crgreen::heis::HPoint;
use crgreen::jet::Jet;
use crgreen::ops::{
    bochner_residual, cr_laplacian_flat, cr_laplacian_rescaled, frame_x, frame_y, reeb,
    sublaplacian,
};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_point<R: Rng>(n: usize, rng: &mut R) -> HPoint {
    let z: Vec<C64> =
        (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    HPoint { z, t: rng.gen_range(-1.0..1.0) }
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    for n in 1..=2usize {
        println!("== complex dimension n = {n}");
        let f = PolyField::random(n, 4, &mut rng);
        let p = random_point(n, &mut rng);
        let j = f.jet(&p);

        // bracket closure: [X_a, Y_a] = -4 T
        let mut worst_bracket = 0.0f64;
        for a in 0..n {
            let xy = frame_y(&frame_x(&j, &p, a), &p, a).value_re();
            let yx = frame_x(&frame_y(&j, &p, a), &p, a).value_re();
            worst_bracket = worst_bracket.max((xy - yx + 4.0 * reeb(&j).value_re()).abs());
        }
        println!("  bracket residual |[X,Y]f + 4Tf|   {worst_bracket:.3e}");
        println!("  sublaplacian at sample point      {:.6}", sublaplacian(&j, &p).value_re());

        // pointwise Bochner identity on 20 random fields
        let mut worst_bochner = 0.0f64;
        for _ in 0..20 {
            let g = PolyField::random(n, 4, &mut rng);
            let q = random_point(n, &mut rng);
            worst_bochner = worst_bochner.max(bochner_residual(&g.jet(&q), &q));
        }
        println!("  worst Bochner residual (20 fields) {worst_bochner:.3e}");

        // conformal covariance: D_Theta(u f) = u^{1+2/n} D_theta f with the
        // rescaled operator evaluated through its intrinsic decomposition
        let mut worst_cov = 0.0f64;
        for _ in 0..20 {
            let w = PolyField::random(n, 3, &mut rng);
            let g = PolyField::random(n, 4, &mut rng);
            let q = random_point(n, &mut rng);
            let jw = w.jet(&q);
            let ju = jw.mul(&jw).add(&Jet::constant_re(jw.dim, 1.0));
            let jg = g.jet(&q);
            let lhs = cr_laplacian_flat(&ju.mul(&jg), &q).value_re();
            let rhs =
                ju.value_re().powf(1.0 + 2.0 / n as f64) * cr_laplacian_rescaled(&ju, &jg, &q);
            worst_cov = worst_cov.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
        }
        println!("  worst covariance mismatch (20 pairs) {worst_cov:.3e}");
    }
}
