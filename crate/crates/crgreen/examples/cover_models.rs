//! Cover models of spherical CR manifolds: deck-invariant orbit sums of the
//! Green's kernel, the ratio v of the candidate minimal Green's function to
//! the normalized pullback, and the integrability exponent s(M) on the
//! dilation quotient.
//!
//! Run with: `cargo run --release --example cover_models`

use crgreen::cover::{s_exponent, CoverModel, LensAction};
use crgreen::heis::{gauge_norm, HPoint, SpherePoint};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_sphere<R: Rng>(n: usize, rng: &mut R) -> SpherePoint {
    let zeta: Vec<C64> =
        (0..=n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    SpherePoint::new(zeta).normalized()
}

fn random_chart<R: Rng>(n: usize, rng: &mut R) -> HPoint {
    loop {
        let z: Vec<C64> = (0..n)
            .map(|_| C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
            .collect();
        let p = HPoint { z, t: rng.gen_range(-3.0..3.0) };
        if gauge_norm(&p) > 0.4 {
            return p;
        }
    }
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let models = [
        CoverModel::SphereTrivial { pole: random_sphere(1, &mut rng) },
        CoverModel::Lens { pole: random_sphere(1, &mut rng), action: LensAction::standard(3, 1) },
        CoverModel::HeisenbergHopf { n: 1, pole: random_chart(1, &mut rng), lambda: 2.0 },
    ];

    for model in &models {
        println!("== {:?} regime", model.regime());
        let mut worst_deck = 0.0f64;
        let mut v_min = f64::INFINITY;
        let mut v_max = f64::NEG_INFINITY;
        for _ in 0..50 {
            let q = random_chart(1, &mut rng);
            worst_deck = worst_deck.max(model.deck_residual(&q).unwrap());
            let (v, _) = model.v_ratio(&q).unwrap();
            v_min = v_min.min(v);
            v_max = v_max.max(v);
        }
        println!("  worst deck-invariance residual {worst_deck:.2e}");
        println!("  v ratio over 50 points: [{v_min:.6}, {v_max:.6}]");
        if let CoverModel::HeisenbergHopf { .. } = model {
            let q = random_chart(1, &mut rng);
            println!(
                "  harmonicity of the v numerator at a sample point: {:.2e}",
                model.v_harmonicity_residual(&q).unwrap()
            );
        }
    }

    // integrability exponent of the Green's function on the dilation quotient
    let hopf = &models[2];
    let report = s_exponent(hopf, &[0.0, 0.25, 0.5, 0.75, 1.0, 1.05], 4, 16).unwrap();
    println!("\ns(M) estimate: {} (bracket {:?})", report.estimate, report.bracket);
    for p in &report.probes {
        println!(
            "  s = {:<5} convergent: {}  outer ratios {:?}",
            p.s,
            p.convergent,
            p.outer_ratios.iter().map(|r| (r * 1e3).round() / 1e3).collect::<Vec<_>>()
        );
    }
}
