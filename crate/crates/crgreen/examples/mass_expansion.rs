//! CR mass of compact quotients: the chart-at-infinity function h, the
//! Richardson fit of its expansion, the closed-form orbit-sum oracle, and the
//! positivity verdict with its uncertainty gate.
//!
//! Run with: `cargo run --release --example mass_expansion`

use crgreen::cover::{CoverModel, LensAction};
use crgreen::heis::SpherePoint;
use crgreen::mass::{mass_report, MassFitConfig};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_sphere<R: Rng>(n: usize, rng: &mut R) -> SpherePoint {
    let zeta: Vec<C64> =
        (0..=n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    SpherePoint::new(zeta).normalized()
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let config = MassFitConfig::default();

    for (k, n) in [(2u32, 1usize), (3, 1), (2, 2), (3, 2)] {
        let model = CoverModel::Lens {
            pole: random_sphere(n, &mut rng),
            action: LensAction::standard(k, n),
        };
        let report = mass_report(&model, &config).unwrap();
        println!("== {}", report.model);
        println!("  fitted A_b       {:.12}", report.a_b);
        println!("  closed-form A_b  {:.12}", report.closed_form);
        println!("  uncertainty      {:.2e}", report.uncertainty);
        println!(
            "  lower-order coefficients (must vanish): {:?}",
            report.lower_coeffs.iter().map(|c| format!("{c:.1e}")).collect::<Vec<_>>()
        );
        match report.remainder_slope {
            Some(s) => println!("  remainder decay exponent {s:.2} (expansion order {})", 2 * n + 1),
            None => println!("  remainder at machine zero (exact two-term expansion)"),
        }
        println!(
            "  boundary lower bound m L^2n = {:.6} at L = {}",
            report.boundary_bound, report.boundary_radius
        );
        println!("  verdict: {:?}\n", report.verdict);
    }

    // the trivial model has zero mass
    let sphere = CoverModel::SphereTrivial { pole: random_sphere(1, &mut rng) };
    let report = mass_report(&sphere, &config).unwrap();
    println!("== {}", report.model);
    println!("  fitted A_b {:.2e}, verdict {:?}", report.a_b, report.verdict);
}
