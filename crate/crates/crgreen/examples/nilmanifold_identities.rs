//! Integrated identities on the flat compact quotient of the Heisenberg
//! group: the identity linking the Reeb energy, the sublaplacian energy, and
//! the Paneitz pairing; nonnegativity of the Paneitz energy; and the
//! scale-invariant conformal energy quotient.
//!
//! Run with: `cargo run --release --example nilmanifold_identities`

use crgreen::nil::{
    standard_basis, CharacterField, CharacterSum, IdentityGrams, NilWorkspace, Nilmanifold,
};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let n = 2;
    let nm = Nilmanifold::standard(n);
    println!("quotient grid: n = {n}, {} nodes", nm.node_count());

    let ws = NilWorkspace::build(nm, standard_basis(n));
    let grams = IdentityGrams::from_workspace(&ws);
    println!("basis size: {} characters (Gram matrices precomputed)", ws.basis.len());

    let mut rng = ChaCha8Rng::seed_from_u64(21);
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
    println!("200 random fields:");
    println!("  worst relative identity residual  {worst_ibf:.3e}");
    println!("  minimum Paneitz energy            {min_paneitz:.3e}");
    println!("  minimum Reeb-energy margin        {min_reeb:.3e}");

    // conformal energy quotient of a positive test factor on the torsion-free
    // flat quotient (n = 1 grid keeps this cheap)
    let nm1 = Nilmanifold::standard(1);
    let zero = CharacterField::constant_one(1).imag_part(); // identically zero curvature
    let theta = CharacterField::theta(1, &[C64::new(0.2, 0.7)]);
    let u = CharacterSum { parts: vec![(1.0, CharacterField::constant_one(1)), (0.1, theta)] };
    let q = nm1.yamabe_quotient(&u, &zero).unwrap();
    println!("\nconformal energy quotient of 1 + 0.1*theta on the n = 1 quotient: {q:.6}");
}
