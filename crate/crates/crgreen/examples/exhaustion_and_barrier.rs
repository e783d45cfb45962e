//! Exhaustion construction of the global Green's function: Dirichlet solves
//! on nested boxes increase monotonically and stay below the calibrated
//! kernel barrier `c(1) rho^{-2}`; near the pole the discrete Green's
//! function tracks the kernel profile.
//!
//! Run with: `cargo run --release --example exhaustion_and_barrier`

use crgreen::field::{GaugePowerField, ScalarField};
use crgreen::heis::HPoint;
use crgreen::jet::Jet;
use crgreen::solver::{assemble, calibrate_c, exhaustion_green, near_pole_profile, Grid};

struct UnitField(usize);

impl ScalarField for UnitField {
    fn n(&self) -> usize {
        self.0
    }
    fn jet(&self, _p: &HPoint) -> Jet {
        Jet::constant_re(2 * self.0 + 1, 1.0)
    }
}

fn main() {
    let h = 0.05;
    let (c1, _) = calibrate_c(1, 1.0);
    println!("calibrated c(1) = {c1:.10}  (1/(32 pi) = {:.10})", 1.0 / (32.0 * std::f64::consts::PI));

    let grids: Vec<Grid> =
        [0.25, 0.35, 0.45].iter().map(|&half| Grid::centered_box(1, h, half, half * half)).collect();
    let barrier = GaugePowerField::kernel(HPoint::origin(1), c1);
    let pole = vec![0i64, 0, 0];
    // the barrier is checked outside a 6-cell layer around the pole, where
    // the lattice kernel profile has settled onto the continuum one
    let (final_g, steps) =
        exhaustion_green(&grids, &UnitField(1), &pole, Some(&barrier), 6.0 * h).unwrap();

    println!("\nbox half-width   sup increment   barrier respected");
    for s in &steps {
        println!("{:<14.2}   {:<13.4e}   {}", s.half_z, s.sup_increment, s.barrier_ok);
    }
    println!("final iterate: {} nodes", final_g.values.len());

    // near-pole profile on a finer grid: worst relative gap to c(1) rho^{-2}
    // over the gauge window [0.2, 0.3]
    let fine = Grid::centered_box(1, 0.025, 0.45, 0.21);
    let sys = assemble(&fine, &UnitField(1), false);
    let worst = near_pole_profile(&sys, &pole, c1, 0.2, 0.3).unwrap();
    println!("\nnear-pole kernel ratio at h = 0.025: worst relative gap {worst:.4}");
}
