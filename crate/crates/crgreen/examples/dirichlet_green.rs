//! Discrete Green's function of the invariant Laplacian on a box: group-flow
//! stencil assembly, M-matrix structure, zero boundary trace, positivity,
//! pole symmetry, and the decay of gauge-annulus masses away from the pole.
//!
//! Run with: `cargo run --release --example dirichlet_green`

use crgreen::field::ScalarField;
use crgreen::heis::HPoint;
use crgreen::jet::Jet;
use crgreen::solver::{assemble, dirichlet_green, moser_decay, Grid, NodeKind};

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
    let grid = Grid::centered_box(1, h, 0.45, 0.21);
    let sys = assemble(&grid, &UnitField(1), false);
    println!(
        "grid {:?} ({} nodes, {} unknowns, M-matrix: {})",
        grid.dims(),
        grid.node_count(),
        sys.node_of_interior.len(),
        sys.m_matrix
    );

    let pole = vec![0i64, 0, 0];
    let g = dirichlet_green(&sys, &pole).unwrap();
    println!("pole strength 1/(cell volume) = {:.3e}", g.pole_strength);

    let mut boundary_max = 0.0f64;
    let mut interior_min = f64::INFINITY;
    for (lin, v) in g.values.iter().enumerate() {
        match grid.classify(&grid.unlinear(lin)) {
            NodeKind::Boundary => boundary_max = boundary_max.max(v.abs()),
            NodeKind::Interior => interior_min = interior_min.min(*v),
            _ => {}
        }
    }
    println!("max |G| on the boundary  {boundary_max:.1e}");
    println!("min G in the interior    {interior_min:.1e}");

    // symmetry: G_p(q) = G_q(p) for poles in the same lattice component
    let q = vec![2i64, 1, 0];
    let g_q = dirichlet_green(&sys, &q).unwrap();
    let forward = g.values[grid.linear(&q).unwrap()];
    let swapped = g_q.values[grid.linear(&pole).unwrap()];
    println!("G_p(q) = {forward:.10}, G_q(p) = {swapped:.10}, gap {:.1e}", (forward - swapped).abs());

    // annulus decay away from the pole
    println!("\ngauge annulus   sup G        L^b_n mass   sup/mass");
    for r in moser_decay(&g, &sys, &[(0.1, 0.15), (0.15, 0.2), (0.2, 0.3), (0.3, 0.4)]) {
        println!(
            "[{:.2}, {:.2})    {:.4e}   {:.4e}   {:.3}",
            r.r_lo, r.r_hi, r.sup, r.mass, r.fitted_c
        );
    }
}
