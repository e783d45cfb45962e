//! Computational toolkit for the flat model group `H^n = C^n x R` with its
//! standard contact form, the unit sphere chart, and quotient geometries:
//! exact frame calculus on truncated Taylor jets, nilmanifold quadrature,
//! a finite-difference Dirichlet solver aligned with the group flows,
//! Green-function orbit sums on covers, and mass extraction for spherical
//! space forms.

pub mod cli;
pub mod cover;
pub mod field;
pub mod heis;
pub mod jet;
pub mod mass;
pub mod nil;
pub mod ops;
pub mod solver;
