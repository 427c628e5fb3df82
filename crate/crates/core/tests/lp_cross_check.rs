//! The restricted LP solved by the built-in simplex against an independent
//! solver reading the exported MPS file.

use minilp::MpsFile;
use minilp::OptimizationDirection;
use periodic_silp::basis::{build_basis, BasisMode};
use periodic_silp::grid::product_grid;
use periodic_silp::lp::{dense_grid_oracle, solve_restricted_lp, write_mps, RestrictedLP};
use periodic_silp::problem::pendulum;

fn minilp_objective(mps: &str) -> f64 {
    let file = MpsFile::parse(mps.as_bytes(), OptimizationDirection::Minimize).expect("valid MPS");
    file.problem.solve().expect("solvable").objective()
}

#[test]
fn pendulum_degree_two_matches_independent_solver() {
    let p = pendulum();
    let b = build_basis(&p, BasisMode::Tensor(2), true).unwrap();
    let lp = RestrictedLP::assemble(&b, product_grid(&p, &[9])).unwrap();
    let (measure, dual, g) = solve_restricted_lp(&lp).unwrap();
    let reference = minilp_objective(&write_mps(&lp, "PENDULUM_T2_9"));
    assert!((g - reference).abs() <= 1e-7, "simplex {g} vs reference {reference}");
    assert!((g - dual.lambda0).abs() <= 1e-8);
    assert!(measure.support.len() <= b.len() + 1);
    assert!(measure.moment_residual(&lp) <= 1e-9);
    for l in 0..lp.len() {
        assert!(lp.reduced_cost(l, &dual) >= -1e-8);
    }
    for &l in &measure.support {
        assert!(lp.reduced_cost(l, &dual) <= 1e-8);
    }
}

#[test]
fn raw_monomials_match_independent_solver() {
    let p = pendulum();
    let b = build_basis(&p, BasisMode::Tensor(2), false).unwrap();
    let lp = RestrictedLP::assemble(&b, product_grid(&p, &[9])).unwrap();
    let (_, _, g) = solve_restricted_lp(&lp).unwrap();
    let reference = minilp_objective(&write_mps(&lp, "PENDULUM_T2_RAW"));
    assert!((g - reference).abs() <= 1e-7, "simplex {g} vs reference {reference}");
}

#[test]
fn oracle_refinement_is_monotone() {
    let b = build_basis(&pendulum(), BasisMode::Tensor(2), true).unwrap();
    let g21 = dense_grid_oracle(&b, &[21]).unwrap().objective;
    let g41 = dense_grid_oracle(&b, &[41]).unwrap().objective;
    assert!(g41 <= g21 + 1e-9, "{g41} > {g21}");
}
