//! Worked pricing and column-generation examples on the pendulum.

use periodic_silp::basis::{build_basis, BasisMode};
use periodic_silp::colgen::{price, run_colgen, ColGenConfig, PricingConfig};
use periodic_silp::grid::{product_grid, GridPoint};
use periodic_silp::lp::{evaluate_column, DualCertificate};
use periodic_silp::problem::pendulum;
use rayon::prelude::*;

#[test]
fn zero_dual_prices_the_minimum_running_cost() {
    let b = build_basis(&pendulum(), BasisMode::Tensor(2), true).unwrap();
    let dual = DualCertificate {
        lambda0: 0.0,
        lambda: vec![0.0; b.len()],
    };
    let r = price(&b, &dual, &PricingConfig::default(), &[]);
    assert!((r.value + 2.89).abs() <= 1e-12);
    assert!(r.point.u[0].abs() <= 1e-12, "{:?}", r.point);
    // r does not depend on y2 here; the tie goes to the first grid point
    assert_eq!(r.point.y, vec![-1.7, -4.0]);
}

#[test]
fn converged_degree_two_dual_survives_a_fine_scan() {
    let b = build_basis(&pendulum(), BasisMode::Tensor(2), true).unwrap();
    let cfg = ColGenConfig::default();
    let s = run_colgen(&b, &cfg).unwrap();
    let l0 = s.certificate.lambda0;
    let tol = cfg.gap_tol * l0.abs().max(1.0) + cfg.pricing.tolerance;
    let last = s.last_price.as_ref().unwrap();
    assert!(l0 - last.value <= tol);

    // independent brute-force scan of r on 201^3 nodes
    let grid = product_grid(&pendulum(), &[201]);
    let brute = grid
        .par_iter()
        .map(|p: &GridPoint| {
            let (g, h) = evaluate_column(&b, p);
            s.certificate.reduced_value(g, &h[1..])
        })
        .reduce(|| f64::INFINITY, f64::min);
    assert!(brute - l0 >= -tol, "brute {brute} lambda0 {l0}");
    // the polished pricing value is at least as good as the scan
    assert!(last.value <= brute + cfg.pricing.tolerance);
}
