//! Brute-force instantiation of the restricted LP on a dense uniform grid.

use super::{LpSession, RestrictedLP, SimplexTolerances};
use crate::basis::MonomialBasis;
use crate::error::LpError;
use crate::grid::{grid_size, product_grid};
use crate::lp::{DiscreteMeasure, DualCertificate};

pub const DEFAULT_GRID_CAP: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub lp: RestrictedLP,
    pub measure: DiscreteMeasure,
    pub certificate: DualCertificate,
    pub objective: f64,
}

pub fn dense_grid_oracle(basis: &MonomialBasis, resolution: &[usize]) -> Result<OracleResult, LpError> {
    dense_grid_oracle_capped(basis, resolution, DEFAULT_GRID_CAP)
}

pub fn dense_grid_oracle_capped(
    basis: &MonomialBasis,
    resolution: &[usize],
    cap: usize,
) -> Result<OracleResult, LpError> {
    let problem = basis.problem();
    let size = grid_size(problem, resolution);
    if size > cap as u128 {
        return Err(LpError::GridTooLarge {
            size: size.min(usize::MAX as u128) as usize,
            cap,
        });
    }
    let lp = RestrictedLP::assemble(basis, product_grid(problem, resolution))?;
    let mut session = LpSession::new(lp, SimplexTolerances::default())?;
    let sol = session.solve()?;
    Ok(OracleResult {
        lp: session.lp().clone(),
        measure: sol.measure,
        certificate: sol.certificate,
        objective: sol.objective,
    })
}
