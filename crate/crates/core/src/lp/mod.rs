//! The finite restricted LP over a point set `Ω ⊂ U × Y`:
//!
//! ```text
//! min Σ g(x_l) γ_l   s.t.  γ ≥ 0,  Σ γ_l = 1,  Σ h_i(x_l) γ_l = 0  (i = 1..N)
//! ```
//!
//! and its dual `max λ₀ s.t. g(x_l) + Σ h_i(x_l) λ_i ≥ λ₀`.

mod inverse;
mod lu;
mod mps;
mod oracle;
mod simplex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use mps::write_mps;
pub use oracle::{dense_grid_oracle, dense_grid_oracle_capped, OracleResult, DEFAULT_GRID_CAP};
pub use simplex::SimplexTolerances;

pub(crate) use lu::DenseLu;
use simplex::{Simplex, Var};

use crate::basis::MonomialBasis;
use crate::error::LpError;
use crate::grid::GridPoint;

/// Columns `H(x_l) = (1, h_1(x_l), …, h_N(x_l))` and costs `g(x_l)`.
#[derive(Debug, Clone)]
pub struct RestrictedLP {
    points: Vec<GridPoint>,
    costs: Vec<f64>,
    columns: Vec<Vec<f64>>,
    moments: usize,
}

impl RestrictedLP {
    /// Evaluates `g` and `H` at every point (parallel map).
    pub fn assemble(basis: &MonomialBasis, points: Vec<GridPoint>) -> Result<Self, LpError> {
        let problem = basis.problem();
        for p in &points {
            problem.control_box().check(&p.u, "u")?;
            problem.state_box().check(&p.y, "y")?;
        }
        let evaluated: Vec<(f64, Vec<f64>)> = points
            .par_iter()
            .map(|p| evaluate_column(basis, p))
            .collect();
        let (costs, columns) = evaluated.into_iter().unzip();
        Ok(Self {
            points,
            costs,
            columns,
            moments: basis.len(),
        })
    }

    /// Builds an LP directly from costs and moment values `h(x_l)` (without
    /// the leading 1), for points that live outside any basis.
    pub fn from_moments(costs: Vec<f64>, moments: Vec<Vec<f64>>) -> Result<Self, LpError> {
        let n = moments.first().map_or(0, Vec::len);
        if moments.iter().any(|c| c.len() != n) || costs.len() != moments.len() {
            return Err(LpError::Internal("ragged moment columns".into()));
        }
        let columns = moments
            .into_iter()
            .map(|h| std::iter::once(1.0).chain(h).collect())
            .collect();
        Ok(Self {
            points: Vec::new(),
            costs,
            columns,
            moments: n,
        })
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    /// Number of moment rows `N`; the LP has `N + 1` rows.
    pub fn moments(&self) -> usize {
        self.moments
    }

    pub fn points(&self) -> &[GridPoint] {
        &self.points
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn column(&self, l: usize) -> &[f64] {
        &self.columns[l]
    }

    pub fn rhs(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.moments + 1];
        b[0] = 1.0;
        b
    }

    /// Appends one point; returns its column index.
    pub fn push(&mut self, point: Option<GridPoint>, cost: f64, column: Vec<f64>) -> usize {
        debug_assert_eq!(column.len(), self.moments + 1);
        if let Some(p) = point {
            self.points.push(p);
        }
        self.costs.push(cost);
        self.columns.push(column);
        self.costs.len() - 1
    }

    /// Reduced cost `g(x_l) + Σ h_i(x_l) λ_i − λ₀`.
    pub fn reduced_cost(&self, l: usize, dual: &DualCertificate) -> f64 {
        let col = &self.columns[l];
        self.costs[l] + col[1..].iter().zip(&dual.lambda).map(|(h, c)| h * c).sum::<f64>()
            - dual.lambda0
    }
}

/// `(g(x), H(x))` at one point.
pub fn evaluate_column(basis: &MonomialBasis, p: &GridPoint) -> (f64, Vec<f64>) {
    let mut col = vec![0.0; basis.len() + 1];
    col[0] = 1.0;
    basis.h_all(&p.u, &p.y, &mut col[1..]);
    (basis.problem().cost_unchecked(&p.u, &p.y), col)
}

/// Nonnegative weights on the LP's points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub weights: Vec<f64>,
    pub support: Vec<usize>,
}

impl DiscreteMeasure {
    pub fn from_weights(weights: Vec<f64>) -> Self {
        let support = weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(i, _)| i)
            .collect();
        Self { weights, support }
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Index of the largest weight (first on ties).
    pub fn heaviest(&self) -> Option<usize> {
        self.support.iter().copied().fold(None, |best, i| match best {
            Some(b) if self.weights[b] >= self.weights[i] => Some(b),
            _ => Some(i),
        })
    }

    /// Largest `|Σ_l h_i(x_l) γ_l|` over the moment rows.
    pub fn moment_residual(&self, lp: &RestrictedLP) -> f64 {
        (1..=lp.moments())
            .map(|i| {
                self.support
                    .iter()
                    .map(|&l| lp.column(l)[i] * self.weights[l])
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Dual solution `(λ₀, λ₁ … λ_N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    pub lambda0: f64,
    pub lambda: Vec<f64>,
}

impl DualCertificate {
    /// `r(x) = g(x) + Σ h_i(x) λ_i`.
    pub fn reduced_value(&self, cost: f64, h: &[f64]) -> f64 {
        cost + h.iter().zip(&self.lambda).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Basic variable of an optimal basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisSlot {
    Point(usize),
    /// Artificial variable of the given row, pinned at zero.
    Artificial(usize),
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub measure: DiscreteMeasure,
    pub certificate: DualCertificate,
    pub objective: f64,
    pub basis: Vec<BasisSlot>,
}

/// A restricted LP together with a warm-startable simplex state. Moment rows
/// are scaled to unit max-norm over the initial columns.
#[derive(Debug, Clone)]
pub struct LpSession {
    lp: RestrictedLP,
    row_scale: Vec<f64>,
    simplex: Simplex,
}

impl LpSession {
    pub fn new(lp: RestrictedLP, tol: SimplexTolerances) -> Result<Self, LpError> {
        if lp.is_empty() {
            return Err(LpError::TooFewPoints {
                needed: 1,
                got: 0,
            });
        }
        let rows = lp.moments() + 1;
        let mut row_scale = vec![1.0; rows];
        for (i, s) in row_scale.iter_mut().enumerate().skip(1) {
            let max = lp.columns.iter().map(|c| c[i].abs()).fold(0.0, f64::max);
            if max > 0.0 {
                *s = 1.0 / max;
            }
        }
        let mut simplex = Simplex::new(lp.rhs(), tol);
        for l in 0..lp.len() {
            let scaled = scale(&lp.columns[l], &row_scale);
            simplex.add_column(&scaled, lp.costs[l]);
        }
        Ok(Self {
            lp,
            row_scale,
            simplex,
        })
    }

    pub fn lp(&self) -> &RestrictedLP {
        &self.lp
    }

    pub fn pivots(&self) -> usize {
        self.simplex.pivots
    }

    pub fn add_point(&mut self, point: GridPoint, cost: f64, column: Vec<f64>) -> usize {
        let scaled = scale(&column, &self.row_scale);
        self.simplex.add_column(&scaled, cost);
        self.lp.push(Some(point), cost, column)
    }

    pub fn solve(&mut self) -> Result<LpSolution, LpError> {
        let sol = match self.simplex.solve() {
            Err(LpError::Internal(msg)) => {
                log::warn!("warm-started simplex failed ({msg}); solving from scratch");
                self.simplex.reset();
                self.simplex.solve()?
            }
            other => other?,
        };
        let certificate = DualCertificate {
            lambda0: sol.duals[0],
            lambda: (1..sol.duals.len())
                .map(|i| -sol.duals[i] * self.row_scale[i])
                .collect(),
        };
        let basis = sol
            .basis
            .iter()
            .map(|v| match *v {
                Var::Column(j) => BasisSlot::Point(j),
                Var::Artificial(r) => BasisSlot::Artificial(r),
            })
            .collect();
        Ok(LpSolution {
            measure: DiscreteMeasure::from_weights(sol.primal),
            certificate,
            objective: sol.objective,
            basis,
        })
    }
}

fn scale(col: &[f64], s: &[f64]) -> Vec<f64> {
    col.iter().zip(s).map(|(a, b)| a * b).collect()
}

/// Solves the restricted LP to a basic optimal solution and its dual.
pub fn solve_restricted_lp(
    lp: &RestrictedLP,
) -> Result<(DiscreteMeasure, DualCertificate, f64), LpError> {
    let sol = LpSession::new(lp.clone(), SimplexTolerances::default())?.solve()?;
    Ok((sol.measure, sol.certificate, sol.objective))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_example() {
        let lp = RestrictedLP::from_moments(vec![0.0, 2.0], vec![vec![1.0], vec![-1.0]]).unwrap();
        let (measure, dual, g) = solve_restricted_lp(&lp).unwrap();
        assert!((measure.weights[0] - 0.5).abs() < 1e-12);
        assert!((measure.weights[1] - 0.5).abs() < 1e-12);
        assert!((g - 1.0).abs() < 1e-12);
        assert!((dual.lambda0 - 1.0).abs() < 1e-12);
        assert!((dual.lambda[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_point_mass() {
        let lp = RestrictedLP::from_moments(vec![5.0], vec![vec![0.0, 0.0, 0.0]]).unwrap();
        let (measure, dual, g) = solve_restricted_lp(&lp).unwrap();
        assert_eq!(measure.weights, vec![1.0]);
        assert_eq!(measure.support, vec![0]);
        assert_eq!(g, 5.0);
        assert_eq!(dual.lambda0, 5.0);
    }

    #[test]
    fn infeasible_reports_row() {
        // every column has h_1 > 0
        let lp = RestrictedLP::from_moments(vec![0.0, 1.0], vec![vec![1.0, 0.0], vec![2.0, 0.0]])
            .unwrap();
        match solve_restricted_lp(&lp).unwrap_err() {
            LpError::Infeasible { row, residual } => {
                assert_eq!(row, 1);
                assert!(residual > 1e-8);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_lp_is_rejected() {
        let lp = RestrictedLP::from_moments(vec![], vec![]).unwrap();
        assert!(matches!(
            solve_restricted_lp(&lp),
            Err(LpError::TooFewPoints { .. })
        ));
    }
}
