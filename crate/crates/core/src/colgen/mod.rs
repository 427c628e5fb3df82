//! Column generation for the semi-infinite LP: solve the restricted LP, price
//! the most negative reduced cost over `U × Y`, append that point, repeat
//! until the duality gap closes.

mod pricing;

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

pub use pricing::{price, PricingConfig, PricingResult};

use crate::basis::MonomialBasis;
use crate::error::LpError;
use crate::grid::{expand_resolution, product_grid, GridPoint};
use crate::problem::ControlProblem;
use crate::lp::{
    evaluate_column, BasisSlot, DenseLu, DiscreteMeasure, DualCertificate, LpSession,
    RestrictedLP, SimplexTolerances,
};

/// Distance below which a priced point counts as already present.
pub const DUPLICATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ColGenConfig {
    /// Initial grid nodes per axis of `X`; one entry applies to all axes,
    /// and an empty list selects [`DEFAULT_INITIAL_NODES`].
    pub initial_resolution: Vec<usize>,
    pub pricing: PricingConfig,
    /// Relative gap tolerance: stop when `λ₀ − a ≤ gap_tol · max(1, |λ₀|)`.
    pub gap_tol: f64,
    pub max_iterations: usize,
    /// Iterations over which either `G` or the smallest gap seen must drop
    /// by at least 1e-12.
    pub stall_window: usize,
    pub lp: SimplexTolerances,
}

impl Default for ColGenConfig {
    fn default() -> Self {
        Self {
            initial_resolution: Vec::new(),
            pricing: PricingConfig::default(),
            gap_tol: 1e-6,
            max_iterations: 500,
            stall_window: 25,
            lp: SimplexTolerances::default(),
        }
    }
}

/// Default initial grid nodes per control axis and per state axis.
pub const DEFAULT_INITIAL_NODES: (usize, usize) = (7, 21);

impl ColGenConfig {
    /// Per-axis initial resolution on `X` in `(u, y)` order.
    pub fn initial_grid(&self, problem: &ControlProblem) -> Vec<usize> {
        let (n, m) = (problem.control_dim(), problem.state_dim());
        if self.initial_resolution.is_empty() {
            let mut res = vec![DEFAULT_INITIAL_NODES.0; n];
            res.resize(n + m, DEFAULT_INITIAL_NODES.1);
            res
        } else {
            expand_resolution(&self.initial_resolution, n + m)
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.initial_resolution.iter().chain(&self.pricing.resolution).any(|&r| r == 0) {
            return Err("grid resolutions must be positive".into());
        }
        if !(self.gap_tol > 0.0) {
            return Err(format!("gap tolerance must be positive, got {}", self.gap_tol));
        }
        if !(self.pricing.tolerance > 0.0) {
            return Err("pricing tolerance must be positive".into());
        }
        if self.max_iterations == 0 || self.stall_window == 0 || self.pricing.seeds == 0 {
            return Err("iteration limits and seed count must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ColGenStatus {
    Converged,
    Stalled,
    MaxIterations,
}

/// One pass of the loop; `objective` is `G^k`, `priced` is `a^k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    pub objective: f64,
    pub lambda0: f64,
    pub priced: f64,
    pub gap: f64,
    pub points: usize,
    pub support: usize,
    pub eta: f64,
    pub improvement_bound: f64,
    pub multimodal: bool,
}

#[derive(Debug, Clone)]
pub struct ColGenState {
    pub iteration: usize,
    pub status: ColGenStatus,
    pub history: Vec<IterationRecord>,
    pub measure: DiscreteMeasure,
    pub certificate: DualCertificate,
    pub objective: f64,
    pub basis_slots: Vec<BasisSlot>,
    /// Outcome of the most recent pricing call.
    pub last_price: Option<PricingResult>,
    session: LpSession,
}

impl ColGenState {
    pub fn lp(&self) -> &RestrictedLP {
        self.session.lp()
    }

    pub fn points(&self) -> &[GridPoint] {
        self.session.lp().points()
    }

    pub fn gap(&self) -> f64 {
        self.history.last().map_or(f64::INFINITY, |r| r.gap)
    }

    pub fn relative_gap(&self) -> f64 {
        self.gap() / self.certificate.lambda0.abs().max(1.0)
    }

    pub fn simplex_pivots(&self) -> usize {
        self.session.pivots()
    }

    /// Iteration log as comma-separated values.
    pub fn iteration_csv(&self) -> String {
        let mut out = String::from("k,G,lambda0,a,gap,points,support,eta,V,multimodal\n");
        for r in &self.history {
            let _ = writeln!(
                out,
                "{},{:.17e},{:.17e},{:.17e},{:.6e},{},{},{:.6e},{:.6e},{}",
                r.k,
                r.objective,
                r.lambda0,
                r.priced,
                r.gap,
                r.points,
                r.support,
                r.eta,
                r.improvement_bound,
                r.multimodal
            );
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum ColGenError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("column generation stalled at iteration {} with gap {:e}; try doubling the pricing resolution", .0.iteration, .0.gap())]
    Stalled(Box<ColGenState>),
    #[error("no convergence within {} iterations (gap {:e})", .0.iteration, .0.gap())]
    MaxIterations(Box<ColGenState>),
}

impl ColGenError {
    /// The partial run, when the loop itself ended abnormally.
    pub fn state(&self) -> Option<&ColGenState> {
        match self {
            Self::Stalled(s) | Self::MaxIterations(s) => Some(s),
            _ => None,
        }
    }
}

/// Runs column generation from the uniform initial grid.
pub fn run_colgen(basis: &MonomialBasis, cfg: &ColGenConfig) -> Result<ColGenState, ColGenError> {
    let initial = product_grid(basis.problem(), &cfg.initial_grid(basis.problem()));
    run_colgen_from(basis, cfg, initial)
}

/// Runs column generation from an explicit initial point set.
pub fn run_colgen_from(
    basis: &MonomialBasis,
    cfg: &ColGenConfig,
    initial: Vec<GridPoint>,
) -> Result<ColGenState, ColGenError> {
    cfg.validate().map_err(ColGenError::Config)?;
    let lp = RestrictedLP::assemble(basis, initial)?;
    let mut session = LpSession::new(lp, cfg.lp)?;
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut multimodal_count = 0usize;
    let mut k = 0usize;

    loop {
        let sol = session.solve()?;
        let support: Vec<GridPoint> = sol
            .measure
            .support
            .iter()
            .map(|&l| session.lp().points()[l].clone())
            .collect();
        let priced = price(basis, &sol.certificate, &cfg.pricing, &support);
        let lambda0 = sol.certificate.lambda0;
        let gap = lambda0 - priced.value;
        let (priced_cost, priced_col) = evaluate_column(basis, &priced.point);
        let diag = RegularityDiagnostics::compute(
            &basis_matrix(session.lp(), &sol.basis),
            &basic_weights(&sol.measure, &sol.basis),
            lambda0,
            priced.value,
            &priced_col,
            false,
        );
        if priced.multimodal {
            multimodal_count += 1;
        }
        let record = IterationRecord {
            k,
            objective: sol.objective,
            lambda0,
            priced: priced.value,
            gap,
            points: session.lp().len(),
            support: sol.measure.support.len(),
            eta: diag.eta,
            improvement_bound: diag.improvement_bound,
            multimodal: priced.multimodal,
        };
        log::debug!(
            "k={k} G={:.12} a={:.12} gap={gap:.3e} |Ω|={} eta={:.3e} V={:.3e}",
            record.objective,
            record.priced,
            record.points,
            record.eta,
            record.improvement_bound
        );
        history.push(record);

        let converged = gap <= cfg.gap_tol * lambda0.abs().max(1.0);
        let duplicate = session
            .lp()
            .points()
            .iter()
            .any(|p| p.max_distance(&priced.point) <= DUPLICATE_TOL);
        let best_gap = |upto: usize| history[..=upto].iter().map(|r| r.gap).fold(f64::INFINITY, f64::min);
        let flat = k >= cfg.stall_window && {
            let w = k - cfg.stall_window;
            best_gap(w) - best_gap(k) < 1e-12 && history[w].objective - history[k].objective < 1e-12
        };
        let stalled = !converged && (duplicate || flat);
        let exhausted = !converged && !stalled && k + 1 >= cfg.max_iterations;

        if converged || stalled || exhausted {
            if multimodal_count > 0 {
                log::warn!(
                    "pricing landscape was multimodal in {multimodal_count} of {} iterations",
                    k + 1
                );
            }
            let status = if converged {
                ColGenStatus::Converged
            } else if stalled {
                ColGenStatus::Stalled
            } else {
                ColGenStatus::MaxIterations
            };
            let state = ColGenState {
                iteration: k,
                status,
                history,
                measure: sol.measure,
                certificate: sol.certificate,
                objective: sol.objective,
                basis_slots: sol.basis,
                last_price: Some(priced),
                session,
            };
            return match status {
                ColGenStatus::Converged => Ok(state),
                ColGenStatus::Stalled => Err(ColGenError::Stalled(Box::new(state))),
                _ => Err(ColGenError::MaxIterations(Box::new(state))),
            };
        }
        let point = priced.point;
        session.add_point(point, priced_cost, priced_col);
        k += 1;
    }
}

/// Regularity of the optimal basic tuple and the one-step improvement bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityDiagnostics {
    /// Ratio of extreme singular values of `A(𝔛)`; infinite when singular.
    pub condition: f64,
    /// Smallest basic weight `γ_j`.
    pub eta: f64,
    /// Largest component of `A⁻¹ H(x̃)`.
    pub beta: f64,
    /// `(a − λ₀) · eta / beta`, non-positive whenever the gap is non-negative.
    pub improvement_bound: f64,
    pub regular: bool,
    /// The basis still holds a pinned artificial variable.
    pub degenerate: bool,
}

impl RegularityDiagnostics {
    /// `columns` are the `N + 1` basic columns `H(x_j)`, `weights` their
    /// values `γ_j`, `priced` the column `H(x̃)` of the priced point.
    pub fn compute(
        columns: &[Vec<f64>],
        weights: &[f64],
        lambda0: f64,
        a: f64,
        priced: &[f64],
        with_condition: bool,
    ) -> Self {
        let n = columns.len();
        let degenerate = weights.iter().any(|w| !(*w > 0.0));
        let eta = weights.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
        let eta = if n == 0 { 0.0 } else { eta };
        let flat: Vec<f64> = columns.iter().flatten().copied().collect();
        let lu = DenseLu::factor_columns(n, &flat, 1e-13);
        let condition = if with_condition {
            condition_number(n, &flat)
        } else if lu.is_some() {
            f64::NAN
        } else {
            f64::INFINITY
        };
        let Some(lu) = lu else {
            return Self {
                condition: f64::INFINITY,
                eta: 0.0,
                beta: f64::NAN,
                improvement_bound: 0.0,
                regular: false,
                degenerate: true,
            };
        };
        let d = lu.solve(priced);
        let beta = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let improvement_bound = if beta > 0.0 { (a - lambda0) * eta / beta } else { 0.0 };
        Self {
            condition,
            eta,
            beta,
            improvement_bound,
            regular: eta > 0.0 && !condition.is_infinite(),
            degenerate,
        }
    }
}

fn condition_number(n: usize, flat: &[f64]) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    let a = DMatrix::from_column_slice(n, n, flat);
    let sv = a.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= max * f64::EPSILON || min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn basis_matrix(lp: &RestrictedLP, slots: &[BasisSlot]) -> Vec<Vec<f64>> {
    let rows = lp.moments() + 1;
    slots
        .iter()
        .map(|s| match *s {
            BasisSlot::Point(j) => lp.column(j).to_vec(),
            BasisSlot::Artificial(r) => {
                let mut e = vec![0.0; rows];
                e[r] = 1.0;
                e
            }
        })
        .collect()
}

fn basic_weights(measure: &DiscreteMeasure, slots: &[BasisSlot]) -> Vec<f64> {
    slots
        .iter()
        .map(|s| match *s {
            BasisSlot::Point(j) => measure.weights[j],
            BasisSlot::Artificial(_) => 0.0,
        })
        .collect()
}

/// Diagnostics of the final basis against the last priced point.
pub fn diagnostics(basis: &MonomialBasis, state: &ColGenState) -> RegularityDiagnostics {
    let lp = state.lp();
    let price = state.last_price.as_ref();
    let (a, col) = match price {
        Some(p) => (p.value, evaluate_column(basis, &p.point).1),
        None => (state.certificate.lambda0, {
            let mut e = vec![0.0; lp.moments() + 1];
            e[0] = 1.0;
            e
        }),
    };
    RegularityDiagnostics::compute(
        &basis_matrix(lp, &state.basis_slots),
        &basic_weights(&state.measure, &state.basis_slots),
        state.certificate.lambda0,
        a,
        &col,
        true,
    )
}
