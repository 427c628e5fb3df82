//! Degree and oracle-resolution sweeps.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{build_basis, BasisMode};
use crate::colgen::{run_colgen, ColGenConfig, ColGenError, ColGenStatus};
use crate::error::{BasisError, LpError};
use crate::grid::expand_resolution;
use crate::lp::dense_grid_oracle;
use crate::problem::ControlProblem;

/// Which family of basis is swept over `J`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Tensor,
    TotalDegree,
}

impl BasisKind {
    pub fn mode(self, j: u32) -> BasisMode {
        match self {
            BasisKind::Tensor => BasisMode::Tensor(j),
            BasisKind::TotalDegree => BasisMode::TotalDegree(j),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    /// Degree `J` or points per axis.
    pub parameter: usize,
    pub n: usize,
    pub g_final: f64,
    pub gap: f64,
    pub iterations: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter_name: String,
    pub entries: Vec<SweepEntry>,
    /// Consecutive pairs `(i, i+1)` breaking the expected ordering by more
    /// than the slack.
    pub violations: Vec<(usize, usize)>,
    pub slack: Vec<f64>,
}

impl SweepResult {
    pub fn ordering_holds(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{},N,G_final,gap,iterations,wall_seconds\n", self.parameter_name);
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{:.17e},{:.6e},{},{:.3}",
                e.parameter, e.n, e.g_final, e.gap, e.iterations, e.wall_seconds
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{} = {:>3}  N = {:>4}  G = {:+.10}  gap = {:.2e}  iterations = {}",
                self.parameter_name, e.parameter, e.n, e.g_final, e.gap, e.iterations
            );
        }
        if self.ordering_holds() {
            out.push_str("ordering holds within slack\n");
        } else {
            for (a, b) in &self.violations {
                let _ = writeln!(
                    out,
                    "ordering violated between {} = {} and {} = {}",
                    self.parameter_name, self.entries[*a].parameter, self.parameter_name, self.entries[*b].parameter
                );
            }
        }
        out
    }
}

#[derive(Debug, Error)]
#[error("sweep aborted at {parameter}: {source}")]
pub struct SweepError {
    pub parameter: usize,
    /// Entries completed before the failure.
    pub partial: SweepResult,
    #[source]
    pub source: SweepFailure,
}

#[derive(Debug, Error)]
pub enum SweepFailure {
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    ColGen(#[from] ColGenError),
    #[error("resolutions must be strictly increasing")]
    Order,
}

/// Slack for comparing two solver objectives near `g`:
/// `2 (ε_gap · max(1, |g|) + ε_price)`.
pub fn degree_slack(cfg: &ColGenConfig, g: f64) -> f64 {
    2.0 * (cfg.gap_tol * g.abs().max(1.0) + cfg.pricing.tolerance)
}

/// Runs column generation for each degree in order; `G` must not decrease
/// with `J`.
pub fn sweep_degree(
    problem: &ControlProblem,
    degrees: &[u32],
    kind: BasisKind,
    scaling: bool,
    cfg: &ColGenConfig,
) -> Result<SweepResult, SweepError> {
    let mut sorted = degrees.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut result = SweepResult {
        parameter_name: "J".into(),
        entries: Vec::new(),
        violations: Vec::new(),
        slack: Vec::new(),
    };
    for &j in &sorted {
        let start = Instant::now();
        let run = build_basis(problem, kind.mode(j), scaling)
            .map_err(SweepFailure::from)
            .and_then(|b| {
                let n = b.len();
                run_colgen(&b, cfg).map(|s| (n, s)).map_err(SweepFailure::from)
            });
        let (n, state) = match run {
            Ok(v) => v,
            Err(source) => {
                return Err(SweepError {
                    parameter: j as usize,
                    partial: result,
                    source,
                })
            }
        };
        debug_assert_eq!(state.status, ColGenStatus::Converged);
        result.entries.push(SweepEntry {
            parameter: j as usize,
            n,
            g_final: state.objective,
            gap: state.gap(),
            iterations: state.iteration,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    for i in 1..result.entries.len() {
        let (a, b) = (&result.entries[i - 1], &result.entries[i]);
        let slack = degree_slack(cfg, a.g_final) + degree_slack(cfg, b.g_final);
        result.slack.push(slack);
        if b.g_final < a.g_final - slack {
            result.violations.push((i - 1, i));
        }
    }
    Ok(result)
}

/// Solves the dense-grid LP at each resolution; objectives must not
/// increase as the grid refines (slack 1e-9).
pub fn sweep_oracle_resolution(
    problem: &ControlProblem,
    mode: BasisMode,
    scaling: bool,
    resolutions: &[usize],
) -> Result<SweepResult, SweepError> {
    const SLACK: f64 = 1e-9;
    let mut result = SweepResult {
        parameter_name: "resolution".into(),
        entries: Vec::new(),
        violations: Vec::new(),
        slack: Vec::new(),
    };
    let fail = |parameter, partial, source| SweepError {
        parameter,
        partial,
        source,
    };
    if resolutions.windows(2).any(|w| w[1] <= w[0]) {
        return Err(fail(0, result, SweepFailure::Order));
    }
    let basis = match build_basis(problem, mode, scaling) {
        Ok(b) => b,
        Err(e) => return Err(fail(0, result, e.into())),
    };
    let dims = problem.state_dim() + problem.control_dim();
    for &r in resolutions {
        let start = Instant::now();
        let oracle = match dense_grid_oracle(&basis, &expand_resolution(&[r], dims)) {
            Ok(o) => o,
            Err(e) => return Err(fail(r, result, e.into())),
        };
        result.entries.push(SweepEntry {
            parameter: r,
            n: basis.len(),
            g_final: oracle.objective,
            gap: 0.0,
            iterations: 0,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    for i in 1..result.entries.len() {
        result.slack.push(SLACK);
        if result.entries[i].g_final > result.entries[i - 1].g_final + SLACK {
            result.violations.push((i - 1, i));
        }
    }
    Ok(result)
}
