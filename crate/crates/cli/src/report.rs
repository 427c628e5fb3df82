use std::collections::BTreeMap;

use periodic_silp::basis::BasisMode;
use periodic_silp::control::{OptimalityReport, SupportPoint};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub gap: f64,
    pub pricing: f64,
    pub control: f64,
    pub lp_feasibility: f64,
    pub lp_optimality: f64,
}

/// Everything `solve` learned about one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub problem: String,
    pub problem_hash: String,
    pub basis_mode: BasisMode,
    pub scaling: bool,
    pub n: usize,
    pub tolerances: Tolerances,
    pub initial_resolution: Vec<usize>,
    pub pricing_resolution: Vec<usize>,
    pub seed: u64,
    pub status: String,
    pub iterations: usize,
    pub points: usize,
    pub g_final: f64,
    pub lambda0: f64,
    pub gap: f64,
    pub relative_gap: f64,
    pub support: Vec<SupportPoint>,
    pub lambda: Vec<f64>,
    pub gradient_independence: f64,
    pub t_star: Option<f64>,
    pub average_cost: Option<f64>,
    pub closure_error: Option<f64>,
    pub hjb_residual_min: Option<f64>,
    pub moment_residual_max: Option<f64>,
    pub optimality: Option<OptimalityReport>,
    pub simulation_error: Option<String>,
    /// Wall-clock seconds per phase; the only non-deterministic field.
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
