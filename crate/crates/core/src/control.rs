//! The value polynomial `ψ = Σ λ_i φ_i`, the Hamiltonian, feedback synthesis
//! and post-hoc checks of the HJB inequality along a state grid or a
//! closed-loop trajectory.

use serde::{Deserialize, Serialize};

use crate::basis::{build_basis, BasisMode, MonomialBasis, MultiIndex};
use crate::error::ControlError;
use crate::grid::{axis_nodes, lex_cmp};
use crate::lp::DualCertificate;
use crate::problem::ControlProblem;
use crate::simulate::Trajectory;

/// Control-minimization tolerance on the Hamiltonian value.
pub const CONTROL_TOL: f64 = 1e-7;
/// Default control-grid nodes per axis for numeric minimization.
pub const DEFAULT_CONTROL_RESOLUTION: usize = 128;

#[derive(Debug, Clone)]
pub struct ValuePolynomial {
    basis: MonomialBasis,
    coefficients: Vec<f64>,
}

impl ValuePolynomial {
    pub fn new(basis: MonomialBasis, coefficients: Vec<f64>) -> Result<Self, ControlError> {
        if coefficients.len() != basis.len() {
            return Err(ControlError::Mismatch(format!(
                "{} coefficients for a basis of size {}",
                coefficients.len(),
                basis.len()
            )));
        }
        Ok(Self {
            basis,
            coefficients,
        })
    }

    /// `ψ ≡ 0` on the given basis.
    pub fn zero(basis: MonomialBasis) -> Self {
        let n = basis.len();
        Self {
            basis,
            coefficients: vec![0.0; n],
        }
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn problem(&self) -> &ControlProblem {
        self.basis.problem()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        let mut phi = vec![0.0; self.basis.len()];
        self.basis.phi_all(y, &mut phi);
        phi.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum()
    }

    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; y.len()];
        self.basis.weighted_gradient(&self.coefficients, y, &mut g);
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    /// Componentwise clamp of `−½ R⁻¹ B(y)ᵀ ∇ψ(y)`.
    ClosedForm,
    /// Grid scan over `U` followed by compass polishing.
    Numeric,
}

/// Minimizer of `u ↦ pᵀ f(u, y) + g(u, y)` over `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlMinimum {
    pub u: Vec<f64>,
    pub value: f64,
    /// Another local minimizer attains the same value to within tolerance.
    pub multimodal: bool,
}

#[derive(Debug, Clone)]
pub struct FeedbackLaw {
    psi: ValuePolynomial,
    mode: FeedbackMode,
    control_resolution: usize,
}

impl FeedbackLaw {
    /// Closed form when the problem is control-affine with positive weights,
    /// numeric otherwise.
    pub fn new(psi: ValuePolynomial) -> Self {
        Self::closed_form(psi.clone()).unwrap_or_else(|_| Self::numeric(psi))
    }

    pub fn closed_form(psi: ValuePolynomial) -> Result<Self, ControlError> {
        let Some(aff) = psi.problem().affine_structure() else {
            return Err(ControlError::Configuration(
                "problem has no control-affine structure".into(),
            ));
        };
        if let Some(k) = aff.control_weight.iter().position(|r| !(*r > 0.0)) {
            return Err(ControlError::Configuration(format!(
                "control weight R[{k}] = {} is not positive",
                aff.control_weight[k]
            )));
        }
        Ok(Self {
            psi,
            mode: FeedbackMode::ClosedForm,
            control_resolution: DEFAULT_CONTROL_RESOLUTION,
        })
    }

    pub fn numeric(psi: ValuePolynomial) -> Self {
        Self {
            psi,
            mode: FeedbackMode::Numeric,
            control_resolution: DEFAULT_CONTROL_RESOLUTION,
        }
    }

    pub fn with_control_resolution(mut self, res: usize) -> Self {
        self.control_resolution = res.max(2);
        self
    }

    pub fn mode(&self) -> FeedbackMode {
        self.mode
    }

    pub fn psi(&self) -> &ValuePolynomial {
        &self.psi
    }

    pub fn problem(&self) -> &ControlProblem {
        self.psi.problem()
    }

    /// `∇ψ(y)ᵀ f(u, y) + g(u, y)`.
    pub fn lagrangian(&self, grad: &[f64], u: &[f64], y: &[f64]) -> f64 {
        let p = self.problem();
        let mut f = vec![0.0; y.len()];
        p.dynamics_into(u, y, &mut f);
        p.cost_unchecked(u, y) + grad.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Minimizer and value of the Hamiltonian integrand at `y`. Unchecked.
    pub fn minimize(&self, y: &[f64]) -> ControlMinimum {
        let grad = self.psi.gradient(y);
        match self.mode {
            FeedbackMode::ClosedForm => {
                let u = self.closed_form_control(&grad, y);
                let value = self.lagrangian(&grad, &u, y);
                ControlMinimum {
                    u,
                    value,
                    multimodal: false,
                }
            }
            FeedbackMode::Numeric => self.numeric_minimum(&grad, y),
        }
    }

    /// Feedback control for an arbitrary momentum `p`; the closed form uses
    /// `p` in place of `∇ψ(y)`.
    fn closed_form_control(&self, p: &[f64], y: &[f64]) -> Vec<f64> {
        let problem = self.problem();
        let aff = problem.affine_structure().expect("checked at construction");
        let (m, n) = (problem.state_dim(), problem.control_dim());
        let mut b = vec![0.0; m * n];
        (aff.input_matrix)(y, &mut b);
        let cb = problem.control_box();
        (0..n)
            .map(|k| {
                let btp: f64 = (0..m).map(|i| b[i * n + k] * p[i]).sum();
                let v = -0.5 * btp / aff.control_weight[k];
                v.clamp(cb.lower()[k], cb.upper()[k])
            })
            .collect()
    }

    fn numeric_minimum(&self, grad: &[f64], y: &[f64]) -> ControlMinimum {
        let problem = self.problem();
        let n = problem.control_dim();
        let cb = problem.control_box();
        let res = vec![self.control_resolution; n];
        let axes: Vec<Vec<f64>> = (0..n).map(|k| cb.axis_nodes(k, res[k])).collect();
        let shape: Vec<usize> = axes.iter().map(Vec::len).collect();
        let total: usize = shape.iter().product();
        let coords = |idx: usize| -> Vec<f64> {
            let mut rem = idx;
            let mut u = vec![0.0; n];
            for k in (0..n).rev() {
                u[k] = axes[k][rem % shape[k]];
                rem /= shape[k];
            }
            u
        };
        let values: Vec<f64> = (0..total).map(|i| self.lagrangian(grad, &coords(i), y)).collect();

        // grid local minima, best first, ties by index (= lexicographic order)
        let mut strides = vec![1usize; n];
        for k in (0..n.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * shape[k + 1];
        }
        let mut minima: Vec<usize> = (0..total)
            .filter(|&i| {
                (0..n).all(|k| {
                    let pos = (i / strides[k]) % shape[k];
                    (pos == 0 || values[i - strides[k]] >= values[i])
                        && (pos + 1 == shape[k] || values[i + strides[k]] >= values[i])
                })
            })
            .collect();
        minima.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        minima.truncate(4);

        let spacing: Vec<f64> = (0..n)
            .map(|k| cb.width(k) / (shape[k].max(2) - 1) as f64)
            .collect();
        let f = |u: &[f64]| self.lagrangian(grad, u, y);
        let mut polished: Vec<(Vec<f64>, f64)> = minima
            .iter()
            .map(|&i| polish(&f, coords(i), values[i], cb.lower(), cb.upper(), &spacing))
            .collect();
        polished.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| lex_cmp(&a.0, &b.0)));
        let (u, value) = polished[0].clone();
        let multimodal = polished[1..].iter().any(|(v, fv)| {
            fv - value <= CONTROL_TOL
                && v.iter().zip(&u).any(|(a, b)| (a - b).abs() > 1e-3)
        });
        ControlMinimum {
            u,
            value,
            multimodal,
        }
    }
}

/// Projected compass search from a grid node down to a step of 1e-10 of the
/// grid spacing.
fn polish(
    f: &dyn Fn(&[f64]) -> f64,
    mut x: Vec<f64>,
    mut fx: f64,
    lower: &[f64],
    upper: &[f64],
    spacing: &[f64],
) -> (Vec<f64>, f64) {
    let mut scale = 1.0;
    let mut trial = x.clone();
    while scale > 1e-10 {
        let mut moved = false;
        for a in 0..x.len() {
            for dir in [-1.0, 1.0] {
                trial.copy_from_slice(&x);
                trial[a] = (x[a] + dir * spacing[a] * scale).clamp(lower[a], upper[a]);
                if trial[a] == x[a] {
                    continue;
                }
                let v = f(&trial);
                if v < fx {
                    x.copy_from_slice(&trial);
                    fx = v;
                    moved = true;
                }
            }
        }
        if !moved {
            scale *= 0.5;
        }
    }
    (x, fx)
}

/// `H(∇ψ(y), y) = min_u {∇ψ(y)ᵀ f(u, y) + g(u, y)}`.
pub fn hamiltonian(law: &FeedbackLaw, y: &[f64]) -> Result<f64, ControlError> {
    law.problem().state_box().check(y, "y")?;
    Ok(law.minimize(y).value)
}

/// The synthesized feedback `uᴺ(y)`, always inside `U`.
pub fn feedback(law: &FeedbackLaw, y: &[f64]) -> Result<Vec<f64>, ControlError> {
    law.problem().state_box().check(y, "y")?;
    Ok(law.minimize(y).u)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HjbReport {
    /// `min_y H(∇ψ(y), y) − G` over the sample.
    pub minimum: f64,
    pub argmin: Vec<f64>,
    /// Fraction of samples with residual below `−tolerance`.
    pub violation_fraction: f64,
    pub tolerance: f64,
    pub samples: usize,
}

impl HjbReport {
    pub fn passed(&self) -> bool {
        self.minimum >= -self.tolerance
    }
}

/// Evaluates the HJB residual on a uniform product sample of `Y`.
pub fn verify_hjb(law: &FeedbackLaw, g_ref: f64, resolution: &[usize], tolerance: f64) -> HjbReport {
    use rayon::prelude::*;
    let problem = law.problem();
    let n = problem.control_dim();
    let full: Vec<usize> = std::iter::repeat(1)
        .take(n)
        .chain(crate::grid::expand_resolution(resolution, problem.state_dim()))
        .collect();
    let y_axes = axis_nodes(problem, &full).split_off(n);
    let ys = cartesian(&y_axes);
    let residuals: Vec<f64> = ys.par_iter().map(|y| law.minimize(y).value - g_ref).collect();
    let mut best = 0;
    for (i, r) in residuals.iter().enumerate() {
        if r < &residuals[best] {
            best = i;
        }
    }
    let violations = residuals.iter().filter(|r| **r < -tolerance).count();
    HjbReport {
        minimum: residuals[best],
        argmin: ys[best].clone(),
        violation_fraction: violations as f64 / residuals.len() as f64,
        tolerance,
        samples: residuals.len(),
    }
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        out = out
            .iter()
            .flat_map(|prefix| {
                axis.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityReport {
    /// `max_t |∇ψᵀ f(u, y) + g(u, y) − G|` along the trajectory.
    pub equality_residual: f64,
    /// `max_t |H(∇ψ(y), y) − G|` along the trajectory.
    pub hamiltonian_residual: f64,
    /// The trajectory period is missing or shorter than the allowed minimum.
    pub degenerate: bool,
    pub samples: usize,
}

/// Checks the necessary and sufficient optimality relations on the samples of
/// one detected period.
pub fn check_optimality_conditions(
    law: &FeedbackLaw,
    g_ref: f64,
    traj: &Trajectory,
    min_period: f64,
) -> OptimalityReport {
    let period_ok = traj.t_star.is_some_and(|t| t >= min_period);
    if !period_ok || traj.times.is_empty() {
        return OptimalityReport {
            equality_residual: f64::NAN,
            hamiltonian_residual: f64::NAN,
            degenerate: true,
            samples: 0,
        };
    }
    let mut eq = 0.0f64;
    let mut ham = 0.0f64;
    for (y, u) in traj.states.iter().zip(&traj.controls) {
        let grad = law.psi().gradient(y);
        eq = eq.max((law.lagrangian(&grad, u, y) - g_ref).abs());
        ham = ham.max((law.minimize(y).value - g_ref).abs());
    }
    OptimalityReport {
        equality_residual: eq,
        hamiltonian_residual: ham,
        degenerate: false,
        samples: traj.times.len(),
    }
}

/// Serialized dual certificate with the basis metadata needed to rebuild `ψ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub problem: String,
    pub problem_hash: String,
    pub basis_mode: BasisMode,
    pub scaling: bool,
    pub state_lower: Vec<f64>,
    pub state_upper: Vec<f64>,
    pub indices: Vec<MultiIndex>,
    pub objective: f64,
    pub lambda0: f64,
    pub lambda: Vec<f64>,
    /// Support of the primal measure, heaviest first.
    #[serde(default)]
    pub support: Vec<SupportPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportPoint {
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub weight: f64,
}

impl Certificate {
    pub fn new(basis: &MonomialBasis, dual: &DualCertificate, objective: f64) -> Self {
        let p = basis.problem();
        Self {
            problem: p.name().to_string(),
            problem_hash: p.source_hash().to_string(),
            basis_mode: basis.mode(),
            scaling: basis.scaling_enabled(),
            state_lower: p.state_box().lower().to_vec(),
            state_upper: p.state_box().upper().to_vec(),
            indices: basis.indices().to_vec(),
            objective,
            lambda0: dual.lambda0,
            lambda: dual.lambda.clone(),
            support: Vec::new(),
        }
    }

    /// Attaches the support of `measure` over `points`, heaviest first (ties
    /// in point order).
    pub fn with_support(mut self, points: &[crate::grid::GridPoint], measure: &crate::lp::DiscreteMeasure) -> Self {
        let mut idx = measure.support.clone();
        idx.sort_by(|&a, &b| measure.weights[b].total_cmp(&measure.weights[a]).then(a.cmp(&b)));
        self.support = idx
            .into_iter()
            .map(|l| SupportPoint {
                u: points[l].u.clone(),
                y: points[l].y.clone(),
                weight: measure.weights[l],
            })
            .collect();
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ControlError> {
        serde_json::from_str(text).map_err(|e| ControlError::Mismatch(format!("malformed certificate: {e}")))
    }

    /// Rebuilds `ψ` on `problem`, refusing certificates issued for another
    /// problem or basis.
    pub fn value_polynomial(&self, problem: &ControlProblem) -> Result<ValuePolynomial, ControlError> {
        if self.problem_hash != problem.source_hash() {
            return Err(ControlError::Mismatch(format!(
                "certificate was issued for problem '{}' ({}), not '{}' ({})",
                self.problem,
                short(&self.problem_hash),
                problem.name(),
                short(problem.source_hash())
            )));
        }
        if self.state_lower != problem.state_box().lower() || self.state_upper != problem.state_box().upper() {
            return Err(ControlError::Mismatch("state box differs".into()));
        }
        let basis = build_basis(problem, self.basis_mode, self.scaling)
            .map_err(|e| ControlError::Mismatch(e.to_string()))?;
        if basis.indices() != self.indices.as_slice() {
            return Err(ControlError::Mismatch("basis index list differs".into()));
        }
        ValuePolynomial::new(basis, self.lambda.clone())
    }
}

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::pendulum;

    fn raw_law(coeff_01: f64) -> FeedbackLaw {
        let b = build_basis(&pendulum(), BasisMode::Tensor(1), false).unwrap();
        let mut c = vec![0.0; b.len()];
        let i = b.indices().iter().position(|m| m.0 == [0, 1]).unwrap();
        c[i] = coeff_01;
        FeedbackLaw::closed_form(ValuePolynomial::new(b, c).unwrap()).unwrap()
    }

    #[test]
    fn zero_psi_hamiltonian() {
        let law = raw_law(0.0);
        assert_eq!(hamiltonian(&law, &[0.0, 0.0]).unwrap(), 0.0);
        assert!((hamiltonian(&law, &[1.7, 0.0]).unwrap() + 2.89).abs() < 1e-12);
        assert_eq!(feedback(&law, &[0.3, -1.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn clamped_and_interior_branches() {
        let law = raw_law(-4.0);
        assert_eq!(feedback(&law, &[0.0, 0.0]).unwrap(), vec![1.0]);
        assert!((hamiltonian(&law, &[0.0, 0.0]).unwrap() + 3.0).abs() < 1e-12);
        let law = raw_law(1.0);
        assert_eq!(feedback(&law, &[0.0, 0.0]).unwrap(), vec![-0.5]);
    }

    #[test]
    fn brute_force_scan_agrees() {
        let law = raw_law(-4.0);
        let grad = law.psi().gradient(&[0.0, 0.0]);
        let best = (0..=20000)
            .map(|i| -1.0 + 2.0 * i as f64 / 20000.0)
            .map(|u| law.lagrangian(&grad, &[u], &[0.0, 0.0]))
            .fold(f64::INFINITY, f64::min);
        assert!((best + 3.0).abs() < 1e-12);
    }

    #[test]
    fn numeric_matches_closed_form() {
        for c in [-4.0, -0.7, 0.0, 1.0, 3.0] {
            let closed = raw_law(c);
            let numeric = FeedbackLaw::numeric(closed.psi().clone());
            for y in [[0.0, 0.0], [1.2, -3.0], [-1.7, 4.0]] {
                let a = closed.minimize(&y);
                let b = numeric.minimize(&y);
                assert!((a.u[0] - b.u[0]).abs() <= 1e-6, "c={c} y={y:?}");
                assert!((a.value - b.value).abs() <= CONTROL_TOL);
            }
        }
    }

    #[test]
    fn closed_form_requires_positive_weight() {
        let text = "name = \"lin\"\nm = 1\nn = 1\nf = [\"u1\"]\ng = \"y1^2\"\ncontrol_lower = [-1.0]\ncontrol_upper = [1.0]\nstate_lower = [-1.0]\nstate_upper = [1.0]\n";
        let p = crate::problem::load_problem(text).unwrap();
        let b = build_basis(&p, BasisMode::Tensor(1), true).unwrap();
        let psi = ValuePolynomial::zero(b);
        assert!(matches!(FeedbackLaw::closed_form(psi.clone()), Err(ControlError::Configuration(_))));
        assert_eq!(FeedbackLaw::new(psi).mode(), FeedbackMode::Numeric);
    }

    #[test]
    fn zero_psi_fails_hjb_at_g_zero() {
        let law = raw_law(0.0);
        let r = verify_hjb(&law, 0.0, &[21], 1e-7);
        assert!((r.minimum + 2.89).abs() < 1e-12);
        assert_eq!(r.argmin[0].abs(), 1.7);
        assert!(!r.passed());
        let r = verify_hjb(&law, -2.89, &[21], 1e-7);
        assert!(r.minimum.abs() < 1e-12 && r.passed());
    }

    #[test]
    fn certificate_round_trip_and_mismatch() {
        let p = pendulum();
        let b = build_basis(&p, BasisMode::Tensor(2), true).unwrap();
        let dual = DualCertificate {
            lambda0: -0.1 / 3.0,
            lambda: (0..b.len()).map(|i| (i as f64 + 0.1).sqrt() * 1e-3 - 0.7).collect(),
        };
        let c = Certificate::new(&b, &dual, dual.lambda0);
        let back = Certificate::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        for (x, y) in back.lambda.iter().zip(&dual.lambda) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert!(back.value_polynomial(&p).is_ok());
        let other = crate::problem::load_problem(
            "name = \"other\"\nm = 2\nn = 1\nf = [\"y2\", \"u1\"]\ng = \"u1^2\"\ncontrol_lower = [-1.0]\ncontrol_upper = [1.0]\nstate_lower = [-1.7, -4.0]\nstate_upper = [1.7, 4.0]\n",
        )
        .unwrap();
        assert!(matches!(back.value_polynomial(&other), Err(ControlError::Mismatch(_))));
    }
}
