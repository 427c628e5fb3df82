//! Control problems: dynamics `f(u, y)`, running cost `g(u, y)`, and the
//! control and state boxes `U` and `Y`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::ProblemError;
use crate::expr::{self, ControlPolynomial, Expr};

/// Absolute tolerance for box membership.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Writes `f(u, y)` into the output slice.
pub type DynamicsFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
pub type CostFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type StateVectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type StateScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, ProblemError> {
        if lower.is_empty() {
            return Err(ProblemError::NonCompactBox {
                what: "box".into(),
                detail: "dimension must be at least 1".into(),
            });
        }
        if lower.len() != upper.len() {
            return Err(ProblemError::DimensionMismatch {
                what: "upper bound".into(),
                expected: lower.len(),
                actual: upper.len(),
            });
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(ProblemError::NonCompactBox {
                    what: "box".into(),
                    detail: format!("axis {} has a non-finite bound", i + 1),
                });
            }
            if lo > hi {
                return Err(ProblemError::NonCompactBox {
                    what: "box".into(),
                    detail: format!("axis {}: lower {lo} > upper {hi}", i + 1),
                });
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().enumerate().all(|(i, v)| {
                *v >= self.lower[i] - MEMBERSHIP_TOL && *v <= self.upper[i] + MEMBERSHIP_TOL
            })
    }

    /// Exact membership, without tolerance.
    pub fn contains_exact(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .enumerate()
                .all(|(i, v)| *v >= self.lower[i] && *v <= self.upper[i])
    }

    pub(crate) fn check(&self, x: &[f64], what: &'static str) -> Result<(), ProblemError> {
        if x.len() != self.dim() {
            return Err(ProblemError::DimensionMismatch {
                what: what.into(),
                expected: self.dim(),
                actual: x.len(),
            });
        }
        for (i, v) in x.iter().enumerate() {
            if !(*v >= self.lower[i] - MEMBERSHIP_TOL) {
                return Err(ProblemError::Domain {
                    what,
                    index: i + 1,
                    value: *v,
                    bound: self.lower[i],
                    side: "lower",
                });
            }
            if !(*v <= self.upper[i] + MEMBERSHIP_TOL) {
                return Err(ProblemError::Domain {
                    what,
                    index: i + 1,
                    value: *v,
                    bound: self.upper[i],
                    side: "upper",
                });
            }
        }
        Ok(())
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                if self.width(i) > 0.0 {
                    rng.gen_range(self.lower[i]..=self.upper[i])
                } else {
                    self.lower[i]
                }
            })
            .collect()
    }

    /// `res` equally spaced nodes along `axis`, endpoints included; a single
    /// node sits at the midpoint.
    pub fn axis_nodes(&self, axis: usize, res: usize) -> Vec<f64> {
        let (lo, hi) = (self.lower[axis], self.upper[axis]);
        match res {
            0 => Vec::new(),
            1 => vec![0.5 * (lo + hi)],
            _ => (0..res)
                .map(|k| {
                    if k == res - 1 {
                        hi
                    } else {
                        lo + (hi - lo) * k as f64 / (res - 1) as f64
                    }
                })
                .collect(),
        }
    }
}

/// Control-affine structure `f = a(y) + B(y) u`, `g = uᵀ R u + q(y)` with
/// `R` diagonal.
#[derive(Clone)]
pub struct AffineStructure {
    pub drift: StateVectorFn,
    /// Row-major `m × n`.
    pub input_matrix: StateVectorFn,
    pub control_weight: Vec<f64>,
    pub state_cost: StateScalarFn,
}

impl fmt::Debug for AffineStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AffineStructure")
            .field("control_weight", &self.control_weight)
            .finish_non_exhaustive()
    }
}

/// A periodic optimal control problem. Cheap to clone; evaluators are shared.
#[derive(Clone)]
pub struct ControlProblem {
    name: String,
    state_dim: usize,
    control_dim: usize,
    dynamics: DynamicsFn,
    cost: CostFn,
    control_box: Bounds,
    state_box: Bounds,
    affine: Option<AffineStructure>,
    source_hash: String,
}

impl fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlProblem")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("control_dim", &self.control_dim)
            .field("control_box", &self.control_box)
            .field("state_box", &self.state_box)
            .field("affine", &self.affine)
            .finish_non_exhaustive()
    }
}

impl ControlProblem {
    pub fn new(
        name: impl Into<String>,
        control_box: Bounds,
        state_box: Bounds,
        dynamics: DynamicsFn,
        cost: CostFn,
    ) -> Self {
        let name = name.into();
        let source_hash = hash_text(&name);
        Self {
            state_dim: state_box.dim(),
            control_dim: control_box.dim(),
            name,
            dynamics,
            cost,
            control_box,
            state_box,
            affine: None,
            source_hash,
        }
    }

    pub fn with_affine_structure(mut self, affine: AffineStructure) -> Self {
        self.affine = Some(affine);
        self
    }

    pub fn with_source_hash(mut self, hash: String) -> Self {
        self.source_hash = hash;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Hex SHA-256 of the configuration this problem was built from.
    pub fn source_hash(&self) -> &str {
        &self.source_hash
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn control_box(&self) -> &Bounds {
        &self.control_box
    }

    pub fn state_box(&self) -> &Bounds {
        &self.state_box
    }

    pub fn affine_structure(&self) -> Option<&AffineStructure> {
        self.affine.as_ref()
    }

    pub fn eval_dynamics(&self, u: &[f64], y: &[f64]) -> Result<Vec<f64>, ProblemError> {
        self.control_box.check(u, "u")?;
        self.state_box.check(y, "y")?;
        let mut out = vec![0.0; self.state_dim];
        (self.dynamics)(u, y, &mut out);
        Ok(out)
    }

    pub fn eval_cost(&self, u: &[f64], y: &[f64]) -> Result<f64, ProblemError> {
        self.control_box.check(u, "u")?;
        self.state_box.check(y, "y")?;
        Ok((self.cost)(u, y))
    }

    /// Unchecked `f(u, y)` for inner loops.
    #[inline]
    pub fn dynamics_into(&self, u: &[f64], y: &[f64], out: &mut [f64]) {
        (self.dynamics)(u, y, out)
    }

    /// Unchecked `g(u, y)` for inner loops.
    #[inline]
    pub fn cost_unchecked(&self, u: &[f64], y: &[f64]) -> f64 {
        (self.cost)(u, y)
    }

    /// Largest relative mismatch between the affine reconstruction and the
    /// generic evaluators over `samples` random points of `U × Y`.
    pub fn affine_reconstruction_error<R: Rng + ?Sized>(
        &self,
        samples: usize,
        rng: &mut R,
    ) -> Option<f64> {
        let aff = self.affine.as_ref()?;
        let (m, n) = (self.state_dim, self.control_dim);
        let mut worst = 0.0f64;
        let mut a = vec![0.0; m];
        let mut b = vec![0.0; m * n];
        let mut f = vec![0.0; m];
        for _ in 0..samples {
            let u = self.control_box.sample(rng);
            let y = self.state_box.sample(rng);
            (aff.drift)(&y, &mut a);
            (aff.input_matrix)(&y, &mut b);
            self.dynamics_into(&u, &y, &mut f);
            for i in 0..m {
                let rec = a[i] + (0..n).map(|k| b[i * n + k] * u[k]).sum::<f64>();
                worst = worst.max(rel_err(rec, f[i]));
            }
            let g_rec = (0..n)
                .map(|k| aff.control_weight[k] * u[k] * u[k])
                .sum::<f64>()
                + (aff.state_cost)(&y);
            worst = worst.max(rel_err(g_rec, self.cost_unchecked(&u, &y)));
        }
        Some(worst)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub(crate) fn hash_text(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// The damped pendulum `x'' + 0.3x' + 4 sin x = u`, `|u| ≤ 1`, with cost
/// `u² − x²` on `Y = [−1.7, 1.7] × [−4, 4]`.
pub fn pendulum() -> ControlProblem {
    let control_box = Bounds::new(vec![-1.0], vec![1.0]).expect("valid box");
    let state_box = Bounds::new(vec![-1.7, -4.0], vec![1.7, 4.0]).expect("valid box");
    let dynamics: DynamicsFn = Arc::new(|u, y, out| {
        out[0] = y[1];
        out[1] = u[0] - 0.3 * y[1] - 4.0 * y[0].sin();
    });
    let cost: CostFn = Arc::new(|u, y| u[0] * u[0] - y[0] * y[0]);
    let affine = AffineStructure {
        drift: Arc::new(|y, out| {
            out[0] = y[1];
            out[1] = -0.3 * y[1] - 4.0 * y[0].sin();
        }),
        input_matrix: Arc::new(|_, out| {
            out[0] = 0.0;
            out[1] = 1.0;
        }),
        control_weight: vec![1.0],
        state_cost: Arc::new(|y| -y[0] * y[0]),
    };
    ControlProblem::new("pendulum", control_box, state_box, dynamics, cost)
        .with_affine_structure(affine)
}

/// Names accepted by [`builtin`].
pub const BUILTIN_PROBLEMS: &[&str] = &["pendulum"];

pub fn builtin(name: &str) -> Option<ControlProblem> {
    match name {
        "pendulum" => Some(pendulum()),
        _ => None,
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemConfig {
    name: Option<String>,
    builtin: Option<String>,
    m: Option<usize>,
    n: Option<usize>,
    control_lower: Option<Vec<f64>>,
    control_upper: Option<Vec<f64>>,
    state_lower: Option<Vec<f64>>,
    state_upper: Option<Vec<f64>>,
    f: Option<Vec<toml::Spanned<String>>>,
    g: Option<toml::Spanned<String>>,
}

/// Loads a problem from a TOML document.
///
/// ```toml
/// name = "oscillator"
/// m = 2
/// n = 1
/// control_lower = [-1.0]
/// control_upper = [1.0]
/// state_lower = [-2.0, -2.0]
/// state_upper = [2.0, 2.0]
/// f = ["y2", "u1 - y1"]
/// g = "u1^2 + y1^2"
/// ```
///
/// A document with `builtin = "pendulum"` (or `name = "pendulum"` and no
/// expressions) yields the built-in problem.
pub fn load_problem(config_text: &str) -> Result<ControlProblem, ProblemError> {
    let cfg: ProblemConfig = toml::from_str(config_text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|s| line_col(config_text, s.start))
            .unwrap_or((1, 1));
        ProblemError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let hash = hash_text(config_text);

    let builtin_name = cfg.builtin.clone().or_else(|| {
        (cfg.f.is_none() && cfg.g.is_none())
            .then(|| cfg.name.clone())
            .flatten()
    });
    if let Some(b) = builtin_name {
        return builtin(&b)
            .map(|p| p.with_source_hash(hash))
            .ok_or_else(|| ProblemError::Config(format!("unknown built-in problem '{b}'")));
    }

    let m = cfg.m.ok_or_else(|| missing("m"))?;
    let n = cfg.n.ok_or_else(|| missing("n"))?;
    if m == 0 || n == 0 {
        return Err(ProblemError::Config("m and n must be positive".into()));
    }
    let control_box = Bounds::new(
        cfg.control_lower.ok_or_else(|| missing("control_lower"))?,
        cfg.control_upper.ok_or_else(|| missing("control_upper"))?,
    )
    .map_err(|e| rename_box(e, "U"))?;
    let state_box = Bounds::new(
        cfg.state_lower.ok_or_else(|| missing("state_lower"))?,
        cfg.state_upper.ok_or_else(|| missing("state_upper"))?,
    )
    .map_err(|e| rename_box(e, "Y"))?;
    if control_box.dim() != n {
        return Err(ProblemError::DimensionMismatch {
            what: "control box".into(),
            expected: n,
            actual: control_box.dim(),
        });
    }
    if state_box.dim() != m {
        return Err(ProblemError::DimensionMismatch {
            what: "state box".into(),
            expected: m,
            actual: state_box.dim(),
        });
    }
    let f_src = cfg.f.ok_or_else(|| missing("f"))?;
    if f_src.len() != m {
        return Err(ProblemError::DimensionMismatch {
            what: "f".into(),
            expected: m,
            actual: f_src.len(),
        });
    }
    let g_src = cfg.g.ok_or_else(|| missing("g"))?;

    let parse_spanned = |s: &toml::Spanned<String>| -> Result<Expr, ProblemError> {
        expr::parse(s.get_ref(), n, m).map_err(|e| {
            // +1 skips the opening quote of a basic string literal.
            let (line, column) = line_col(config_text, s.span().start + 1 + e.offset);
            ProblemError::Parse {
                line,
                column,
                message: e.message,
            }
        })
    };
    let f_exprs: Vec<Expr> = f_src.iter().map(parse_spanned).collect::<Result<_, _>>()?;
    let g_expr = parse_spanned(&g_src)?;

    let affine = detect_affine(&f_exprs, &g_expr, n);
    let f_shared = Arc::new(f_exprs);
    let g_shared = Arc::new(g_expr);
    let dynamics: DynamicsFn = {
        let f = Arc::clone(&f_shared);
        Arc::new(move |u, y, out| {
            for (o, e) in out.iter_mut().zip(f.iter()) {
                *o = e.eval(u, y);
            }
        })
    };
    let cost: CostFn = {
        let g = Arc::clone(&g_shared);
        Arc::new(move |u, y| g.eval(u, y))
    };
    let name = cfg.name.unwrap_or_else(|| "custom".into());
    let mut problem =
        ControlProblem::new(name, control_box, state_box, dynamics, cost).with_source_hash(hash);
    if let Some(a) = affine {
        problem = problem.with_affine_structure(a);
    }
    Ok(problem)
}

fn missing(key: &str) -> ProblemError {
    ProblemError::Config(format!("missing key '{key}'"))
}

fn rename_box(e: ProblemError, which: &str) -> ProblemError {
    match e {
        ProblemError::NonCompactBox { detail, .. } => ProblemError::NonCompactBox {
            what: which.into(),
            detail,
        },
        other => other,
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(offset, |p| offset - p - 1) + 1;
    (line, column)
}

/// Recognizes `f` affine in `u` and `g = Σ r_k u_k² + q(y)` with constant
/// `r_k > 0`.
fn detect_affine(f: &[Expr], g: &Expr, n: usize) -> Option<AffineStructure> {
    let m = f.len();
    let mut drift = Vec::with_capacity(m);
    let mut input = Vec::with_capacity(m * n);
    for fi in f {
        let p = fi.control_polynomial(n)?;
        if p.max_degree() > 1 {
            return None;
        }
        drift.push(
            p.coefficient(&vec![0; n])
                .cloned()
                .unwrap_or(Expr::Const(0.0)),
        );
        for k in 0..n {
            let mut e = vec![0; n];
            e[k] = 1;
            input.push(p.coefficient(&e).cloned().unwrap_or(Expr::Const(0.0)));
        }
    }
    let gp = g.control_polynomial(n)?;
    let mut weights = vec![0.0; n];
    for (key, coeff) in &gp.terms {
        let degree: u32 = key.iter().sum();
        if degree == 0 {
            continue;
        }
        let k = key.iter().position(|&e| e == 2)?;
        if degree != 2 {
            return None;
        }
        weights[k] = ControlPolynomial::constant_coefficient(coeff)?;
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return None;
    }
    let q = gp
        .coefficient(&vec![0; n])
        .cloned()
        .unwrap_or(Expr::Const(0.0));
    let drift = Arc::new(drift);
    let input = Arc::new(input);
    let q = Arc::new(q);
    Some(AffineStructure {
        drift: Arc::new(move |y, out| {
            for (o, e) in out.iter_mut().zip(drift.iter()) {
                *o = e.eval(&[], y);
            }
        }),
        input_matrix: Arc::new(move |y, out| {
            for (o, e) in out.iter_mut().zip(input.iter()) {
                *o = e.eval(&[], y);
            }
        }),
        control_weight: weights,
        state_cost: Arc::new(move |y| q.eval(&[], y)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pendulum_dynamics_examples() {
        let p = pendulum();
        assert_eq!(p.eval_dynamics(&[0.0], &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(p.eval_dynamics(&[1.0], &[0.0, 0.0]).unwrap(), vec![0.0, 1.0]);
        let f = p.eval_dynamics(&[0.5], &[1.0, -2.0]).unwrap();
        assert_eq!(f[0], -2.0);
        // 1.1 - 4 sin(1) with sin(1) = 0.8414709848078965 (20-digit reference)
        assert!((f[1] - (-2.265883939231586)).abs() < 1e-14);
    }

    #[test]
    fn pendulum_cost_examples() {
        let p = pendulum();
        assert_eq!(p.eval_cost(&[1.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert!((p.eval_cost(&[0.0], &[1.7, 0.0]).unwrap() + 2.89).abs() < 1e-15);
        assert!((p.eval_cost(&[-0.5], &[1.2, 3.0]).unwrap() + 1.19).abs() < 1e-15);
    }

    #[test]
    fn out_of_box_inputs_name_the_bound() {
        let p = pendulum();
        let err = p.eval_dynamics(&[1.5], &[0.0, 0.0]).unwrap_err();
        assert!(matches!(
            err,
            ProblemError::Domain { what: "u", index: 1, side: "upper", .. }
        ));
        let err = p.eval_cost(&[0.0], &[0.0, -4.1]).unwrap_err();
        assert!(matches!(
            err,
            ProblemError::Domain { what: "y", index: 2, side: "lower", .. }
        ));
        // within the membership tolerance
        assert!(p.eval_cost(&[1.0 + 5e-10], &[1.7, 4.0]).is_ok());
    }

    #[test]
    fn box_rejects_bad_bounds() {
        assert!(Bounds::new(vec![], vec![]).is_err());
        assert!(Bounds::new(vec![1.0], vec![0.0]).is_err());
        assert!(Bounds::new(vec![0.0], vec![f64::INFINITY]).is_err());
        assert!(Bounds::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(Bounds::new(vec![0.5], vec![0.5]).is_ok());
    }

    #[test]
    fn axis_nodes_include_endpoints() {
        let b = Bounds::new(vec![-1.7], vec![1.7]).unwrap();
        let nodes = b.axis_nodes(0, 5);
        assert_eq!(nodes.first(), Some(&-1.7));
        assert_eq!(nodes.last(), Some(&1.7));
        assert_eq!(nodes[2], 0.0);
        assert_eq!(b.axis_nodes(0, 1), vec![0.0]);
    }

    #[test]
    fn pendulum_affine_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let err = pendulum()
            .affine_reconstruction_error(1000, &mut rng)
            .unwrap();
        assert!(err <= 1e-12, "{err}");
    }

    #[test]
    fn load_builtin_by_name() {
        let p = load_problem("name = \"pendulum\"\n").unwrap();
        assert_eq!(p.name(), "pendulum");
        assert_eq!((p.state_dim(), p.control_dim()), (2, 1));
        assert!(p.affine_structure().is_some());
        let p = load_problem("builtin = \"pendulum\"\n").unwrap();
        assert_eq!(p.state_box().upper(), &[1.7, 4.0]);
        assert!(load_problem("builtin = \"cartpole\"\n").is_err());
    }

    const CONSTANT: &str = r#"
name = "constant"
m = 1
n = 1
control_lower = [-1.0]
control_upper = [1.0]
state_lower = [-1.0]
state_upper = [1.0]
f = ["0"]
g = "1"
"#;

    #[test]
    fn load_constant_problem() {
        let p = load_problem(CONSTANT).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let u = p.control_box().sample(&mut rng);
            let y = p.state_box().sample(&mut rng);
            assert_eq!(p.eval_cost(&u, &y).unwrap(), 1.0);
            assert_eq!(p.eval_dynamics(&u, &y).unwrap(), vec![0.0]);
        }
        // g has no control term, so no affine structure
        assert!(p.affine_structure().is_none());
    }

    #[test]
    fn affine_detection_rejects_missing_control_weight() {
        let text = CONSTANT.replace("[\"0\"]", "[\"u1\"]").replace("\"1\"", "\"y1^2\"");
        let p = load_problem(&text).unwrap();
        assert!(p.affine_structure().is_none());
    }

    #[test]
    fn affine_detection_on_expression_pendulum() {
        let text = r#"
name = "pendulum-expr"
m = 2
n = 1
control_lower = [-1.0]
control_upper = [1.0]
state_lower = [-1.7, -4.0]
state_upper = [1.7, 4.0]
f = ["y2", "u1 - 0.3*y2 - 4*sin(y1)"]
g = "u1^2 - y1^2"
"#;
        let p = load_problem(text).unwrap();
        let aff = p.affine_structure().expect("affine");
        assert_eq!(aff.control_weight, vec![1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(p.affine_reconstruction_error(1000, &mut rng).unwrap() <= 1e-12);
        let builtin = pendulum();
        for _ in 0..100 {
            let u = p.control_box().sample(&mut rng);
            let y = p.state_box().sample(&mut rng);
            assert_eq!(
                p.eval_dynamics(&u, &y).unwrap(),
                builtin.eval_dynamics(&u, &y).unwrap()
            );
        }
    }

    #[test]
    fn affine_detection_rejects_cross_terms_and_linear_cost() {
        let base = r#"
m = 1
n = 2
control_lower = [-1.0, -1.0]
control_upper = [1.0, 1.0]
state_lower = [-1.0]
state_upper = [1.0]
f = ["u1 + y1*u2"]
"#;
        let p = load_problem(&format!("{base}g = \"u1^2 + 2*u2^2 + y1\"\n")).unwrap();
        assert_eq!(p.affine_structure().unwrap().control_weight, vec![1.0, 2.0]);
        let p = load_problem(&format!("{base}g = \"u1^2 + u2^2 + u1*u2\"\n")).unwrap();
        assert!(p.affine_structure().is_none());
        let p = load_problem(&format!("{base}g = \"u1^2 + u2^2 + u1\"\n")).unwrap();
        assert!(p.affine_structure().is_none());
        let p = load_problem(&format!("{base}g = \"u1^2 + y1*u2^2\"\n")).unwrap();
        assert!(p.affine_structure().is_none());
    }

    #[test]
    fn parse_errors_report_document_position() {
        let text = "m = 1\nn = 1\ncontrol_lower = [-1.0]\ncontrol_upper = [1.0]\nstate_lower = [-1.0]\nstate_upper = [1.0]\nf = [\"y1 + * 2\"]\ng = \"1\"\n";
        match load_problem(text).unwrap_err() {
            ProblemError::Parse { line, column, .. } => {
                assert_eq!(line, 7);
                assert_eq!(column, 12);
            }
            other => panic!("unexpected {other:?}"),
        }
        match load_problem("m = = 1").unwrap_err() {
            ProblemError::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dimension_and_compactness_errors() {
        let bad_dim = CONSTANT.replace("f = [\"0\"]", "f = [\"0\", \"1\"]");
        assert!(matches!(
            load_problem(&bad_dim).unwrap_err(),
            ProblemError::DimensionMismatch { .. }
        ));
        let bad_box = CONSTANT.replace("state_upper = [1.0]", "state_upper = [inf]");
        assert!(matches!(
            load_problem(&bad_box).unwrap_err(),
            ProblemError::NonCompactBox { .. }
        ));
    }

    #[test]
    fn expression_evaluation_is_deterministic() {
        let p = load_problem(
            &CONSTANT
                .replace("[\"0\"]", "[\"sin(y1)*u1 - cos(y1)^3/7\"]")
                .replace("\"1\"", "\"u1^2 + y1^5 - 0.1\""),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let u = p.control_box().sample(&mut rng);
            let y = p.state_box().sample(&mut rng);
            let a = p.eval_dynamics(&u, &y).unwrap();
            let b = p.eval_dynamics(&u, &y).unwrap();
            assert_eq!(a[0].to_bits(), b[0].to_bits());
            assert_eq!(
                p.eval_cost(&u, &y).unwrap().to_bits(),
                p.eval_cost(&u, &y).unwrap().to_bits()
            );
        }
    }

    proptest::proptest! {
        #[test]
        fn sampled_points_are_members(seed in 0u64..10_000, lo in -10.0f64..10.0, w in 0.0f64..5.0) {
            let b = Bounds::new(vec![lo, lo * 0.5], vec![lo + w, lo * 0.5 + 2.0 * w]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = b.sample(&mut rng);
            proptest::prop_assert!(b.contains(&x));
            proptest::prop_assert!(b.contains_exact(&x));
        }
    }
}
