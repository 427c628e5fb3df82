//! Closed-loop integration with an adaptive Dormand–Prince 5(4) pair, limit
//! cycle detection on a Poincaré section, and period averages.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::basis::MonomialBasis;
use crate::control::FeedbackLaw;
use crate::error::SimError;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Sampling interval of the reported trajectory; `None` means
    /// `horizon / 4096`.
    pub report_step: Option<f64>,
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            report_step: None,
            min_step: 1e-12,
            max_steps: 5_000_000,
        }
    }
}

/// One accepted step with its continuous extension.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    cont: [Vec<f64>; 5],
}

impl DenseStep {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn start(&self) -> &[f64] {
        &self.cont[0]
    }

    pub fn end(&self) -> Vec<f64> {
        self.cont[0].iter().zip(&self.cont[1]).map(|(a, b)| a + b).collect()
    }

    /// Fifth-order interpolant at `t ∈ [t0, t0 + h]`.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let s = if self.h == 0.0 { 0.0 } else { (t - self.t0) / self.h };
        let s1 = 1.0 - s;
        let [c0, c1, c2, c3, c4] = &self.cont;
        (0..c0.len())
            .map(|i| c0[i] + s * (c1[i] + s1 * (c2[i] + s * (c3[i] + s1 * c4[i]))))
            .collect()
    }
}

/// Outcome of [`dopri5`]: accepted steps plus the stopping reason.
#[derive(Debug, Clone)]
pub struct Solution {
    pub steps: Vec<DenseStep>,
    pub t_end: f64,
    pub y_end: Vec<f64>,
    pub evaluations: usize,
    pub error: Option<SimError>,
}

/// Integrates `y' = rhs(t, y)` from `t0` to `t_end`. `accept` is called after
/// each accepted step and may stop the integration by returning an error.
pub fn dopri5(
    rhs: &dyn Fn(f64, &[f64], &mut [f64]),
    t0: f64,
    y0: &[f64],
    t_end: f64,
    cfg: &IntegratorConfig,
    accept: &mut dyn FnMut(&DenseStep) -> Result<(), SimError>,
) -> Solution {
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ys = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut steps = Vec::new();
    let mut evaluations = 1;
    rhs(t, &y, &mut k1);
    let span = t_end - t0;
    if span <= 0.0 {
        return Solution {
            steps,
            t_end: t,
            y_end: y,
            evaluations,
            error: None,
        };
    }
    let mut h = initial_step(&y, &k1, cfg).min(span);
    let mut accepted = 0usize;
    let mut err_prev: f64 = 1e-4;
    let mut rejected_last = false;

    while t < t_end {
        if accepted >= cfg.max_steps {
            return Solution {
                steps,
                t_end: t,
                y_end: y,
                evaluations,
                error: Some(SimError::StepFailure { time: t, step: h }),
            };
        }
        let last = t + h >= t_end - 1e-14 * t_end.abs().max(1.0);
        if last {
            h = t_end - t;
        }
        for i in 0..n {
            ys[i] = y[i] + h * A21 * k1[i];
        }
        rhs(t + C2 * h, &ys, &mut k2);
        for i in 0..n {
            ys[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h, &ys, &mut k3);
        for i in 0..n {
            ys[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h, &ys, &mut k4);
        for i in 0..n {
            ys[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h, &ys, &mut k5);
        for i in 0..n {
            ys[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(t + h, &ys, &mut k6);
        for i in 0..n {
            y1[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        rhs(t + h, &y1, &mut k7);
        evaluations += 6;

        let mut err = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = cfg.atol + cfg.rtol * y[i].abs().max(y1[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            h *= 0.1;
            rejected_last = true;
            if h.abs() < cfg.min_step {
                return failure(steps, t, y, evaluations, h);
            }
            continue;
        }

        if err <= 1.0 {
            // PI step control with Hairer's default exponents
            let mut fac = 0.9 * err.max(1e-10).powf(-0.17) * err_prev.powf(0.04);
            fac = fac.clamp(0.2, 10.0);
            if rejected_last {
                fac = fac.min(1.0);
            }
            err_prev = err.max(1e-4);
            let cont = dense_coefficients(h, &y, &y1, &k1, &k3, &k4, &k5, &k6, &k7);
            let step = DenseStep { t0: t, h, cont };
            t = if last { t_end } else { t + h };
            std::mem::swap(&mut y, &mut y1);
            std::mem::swap(&mut k1, &mut k7);
            accepted += 1;
            let verdict = accept(&step);
            steps.push(step);
            if let Err(e) = verdict {
                return Solution {
                    steps,
                    t_end: t,
                    y_end: y,
                    evaluations,
                    error: Some(e),
                };
            }
            h *= fac;
            rejected_last = false;
        } else {
            h *= (0.9 * err.powf(-0.2)).max(0.2);
            rejected_last = true;
        }
        if h.abs() < cfg.min_step && t < t_end {
            return failure(steps, t, y, evaluations, h);
        }
    }
    Solution {
        steps,
        t_end: t,
        y_end: y,
        evaluations,
        error: None,
    }
}

fn failure(steps: Vec<DenseStep>, t: f64, y: Vec<f64>, evaluations: usize, h: f64) -> Solution {
    Solution {
        steps,
        t_end: t,
        y_end: y,
        evaluations,
        error: Some(SimError::StepFailure { time: t, step: h }),
    }
}

fn initial_step(y: &[f64], f: &[f64], cfg: &IntegratorConfig) -> f64 {
    let (mut d0, mut d1) = (0.0, 0.0);
    for i in 0..y.len() {
        let sc = cfg.atol + cfg.rtol * y[i].abs();
        d0 += (y[i] / sc).powi(2);
        d1 += (f[i] / sc).powi(2);
    }
    let (d0, d1) = (d0.sqrt(), d1.sqrt());
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.clamp(cfg.min_step * 10.0, 0.1)
}

#[allow(clippy::too_many_arguments)]
fn dense_coefficients(
    h: f64,
    y0: &[f64],
    y1: &[f64],
    k1: &[f64],
    k3: &[f64],
    k4: &[f64],
    k5: &[f64],
    k6: &[f64],
    k7: &[f64],
) -> [Vec<f64>; 5] {
    let n = y0.len();
    let mut c = [
        y0.to_vec(),
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    ];
    for i in 0..n {
        let dy = y1[i] - y0[i];
        let bspl = h * k1[i] - dy;
        c[1][i] = dy;
        c[2][i] = bspl;
        c[3][i] = dy - h * k7[i] - bspl;
        c[4][i] = h
            * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    c
}

/// Locates the step containing `t` by binary search.
fn step_at(steps: &[DenseStep], t: f64) -> Option<&DenseStep> {
    let i = steps.partition_point(|s| s.t1() < t);
    steps.get(i).or_else(|| steps.last())
}

/// Period-integrated quantities of a detected cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleQuadrature {
    /// `∮ g dt`.
    pub cost_integral: f64,
    /// `∮ h_i dt` for the feedback law's basis.
    pub moment_integrals: Vec<f64>,
    /// Largest `|h_i|` seen along the period, per index.
    pub moment_scale: Vec<f64>,
    pub rtol: f64,
    pub atol: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub t_star: Option<f64>,
    pub closure_error: Option<f64>,
    /// First time the state left `Y`, if it did.
    pub left_box_at: Option<f64>,
    pub quadrature: Option<CycleQuadrature>,
    #[serde(skip)]
    pub steps: Vec<DenseStep>,
}

impl Trajectory {
    pub fn state_at(&self, t: f64) -> Option<Vec<f64>> {
        step_at(&self.steps, t).map(|s| s.eval(t.clamp(s.t0, s.t1())))
    }

    /// Header `t,y1..ym,u1..un`.
    pub fn to_csv(&self) -> String {
        let m = self.states.first().map_or(0, Vec::len);
        let n = self.controls.first().map_or(0, Vec::len);
        let mut out = String::from("t");
        for j in 1..=m {
            let _ = write!(out, ",y{j}");
        }
        for k in 1..=n {
            let _ = write!(out, ",u{k}");
        }
        out.push('\n');
        for ((t, y), u) in self.times.iter().zip(&self.states).zip(&self.controls) {
            let _ = write!(out, "{t:.12e}");
            for v in y.iter().chain(u) {
                let _ = write!(out, ",{v:.12e}");
            }
            out.push('\n');
        }
        out
    }
}

/// A failed integration together with the trajectory up to the failure.
#[derive(Debug, Clone)]
pub struct IntegrationFailure {
    pub error: SimError,
    pub partial: Trajectory,
}

impl std::fmt::Display for IntegrationFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for IntegrationFailure {}

fn closed_loop_rhs(law: &FeedbackLaw) -> impl Fn(f64, &[f64], &mut [f64]) + '_ {
    move |_t, y, out| {
        let u = law.minimize(y).u;
        law.problem().dynamics_into(&u, y, out);
    }
}

fn box_guard<'a>(law: &'a FeedbackLaw) -> impl FnMut(&DenseStep) -> Result<(), SimError> + 'a {
    let sb = law.problem().state_box();
    move |s: &DenseStep| {
        let y = s.end();
        if sb.contains(&y) {
            Ok(())
        } else {
            Err(SimError::StateLeftY {
                time: s.t1(),
                detail: format!("y = {y:?}"),
            })
        }
    }
}

fn sample(law: &FeedbackLaw, steps: &[DenseStep], t0: f64, t_end: f64, dt: f64, y0: &[f64]) -> Trajectory {
    let mut traj = Trajectory::default();
    let count = if dt > 0.0 && t_end > t0 {
        ((t_end - t0) / dt).round().max(1.0) as usize
    } else {
        0
    };
    for i in 0..=count {
        let t = if i == count { t_end } else { t0 + i as f64 * dt };
        let y = if i == 0 {
            y0.to_vec()
        } else {
            let s = step_at(steps, t).expect("non-empty steps");
            s.eval(t.min(s.t1()))
        };
        traj.controls.push(law.minimize(&y).u);
        traj.states.push(y);
        traj.times.push(t);
    }
    traj
}

/// Integrates the closed loop `y' = f(uᴺ(y), y)` from `y0` over `horizon`.
pub fn integrate_closed_loop(
    law: &FeedbackLaw,
    y0: &[f64],
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, IntegrationFailure> {
    let problem = law.problem();
    if let Err(e) = problem.state_box().check(y0, "y0") {
        return Err(IntegrationFailure {
            error: e.into(),
            partial: Trajectory::default(),
        });
    }
    let rhs = closed_loop_rhs(law);
    let mut guard = box_guard(law);
    let sol = dopri5(&rhs, 0.0, y0, horizon.max(0.0), cfg, &mut guard);
    let dt = cfg.report_step.unwrap_or(horizon / 4096.0);
    let mut traj = sample(law, &sol.steps, 0.0, sol.t_end, dt, y0);
    traj.steps = sol.steps;
    match sol.error {
        None => Ok(traj),
        Some(error) => {
            if let SimError::StateLeftY { time, .. } = error {
                traj.left_box_at = Some(time);
            }
            Err(IntegrationFailure {
                error,
                partial: traj,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleConfig {
    pub warmup_fraction: f64,
    pub eps_cycle: f64,
    pub min_period: f64,
    /// Samples in the reported one-period slice.
    pub period_samples: usize,
    pub integrator: IntegratorConfig,
}

impl Default for CycleConfig {
    fn default() -> Self {
        Self {
            warmup_fraction: 0.5,
            eps_cycle: 1e-5,
            min_period: 1e-2,
            period_samples: 2048,
            integrator: IntegratorConfig::default(),
        }
    }
}

/// Speed below which the warmup point counts as an equilibrium.
const EQUILIBRIUM_SPEED: f64 = 1e-8;
/// A "cycle" whose state range stays within this many `ε_cycle` is a
/// trajectory settling onto an equilibrium.
const EQUILIBRIUM_AMPLITUDE: f64 = 100.0;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Finds the period of the attracting cycle on the post-warmup part of
/// `traj`, then re-integrates exactly one period from the refined section
/// point with the cost and moment integrals appended to the state.
pub fn detect_limit_cycle(traj: &Trajectory, law: &FeedbackLaw, cfg: &CycleConfig) -> Result<Trajectory, SimError> {
    let steps = &traj.steps;
    let (Some(first), Some(last)) = (steps.first(), steps.last()) else {
        return Err(SimError::TooShort("trajectory has no integration steps".into()));
    };
    let (t_begin, t_end) = (first.t0, last.t1());
    let t_a = t_begin + cfg.warmup_fraction * (t_end - t_begin);
    if t_end - t_a < 4.0 * cfg.min_period {
        return Err(SimError::TooShort(format!(
            "post-warmup span {:.3e} is below four minimum periods",
            t_end - t_a
        )));
    }
    let problem = law.problem();
    let y_a = traj.state_at(t_a).expect("non-empty");
    let mut f_a = vec![0.0; y_a.len()];
    problem.dynamics_into(&law.minimize(&y_a).u, &y_a, &mut f_a);
    let speed = norm(&f_a);
    if speed < EQUILIBRIUM_SPEED {
        return Err(SimError::EquilibriumDetected { speed });
    }
    let normal: Vec<f64> = f_a.iter().map(|v| v / speed).collect();
    let section = |y: &[f64]| -> f64 { normal.iter().zip(y.iter().zip(&y_a)).map(|(n, (a, b))| n * (a - b)).sum() };

    // upward crossings of the section, starting with the warmup point itself
    let mut returns: Vec<(f64, Vec<f64>)> = vec![(t_a, y_a.clone())];
    let mut closest = f64::INFINITY;
    let start = steps.partition_point(|s| s.t1() <= t_a);
    for s in &steps[start..] {
        let (lo_t, hi_t) = (s.t0.max(t_a), s.t1());
        let lo_y = s.eval(lo_t);
        let hi_y = s.end();
        let (sl, sh) = (section(&lo_y), section(&hi_y));
        if !(sl < 0.0 && sh >= 0.0) {
            continue;
        }
        let (mut a, mut b) = (lo_t, hi_t);
        while b - a > 1e-10 {
            let mid = 0.5 * (a + b);
            if section(&s.eval(mid)) < 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        let tc = 0.5 * (a + b);
        let prev_t = returns.last().expect("non-empty").0;
        if tc - prev_t < cfg.min_period {
            continue;
        }
        let yc = s.eval(tc);
        let d = distance(&yc, &returns.last().expect("non-empty").1);
        closest = closest.min(d);
        returns.push((tc, yc));
        if d <= cfg.eps_cycle && returns.len() >= 3 {
            let k = returns.len() - 1;
            let t_star = returns[k].0 - returns[k - 1].0;
            return period_slice(law, &returns[k].1, returns[k].0, t_star, cfg);
        }
    }
    Err(SimError::NoLimitCycle {
        closest,
        crossings: returns.len() - 1,
    })
}

fn period_slice(law: &FeedbackLaw, y0: &[f64], t0: f64, t_star: f64, cfg: &CycleConfig) -> Result<Trajectory, SimError> {
    let problem = law.problem();
    let basis = law.psi().basis();
    let (m, nb) = (problem.state_dim(), basis.len());
    let scale = std::sync::Mutex::new(vec![0.0f64; nb]);
    let rhs = |_t: f64, z: &[f64], out: &mut [f64]| {
        let y = &z[..m];
        let u = law.minimize(y).u;
        problem.dynamics_into(&u, y, &mut out[..m]);
        out[m] = problem.cost_unchecked(&u, y);
        let (f, h) = out.split_at_mut(m + 1);
        basis.h_all_with_velocity(y, &f[..m], h);
        let mut sc = scale.lock().expect("not poisoned");
        for (s, v) in sc.iter_mut().zip(h.iter()) {
            *s = s.max(v.abs());
        }
    };
    let mut z0 = y0.to_vec();
    z0.resize(m + 1 + nb, 0.0);
    let mut guard = |_: &DenseStep| Ok(());
    let sol = dopri5(&rhs, t0, &z0, t0 + t_star, &cfg.integrator, &mut guard);
    if let Some(e) = sol.error {
        return Err(e);
    }
    let y_end = &sol.y_end[..m];
    let closure = distance(y_end, y0);

    let dt = t_star / cfg.period_samples.max(1) as f64;
    let steps: Vec<DenseStep> = sol
        .steps
        .iter()
        .map(|s| DenseStep {
            t0: s.t0,
            h: s.h,
            cont: s.cont.clone().map(|mut c| {
                c.truncate(m);
                c
            }),
        })
        .collect();
    let mut traj = sample(law, &steps, t0, t0 + t_star, dt, y0);
    let (lo, hi) = traj.states.iter().fold(
        (vec![f64::INFINITY; m], vec![f64::NEG_INFINITY; m]),
        |(mut lo, mut hi), y| {
            for j in 0..m {
                lo[j] = lo[j].min(y[j]);
                hi[j] = hi[j].max(y[j]);
            }
            (lo, hi)
        },
    );
    let range = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    if range <= EQUILIBRIUM_AMPLITUDE * cfg.eps_cycle {
        let mut f = vec![0.0; m];
        problem.dynamics_into(&law.minimize(y0).u, y0, &mut f);
        return Err(SimError::EquilibriumDetected { speed: norm(&f) });
    }
    traj.steps = steps;
    traj.t_star = Some(t_star);
    traj.closure_error = Some(closure);
    traj.quadrature = Some(CycleQuadrature {
        cost_integral: sol.y_end[m],
        moment_integrals: sol.y_end[m + 1..].to_vec(),
        moment_scale: scale.into_inner().expect("not poisoned"),
        rtol: cfg.integrator.rtol,
        atol: cfg.integrator.atol,
    });
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageCost {
    pub value: f64,
    /// Tolerance-propagated bound on the quadrature error.
    pub error_estimate: f64,
}

/// `(1/T*) ∮ g dt` over the detected period.
pub fn average_cost(traj: &Trajectory) -> Result<AverageCost, SimError> {
    let (Some(t), Some(q)) = (traj.t_star, traj.quadrature.as_ref()) else {
        return Err(SimError::TooShort("no detected period".into()));
    };
    let value = q.cost_integral / t;
    Ok(AverageCost {
        value,
        error_estimate: q.rtol * value.abs() + q.atol / t,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMoments {
    /// `(1/T*) ∮ h_i dt`.
    pub values: Vec<f64>,
    /// `max_t |h_i|` along the period.
    pub scale: Vec<f64>,
}

impl EmpiricalMoments {
    /// Moments divided by their integrand magnitude.
    pub fn normalized(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.scale)
            .map(|(v, s)| if *s > 0.0 { v / s } else { *v })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    pub fn max_normalized(&self) -> f64 {
        self.normalized().iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

/// Period averages of the `h_i` of `basis`, which must be the basis of the
/// feedback law that produced the cycle.
pub fn empirical_moments(traj: &Trajectory, basis: &MonomialBasis) -> Result<EmpiricalMoments, SimError> {
    let (Some(t), Some(q)) = (traj.t_star, traj.quadrature.as_ref()) else {
        return Err(SimError::TooShort("no detected period".into()));
    };
    if q.moment_integrals.len() != basis.len() {
        return Err(SimError::TooShort(format!(
            "cycle carries {} moments, basis has {}",
            q.moment_integrals.len(),
            basis.len()
        )));
    }
    Ok(EmpiricalMoments {
        values: q.moment_integrals.iter().map(|v| v / t).collect(),
        scale: q.moment_scale.clone(),
    })
}
