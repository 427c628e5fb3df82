//! Global minimization of the reduced cost `r(x) = g(x) + Σ λ_i h_i(x)` over
//! `U × Y`: a dense grid scan followed by compass-search polishing.

use rayon::prelude::*;

use crate::basis::MonomialBasis;
use crate::grid::{axis_nodes, lex_cmp, GridPoint};
use crate::lp::DualCertificate;

#[derive(Debug, Clone, PartialEq)]
pub struct PricingConfig {
    /// Grid nodes per axis of `X`; one entry applies to all axes.
    pub resolution: Vec<usize>,
    /// Grid local minima polished by pattern search.
    pub seeds: usize,
    /// Pattern-search iteration cap per seed.
    pub refinement_iterations: usize,
    /// Certified tolerance on `r` of the refined minimum.
    pub tolerance: f64,
}

impl Default for PricingConfig {
    fn default() -> Self {
        Self {
            resolution: vec![64],
            seeds: 8,
            refinement_iterations: 400,
            tolerance: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricingResult {
    pub point: GridPoint,
    /// `a = r(point)`.
    pub value: f64,
    /// Smallest value found on the scan grid alone.
    pub grid_value: f64,
    /// Two polished seeds ended more than 1e-3 apart.
    pub multimodal: bool,
    pub evaluations: usize,
}

/// Evaluator of `r` for a fixed dual.
pub(crate) struct ReducedCost<'a> {
    basis: &'a MonomialBasis,
    dual: &'a DualCertificate,
    n: usize,
}

impl<'a> ReducedCost<'a> {
    pub(crate) fn new(basis: &'a MonomialBasis, dual: &'a DualCertificate) -> Self {
        Self {
            basis,
            dual,
            n: basis.problem().control_dim(),
        }
    }

    /// `r` at `x = (u, y)` given as one coordinate slice.
    pub(crate) fn eval(&self, x: &[f64]) -> f64 {
        let (u, y) = x.split_at(self.n);
        let m = y.len();
        let mut grad = vec![0.0; m];
        let mut f = vec![0.0; m];
        self.basis.weighted_gradient(&self.dual.lambda, y, &mut grad);
        let p = self.basis.problem();
        p.dynamics_into(u, y, &mut f);
        p.cost_unchecked(u, y) + grad.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Prices over the grid plus any `extra` candidates (e.g. the current support).
pub fn price(
    basis: &MonomialBasis,
    dual: &DualCertificate,
    cfg: &PricingConfig,
    extra: &[GridPoint],
) -> PricingResult {
    let problem = basis.problem();
    let n = problem.control_dim();
    let m = problem.state_dim();
    let axes = axis_nodes(problem, &cfg.resolution);
    let (u_axes, y_axes) = axes.split_at(n);
    let u_grid = product(u_axes);
    let y_grid = product(y_axes);
    let ny = y_grid.len();
    let r = ReducedCost::new(basis, dual);

    // values[iu * ny + iy] follows the lexicographic order of (u, y)
    let per_y: Vec<Vec<f64>> = y_grid
        .par_iter()
        .map(|y| {
            let mut grad = vec![0.0; m];
            let mut f = vec![0.0; m];
            basis.weighted_gradient(&dual.lambda, y, &mut grad);
            u_grid
                .iter()
                .map(|u| {
                    problem.dynamics_into(u, y, &mut f);
                    problem.cost_unchecked(u, y)
                        + grad.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect()
        })
        .collect();
    let total = u_grid.len() * ny;
    let value_at = |idx: usize| per_y[idx % ny][idx / ny];
    let mut evaluations = total;

    let shape: Vec<usize> = axes.iter().map(Vec::len).collect();
    let mut seeds = grid_local_minima(&shape, &value_at, cfg.seeds);
    if seeds.len() < cfg.seeds {
        let mut order: Vec<usize> = (0..total).collect();
        order.sort_by(|&a, &b| value_at(a).total_cmp(&value_at(b)).then(a.cmp(&b)));
        for idx in order {
            if seeds.len() >= cfg.seeds {
                break;
            }
            if !seeds.contains(&idx) {
                seeds.push(idx);
            }
        }
    }
    let grid_best = (0..total)
        .min_by(|&a, &b| value_at(a).total_cmp(&value_at(b)).then(a.cmp(&b)))
        .expect("non-empty grid");
    let grid_value = value_at(grid_best);

    let to_coords = |idx: usize| -> Vec<f64> {
        let (iu, iy) = (idx / ny, idx % ny);
        u_grid[iu].iter().chain(&y_grid[iy]).copied().collect()
    };
    let lower: Vec<f64> = problem
        .control_box()
        .lower()
        .iter()
        .chain(problem.state_box().lower())
        .copied()
        .collect();
    let upper: Vec<f64> = problem
        .control_box()
        .upper()
        .iter()
        .chain(problem.state_box().upper())
        .copied()
        .collect();
    let spacing: Vec<f64> = shape
        .iter()
        .zip(lower.iter().zip(&upper))
        .map(|(&k, (lo, hi))| if k > 1 { (hi - lo) / (k - 1) as f64 } else { 0.5 * (hi - lo) })
        .collect();

    let mut starts: Vec<(Vec<f64>, f64)> = seeds
        .iter()
        .map(|&i| (to_coords(i), value_at(i)))
        .collect();
    for p in extra {
        let x: Vec<f64> = p.coords().collect();
        let v = r.eval(&x);
        evaluations += 1;
        starts.push((x, v));
    }

    let polished: Vec<(Vec<f64>, f64, usize)> = starts
        .into_par_iter()
        .map(|(x, v)| {
            compass_search(&|z: &[f64]| r.eval(z), x, v, &lower, &upper, &spacing, cfg.refinement_iterations)
        })
        .collect();

    let mut best = (to_coords(grid_best), grid_value);
    let mut lo_v = f64::INFINITY;
    let mut hi_v = f64::NEG_INFINITY;
    for (x, v, evals) in polished.iter().take(seeds.len()) {
        lo_v = lo_v.min(*v);
        hi_v = hi_v.max(*v);
        let _ = (x, evals);
    }
    for (x, v, evals) in polished {
        evaluations += evals;
        let better = v < best.1 || (v == best.1 && lex_cmp(&x, &best.0).is_lt());
        if better {
            best = (x, v);
        }
    }
    PricingResult {
        point: GridPoint::from_coords(&best.0, n),
        value: best.1,
        grid_value,
        multimodal: hi_v - lo_v > 1e-3,
        evaluations,
    }
}

fn product(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
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

/// Up to `k` grid points that are no larger than any axis neighbour, best
/// first (ties by lexicographic index).
fn grid_local_minima(shape: &[usize], value_at: &dyn Fn(usize) -> f64, k: usize) -> Vec<usize> {
    let total: usize = shape.iter().product();
    let mut strides = vec![1usize; shape.len()];
    for a in (0..shape.len().saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * shape[a + 1];
    }
    let mut minima: Vec<usize> = (0..total)
        .filter(|&idx| {
            let v = value_at(idx);
            shape.iter().enumerate().all(|(a, &len)| {
                let pos = (idx / strides[a]) % len;
                (pos == 0 || value_at(idx - strides[a]) >= v)
                    && (pos + 1 == len || value_at(idx + strides[a]) >= v)
            })
        })
        .collect();
    minima.sort_by(|&a, &b| value_at(a).total_cmp(&value_at(b)).then(a.cmp(&b)));
    minima.truncate(k);
    minima
}

/// Projected compass search with step halving; moves only on strict
/// improvement. Returns the final point, its value, and evaluation count.
fn compass_search(
    f: &dyn Fn(&[f64]) -> f64,
    mut x: Vec<f64>,
    mut fx: f64,
    lower: &[f64],
    upper: &[f64],
    spacing: &[f64],
    max_iter: usize,
) -> (Vec<f64>, f64, usize) {
    let mut scale = 1.0;
    let mut evals = 0;
    let mut trial = x.clone();
    for _ in 0..max_iter {
        if scale < 1e-10 {
            break;
        }
        let mut best: Option<(Vec<f64>, f64)> = None;
        for a in 0..x.len() {
            let h = spacing[a] * scale;
            if h == 0.0 {
                continue;
            }
            for dir in [-1.0, 1.0] {
                trial.copy_from_slice(&x);
                trial[a] = (x[a] + dir * h).clamp(lower[a], upper[a]);
                if trial[a] == x[a] {
                    continue;
                }
                let v = f(&trial);
                evals += 1;
                if v < best.as_ref().map_or(fx, |b| b.1) {
                    best = Some((trial.clone(), v));
                }
            }
        }
        match best {
            Some((bx, bv)) => {
                x = bx;
                fx = bv;
            }
            None => scale *= 0.5,
        }
    }
    (x, fx, evals)
}
