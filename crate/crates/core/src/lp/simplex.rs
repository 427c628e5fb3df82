//! Two-phase revised simplex over `min cᵀx, A x = b, x ≥ 0` with a dense
//! basis refactorized every pivot.
//!
//! Artificial variables keep their basis slots after phase 1 and are pinned
//! at zero: they may leave but never re-enter. Pricing is normalized Dantzig,
//! switching to Bland's rule after a run of degenerate pivots.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::inverse::{BasisInverse, REFACTOR_EVERY};

/// Negative weights the exact-rhs cleanup still pivots away. Much tighter
/// than the reporting tolerance: on ill-conditioned bases a weight of -1e-9
/// can move the objective by 1e-7.
const CLEANUP_FEASIBILITY: f64 = 1e-13;
use crate::error::LpError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexTolerances {
    /// Reduced-cost threshold for optimality.
    pub optimality: f64,
    /// Primal feasibility threshold (phase-1 objective, ratio slack).
    pub feasibility: f64,
    /// Smallest admissible pivot element in the ratio test.
    pub pivot: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
    /// Weight of the random interior point mixed into `b` while pivoting;
    /// the exact `b` is restored by a dual simplex cleanup.
    pub perturbation: f64,
}

impl Default for SimplexTolerances {
    fn default() -> Self {
        Self {
            optimality: 1e-8,
            feasibility: 1e-9,
            pivot: 1e-10,
            bland_after: 40,
            perturbation: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Var {
    Column(usize),
    Artificial(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

#[derive(Debug, Clone)]
pub(crate) struct Simplex {
    rows: usize,
    cols: Vec<f64>,
    costs: Vec<f64>,
    norms: Vec<f64>,
    rhs: Vec<f64>,
    /// Perturbed right-hand side the primal phases work on.
    work_rhs: Vec<f64>,
    basis: Vec<Var>,
    /// Sign of each artificial column `±e_r`.
    art_sign: Vec<f64>,
    is_basic: Vec<bool>,
    feasible: bool,
    tol: SimplexTolerances,
    pub(crate) pivots: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct SimplexSolution {
    /// Value per structural column.
    pub(crate) primal: Vec<f64>,
    /// Row duals `y` with `c_j − yᵀA_j ≥ 0` at optimality.
    pub(crate) duals: Vec<f64>,
    pub(crate) objective: f64,
    pub(crate) basis: Vec<Var>,
}

impl Simplex {
    pub(crate) fn new(rhs: Vec<f64>, tol: SimplexTolerances) -> Self {
        let rows = rhs.len();
        let art_sign = rhs.iter().map(|b| if *b < 0.0 { -1.0 } else { 1.0 }).collect();
        Self {
            rows,
            cols: Vec::new(),
            costs: Vec::new(),
            norms: Vec::new(),
            work_rhs: rhs.clone(),
            rhs,
            basis: (0..rows).map(Var::Artificial).collect(),
            art_sign,
            is_basic: Vec::new(),
            feasible: false,
            tol,
            pivots: 0,
        }
    }

    /// Drops the warm-start basis; the next solve starts from phase 1.
    pub(crate) fn reset(&mut self) {
        self.basis = (0..self.rows).map(Var::Artificial).collect();
        self.art_sign = self.rhs.iter().map(|b| if *b < 0.0 { -1.0 } else { 1.0 }).collect();
        self.is_basic.iter_mut().for_each(|b| *b = false);
        self.feasible = false;
    }

    pub(crate) fn num_columns(&self) -> usize {
        self.costs.len()
    }

    pub(crate) fn column(&self, j: usize) -> &[f64] {
        &self.cols[j * self.rows..(j + 1) * self.rows]
    }

    pub(crate) fn add_column(&mut self, col: &[f64], cost: f64) {
        debug_assert_eq!(col.len(), self.rows);
        self.cols.extend_from_slice(col);
        self.costs.push(cost);
        self.norms
            .push(col.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300));
        self.is_basic.push(false);
    }

    fn basis_matrix(&self) -> Vec<f64> {
        let m = self.rows;
        let mut b = vec![0.0; m * m];
        for (k, v) in self.basis.iter().enumerate() {
            match *v {
                Var::Column(j) => b[k * m..(k + 1) * m].copy_from_slice(self.column(j)),
                Var::Artificial(r) => {
                    b[k * m + r] = self.art_sign[r];
                }
            }
        }
        b
    }

    pub(crate) fn factor_basis(&self) -> Result<BasisInverse, LpError> {
        BasisInverse::from_columns(self.rows, &self.basis_matrix(), 1e-13)
            .ok_or_else(|| LpError::Internal("singular basis matrix".into()))
    }

    fn cost_of(&self, v: Var, phase: Phase) -> f64 {
        match (v, phase) {
            (Var::Column(_), Phase::One) => 0.0,
            (Var::Column(j), Phase::Two) => self.costs[j],
            (Var::Artificial(_), Phase::One) => 1.0,
            (Var::Artificial(_), Phase::Two) => 0.0,
        }
    }

    fn var_order(&self, v: Var) -> usize {
        match v {
            Var::Column(j) => j,
            Var::Artificial(r) => self.num_columns() + r,
        }
    }

    pub(crate) fn solve(&mut self) -> Result<SimplexSolution, LpError> {
        if !self.feasible {
            self.perturb_rhs();
            self.crash();
            self.run(Phase::One)?;
            let lu = self.factor_basis()?;
            let xb = lu.solve(&self.work_rhs);
            let residual: f64 = self
                .basis
                .iter()
                .zip(&xb)
                .filter(|(v, _)| matches!(v, Var::Artificial(_)))
                .map(|(_, x)| x.abs())
                .sum();
            if residual > 1e-8 {
                return Err(LpError::Infeasible {
                    residual,
                    row: self.worst_row(&lu),
                });
            }
            self.feasible = true;
        }
        self.run(Phase::Two)?;
        if self.work_rhs == self.rhs {
            return self.extract();
        }
        let saved = (self.basis.clone(), self.is_basic.clone());
        let cleaned = self.dual_cleanup().and_then(|()| self.extract());
        (self.basis, self.is_basic) = saved;
        cleaned
    }

    /// Mixes a random convex combination of the current columns into `b`.
    /// Feasibility is preserved, and the mixed vector is in general
    /// position, so the perturbed vertices are nondegenerate.
    fn perturb_rhs(&mut self) {
        let eps = self.tol.perturbation;
        if eps <= 0.0 || self.num_columns() == 0 || self.rhs[0] == 0.0 {
            self.work_rhs = self.rhs.clone();
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9);
        let weights: Vec<f64> = (0..self.num_columns()).map(|_| rng.gen_range(0.5..1.5)).collect();
        let total: f64 = weights.iter().sum();
        let mut mix = vec![0.0; self.rows];
        for (j, w) in weights.iter().enumerate() {
            let scale = self.rhs[0] / self.column(j)[0];
            if !scale.is_finite() || scale <= 0.0 {
                continue;
            }
            for (m, a) in mix.iter_mut().zip(self.column(j)) {
                *m += w / total * a * scale;
            }
        }
        if mix[0] == 0.0 {
            self.work_rhs = self.rhs.clone();
            return;
        }
        let fix = self.rhs[0] / mix[0];
        self.work_rhs = self
            .rhs
            .iter()
            .zip(&mix)
            .map(|(b, m)| (1.0 - eps) * b + eps * m * fix)
            .collect();
    }

    /// Dual simplex on the exact `b`, starting from the (dual feasible)
    /// optimal basis of the perturbed problem.
    fn dual_cleanup(&mut self) -> Result<(), LpError> {
        let m = self.rows;
        let limit = 20 * m + 100;
        let mut rejected: Vec<usize> = Vec::new();
        let mut lu = self.factor_basis()?;
        for _ in 0..limit {
            let xb = lu.solve(&self.rhs);
            // violation: structural below zero, or pinned artificial away from zero
            let leave = (0..m)
                .filter_map(|k| {
                    let v = match self.basis[k] {
                        Var::Column(_) => (-xb[k]).max(0.0),
                        Var::Artificial(_) => xb[k].abs(),
                    };
                    (v > CLEANUP_FEASIBILITY).then_some((k, v))
                })
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            let Some((r, violation)) = leave else {
                return Ok(());
            };
            let increase = xb[r] < 0.0;
            let cb: Vec<f64> = self.basis.iter().map(|&v| self.cost_of(v, Phase::Two)).collect();
            let y = lu.solve_transpose(&cb);
            let rho = lu.row(r).to_vec();
            let mut cand: Vec<(usize, f64, f64)> = Vec::new();
            for j in 0..self.num_columns() {
                if self.is_basic[j] || rejected.contains(&j) {
                    continue;
                }
                let col = self.column(j);
                let alpha: f64 = rho.iter().zip(col).map(|(a, b)| a * b).sum();
                let alpha = if increase { -alpha } else { alpha };
                if alpha <= self.tol.pivot {
                    continue;
                }
                let d = self.costs[j] - y.iter().zip(col).map(|(a, b)| a * b).sum::<f64>();
                cand.push((j, d.max(0.0), alpha));
            }
            if cand.is_empty() {
                if violation <= self.tol.feasibility {
                    // the tighter target is best effort
                    return Ok(());
                }
                if !rejected.is_empty() {
                    return Err(LpError::Internal("dual cleanup found no stable pivot".into()));
                }
                return Err(LpError::Infeasible {
                    residual: violation,
                    row: self.worst_row(&lu),
                });
            }
            let bound = cand
                .iter()
                .map(|&(_, d, a)| (d + self.tol.optimality) / a)
                .fold(f64::INFINITY, f64::min);
            let (q, _, _) = cand
                .into_iter()
                .filter(|&(_, d, a)| d / a <= bound)
                .max_by(|x, y| x.2.total_cmp(&y.2).then(y.0.cmp(&x.0)))
                .expect("non-empty");
            let w = lu.solve(self.column(q));
            if w[r].abs() <= 1e-9 * w.iter().fold(0.0f64, |a, b| a.max(b.abs())) {
                rejected.push(q);
                continue;
            }
            let old = self.basis[r];
            self.basis[r] = Var::Column(q);
            if lu.updates + 1 >= REFACTOR_EVERY {
                match self.factor_basis() {
                    Ok(next) => lu = next,
                    Err(_) => {
                        self.basis[r] = old;
                        rejected.push(q);
                        continue;
                    }
                }
            } else {
                lu.update(r, &w);
            }
            rejected.clear();
            if let Var::Column(j) = old {
                self.is_basic[j] = false;
            }
            self.is_basic[q] = true;
            self.pivots += 1;
        }
        let xb = lu.solve(&self.rhs);
        let within = self.basis.iter().zip(&xb).all(|(v, x)| match v {
            Var::Column(_) => *x >= -self.tol.feasibility,
            Var::Artificial(_) => x.abs() <= self.tol.feasibility,
        });
        if within {
            return Ok(());
        }
        Err(LpError::Internal(format!("dual cleanup exceeded {limit} pivots")))
    }

    /// Replaces the row-0 artificial by the single column that leaves the
    /// smallest total infeasibility, flipping the remaining artificials so
    /// they start non-negative. Avoids starting phase 1 at the fully
    /// degenerate all-artificial vertex when most of `b` is zero.
    fn crash(&mut self) {
        if self.basis.iter().any(|v| matches!(v, Var::Column(_))) || self.rows == 0 {
            return;
        }
        let b0 = self.work_rhs[0];
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.num_columns() {
            let col = self.column(j);
            if !(col[0] * b0 > 0.0) || col[0].abs() <= self.tol.pivot {
                continue;
            }
            let g = b0 / col[0];
            let infeas: f64 = (1..self.rows).map(|r| (self.work_rhs[r] - col[r] * g).abs()).sum();
            if best.map_or(true, |(_, v)| infeas < v) {
                best = Some((j, infeas));
            }
        }
        let Some((j, _)) = best else {
            return;
        };
        let col = self.column(j).to_vec();
        let g = b0 / col[0];
        for r in 1..self.rows {
            self.art_sign[r] = if self.work_rhs[r] - col[r] * g < 0.0 { -1.0 } else { 1.0 };
        }
        self.basis[0] = Var::Column(j);
        self.is_basic[j] = true;
    }

    /// Moment row (index ≥ 1 when present) with the largest violation of
    /// `A x = b` by the structural part of the current basic solution.
    fn worst_row(&self, lu: &BasisInverse) -> usize {
        let xb = lu.solve(&self.rhs);
        let mut resid = self.rhs.clone();
        for (k, v) in self.basis.iter().enumerate() {
            if let Var::Column(j) = *v {
                for (r, a) in self.column(j).iter().enumerate() {
                    resid[r] -= a * xb[k].max(0.0);
                }
            }
        }
        let start = usize::from(self.rows > 1);
        (start..self.rows)
            .max_by(|&a, &b| resid[a].abs().total_cmp(&resid[b].abs()).then(b.cmp(&a)))
            .unwrap_or(0)
    }

    fn extract(&self) -> Result<SimplexSolution, LpError> {
        let lu = self.factor_basis()?;
        let xb = lu.solve(&self.rhs);
        let cb: Vec<f64> = self
            .basis
            .iter()
            .map(|&v| self.cost_of(v, Phase::Two))
            .collect();
        let duals = lu.solve_transpose(&cb);
        let mut primal = vec![0.0; self.num_columns()];
        let mut objective = 0.0;
        for (k, v) in self.basis.iter().enumerate() {
            if let Var::Column(j) = *v {
                let x = xb[k].max(0.0);
                primal[j] = x;
                objective += self.costs[j] * x;
            }
        }
        Ok(SimplexSolution {
            primal,
            duals,
            objective,
            basis: self.basis.clone(),
        })
    }

    fn run(&mut self, phase: Phase) -> Result<(), LpError> {
        let m = self.rows;
        let limit = 50 * (m + self.num_columns()) + 1000;
        let mut degenerate_run = 0usize;
        let mut lu = self.factor_basis()?;
        // last basis known to factor, and pivots left to take with a fresh
        // factorization each after falling back to it
        let mut checkpoint = (self.basis.clone(), self.is_basic.clone());
        let mut careful = 0usize;
        // entering candidates whose pivot made the basis numerically singular
        let mut rejected: Vec<usize> = Vec::new();
        // phase 2 stops once rounding-level pivots stop improving the objective
        let stall_limit = 20 * m + 1000;
        let (mut best, mut since_best) = (f64::INFINITY, 0usize);
        for _ in 0..limit {
            let bland = degenerate_run >= self.tol.bland_after;
            let xb = lu.solve(&self.work_rhs);
            let cb: Vec<f64> = self.basis.iter().map(|&v| self.cost_of(v, phase)).collect();
            let y = lu.solve_transpose(&cb);
            let objective: f64 = cb.iter().zip(&xb).map(|(c, x)| c * x).sum();
            if objective < best - 1e-12 * (1.0 + objective.abs()) {
                (best, since_best) = (objective, 0);
            } else {
                since_best += 1;
            }
            if phase == Phase::Two && since_best > stall_limit {
                log::warn!("simplex stopped after {stall_limit} pivots without progress at objective {objective:e}");
                return Ok(());
            }

            // (column, pricing score, reduced cost)
            let mut entering: Option<(usize, f64, f64)> = None;
            for j in 0..self.num_columns() {
                if self.is_basic[j] || rejected.contains(&j) {
                    continue;
                }
                let col = self.column(j);
                let mut d = match phase {
                    Phase::One => 0.0,
                    Phase::Two => self.costs[j],
                };
                for r in 0..m {
                    d -= y[r] * col[r];
                }
                if d >= -self.tol.optimality {
                    continue;
                }
                if bland {
                    entering = Some((j, d, d));
                    break;
                }
                let score = d / self.norms[j];
                if entering.map_or(true, |(_, s, _)| score < s) {
                    entering = Some((j, score, d));
                }
            }
            let Some((q, _, dq)) = entering else {
                if lu.updates > 0 {
                    // confirm optimality on a fresh factorization
                    lu = self.factor_basis()?;
                    continue;
                }
                if !rejected.is_empty() {
                    log::warn!(
                        "simplex stopped with {} improving columns rejected as numerically unstable",
                        rejected.len()
                    );
                }
                return Ok(());
            };

            let w = lu.solve(self.column(q));
            let leave = match self.ratio_test(&lu, &xb, &w, phase, bland) {
                Ok(k) => k,
                Err(_) => {
                    rejected.push(q);
                    continue;
                }
            };
            let theta = match self.basis[leave] {
                Var::Artificial(_) if phase == Phase::Two => 0.0,
                _ => xb[leave].max(0.0) / w[leave],
            };
            if w[leave].abs() <= 1e-9 * w.iter().fold(0.0f64, |a, b| a.max(b.abs())) {
                rejected.push(q);
                continue;
            }
            let old = self.basis[leave];
            self.basis[leave] = Var::Column(q);
            if careful > 0 || lu.updates + 1 >= REFACTOR_EVERY {
                match self.factor_basis() {
                    Ok(next) => {
                        lu = next;
                        careful = careful.saturating_sub(1);
                        checkpoint = (self.basis.clone(), self.is_basic.clone());
                        checkpoint.1[q] = true;
                        if let Var::Column(j) = old {
                            checkpoint.1[j] = false;
                        }
                    }
                    Err(_) if careful > 0 => {
                        // the previous basis was factored one pivot ago
                        self.basis[leave] = old;
                        lu = self.factor_basis()?;
                        rejected.push(q);
                        continue;
                    }
                    Err(_) => {
                        // an earlier update drifted; replay from the
                        // checkpoint, factoring after every pivot
                        (self.basis, self.is_basic) = checkpoint.clone();
                        lu = self.factor_basis()?;
                        careful = REFACTOR_EVERY;
                        rejected.clear();
                        continue;
                    }
                }
            } else {
                lu.update(leave, &w);
            }
            rejected.clear();
            // pivots whose objective gain is lost in rounding count as
            // degenerate too; otherwise they can cycle without tripping Bland
            let gain = -dq * theta;
            if theta <= 1e-12 || gain <= 1e-13 * (1.0 + objective.abs()) {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            if let Var::Column(j) = old {
                self.is_basic[j] = false;
            }
            self.is_basic[q] = true;
            self.pivots += 1;
        }
        Err(LpError::Internal(format!(
            "pivot limit {limit} reached without optimality"
        )))
    }

    /// Harris two-pass ratio test. Ties among degenerate rows are broken
    /// lexicographically on the rows of `B⁻¹` (symbolic rhs perturbation),
    /// which rules out cycling whatever the entering rule. Returns the basis
    /// position that leaves.
    fn ratio_test(
        &self,
        lu: &BasisInverse,
        xb: &[f64],
        w: &[f64],
        phase: Phase,
        bland: bool,
    ) -> Result<usize, LpError> {
        let piv = self.tol.pivot;
        // pinned artificials leave first, at zero step
        let mut pinned: Option<usize> = None;
        if phase == Phase::Two {
            for (k, v) in self.basis.iter().enumerate() {
                if matches!(v, Var::Artificial(_)) && w[k].abs() > piv {
                    let better = match pinned {
                        None => true,
                        Some(p) if bland => self.var_order(*v) < self.var_order(self.basis[p]),
                        Some(p) => w[k].abs() > w[p].abs(),
                    };
                    if better {
                        pinned = Some(k);
                    }
                }
            }
        }
        if let Some(k) = pinned {
            return Ok(k);
        }
        let mut bound = f64::INFINITY;
        for k in 0..self.rows {
            if w[k] > piv {
                bound = bound.min((xb[k].max(0.0) + self.tol.feasibility) / w[k]);
            }
        }
        if !bound.is_finite() {
            return Err(LpError::Internal("unbounded direction".into()));
        }
        let candidates: Vec<usize> = (0..self.rows)
            .filter(|&k| w[k] > piv && xb[k].max(0.0) / w[k] <= bound)
            .collect();
        let degenerate: Vec<usize> = candidates
            .iter()
            .copied()
            .filter(|&k| xb[k] <= self.tol.feasibility)
            .collect();
        if degenerate.len() > 1 {
            return Ok(self.lexicographic_min(lu, w, &degenerate));
        }
        if let [k] = degenerate[..] {
            return Ok(k);
        }
        candidates
            .into_iter()
            .max_by(|&a, &b| w[a].total_cmp(&w[b]).then(b.cmp(&a)))
            .ok_or_else(|| LpError::Internal("ratio test found no pivot".into()))
    }

    fn lexicographic_min(&self, lu: &BasisInverse, w: &[f64], rows: &[usize]) -> usize {
        let scaled: Vec<(usize, Vec<f64>)> = rows
            .iter()
            .map(|&k| {
                (k, lu.row(k).iter().map(|v| v / w[k]).collect())
            })
            .collect();
        let mut best = 0;
        for i in 1..scaled.len() {
            if lex_less(&scaled[i].1, &scaled[best].1) {
                best = i;
            }
        }
        scaled[best].0
    }
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        let tol = 1e-11 * x.abs().max(y.abs()).max(1.0);
        if x < &(y - tol) {
            return true;
        }
        if x > &(y + tol) {
            return false;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(rows: &[Vec<f64>], rhs: Vec<f64>, costs: &[f64]) -> Result<SimplexSolution, LpError> {
        let mut s = Simplex::new(rhs, SimplexTolerances::default());
        for j in 0..costs.len() {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            s.add_column(&col, costs[j]);
        }
        s.solve()
    }

    #[test]
    fn small_transport_like_problem() {
        // min x1 + 2 x2 + 3 x3, x1 + x2 + x3 = 1, x1 - x3 = 0
        let sol = solve(
            &[vec![1.0, 1.0, 1.0], vec![1.0, 0.0, -1.0]],
            vec![1.0, 0.0],
            &[1.0, 2.0, 3.0],
        )
        .unwrap();
        // x1 = x3 = 0.5 costs 2; x2 = 1 costs 2 as well
        assert!((sol.objective - 2.0).abs() < 1e-12);
        assert!((sol.duals[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_is_reported() {
        // x1 + x2 = 1, x1 + x2 = 2
        let err = solve(
            &[vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![1.0, 2.0],
            &[0.0, 0.0],
        )
        .unwrap_err();
        assert!(matches!(err, LpError::Infeasible { .. }));
    }

    #[test]
    fn redundant_rows_keep_pinned_artificials() {
        // second row is all zeros
        let sol = solve(
            &[vec![1.0, 1.0], vec![0.0, 0.0]],
            vec![1.0, 0.0],
            &[3.0, 1.0],
        )
        .unwrap();
        assert_eq!(sol.primal, vec![0.0, 1.0]);
        assert_eq!(sol.duals[1], 0.0);
        assert!(sol.basis.contains(&Var::Artificial(1)));
    }

    #[test]
    fn warm_start_after_adding_column() {
        let mut s = Simplex::new(vec![1.0, 0.0], SimplexTolerances::default());
        s.add_column(&[1.0, 1.0], 0.0);
        s.add_column(&[1.0, -1.0], 2.0);
        let first = s.solve().unwrap();
        assert!((first.objective - 1.0).abs() < 1e-12);
        s.add_column(&[1.0, 0.0], 0.5);
        let second = s.solve().unwrap();
        assert!((second.objective - 0.5).abs() < 1e-12);
        assert_eq!(second.primal, vec![0.0, 0.0, 1.0]);
    }
}
