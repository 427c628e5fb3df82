//! Monomial test functions `φ_i`, their gradients, and the constraint
//! functions `h_i(u, y) = ∇φ_i(y)ᵀ f(u, y)`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::BasisError;
use crate::problem::ControlProblem;

pub const DEFAULT_SIZE_CAP: usize = 2000;
const INDEPENDENCE_SEED: u64 = 0x5eed_0f_b0a5;
const INDEPENDENCE_THRESHOLD: f64 = 1e-10;

/// Exponent vector of a non-constant monomial.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "degree", rename_all = "snake_case")]
pub enum BasisMode {
    /// Every exponent at most `J`: `(J+1)^m − 1` functions.
    Tensor(u32),
    /// Total degree between 1 and `J`.
    TotalDegree(u32),
}

impl BasisMode {
    pub fn degree(&self) -> u32 {
        match *self {
            BasisMode::Tensor(j) | BasisMode::TotalDegree(j) => j,
        }
    }

    /// Graded-lexicographic index list.
    pub fn indices(&self, m: usize) -> Vec<MultiIndex> {
        let j = self.degree();
        let mut out = Vec::new();
        let mut cur = vec![0u32; m];
        loop {
            let deg: u32 = cur.iter().sum();
            let keep = match self {
                BasisMode::Tensor(_) => deg >= 1,
                BasisMode::TotalDegree(_) => (1..=j).contains(&deg),
            };
            if keep {
                out.push(MultiIndex(cur.clone()));
            }
            // odometer over [0, j]^m
            let mut axis = m;
            loop {
                if axis == 0 {
                    out.sort_by(|a, b| a.degree().cmp(&b.degree()).then_with(|| a.cmp(b)));
                    return out;
                }
                axis -= 1;
                if cur[axis] < j {
                    cur[axis] += 1;
                    break;
                }
                cur[axis] = 0;
            }
        }
    }

    pub fn size(&self, m: usize) -> u128 {
        let j = self.degree() as u128;
        match self {
            BasisMode::Tensor(_) => (j + 1).pow(m as u32) - 1,
            BasisMode::TotalDegree(_) => {
                // C(j + m, m) - 1
                let mut c: u128 = 1;
                for k in 1..=m as u128 {
                    c = c * (j + k) / k;
                }
                c - 1
            }
        }
    }
}

/// The finite test-function family.
#[derive(Debug, Clone)]
pub struct MonomialBasis {
    problem: ControlProblem,
    mode: BasisMode,
    indices: Vec<MultiIndex>,
    scaling_enabled: bool,
    /// `z_j = factor_j * y_j + offset_j`
    factor: Vec<f64>,
    offset: Vec<f64>,
    max_exponent: usize,
}

impl MonomialBasis {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn problem(&self) -> &ControlProblem {
        &self.problem
    }

    pub fn mode(&self) -> BasisMode {
        self.mode
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn scaling_enabled(&self) -> bool {
        self.scaling_enabled
    }

    pub fn state_dim(&self) -> usize {
        self.factor.len()
    }

    fn to_scaled(&self, y: &[f64], z: &mut [f64]) {
        for j in 0..z.len() {
            z[j] = self.factor[j] * y[j] + self.offset[j];
        }
    }

    /// Powers `z_j^p` for `p = 0..=max_exponent`, row-major by axis.
    fn powers(&self, y: &[f64], pw: &mut Vec<f64>) {
        let m = self.state_dim();
        let stride = self.max_exponent + 1;
        pw.clear();
        pw.resize(m * stride, 1.0);
        for j in 0..m {
            let z = self.factor[j] * y[j] + self.offset[j];
            for p in 1..stride {
                pw[j * stride + p] = pw[j * stride + p - 1] * z;
            }
        }
    }

    fn check_index(&self, i: usize) -> Result<&MultiIndex, BasisError> {
        if i == 0 || i > self.len() {
            return Err(BasisError::IndexOutOfRange {
                index: i,
                len: self.len(),
            });
        }
        Ok(&self.indices[i - 1])
    }

    /// `φ_i(y)` for a one-based index.
    pub fn eval_phi(&self, i: usize, y: &[f64]) -> Result<f64, BasisError> {
        let idx = self.check_index(i)?;
        self.problem.state_box().check(y, "y")?;
        let mut z = vec![0.0; y.len()];
        self.to_scaled(y, &mut z);
        Ok(idx
            .0
            .iter()
            .zip(&z)
            .map(|(&e, &zj)| zj.powi(e as i32))
            .product())
    }

    /// `∇φ_i(y)` in `y`-coordinates, one-based index.
    pub fn eval_grad_phi(&self, i: usize, y: &[f64]) -> Result<Vec<f64>, BasisError> {
        let idx = self.check_index(i)?;
        self.problem.state_box().check(y, "y")?;
        let mut pw = Vec::new();
        self.powers(y, &mut pw);
        let mut g = vec![0.0; y.len()];
        self.grad_one(&idx.0, &pw, &mut g);
        Ok(g)
    }

    /// `h_i(u, y)`, one-based index.
    pub fn eval_h(&self, i: usize, u: &[f64], y: &[f64]) -> Result<f64, BasisError> {
        let grad = self.eval_grad_phi(i, y)?;
        let f = self.problem.eval_dynamics(u, y)?;
        Ok(grad.iter().zip(&f).map(|(a, b)| a * b).sum())
    }

    #[inline]
    fn grad_one(&self, exps: &[u32], pw: &[f64], out: &mut [f64]) {
        let stride = self.max_exponent + 1;
        for j in 0..out.len() {
            let ej = exps[j] as usize;
            if ej == 0 {
                out[j] = 0.0;
                continue;
            }
            let mut v = ej as f64 * pw[j * stride + ej - 1] * self.factor[j];
            for (k, &ek) in exps.iter().enumerate() {
                if k != j {
                    v *= pw[k * stride + ek as usize];
                }
            }
            out[j] = v;
        }
    }

    /// All `φ_i(y)`.
    pub fn phi_all(&self, y: &[f64], out: &mut [f64]) {
        let mut pw = Vec::new();
        self.powers(y, &mut pw);
        let stride = self.max_exponent + 1;
        for (o, idx) in out.iter_mut().zip(&self.indices) {
            *o = idx
                .0
                .iter()
                .enumerate()
                .map(|(j, &e)| pw[j * stride + e as usize])
                .product();
        }
    }

    /// All gradients, row-major `N × m`. Unchecked.
    pub fn grad_all(&self, y: &[f64], out: &mut [f64]) {
        let m = self.state_dim();
        let mut pw = Vec::new();
        self.powers(y, &mut pw);
        for (i, idx) in self.indices.iter().enumerate() {
            self.grad_one(&idx.0, &pw, &mut out[i * m..(i + 1) * m]);
        }
    }

    /// All `h_i(u, y)`. Unchecked.
    pub fn h_all(&self, u: &[f64], y: &[f64], out: &mut [f64]) {
        let m = self.state_dim();
        let mut f = vec![0.0; m];
        self.problem.dynamics_into(u, y, &mut f);
        self.h_all_with_velocity(y, &f, out);
    }

    /// All `∇φ_i(y)ᵀ v` for a given velocity `v`.
    pub fn h_all_with_velocity(&self, y: &[f64], v: &[f64], out: &mut [f64]) {
        let m = self.state_dim();
        let mut pw = Vec::new();
        self.powers(y, &mut pw);
        let mut g = vec![0.0; m];
        for (o, idx) in out.iter_mut().zip(&self.indices) {
            self.grad_one(&idx.0, &pw, &mut g);
            *o = g.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    /// `Σ λ_i ∇φ_i(y)`. Unchecked.
    pub fn weighted_gradient(&self, coefficients: &[f64], y: &[f64], out: &mut [f64]) {
        let m = self.state_dim();
        let mut pw = Vec::new();
        self.powers(y, &mut pw);
        let mut g = vec![0.0; m];
        out.iter_mut().for_each(|o| *o = 0.0);
        for (c, idx) in coefficients.iter().zip(&self.indices) {
            if *c == 0.0 {
                continue;
            }
            self.grad_one(&idx.0, &pw, &mut g);
            for j in 0..m {
                out[j] += c * g[j];
            }
        }
    }

    /// Smallest singular value of the row-normalized matrix of gradient
    /// samples on a seeded random point cloud.
    pub fn gradient_independence(&self, seed: u64) -> f64 {
        let n = self.len();
        let m = self.state_dim();
        let points = (2 * n).div_ceil(m) + 16;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mat = DMatrix::<f64>::zeros(points * m, n);
        let mut grads = vec![0.0; n * m];
        for p in 0..points {
            let y = self.problem.state_box().sample(&mut rng);
            self.grad_all(&y, &mut grads);
            for i in 0..n {
                for j in 0..m {
                    mat[(p * m + j, i)] = grads[i * m + j];
                }
            }
        }
        for i in 0..n {
            let norm = mat.column(i).amax();
            if norm > 0.0 {
                mat.column_mut(i).scale_mut(1.0 / norm);
            }
        }
        let sv = mat.singular_values();
        sv.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn build_basis(
    problem: &ControlProblem,
    mode: BasisMode,
    scaling_enabled: bool,
) -> Result<MonomialBasis, BasisError> {
    build_basis_capped(problem, mode, scaling_enabled, DEFAULT_SIZE_CAP)
}

pub fn build_basis_capped(
    problem: &ControlProblem,
    mode: BasisMode,
    scaling_enabled: bool,
    cap: usize,
) -> Result<MonomialBasis, BasisError> {
    if mode.degree() == 0 {
        return Err(BasisError::ZeroDegree);
    }
    let m = problem.state_dim();
    let size = mode.size(m);
    if size > cap as u128 {
        return Err(BasisError::Size {
            size: size.min(usize::MAX as u128) as usize,
            cap,
        });
    }
    let sb = problem.state_box();
    let (factor, offset): (Vec<f64>, Vec<f64>) = (0..m)
        .map(|j| {
            let (lo, hi) = (sb.lower()[j], sb.upper()[j]);
            if !scaling_enabled {
                (1.0, 0.0)
            } else if hi > lo {
                (2.0 / (hi - lo), -(lo + hi) / (hi - lo))
            } else {
                (1.0, -lo)
            }
        })
        .unzip();
    let basis = MonomialBasis {
        problem: problem.clone(),
        mode,
        indices: mode.indices(m),
        scaling_enabled,
        factor,
        offset,
        max_exponent: mode.degree() as usize,
    };
    let smallest = basis.gradient_independence(INDEPENDENCE_SEED);
    if !(smallest > INDEPENDENCE_THRESHOLD) {
        return Err(BasisError::Dependent(smallest));
    }
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::pendulum;
    use rand::Rng;

    fn lattice_count(j: u32) -> usize {
        let mut count = 0;
        for a in 0..=j {
            for b in 0..=j {
                if a + b >= 1 && a + b <= j {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn sizes() {
        let p = pendulum();
        assert_eq!(build_basis(&p, BasisMode::Tensor(10), true).unwrap().len(), 120);
        let b = build_basis(&p, BasisMode::Tensor(1), true).unwrap();
        let idx: Vec<Vec<u32>> = b.indices().iter().map(|i| i.0.clone()).collect();
        assert_eq!(idx, vec![vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert_eq!(lattice_count(10), 65);
        assert_eq!(
            build_basis(&p, BasisMode::TotalDegree(10), true).unwrap().len(),
            65
        );
        assert_eq!(BasisMode::TotalDegree(10).size(2), 65);
        assert_eq!(BasisMode::Tensor(3).size(3), 63);
    }

    #[test]
    fn size_cap_and_zero_degree() {
        let p = pendulum();
        assert!(matches!(
            build_basis(&p, BasisMode::Tensor(50), true),
            Err(BasisError::Size { size: 2600, cap: 2000 })
        ));
        assert!(matches!(
            build_basis(&p, BasisMode::Tensor(0), true),
            Err(BasisError::ZeroDegree)
        ));
    }

    #[test]
    fn graded_lex_order_is_deterministic() {
        let a = BasisMode::Tensor(4).indices(3);
        let b = BasisMode::Tensor(4).indices(3);
        assert_eq!(a, b);
        for w in a.windows(2) {
            assert!(
                (w[0].degree(), &w[0].0) < (w[1].degree(), &w[1].0),
                "{:?} !< {:?}",
                w[0],
                w[1]
            );
        }
    }

    fn position(b: &MonomialBasis, e: &[u32]) -> usize {
        b.indices().iter().position(|i| i.0 == e).unwrap() + 1
    }

    #[test]
    fn phi_examples() {
        let p = pendulum();
        let raw = build_basis(&p, BasisMode::Tensor(2), false).unwrap();
        let i = position(&raw, &[2, 1]);
        assert!(raw.eval_phi(i, &[2.0, 3.0]).is_err());
        assert_eq!(raw.eval_phi(i, &[1.5, 2.0]).unwrap(), 4.5);
        assert!(matches!(
            raw.eval_phi(0, &[0.0, 0.0]),
            Err(BasisError::IndexOutOfRange { .. })
        ));
        assert!(raw.eval_phi(9, &[0.0, 0.0]).is_err());

        let scaled = build_basis(&p, BasisMode::Tensor(2), true).unwrap();
        assert_eq!(scaled.eval_phi(position(&scaled, &[1, 0]), &[1.7, 0.0]).unwrap(), 1.0);
        assert_eq!(scaled.eval_phi(position(&scaled, &[0, 2]), &[0.0, -4.0]).unwrap(), 1.0);
    }

    #[test]
    fn gradient_examples() {
        let p = pendulum();
        let raw = build_basis(&p, BasisMode::Tensor(2), false).unwrap();
        assert_eq!(
            raw.eval_grad_phi(position(&raw, &[1, 0]), &[0.3, -1.0]).unwrap(),
            vec![1.0, 0.0]
        );
        assert_eq!(
            raw.eval_grad_phi(position(&raw, &[1, 1]), &[1.5, 2.0]).unwrap(),
            vec![2.0, 1.5]
        );
        let scaled = build_basis(&p, BasisMode::Tensor(2), true).unwrap();
        let i = position(&scaled, &[0, 1]);
        for y in [[0.0, 0.0], [1.2, -3.0], [-1.7, 4.0]] {
            let g = scaled.eval_grad_phi(i, &y).unwrap();
            assert_eq!(g, vec![0.0, 0.25]);
            let h = 1e-6 * 8.0;
            let fd = (scaled.eval_phi(i, &[y[0], (y[1] + h).min(4.0)]).unwrap()
                - scaled.eval_phi(i, &[y[0], (y[1] - h).max(-4.0)]).unwrap())
                / ((y[1] + h).min(4.0) - (y[1] - h).max(-4.0));
            assert!((fd - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn h_examples() {
        let p = pendulum();
        let raw = build_basis(&p, BasisMode::Tensor(2), false).unwrap();
        assert_eq!(raw.eval_h(position(&raw, &[1, 0]), &[0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(raw.eval_h(position(&raw, &[0, 1]), &[1.0], &[0.0, 0.0]).unwrap(), 1.0);
        let h = raw
            .eval_h(position(&raw, &[1, 1]), &[0.5], &[1.0, -2.0])
            .unwrap();
        // (-2)(-2) + 1 * (1.1 - 4 sin 1)
        assert!((h - 1.734116060768414).abs() < 1e-13, "{h}");
        assert!(raw.eval_h(1, &[2.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn batched_evaluators_match_single_ones() {
        let p = pendulum();
        let b = build_basis(&p, BasisMode::Tensor(3), true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut h = vec![0.0; b.len()];
        let mut phi = vec![0.0; b.len()];
        for _ in 0..20 {
            let u = p.control_box().sample(&mut rng);
            let y = p.state_box().sample(&mut rng);
            b.h_all(&u, &y, &mut h);
            b.phi_all(&y, &mut phi);
            for i in 0..b.len() {
                assert!((h[i] - b.eval_h(i + 1, &u, &y).unwrap()).abs() < 1e-12);
                assert!((phi[i] - b.eval_phi(i + 1, &y).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let p = pendulum();
        for scaled in [true, false] {
            let b = build_basis(&p, BasisMode::Tensor(4), scaled).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let sb = p.state_box();
            for i in 1..=b.len() {
                for _ in 0..100 {
                    let y: Vec<f64> = (0..2)
                        .map(|j| {
                            let w = sb.width(j);
                            rng.gen_range(sb.lower()[j] + 0.01 * w..sb.upper()[j] - 0.01 * w)
                        })
                        .collect();
                    let g = b.eval_grad_phi(i, &y).unwrap();
                    let scale = g.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-3);
                    for j in 0..2 {
                        let h = 1e-6 * sb.width(j);
                        let mut yp = y.clone();
                        let mut ym = y.clone();
                        yp[j] += h;
                        ym[j] -= h;
                        let fd = (b.eval_phi(i, &yp).unwrap() - b.eval_phi(i, &ym).unwrap())
                            / (2.0 * h);
                        assert!((fd - g[j]).abs() / scale <= 1e-6, "i={i} j={j} {fd} {}", g[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn scaled_span_reproduces_raw_monomials() {
        let p = pendulum();
        let j = 3;
        let raw = build_basis(&p, BasisMode::Tensor(j), false).unwrap();
        let scaled = build_basis(&p, BasisMode::Tensor(j), true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let pts: Vec<Vec<f64>> = (0..200).map(|_| p.state_box().sample(&mut rng)).collect();
        let n = scaled.len();
        let mut a = DMatrix::<f64>::zeros(pts.len(), n + 1);
        let mut phi = vec![0.0; n];
        for (r, y) in pts.iter().enumerate() {
            scaled.phi_all(y, &mut phi);
            a[(r, 0)] = 1.0;
            for c in 0..n {
                a[(r, c + 1)] = phi[c];
            }
        }
        let svd = a.clone().svd(true, true);
        for i in 1..=raw.len() {
            let rhs = nalgebra::DVector::from_iterator(
                pts.len(),
                pts.iter().map(|y| raw.eval_phi(i, y).unwrap()),
            );
            let coef = svd.solve(&rhs, 1e-14).unwrap();
            let resid = (&a * coef - &rhs).amax();
            assert!(resid <= 1e-8, "index {i}: residual {resid}");
        }
    }

    #[test]
    fn degree_ten_gradients_are_independent() {
        let b = build_basis(&pendulum(), BasisMode::Tensor(10), true).unwrap();
        assert!(b.gradient_independence(99) > 1e-10);
    }
}
