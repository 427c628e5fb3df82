//! Explicit basis inverse with product-form rank-1 updates, refreshed from
//! a fresh LU factorization every few pivots.

use super::lu::DenseLu;

/// Pivots between refactorizations.
pub(crate) const REFACTOR_EVERY: usize = 50;

#[derive(Debug, Clone)]
pub(crate) struct BasisInverse {
    n: usize,
    /// Row-major `B⁻¹`.
    inv: Vec<f64>,
    pub(crate) updates: usize,
}

impl BasisInverse {
    /// Inverts a column-major `n × n` matrix; `None` if numerically singular.
    pub(crate) fn from_columns(n: usize, cols: &[f64], pivot_tol: f64) -> Option<Self> {
        let lu = DenseLu::factor_columns(n, cols, pivot_tol)?;
        let mut inv = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for c in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[c] = 1.0;
            let x = lu.solve(&e);
            for r in 0..n {
                inv[r * n + c] = x[r];
            }
        }
        Some(Self { n, inv, updates: 0 })
    }

    /// `B⁻¹ b`.
    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|r| {
                let row = &self.inv[r * n..(r + 1) * n];
                row.iter().zip(b).map(|(a, x)| a * x).sum()
            })
            .collect()
    }

    /// `B⁻ᵀ c`.
    pub(crate) fn solve_transpose(&self, c: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for (r, &cr) in c.iter().enumerate() {
            if cr == 0.0 {
                continue;
            }
            let row = &self.inv[r * n..(r + 1) * n];
            for (o, a) in out.iter_mut().zip(row) {
                *o += cr * a;
            }
        }
        out
    }

    /// Row `r` of `B⁻¹`.
    pub(crate) fn row(&self, r: usize) -> &[f64] {
        &self.inv[r * self.n..(r + 1) * self.n]
    }

    /// Replaces basis column `r`; `w = B⁻¹ a` for the entering column `a`.
    pub(crate) fn update(&mut self, r: usize, w: &[f64]) {
        let n = self.n;
        let piv = w[r];
        for v in &mut self.inv[r * n..(r + 1) * n] {
            *v /= piv;
        }
        let pivot_row: Vec<f64> = self.row(r).to_vec();
        for i in 0..n {
            if i == r || w[i] == 0.0 {
                continue;
            }
            let f = w[i];
            for (v, p) in self.inv[i * n..(i + 1) * n].iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
        }
        self.updates += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn update_matches_fresh_inverse() {
        // columns of B, then replace column 1 by a
        let b = [2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0];
        let a = [1.0, 2.0, 3.0];
        let mut inv = BasisInverse::from_columns(3, &b, 1e-14).unwrap();
        let w = inv.solve(&a);
        inv.update(1, &w);
        let mut b2 = b;
        b2[3..6].copy_from_slice(&a);
        let fresh = BasisInverse::from_columns(3, &b2, 1e-14).unwrap();
        for (x, y) in inv.inv.iter().zip(&fresh.inv) {
            assert!((x - y).abs() < 1e-13);
        }
        let rhs = [1.0, -1.0, 2.0];
        let t1 = inv.solve_transpose(&rhs);
        let t2 = fresh.solve_transpose(&rhs);
        for (x, y) in t1.iter().zip(&t2) {
            assert!((x - y).abs() < 1e-13);
        }
    }
}
