//! Dense LU with partial pivoting.

#[derive(Debug, Clone)]
pub(crate) struct DenseLu {
    n: usize,
    /// Row-major packed `L` (unit diagonal, below) and `U` (on and above).
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    /// Factorizes a column-major `n × n` matrix. Returns `None` when a pivot
    /// falls below `pivot_tol` times the column scale.
    pub(crate) fn factor_columns(n: usize, cols: &[f64], pivot_tol: f64) -> Option<Self> {
        let mut lu = vec![0.0; n * n];
        for c in 0..n {
            for r in 0..n {
                lu[r * n + c] = cols[c * n + r];
            }
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (mut piv, mut best) = (k, lu[k * n + k].abs());
            for r in k + 1..n {
                let v = lu[r * n + k].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if !(best > pivot_tol) {
                return None;
            }
            if piv != k {
                for c in 0..n {
                    lu.swap(k * n + c, piv * n + c);
                }
                perm.swap(k, piv);
            }
            let d = lu[k * n + k];
            for r in k + 1..n {
                let l = lu[r * n + k] / d;
                lu[r * n + k] = l;
                if l != 0.0 {
                    for c in k + 1..n {
                        lu[r * n + c] -= l * lu[k * n + c];
                    }
                }
            }
        }
        Some(Self { n, lu, perm })
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut s = x[r];
            for c in 0..r {
                s -= self.lu[r * n + c] * x[c];
            }
            x[r] = s;
        }
        for r in (0..n).rev() {
            let mut s = x[r];
            for c in r + 1..n {
                s -= self.lu[r * n + c] * x[c];
            }
            x[r] = s / self.lu[r * n + r];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_linear_system() {
        // columns of [[2, 1, 0], [4, 3, 1], [0, 5, 7]]
        let a = [[2.0, 1.0, 0.0], [4.0, 3.0, 1.0], [0.0, 5.0, 7.0]];
        let cols: Vec<f64> = (0..3).flat_map(|c| (0..3).map(move |r| a[r][c])).collect();
        let lu = DenseLu::factor_columns(3, &cols, 1e-14).unwrap();
        let b = [1.0, 2.0, 3.0];
        let x = lu.solve(&b);
        for r in 0..3 {
            let s: f64 = (0..3).map(|c| a[r][c] * x[c]).sum();
            assert!((s - b[r]).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_is_rejected() {
        let cols = [1.0, 2.0, 2.0, 4.0];
        assert!(DenseLu::factor_columns(2, &cols, 1e-12).is_none());
    }
}
