//! Points of `X = U × Y` and uniform product grids over it.

use serde::{Deserialize, Serialize};

use crate::problem::ControlProblem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub u: Vec<f64>,
    pub y: Vec<f64>,
}

impl GridPoint {
    pub fn new(u: Vec<f64>, y: Vec<f64>) -> Self {
        Self { u, y }
    }

    /// Coordinates in `(u, y)` order.
    pub fn coords(&self) -> impl Iterator<Item = f64> + '_ {
        self.u.iter().chain(&self.y).copied()
    }

    pub fn from_coords(x: &[f64], control_dim: usize) -> Self {
        Self {
            u: x[..control_dim].to_vec(),
            y: x[control_dim..].to_vec(),
        }
    }

    pub fn max_distance(&self, other: &GridPoint) -> f64 {
        self.coords()
            .zip(other.coords())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Lexicographic comparison on `(u, y)`.
    pub fn lex_cmp(&self, other: &GridPoint) -> std::cmp::Ordering {
        lex_cmp(
            &self.coords().collect::<Vec<_>>(),
            &other.coords().collect::<Vec<_>>(),
        )
    }
}

pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Per-axis resolution for `X`; a single entry applies to every axis.
pub fn expand_resolution(res: &[usize], dim: usize) -> Vec<usize> {
    match res.len() {
        0 => vec![1; dim],
        1 => vec![res[0]; dim],
        _ => {
            let mut v = res.to_vec();
            v.resize(dim, *res.last().unwrap());
            v
        }
    }
}

/// Per-axis node lists of `X` in `(u, y)` order.
pub fn axis_nodes(problem: &ControlProblem, res: &[usize]) -> Vec<Vec<f64>> {
    let n = problem.control_dim();
    let m = problem.state_dim();
    let res = expand_resolution(res, n + m);
    let mut axes = Vec::with_capacity(n + m);
    for k in 0..n {
        axes.push(problem.control_box().axis_nodes(k, res[k]));
    }
    for j in 0..m {
        axes.push(problem.state_box().axis_nodes(j, res[n + j]));
    }
    axes
}

pub fn grid_size(problem: &ControlProblem, res: &[usize]) -> u128 {
    let dim = problem.control_dim() + problem.state_dim();
    expand_resolution(res, dim)
        .iter()
        .map(|&r| r as u128)
        .product()
}

/// Uniform product grid over `U × Y` including box endpoints, enumerated in
/// lexicographic order.
pub fn product_grid(problem: &ControlProblem, res: &[usize]) -> Vec<GridPoint> {
    let axes = axis_nodes(problem, res);
    let n = problem.control_dim();
    let total: usize = axes.iter().map(Vec::len).product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; axes.len()];
    if total == 0 {
        return out;
    }
    loop {
        let x: Vec<f64> = idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect();
        out.push(GridPoint::from_coords(&x, n));
        let mut k = axes.len();
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::pendulum;

    #[test]
    fn grid_is_lexicographic_and_complete() {
        let p = pendulum();
        let g = product_grid(&p, &[3, 5, 2]);
        assert_eq!(g.len(), 30);
        assert_eq!(g[0], GridPoint::new(vec![-1.0], vec![-1.7, -4.0]));
        assert_eq!(g[29], GridPoint::new(vec![1.0], vec![1.7, 4.0]));
        for w in g.windows(2) {
            assert_eq!(w[0].lex_cmp(&w[1]), std::cmp::Ordering::Less);
        }
        assert_eq!(grid_size(&p, &[41]), 68921);
    }

    #[test]
    fn odd_grid_contains_center() {
        let g = product_grid(&pendulum(), &[9]);
        assert!(g.contains(&GridPoint::new(vec![0.0], vec![0.0, 0.0])));
    }
}
