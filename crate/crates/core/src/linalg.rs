//! Small dense solvers for discounted linear systems.

use nalgebra::{DMatrix, DVector};

/// Above this many unknowns the solvers switch from LU to fixed-point
/// iteration.
pub const DIRECT_SOLVE_LIMIT: usize = 10_000;

/// Solves `(I - gamma K) x = b` for a row-stochastic `K`.
pub fn solve_discounted(kernel: &[Vec<f64>], gamma: f64, b: &[f64]) -> Vec<f64> {
    solve(kernel, gamma, b, false)
}

/// Solves `(I - gamma K^T) x = b` for a row-stochastic `K`.
pub fn solve_discounted_transpose(kernel: &[Vec<f64>], gamma: f64, b: &[f64]) -> Vec<f64> {
    solve(kernel, gamma, b, true)
}

fn solve(kernel: &[Vec<f64>], gamma: f64, b: &[f64], transpose: bool) -> Vec<f64> {
    let n = b.len();
    if n <= DIRECT_SOLVE_LIMIT {
        let a = DMatrix::from_fn(n, n, |i, j| {
            let k = if transpose { kernel[j][i] } else { kernel[i][j] };
            let id = if i == j { 1.0 } else { 0.0 };
            id - gamma * k
        });
        // I - gamma K is strictly diagonally dominant for gamma < 1, so LU
        // without pivoting failures is guaranteed.
        if let Some(x) = a.lu().solve(&DVector::from_column_slice(b)) {
            return x.iter().copied().collect();
        }
    }
    iterate(kernel, gamma, b, transpose)
}

fn iterate(kernel: &[Vec<f64>], gamma: f64, b: &[f64], transpose: bool) -> Vec<f64> {
    let n = b.len();
    let mut x = b.to_vec();
    for _ in 0..100_000 {
        let mut next = b.to_vec();
        if transpose {
            for (i, row) in kernel.iter().enumerate() {
                for (j, &k) in row.iter().enumerate() {
                    next[j] += gamma * k * x[i];
                }
            }
        } else {
            for i in 0..n {
                next[i] += gamma * kernel[i].iter().zip(&x).map(|(k, v)| k * v).sum::<f64>();
            }
        }
        let diff = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = next;
        if diff <= 1e-14 * (1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max)) {
            break;
        }
    }
    x
}
