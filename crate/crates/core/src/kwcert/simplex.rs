//! Dense primal simplex for `max c.x  s.t.  A x <= b, x >= 0` with `b >= 0`.
//!
//! The slack basis is feasible, so no phase one is needed. The dictionary
//! keeps only the nonbasic columns, which suits many constraints over few
//! variables. Bland's rule prevents cycling on the heavily degenerate
//! systems produced by homogeneous sign constraints.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("right-hand side must be nonnegative (row {0})")]
    InfeasibleStart(usize),
    #[error("objective unbounded")]
    Unbounded,
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// `a` is row-major with `b.len()` rows and `c.len()` columns.
pub fn maximize(a: &[f64], b: &[f64], c: &[f64]) -> Result<LpSolution, LpError> {
    let (m, n) = (b.len(), c.len());
    assert_eq!(a.len(), m * n);
    if let Some(i) = b.iter().position(|&v| !(v >= 0.0)) {
        return Err(LpError::InfeasibleStart(i));
    }
    let scale = a.iter().chain(c).fold(0.0f64, |s, v| s.max(v.abs())).max(1e-300);
    let pivot_tol = 1e-11 * scale;
    let cost_tol = 1e-12 * scale;

    // x_B(i) = rhs_i - sum_j t[i][j] x_N(j);  z = z0 + sum_j d_j x_N(j)
    let mut t = a.to_vec();
    let mut rhs = b.to_vec();
    let mut d = c.to_vec();
    let mut z0 = 0.0;
    let mut nonbasic: Vec<usize> = (0..n).collect();
    let mut basic: Vec<usize> = (n..n + m).collect();
    let limit = 50 * (m + n) + 1000;

    for iter in 0..limit {
        let entering = (0..n).filter(|&j| d[j] > cost_tol).min_by_key(|&j| nonbasic[j]);
        let Some(s) = entering else {
            let mut x = vec![0.0; n];
            for (i, &v) in basic.iter().enumerate() {
                if v < n {
                    x[v] = rhs[i];
                }
            }
            return finish(a, b, c, x, iter, z0);
        };
        // Ties in the ratio test go to the largest pivot, which keeps the
        // dictionary well conditioned on degenerate rows. Bland's rule takes
        // over if progress stalls.
        let bland = iter > limit / 2;
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let aij = t[i * n + s];
            if aij > pivot_tol {
                let ratio = rhs[i] / aij;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best)) => {
                        let tie = (ratio - best).abs() <= 1e-12 * (1.0 + best.abs());
                        let better = if bland {
                            basic[i] < basic[r]
                        } else {
                            aij > t[r * n + s]
                        };
                        if (!tie && ratio < best) || (tie && better) {
                            Some((i, ratio))
                        } else {
                            Some((r, best))
                        }
                    }
                };
            }
        }
        let Some((r, _)) = leave else {
            return Err(LpError::Unbounded);
        };
        let p = t[r * n + s];
        let prow: Vec<f64> = (0..n).map(|j| if j == s { 1.0 / p } else { t[r * n + j] / p }).collect();
        let pb = rhs[r] / p;
        for i in 0..m {
            if i == r {
                continue;
            }
            let f = t[i * n + s];
            if f == 0.0 {
                continue;
            }
            let row = &mut t[i * n..(i + 1) * n];
            for j in 0..n {
                row[j] = if j == s { -f / p } else { row[j] - f * prow[j] };
            }
            rhs[i] = (rhs[i] - f * pb).max(0.0);
        }
        t[r * n..(r + 1) * n].copy_from_slice(&prow);
        rhs[r] = pb;
        let ds = d[s];
        for j in 0..n {
            d[j] = if j == s { -ds / p } else { d[j] - ds * prow[j] };
        }
        z0 += ds * pb;
        std::mem::swap(&mut nonbasic[s], &mut basic[r]);
        if !z0.is_finite() || rhs.iter().any(|v| !v.is_finite()) {
            return Err(LpError::Numerical(format!("non-finite dictionary after pivot {iter}")));
        }
    }
    Err(LpError::IterationLimit(limit))
}

/// Recomputes the objective and checks feasibility from the original data.
fn finish(a: &[f64], b: &[f64], c: &[f64], x: Vec<f64>, iterations: usize, z0: f64) -> Result<LpSolution, LpError> {
    let n = c.len();
    let objective: f64 = c.iter().zip(&x).map(|(p, q)| p * q).sum();
    let tol = 1e-8 * (1.0 + b.iter().fold(0.0f64, |s, v| s.max(v.abs())));
    if let Some(v) = x.iter().find(|&&v| v < -tol) {
        return Err(LpError::Numerical(format!("negative variable {v:e}")));
    }
    for (i, bi) in b.iter().enumerate() {
        let lhs: f64 = a[i * n..(i + 1) * n].iter().zip(&x).map(|(p, q)| p * q).sum();
        if lhs > bi + tol {
            return Err(LpError::Numerical(format!("row {i} violated by {:e}", lhs - bi)));
        }
    }
    if (objective - z0).abs() > 1e-8 * (1.0 + objective.abs()) {
        return Err(LpError::Numerical(format!("objective drift {objective} vs {z0}")));
    }
    Ok(LpSolution { x, objective, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let a = [1.0, 0.0, 0.0, 2.0, 3.0, 2.0];
        let s = maximize(&a, &[4.0, 12.0, 18.0], &[3.0, 5.0]).unwrap();
        assert!((s.objective - 36.0).abs() < 1e-12);
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_and_bad_rhs() {
        assert_eq!(maximize(&[-1.0], &[1.0], &[1.0]), Err(LpError::Unbounded));
        assert_eq!(maximize(&[1.0], &[-1.0], &[1.0]), Err(LpError::InfeasibleStart(0)));
    }

    #[test]
    fn degenerate_cone_with_box() {
        // Homogeneous rows x - y <= 0, y - x <= 0 force x = y; box 1.
        let a = [1.0, -1.0, -1.0, 1.0, 1.0, 0.0, 0.0, 1.0];
        let s = maximize(&a, &[0.0, 0.0, 1.0, 1.0], &[1.0, 2.0]).unwrap();
        assert!((s.objective - 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_objective_stays_at_origin() {
        let s = maximize(&[1.0, 1.0], &[1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(s.x, vec![0.0, 0.0]);
        assert_eq!(s.iterations, 0);
    }
}
