use nalgebra::DVector;

use super::{SolverDiagnostics, SolverProblem, SolverSolution};
use crate::error::{Error, Result};

/// Exhaustive search over the grid `{i·step : |i·step| ≤ extent}ⁿ` for the
/// feasible point of least ℓ1 norm. Only tractable for `n ≤ 3`; used to
/// cross-check [`convex_opt`](super::convex_opt).
///
/// A grid point is feasible when `||Ax − y|| ≤ σ + 1e-9·max(1, ||y||)`; the
/// slack only absorbs rounding, so the oracle value never undercuts the
/// true optimum by more than that.
pub fn oracle_solve(problem: &SolverProblem, grid_extent: f64, grid_step: f64) -> Result<SolverSolution> {
    let n = problem.a.ncols();
    if n > 3 {
        return Err(Error::InvalidDimension(format!("oracle grid needs n <= 3, got {n}")));
    }
    if !(grid_step > 0.0) || !(grid_extent >= 0.0) {
        return Err(Error::InvalidParameter("grid step must be positive and extent nonnegative".into()));
    }
    let half = (grid_extent / grid_step).round() as i64;
    let slack = 1e-9 * problem.y.norm().max(1.0);
    let bound = problem.sigma + slack;
    let bound_sq = bound * bound;

    let m = problem.a.nrows();
    let cols: Vec<Vec<f64>> = (0..n).map(|j| problem.a.column(j).iter().copied().collect()).collect();
    let y: Vec<f64> = problem.y.iter().copied().collect();

    let mut best: Option<[i64; 3]> = None;
    let mut best_l1 = f64::INFINITY;
    let mut evaluated = 0usize;
    let mut idx = [0i64; 3];
    let mut resid = vec![0.0; m];

    // odometer over the grid, pruning on the partial ℓ1 norm
    let range = |d: usize| if d < n { -half..=half } else { 0..=0 };
    for i0 in range(0) {
        let l0 = (i0 as f64 * grid_step).abs();
        if l0 > best_l1 {
            continue;
        }
        for i1 in range(1) {
            let l01 = l0 + (i1 as f64 * grid_step).abs();
            if l01 > best_l1 {
                continue;
            }
            for i2 in range(2) {
                idx[0] = i0;
                idx[1] = i1;
                idx[2] = i2;
                let l = l01 + (i2 as f64 * grid_step).abs();
                if l >= best_l1 {
                    continue;
                }
                evaluated += 1;
                resid.copy_from_slice(&y);
                for (j, col) in cols.iter().enumerate() {
                    let xj = idx[j] as f64 * grid_step;
                    if xj != 0.0 {
                        for (r, a) in resid.iter_mut().zip(col) {
                            *r -= a * xj;
                        }
                    }
                }
                let rsq: f64 = resid.iter().map(|r| r * r).sum();
                if rsq <= bound_sq {
                    best_l1 = l;
                    best = Some(idx);
                }
            }
        }
    }

    let idx = best.ok_or(Error::InfeasibleAtResolution)?;
    let x_star = DVector::from_iterator(n, (0..n).map(|j| idx[j] as f64 * grid_step));
    let residual_norm = problem.residual_norm(&x_star);
    Ok(SolverSolution {
        l1_norm: x_star.iter().map(|v| v.abs()).sum(),
        residual_norm,
        iterations: evaluated,
        converged: true,
        diagnostics: SolverDiagnostics {
            iterations: evaluated,
            residual_norm,
            sigma: problem.sigma,
            l1_norm: best_l1,
            lower_bound: f64::NAN,
            trace: Vec::new(),
        },
        x_star,
    })
}
