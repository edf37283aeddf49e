//! `min ||x||₁ subject to ||Ax − y||₂ ≤ σ`.
//!
//! The solver runs ADMM on the splitting `x = u`, `Ax − y = r` with `u`
//! handled by soft-thresholding and `r` by projection onto the σ-ball. Every
//! few dozen iterations it tries to certify the current point:
//!
//! * the sparse iterate `u`, and a polished point obtained by minimizing the
//!   ℓ1 objective exactly on the support and sign pattern of `u`, are pushed
//!   back onto the feasible set along the minimum-norm correction;
//! * every dual vector at hand (`μ` with `||Aᵀμ||∞ ≤ 1`) yields the lower
//!   bound `μᵀy − σ||μ||₂` on the optimum.
//!
//! The run stops once the best feasible point is within `optimality_tol`
//! (relative) of the best lower bound.
//!
//! Internally the matrix is rescaled so its columns have unit mean square
//! norm (`A/√m` for ±1 probes); the scaling cancels in the solution.

mod oracle;

pub use oracle::oracle_solve;

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Absolute slack on the residual constraint. `None` means
    /// `1e-6 · max(1, ||y||₂)`.
    pub feasibility_tol: Option<f64>,
    /// Relative duality gap accepted as optimal.
    pub optimality_tol: f64,
    pub max_iterations: usize,
    /// Iterations between certification attempts.
    pub certify_every: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: None,
            optimality_tol: 1e-4,
            max_iterations: 10_000,
            certify_every: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverProblem {
    pub a: DMatrix<f64>,
    pub y: DVector<f64>,
    pub sigma: f64,
    pub options: SolverOptions,
}

impl SolverProblem {
    pub fn new(a: DMatrix<f64>, y: DVector<f64>, sigma: f64) -> Result<Self> {
        Self::with_options(a, y, sigma, SolverOptions::default())
    }

    pub fn with_options(a: DMatrix<f64>, y: DVector<f64>, sigma: f64, options: SolverOptions) -> Result<Self> {
        if a.nrows() != y.len() {
            return Err(Error::LengthMismatch {
                expected: a.nrows(),
                actual: y.len(),
            });
        }
        if a.ncols() == 0 {
            return Err(Error::InvalidDimension("solver needs at least one column".into()));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma must be a finite nonnegative number, got {sigma}")));
        }
        if a.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite entry in A or y".into()));
        }
        Ok(Self { a, y, sigma, options })
    }

    pub fn feasibility_tol(&self) -> f64 {
        self.options
            .feasibility_tol
            .unwrap_or_else(|| 1e-6 * self.y.norm().max(1.0))
    }

    /// `||A x − y||₂`, computed directly.
    pub fn residual_norm(&self, x: &DVector<f64>) -> f64 {
        (&self.a * x - &self.y).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub residual: f64,
    pub l1: f64,
    pub lower_bound: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub residual_norm: f64,
    pub sigma: f64,
    pub l1_norm: f64,
    /// Best certified lower bound on the optimal ℓ1 norm.
    pub lower_bound: f64,
    pub trace: Vec<TracePoint>,
}

impl SolverDiagnostics {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if self.trace.is_empty() {
            w.write_record(["iteration", "residual", "l1", "lower_bound", "rho"])?;
        }
        for p in &self.trace {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSolution {
    pub x_star: DVector<f64>,
    pub residual_norm: f64,
    pub l1_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub diagnostics: SolverDiagnostics,
}

impl SolverSolution {
    /// Relative gap between the returned ℓ1 norm and the certified bound.
    pub fn relative_gap(&self) -> f64 {
        relative_gap(self.l1_norm, self.diagnostics.lower_bound)
    }
}

fn relative_gap(l1: f64, lower: f64) -> f64 {
    if l1 <= 0.0 {
        0.0
    } else {
        ((l1 - lower) / l1).max(0.0)
    }
}

fn l1(x: &DVector<f64>) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Solves the x-update system `(I + AᵀA) x = rhs`, returning `(x, Ax)`.
enum LinearStep {
    /// `m ≤ n`: Woodbury through `I + AAᵀ`.
    Wide(Cholesky<f64, Dyn>),
    /// `m > n`: `I + AᵀA` directly.
    Tall(Cholesky<f64, Dyn>),
}

impl LinearStep {
    fn new(a: &DMatrix<f64>) -> Self {
        let (m, n) = a.shape();
        if m <= n {
            let mut k = a * a.transpose();
            for i in 0..m {
                k[(i, i)] += 1.0;
            }
            LinearStep::Wide(Cholesky::new(k).expect("I + AAᵀ is positive definite"))
        } else {
            let mut k = a.transpose() * a;
            for i in 0..n {
                k[(i, i)] += 1.0;
            }
            LinearStep::Tall(Cholesky::new(k).expect("I + AᵀA is positive definite"))
        }
    }

    fn solve(&self, a: &DMatrix<f64>, rhs: &DVector<f64>, x: &mut DVector<f64>, ax: &mut DVector<f64>) {
        match self {
            LinearStep::Wide(chol) => {
                ax.gemv(1.0, a, rhs, 0.0);
                chol.solve_mut(ax);
                x.copy_from(rhs);
                x.gemv_tr(-1.0, a, ax, 1.0);
            }
            LinearStep::Tall(chol) => {
                x.copy_from(rhs);
                chol.solve_mut(x);
                ax.gemv(1.0, a, x, 0.0);
            }
        }
    }
}

/// Minimum-norm corrections `δ` with `Aδ` the projection of a target onto
/// range(A).
struct RangeProjector {
    pinv: DMatrix<f64>,
}

impl RangeProjector {
    fn new(a: &DMatrix<f64>) -> Self {
        let (m, n) = a.shape();
        let scale = a.norm().max(1e-300);
        let tol = 1e-10 * scale * scale;
        let pinv = if m <= n {
            let gram = a * a.transpose();
            Cholesky::new(gram.clone())
                .filter(|c| c.l().diagonal().iter().all(|d| d * d > tol))
                .map(|c| a.transpose() * c.inverse())
        } else {
            let gram = a.transpose() * a;
            Cholesky::new(gram.clone())
                .filter(|c| c.l().diagonal().iter().all(|d| d * d > tol))
                .map(|c| c.inverse() * a.transpose())
        };
        let pinv = pinv.unwrap_or_else(|| {
            a.clone()
                .pseudo_inverse(1e-12 * scale)
                .expect("pseudo-inverse with nonnegative tolerance")
        });
        Self { pinv }
    }

    /// Moves `x` the shortest distance so `||Ax − y|| ≤ sigma`, as far as
    /// range(A) allows.
    fn restore(&self, a: &DMatrix<f64>, y: &DVector<f64>, sigma: f64, x: &mut DVector<f64>) {
        let r = a * &*x - y;
        let rn = r.norm();
        if rn <= sigma {
            return;
        }
        let delta = &self.pinv * &r;
        let r_range = a * &delta;
        let range_norm = r_range.norm();
        let perp_sq = (&r - &r_range).norm_squared();
        let tau = if range_norm > 0.0 {
            ((sigma * sigma - perp_sq).max(0.0)).sqrt() / range_norm
        } else {
            0.0
        };
        // shrink the in-range residual to tau times its length
        x.axpy(-(1.0 - tau.min(1.0)), &delta, 1.0);
    }
}

/// Scales `μ` so `||Aᵀμ||∞ ≤ 1` and returns the resulting lower bound.
fn dual_bound(a: &DMatrix<f64>, y: &DVector<f64>, sigma: f64, mu: &DVector<f64>) -> f64 {
    let atmu = a.tr_mul(mu);
    let inf = atmu.amax();
    if inf <= 0.0 {
        return 0.0;
    }
    let value = y.dot(mu) - sigma * mu.norm();
    if value <= 0.0 {
        0.0
    } else {
        value / inf
    }
}

/// Exact minimizer of `sᵀx_S` over `||A_S x_S − y|| ≤ σ`, plus the
/// multiplier certifying it.
fn polish(a: &DMatrix<f64>, y: &DVector<f64>, sigma: f64, u: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
    let (m, n) = a.shape();
    let peak = u.amax();
    if peak == 0.0 {
        return None;
    }
    let support: Vec<usize> = (0..n).filter(|&j| u[j].abs() > 1e-9 * peak).collect();
    if support.is_empty() || support.len() > m {
        return None;
    }
    let a_s = a.select_columns(&support);
    let chol = Cholesky::new(a_s.tr_mul(&a_s))?;
    let x0 = chol.solve(&a_s.tr_mul(y));
    let r0 = y - &a_s * &x0;
    let res0_sq = r0.norm_squared();
    if res0_sq > sigma * sigma * (1.0 + 1e-12) + 1e-24 {
        return None;
    }
    let signs = DVector::from_iterator(support.len(), support.iter().map(|&j| u[j].signum()));
    let g = chol.solve(&signs);
    let q = signs.dot(&g);
    if q <= 0.0 {
        return None;
    }
    let room = sigma * sigma - res0_sq;
    let (xs, mu) = if sigma > 0.0 && room > 0.0 {
        let t = (room / q).sqrt();
        let xs = &x0 - &g * t;
        let mu = (y - &a_s * &xs) / t;
        (xs, mu)
    } else {
        let mu = &a_s * &g;
        (x0, mu)
    };
    let mut x = DVector::zeros(n);
    for (k, &j) in support.iter().enumerate() {
        x[j] = xs[k];
    }
    Some((x, mu))
}

/// Solves the ℓ1 problem. See the module docs for the method.
pub fn convex_opt(problem: &SolverProblem) -> Result<SolverSolution> {
    let (m, n) = problem.a.shape();
    let opts = &problem.options;
    let ftol = problem.feasibility_tol();
    let y_norm = problem.y.norm();

    if y_norm <= problem.sigma {
        return Ok(SolverSolution {
            x_star: DVector::zeros(n),
            residual_norm: y_norm,
            l1_norm: 0.0,
            iterations: 0,
            converged: true,
            diagnostics: SolverDiagnostics {
                residual_norm: y_norm,
                sigma: problem.sigma,
                ..Default::default()
            },
        });
    }

    let col_ms = problem.a.norm_squared() / n as f64;
    if col_ms == 0.0 {
        return Err(Error::NoConvergence(Box::new(SolverDiagnostics {
            residual_norm: y_norm,
            sigma: problem.sigma,
            ..Default::default()
        })));
    }
    let scale = 1.0 / col_ms.sqrt();
    let a = &problem.a * scale;
    let y = &problem.y * scale;
    let sigma = problem.sigma * scale;

    let step = LinearStep::new(&a);
    let projector = RangeProjector::new(&a);

    let mut x = DVector::zeros(n);
    let mut ax = DVector::zeros(m);
    let mut u = DVector::<f64>::zeros(n);
    let mut r = DVector::<f64>::zeros(m);
    let mut w1 = DVector::<f64>::zeros(n);
    let mut w2 = DVector::<f64>::zeros(m);
    let mut rhs = DVector::zeros(n);
    let mut c = DVector::zeros(m);
    let mut u_prev = u.clone();
    let mut r_prev = r.clone();

    let aty = a.tr_mul(&y);
    let mut rho = 1.0 / aty.amax().max(1e-300);
    let alpha = 1.6;

    let mut best: Option<DVector<f64>> = None;
    let mut best_l1 = f64::INFINITY;
    let mut lower = 0.0f64;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    let consider = |cand: DVector<f64>, best: &mut Option<DVector<f64>>, best_l1: &mut f64| {
        let mut cand = cand;
        projector.restore(&a, &y, sigma, &mut cand);
        let res = problem.residual_norm(&cand);
        if res <= problem.sigma + ftol {
            let v = l1(&cand);
            if v < *best_l1 {
                *best_l1 = v;
                *best = Some(cand);
            }
        }
    };

    for it in 1..=opts.max_iterations {
        iterations = it;
        u_prev.copy_from(&u);
        r_prev.copy_from(&r);

        // rhs = (u − w1) + Aᵀ(r + y − w2)
        c.copy_from(&r);
        c += &y;
        c -= &w2;
        rhs.copy_from(&u);
        rhs -= &w1;
        rhs.gemv_tr(1.0, &a, &c, 1.0);
        step.solve(&a, &rhs, &mut x, &mut ax);

        // over-relaxation
        let xh = &x * alpha + &u * (1.0 - alpha);
        let axh = &ax * alpha + (&r + &y) * (1.0 - alpha);

        let thresh = 1.0 / rho;
        for j in 0..n {
            u[j] = soft_threshold(xh[j] + w1[j], thresh);
        }
        let mut v = &axh - &y + &w2;
        let vn = v.norm();
        if vn > sigma {
            v *= sigma / vn;
        }
        r.copy_from(&v);

        w1 += &xh - &u;
        w2 += &axh - &y - &r;

        let certify = it % opts.certify_every.max(1) == 0 || it == opts.max_iterations;
        if it % 10 == 0 || certify {
            let prim = ((&x - &u).norm_squared() + (&ax - &y - &r).norm_squared()).sqrt();
            let mut dual_vec = &u - &u_prev;
            dual_vec.gemv_tr(1.0, &a, &(&r - &r_prev), 1.0);
            let dual = rho * dual_vec.norm();
            let prim_scale = x.norm().max(u.norm()).max(ax.norm()).max((&r + &y).norm()).max(1e-300);
            let dual_scale = (rho * (w1.norm() + w2.norm())).max(1e-300);
            let ratio = (prim / prim_scale) / (dual / dual_scale).max(1e-300);
            if !(0.2..=5.0).contains(&ratio) && it < opts.max_iterations / 2 {
                let factor = ratio.sqrt().clamp(0.1, 10.0);
                rho *= factor;
                w1 /= factor;
                w2 /= factor;
            }
        }

        if certify {
            let mu = &w2 * (-rho);
            lower = lower.max(dual_bound(&a, &y, sigma, &mu));
            consider(u.clone(), &mut best, &mut best_l1);
            if let Some((xp, mu_p)) = polish(&a, &y, sigma, &u) {
                lower = lower.max(dual_bound(&a, &y, sigma, &mu_p));
                consider(xp, &mut best, &mut best_l1);
            }
            trace.push(TracePoint {
                iteration: it,
                residual: best.as_ref().map_or(f64::NAN, |b| problem.residual_norm(b)),
                l1: best_l1,
                lower_bound: lower,
                rho,
            });
            if best.is_some() && relative_gap(best_l1, lower) <= opts.optimality_tol {
                converged = true;
                break;
            }
        }
    }

    match best {
        Some(x_star) => {
            let residual_norm = problem.residual_norm(&x_star);
            let l1_norm = l1(&x_star);
            Ok(SolverSolution {
                x_star,
                residual_norm,
                l1_norm,
                iterations,
                converged,
                diagnostics: SolverDiagnostics {
                    iterations,
                    residual_norm,
                    sigma: problem.sigma,
                    l1_norm,
                    lower_bound: lower,
                    trace,
                },
            })
        }
        None => {
            let mut fallback = u.clone();
            projector.restore(&a, &y, sigma, &mut fallback);
            Err(Error::NoConvergence(Box::new(SolverDiagnostics {
                iterations,
                residual_norm: problem.residual_norm(&fallback),
                sigma: problem.sigma,
                l1_norm: l1(&fallback),
                lower_bound: lower,
                trace,
            })))
        }
    }
}

/// Solves with coordinate `fixed_zero` (zero-based) forced to zero: the
/// column is removed, the reduced problem solved, and a zero re-inserted.
pub fn solve_with_fixed_zero(problem: &SolverProblem, fixed_zero: usize) -> Result<SolverSolution> {
    let n = problem.a.ncols();
    if fixed_zero >= n {
        return Err(Error::IndexOutOfRange {
            index: fixed_zero + 1,
            len: n,
        });
    }
    if n == 1 {
        let x_star = DVector::zeros(1);
        let residual_norm = problem.residual_norm(&x_star);
        if residual_norm > problem.sigma + problem.feasibility_tol() {
            return Err(Error::NoConvergence(Box::new(SolverDiagnostics {
                residual_norm,
                sigma: problem.sigma,
                ..Default::default()
            })));
        }
        return Ok(SolverSolution {
            x_star,
            residual_norm,
            l1_norm: 0.0,
            iterations: 0,
            converged: true,
            diagnostics: SolverDiagnostics {
                residual_norm,
                sigma: problem.sigma,
                ..Default::default()
            },
        });
    }
    let reduced = SolverProblem {
        a: problem.a.clone().remove_column(fixed_zero),
        y: problem.y.clone(),
        sigma: problem.sigma,
        options: problem.options,
    };
    let sol = convex_opt(&reduced)?;
    let x_star = sol.x_star.clone().insert_row(fixed_zero, 0.0);
    Ok(SolverSolution { x_star, ..sol })
}
