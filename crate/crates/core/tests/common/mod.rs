//! Reference computations used by the integration tests. None of these call
//! into the library's own solver or statistics code.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// `Pr(χ²_k > x)` for even `k`: `e^{−x/2} Σ_{i<k/2} (x/2)^i / i!`.
pub fn chi_square_sf_even(k: usize, x: f64) -> f64 {
    assert!(k.is_multiple_of(2) && k > 0);
    let h = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for i in 1..k / 2 {
        term *= h / i as f64;
        sum += term;
    }
    (-h).exp() * sum
}

fn ln_gamma_half_integer(k: usize) -> f64 {
    // ln Γ(k/2) by the recurrence from Γ(1) = 1 or Γ(1/2) = √π
    let (mut v, mut a) = if k.is_multiple_of(2) { (0.0, 1.0) } else { (0.5 * std::f64::consts::PI.ln(), 0.5) };
    while a < k as f64 / 2.0 - 1e-12 {
        v += a.ln();
        a += 1.0;
    }
    v
}

/// `Pr(χ²_k > x)` by composite Simpson integration of the density over
/// `[x, x + 60k]`.
pub fn chi_square_sf_simpson(k: usize, x: f64) -> f64 {
    let kf = k as f64;
    let ln_norm = -(kf / 2.0) * 2f64.ln() - ln_gamma_half_integer(k);
    let pdf = |t: f64| (ln_norm + (kf / 2.0 - 1.0) * t.ln() - t / 2.0).exp();
    let upper = x + 60.0 * kf;
    let steps = 200_000;
    let h = (upper - x) / steps as f64;
    let mut s = pdf(x) + pdf(upper);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * pdf(x + i as f64 * h);
    }
    s * h / 3.0
}

/// Least ℓ1 norm solutions of `Ax = y` found by enumerating every support
/// of linearly independent columns. Returns `(value, minimizers)`; the
/// optimum is unique exactly when one minimizer is returned. `None` when
/// the system is inconsistent.
pub fn l1_min_equality(a: &DMatrix<f64>, y: &DVector<f64>) -> Option<(f64, Vec<DVector<f64>>)> {
    let n = a.ncols();
    assert!(n <= 12, "enumeration oracle is for tiny instances");
    let scale = y.norm().max(1.0);
    let mut basics: Vec<DVector<f64>> = Vec::new();
    for mask in 0u32..(1 << n) {
        let cols: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
        let x = if cols.is_empty() {
            DVector::zeros(n)
        } else {
            if cols.len() > a.nrows() {
                continue;
            }
            let sub = a.select_columns(&cols);
            let svd = sub.clone().svd(true, true);
            let smax = svd.singular_values.max();
            if svd.singular_values.iter().any(|s| *s <= 1e-10 * smax.max(1.0)) {
                continue;
            }
            let xs = match svd.solve(y, 1e-12) {
                Ok(v) => v,
                Err(_) => continue,
            };
            let mut x = DVector::zeros(n);
            for (i, &c) in cols.iter().enumerate() {
                x[c] = xs[i];
            }
            x
        };
        if (a * &x - y).norm() <= 1e-9 * scale {
            basics.push(x);
        }
    }
    let l1 = |x: &DVector<f64>| x.iter().map(|v| v.abs()).sum::<f64>();
    let best = basics.iter().map(l1).fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return None;
    }
    let mut mins: Vec<DVector<f64>> = Vec::new();
    for x in basics.into_iter().filter(|x| l1(x) <= best + 1e-9 * best.max(1.0)) {
        if !mins.iter().any(|m| (m - &x).norm() <= 1e-9 * scale) {
            mins.push(x);
        }
    }
    Some((best, mins))
}

fn dist_to_segment(p: &[f64; 2], a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) };
    let (qx, qy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    (qx * qx + qy * qy).sqrt()
}

fn in_triangle(p: &[f64; 2], a: &[f64; 2], b: &[f64; 2], c: &[f64; 2]) -> bool {
    let cross = |o: &[f64; 2], u: &[f64; 2], v: &[f64; 2]| (u[0] - o[0]) * (v[1] - o[1]) - (u[1] - o[1]) * (v[0] - o[0]);
    // a degenerate triangle has no interior; its edges are covered by the
    // segment distances
    let area = cross(a, b, c);
    if area.abs() <= 1e-12 * (1.0 + a[0].abs() + a[1].abs() + b[0].abs() + b[1].abs()).powi(2) {
        return false;
    }
    let d1 = cross(a, b, p);
    let d2 = cross(b, c, p);
    let d3 = cross(c, a, p);
    let neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
    let pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
    !(neg && pos)
}

/// Euclidean distance from `y` to `t·conv{±a_j}` for `A` with one or two
/// rows.
fn dist_to_scaled_hull(a: &DMatrix<f64>, y: &DVector<f64>, t: f64) -> f64 {
    match a.nrows() {
        1 => {
            let reach = t * a.iter().map(|v| v.abs()).fold(0.0, f64::max);
            (y[0].abs() - reach).max(0.0)
        }
        2 => {
            let mut pts: Vec<[f64; 2]> = Vec::new();
            for j in 0..a.ncols() {
                pts.push([t * a[(0, j)], t * a[(1, j)]]);
                pts.push([-t * a[(0, j)], -t * a[(1, j)]]);
            }
            let p = [y[0], y[1]];
            for i in 0..pts.len() {
                for j in i + 1..pts.len() {
                    for k in j + 1..pts.len() {
                        if in_triangle(&p, &pts[i], &pts[j], &pts[k]) {
                            return 0.0;
                        }
                    }
                }
            }
            let mut best = f64::INFINITY;
            for i in 0..pts.len() {
                for j in i..pts.len() {
                    best = best.min(dist_to_segment(&p, &pts[i], &pts[j]));
                }
            }
            best
        }
        r => panic!("hull oracle handles one or two rows, got {r}"),
    }
}

/// Optimal value of `min ||x||₁ s.t. ||Ax − y||₂ ≤ σ` for `A` with one or
/// two rows: the smallest `t` whose scaled hull `t·conv{±a_j}` comes
/// within `σ` of `y`, found by bisection.
pub fn l1_min_ball(a: &DMatrix<f64>, y: &DVector<f64>, sigma: f64) -> f64 {
    if y.norm() <= sigma {
        return 0.0;
    }
    let mut hi = 1.0;
    while dist_to_scaled_hull(a, y, hi) > sigma {
        hi *= 2.0;
        assert!(hi < 1e12, "instance is infeasible");
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dist_to_scaled_hull(a, y, mid) > sigma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Smallest angle between two phases, in `[0, π]`.
pub fn phase_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * std::f64::consts::PI);
    d.min(2.0 * std::f64::consts::PI - d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_square_forms_agree() {
        let closed = chi_square_sf_even(20, 40.0);
        let simpson = chi_square_sf_simpson(20, 40.0);
        assert!((closed - simpson).abs() < 1e-9, "{closed} {simpson}");
        assert!((closed - 0.0050).abs() < 5e-5, "{closed}");
        // two degrees of freedom is the exponential tail
        assert!((chi_square_sf_even(2, 3.0) - (-1.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn equality_oracle_on_a_line() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let (v, mins) = l1_min_equality(&a, &DVector::from_row_slice(&[2.0])).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        assert_eq!(mins.len(), 1);
        // equal columns make the optimum a whole segment
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let (_, mins) = l1_min_equality(&a, &DVector::from_row_slice(&[2.0])).unwrap();
        assert_eq!(mins.len(), 2);
    }

    #[test]
    fn ball_oracle_matches_hand_cases() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let v = l1_min_ball(&a, &DVector::from_row_slice(&[2.0]), 0.5);
        assert!((v - 0.75).abs() < 1e-9);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let v = l1_min_ball(&a, &DVector::from_row_slice(&[3.0, 4.0]), 0.0);
        assert!((v - 7.0).abs() < 1e-9);
        let v = l1_min_ball(&a, &DVector::from_row_slice(&[3.0, 4.0]), 5.0);
        assert_eq!(v, 0.0);
        // rank-one rows: the hull is a segment along (1, −1)
        let a = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let v = l1_min_ball(&a, &DVector::from_row_slice(&[2.0, -2.0]), 0.0);
        assert!((v - 2.0).abs() < 1e-9);
        // smallest t with |(2 − t, −1.6 + t)| = 0.5
        let v = l1_min_ball(&a, &DVector::from_row_slice(&[2.0, -1.6]), 0.5);
        let t = (7.2 - 1.36f64.sqrt()) / 4.0;
        assert!((v - t).abs() < 1e-9, "{v} {t}");
    }
}
