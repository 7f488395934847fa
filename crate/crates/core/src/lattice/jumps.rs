//! Jump probabilities and holding times of the reflected walk.

use serde::{Deserialize, Serialize};

use super::simplex::{maximize, LpOutcome};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How the mean holding time is normalised.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimeScale {
    /// `h(x) = sum_y p_xy |y - x|^2`: the summed per-coordinate quadratic
    /// variation rate of the walk is 1. Interior sites get `h = eps^2` and the
    /// generator approximates `Delta / (2d)`.
    #[default]
    QuadraticVariation,
    /// `h(x) = sum_y p_xy |y - x|^2 / (2d)`: the generator approximates the
    /// Neumann Laplacian itself, so its spectrum approximates `lambda_n`.
    Laplacian,
}

impl TimeScale {
    pub fn name(self) -> &'static str {
        match self {
            TimeScale::QuadraticVariation => "quadratic_variation",
            TimeScale::Laplacian => "laplacian",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "quadratic_variation" => Some(TimeScale::QuadraticVariation),
            "laplacian" => Some(TimeScale::Laplacian),
            _ => None,
        }
    }

    /// Factor by which the lattice generator approximates the Neumann
    /// Laplacian in dimension `dim`: `1/(2d)` or `1`.
    pub fn generator_factor<T: Scalar>(self, dim: usize) -> T {
        match self {
            TimeScale::QuadraticVariation => T::one() / T::of_usize(2 * dim),
            TimeScale::Laplacian => T::one(),
        }
    }
}

/// Mean holding time for a site with jump increments `offsets` taken with
/// probabilities `probs`.
///
/// When every increment has the same length `l` the result is `l^2` exactly
/// (before the time-scale factor): the probabilities sum to one, and summing
/// them in floating point would only add rounding noise.
pub fn compute_holding_time<T: Scalar>(offsets: &[Vec<T>], probs: &[T], scale: TimeScale) -> T {
    let sq: Vec<T> = offsets.iter().map(|o| o.iter().map(|&c| c * c).sum::<T>()).collect();
    let qv: T = match sq.first() {
        Some(&l2) if sq.iter().all(|&s| s == l2) => l2,
        _ => sq.iter().zip(probs).map(|(&s, &p)| p * s).sum(),
    };
    match scale {
        TimeScale::QuadraticVariation => qv,
        TimeScale::Laplacian => {
            let d = offsets.first().map_or(1, |o| o.len());
            qv / T::of_usize(2 * d)
        }
    }
}

/// Solution of the reflection constraints at one site.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryJumps<T> {
    pub probs: Vec<T>,
    /// `c1` in `sum_y p_xy (y - x) = c1 n`, in length units.
    pub c1: T,
}

/// Jump probabilities for a site whose neighbours lie in the unit directions
/// `dirs` (so the increments are `epsilon * dirs[k]`).
///
/// Returns `p >= 0`, `sum p = 1`, with mean increment `c1 * normal`, `c1 > 0`.
/// Among all feasible solutions the one maximising the smallest probability is
/// chosen; remaining freedom is removed by maximising the probabilities one at
/// a time in the order the directions are given. Sites with a full set of
/// `2d` neighbours get the symmetric `1 / (2d)` and `c1 = 0`.
pub fn solve_boundary_jumps<T: Scalar>(
    coords: &[i64],
    dirs: &[Vec<T>],
    normal: &[T],
    epsilon: T,
) -> Result<BoundaryJumps<T>> {
    let d = normal.len();
    let k = dirs.len();
    let infeasible = || Error::InfeasibleBoundary { coords: coords.to_vec() };
    if k == 2 * d {
        return Ok(BoundaryJumps { probs: vec![T::one() / T::of_usize(k); k], c1: T::zero() });
    }
    if k < d {
        return Err(infeasible());
    }
    // Keeps the tightened bounds feasible under rounding without visibly
    // moving the solution.
    let slack = T::epsilon() * T::lit(4.0);

    // Stage 1: variables q_0..q_{k-1}, t, c with p_k = q_k + t.
    //   sum q + k t = 1
    //   sum_k (q_k + t) dirs_k[i] - c n_i = 0   for every axis i
    let nvar = k + 2;
    let mut a = Vec::with_capacity(d + 1);
    let mut row = vec![T::one(); nvar];
    row[k] = T::of_usize(k);
    row[k + 1] = T::zero();
    a.push(row);
    for i in 0..d {
        let mut row: Vec<T> = dirs.iter().map(|u| u[i]).collect();
        row.push(dirs.iter().map(|u| u[i]).sum());
        row.push(-normal[i]);
        a.push(row);
    }
    let mut b = vec![T::zero(); d + 1];
    b[0] = T::one();
    let mut obj = vec![T::zero(); nvar];
    obj[k] = T::one();
    let t_star = match maximize(&obj, &a, &b) {
        LpOutcome::Optimal { value, .. } => value,
        _ => return Err(infeasible()),
    };

    // Stage 2: lexicographic tie-break. Lower bounds l_k on p_k, p = l + q.
    let mut lower = vec![(t_star - slack).max(T::zero()); k];
    let mut probs = None;
    for target in 0..k {
        let nvar = k + 1;
        let lsum: T = lower.iter().copied().sum();
        let mut a = Vec::with_capacity(d + 1);
        let mut row = vec![T::one(); nvar];
        row[k] = T::zero();
        a.push(row);
        let mut b = vec![T::one() - lsum];
        for i in 0..d {
            let mut row: Vec<T> = dirs.iter().map(|u| u[i]).collect();
            row.push(-normal[i]);
            a.push(row);
            b.push(-dirs.iter().zip(&lower).map(|(u, &l)| l * u[i]).sum::<T>());
        }
        let mut obj = vec![T::zero(); nvar];
        obj[target] = T::one();
        match maximize(&obj, &a, &b) {
            LpOutcome::Optimal { x, .. } => {
                let p: Vec<T> = (0..k).map(|j| lower[j] + x[j]).collect();
                lower[target] = (p[target] - slack).max(lower[target]);
                probs = Some(p);
            }
            _ => return Err(infeasible()),
        }
    }
    let mut probs = probs.ok_or_else(infeasible)?;
    for p in &mut probs {
        *p = p.max(T::zero());
    }
    let total: T = probs.iter().copied().sum();
    for p in &mut probs {
        *p = *p / total;
    }

    let drift: Vec<T> = (0..d).map(|i| dirs.iter().zip(&probs).map(|(u, &p)| p * u[i]).sum()).collect();
    let along: T = drift.iter().zip(normal).map(|(&a, &b)| a * b).sum();
    if !(along > T::tiny()) {
        return Err(infeasible());
    }
    Ok(BoundaryJumps { probs, c1: along * epsilon })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(i: usize, s: f64, d: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = s;
        v
    }

    #[test]
    fn flat_face_three_neighbours() {
        let dirs = vec![e(0, 1.0, 2), e(1, 1.0, 2), e(1, -1.0, 2)];
        let j = solve_boundary_jumps(&[0, 3], &dirs, &[1.0, 0.0], 0.25).unwrap();
        for p in &j.probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-14);
        }
        // drift (eps/3) e1
        assert!((j.c1 - 0.25 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn corner_two_neighbours() {
        let s = 0.5_f64.sqrt();
        let dirs = vec![e(0, 1.0, 2), e(1, 1.0, 2)];
        let j = solve_boundary_jumps(&[0, 0], &dirs, &[s, s], 0.1).unwrap();
        assert!((j.probs[0] - 0.5).abs() < 1e-14 && (j.probs[1] - 0.5).abs() < 1e-14);
        let drift = [j.probs[0], j.probs[1]];
        assert!((drift[0] * s - drift[1] * s).abs() < 1e-14, "parallel to normal");
    }

    #[test]
    fn interior_is_symmetric() {
        let dirs = vec![e(0, 1.0, 3), e(0, -1.0, 3), e(1, 1.0, 3), e(1, -1.0, 3), e(2, 1.0, 3), e(2, -1.0, 3)];
        let j = solve_boundary_jumps(&[1, 1, 1], &dirs, &[1.0, 0.0, 0.0], 0.1).unwrap();
        assert!(j.probs.iter().all(|&p| p == 1.0 / 6.0));
    }

    #[test]
    fn tilted_normal_maximises_minimum() {
        // Missing -e1, normal tilted towards +e2: p(+e2) must exceed p(-e2).
        let th: f64 = 0.3;
        let n = [th.cos(), th.sin()];
        let dirs = vec![e(0, 1.0, 2), e(1, 1.0, 2), e(1, -1.0, 2)];
        let j = solve_boundary_jumps(&[0, 5], &dirs, &n, 1.0).unwrap();
        let p = &j.probs;
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let drift = [p[0], p[1] - p[2]];
        let tangential = -drift[0] * n[1] + drift[1] * n[0];
        assert!(tangential.abs() < 1e-12);
        assert!(j.c1 > 0.0);
        // Brute force the one-parameter family for the max-min value.
        let mut best = 0.0_f64;
        for i in 0..=200_000 {
            let b_minus = i as f64 / 200_000.0 * 0.5;
            // a tan(th) = b+ - b-, a + b+ + b- = 1
            let a = (1.0 - 2.0 * b_minus) / (1.0 + th.tan());
            let b_plus = b_minus + a * th.tan();
            if a >= 0.0 && b_plus >= 0.0 {
                best = best.max(a.min(b_plus).min(b_minus));
            }
        }
        let got = p.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((got - best).abs() < 1e-5, "{got} vs {best}");
    }

    #[test]
    fn infeasible_cone_is_reported_with_coordinates() {
        // Only +e1 and +e2 available but the normal points into (-, -).
        let dirs = vec![e(0, 1.0, 2), e(1, 1.0, 2)];
        let s = 0.5_f64.sqrt();
        match solve_boundary_jumps(&[7, -2], &dirs, &[-s, -s], 0.1) {
            Err(Error::InfeasibleBoundary { coords }) => assert_eq!(coords, vec![7, -2]),
            other => panic!("expected infeasible, got {other:?}"),
        }
        // Opposite pair cannot produce a drift along e1.
        let dirs = vec![e(1, 1.0, 2), e(1, -1.0, 2)];
        assert!(solve_boundary_jumps(&[0, 0], &dirs, &[1.0, 0.0], 0.1).is_err());
    }

    #[test]
    fn holding_times() {
        let eps = 0.125_f64;
        let interior: Vec<Vec<f64>> = (0..4).map(|i| e(i / 2, if i % 2 == 0 { eps } else { -eps }, 2)).collect();
        let h = compute_holding_time(&interior, &[0.25; 4], TimeScale::QuadraticVariation);
        assert!((h - eps * eps).abs() < 1e-18);
        let boundary = vec![e(0, eps, 2), e(1, eps, 2), e(1, -eps, 2)];
        let h = compute_holding_time(&boundary, &[1.0 / 3.0; 3], TimeScale::QuadraticVariation);
        assert!((h - eps * eps).abs() < 1e-17);
        // one length-eps and one length-eps*sqrt(2) jump at (1/2, 1/2)
        let mixed = vec![vec![eps, 0.0], vec![eps, eps]];
        let h = compute_holding_time(&mixed, &[0.5, 0.5], TimeScale::QuadraticVariation);
        assert!((h - 1.5 * eps * eps).abs() < 1e-17);
        let h = compute_holding_time(&interior, &[0.25; 4], TimeScale::Laplacian);
        assert!((h - eps * eps / 4.0).abs() < 1e-18);
    }
}
