//! Dense two-phase simplex for the tiny linear programs that fix boundary
//! jump probabilities (at most 2d + 2 variables, d + 1 equality rows).

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpOutcome<T> {
    Optimal { x: Vec<T>, value: T },
    Infeasible,
    Unbounded,
}

/// Maximises `c . x` subject to `a x = b`, `x >= 0`. Bland's rule is used for
/// both entering and leaving variables, so the method cannot cycle.
pub(crate) fn maximize<T: Scalar>(c: &[T], a: &[Vec<T>], b: &[T]) -> LpOutcome<T> {
    let m = a.len();
    let n = c.len();
    let tol = T::epsilon().sqrt() * T::lit(1e-3);
    let width = n + m + 1;
    let rhs = width - 1;

    let mut tab: Vec<Vec<T>> = Vec::with_capacity(m);
    for i in 0..m {
        debug_assert_eq!(a[i].len(), n);
        let flip = if b[i] < T::zero() { -T::one() } else { T::one() };
        let mut row = vec![T::zero(); width];
        for j in 0..n {
            row[j] = flip * a[i][j];
        }
        row[n + i] = T::one();
        row[rhs] = flip * b[i];
        tab.push(row);
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // Phase 1: maximise minus the sum of artificials.
    let mut obj = vec![T::zero(); width];
    for row in &tab {
        for j in 0..width {
            if j < n || j == rhs {
                obj[j] = obj[j] - row[j];
            }
        }
    }
    if !run(&mut tab, &mut obj, &mut basis, width - 1, tol) {
        return LpOutcome::Unbounded;
    }
    if obj[rhs] < -tol {
        return LpOutcome::Infeasible;
    }

    // Drive remaining artificials out of the basis; drop redundant rows.
    let mut i = 0;
    while i < tab.len() {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| tab[i][j].abs() > tol) {
                pivot(&mut tab, &mut obj, &mut basis, i, j);
            } else {
                tab.remove(i);
                basis.remove(i);
                continue;
            }
        }
        i += 1;
    }

    // Phase 2 on the original objective; artificial columns may not re-enter.
    let mut obj = vec![T::zero(); width];
    for j in 0..n {
        obj[j] = -c[j];
    }
    for (r, &bj) in basis.iter().enumerate() {
        let f = obj[bj];
        if f != T::zero() {
            for j in 0..width {
                obj[j] = obj[j] - f * tab[r][j];
            }
        }
    }
    if !run(&mut tab, &mut obj, &mut basis, n, tol) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![T::zero(); n];
    for (r, &bj) in basis.iter().enumerate() {
        if bj < n {
            x[bj] = tab[r][rhs];
        }
    }
    LpOutcome::Optimal { value: obj[rhs], x }
}

/// Simplex iterations over entering columns `0..ncols`. Returns false when
/// the problem is unbounded.
fn run<T: Scalar>(
    tab: &mut [Vec<T>],
    obj: &mut [T],
    basis: &mut [usize],
    ncols: usize,
    tol: T,
) -> bool {
    let rhs = obj.len() - 1;
    for _ in 0..10_000 {
        let Some(enter) = (0..ncols).find(|&j| obj[j] < -tol) else {
            return true;
        };
        let mut leave: Option<(usize, T)> = None;
        for (r, row) in tab.iter().enumerate() {
            if row[enter] > tol {
                let ratio = row[rhs] / row[enter];
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        if ratio < lratio - tol || (ratio <= lratio + tol && basis[r] < basis[lr]) {
                            Some((r, ratio))
                        } else {
                            Some((lr, lratio))
                        }
                    }
                };
            }
        }
        let Some((r, _)) = leave else {
            return false;
        };
        pivot(tab, obj, basis, r, enter);
    }
    true
}

fn pivot<T: Scalar>(tab: &mut [Vec<T>], obj: &mut [T], basis: &mut [usize], r: usize, c: usize) {
    let p = tab[r][c];
    for v in tab[r].iter_mut() {
        *v = *v / p;
    }
    let prow = tab[r].clone();
    for (i, row) in tab.iter_mut().enumerate() {
        if i != r {
            let f = row[c];
            if f != T::zero() {
                for (v, &pv) in row.iter_mut().zip(&prow) {
                    *v = *v - f * pv;
                }
            }
        }
    }
    let f = obj[c];
    if f != T::zero() {
        for (v, &pv) in obj.iter_mut().zip(&prow) {
            *v = *v - f * pv;
        }
    }
    basis[r] = c;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opt(o: LpOutcome<f64>) -> (Vec<f64>, f64) {
        match o {
            LpOutcome::Optimal { x, value } => (x, value),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 (with slacks)
        let c = [3.0, 5.0, 0.0, 0.0, 0.0];
        let a = vec![
            vec![1.0, 0.0, 1.0, 0.0, 0.0],
            vec![0.0, 2.0, 0.0, 1.0, 0.0],
            vec![3.0, 2.0, 0.0, 0.0, 1.0],
        ];
        let (x, v) = opt(maximize(&c, &a, &[4.0, 12.0, 18.0]));
        assert!((v - 36.0).abs() < 1e-12);
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible() {
        // x + y = 1, x + y = 2
        let a = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        assert_eq!(maximize(&[1.0, 0.0], &a, &[1.0, 2.0]), LpOutcome::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        // x - y = 0, maximise x
        let a = vec![vec![1.0, -1.0]];
        assert_eq!(maximize(&[1.0, 0.0], &a, &[0.0]), LpOutcome::Unbounded);
    }

    #[test]
    fn redundant_rows_and_negative_rhs() {
        let a = vec![vec![1.0, 1.0, 1.0], vec![2.0, 2.0, 2.0], vec![-1.0, 0.0, 0.0]];
        let (x, v) = opt(maximize(&[0.0, 1.0, 0.0], &a, &[1.0, 2.0, -0.25]));
        assert!((x[0] - 0.25).abs() < 1e-12);
        assert!((v - 0.75).abs() < 1e-12);
    }
}
