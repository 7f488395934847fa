//! Banded LU without pivoting, for `s I - Delta` with `s > 0`.
//!
//! `-Delta` has a positive diagonal, nonpositive off-diagonals and zero row
//! sums, so `s I - Delta` is strictly diagonally dominant by rows and
//! elimination without pivoting is stable.

use crate::error::{Error, Result};
use crate::operator::LinearOperator;
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub(crate) struct BandedLu<T> {
    n: usize,
    bw: usize,
    /// Row `i` stores columns `i - bw ..= i + bw` at offsets `0 ..= 2 bw`.
    band: Vec<T>,
}

impl<T: Scalar> BandedLu<T> {
    /// Factors `shift I - op`.
    pub(crate) fn factor_shifted(op: &LinearOperator<T>, shift: T) -> Result<Self> {
        let n = op.dim();
        let bw = (0..n)
            .flat_map(|i| op.row(i).0.iter().map(move |&j| (j as usize).abs_diff(i)))
            .max()
            .unwrap_or(0);
        let width = 2 * bw + 1;
        let mut band = vec![T::zero(); n * width];
        for i in 0..n {
            let (cols, vals) = op.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let slot = i * width + (j as usize + bw - i);
                band[slot] = band[slot] - v;
            }
            band[i * width + bw] = band[i * width + bw] + shift;
        }
        let at = |i: usize, j: usize| i * width + (j + bw - i);
        for k in 0..n {
            let pivot = band[at(k, k)];
            if !(pivot.abs() > T::zero()) {
                return Err(Error::Precondition(format!("zero pivot at row {k} in banded factorisation")));
            }
            let last = (k + bw).min(n - 1);
            for i in k + 1..=last {
                let l = band[at(i, k)] / pivot;
                if l == T::zero() {
                    continue;
                }
                band[at(i, k)] = l;
                for j in k + 1..=last {
                    band[at(i, j)] = band[at(i, j)] - l * band[at(k, j)];
                }
            }
        }
        Ok(BandedLu { n, bw, band })
    }

    #[cfg(test)]
    pub(crate) fn bandwidth(&self) -> usize {
        self.bw
    }

    pub(crate) fn solve_in_place(&self, x: &mut [T]) {
        let (n, bw) = (self.n, self.bw);
        let width = 2 * bw + 1;
        let at = |i: usize, j: usize| i * width + (j + bw - i);
        for i in 0..n {
            let mut acc = x[i];
            for j in i.saturating_sub(bw)..i {
                acc = acc - self.band[at(i, j)] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..=(i + bw).min(n - 1) {
                acc = acc - self.band[at(i, j)] * x[j];
            }
            x[i] = acc / self.band[at(i, i)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use crate::lattice::{build_lattice, TimeScale};
    use crate::operator::discrete_laplacian;

    #[test]
    fn solves_shifted_system_on_a_disc() {
        let d = DomainSpec::<f64>::disc(&[0.0, 0.0], 1.0).unwrap();
        let l = build_lattice(&d, 0.2, TimeScale::QuadraticVariation).unwrap();
        let op = discrete_laplacian(&l);
        let lu = BandedLu::factor_shifted(&op, 1.5).unwrap();
        assert!(lu.bandwidth() < l.len());
        let x: Vec<f64> = (0..l.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        // b = (1.5 I - Delta) x
        let ax = op.apply(&x);
        let mut b: Vec<f64> = x.iter().zip(&ax).map(|(xi, ai)| 1.5 * xi - ai).collect();
        lu.solve_in_place(&mut b);
        for (got, want) in b.iter().zip(&x) {
            assert!((got - want).abs() < 1e-12);
        }
    }
}
