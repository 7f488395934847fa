//! Sparse site-indexed operators: the walk generator and its transpose.

use serde::{Deserialize, Serialize};

use crate::lattice::Lattice;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Laplacian,
    Adjoint,
}

/// Square matrix in compressed-row form.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearOperator<T> {
    kind: OperatorKind,
    offsets: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<T>,
}

impl<T: Scalar> LinearOperator<T> {
    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[u32], &[T]) {
        let r = self.offsets[i]..self.offsets[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (c, v) = self.row(i);
        c.iter().zip(v).filter(|(&k, _)| k as usize == j).map(|(_, &x)| x).sum()
    }

    pub fn apply(&self, f: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim()];
        self.apply_into(f, &mut out);
        out
    }

    /// `out = A f`; each row is accumulated in stored order.
    pub fn apply_into(&self, f: &[T], out: &mut [T]) {
        assert_eq!(f.len(), self.dim());
        assert_eq!(out.len(), self.dim());
        for (i, o) in out.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            *o = c.iter().zip(v).fold(T::zero(), |acc, (&j, &a)| acc + a * f[j as usize]);
        }
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.dim()).map(|i| self.row(i).1.iter().copied().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<T> {
        let mut s = vec![T::zero(); self.dim()];
        for (&j, &a) in self.cols.iter().zip(&self.vals) {
            s[j as usize] = s[j as usize] + a;
        }
        s
    }

    /// Exact transpose: every stored value is copied bit for bit. Rows of the
    /// result list their columns in ascending order.
    pub fn transpose(&self) -> Self {
        let n = self.dim();
        let mut counts = vec![0usize; n + 1];
        for &j in &self.cols {
            counts[j as usize + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut next = counts;
        let mut cols = vec![0u32; self.nnz()];
        let mut vals = vec![T::zero(); self.nnz()];
        for i in 0..n {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                let slot = next[j as usize];
                cols[slot] = i as u32;
                vals[slot] = a;
                next[j as usize] += 1;
            }
        }
        let kind = match self.kind {
            OperatorKind::Laplacian => OperatorKind::Adjoint,
            OperatorKind::Adjoint => OperatorKind::Laplacian,
        };
        LinearOperator { kind, offsets, cols, vals }
    }

    /// Dense row-major copy, for small problems and tests.
    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let n = self.dim();
        let mut m = vec![vec![T::zero(); n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                row[j as usize] = row[j as usize] + a;
            }
        }
        m
    }
}

/// `Delta f(x) = h(x)^-1 sum_y p_xy (f(y) - f(x))`.
///
/// The diagonal is stored last in each row as minus the sum of the
/// off-diagonal entries, so rows sum to exactly zero in floating point and
/// `apply` maps constants to exactly zero.
pub fn discrete_laplacian<T: Scalar>(lattice: &Lattice<T>) -> LinearOperator<T> {
    let n = lattice.len();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(lattice.edge_count() + n);
    let mut vals = Vec::with_capacity(lattice.edge_count() + n);
    offsets.push(0);
    for x in 0..n {
        let rate = lattice.holding_time(x).recip();
        let mut off = T::zero();
        for (&y, &p) in lattice.neighbors(x).iter().zip(lattice.jump_probs(x)) {
            let a = rate * p;
            cols.push(y);
            vals.push(a);
            off = off + a;
        }
        cols.push(x as u32);
        vals.push(-off);
        offsets.push(cols.len());
    }
    LinearOperator { kind: OperatorKind::Laplacian, offsets, cols, vals }
}

/// `Delta* f(x) = sum_y (h(y)^-1 p_yx f(y) - h(x)^-1 p_xy f(x))`, the exact
/// transpose of [`discrete_laplacian`].
pub fn adjoint_laplacian<T: Scalar>(lattice: &Lattice<T>) -> LinearOperator<T> {
    discrete_laplacian(lattice).transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use crate::lattice::{build_lattice, TimeScale};
    use proptest::prelude::*;

    fn square(eps: f64) -> Lattice<f64> {
        build_lattice(&DomainSpec::<f64>::rectangle(&[1.0, 1.0]).unwrap(), eps, TimeScale::QuadraticVariation).unwrap()
    }

    #[test]
    fn single_site_gives_zero_operator() {
        let l = Lattice::from_parts(2, 1.0, TimeScale::QuadraticVariation, vec![0, 0], vec![0, 0], vec![], vec![], vec![false], vec![1.0]);
        let op = discrete_laplacian(&l);
        assert_eq!(op.to_dense(), vec![vec![0.0]]);
    }

    #[test]
    fn interior_row_at_half_spacing() {
        let l = build_lattice(&DomainSpec::<f64>::rectangle(&[1.0, 1.0]).unwrap(), 0.5, TimeScale::QuadraticVariation).unwrap();
        let op = discrete_laplacian(&l);
        let c = l.index_of(&[1, 1]).unwrap();
        for &y in l.neighbors(c) {
            assert_eq!(op.get(c, y as usize), 1.0);
        }
        assert_eq!(op.get(c, c), -4.0);
    }

    #[test]
    fn constants_are_annihilated_exactly() {
        for l in [square(1.0 / 16.0), build_lattice(&DomainSpec::<f64>::disc(&[0.0, 0.0], 1.0).unwrap(), 0.1, TimeScale::Laplacian).unwrap()] {
            let op = discrete_laplacian(&l);
            assert!(op.apply(&vec![1.0; l.len()]).iter().all(|&v| v == 0.0));
            assert!(op.row_sums().iter().all(|&v| v == 0.0));
            let adj = adjoint_laplacian(&l);
            assert!(adj.column_sums().iter().all(|&v| v.abs() < 1e-9));
            assert_eq!(adj.kind(), OperatorKind::Adjoint);
        }
    }

    #[test]
    fn symmetric_interior_gives_self_adjoint_operator() {
        // A ring of four sites: every site interior-like with p = 1/2.
        let l = Lattice::from_parts(
            2,
            1.0,
            TimeScale::QuadraticVariation,
            vec![0, 0, 0, 1, 1, 0, 1, 1],
            vec![0, 2, 4, 6, 8],
            vec![1, 2, 0, 3, 0, 3, 1, 2],
            vec![0.5; 8],
            vec![false; 4],
            vec![1.0; 4],
        );
        let a = discrete_laplacian(&l).to_dense();
        let b = adjoint_laplacian(&l).to_dense();
        assert_eq!(a, b);
    }

    #[test]
    fn transpose_is_bitwise() {
        let l = build_lattice(&DomainSpec::<f64>::disc(&[0.0, 0.0], 1.0).unwrap(), 0.125, TimeScale::QuadraticVariation).unwrap();
        let a = discrete_laplacian(&l).to_dense();
        let b = adjoint_laplacian(&l).to_dense();
        for i in 0..l.len() {
            for j in 0..l.len() {
                assert_eq!(a[i][j].to_bits(), b[j][i].to_bits());
            }
        }
        assert_eq!(adjoint_laplacian(&l).transpose().to_dense(), a);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn duality_on_random_functions(seed in proptest::collection::vec(-1.0f64..1.0, 2 * 97)) {
            let l = build_lattice(&DomainSpec::<f64>::disc(&[0.0, 0.0], 1.0).unwrap(), 0.2, TimeScale::QuadraticVariation).unwrap();
            let n = l.len();
            prop_assume!(2 * n <= seed.len());
            let (f, g) = seed[..2 * n].split_at(n);
            let lap = discrete_laplacian(&l);
            let adj = adjoint_laplacian(&l);
            let lhs: f64 = lap.apply(f).iter().zip(g).map(|(a, b)| a * b).sum();
            let rhs: f64 = f.iter().zip(adj.apply(g)).map(|(a, b)| a * b).sum();
            // relative to the magnitude of the summed terms
            let mag: f64 = lap.apply(f).iter().zip(g).map(|(a, b)| (a * b).abs()).sum();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + mag), "{lhs} vs {rhs}");
        }

        #[test]
        fn adjoint_conserves_mass(rho in proptest::collection::vec(-5.0f64..5.0, 97)) {
            let l = build_lattice(&DomainSpec::<f64>::disc(&[0.0, 0.0], 1.0).unwrap(), 0.2, TimeScale::QuadraticVariation).unwrap();
            prop_assume!(l.len() <= rho.len());
            let out = adjoint_laplacian(&l).apply(&rho[..l.len()]);
            let total: f64 = out.iter().sum();
            prop_assert!(total.abs() < 1e-9);
        }
    }
}
