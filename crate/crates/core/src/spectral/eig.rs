//! Smallest eigenpairs of the lattice generator.
//!
//! Small lattices are solved densely. Larger ones use block subspace
//! iteration on `(s I - Delta)^-1` with a Rayleigh–Ritz projection onto `-Delta`
//! after every sweep; the shifted matrix is strictly diagonally dominant, so
//! each sweep is a banded LU solve per block column.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::banded::BandedLu;
use super::dense::eigen;
use super::{BasisOrigin, SpectralBasis};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::operator::{discrete_laplacian, LinearOperator};
use crate::scalar::Scalar;

/// Lattices up to this many sites are solved densely.
const DENSE_LIMIT: usize = 300;

/// Extra eigenpairs computed beyond the requested count.
const CLUSTER_PAD: usize = 3;

#[derive(Clone, Debug)]
pub struct EigOptions<T> {
    /// Bound on `||Delta phi + lambda phi||_inf` for `phi` normalised by
    /// `eps^d sum phi^2 = 1`. Raised to `100 u ||Delta||_inf` (`u` the unit
    /// roundoff) when that floor is larger, which only happens in `f32`.
    pub tol: T,
    pub max_iter: usize,
    /// Block size; defaults to `max(2k, k + 8)`.
    pub block: Option<usize>,
    /// Shift `s`; defaults to the lowest continuum eigenvalue of a box with
    /// the lattice's extent.
    pub shift: Option<T>,
}

impl<T: Scalar> Default for EigOptions<T> {
    fn default() -> Self {
        EigOptions { tol: T::lit(1e-8), max_iter: 3000, block: None, shift: None }
    }
}

/// The `k` eigenpairs of `Delta` closest to zero, as a [`SpectralBasis`] with
/// `Delta phi_n = -lambda_n phi_n`.
pub fn eig_neumann<T: Scalar>(lattice: &Lattice<T>, k: usize) -> Result<SpectralBasis<T>> {
    eig_neumann_with(lattice, k, &EigOptions::default())
}

pub fn eig_neumann_with<T: Scalar>(lattice: &Lattice<T>, k: usize, opts: &EigOptions<T>) -> Result<SpectralBasis<T>> {
    let n = lattice.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!("need 1 <= k < site count ({n}), got k = {k}")));
    }
    let op = discrete_laplacian(lattice);
    let op_norm = (0..n)
        .map(|i| op.row(i).1.iter().map(|v| v.abs()).sum::<T>())
        .fold(T::zero(), T::max);
    let tol = opts.tol.max(T::lit(100.0) * T::epsilon() * op_norm);

    // A repeated eigenvalue cut by `k` could not be put in canonical form,
    // so a few extra pairs are computed and dropped afterwards.
    let padded = (k + CLUSTER_PAD).min(n - 1);
    let (values, vectors, iterations) = if n <= DENSE_LIMIT {
        let (v, f) = dense_pairs(&op, padded)?;
        (v, f, 0)
    } else {
        subspace_pairs(lattice, &op, padded, opts, tol)?
    };
    finish(lattice, &op, values, vectors, k, tol, iterations)
}

/// `-Delta` as a dense matrix.
fn dense_pairs<T: Scalar>(op: &LinearOperator<T>, k: usize) -> Result<(Vec<T>, Vec<Vec<T>>)> {
    let a: Vec<Vec<T>> = op.to_dense().into_iter().map(|r| r.into_iter().map(|v| -v).collect()).collect();
    let e = eigen(&a)?;
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&i, &j| e.re[i].partial_cmp(&e.re[j]).unwrap().then(i.cmp(&j)));
    let wanted = &order[..k];
    if let Some(&j) = wanted.iter().find(|&&j| e.im[j] != T::zero()) {
        return Err(Error::Precondition(format!(
            "complex eigenvalue {} + {}i among the {k} smallest",
            e.re[j], e.im[j]
        )));
    }
    let values = wanted.iter().map(|&j| e.re[j]).collect();
    let vectors = wanted.iter().map(|&j| e.vectors.iter().map(|row| row[j]).collect()).collect();
    Ok((values, vectors))
}

fn subspace_pairs<T: Scalar>(
    lattice: &Lattice<T>,
    op: &LinearOperator<T>,
    k: usize,
    opts: &EigOptions<T>,
    tol: T,
) -> Result<(Vec<T>, Vec<Vec<T>>, usize)> {
    let n = lattice.len();
    let p = opts.block.unwrap_or((2 * k).max(k + 8)).clamp(k, n);
    let shift = opts.shift.unwrap_or_else(|| default_shift(lattice));
    let lu = BandedLu::factor_shifted(op, shift)?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_e16e);
    let mut x: Vec<Vec<T>> = (0..p)
        .map(|j| {
            if j == 0 {
                vec![T::one(); n]
            } else {
                (0..n).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect()
            }
        })
        .collect();
    orthonormalize(&mut x, &mut rng);

    let mut last_residuals = Vec::new();
    for iter in 1..=opts.max_iter {
        for col in x.iter_mut() {
            lu.solve_in_place(col);
        }
        orthonormalize(&mut x, &mut rng);

        // Rayleigh–Ritz on -Delta.
        let ax: Vec<Vec<T>> = x.iter().map(|c| op.apply(c).into_iter().map(|v| -v).collect()).collect();
        let h: Vec<Vec<T>> = (0..p).map(|i| (0..p).map(|j| dot(&x[i], &ax[j])).collect()).collect();
        let e = eigen(&h)?;
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&i, &j| e.re[i].partial_cmp(&e.re[j]).unwrap().then(i.cmp(&j)));

        let mut values = Vec::with_capacity(k);
        let mut vectors = Vec::with_capacity(k);
        let mut residuals = Vec::with_capacity(k);
        let mut all_real = true;
        for &j in &order[..k] {
            if e.im[j] != T::zero() {
                all_real = false;
                residuals.push(f64::INFINITY);
                continue;
            }
            let y: Vec<T> = e.vectors.iter().map(|row| row[j]).collect();
            let v = combine(&x, &y);
            let av = combine(&ax, &y);
            let theta = e.re[j];
            let scale = max_abs(&v);
            let r = av.iter().zip(&v).map(|(&a, &b)| (a - theta * b).abs()).fold(T::zero(), T::max) / scale;
            residuals.push(r.as_f64());
            values.push(theta);
            vectors.push(v);
        }
        // Residual relative to the sup norm; the normalised eigenfunctions
        // have sup norm of order one, so this is a slightly stricter test.
        let converged = all_real && residuals.iter().all(|&r| r <= tol.as_f64() * 0.1);
        if converged {
            log::debug!("subspace iteration converged after {iter} sweeps (block {p}, shift {shift})");
            return Ok((values, vectors, iter));
        }
        last_residuals = residuals;

        // Restart from the Ritz vectors of the whole block so the wanted
        // directions are kept in order.
        let mut next = Vec::with_capacity(p);
        for &j in &order {
            if e.im[j] == T::zero() {
                let y: Vec<T> = e.vectors.iter().map(|row| row[j]).collect();
                next.push(combine(&x, &y));
            }
        }
        while next.len() < p {
            next.push(x[next.len()].clone());
        }
        x = next;
        orthonormalize(&mut x, &mut rng);
    }
    Err(Error::EigenConvergence { iterations: opts.max_iter, residuals: last_residuals })
}

/// Lowest nonzero Neumann eigenvalue of the bounding box, in the lattice's
/// time units.
fn default_shift<T: Scalar>(lattice: &Lattice<T>) -> T {
    let (lo, hi) = lattice.coord_bounds();
    let extent = lo.iter().zip(&hi).map(|(a, b)| b - a).max().unwrap_or(1).max(1);
    let len = lattice.epsilon() * T::from_i64(extent).unwrap();
    let pi = T::PI();
    lattice.time_scale().generator_factor::<T>(lattice.dim()) * pi * pi / (len * len)
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn max_abs<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

fn combine<T: Scalar>(cols: &[Vec<T>], y: &[T]) -> Vec<T> {
    let n = cols[0].len();
    let mut out = vec![T::zero(); n];
    for (c, &w) in cols.iter().zip(y) {
        if w == T::zero() {
            continue;
        }
        for (o, &v) in out.iter_mut().zip(c) {
            *o = *o + w * v;
        }
    }
    out
}

/// Modified Gram–Schmidt, two passes; collapsed columns are replaced by
/// fresh random directions.
fn orthonormalize<T: Scalar>(x: &mut [Vec<T>], rng: &mut ChaCha8Rng) {
    for j in 0..x.len() {
        for _attempt in 0..4 {
            let before = dot(&x[j], &x[j]).sqrt();
            for _pass in 0..2 {
                for i in 0..j {
                    let c = dot(&x[i], &x[j]);
                    let (head, tail) = x.split_at_mut(j);
                    for (t, &h) in tail[0].iter_mut().zip(&head[i]) {
                        *t = *t - c * h;
                    }
                }
            }
            let norm = dot(&x[j], &x[j]).sqrt();
            if norm > T::lit(1e-3) * before && norm > T::zero() {
                x[j].iter_mut().for_each(|v| *v = *v / norm);
                break;
            }
            x[j] = (0..x[j].len()).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
        }
    }
}

/// Normalises, fixes the kernel mode, puts repeated eigenvalues into a
/// canonical basis, fixes signs and checks residuals.
fn finish<T: Scalar>(
    lattice: &Lattice<T>,
    op: &LinearOperator<T>,
    mut values: Vec<T>,
    mut vectors: Vec<Vec<T>>,
    keep: usize,
    tol: T,
    iterations: usize,
) -> Result<SpectralBasis<T>> {
    let n = lattice.len();
    // The kernel of a rate matrix is spanned by constants exactly.
    if values[0].abs() <= tol {
        values[0] = T::zero();
        vectors[0] = vec![T::one(); n];
    }
    let weight = lattice.epsilon().powi(lattice.dim() as i32);

    let rel = T::lit(1e-6);
    let mut start = 0;
    while start < values.len() {
        let mut end = start + 1;
        while end < values.len() && (values[end] - values[start]).abs() <= rel * values[start].abs().max(T::one()) {
            end += 1;
        }
        if end - start > 1 {
            canonical_cluster(lattice, op, &mut values[start..end], &mut vectors[start..end]);
        }
        start = end;
    }
    values.truncate(keep);
    vectors.truncate(keep);

    let mut residuals = Vec::with_capacity(values.len());
    for (lambda, v) in values.iter().zip(vectors.iter_mut()) {
        let norm = (weight * dot(v, v)).sqrt();
        v.iter_mut().for_each(|x| *x = *x / norm);
        fix_sign(v);
        let av = op.apply(v);
        let r = av.iter().zip(v.iter()).map(|(&a, &b)| (a + *lambda * b).abs()).fold(T::zero(), T::max);
        residuals.push(r);
    }
    if residuals.iter().any(|&r| !(r <= tol)) {
        return Err(Error::EigenConvergence {
            iterations,
            residuals: residuals.iter().map(|r| r.as_f64()).collect(),
        });
    }
    Ok(SpectralBasis::from_parts(
        BasisOrigin::Numeric,
        lattice.epsilon(),
        lattice.dim(),
        values,
        vectors,
        residuals,
        None,
    ))
}

/// Within a repeated eigenvalue any basis is valid. Orthonormalises the
/// cluster and rotates it to diagonalise the Dirichlet form along `e1`
/// (largest first), breaking remaining ties with `e2`, then `e3`.
fn canonical_cluster<T: Scalar>(lattice: &Lattice<T>, op: &LinearOperator<T>, values: &mut [T], vectors: &mut [Vec<T>]) {
    let m = vectors.len();
    let mut basis = vectors.to_vec();
    for j in 0..m {
        for i in 0..j {
            let c = dot(&basis[i], &basis[j]);
            let (head, tail) = basis.split_at_mut(j);
            for (t, &h) in tail[0].iter_mut().zip(&head[i]) {
                *t = *t - c * h;
            }
        }
        let norm = dot(&basis[j], &basis[j]).sqrt();
        if !(norm > T::lit(1e-8)) {
            log::warn!("repeated eigenvalue cluster is numerically rank deficient; keeping the raw vectors");
            return;
        }
        basis[j].iter_mut().for_each(|v| *v = *v / norm);
    }
    let rotated = rotate_by_axes(lattice, basis, 0);
    for (slot, v) in vectors.iter_mut().zip(rotated) {
        *slot = v;
    }
    for (value, v) in values.iter_mut().zip(vectors.iter()) {
        let av = op.apply(v);
        *value = -dot(v, &av) / dot(v, v);
    }
}

fn rotate_by_axes<T: Scalar>(lattice: &Lattice<T>, basis: Vec<Vec<T>>, axis: usize) -> Vec<Vec<T>> {
    let m = basis.len();
    if m < 2 || axis >= lattice.dim() {
        return basis;
    }
    let diffs: Vec<Vec<T>> = basis.iter().map(|v| axis_differences(lattice, v, axis)).collect();
    let g: Vec<Vec<T>> = (0..m).map(|a| (0..m).map(|b| dot(&diffs[a], &diffs[b])).collect()).collect();
    let (evals, evecs) = jacobi(g);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| evals[b].partial_cmp(&evals[a]).unwrap());
    let rotated: Vec<Vec<T>> = order
        .iter()
        .map(|&c| combine(&basis, &evecs.iter().map(|row| row[c]).collect::<Vec<T>>()))
        .collect();
    let sorted: Vec<T> = order.iter().map(|&c| evals[c]).collect();
    let scale = sorted.iter().fold(T::zero(), |a, &b| a.max(b.abs())).max(T::tiny());
    let mut out = Vec::with_capacity(m);
    let mut start = 0;
    while start < m {
        let mut end = start + 1;
        while end < m && (sorted[end] - sorted[start]).abs() <= T::lit(1e-6) * scale {
            end += 1;
        }
        out.extend(rotate_by_axes(lattice, rotated[start..end].to_vec(), axis + 1));
        start = end;
    }
    out
}

/// `v(x + eps e_axis) - v(x)` over every lattice edge in that direction.
fn axis_differences<T: Scalar>(lattice: &Lattice<T>, v: &[T], axis: usize) -> Vec<T> {
    let mut out = Vec::new();
    for x in 0..lattice.len() {
        let kx = lattice.coords(x);
        for &y in lattice.neighbors(x) {
            let ky = lattice.coords(y as usize);
            if ky[axis] == kx[axis] + 1 {
                out.push(v[y as usize] - v[x]);
            }
        }
    }
    out
}

/// Cyclic Jacobi for a small symmetric matrix; returns eigenvalues and the
/// eigenvector matrix (columns).
fn jacobi<T: Scalar>(mut a: Vec<Vec<T>>) -> (Vec<T>, Vec<Vec<T>>) {
    let m = a.len();
    let mut v: Vec<Vec<T>> = (0..m).map(|i| (0..m).map(|j| if i == j { T::one() } else { T::zero() }).collect()).collect();
    for _sweep in 0..100 {
        let off: T = (0..m).flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let diag: T = (0..m).map(|i| a[i][i] * a[i][i]).sum();
        if off <= T::epsilon() * T::epsilon() * diag || off == T::zero() {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                if a[p][q] == T::zero() {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (T::lit(2.0) * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = (t * t + T::one()).sqrt().recip();
                let s = t * c;
                for k in 0..m {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..m).map(|i| a[i][i]).collect(), v)
}

/// The first site carrying an appreciable value is made positive.
pub(crate) fn fix_sign<T: Scalar>(v: &mut [T]) {
    let peak = max_abs(v);
    if let Some(&first) = v.iter().find(|x| x.abs() > T::lit(1e-3) * peak) {
        if first < T::zero() {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use crate::lattice::{build_lattice, TimeScale};

    fn square(eps: f64, scale: TimeScale) -> Lattice<f64> {
        build_lattice(&DomainSpec::<f64>::rectangle(&[1.0, 1.0]).unwrap(), eps, scale).unwrap()
    }

    #[test]
    fn kernel_is_constant() {
        let l = square(0.25, TimeScale::QuadraticVariation);
        let b = eig_neumann(&l, 4).unwrap();
        assert_eq!(b.eigenvalue(0), 0.0);
        let phi0 = b.phi(0);
        assert!(phi0.iter().all(|&v| v > 0.0 && (v - phi0[0]).abs() < 1e-15));
    }

    #[test]
    fn dense_and_subspace_routes_agree() {
        let l = square(1.0 / 20.0, TimeScale::Laplacian);
        assert!(l.len() > DENSE_LIMIT);
        let sub = eig_neumann(&l, 6).unwrap();
        let op = discrete_laplacian(&l);
        let (dense_vals, _) = dense_pairs(&op, 6).unwrap();
        for (a, b) in sub.eigenvalues().iter().zip(&dense_vals) {
            assert!((a - b).abs() < 1e-8 * b.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn repeated_pair_is_split_by_axis() {
        let l = square(1.0 / 16.0, TimeScale::Laplacian);
        let b = eig_neumann(&l, 3).unwrap();
        let at = |i: usize, k0: i64, k1: i64| b.phi(i)[l.index_of(&[k0, k1]).unwrap()];
        // edge sites have three neighbours, so the modes are not exactly
        // separable; the swap and mirror symmetries of the square are exact
        let s = at(2, 0, 1).signum() * at(1, 1, 0).signum();
        for k0 in 0..=16 {
            for k1 in 0..=16 {
                assert!((at(2, k0, k1) - s * at(1, k1, k0)).abs() < 1e-7);
                assert!((at(1, k0, k1) - at(1, k0, 16 - k1)).abs() < 1e-7);
                assert!((at(1, k0, k1) + at(1, 16 - k0, k1)).abs() < 1e-7);
            }
        }
        let energy = |i: usize, axis: usize| axis_differences(&l, b.phi(i), axis).iter().map(|d| d * d).sum::<f64>();
        assert!(energy(1, 0) > 10.0 * energy(1, 1));
        assert!(energy(2, 1) > 10.0 * energy(2, 0));
        assert!(at(1, 0, 0) > 0.0);
    }

    #[test]
    fn rejects_bad_k() {
        let l = square(0.5, TimeScale::QuadraticVariation);
        assert!(eig_neumann(&l, 0).is_err());
        assert!(eig_neumann(&l, l.len()).is_err());
    }
}
