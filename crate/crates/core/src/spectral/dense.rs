//! Dense nonsymmetric eigensolver for the small Rayleigh–Ritz matrices:
//! Householder reduction to Hessenberg form followed by the shifted QR
//! iteration with accumulated transformations and back-substitution for the
//! eigenvectors of real eigenvalues (the classic EISPACK `orthes`/`hqr2`
//! pair).

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Eigenvalues `re + i im` of a real square matrix and, for every real
/// eigenvalue, a right eigenvector (column `j` of `vectors` belongs to
/// eigenvalue `j`; columns of complex eigenvalues are unspecified).
#[derive(Clone, Debug)]
pub(crate) struct DenseEigen<T> {
    pub re: Vec<T>,
    pub im: Vec<T>,
    /// Row-major `n x n`.
    pub vectors: Vec<Vec<T>>,
}

pub(crate) fn eigen<T: Scalar>(a: &[Vec<T>]) -> Result<DenseEigen<T>> {
    let n = a.len();
    let mut h: Vec<Vec<T>> = a.to_vec();
    let mut v = vec![vec![T::zero(); n]; n];
    if n == 0 {
        return Ok(DenseEigen { re: vec![], im: vec![], vectors: v });
    }
    orthes(&mut h, &mut v);
    let (re, im) = hqr2(&mut h, &mut v)?;
    Ok(DenseEigen { re, im, vectors: v })
}

fn orthes<T: Scalar>(h: &mut [Vec<T>], v: &mut [Vec<T>]) {
    let n = h.len();
    let high = n - 1;
    let mut ort = vec![T::zero(); n];
    for m in 1..high {
        let scale: T = (m..=high).map(|i| h[i][m - 1].abs()).sum();
        if scale == T::zero() {
            continue;
        }
        let mut hh = T::zero();
        for i in (m..=high).rev() {
            ort[i] = h[i][m - 1] / scale;
            hh = hh + ort[i] * ort[i];
        }
        let mut g = hh.sqrt();
        if ort[m] > T::zero() {
            g = -g;
        }
        hh = hh - ort[m] * g;
        ort[m] = ort[m] - g;
        for j in m..n {
            let mut f = T::zero();
            for i in (m..=high).rev() {
                f = f + ort[i] * h[i][j];
            }
            f = f / hh;
            for i in m..=high {
                h[i][j] = h[i][j] - f * ort[i];
            }
        }
        for row in h.iter_mut().take(high + 1) {
            let mut f = T::zero();
            for j in (m..=high).rev() {
                f = f + ort[j] * row[j];
            }
            f = f / hh;
            for j in m..=high {
                row[j] = row[j] - f * ort[j];
            }
        }
        ort[m] = scale * ort[m];
        h[m][m - 1] = scale * g;
    }
    for (i, row) in v.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = if i == j { T::one() } else { T::zero() };
        }
    }
    for m in (1..high).rev() {
        if h[m][m - 1] == T::zero() {
            continue;
        }
        for i in m + 1..=high {
            ort[i] = h[i][m - 1];
        }
        for j in m..=high {
            let mut g = T::zero();
            for i in m..=high {
                g = g + ort[i] * v[i][j];
            }
            g = (g / ort[m]) / h[m][m - 1];
            for i in m..=high {
                v[i][j] = v[i][j] + g * ort[i];
            }
        }
    }
}

#[allow(clippy::many_single_char_names, unused_assignments)]
fn hqr2<T: Scalar>(h: &mut [Vec<T>], v: &mut [Vec<T>]) -> Result<(Vec<T>, Vec<T>)> {
    let nn = h.len();
    let zero = T::zero();
    let two = T::lit(2.0);
    let eps = T::epsilon();
    let mut d = vec![zero; nn];
    let mut e = vec![zero; nn];
    let mut exshift = zero;
    let (mut p, mut q, mut r, mut s, mut z) = (zero, zero, zero, zero, zero);
    let (mut w, mut x, mut y);

    let mut norm = zero;
    for i in 0..nn {
        for j in i.saturating_sub(1)..nn {
            norm = norm + h[i][j].abs();
        }
    }

    let max_iter = 60 * nn.max(1);
    let mut total_iter = 0usize;
    let mut n = nn as isize - 1;
    let mut iter = 0;
    while n >= 0 {
        let nu = n as usize;
        let mut l = nu;
        while l > 0 {
            s = h[l - 1][l - 1].abs() + h[l][l].abs();
            if s == zero {
                s = norm;
            }
            if h[l][l - 1].abs() < eps * s {
                break;
            }
            l -= 1;
        }
        if l == nu {
            h[nu][nu] = h[nu][nu] + exshift;
            d[nu] = h[nu][nu];
            e[nu] = zero;
            n -= 1;
            iter = 0;
        } else if l + 1 == nu {
            w = h[nu][nu - 1] * h[nu - 1][nu];
            p = (h[nu - 1][nu - 1] - h[nu][nu]) / two;
            q = p * p + w;
            z = q.abs().sqrt();
            h[nu][nu] = h[nu][nu] + exshift;
            h[nu - 1][nu - 1] = h[nu - 1][nu - 1] + exshift;
            x = h[nu][nu];
            if q >= zero {
                z = if p >= zero { p + z } else { p - z };
                d[nu - 1] = x + z;
                d[nu] = d[nu - 1];
                if z != zero {
                    d[nu] = x - w / z;
                }
                e[nu - 1] = zero;
                e[nu] = zero;
                x = h[nu][nu - 1];
                s = x.abs() + z.abs();
                p = x / s;
                q = z / s;
                r = (p * p + q * q).sqrt();
                p = p / r;
                q = q / r;
                for j in nu - 1..nn {
                    z = h[nu - 1][j];
                    h[nu - 1][j] = q * z + p * h[nu][j];
                    h[nu][j] = q * h[nu][j] - p * z;
                }
                for row in h.iter_mut().take(nu + 1) {
                    z = row[nu - 1];
                    row[nu - 1] = q * z + p * row[nu];
                    row[nu] = q * row[nu] - p * z;
                }
                for row in v.iter_mut() {
                    z = row[nu - 1];
                    row[nu - 1] = q * z + p * row[nu];
                    row[nu] = q * row[nu] - p * z;
                }
            } else {
                d[nu - 1] = x + p;
                d[nu] = x + p;
                e[nu - 1] = z;
                e[nu] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            x = h[nu][nu];
            y = zero;
            w = zero;
            if l < nu {
                y = h[nu - 1][nu - 1];
                w = h[nu][nu - 1] * h[nu - 1][nu];
            }
            if iter == 10 {
                exshift = exshift + x;
                for i in 0..=nu {
                    h[i][i] = h[i][i] - x;
                }
                s = h[nu][nu - 1].abs() + h[nu - 1][nu - 2].abs();
                x = T::lit(0.75) * s;
                y = x;
                w = T::lit(-0.4375) * s * s;
            }
            if iter == 30 {
                s = (y - x) / two;
                s = s * s + w;
                if s > zero {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / two + s);
                    for i in 0..=nu {
                        h[i][i] = h[i][i] - s;
                    }
                    exshift = exshift + s;
                    x = T::lit(0.964);
                    y = x;
                    w = x;
                }
            }
            iter += 1;
            total_iter += 1;
            if total_iter > max_iter {
                return Err(Error::EigenConvergence { iterations: total_iter, residuals: vec![] });
            }

            let mut m = nu - 2;
            loop {
                z = h[m][m];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[m + 1][m] + h[m][m + 1];
                q = h[m + 1][m + 1] - z - r - s;
                r = h[m + 2][m + 1];
                s = p.abs() + q.abs() + r.abs();
                p = p / s;
                q = q / s;
                r = r / s;
                if m == l {
                    break;
                }
                if h[m][m - 1].abs() * (q.abs() + r.abs())
                    < eps * (p.abs() * (h[m - 1][m - 1].abs() + z.abs() + h[m + 1][m + 1].abs()))
                {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nu {
                h[i][i - 2] = zero;
                if i > m + 2 {
                    h[i][i - 3] = zero;
                }
            }
            let mut k = m;
            while k < nu {
                let notlast = k != nu - 1;
                if k != m {
                    p = h[k][k - 1];
                    q = h[k + 1][k - 1];
                    r = if notlast { h[k + 2][k - 1] } else { zero };
                    x = p.abs() + q.abs() + r.abs();
                    if x == zero {
                        k += 1;
                        continue;
                    }
                    p = p / x;
                    q = q / x;
                    r = r / x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < zero {
                    s = -s;
                }
                if s != zero {
                    if k != m {
                        h[k][k - 1] = -s * x;
                    } else if l != m {
                        h[k][k - 1] = -h[k][k - 1];
                    }
                    p = p + s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q = q / p;
                    r = r / p;
                    for j in k..nn {
                        p = h[k][j] + q * h[k + 1][j];
                        if notlast {
                            p = p + r * h[k + 2][j];
                            h[k + 2][j] = h[k + 2][j] - p * z;
                        }
                        h[k][j] = h[k][j] - p * x;
                        h[k + 1][j] = h[k + 1][j] - p * y;
                    }
                    for row in h.iter_mut().take(nu.min(k + 3) + 1) {
                        p = x * row[k] + y * row[k + 1];
                        if notlast {
                            p = p + z * row[k + 2];
                            row[k + 2] = row[k + 2] - p * r;
                        }
                        row[k] = row[k] - p;
                        row[k + 1] = row[k + 1] - p * q;
                    }
                    for row in v.iter_mut() {
                        p = x * row[k] + y * row[k + 1];
                        if notlast {
                            p = p + z * row[k + 2];
                            row[k + 2] = row[k + 2] - p * r;
                        }
                        row[k] = row[k] - p;
                        row[k + 1] = row[k + 1] - p * q;
                    }
                }
                k += 1;
            }
        }
    }

    if norm == zero {
        return Ok((d, e));
    }
    // Back-substitution on the quasi-triangular form, real eigenvalues only.
    for nu in (0..nn).rev() {
        p = d[nu];
        if e[nu] != zero {
            continue;
        }
        let mut l = nu;
        h[nu][nu] = T::one();
        for i in (0..nu).rev() {
            w = h[i][i] - p;
            r = zero;
            for j in l..=nu {
                r = r + h[i][j] * h[j][nu];
            }
            if e[i] < zero {
                z = w;
                s = r;
            } else {
                l = i;
                if e[i] == zero {
                    // A near-zero gap means a repeated eigenvalue; clamping keeps the
                    // vectors of the repeated pair independent.
                    let floor = eps * norm;
                    h[i][nu] = -r / if w.abs() < floor { floor } else { w };
                } else {
                    x = h[i][i + 1];
                    y = h[i + 1][i];
                    q = (d[i] - p) * (d[i] - p) + e[i] * e[i];
                    let t = (x * s - z * r) / q;
                    h[i][nu] = t;
                    h[i + 1][nu] = if x.abs() > z.abs() { (-r - w * t) / x } else { (-s - y * t) / z };
                }
                let t = h[i][nu].abs();
                if (eps * t) * t > T::one() {
                    for row in h.iter_mut().take(nu + 1).skip(i) {
                        row[nu] = row[nu] / t;
                    }
                }
            }
        }
    }
    for j in (0..nn).rev() {
        if e[j] != zero {
            continue;
        }
        for row in v.iter_mut() {
            let mut acc = zero;
            for k in 0..=j {
                acc = acc + row[k] * h[k][j];
            }
            row[j] = acc;
        }
    }
    Ok((d, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_pairs(a: &[Vec<f64>], eig: &DenseEigen<f64>, tol: f64) {
        let n = a.len();
        for j in 0..n {
            if eig.im[j] != 0.0 {
                continue;
            }
            let vj: Vec<f64> = (0..n).map(|i| eig.vectors[i][j]).collect();
            let nv = vj.iter().map(|x| x * x).sum::<f64>().sqrt();
            for i in 0..n {
                let av: f64 = (0..n).map(|k| a[i][k] * vj[k]).sum();
                assert!((av - eig.re[j] * vj[i]).abs() <= tol * nv, "pair {j}");
            }
        }
    }

    #[test]
    fn triangular_and_symmetric_matrices() {
        let a = vec![vec![2.0, 1.0, 0.5], vec![0.0, -1.0, 3.0], vec![0.0, 0.0, 4.0]];
        let e = eigen(&a).unwrap();
        let mut re = e.re.clone();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(re, vec![-1.0, 2.0, 4.0]);
        check_pairs(&a, &e, 1e-12);

        let s = vec![vec![2.0, -1.0, 0.0], vec![-1.0, 2.0, -1.0], vec![0.0, -1.0, 2.0]];
        let e = eigen(&s).unwrap();
        let mut re = e.re.clone();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let r2 = 2.0_f64.sqrt();
        for (got, want) in re.iter().zip([2.0 - r2, 2.0, 2.0 + r2]) {
            assert!((got - want).abs() < 1e-13);
        }
        check_pairs(&s, &e, 1e-12);
    }

    #[test]
    fn complex_pair_and_degenerate_block() {
        // rotation block has eigenvalues +-i; the 1 x 1 block is real
        let a = vec![vec![0.0, -1.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.3, 0.2, 5.0]];
        let e = eigen(&a).unwrap();
        let complex = e.im.iter().filter(|&&x| x != 0.0).count();
        assert_eq!(complex, 2);
        check_pairs(&a, &e, 1e-12);

        let id = vec![vec![3.0, 0.0], vec![0.0, 3.0]];
        let e = eigen(&id).unwrap();
        assert_eq!(e.re, vec![3.0, 3.0]);
        check_pairs(&id, &e, 1e-14);
    }

    #[test]
    fn random_nonsymmetric_matrix() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 12;
        // near-symmetric like the Ritz matrices
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { i as f64 } else { 0.05 * rng.gen_range(-1.0..1.0) }).collect())
            .collect();
        let e = eigen(&a).unwrap();
        assert!(e.im.iter().all(|&x| x == 0.0));
        check_pairs(&a, &e, 1e-11);
        let trace: f64 = (0..n).map(|i| a[i][i]).sum();
        assert!((e.re.iter().sum::<f64>() - trace).abs() < 1e-10);
    }
}
