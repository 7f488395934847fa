//! Neumann spectra of the lattice generator, the forward heat flow and its
//! total-variation normalization.

mod banded;
mod dense;
mod eig;
mod heat;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

pub use eig::{eig_neumann, eig_neumann_with, EigOptions};
pub use heat::{normalize_tv, normalizer_c, total_variation, HeatEvolver, HEAT_TERM_BUDGET};

use crate::domain::{DomainSpec, Shape};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::operator::discrete_laplacian;
use crate::scalar::{fmt17, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisOrigin {
    Numeric,
    ClosedFormRectangle,
}

impl BasisOrigin {
    pub fn name(self) -> &'static str {
        match self {
            BasisOrigin::Numeric => "numeric",
            BasisOrigin::ClosedFormRectangle => "closed_form_rectangle",
        }
    }
}

/// Eigenpairs `Delta phi_n ~ -lambda_n phi_n`, `lambda` ascending, each
/// `phi_n` normalised by `eps^d sum phi_n^2 = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBasis<T> {
    origin: BasisOrigin,
    epsilon: T,
    dim: usize,
    eigenvalues: Vec<T>,
    functions: Vec<Vec<T>>,
    /// `||Delta phi_n + lambda_n phi_n||_inf` on the lattice the basis was
    /// built for.
    residuals: Vec<T>,
    /// Cosine mode numbers of a closed-form basis.
    modes: Option<Vec<Vec<u32>>>,
}

impl<T: Scalar> SpectralBasis<T> {
    pub(crate) fn from_parts(
        origin: BasisOrigin,
        epsilon: T,
        dim: usize,
        eigenvalues: Vec<T>,
        functions: Vec<Vec<T>>,
        residuals: Vec<T>,
        modes: Option<Vec<Vec<u32>>>,
    ) -> Self {
        SpectralBasis { origin, epsilon, dim, eigenvalues, functions, residuals, modes }
    }

    pub fn origin(&self) -> BasisOrigin {
        self.origin
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn sites(&self) -> usize {
        self.functions.first().map_or(0, Vec::len)
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, n: usize) -> T {
        self.eigenvalues[n]
    }

    pub fn phi(&self, n: usize) -> &[T] {
        &self.functions[n]
    }

    pub fn residuals(&self) -> &[T] {
        &self.residuals
    }

    pub fn modes(&self) -> Option<&[Vec<u32>]> {
        self.modes.as_deref()
    }

    pub fn sup_norm(&self, n: usize) -> T {
        self.functions[n].iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// `eps^d <f, g>`.
    pub fn inner(&self, f: &[T], g: &[T]) -> T {
        self.epsilon.powi(self.dim as i32) * f.iter().zip(g).map(|(&a, &b)| a * b).sum::<T>()
    }

    /// `(n, phi_n)` pairs for the simulator's tracked observables.
    pub fn tracked(&self, modes: &[usize]) -> Result<Vec<(usize, Vec<T>)>> {
        modes
            .iter()
            .map(|&n| {
                self.functions
                    .get(n)
                    .map(|f| (n, f.clone()))
                    .ok_or_else(|| Error::InvalidArgument(format!("mode {n} not in a basis of {} modes", self.len())))
            })
            .collect()
    }

    /// Recomputes the residuals against `lattice`.
    pub fn residuals_on(&self, lattice: &Lattice<T>) -> Result<Vec<T>> {
        if lattice.len() != self.sites() {
            return Err(Error::InvalidArgument("basis and lattice have different site counts".into()));
        }
        let op = discrete_laplacian(lattice);
        Ok(self
            .functions
            .iter()
            .zip(&self.eigenvalues)
            .map(|(f, &l)| op.apply(f).iter().zip(f).map(|(&a, &b)| (a + l * b).abs()).fold(T::zero(), T::max))
            .collect())
    }

    /// Plain-text export: header, one `lambda n value residual` line per
    /// mode, then one `phi site v_0 .. v_{k-1}` line per site.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "abwalk-basis 1")?;
        writeln!(w, "origin {}", self.origin.name())?;
        writeln!(w, "dim {}", self.dim)?;
        writeln!(w, "epsilon {}", fmt17(self.epsilon))?;
        writeln!(w, "sites {}", self.sites())?;
        writeln!(w, "modes {}", self.len())?;
        for (n, (&l, &r)) in self.eigenvalues.iter().zip(&self.residuals).enumerate() {
            write!(w, "lambda {n} {} {}", fmt17(l), fmt17(r))?;
            if let Some(m) = &self.modes {
                for k in &m[n] {
                    write!(w, " {k}")?;
                }
            }
            writeln!(w)?;
        }
        for x in 0..self.sites() {
            write!(w, "phi {x}")?;
            for f in &self.functions {
                write!(w, " {}", fmt17(f[x]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| -> Result<(usize, Vec<String>)> {
            match lines.next() {
                Some((i, l)) => Ok((i, l?.split_whitespace().map(str::to_owned).collect())),
                None => Err(Error::parse(0, format!("unexpected end of input, expected {what}"))),
            }
        };
        fn num<V: std::str::FromStr>(line: usize, s: &str) -> Result<V> {
            s.parse().map_err(|_| Error::parse(line, format!("bad number {s:?}")))
        }
        fn keyed(line: usize, parts: &[String], key: &str, n: usize) -> Result<()> {
            if parts.first().map(String::as_str) != Some(key) || parts.len() < n {
                return Err(Error::parse(line, format!("expected {key:?} with {} fields", n - 1)));
            }
            Ok(())
        }
        let (i, h) = next("header")?;
        if h != ["abwalk-basis", "1"] {
            return Err(Error::parse(i, "not an abwalk-basis version 1 file"));
        }
        let (i, o) = next("origin")?;
        keyed(i, &o, "origin", 2)?;
        let origin = match o[1].as_str() {
            "numeric" => BasisOrigin::Numeric,
            "closed_form_rectangle" => BasisOrigin::ClosedFormRectangle,
            other => return Err(Error::parse(i, format!("unknown origin {other:?}"))),
        };
        let (i, d) = next("dim")?;
        keyed(i, &d, "dim", 2)?;
        let dim: usize = num(i, &d[1])?;
        let (i, e) = next("epsilon")?;
        keyed(i, &e, "epsilon", 2)?;
        let epsilon: T = num(i, &e[1])?;
        let (i, s) = next("sites")?;
        keyed(i, &s, "sites", 2)?;
        let sites: usize = num(i, &s[1])?;
        let (i, m) = next("modes")?;
        keyed(i, &m, "modes", 2)?;
        let k: usize = num(i, &m[1])?;

        let mut eigenvalues = Vec::with_capacity(k);
        let mut residuals = Vec::with_capacity(k);
        let mut modes = Vec::new();
        for n in 0..k {
            let (i, p) = next("lambda")?;
            keyed(i, &p, "lambda", 4)?;
            if num::<usize>(i, &p[1])? != n {
                return Err(Error::parse(i, "modes out of order"));
            }
            eigenvalues.push(num(i, &p[2])?);
            residuals.push(num(i, &p[3])?);
            let idx: Vec<u32> = p[4..].iter().map(|s| num(i, s)).collect::<Result<_>>()?;
            if origin == BasisOrigin::ClosedFormRectangle {
                if idx.len() != dim {
                    return Err(Error::parse(i, "closed-form mode needs one index per dimension"));
                }
                modes.push(idx);
            }
        }
        let mut functions = vec![Vec::with_capacity(sites); k];
        for x in 0..sites {
            let (i, p) = next("phi")?;
            keyed(i, &p, "phi", 2 + k)?;
            if p.len() != 2 + k || num::<usize>(i, &p[1])? != x {
                return Err(Error::parse(i, "malformed phi row"));
            }
            for (f, s) in functions.iter_mut().zip(&p[2..]) {
                f.push(num(i, s)?);
            }
        }
        let modes = (origin == BasisOrigin::ClosedFormRectangle).then_some(modes);
        Ok(SpectralBasis { origin, epsilon, dim, eigenvalues, functions, residuals, modes })
    }

    pub fn from_text(s: &str) -> Result<Self> {
        Self::read_text(s.as_bytes())
    }
}

/// Sampled Neumann cosines of a rectangle `[0, a_1] x ... `, the `k` lowest
/// by continuum eigenvalue `pi^2 sum (m_i / a_i)^2`, scaled by the lattice
/// time scale's generator factor. Ties are ordered with the larger index on
/// the earlier axis first, so mode `(1, 0)` precedes `(0, 1)`.
pub fn closed_form_basis<T: Scalar>(domain: &DomainSpec<T>, lattice: &Lattice<T>, k: usize) -> Result<SpectralBasis<T>> {
    let Shape::Rectangle { sides } = domain.shape() else {
        return Err(Error::InvalidArgument("closed-form basis needs a rectangle".into()));
    };
    let d = sides.len();
    if d != lattice.dim() {
        return Err(Error::InvalidArgument("domain and lattice dimensions differ".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let bound = k as u32;
    let mut all: Vec<(T, Vec<u32>)> = Vec::new();
    let mut idx = vec![0u32; d];
    loop {
        let key: T = idx
            .iter()
            .zip(sides)
            .map(|(&m, &a)| {
                let r = T::from_u32(m).unwrap() / a;
                r * r
            })
            .sum();
        all.push((key, idx.clone()));
        let mut axis = 0;
        while axis < d {
            idx[axis] += 1;
            if idx[axis] < bound {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
        if axis == d {
            break;
        }
    }
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| b.1.cmp(&a.1)));
    all.truncate(k);

    let pi = T::PI();
    let factor = lattice.time_scale().generator_factor::<T>(d);
    let weight = lattice.epsilon().powi(d as i32);
    let positions: Vec<Vec<T>> = (0..lattice.len()).map(|x| lattice.position(x)).collect();
    let mut eigenvalues = Vec::with_capacity(k);
    let mut functions = Vec::with_capacity(k);
    let mut modes = Vec::with_capacity(k);
    for (key, m) in all {
        let mut f: Vec<T> = positions
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&m)
                    .zip(sides)
                    .map(|((&x, &mi), &a)| (pi * T::from_u32(mi).unwrap() * x / a).cos())
                    .fold(T::one(), |acc, c| acc * c)
            })
            .collect();
        let norm = (weight * f.iter().map(|&v| v * v).sum::<T>()).sqrt();
        f.iter_mut().for_each(|v| *v = *v / norm);
        eig::fix_sign(&mut f);
        eigenvalues.push(factor * pi * pi * key);
        functions.push(f);
        modes.push(m);
    }
    let mut basis = SpectralBasis::from_parts(
        BasisOrigin::ClosedFormRectangle,
        lattice.epsilon(),
        d,
        eigenvalues,
        functions,
        Vec::new(),
        Some(modes),
    );
    basis.residuals = basis.residuals_on(lattice)?;
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, TimeScale};

    fn unit_square(eps: f64, scale: TimeScale) -> (DomainSpec<f64>, Lattice<f64>) {
        let d = DomainSpec::<f64>::rectangle(&[1.0, 1.0]).unwrap();
        let l = build_lattice(&d, eps, scale).unwrap();
        (d, l)
    }

    #[test]
    fn closed_form_modes_and_orthogonality() {
        let (d, l) = unit_square(1.0 / 16.0, TimeScale::Laplacian);
        let b = closed_form_basis(&d, &l, 4).unwrap();
        assert_eq!(b.modes().unwrap(), &[vec![0, 0], vec![1, 0], vec![0, 1], vec![1, 1]]);
        assert_eq!(b.eigenvalue(0), 0.0);
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((b.eigenvalue(1) - pi2).abs() < 1e-12);
        for x in 0..l.len() {
            let p = l.position(x);
            let want = (std::f64::consts::PI * p[0]).cos();
            assert!((b.phi(1)[x] / b.phi(1)[0] - want).abs() < 1e-12);
        }
        assert!(b.inner(b.phi(1), b.phi(2)).abs() < 1.0 / 16.0);
        assert!((b.inner(b.phi(1), b.phi(1)) - 1.0).abs() < 1e-12);

        // the quadratic-variation clock slows everything by 1/(2d)
        let (d, l) = unit_square(1.0 / 16.0, TimeScale::QuadraticVariation);
        let b = closed_form_basis(&d, &l, 2).unwrap();
        assert!((b.eigenvalue(1) - pi2 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn numeric_basis_is_orthonormal_in_the_interior_sense() {
        let (_, l) = unit_square(0.125, TimeScale::Laplacian);
        let b = eig_neumann(&l, 5).unwrap();
        for n in 0..5 {
            assert!((b.inner(b.phi(n), b.phi(n)) - 1.0).abs() < 1e-12);
        }
        // right eigenvectors of a nonsymmetric matrix: orthogonal only to O(eps)
        assert!(b.inner(b.phi(1), b.phi(2)).abs() < 0.125);
        assert!(b.residuals().iter().all(|&r| r <= 1e-8));
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let (d, l) = unit_square(0.25, TimeScale::Laplacian);
        for b in [eig_neumann(&l, 4).unwrap(), closed_form_basis(&d, &l, 3).unwrap()] {
            let back = SpectralBasis::<f64>::from_text(&b.to_text()).unwrap();
            assert_eq!(back, b);
        }
        assert!(SpectralBasis::<f64>::from_text("abwalk-basis 2\n").is_err());
    }

    #[test]
    fn tracked_rejects_missing_modes() {
        let (_, l) = unit_square(0.25, TimeScale::Laplacian);
        let b = eig_neumann(&l, 3).unwrap();
        assert_eq!(b.tracked(&[1]).unwrap()[0].1, b.phi(1));
        assert!(b.tracked(&[3]).is_err());
    }

    #[test]
    fn closed_form_needs_rectangle() {
        let d = DomainSpec::<f64>::disc(&[0.0, 0.0], 1.0).unwrap();
        let l = build_lattice(&d, 0.25, TimeScale::Laplacian).unwrap();
        assert!(closed_form_basis(&d, &l, 2).is_err());
    }
}
