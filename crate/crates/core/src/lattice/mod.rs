//! Lattice approximation of a domain and the reflected random walk on it.
//!
//! Sites are the points of `eps Z^d` in the closed domain. Sites with fewer
//! than `d` neighbours are pruned repeatedly until none remain. Sites with the
//! full `2d` neighbours jump uniformly; the others ("boundary" sites) get jump
//! probabilities whose mean increment points along the inward normal at the
//! nearest boundary point.

mod jumps;
mod simplex;
mod text;

use std::collections::{HashMap, VecDeque};

pub use jumps::{compute_holding_time, solve_boundary_jumps, BoundaryJumps, TimeScale};

use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Lattice<T: Scalar> {
    dim: usize,
    epsilon: T,
    time_scale: TimeScale,
    /// Integer coordinates, `dim` per site; position is `eps * k`.
    coords: Vec<i64>,
    /// CSR neighbour table; within a row neighbours follow the direction
    /// order `+e1, -e1, +e2, -e2, ...`.
    offsets: Vec<usize>,
    targets: Vec<u32>,
    probs: Vec<T>,
    boundary: Vec<bool>,
    holding: Vec<T>,
    normals: Vec<Option<Vec<T>>>,
    pruned: usize,
}

/// Worst-case violations of the jump-probability constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintReport<T> {
    pub max_row_sum_error: T,
    /// Largest tangential drift component at a boundary site, in length units.
    pub max_tangential_drift: T,
    pub min_c1: T,
    pub min_probability: T,
    pub boundary_sites: usize,
    /// First boundary site whose tangential drift exceeds `1e-10 * eps`, if any.
    pub worst_site: Option<usize>,
}

impl<T: Scalar> Lattice<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn time_scale(&self) -> TimeScale {
        self.time_scale
    }

    pub fn len(&self) -> usize {
        self.boundary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundary.is_empty()
    }

    /// Number of sites removed by pruning during construction.
    pub fn pruned(&self) -> usize {
        self.pruned
    }

    pub fn coords(&self, x: usize) -> &[i64] {
        &self.coords[x * self.dim..(x + 1) * self.dim]
    }

    pub fn position(&self, x: usize) -> Vec<T> {
        self.coords(x).iter().map(|&k| T::from_i64(k).unwrap() * self.epsilon).collect()
    }

    pub fn neighbors(&self, x: usize) -> &[u32] {
        &self.targets[self.offsets[x]..self.offsets[x + 1]]
    }

    pub fn jump_probs(&self, x: usize) -> &[T] {
        &self.probs[self.offsets[x]..self.offsets[x + 1]]
    }

    /// `p_xy`, zero when `y` is not a neighbour of `x`.
    pub fn p(&self, x: usize, y: usize) -> T {
        self.neighbors(x)
            .iter()
            .position(|&t| t as usize == y)
            .map_or(T::zero(), |i| self.jump_probs(x)[i])
    }

    pub fn is_boundary(&self, x: usize) -> bool {
        self.boundary[x]
    }

    pub fn holding_time(&self, x: usize) -> T {
        self.holding[x]
    }

    pub fn holding_times(&self) -> &[T] {
        &self.holding
    }

    pub fn normal(&self, x: usize) -> Option<&[T]> {
        self.normals[x].as_deref()
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    /// Mean jump increment `sum_y p_xy (y - x)`.
    pub fn drift(&self, x: usize) -> Vec<T> {
        let cx = self.coords(x);
        let mut out = vec![T::zero(); self.dim];
        for (&y, &p) in self.neighbors(x).iter().zip(self.jump_probs(x)) {
            let cy = self.coords(y as usize);
            for i in 0..self.dim {
                out[i] = out[i] + p * T::from_i64(cy[i] - cx[i]).unwrap() * self.epsilon;
            }
        }
        out
    }

    /// `c1(x) = |drift(x)|`, equal to the fitted constant of the reflection
    /// condition whenever the drift is parallel to the normal.
    pub fn c1(&self, x: usize) -> T {
        crate::domain::norm(&self.drift(x))
    }

    /// Inclusive integer bounds of the site coordinates.
    pub fn coord_bounds(&self) -> (Vec<i64>, Vec<i64>) {
        let mut lo = vec![i64::MAX; self.dim];
        let mut hi = vec![i64::MIN; self.dim];
        for x in 0..self.len() {
            for (i, &k) in self.coords(x).iter().enumerate() {
                lo[i] = lo[i].min(k);
                hi[i] = hi[i].max(k);
            }
        }
        (lo, hi)
    }

    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        // Sites are sorted lexicographically by coordinates.
        let d = self.dim;
        let (mut lo, mut hi) = (0, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.coords(mid).cmp(k) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Some(mid),
            }
        }
        debug_assert!(k.len() == d);
        None
    }

    /// Whether every site uses the same holding time, enabling the uniform
    /// particle draw in the simulator.
    pub fn uniform_holding_time(&self) -> Option<T> {
        let h0 = *self.holding.first()?;
        self.holding.iter().all(|&h| h == h0).then_some(h0)
    }

    /// Checks the jump-probability constraints. `worst_site` is the first
    /// boundary site whose tangential drift exceeds `1e-10 * eps` or whose
    /// drift does not point inward.
    pub fn constraint_report(&self) -> ConstraintReport<T> {
        let tol = T::lit(1e-10) * self.epsilon;
        let mut rep = ConstraintReport {
            max_row_sum_error: T::zero(),
            max_tangential_drift: T::zero(),
            min_c1: T::infinity(),
            min_probability: T::infinity(),
            boundary_sites: 0,
            worst_site: None,
        };
        for x in 0..self.len() {
            let s: T = self.jump_probs(x).iter().copied().sum();
            rep.max_row_sum_error = rep.max_row_sum_error.max((s - T::one()).abs());
            for &p in self.jump_probs(x) {
                rep.min_probability = rep.min_probability.min(p);
            }
            if !self.boundary[x] {
                continue;
            }
            rep.boundary_sites += 1;
            let drift = self.drift(x);
            let (tangential, c1) = match self.normal(x) {
                Some(n) => {
                    let c1: T = drift.iter().zip(n).map(|(&a, &b)| a * b).sum();
                    let t = drift.iter().zip(n).map(|(&a, &b)| (a - c1 * b).powi(2)).sum::<T>().sqrt();
                    (t, c1)
                }
                None => (T::zero(), crate::domain::norm(&drift)),
            };
            rep.max_tangential_drift = rep.max_tangential_drift.max(tangential);
            rep.min_c1 = rep.min_c1.min(c1);
            if rep.worst_site.is_none() && (tangential > tol || !(c1 > T::zero())) {
                rep.worst_site = Some(x);
            }
        }
        rep
    }

    /// Replaces the jump probabilities of site `x`. Used to build corrupted
    /// fixtures for the self-test.
    pub fn set_jump_probs(&mut self, x: usize, probs: &[T]) -> Result<()> {
        let range = self.offsets[x]..self.offsets[x + 1];
        if probs.len() != range.len() {
            return Err(Error::InvalidArgument(format!(
                "site {x} has {} neighbours, got {} probabilities",
                range.len(),
                probs.len()
            )));
        }
        self.probs[range].copy_from_slice(probs);
        Ok(())
    }

    /// Overrides holding times, e.g. to exercise nonuniform-rate code paths.
    pub fn set_holding_times(&mut self, holding: Vec<T>) -> Result<()> {
        if holding.len() != self.len() || holding.iter().any(|&h| !(h > T::zero())) {
            return Err(Error::InvalidArgument("holding times must be positive, one per site".into()));
        }
        self.holding = holding;
        Ok(())
    }
}

fn count_components(offsets: &[usize], targets: &[u32]) -> usize {
    let n = offsets.len() - 1;
    let mut seen = vec![false; n];
    let mut comps = 0;
    let mut queue = VecDeque::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        comps += 1;
        seen[s] = true;
        queue.push_back(s);
        while let Some(x) = queue.pop_front() {
            for &y in &targets[offsets[x]..offsets[x + 1]] {
                let y = y as usize;
                if !seen[y] {
                    seen[y] = true;
                    queue.push_back(y);
                }
            }
        }
    }
    comps
}

fn unit_dirs(d: usize) -> Vec<Vec<i64>> {
    let mut dirs = Vec::with_capacity(2 * d);
    for i in 0..d {
        for s in [1, -1] {
            let mut v = vec![0; d];
            v[i] = s;
            dirs.push(v);
        }
    }
    dirs
}

/// Builds the lattice approximation of `domain` with spacing `epsilon`.
pub fn build_lattice<T: Scalar>(domain: &DomainSpec<T>, epsilon: T, scale: TimeScale) -> Result<Lattice<T>> {
    if !(epsilon > T::zero()) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let d = domain.dim();
    let (lo, hi) = domain.bounding_box();
    let snap = T::lit(1e-9);
    let klo: Vec<i64> = lo.iter().map(|&l| (l / epsilon - snap).ceil().to_i64().unwrap()).collect();
    let khi: Vec<i64> = hi.iter().map(|&h| (h / epsilon + snap).floor().to_i64().unwrap()).collect();
    let count: i128 = klo.iter().zip(&khi).map(|(&a, &b)| (b - a + 1).max(0) as i128).product();
    if count > 50_000_000 {
        return Err(Error::Budget { what: "lattice enumeration", needed: count as u64, budget: 50_000_000 });
    }
    let inside_tol = T::tiny() * domain.length_scale();

    // Enumerate candidate points in lexicographic order.
    let mut pts: Vec<Vec<i64>> = Vec::new();
    if klo.iter().zip(&khi).all(|(a, b)| a <= b) {
        let mut k = klo.clone();
        'odometer: loop {
            let x: Vec<T> = k.iter().map(|&ki| T::from_i64(ki).unwrap() * epsilon).collect();
            if domain.signed_distance(&x) <= inside_tol {
                pts.push(k.clone());
            }
            let mut i = d;
            loop {
                if i == 0 {
                    break 'odometer;
                }
                i -= 1;
                if k[i] < khi[i] {
                    k[i] += 1;
                    continue 'odometer;
                }
                k[i] = klo[i];
            }
        }
    }

    let dirs = unit_dirs(d);
    let neighbours_of = |set: &HashMap<Vec<i64>, ()>, p: &[i64]| -> usize {
        dirs.iter()
            .filter(|dir| {
                let q: Vec<i64> = p.iter().zip(dir.iter()).map(|(a, b)| a + b).collect();
                set.contains_key(&q)
            })
            .count()
    };

    // Prune sites with fewer than d neighbours until nothing changes.
    let mut set: HashMap<Vec<i64>, ()> = pts.iter().map(|p| (p.clone(), ())).collect();
    let mut pruned = 0;
    loop {
        let doomed: Vec<Vec<i64>> = pts.iter().filter(|p| set.contains_key(*p) && neighbours_of(&set, p) < d).cloned().collect();
        if doomed.is_empty() {
            break;
        }
        pruned += doomed.len();
        for p in &doomed {
            set.remove(p);
        }
    }
    pts.retain(|p| set.contains_key(p));
    if pts.is_empty() {
        return Err(Error::EmptyLattice { epsilon: epsilon.as_f64() });
    }
    log::debug!("lattice: {} sites, {} pruned", pts.len(), pruned);

    let index: HashMap<&[i64], usize> = pts.iter().enumerate().map(|(i, p)| (p.as_slice(), i)).collect();
    let n = pts.len();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut targets = Vec::new();
    let mut target_dirs: Vec<usize> = Vec::new();
    offsets.push(0);
    for p in &pts {
        for (di, dir) in dirs.iter().enumerate() {
            let q: Vec<i64> = p.iter().zip(dir).map(|(a, b)| a + b).collect();
            if let Some(&j) = index.get(q.as_slice()) {
                targets.push(j as u32);
                target_dirs.push(di);
            }
        }
        offsets.push(targets.len());
    }
    let components = count_components(&offsets, &targets);
    if components != 1 {
        return Err(Error::DisconnectedLattice { components });
    }

    let mut probs = Vec::with_capacity(targets.len());
    let mut boundary = Vec::with_capacity(n);
    let mut holding = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for (s, p) in pts.iter().enumerate() {
        let nb_dirs: Vec<Vec<T>> = target_dirs[offsets[s]..offsets[s + 1]]
            .iter()
            .map(|&di| dirs[di].iter().map(|&c| T::from_i64(c).unwrap()).collect())
            .collect();
        let is_boundary = nb_dirs.len() < 2 * d;
        let (p_row, normal) = if is_boundary {
            let x: Vec<T> = p.iter().map(|&ki| T::from_i64(ki).unwrap() * epsilon).collect();
            let normal = domain.nearest_boundary_normal(&x)?;
            let sol = solve_boundary_jumps(p, &nb_dirs, &normal, epsilon)?;
            (sol.probs, Some(normal))
        } else {
            (vec![T::one() / T::of_usize(2 * d); 2 * d], None)
        };
        let incr: Vec<Vec<T>> = nb_dirs.iter().map(|u| u.iter().map(|&c| c * epsilon).collect()).collect();
        holding.push(compute_holding_time(&incr, &p_row, scale));
        probs.extend_from_slice(&p_row);
        boundary.push(is_boundary);
        normals.push(normal);
    }

    let lattice = Lattice {
        dim: d,
        epsilon,
        time_scale: scale,
        coords: pts.into_iter().flatten().collect(),
        offsets,
        targets,
        probs,
        boundary,
        holding,
        normals,
        pruned,
    };
    Ok(lattice)
}

impl<T: Scalar> Lattice<T> {
    /// Number of connected components of the neighbour graph.
    pub fn components(&self) -> usize {
        count_components(&self.offsets, &self.targets)
    }

    /// Sites with fewer than `d` neighbours (zero after construction).
    pub fn deficient_sites(&self) -> usize {
        (0..self.len()).filter(|&x| self.neighbors(x).len() < self.dim).count()
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        dim: usize,
        epsilon: T,
        time_scale: TimeScale,
        coords: Vec<i64>,
        offsets: Vec<usize>,
        targets: Vec<u32>,
        probs: Vec<T>,
        boundary: Vec<bool>,
        holding: Vec<T>,
    ) -> Self {
        let n = boundary.len();
        Lattice {
            dim,
            epsilon,
            time_scale,
            coords,
            offsets,
            targets,
            probs,
            boundary,
            holding,
            normals: vec![None; n],
            pruned: 0,
        }
    }
}
