//! Two-species annihilating–branching particle dynamics.
//!
//! `eta[x] > 0` counts `+` particles at site `x`, `eta[x] < 0` counts `-`
//! particles. Each particle jumps at rate `h(x)^-1` to a neighbour drawn from
//! `p_xy`. A jump onto an opposite-sign site removes the jumper and one
//! opposite particle; simultaneously one uniformly chosen `+` particle and one
//! uniformly chosen `-` particle (chosen from the pre-event state) each
//! duplicate, so both species keep exactly `N` particles.

mod fenwick;
mod rates;
mod sim;

pub use rates::{annihilation_rate, compute_v, generator_apply, total_jump_rate, GENERATOR_EVENT_BUDGET};
pub use sim::{
    apply_event, simulate, simulate_with, step, Branch, EventKind, EventRecord, RunStats, SimOutput, SimParams,
    Simulator,
    Species,
};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::scalar::Scalar;

/// Signed occupation numbers together with per-particle positions.
///
/// Particle ids `0..N` are `+`, ids `N..2N` are `-`. Equality compares the
/// occupation numbers only: particle labels carry no state.
#[derive(Clone, Debug)]
pub struct Configuration {
    n: usize,
    eta: Vec<i32>,
    positions: Vec<u32>,
    occupants: Vec<Vec<u32>>,
    slot: Vec<u32>,
}

impl PartialEq for Configuration {
    fn eq(&self, other: &Self) -> bool {
        self.eta == other.eta
    }
}

impl Eq for Configuration {}

impl Configuration {
    /// Builds a configuration from occupation numbers; particles are laid out
    /// in site order.
    pub fn from_eta(eta: Vec<i32>) -> Result<Self> {
        let plus: i64 = eta.iter().map(|&e| i64::from(e.max(0))).sum();
        let minus: i64 = eta.iter().map(|&e| i64::from((-e).max(0))).sum();
        if plus != minus {
            return Err(Error::Precondition(format!("species counts differ: {plus} plus, {minus} minus")));
        }
        if plus == 0 {
            return Err(Error::Precondition("configuration has no particles".into()));
        }
        let n = plus as usize;
        let mut positions = vec![0u32; 2 * n];
        let (mut ip, mut im) = (0, n);
        for (x, &e) in eta.iter().enumerate() {
            for _ in 0..e.max(0) {
                positions[ip] = x as u32;
                ip += 1;
            }
            for _ in 0..(-e).max(0) {
                positions[im] = x as u32;
                im += 1;
            }
        }
        Ok(Self::from_layout(eta.len(), n, positions))
    }

    /// Builds a configuration from particle positions. Fails if a site would
    /// hold both species or the lists differ in length.
    pub fn from_positions(sites: usize, plus: &[u32], minus: &[u32]) -> Result<Self> {
        if plus.len() != minus.len() || plus.is_empty() {
            return Err(Error::Precondition(format!(
                "need N >= 1 particles of each species, got {} and {}",
                plus.len(),
                minus.len()
            )));
        }
        let mut eta = vec![0i32; sites];
        for &x in plus {
            *eta.get_mut(x as usize).ok_or_else(|| Error::InvalidArgument(format!("site {x} out of range")))? += 1;
        }
        for &x in minus {
            let e = eta.get_mut(x as usize).ok_or_else(|| Error::InvalidArgument(format!("site {x} out of range")))?;
            if *e > 0 {
                return Err(Error::Precondition(format!("site {x} holds both species")));
            }
            *e -= 1;
        }
        let positions = plus.iter().chain(minus).copied().collect();
        Ok(Self::from_layout(sites, plus.len(), positions))
    }

    fn from_layout(sites: usize, n: usize, positions: Vec<u32>) -> Self {
        let mut eta = vec![0i32; sites];
        let mut occupants = vec![Vec::new(); sites];
        let mut slot = vec![0u32; 2 * n];
        for (id, &x) in positions.iter().enumerate() {
            eta[x as usize] += if id < n { 1 } else { -1 };
            slot[id] = occupants[x as usize].len() as u32;
            occupants[x as usize].push(id as u32);
        }
        Configuration { n, eta, positions, occupants, slot }
    }

    /// Particles per species.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn eta(&self) -> &[i32] {
        &self.eta
    }

    pub fn sites(&self) -> usize {
        self.eta.len()
    }

    pub fn plus_positions(&self) -> &[u32] {
        &self.positions[..self.n]
    }

    pub fn minus_positions(&self) -> &[u32] {
        &self.positions[self.n..]
    }

    /// Particle ids currently at site `x`.
    pub fn occupants(&self, x: usize) -> &[u32] {
        &self.occupants[x]
    }

    pub fn plus_total(&self) -> i64 {
        self.eta.iter().map(|&e| i64::from(e.max(0))).sum()
    }

    pub fn minus_total(&self) -> i64 {
        self.eta.iter().map(|&e| i64::from((-e).max(0))).sum()
    }

    /// Full consistency check of occupation numbers against positions.
    pub fn validate(&self) -> Result<()> {
        if self.plus_total() != self.n as i64 || self.minus_total() != self.n as i64 {
            return Err(Error::Precondition(format!(
                "species counts {} / {} differ from N = {}",
                self.plus_total(),
                self.minus_total(),
                self.n
            )));
        }
        let rebuilt = Configuration::from_layout(self.sites(), self.n, self.positions.clone());
        if rebuilt.eta != self.eta {
            return Err(Error::Precondition("occupation numbers disagree with particle positions".into()));
        }
        for (x, occ) in self.occupants.iter().enumerate() {
            for (i, &id) in occ.iter().enumerate() {
                if self.positions[id as usize] as usize != x || self.slot[id as usize] as usize != i {
                    return Err(Error::Precondition(format!("occupant index corrupt at site {x}")));
                }
            }
        }
        Ok(())
    }

    /// Moves particle `id` to site `to`, keeping every index consistent.
    /// Returns the site it left.
    pub(crate) fn relocate(&mut self, id: u32, to: u32) -> u32 {
        let from = self.positions[id as usize];
        let s = self.slot[id as usize] as usize;
        let occ = &mut self.occupants[from as usize];
        occ.swap_remove(s);
        if let Some(&moved) = occ.get(s) {
            self.slot[moved as usize] = s as u32;
        }
        let dest = &mut self.occupants[to as usize];
        self.slot[id as usize] = dest.len() as u32;
        dest.push(id);
        self.positions[id as usize] = to;
        let sign = if (id as usize) < self.n { 1 } else { -1 };
        self.eta[from as usize] -= sign;
        self.eta[to as usize] += sign;
        from
    }

    pub fn density<T: Scalar>(&self, lattice: &Lattice<T>) -> DensityField<T> {
        DensityField::from_configuration(self, lattice)
    }
}

/// `u(x) = N^-1 eps^-d eta_x`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField<T>(Vec<T>);

impl<T: Scalar> DensityField<T> {
    pub fn from_configuration(config: &Configuration, lattice: &Lattice<T>) -> Self {
        let scale = (T::of_usize(config.n()) * lattice.epsilon().powi(lattice.dim() as i32)).recip();
        DensityField(config.eta().iter().map(|&e| T::from_i32(e).unwrap() * scale).collect())
    }

    pub fn new(values: Vec<T>) -> Self {
        DensityField(values)
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn into_values(self) -> Vec<T> {
        self.0
    }

    /// `eps^d sum_x |u(x)|`.
    pub fn total_variation(&self, lattice: &Lattice<T>) -> T {
        lattice.epsilon().powi(lattice.dim() as i32) * self.0.iter().map(|v| v.abs()).sum::<T>()
    }
}

/// Largest-remainder apportionment of `n` units proportionally to `weights`.
/// Ties in the remainder go to the lower index.
fn apportion<T: Scalar>(weights: &[T], n: usize) -> Vec<i64> {
    let total: T = weights.iter().copied().sum();
    let quota: Vec<T> = weights.iter().map(|&w| w / total * T::of_usize(n)).collect();
    let mut counts: Vec<i64> = quota.iter().map(|q| q.floor().to_i64().unwrap()).collect();
    let assigned: i64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > T::zero()).collect();
    order.sort_by(|&a, &b| {
        let ra = quota[a] - quota[a].floor();
        let rb = quota[b] - quota[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take((n as i64 - assigned).max(0) as usize) {
        counts[i] += 1;
    }
    counts
}

/// Places `N` `+` particles proportionally to the positive part of `density`
/// and `N` `-` particles proportionally to its negative part, rounding by
/// largest remainder.
pub fn init_from_density<T: Scalar>(lattice: &Lattice<T>, density: &[T], n: usize) -> Result<Configuration> {
    if density.len() != lattice.len() {
        return Err(Error::InvalidArgument(format!(
            "density has {} values, lattice has {} sites",
            density.len(),
            lattice.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    if density.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("density contains non-finite values".into()));
    }
    let pos: Vec<T> = density.iter().map(|&v| v.max(T::zero())).collect();
    let neg: Vec<T> = density.iter().map(|&v| (-v).max(T::zero())).collect();
    if pos.iter().all(|&v| v == T::zero()) || neg.iter().all(|&v| v == T::zero()) {
        return Err(Error::Precondition("density must have both a positive and a negative part".into()));
    }
    let plus = apportion(&pos, n);
    let minus = apportion(&neg, n);
    let eta = plus.iter().zip(&minus).map(|(&p, &m)| (p - m) as i32).collect();
    Configuration::from_eta(eta)
}
