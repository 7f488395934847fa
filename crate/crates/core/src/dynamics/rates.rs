//! Event rates of a frozen configuration, and the generator evaluated by
//! exhaustive enumeration of every possible event.

use super::Configuration;
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::scalar::Scalar;

/// Default cap on the number of enumerated events in [`generator_apply`].
pub const GENERATOR_EVENT_BUDGET: u64 = 1_000_000;

/// `sum_x |eta_x| h(x)^-1`.
pub fn total_jump_rate<T: Scalar>(config: &Configuration, lattice: &Lattice<T>) -> T {
    config
        .eta()
        .iter()
        .enumerate()
        .filter(|(_, &e)| e != 0)
        .map(|(x, &e)| T::from_i32(e.abs()).unwrap() / lattice.holding_time(x))
        .sum()
}

/// Total rate of jumps onto opposite-sign sites,
/// `sum_{x,y} h(x)^-1 p_xy (eta_x^+ 1{eta_y < 0} + eta_x^- 1{eta_y > 0})`.
pub fn annihilation_rate<T: Scalar>(config: &Configuration, lattice: &Lattice<T>) -> T {
    let eta = config.eta();
    let mut total = T::zero();
    for (x, &ex) in eta.iter().enumerate() {
        if ex == 0 {
            continue;
        }
        let mut opposite = T::zero();
        for (&y, &p) in lattice.neighbors(x).iter().zip(lattice.jump_probs(x)) {
            if (ex > 0 && eta[y as usize] < 0) || (ex < 0 && eta[y as usize] > 0) {
                opposite = opposite + p;
            }
        }
        total = total + T::from_i32(ex.abs()).unwrap() * opposite / lattice.holding_time(x);
    }
    total
}

/// Normalized jump intensity `V = 2 N^-1 annihilation_rate`.
pub fn compute_v<T: Scalar>(config: &Configuration, lattice: &Lattice<T>) -> T {
    T::lit(2.0) * annihilation_rate(config, lattice) / T::of_usize(config.n())
}

/// Exact `L f(eta)` for the annihilating–branching dynamics, summing rate
/// times increment over every move, every annihilating jump and every branch
/// pair `(u, v)`. Fails with a budget error when more than `budget` events
/// would be enumerated.
pub fn generator_apply<T, F>(f: F, config: &Configuration, lattice: &Lattice<T>, budget: u64) -> Result<T>
where
    T: Scalar,
    F: Fn(&[i32]) -> T,
{
    let eta = config.eta();
    let n = config.n();
    let plus_sites: Vec<usize> = (0..eta.len()).filter(|&u| eta[u] > 0).collect();
    let minus_sites: Vec<usize> = (0..eta.len()).filter(|&v| eta[v] < 0).collect();

    let mut needed: u64 = 0;
    for (x, &ex) in eta.iter().enumerate() {
        if ex == 0 {
            continue;
        }
        for &y in lattice.neighbors(x) {
            let ey = eta[y as usize];
            needed += if ex.signum() * ey < 0 { (plus_sites.len() * minus_sites.len()) as u64 } else { 1 };
        }
    }
    if needed > budget {
        return Err(Error::Budget { what: "generator enumeration", needed, budget });
    }

    let f0 = f(eta);
    let mut scratch = eta.to_vec();
    let mut total = T::zero();
    let n2 = T::of_usize(n * n);
    for (x, &ex) in eta.iter().enumerate() {
        if ex == 0 {
            continue;
        }
        let s = ex.signum();
        let count = T::from_i32(ex.abs()).unwrap();
        let rate = lattice.holding_time(x).recip();
        for (&y, &p) in lattice.neighbors(x).iter().zip(lattice.jump_probs(x)) {
            let y = y as usize;
            let r = rate * p * count;
            // The jumper leaves x and, whether it moves or annihilates, the
            // net change at y is one unit of its sign.
            scratch[x] -= s;
            scratch[y] += s;
            if s * eta[y] < 0 {
                let mut acc = T::zero();
                for &u in &plus_sites {
                    for &v in &minus_sites {
                        let w = T::from_i32(eta[u] * -eta[v]).unwrap();
                        scratch[u] += 1;
                        scratch[v] -= 1;
                        acc = acc + w * (f(&scratch) - f0);
                        scratch[u] -= 1;
                        scratch[v] += 1;
                    }
                }
                total = total + r * acc / n2;
            } else {
                total = total + r * (f(&scratch) - f0);
            }
            scratch[x] += s;
            scratch[y] -= s;
        }
    }
    Ok(total)
}
