//! Forward heat flow `exp(t Delta*)` by uniformization, and the
//! total-variation normalization.

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::operator::{adjoint_laplacian, discrete_laplacian, LinearOperator};
use crate::scalar::Scalar;

/// Default cap on the number of kernel applications in one evolution.
pub const HEAT_TERM_BUDGET: u64 = 5_000_000;

/// `exp(t Delta*) rho = sum_k Pois(Lambda t; k) P^k rho` with
/// `P = I + Delta* / Lambda`, whose entries are nonnegative.
#[derive(Clone, Debug)]
pub struct HeatEvolver<T: Scalar> {
    forward: LinearOperator<T>,
    backward: LinearOperator<T>,
    rate: T,
    tail: f64,
    budget: u64,
    weight: T,
}

/// Poisson weights `w[k - first]` for `k in first..first + w.len()`, summing
/// to one, with neglected mass at most the requested tail.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct PoissonWeights {
    pub first: usize,
    pub weights: Vec<f64>,
    pub neglected: f64,
}

impl<T: Scalar> HeatEvolver<T> {
    pub fn new(lattice: &Lattice<T>) -> Self {
        let backward = discrete_laplacian(lattice);
        let forward = adjoint_laplacian(lattice);
        // The largest diagonal magnitude; equals max h^-1 up to the rounding
        // of sum_y p_xy.
        let rate = (0..backward.dim())
            .map(|i| backward.get(i, i).abs())
            .fold(T::zero(), T::max)
            .max(T::tiny());
        HeatEvolver {
            forward,
            backward,
            rate,
            tail: 1e-12,
            budget: HEAT_TERM_BUDGET,
            weight: lattice.epsilon().powi(lattice.dim() as i32),
        }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_tail(mut self, tail: f64) -> Self {
        self.tail = tail;
        self
    }

    /// Uniformization rate `Lambda`.
    pub fn rate(&self) -> T {
        self.rate
    }

    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn forward_operator(&self) -> &LinearOperator<T> {
        &self.forward
    }

    /// `eps^d`, the site weight in lattice integrals.
    pub fn site_weight(&self) -> T {
        self.weight
    }

    /// `exp(t Delta*) rho`.
    pub fn evolve(&self, rho: &[T], t: f64) -> Result<Vec<T>> {
        self.run(&self.forward, rho, t)
    }

    /// `exp(t Delta) f`, the dual evolution of test functions.
    pub fn evolve_backward(&self, f: &[T], t: f64) -> Result<Vec<T>> {
        self.run(&self.backward, f, t)
    }

    /// Forward evolution to each of the sorted `times`, stepping from one
    /// time to the next through the semigroup property.
    pub fn evolve_path(&self, rho: &[T], times: &[f64]) -> Result<Vec<Vec<T>>> {
        let mut out = Vec::with_capacity(times.len());
        let mut now = 0.0;
        let mut current = rho.to_vec();
        for &t in times {
            if !(t >= now) {
                return Err(Error::InvalidArgument(format!("times must be sorted and nonnegative, got {t} after {now}")));
            }
            current = self.evolve(&current, t - now)?;
            now = t;
            out.push(current.clone());
        }
        Ok(out)
    }

    fn run(&self, op: &LinearOperator<T>, rho: &[T], t: f64) -> Result<Vec<T>> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidArgument(format!("evolution time must be finite and nonnegative, got {t}")));
        }
        if rho.len() != op.dim() {
            return Err(Error::InvalidArgument(format!("density has {} entries, lattice has {}", rho.len(), op.dim())));
        }
        if t == 0.0 {
            return Ok(rho.to_vec());
        }
        let m = self.rate.as_f64() * t;
        let rough = m + 12.0 * m.sqrt() + 40.0;
        if rough > self.budget as f64 {
            return Err(Error::Budget { what: "heat evolution terms", needed: rough as u64, budget: self.budget });
        }
        let pw = poisson_weights(m, self.tail)?;
        let last = pw.first + pw.weights.len() - 1;
        if last as u64 > self.budget {
            return Err(Error::Budget { what: "heat evolution terms", needed: last as u64, budget: self.budget });
        }
        let inv_rate = self.rate.recip();
        let mut term = rho.to_vec();
        let mut scratch = vec![T::zero(); rho.len()];
        let mut acc = vec![T::zero(); rho.len()];
        for k in 0..=last {
            if k >= pw.first {
                let w = T::lit(pw.weights[k - pw.first]);
                for (a, &v) in acc.iter_mut().zip(&term) {
                    *a = *a + w * v;
                }
            }
            if k < last {
                op.apply_into(&term, &mut scratch);
                for (v, &s) in term.iter_mut().zip(&scratch) {
                    *v = *v + s * inv_rate;
                }
            }
        }
        Ok(acc)
    }
}

/// `ln k!` by exact summation; used for small `k` and in tests.
fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// `ln P(Pois(m) = k)`. For large `k` the Stirling form is arranged so that
/// no large terms cancel: `(k - m) + k ln(m / k) - ln(2 pi k) / 2 - s(k)`.
fn ln_poisson_pmf(k: usize, m: f64) -> f64 {
    if k < 32 {
        return -m + k as f64 * m.ln() - ln_factorial(k);
    }
    let kf = k as f64;
    let series = 1.0 / (12.0 * kf) - 1.0 / (360.0 * kf.powi(3)) + 1.0 / (1260.0 * kf.powi(5));
    (kf - m) + kf * ((m - kf) / kf).ln_1p() - 0.5 * (2.0 * std::f64::consts::PI * kf).ln() - series
}

/// Poisson(`m`) weights around the mode, widened until the mass outside the
/// window is at most `tail`, then renormalised to sum to one.
pub(crate) fn poisson_weights(m: f64, tail: f64) -> Result<PoissonWeights> {
    if !(m >= 0.0) || !m.is_finite() {
        return Err(Error::InvalidArgument(format!("Poisson mean must be finite and nonnegative, got {m}")));
    }
    if m == 0.0 {
        return Ok(PoissonWeights { first: 0, weights: vec![1.0], neglected: 0.0 });
    }
    let mode = m.floor() as usize;
    let ln_mode = ln_poisson_pmf(mode, m);
    // Relative weights w_k / w_mode by the ratio recurrences.
    let stop = tail * 1e-4;
    let mut right = vec![1.0];
    let mut k = mode;
    loop {
        let next = right[right.len() - 1] * m / (k + 1) as f64;
        k += 1;
        right.push(next);
        if next * ln_mode.exp() < stop && (k as f64) > m {
            break;
        }
    }
    let mut left = Vec::new();
    let mut w = 1.0;
    let mut k = mode;
    while k > 0 {
        w *= k as f64 / m;
        k -= 1;
        left.push(w);
        if w * ln_mode.exp() < stop {
            break;
        }
    }
    let first = mode - left.len();
    let mut weights: Vec<f64> = left.into_iter().rev().chain(right).collect();
    let rel_sum: f64 = weights.iter().sum();
    let neglected = (1.0 - rel_sum * ln_mode.exp()).max(0.0);
    if neglected > tail {
        return Err(Error::Precondition(format!(
            "Poisson window for mean {m} leaves mass {neglected:e} above tail {tail:e}"
        )));
    }
    weights.iter_mut().for_each(|w| *w /= rel_sum);
    Ok(PoissonWeights { first, weights, neglected })
}

/// `eps^d sum_x |rho(x)|`.
pub fn total_variation<T: Scalar>(lattice: &Lattice<T>, rho: &[T]) -> T {
    lattice.epsilon().powi(lattice.dim() as i32) * rho.iter().map(|v| v.abs()).sum::<T>()
}

/// `c rho` with `eps^d sum |c rho| = 2`; zero stays zero.
pub fn normalize_tv<T: Scalar>(lattice: &Lattice<T>, rho: &[T]) -> Vec<T> {
    let tv = total_variation(lattice, rho);
    if tv == T::zero() {
        return rho.to_vec();
    }
    let c = T::lit(2.0) / tv;
    rho.iter().map(|&v| c * v).collect()
}

/// `C(t) = 2 / (eps^d sum |exp(t Delta*) rho0|)` at each sorted time.
pub fn normalizer_c<T: Scalar>(evolver: &HeatEvolver<T>, rho0: &[T], times: &[f64]) -> Result<Vec<T>> {
    let w = evolver.site_weight();
    let tv0 = w * rho0.iter().map(|v| v.abs()).sum::<T>();
    if (tv0 - T::lit(2.0)).abs() > T::lit(1e-6) * T::lit(2.0) {
        return Err(Error::Precondition(format!("initial density has total variation {tv0}, expected 2")));
    }
    let path = evolver.evolve_path(rho0, times)?;
    path.iter()
        .zip(times)
        .map(|(rho, &t)| {
            let tv = w * rho.iter().map(|v| v.abs()).sum::<T>();
            if !(tv > T::lit(1e3) * T::min_positive_value()) {
                return Err(Error::Precondition(format!("evolved total variation underflows at t = {t}")));
            }
            Ok(T::lit(2.0) / tv)
        })
        .collect()
}
