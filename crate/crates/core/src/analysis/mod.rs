//! Diagnostics computed from simulation output: Fourier coefficients, the
//! exponential drift of the coefficients, quadratic variation, segregation
//! statistics on a block partition, and the distance to the normalized heat
//! flow.

mod blocks;
mod compare;
mod scaling;

use serde::{Deserialize, Serialize};

pub use blocks::{
    overlap_lambda, segregation_deficit, segregation_report, BlockPartition, SegregationReport, SegregationRow,
    DEFAULT_C0,
};
pub use compare::{block_l1, compare_to_limit, ComparisonReport, ComparisonRow};
pub use scaling::{noise_scaling, qv_scaling, realized_qv, NoiseScaling, QvReport, QvRow, ReplicaSet};

use crate::dynamics::Configuration;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral::SpectralBasis;

/// Run identification carried with every series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub n: usize,
    pub epsilon: f64,
    pub dim: usize,
    pub sites: usize,
    pub seed: u64,
}

/// Observations of one run at strictly increasing times: the configuration,
/// `u_n = N^-1 sum_x eta_x phi_n(x)` for every tracked mode, the intensity
/// `V` and the cumulative annihilation count `K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    meta: SeriesMeta,
    modes: Vec<usize>,
    times: Vec<f64>,
    snapshots: Vec<Vec<i32>>,
    /// `coeffs[i][j]`: mode `modes[j]` at time `times[i]`.
    coeffs: Vec<Vec<f64>>,
    v: Vec<f64>,
    k: Vec<u64>,
}

impl ObservableSeries {
    pub fn new(meta: SeriesMeta, modes: Vec<usize>) -> Self {
        ObservableSeries { meta, modes, times: vec![], snapshots: vec![], coeffs: vec![], v: vec![], k: vec![] }
    }

    /// Appends one observation. Panics if `t` does not increase, `k`
    /// decreases or the record does not match the series' shape; the
    /// simulator is the only producer and these are its invariants.
    pub fn push(&mut self, t: f64, eta: Vec<i32>, coeffs: Vec<f64>, v: f64, k: u64) {
        assert!(self.times.last().is_none_or(|&last| t > last), "observation times must increase");
        assert!(self.k.last().is_none_or(|&last| k >= last), "annihilation count must not decrease");
        assert_eq!(eta.len(), self.meta.sites);
        assert_eq!(coeffs.len(), self.modes.len());
        self.times.push(t);
        self.snapshots.push(eta);
        self.coeffs.push(coeffs);
        self.v.push(v);
        self.k.push(k);
    }

    /// Checks the invariants of a series read from disk.
    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if [self.snapshots.len(), self.coeffs.len(), self.v.len(), self.k.len()].iter().any(|&l| l != n) {
            return Err(Error::InvalidArgument("series columns have different lengths".into()));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("series times are not strictly increasing".into()));
        }
        if self.k.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("annihilation count decreases".into()));
        }
        if self.snapshots.iter().any(|s| s.len() != self.meta.sites) || self.coeffs.iter().any(|c| c.len() != self.modes.len()) {
            return Err(Error::InvalidArgument("series record has the wrong shape".into()));
        }
        Ok(())
    }

    pub fn meta(&self) -> &SeriesMeta {
        &self.meta
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn snapshot(&self, i: usize) -> &[i32] {
        &self.snapshots[i]
    }

    pub fn configuration(&self, i: usize) -> Result<Configuration> {
        Configuration::from_eta(self.snapshots[i].clone())
    }

    /// `eta / (N eps^d)` at observation `i`.
    pub fn density<T: Scalar>(&self, i: usize) -> Vec<T> {
        let scale = 1.0 / (self.meta.n as f64 * self.meta.epsilon.powi(self.meta.dim as i32));
        self.snapshots[i].iter().map(|&e| T::lit(f64::from(e) * scale)).collect()
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn k(&self) -> &[u64] {
        &self.k
    }

    /// The recorded coefficient of `mode` over time.
    pub fn coefficient(&self, mode: usize) -> Option<Vec<f64>> {
        let j = self.modes.iter().position(|&m| m == mode)?;
        Some(self.coeffs.iter().map(|c| c[j]).collect())
    }

    /// Index of the first observation at or after `t`.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| s >= t - 1e-12 * t.abs().max(1.0))
    }
}

/// `eps^d sum_x u(x) phi_n(x)`.
pub fn fourier_coeff<T: Scalar>(density: &[T], basis: &SpectralBasis<T>, n: usize) -> T {
    basis.inner(density, basis.phi(n))
}

/// Two estimates of `int_0^t V ds` at every observation time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratedV {
    pub times: Vec<f64>,
    /// Trapezoid rule over the sampled `V`.
    pub trapezoid: Vec<f64>,
    /// `2 K(t) / N`: the annihilation count, whose compensator is
    /// `(N/2) int V`. The default estimator, exact in expectation.
    pub compensator: Vec<f64>,
}

impl IntegratedV {
    /// Relative disagreement `|a - b| / max(|a|, |b|)` at observation `i`,
    /// zero when both vanish.
    pub fn disagreement(&self, i: usize) -> f64 {
        let (a, b) = (self.trapezoid[i], self.compensator[i]);
        let m = a.abs().max(b.abs());
        if m == 0.0 {
            0.0
        } else {
            (a - b).abs() / m
        }
    }
}

pub fn integrated_v(series: &ObservableSeries) -> IntegratedV {
    let times = series.times().to_vec();
    let v = series.v();
    let mut trapezoid = Vec::with_capacity(times.len());
    // The series may start after 0; V is taken constant before the first
    // observation.
    let mut acc = times.first().map_or(0.0, |&t0| t0 * v[0]);
    for i in 0..times.len() {
        if i > 0 {
            acc += 0.5 * (v[i] + v[i - 1]) * (times[i] - times[i - 1]);
        }
        trapezoid.push(acc);
    }
    let n = series.meta().n as f64;
    let compensator = series.k().iter().map(|&k| 2.0 * k as f64 / n).collect();
    IntegratedV { times, trapezoid, compensator }
}

/// Trapezoid average of the sampled `values` over `[from, to]`, with linear
/// interpolation at the ends. `None` when the interval is empty or not
/// covered by the samples.
pub fn time_average(times: &[f64], values: &[f64], from: f64, to: f64) -> Option<f64> {
    if !(to > from) || times.len() != values.len() || times.len() < 2 {
        return None;
    }
    if from < times[0] || to > times[times.len() - 1] {
        return None;
    }
    let at = |t: f64| {
        let i = times.partition_point(|&s| s < t).clamp(1, times.len() - 1);
        let (t0, t1) = (times[i - 1], times[i]);
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
        values[i - 1] + w * (values[i] - values[i - 1])
    };
    let mut knots = vec![(from, at(from))];
    knots.extend(times.iter().zip(values).filter(|(&t, _)| t > from && t < to).map(|(&t, &v)| (t, v)));
    knots.push((to, at(to)));
    let area: f64 = knots.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum();
    Some(area / (to - from))
}

/// Coefficient multiplying `V` in the drift of the Fourier coefficients.
///
/// `Intensity` is the identity `L eta_z = Delta* eta_z + V eta_z` as stated;
/// `HalfIntensity` is `Delta* eta_z + V eta_z / 2`, which is what exhaustive
/// enumeration of the generator gives for `V = 2 N^-1 (annihilation rate)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    #[default]
    Intensity,
    HalfIntensity,
}

impl Growth {
    pub fn coefficient(self) -> f64 {
        match self {
            Growth::Intensity => 1.0,
            Growth::HalfIntensity => 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftResidual {
    pub mode: usize,
    pub growth: Growth,
    pub times: Vec<f64>,
    /// `u_n(t) - u_n(0) exp(int_0^t (g V - lambda_n) dr)`.
    pub residual: Vec<f64>,
    pub max_abs: f64,
    /// Largest relative disagreement between the two `int V` estimators; the
    /// residual is ambiguous when this exceeds 10%.
    pub estimator_disagreement: f64,
}

/// Residual of the exponential drift of mode `n`, using `2K/N` for `int V`.
pub fn drift_residual<T: Scalar>(
    series: &ObservableSeries,
    basis: &SpectralBasis<T>,
    n: usize,
    growth: Growth,
) -> Result<DriftResidual> {
    if n >= basis.len() {
        return Err(Error::InvalidArgument(format!("mode {n} not in the basis")));
    }
    let iv = integrated_v(series);
    let disagreement = (0..iv.times.len())
        .filter(|&i| iv.trapezoid[i].max(iv.compensator[i]) > 0.05)
        .map(|i| iv.disagreement(i))
        .fold(0.0, f64::max);
    if disagreement > 0.1 {
        log::warn!("int V estimators disagree by {:.1}%; the drift residual is ambiguous", 100.0 * disagreement);
    }
    let mut r = drift_residual_with(series, basis.eigenvalue(n).as_f64(), n, &iv.compensator, growth)?;
    r.estimator_disagreement = disagreement;
    Ok(r)
}

/// As [`drift_residual`] with an explicit `int_0^t V` per observation.
pub fn drift_residual_with(
    series: &ObservableSeries,
    lambda: f64,
    mode: usize,
    integral_v: &[f64],
    growth: Growth,
) -> Result<DriftResidual> {
    let u = series
        .coefficient(mode)
        .ok_or_else(|| Error::InvalidArgument(format!("mode {mode} was not tracked")))?;
    if integral_v.len() != u.len() {
        return Err(Error::InvalidArgument("one int V value per observation is required".into()));
    }
    if u.is_empty() {
        return Err(Error::InvalidArgument("empty series".into()));
    }
    let g = growth.coefficient();
    let t0 = series.times()[0];
    let residual: Vec<f64> = series
        .times()
        .iter()
        .zip(&u)
        .zip(integral_v)
        .map(|((&t, &ut), &iv)| ut - u[0] * (g * (iv - integral_v[0]) - lambda * (t - t0)).exp())
        .collect();
    let max_abs = residual.iter().fold(0.0, |m: f64, r| m.max(r.abs()));
    Ok(DriftResidual {
        mode,
        growth,
        times: series.times().to_vec(),
        residual,
        max_abs,
        estimator_disagreement: 0.0,
    })
}

/// `int_0^t V` for a deterministic path `C(t) P_t u0` to obey the drift
/// law: `log C(t) - log C(t_0)` at each observation time. Used to push
/// noise-free evolutions through the drift pipeline.
pub fn integral_v_from_normalizer(times: &[f64], c: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0];
    let mut acc = 0.0;
    for i in 1..times.len() {
        acc += (c[i] / c[i - 1]).ln();
        out.push(acc);
    }
    out
}
