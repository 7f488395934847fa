//! Replica-level statistics: realized quadratic variation of the Fourier
//! martingales and the `N` scaling of the coefficient variance.

use serde::{Deserialize, Serialize};

use super::{Growth, ObservableSeries};
use crate::error::{Error, Result};

/// Replicas of one particle count.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicaSet {
    pub n: usize,
    pub series: Vec<ObservableSeries>,
}

/// Cumulative `sum m_i^2` over the sampling grid, where
/// `m_i = u_i - u_{i-1} exp(g dI_i - lambda dt_i)` is the increment left after
/// the exact solution of the drift `(g V - lambda) u` over the interval.
///
/// `dI_i` is taken from the annihilation count, `2 (K_i - K_{i-1}) / N`,
/// whose compensator is `int V` over the interval. A left-point Euler step
/// with sampled `V` leaves an `O(dt^2)` error per interval that does not
/// shrink with `N`, and `V` jumps from near zero within `O(eps^2)` of a
/// segregated start, so both would swamp the `1/N` martingale term.
pub fn realized_qv(series: &ObservableSeries, mode: usize, lambda: f64, growth: Growth) -> Result<Vec<f64>> {
    let u = series
        .coefficient(mode)
        .ok_or_else(|| Error::InvalidArgument(format!("mode {mode} was not tracked")))?;
    let t = series.times();
    let k = series.k();
    let n = series.meta().n as f64;
    let g = growth.coefficient();
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(u.len());
    for i in 0..u.len() {
        if i > 0 {
            let di = 2.0 * (k[i] - k[i - 1]) as f64 / n;
            let m = u[i] - u[i - 1] * (g * di - lambda * (t[i] - t[i - 1])).exp();
            acc += m * m;
        }
        out.push(acc);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QvRow {
    pub n: usize,
    pub replicas: usize,
    /// Mean realized quadratic variation at the final observation.
    pub mean_qv: f64,
    /// Mean of `N^-1 int V`, with `int V = 2K/N`.
    pub mean_scaled_v: f64,
    /// `mean_qv / mean_scaled_v`; the fitted `beta` when this is the
    /// smallest `N`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QvReport {
    pub mode: usize,
    pub growth: Growth,
    pub beta_hat: f64,
    /// Slack allowed on `beta_hat` at larger `N`.
    pub factor: f64,
    pub rows: Vec<QvRow>,
    pub bound_holds: bool,
}

/// Fits `beta` in `[M_n](t) <= beta N^-1 int_0^t V` at the smallest `N` and
/// checks the bound, with slack `1.5`, at the larger ones.
pub fn qv_scaling(sets: &[ReplicaSet], mode: usize, lambda: f64, growth: Growth) -> Result<QvReport> {
    if sets.len() < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 particle counts, got {}", sets.len())));
    }
    if let Some(s) = sets.iter().find(|s| s.series.len() < 8) {
        return Err(Error::InsufficientData(format!("N = {} has {} replicas, need 8", s.n, s.series.len())));
    }
    let mut sorted: Vec<&ReplicaSet> = sets.iter().collect();
    sorted.sort_by_key(|s| s.n);
    let mut rows = Vec::with_capacity(sorted.len());
    for set in sorted {
        let n = set.n as f64;
        let mut qv = 0.0;
        let mut scaled = 0.0;
        for s in &set.series {
            qv += *realized_qv(s, mode, lambda, growth)?.last().unwrap_or(&0.0);
            scaled += 2.0 * *s.k().last().unwrap_or(&0) as f64 / (n * n);
        }
        let r = set.series.len() as f64;
        let (mean_qv, mean_scaled_v) = (qv / r, scaled / r);
        let ratio = if mean_scaled_v > 0.0 { mean_qv / mean_scaled_v } else { 0.0 };
        rows.push(QvRow { n: set.n, replicas: set.series.len(), mean_qv, mean_scaled_v, ratio });
    }
    let beta_hat = rows[0].ratio;
    let factor = 1.5;
    let bound_holds = rows[1..].iter().all(|r| r.mean_qv <= factor * beta_hat * r.mean_scaled_v || r.mean_qv == 0.0);
    Ok(QvReport { mode, growth, beta_hat, factor, rows, bound_holds })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseScaling {
    /// Fitted slope of `log Var` against `log N`.
    pub slope: f64,
    /// 95% half-width of the slope.
    pub half_width: f64,
    pub intercept: f64,
    /// `(N, replicas, sample variance)` per particle count.
    pub points: Vec<(usize, usize, f64)>,
}

/// Weighted least-squares slope of `log Var[samples]` against `log N`.
///
/// For `R` roughly normal samples `Var[log s^2] ~ 2 / (R - 1)`, so each point
/// is weighted by `(R - 1) / 2` and the slope's standard error follows from
/// those known weights.
pub fn noise_scaling(samples: &[(usize, Vec<f64>)]) -> Result<NoiseScaling> {
    if samples.len() < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 particle counts, got {}", samples.len())));
    }
    if let Some((n, s)) = samples.iter().find(|(_, s)| s.len() < 16) {
        return Err(Error::InsufficientData(format!("N = {n} has {} replicas, need 16", s.len())));
    }
    let mut points = Vec::with_capacity(samples.len());
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    let mut xs = Vec::new();
    for (n, s) in samples {
        let r = s.len() as f64;
        let mean = s.iter().sum::<f64>() / r;
        let var = s.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (r - 1.0);
        if !(var > 0.0) {
            return Err(Error::InsufficientData(format!("zero sample variance at N = {n}")));
        }
        let w = (r - 1.0) / 2.0;
        let (x, y) = ((*n as f64).ln(), var.ln());
        sw += w;
        sx += w * x;
        sy += w * y;
        xs.push((w, x, y));
        points.push((*n, s.len(), var));
    }
    let (xbar, ybar) = (sx / sw, sy / sw);
    let sxx: f64 = xs.iter().map(|(w, x, _)| w * (x - xbar) * (x - xbar)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InsufficientData("particle counts must differ".into()));
    }
    let sxy: f64 = xs.iter().map(|(w, x, y)| w * (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    Ok(NoiseScaling { slope, half_width: 1.96 / sxx.sqrt(), intercept: ybar - slope * xbar, points })
}
