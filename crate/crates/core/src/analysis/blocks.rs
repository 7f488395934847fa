//! Disjoint block partition at scale `delta` and the segregation statistics
//! on it.

use serde::{Deserialize, Serialize};

use super::ObservableSeries;
use crate::dynamics::Configuration;
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::scalar::Scalar;

/// Default `c0` in the overlap threshold `c0 (delta / 2 eps)^d`.
pub const DEFAULT_C0: f64 = 0.1;

/// Cubes of side `delta` anchored at the lattice's lowest corner. The last
/// cube on each axis absorbs the remainder, so a side that is a multiple of
/// `delta` splits evenly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockPartition {
    delta: f64,
    per_axis: Vec<usize>,
    site_block: Vec<u32>,
    sizes: Vec<u32>,
}

impl BlockPartition {
    pub fn new<T: Scalar>(lattice: &Lattice<T>, delta: f64) -> Result<Self> {
        let eps = lattice.epsilon().as_f64();
        if !(delta > eps) || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!("block side {delta} must exceed epsilon {eps}")));
        }
        let (lo, hi) = lattice.coord_bounds();
        let snap = 1e-9;
        let per_axis: Vec<usize> = lo
            .iter()
            .zip(&hi)
            .map(|(&a, &b)| (((b - a) as f64 * eps / delta - snap).ceil() as usize).max(1))
            .collect();
        let mut site_block = Vec::with_capacity(lattice.len());
        for x in 0..lattice.len() {
            let mut index = 0usize;
            for (axis, (&k, &k0)) in lattice.coords(x).iter().zip(&lo).enumerate() {
                let b = (((k - k0) as f64 * eps / delta + snap).floor() as usize).min(per_axis[axis] - 1);
                index = index * per_axis[axis] + b;
            }
            site_block.push(index as u32);
        }
        let count: usize = per_axis.iter().product();
        let mut sizes = vec![0u32; count];
        for &b in &site_block {
            sizes[b as usize] += 1;
        }
        Ok(BlockPartition { delta, per_axis, site_block, sizes })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Number of blocks, including any that contain no site.
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn per_axis(&self) -> &[usize] {
        &self.per_axis
    }

    pub fn block_of(&self, x: usize) -> usize {
        self.site_block[x] as usize
    }

    pub fn sizes(&self) -> &[u32] {
        &self.sizes
    }

    /// Blocks containing at least one site.
    pub fn occupied(&self) -> usize {
        self.sizes.iter().filter(|&&s| s > 0).count()
    }

    /// Sum of `values` over each block.
    pub fn aggregate<T: Scalar>(&self, values: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.len()];
        for (&b, &v) in self.site_block.iter().zip(values) {
            out[b as usize] = out[b as usize] + v;
        }
        out
    }

    /// Per-block `(sum eta^+, sum eta^-)`.
    pub fn species_counts(&self, eta: &[i32]) -> Vec<(u64, u64)> {
        let mut out = vec![(0u64, 0u64); self.len()];
        for (&b, &e) in self.site_block.iter().zip(eta) {
            let slot = &mut out[b as usize];
            if e > 0 {
                slot.0 += e as u64;
            } else {
                slot.1 += e.unsigned_abs() as u64;
            }
        }
        out
    }
}

/// `Lambda_delta = min(sum eta^+, sum eta^-)` per block.
pub fn overlap_lambda(config: &Configuration, partition: &BlockPartition) -> Vec<u64> {
    partition.species_counts(config.eta()).into_iter().map(|(p, m)| p.min(m)).collect()
}

/// `2 - sum_blocks |Xi(eps^d u)|`, computed as `(2N - sum_b |S_b|) / N` from
/// the integer block sums `S_b`.
pub fn segregation_deficit(config: &Configuration, partition: &BlockPartition) -> f64 {
    let n = config.n() as u64;
    let cancelled: u64 = partition.species_counts(config.eta()).iter().map(|&(p, m)| p.abs_diff(m)).sum();
    (2 * n - cancelled) as f64 / n as f64
}

/// Integer form of `Xi(|u|) - |Xi(u)| = 2 N^-1 eps^-d Lambda_delta`: per block,
/// `sum |eta| - |sum eta| = 2 Lambda`.
fn overlap_identity(eta: &[i32], partition: &BlockPartition, lambda: &[u64]) -> bool {
    let mut abs = vec![0i64; partition.len()];
    let mut signed = vec![0i64; partition.len()];
    for (x, &e) in eta.iter().enumerate() {
        let b = partition.block_of(x);
        abs[b] += i64::from(e.abs());
        signed[b] += i64::from(e);
    }
    abs.iter().zip(&signed).zip(lambda).all(|((&a, &s), &l)| a - s.abs() == 2 * l as i64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegregationRow {
    pub t: f64,
    pub lambda_max: u64,
    pub lambda_total: u64,
    pub lambda_mean: f64,
    /// `2 - sum |Xi(x, delta, eps^d u)|`, in `[0, 2]`.
    pub deficit: f64,
    /// `sum_blocks 2 N^-1 Lambda`; equal to `deficit` exactly.
    pub deficit_from_lambda: f64,
    /// Fraction of occupied blocks with `Lambda >= c0 (delta / 2 eps)^d`.
    pub h_fraction: f64,
    /// The per-block integer identity held at this time.
    pub identity_holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegregationReport {
    pub delta: f64,
    pub c0: f64,
    pub threshold: f64,
    pub rows: Vec<SegregationRow>,
}

impl SegregationReport {
    pub fn identities_hold(&self) -> bool {
        self.rows.iter().all(|r| r.identity_holds && r.deficit == r.deficit_from_lambda)
    }

    /// Largest deficit over rows with `t >= from`.
    pub fn max_deficit_from(&self, from: f64) -> Option<f64> {
        self.rows.iter().filter(|r| r.t >= from).map(|r| r.deficit).reduce(f64::max)
    }
}

pub fn segregation_report<T: Scalar>(
    series: &ObservableSeries,
    lattice: &Lattice<T>,
    delta: f64,
    c0: f64,
) -> Result<SegregationReport> {
    if series.meta().sites != lattice.len() {
        return Err(Error::InvalidArgument("series and lattice have different site counts".into()));
    }
    let partition = BlockPartition::new(lattice, delta)?;
    let eps = lattice.epsilon().as_f64();
    let threshold = c0 * (delta / (2.0 * eps)).powi(lattice.dim() as i32);
    let occupied = partition.occupied() as f64;
    let n = series.meta().n as u64;
    let rows = (0..series.len())
        .map(|i| {
            let eta = series.snapshot(i);
            let counts = partition.species_counts(eta);
            let lambda: Vec<u64> = counts.iter().map(|&(p, m)| p.min(m)).collect();
            let cancelled: u64 = counts.iter().map(|&(p, m)| p.abs_diff(m)).sum();
            let total: u64 = lambda.iter().sum();
            SegregationRow {
                t: series.times()[i],
                lambda_max: lambda.iter().copied().max().unwrap_or(0),
                lambda_total: total,
                lambda_mean: total as f64 / occupied,
                deficit: (2 * n - cancelled) as f64 / n as f64,
                deficit_from_lambda: (2 * total) as f64 / n as f64,
                h_fraction: lambda.iter().zip(partition.sizes()).filter(|(&l, &s)| s > 0 && l as f64 >= threshold).count()
                    as f64
                    / occupied,
                identity_holds: overlap_identity(eta, &partition, &lambda),
            }
        })
        .collect();
    Ok(SegregationReport { delta, c0, threshold, rows })
}
