//! Block-L1 distance between the empirical density and the normalized heat
//! flow of the initial data.

use serde::{Deserialize, Serialize};

use super::{BlockPartition, ObservableSeries};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::scalar::Scalar;
use crate::spectral::{normalize_tv, total_variation, HeatEvolver};

/// `sum_b |a_b - b_b|` over block masses.
pub fn block_l1<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub t: f64,
    /// Block-L1 distance, in `[0, 4]` for two measures of total variation 2.
    pub distance: f64,
    /// `C(t) = 2 / TV(exp(t Delta*) u(0))`.
    pub normalizer: f64,
    pub empirical_tv: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub delta: f64,
    /// How the reference was produced.
    pub reference: String,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    /// The row at the first observation at or after `t`.
    pub fn at(&self, t: f64) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.t >= t - 1e-12 * t.abs().max(1.0))
    }
}

/// For every observation, the distance between the empirical block masses
/// and those of `normalize_tv(exp(t Delta*) u(0))`.
pub fn compare_to_limit<T: Scalar>(
    series: &ObservableSeries,
    lattice: &Lattice<T>,
    evolver: &HeatEvolver<T>,
    delta: f64,
) -> Result<ComparisonReport> {
    if series.is_empty() || series.times()[0] != 0.0 {
        return Err(Error::Precondition("the series must start with the initial density at t = 0".into()));
    }
    if series.meta().sites != lattice.len() {
        return Err(Error::InvalidArgument("series and lattice have different site counts".into()));
    }
    let partition = BlockPartition::new(lattice, delta)?;
    let w = lattice.epsilon().powi(lattice.dim() as i32);
    let u0: Vec<T> = series.density(0);
    let path = evolver.evolve_path(&u0, series.times())?;
    let mut rows = Vec::with_capacity(series.len());
    for (i, heat) in path.iter().enumerate() {
        let tv = total_variation(lattice, heat);
        let reference = normalize_tv(lattice, heat);
        let empirical: Vec<T> = series.density(i);
        let mass = |u: &[T]| partition.aggregate(&u.iter().map(|&v| v * w).collect::<Vec<T>>());
        rows.push(ComparisonRow {
            t: series.times()[i],
            distance: block_l1(&mass(&empirical), &mass(&reference)).as_f64(),
            normalizer: if tv > T::zero() { (T::lit(2.0) / tv).as_f64() } else { f64::INFINITY },
            empirical_tv: total_variation(lattice, &empirical).as_f64(),
        });
    }
    Ok(ComparisonReport { delta, reference: "normalize_tv(exp(t adjoint_laplacian) u(0))".into(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::SeriesMeta;
    use crate::domain::DomainSpec;
    use crate::lattice::{build_lattice, TimeScale};
    use proptest::prelude::*;

    #[test]
    fn disjoint_unit_masses_are_two_apart() {
        assert_eq!(block_l1(&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]), 2.0);
        assert_eq!(block_l1(&[0.5, -0.5], &[0.5, -0.5]), 0.0);
    }

    proptest! {
        #[test]
        fn block_l1_is_a_metric(a in prop::collection::vec(-1.0..1.0f64, 6),
                                b in prop::collection::vec(-1.0..1.0f64, 6),
                                c in prop::collection::vec(-1.0..1.0f64, 6)) {
            prop_assert_eq!(block_l1(&a, &b), block_l1(&b, &a));
            prop_assert_eq!(block_l1(&a, &a), 0.0);
            prop_assert!(block_l1(&a, &c) <= block_l1(&a, &b) + block_l1(&b, &c) + 1e-12);
        }
    }

    #[test]
    fn initial_row_measures_only_rounding() {
        let d = DomainSpec::<f64>::rectangle(&[1.0, 1.0]).unwrap();
        let l = build_lattice(&d, 0.125, TimeScale::Laplacian).unwrap();
        let ev = HeatEvolver::new(&l);
        let mut eta = vec![0; l.len()];
        for x in 0..l.len() {
            let k = l.coords(x)[0];
            eta[x] = if k < 4 { 1 } else if k > 4 { -1 } else { 0 };
        }
        let n = eta.iter().filter(|&&e| e > 0).count();
        let mut s = ObservableSeries::new(SeriesMeta { n, epsilon: 0.125, dim: 2, sites: l.len(), seed: 0 }, vec![]);
        s.push(0.0, eta.clone(), vec![], 0.0, 0);
        s.push(0.1, eta, vec![], 0.0, 0);
        let r = compare_to_limit(&s, &l, &ev, 0.25).unwrap();
        assert!(r.rows[0].distance < 1e-12);
        assert!((r.rows[0].empirical_tv - 2.0).abs() < 1e-12);
        // a frozen configuration drifts away from the heat flow
        assert!(r.rows[1].distance > 0.01);
        assert!(r.rows[1].normalizer >= 1.0);
    }
}
