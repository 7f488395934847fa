//! Structural invariants checked over randomly drawn domains, densities and
//! seeds.

use abwalk_core::analysis::{segregation_report, ObservableSeries, SeriesMeta};
use abwalk_core::dynamics::{init_from_density, simulate, SimParams};
use abwalk_core::spectral::{total_variation, HeatEvolver};
use abwalk_core::{adjoint_laplacian, build_lattice, DomainSpec64, Lattice64, TimeScale};
use proptest::prelude::*;

fn domain() -> impl Strategy<Value = DomainSpec64> {
    prop_oneof![
        (0.6f64..1.6, 0.6f64..1.6).prop_map(|(a, b)| DomainSpec64::rectangle(&[a, b]).unwrap()),
        (0.6f64..1.2).prop_map(|r| DomainSpec64::disc(&[0.1, -0.2], r).unwrap()),
        (0.6f64..1.2, 0.4f64..1.0).prop_map(|(a, b)| DomainSpec64::ellipse(&[0.0, 0.0], &[a, b]).unwrap()),
    ]
}

fn lattice() -> impl Strategy<Value = Lattice64> {
    (domain(), prop::sample::select(vec![1.0 / 6.0, 1.0 / 8.0, 1.0 / 10.0]), any::<bool>()).prop_map(
        |(d, eps, lap)| {
            let scale = if lap { TimeScale::Laplacian } else { TimeScale::QuadraticVariation };
            build_lattice(&d, eps, scale).unwrap()
        },
    )
}

/// A smooth nonconstant density with its mean removed, so both signs occur.
fn density(l: &Lattice64, phase: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..l.len())
        .map(|x| {
            let p = l.position(x);
            (3.0 * p[0] + phase).sin() + 0.5 * (2.0 * p[1] - phase).cos()
        })
        .collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    raw.into_iter().map(|v| v - mean).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn boundary_rows_are_stochastic_and_tangentially_driftless(l in lattice()) {
        let r = l.constraint_report();
        prop_assert!(r.max_row_sum_error <= 1e-12);
        prop_assert!(r.max_tangential_drift <= 1e-10 * l.epsilon());
        prop_assert!(r.min_c1 > 0.0);
        prop_assert!(r.min_probability >= 0.0);
        prop_assert!(r.worst_site.is_none());
    }

    #[test]
    fn apportioning_places_exactly_n_of_each_sign(l in lattice(), phase in 0.0f64..6.0, n in 1usize..400) {
        let rho = density(&l, phase);
        let c = init_from_density(&l, &rho, n).unwrap();
        prop_assert_eq!(c.plus_total(), n as i64);
        prop_assert_eq!(c.minus_total(), n as i64);
        for (e, r) in c.eta().iter().zip(&rho) {
            prop_assert!(*e == 0 || (f64::from(*e) * r) > 0.0);
        }
    }

    #[test]
    fn simulation_conserves_both_species(l in lattice(), phase in 0.0f64..6.0, seed in any::<u64>()) {
        let c0 = init_from_density(&l, &density(&l, phase), 40).unwrap();
        let params = SimParams::new(0.02, seed, vec![0.005, 0.01, 0.015]);
        let out = simulate(c0, &l, &params, &[]).unwrap();
        prop_assert_eq!(out.stats.conservation_violations, 0);
        prop_assert_eq!(out.config.plus_total(), 40);
        prop_assert_eq!(out.config.minus_total(), 40);
        for i in 0..out.series.len() {
            prop_assert!((total_variation(&l, &out.series.density::<f64>(i)) - 2.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn block_overlap_identity_is_exact(l in lattice(), phase in 0.0f64..6.0, seed in any::<u64>(), delta in 0.25f64..0.6) {
        let c0 = init_from_density(&l, &density(&l, phase), 60).unwrap();
        let params = SimParams::new(0.01, seed, vec![0.005]);
        let out = simulate(c0, &l, &params, &[]).unwrap();
        let report = segregation_report(&out.series, &l, delta, 0.1).unwrap();
        prop_assert!(report.identities_hold());
        for row in &report.rows {
            prop_assert!((0.0..=2.0).contains(&row.deficit));
        }
    }

    #[test]
    fn forward_heat_flow_keeps_mass_and_backward_keeps_constants(l in lattice(), phase in 0.0f64..6.0, t in 0.0f64..0.1) {
        let ev = HeatEvolver::new(&l);
        let rho = density(&l, phase);
        let mass = |v: &[f64]| v.iter().sum::<f64>();
        let scale = rho.iter().map(|v| v.abs()).sum::<f64>();
        let forward = ev.evolve(&rho, t).unwrap();
        prop_assert!((mass(&forward) - mass(&rho)).abs() <= 1e-9 * scale);

        let ones = vec![1.0; l.len()];
        let back = ev.evolve_backward(&ones, t).unwrap();
        prop_assert!(back.iter().all(|v| (v - 1.0).abs() <= 1e-9));
    }

    #[test]
    fn adjoint_columns_sum_to_zero(l in lattice()) {
        let adj = adjoint_laplacian(&l);
        let ones = vec![1.0; l.len()];
        // <1, Delta* e_x> = <Delta 1, e_x> = 0 because the rows of Delta sum to zero
        let col_sums: Vec<f64> = (0..l.len()).map(|x| {
            let mut e = vec![0.0; l.len()];
            e[x] = 1.0;
            adj.apply(&e).iter().zip(&ones).map(|(a, b)| a * b).sum()
        }).collect();
        let scale = 1.0 / l.holding_times().iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(col_sums.iter().all(|s| s.abs() <= 1e-12 * scale));
    }
}

#[test]
fn empty_series_has_no_segregation_rows() {
    let l = build_lattice(&DomainSpec64::rectangle(&[1.0, 1.0]).unwrap(), 0.25, TimeScale::Laplacian).unwrap();
    let series = ObservableSeries::new(SeriesMeta { n: 1, epsilon: 0.25, dim: 2, sites: l.len(), seed: 0 }, vec![]);
    let report = segregation_report(&series, &l, 0.5, 0.1).unwrap();
    assert!(report.rows.is_empty() && report.identities_hold());
}
