//! Exact-identity checks on small built-in fixtures.

use abwalk_core::analysis::{segregation_report, ObservableSeries, SeriesMeta, DEFAULT_C0};
use abwalk_core::dynamics::{
    apply_event, compute_v, generator_apply, init_from_density, simulate, Configuration, SimParams,
    GENERATOR_EVENT_BUDGET,
};
use abwalk_core::spectral::{total_variation, HeatEvolver};
use abwalk_core::{adjoint_laplacian, build_lattice, discrete_laplacian, DomainSpec64, Lattice64, TimeScale};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn record(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check { name: name.to_string(), passed, detail });
    }
}

fn fixtures() -> Result<Vec<(&'static str, Lattice64)>> {
    let square = DomainSpec64::rectangle(&[1.0, 1.0])?;
    let disc = DomainSpec64::disc(&[0.0, 0.0], 1.0)?;
    Ok(vec![
        ("square eps=1/8", build_lattice(&square, 0.125, TimeScale::QuadraticVariation)?),
        ("disc eps=1/4", build_lattice(&disc, 0.25, TimeScale::Laplacian)?),
    ])
}

/// Shifts probability between two opposite tangential neighbours of the
/// first boundary site that has them. Returns that site.
pub fn corrupt_tangential(lattice: &mut Lattice64) -> Option<usize> {
    for x in 0..lattice.len() {
        let Some(normal) = lattice.normal(x).map(<[f64]>::to_vec) else { continue };
        let kx = lattice.coords(x).to_vec();
        let offsets: Vec<Vec<i64>> = lattice
            .neighbors(x)
            .iter()
            .map(|&y| lattice.coords(y as usize).iter().zip(&kx).map(|(a, b)| a - b).collect())
            .collect();
        let tangential = |o: &Vec<i64>| o.iter().zip(&normal).map(|(&a, &b)| a as f64 * b).sum::<f64>().abs() < 1e-12;
        for i in 0..offsets.len() {
            for j in 0..offsets.len() {
                let opposite = offsets[i].iter().zip(&offsets[j]).all(|(a, b)| a == &-b);
                if opposite && tangential(&offsets[i]) && lattice.jump_probs(x)[j] >= 0.05 {
                    let mut p = lattice.jump_probs(x).to_vec();
                    p[i] += 0.05;
                    p[j] -= 0.05;
                    lattice.set_jump_probs(x, &p).ok()?;
                    return Some(x);
                }
            }
        }
    }
    None
}

fn random_configuration(lattice: &Lattice64, rng: &mut ChaCha8Rng, n: usize) -> Configuration {
    let sites = lattice.len() as u32;
    let plus: Vec<u32> = (0..n).map(|_| rng.gen_range(0..sites)).collect();
    let minus: Vec<u32> = (0..n).map(|_| rng.gen_range(0..sites)).collect();
    // opposite particles on one site cancel, so place them and read back eta
    let mut eta = vec![0i32; lattice.len()];
    for &p in &plus {
        eta[p as usize] += 1;
    }
    let mut pending: Vec<u32> = minus;
    while let Some(m) = pending.pop() {
        if eta[m as usize] > 0 {
            pending.push(rng.gen_range(0..sites));
            continue;
        }
        eta[m as usize] -= 1;
    }
    Configuration::from_eta(eta).expect("balanced by construction")
}

fn constraint_checks(report: &mut SelftestReport, fixtures: &[(&str, Lattice64)]) {
    for (name, l) in fixtures {
        let r = l.constraint_report();
        let eps = l.epsilon();
        let ok = r.max_row_sum_error <= 1e-12 && r.max_tangential_drift <= 1e-10 * eps && r.min_c1 > 0.0;
        let detail = match r.worst_site {
            Some(x) => format!(
                "site {x} at {:?}: tangential drift {:.3e}, row-sum error {:.3e}",
                l.coords(x),
                r.max_tangential_drift,
                r.max_row_sum_error
            ),
            None => format!("max tangential drift {:.3e}, min c1 {:.3e}", r.max_tangential_drift, r.min_c1),
        };
        report.record(&format!("reflection constraints [{name}]"), ok && r.worst_site.is_none(), detail);
    }
}

fn generator_checks(report: &mut SelftestReport, l: &Lattice64, rng: &mut ChaCha8Rng) -> Result<()> {
    let adjoint = adjoint_laplacian(l);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.gen_range(1..=4);
        let c = random_configuration(l, rng, n);
        let eta: Vec<f64> = c.eta().iter().map(|&e| f64::from(e)).collect();
        let lap = adjoint.apply(&eta);
        let v = compute_v(&c, l);
        for z in 0..l.len() {
            let brute = generator_apply(|e| f64::from(e[z]), &c, l, GENERATOR_EVENT_BUDGET)?;
            worst = worst.max((brute - (lap[z] + 0.5 * v * eta[z])).abs());
        }
    }
    report.record(
        "generator of eta_z equals adjoint Laplacian plus V eta_z / 2",
        worst <= 1e-10,
        format!("max error {worst:.3e} over 20 configurations"),
    );
    Ok(())
}

fn overlap_checks(report: &mut SelftestReport, l: &Lattice64, rng: &mut ChaCha8Rng) -> Result<()> {
    let mut series: Option<ObservableSeries> = None;
    for i in 0..20 {
        let c = random_configuration(l, rng, 12);
        let s = series.get_or_insert_with(|| {
            ObservableSeries::new(SeriesMeta { n: 12, epsilon: l.epsilon(), dim: l.dim(), sites: l.len(), seed: 0 }, vec![])
        });
        s.push(i as f64, c.eta().to_vec(), vec![], 0.0, 0);
    }
    let series = series.expect("at least one configuration");
    let mut ok = true;
    for delta in [0.375, 0.5, 0.75] {
        ok &= segregation_report(&series, l, delta, DEFAULT_C0)?.identities_hold();
    }
    report.record(
        "block overlap identity",
        ok,
        format!("{} configurations, three block sizes", series.len()),
    );
    Ok(())
}

fn duality_checks(report: &mut SelftestReport, l: &Lattice64, rng: &mut ChaCha8Rng) -> Result<()> {
    let lap = discrete_laplacian(l);
    let adj = adjoint_laplacian(l);
    let exact = adj.to_dense() == lap.transpose().to_dense();
    report.record("adjoint is the exact transpose", exact, format!("{} sites", l.len()));

    let f: Vec<f64> = (0..l.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let g: Vec<f64> = (0..l.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let lhs = dot(&lap.apply(&f), &g);
    let rhs = dot(&f, &adj.apply(&g));
    let scale = lhs.abs().max(rhs.abs()).max(1.0);
    report.record(
        "<Delta f, g> = <f, Delta* g>",
        (lhs - rhs).abs() <= 1e-12 * scale,
        format!("difference {:.3e}", (lhs - rhs).abs()),
    );

    let ev = HeatEvolver::new(l);
    let t = 0.05;
    let lhs = dot(&ev.evolve_backward(&f, t)?, &g);
    let rhs = dot(&f, &ev.evolve(&g, t)?);
    report.record(
        "heat semigroup duality",
        (lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0),
        format!("difference {:.3e} at t = {t}", (lhs - rhs).abs()),
    );
    Ok(())
}

fn conservation_checks(report: &mut SelftestReport, l: &Lattice64) -> Result<()> {
    let rho: Vec<f64> = (0..l.len()).map(|x| (std::f64::consts::PI * l.position(x)[0]).cos()).collect();
    let c0 = init_from_density(l, &rho, 24)?;
    let params = SimParams { record_events: true, ..SimParams::new(0.2, 3, (1..=20).map(|i| i as f64 * 0.01).collect()) };
    let out = simulate(c0.clone(), l, &params, &[])?;
    let mut replay = c0;
    let mut ok = out.stats.conservation_violations == 0;
    for e in &out.events {
        apply_event(&mut replay, l, e)?;
        ok &= replay.plus_total() == 24 && replay.minus_total() == 24;
    }
    ok &= replay.eta() == out.config.eta();
    let mut worst_tv = 0.0f64;
    for i in 0..out.series.len() {
        let u: Vec<f64> = out.series.density(i);
        worst_tv = worst_tv.max((total_variation(l, &u) - 2.0).abs());
    }
    ok &= worst_tv <= 1e-12;
    report.record(
        "particle conservation",
        ok,
        format!("{} events replayed, max |TV - 2| {worst_tv:.3e}", out.events.len()),
    );
    Ok(())
}

/// Runs every suite. With `corrupt`, the first fixture gets a tangential
/// drift at one boundary site, which the constraint check must report.
pub fn run_selftest(corrupt: bool) -> Result<SelftestReport> {
    let mut report = SelftestReport::default();
    let mut fx = fixtures()?;
    if corrupt {
        let site = corrupt_tangential(&mut fx[0].1);
        log::info!("corrupted fixture site {site:?}");
    }
    constraint_checks(&mut report, &fx);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f_7e57);
    let small = build_lattice(&DomainSpec64::rectangle(&[1.0, 1.0])?, 0.25, TimeScale::QuadraticVariation)?;
    generator_checks(&mut report, &small, &mut rng)?;
    for (_, l) in &fx {
        overlap_checks(&mut report, l, &mut rng)?;
        duality_checks(&mut report, l, &mut rng)?;
    }
    conservation_checks(&mut report, &fx[0].1)?;
    Ok(report)
}
