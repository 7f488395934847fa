//! Acceptance criteria A1-A10. Prints one PASS/FAIL line per criterion and
//! exits nonzero when any fails. Every particle run uses the `laplacian`
//! time scale and a fixed seed; artifacts and `report.json` are left under
//! the cargo target tmpdir.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use abwalk::commands::{load_series, CompareSummary, SimSummary, SUMMARY_FILE};
use abwalk::sweep::{ReplicaRecord, SweepReport};
use abwalk::{cmd_compare, cmd_simulate, cmd_sweep, RunConfig, RunError};
use abwalk_core::analysis::{segregation_report, time_average};
use abwalk_core::dynamics::{compute_v, generator_apply, Configuration, GENERATOR_EVENT_BUDGET};
use abwalk_core::spectral::{eig_neumann, total_variation};
use abwalk_core::{adjoint_laplacian, build_lattice, DomainSpec64, Lattice64, TimeScale};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

const SCALE: TimeScale = TimeScale::Laplacian;

#[derive(Serialize)]
struct Verdict {
    id: &'static str,
    passed: bool,
    detail: String,
    seconds: f64,
    thresholds: Value,
}

fn verdict(id: &'static str, passed: bool, detail: String, elapsed: Duration, thresholds: Value) -> Verdict {
    Verdict { id, passed, detail, seconds: elapsed.as_secs_f64(), thresholds }
}

fn unit_square(eps: f64) -> Lattice64 {
    build_lattice(&DomainSpec64::rectangle(&[1.0, 1.0]).unwrap(), eps, SCALE).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// `n` particles of each species at uniform sites, `-` particles redrawn
/// until they land on a site without `+`.
fn random_configuration(l: &Lattice64, rng: &mut ChaCha8Rng, n: usize) -> Configuration {
    let sites = l.len();
    let mut eta = vec![0i32; sites];
    for _ in 0..n {
        eta[rng.gen_range(0..sites)] += 1;
    }
    let mut placed = 0;
    while placed < n {
        let x = rng.gen_range(0..sites);
        if eta[x] <= 0 {
            eta[x] -= 1;
            placed += 1;
        }
    }
    Configuration::from_eta(eta).unwrap()
}

fn a1_generator() -> Verdict {
    let start = Instant::now();
    let lattices: Vec<Lattice64> = [0.5, 1.0 / 3.0, 0.25].into_iter().map(unit_square).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_full, mut worst_half) = (0.0f64, 0.0f64);
    for i in 0..100 {
        let l = &lattices[i % lattices.len()];
        let n = rng.gen_range(1..=6);
        let c = random_configuration(l, &mut rng, n);
        let eta: Vec<f64> = c.eta().iter().map(|&e| f64::from(e)).collect();
        let lap = adjoint_laplacian(l).apply(&eta);
        let v = compute_v(&c, l);
        for z in 0..l.len() {
            let brute = generator_apply(|e| f64::from(e[z]), &c, l, GENERATOR_EVENT_BUDGET).unwrap();
            worst_full = worst_full.max((brute - (lap[z] + v * eta[z])).abs());
            worst_half = worst_half.max((brute - (lap[z] + 0.5 * v * eta[z])).abs());
        }
    }
    let elapsed = start.elapsed();
    verdict(
        "A1",
        worst_full <= 1e-10 && elapsed.as_secs_f64() < 10.0,
        format!(
            "max |Lf - (adjoint eta_z + V eta_z)| = {worst_full:.3e} over 100 configurations \
             (with V/2 in place of V: {worst_half:.3e})"
        ),
        elapsed,
        json!({ "max_abs_error": 1e-10, "seconds": 10.0 }),
    )
}

fn a2_boundary() -> Verdict {
    let start = Instant::now();
    let square = unit_square(1.0 / 32.0);
    let disc = build_lattice(&DomainSpec64::disc(&[0.0, 0.0], 1.0).unwrap(), 1.0 / 16.0, SCALE).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, l) in [("square", &square), ("disc", &disc)] {
        let r = l.constraint_report();
        let eps = l.epsilon();
        ok &= r.max_row_sum_error <= 1e-12 && r.max_tangential_drift <= 1e-10 * eps && r.min_c1 > 0.0;
        detail.push(format!(
            "{name}: {} boundary sites, row-sum {:.1e}, tangential {:.1e}, min c1 {:.3}",
            r.boundary_sites, r.max_row_sum_error, r.max_tangential_drift, r.min_c1
        ));
    }
    let elapsed = start.elapsed();
    verdict(
        "A2",
        ok && elapsed.as_secs_f64() < 5.0,
        detail.join("; "),
        elapsed,
        json!({ "row_sum": 1e-12, "tangential_over_eps": 1e-10, "min_c1": 0.0, "seconds": 5.0 }),
    )
}

/// One walker driven directly by the lattice kernel: exponential holding
/// time `h(x)`, then a jump drawn from `p(x, .)`.
fn free_walk(l: &Lattice64, start: usize, t: f64, rng: &mut ChaCha8Rng) -> usize {
    let mut x = start;
    let mut clock = 0.0;
    loop {
        clock += -(1.0 - rng.gen::<f64>()).ln() * l.holding_time(x);
        if clock > t {
            return x;
        }
        let u: f64 = rng.gen();
        let probs = l.jump_probs(x);
        let mut acc = 0.0;
        let mut next = *l.neighbors(x).last().unwrap();
        for (&y, &p) in l.neighbors(x).iter().zip(probs) {
            acc += p;
            if u < acc {
                next = y;
                break;
            }
        }
        x = next as usize;
    }
}

fn a3_diffusion() -> Verdict {
    let start = Instant::now();
    let l = unit_square(1.0 / 64.0);
    let center = l.index_of(&[32, 32]).unwrap();
    let origin = l.position(center);
    let t = 0.02;
    let replicas = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut sums = [[0.0f64; 2]; 2];
    for _ in 0..replicas {
        let p = l.position(free_walk(&l, center, t, &mut rng));
        for a in 0..2 {
            let d = p[a] - origin[a];
            sums[a][0] += d;
            sums[a][1] += d * d;
        }
    }
    let r = f64::from(replicas);
    let var: Vec<f64> = sums.iter().map(|s| (s[1] - s[0] * s[0] / r) / (r - 1.0)).collect();
    let elapsed = start.elapsed();
    verdict(
        "A3",
        var.iter().all(|&v| rel(v, t) <= 0.05) && elapsed.as_secs_f64() < 30.0,
        format!("per-coordinate variance {:.5} and {:.5} against t = {t} (ratios {:.3}, {:.3})", var[0], var[1], var[0] / t, var[1] / t),
        elapsed,
        json!({ "relative_error": 0.05, "seconds": 30.0 }),
    )
}

fn a4_spectrum() -> Verdict {
    let start = Instant::now();
    let pi2 = PI * PI;
    let errors: Vec<f64> = [8.0, 16.0, 32.0]
        .iter()
        .map(|&m| rel(eig_neumann(&unit_square(1.0 / m), 2).unwrap().eigenvalue(1), pi2))
        .collect();
    let ratios = [errors[1] / errors[0], errors[2] / errors[1]];
    let elapsed = start.elapsed();
    verdict(
        "A4",
        errors[2] < 0.05 && ratios.iter().all(|&r| r <= 0.7) && elapsed.as_secs_f64() < 60.0,
        format!(
            "relative error of lambda_1 at eps = 1/8, 1/16, 1/32: {:.4e}, {:.4e}, {:.4e}; ratios {:.3}, {:.3}",
            errors[0], errors[1], errors[2], ratios[0], ratios[1]
        ),
        elapsed,
        json!({ "relative_error": 0.05, "ratio": 0.7, "seconds": 60.0 }),
    )
}

const STABILITY_RUN: &str = r#"
[domain]
shape = "rectangle"
sides = [1.0, 1.0]

[lattice]
epsilon = 0.03125
time_scale = "laplacian"

[dynamics]
n = 8192
t_end = 0.5
seed = 20240501
initial = { preset = "eigenmode", m = 1, n = 0 }

[observables]
sample_dt = 0.0125
modes = [1]
delta = 0.125

[output]
svg_times = [0.1, 0.5]
"#;

struct StabilityRun {
    cfg: RunConfig,
    dir: PathBuf,
    summary: SimSummary,
    compare: CompareSummary,
    elapsed: Duration,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stability_run(root: &Path) -> StabilityRun {
    let cfg = RunConfig::from_toml(STABILITY_RUN).unwrap();
    let dir = root.join("stability");
    let start = Instant::now();
    cmd_simulate(&cfg, &dir).unwrap();
    let elapsed = start.elapsed();
    cmd_compare(&dir, None, &dir.join("compare")).unwrap();
    StabilityRun {
        summary: read_json(&dir.join(SUMMARY_FILE)),
        compare: read_json(&dir.join("compare/compare.json")),
        cfg,
        dir,
        elapsed,
    }
}

fn a5_stability(run: &StabilityRun) -> Verdict {
    let (_, series, _) = load_series(&run.dir).unwrap();
    let lambda = PI * PI;
    let mean_v = time_average(series.times(), series.v(), 0.25, 0.5).unwrap();
    let distance = run.compare.distance_end;
    verdict(
        "A5",
        distance < 0.2 && rel(mean_v, lambda) <= 0.2 && run.elapsed.as_secs_f64() < 120.0,
        format!(
            "block-L1 distance {distance:.4} at t = 0.5; mean V over [0.25, 0.5] = {mean_v:.3} against {lambda:.3} \
             (ratio {:.3}); {} events",
            mean_v / lambda,
            run.summary.stats.events
        ),
        run.elapsed,
        json!({ "distance": 0.2, "v_relative_error": 0.2, "seconds": 120.0 }),
    )
}

fn a6_segregation(run: &StabilityRun) -> Verdict {
    let start = Instant::now();
    let (_, series, _) = load_series(&run.dir).unwrap();
    let l = run.cfg.build_lattice().unwrap();
    let report = segregation_report(&series, &l, 0.125, run.cfg.observables.c0).unwrap();
    let deficit = report.max_deficit_from(0.1).unwrap();
    verdict(
        "A6",
        deficit < 0.3 && report.identities_hold(),
        format!(
            "max deficit for t >= 0.1: {deficit:.4}; overlap identity holds at all {} samples: {}",
            report.rows.len(),
            report.identities_hold()
        ),
        start.elapsed(),
        json!({ "deficit": 0.3, "from": 0.1 }),
    )
}

const SWEEP_RUN: &str = r#"
[domain]
shape = "rectangle"
sides = [1.0, 1.0]

[lattice]
epsilon = 0.03125
time_scale = "laplacian"

[dynamics]
n = 2048
t_end = 0.25
seed = 7000
initial = { preset = "eigenmode", m = 1, n = 0 }

[observables]
sample_dt = 0.025
modes = [1]

[output]
snapshots = false
svg = false

[sweep]
n_values = [2048, 8192, 32768]
replicas = 32
slope_range = [-1.4, -0.6]
"#;

struct SweepRun {
    report: Option<SweepReport>,
    records: Vec<ReplicaRecord>,
    error: Option<String>,
    elapsed: Duration,
}

fn sweep_run(root: &Path) -> SweepRun {
    let cfg = RunConfig::from_toml(SWEEP_RUN).unwrap();
    let dir = root.join("sweep");
    let start = Instant::now();
    let error = match cmd_sweep(&cfg, None, &dir) {
        Ok(_) | Err(RunError::Threshold(_)) => None,
        Err(e) => Some(e.to_string()),
    };
    let elapsed = start.elapsed();
    let report_path = dir.join("sweep_report.json");
    let report = report_path.exists().then(|| read_json(&report_path));
    let mut records = Vec::new();
    if let Ok(entries) = fs::read_dir(dir.join("replicas")) {
        for entry in entries {
            records.push(read_json(&entry.unwrap().path()));
        }
    }
    SweepRun { report, records, error, elapsed }
}

fn a7_noise(sweep: &SweepRun) -> Verdict {
    let thresholds = json!({ "slope": [-1.4, -0.6], "seconds": 1800.0 });
    let fit = sweep.report.as_ref().and_then(|r| r.noise.as_ref());
    let Some(fit) = fit else {
        let why = sweep.error.clone().unwrap_or_else(|| "no fit".into());
        return verdict("A7", false, format!("sweep produced no slope: {why}"), sweep.elapsed, thresholds);
    };
    let points: Vec<String> = fit.points.iter().map(|(n, r, v)| format!("N={n}: Var {v:.3e} ({r} replicas)")).collect();
    verdict(
        "A7",
        (-1.4..=-0.6).contains(&fit.slope) && sweep.elapsed.as_secs_f64() < 1800.0,
        format!("slope {:.3} +- {:.3}; {}", fit.slope, fit.half_width, points.join(", ")),
        sweep.elapsed,
        thresholds,
    )
}

fn a8_compensator(run: &StabilityRun) -> Verdict {
    let err = run.compare.compensator_rel_error_end;
    verdict(
        "A8",
        err <= 0.1,
        format!("2K/N and trapezoid of V differ by {:.2}% at t = 0.5", 100.0 * err),
        Duration::ZERO,
        json!({ "relative_error": 0.1 }),
    )
}

fn a9_conservation(run: &StabilityRun, sweep: &SweepRun) -> Verdict {
    let start = Instant::now();
    let (_, series, _) = load_series(&run.dir).unwrap();
    let l = run.cfg.build_lattice().unwrap();
    let mut events = run.summary.stats.events;
    let mut violations = run.summary.stats.conservation_violations;
    for r in &sweep.records {
        events += r.stats.events;
        violations += r.stats.conservation_violations;
    }
    let worst_tv = (0..series.len())
        .map(|i| (total_variation(&l, &series.density::<f64>(i)) - 2.0).abs())
        .fold(0.0f64, f64::max);
    let expected_replicas = 3 * 32;
    verdict(
        "A9",
        violations == 0 && worst_tv <= 1e-12 && sweep.records.len() == expected_replicas,
        format!(
            "{violations} violations over {events} events in {} runs; max |TV - 2| over snapshots {worst_tv:.1e}",
            1 + sweep.records.len()
        ),
        start.elapsed(),
        json!({ "violations": 0, "tv": 1e-12 }),
    )
}

fn a10_normalizer(run: &StabilityRun) -> Verdict {
    let lambda = eig_neumann(&run.cfg.build_lattice().unwrap(), 2).unwrap().eigenvalue(1);
    let window: Vec<(f64, f64)> =
        run.compare.log_c_over_t.iter().copied().filter(|&(t, _)| (0.2 - 1e-9..=0.5 + 1e-9).contains(&t)).collect();
    let worst = window.iter().map(|&(_, r)| rel(r, lambda)).fold(0.0f64, f64::max);
    verdict(
        "A10",
        !window.is_empty() && worst <= 0.1 && run.compare.normalizer_nondecreasing,
        format!(
            "log C(t)/t over {} samples in [0.2, 0.5] within {:.3}% of lambda_1 = {lambda:.4}; C nondecreasing: {}",
            window.len(),
            100.0 * worst,
            run.compare.normalizer_nondecreasing
        ),
        Duration::ZERO,
        json!({ "relative_error": 0.1, "window": [0.2, 0.5] }),
    )
}

fn main() -> ExitCode {
    let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    if root.exists() {
        fs::remove_dir_all(&root).unwrap();
    }
    fs::create_dir_all(&root).unwrap();

    let mut verdicts = vec![a1_generator(), a2_boundary(), a3_diffusion(), a4_spectrum()];
    let run = stability_run(&root);
    let sweep = sweep_run(&root);
    verdicts.extend([
        a5_stability(&run),
        a6_segregation(&run),
        a7_noise(&sweep),
        a8_compensator(&run),
        a9_conservation(&run, &sweep),
        a10_normalizer(&run),
    ]);

    for v in &verdicts {
        println!("{} {} ({:.1} s): {}", if v.passed { "PASS" } else { "FAIL" }, v.id, v.seconds, v.detail);
    }
    fs::write(root.join("report.json"), serde_json::to_string_pretty(&verdicts).unwrap()).unwrap();
    let failed = verdicts.iter().filter(|v| !v.passed).count();
    println!("acceptance: {} passed, {failed} failed; report in {}", verdicts.len() - failed, root.display());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
