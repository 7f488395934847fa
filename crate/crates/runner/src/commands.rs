//! The `lattice`, `eig`, `simulate`, `evolve` and `compare` subcommands.
//! Each writes into an output directory and finishes with a manifest.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use abwalk_core::analysis::{
    compare_to_limit, drift_residual, integrated_v, segregation_report, time_average, ObservableSeries, SeriesMeta,
};
use abwalk_core::dynamics::{simulate_with, total_jump_rate, RunStats};
use abwalk_core::io::{
    write_comparison_csv, write_drift_csv, write_events, write_segregation_csv, write_series_csv, Grid,
};
use abwalk_core::scalar::fmt17;
use abwalk_core::spectral::{closed_form_basis, eig_neumann, normalizer_c, HeatEvolver, SpectralBasis};
use abwalk_core::{Lattice64, SpectralBasis64};
use serde::{Deserialize, Serialize};

use crate::config::{DomainConfig, InitialCondition, RunConfig};
use crate::error::{Result, RunError};
use crate::init::initial_configuration;
use crate::manifest::{sha256_file, FileDigest, OutputDir, RunManifest, RunStatus};
use crate::svg::heatmap_pair;

pub const SERIES_FILE: &str = "series.csv";
pub const BASIS_FILE: &str = "basis.txt";
pub const SUMMARY_FILE: &str = "summary.json";

/// What a command produced: its manifest and a few lines for the terminal.
#[derive(Debug)]
pub struct Outcome {
    pub manifest: RunManifest,
    pub lines: Vec<String>,
}

fn input_digests(cfg: &RunConfig) -> Result<Vec<FileDigest>> {
    match &cfg.dynamics.initial {
        InitialCondition::GridFile { path } => {
            let (bytes, sha256) = sha256_file(path)?;
            Ok(vec![FileDigest { path: path.display().to_string(), bytes, sha256 }])
        }
        _ => Ok(Vec::new()),
    }
}

fn snapshot_name(i: usize) -> String {
    format!("snapshots/eta_{i:05}.txt")
}

/// Eigenpairs needed by the configuration, or `None` when nothing is tracked.
pub fn tracked_basis(cfg: &RunConfig, lattice: &Lattice64) -> Result<Option<SpectralBasis64>> {
    if cfg.observables.modes.is_empty() && cfg.sweep.is_none() {
        return Ok(None);
    }
    let k = cfg.basis_size().max(cfg.observables.eigenpairs).min(lattice.len() - 1);
    Ok(Some(eig_neumann(lattice, k)?))
}

pub fn cmd_lattice(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome> {
    let started = crate::manifest::unix_now();
    let lattice = cfg.build_lattice()?;
    let report = lattice.constraint_report();
    log::info!("lattice: {} sites, {} pruned", lattice.len(), lattice.pruned());
    let mut out = OutputDir::create(out_dir)?;
    out.write("lattice.txt", |w| Ok(lattice.write_text(w)?))?;
    #[derive(Serialize)]
    struct Report {
        sites: usize,
        pruned: usize,
        boundary_sites: usize,
        max_row_sum_error: String,
        max_tangential_drift: String,
        min_c1: String,
        min_probability: String,
        worst_site: Option<usize>,
        worst_coords: Option<Vec<i64>>,
    }
    let worst_coords = report.worst_site.map(|x| lattice.coords(x).to_vec());
    out.write_json(
        "constraints.json",
        &Report {
            sites: lattice.len(),
            pruned: lattice.pruned(),
            boundary_sites: report.boundary_sites,
            max_row_sum_error: fmt17(report.max_row_sum_error),
            max_tangential_drift: fmt17(report.max_tangential_drift),
            min_c1: fmt17(report.min_c1),
            min_probability: fmt17(report.min_probability),
            worst_site: report.worst_site,
            worst_coords: worst_coords.clone(),
        },
    )?;
    let lines = vec![
        format!("sites {} (pruned {})", lattice.len(), lattice.pruned()),
        format!("boundary sites {}", report.boundary_sites),
        format!("max row-sum deviation {}", fmt17(report.max_row_sum_error)),
        format!("max tangential drift {}", fmt17(report.max_tangential_drift)),
        format!("min c1 {}", fmt17(report.min_c1)),
    ];
    let failure = report.worst_site.map(|x| {
        format!("reflection constraints violated at site {x} (coords {:?})", worst_coords.unwrap_or_default())
    });
    let manifest = RunManifest::new("lattice", cfg.clone(), started);
    let status = if failure.is_some() { RunStatus::Failed } else { RunStatus::Complete };
    let manifest = manifest.finish(&out, status, failure.clone())?;
    match failure {
        Some(msg) => Err(RunError::Threshold(msg)),
        None => Ok(Outcome { manifest, lines }),
    }
}

pub fn cmd_eig(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome> {
    let started = crate::manifest::unix_now();
    let lattice = cfg.build_lattice()?;
    let k = cfg.observables.eigenpairs.max(cfg.basis_size()).min(lattice.len() - 1);
    let basis = eig_neumann(&lattice, k)?;
    let closed = match cfg.domain {
        DomainConfig::Rectangle { .. } => Some(closed_form_basis(&cfg.domain_spec()?, &lattice, k)?),
        _ => None,
    };
    let mut out = OutputDir::create(out_dir)?;
    out.write(BASIS_FILE, |w| Ok(basis.write_text(w)?))?;
    let mut lines = Vec::new();
    out.write("eigenvalues.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["n", "lambda", "residual", "closed_form", "relative_error"])?;
        for n in 0..basis.len() {
            let lam = basis.eigenvalue(n);
            let (cf, rel) = match &closed {
                Some(c) => {
                    let e = c.eigenvalue(n);
                    let rel = if e > 0.0 { (lam - e).abs() / e } else { lam.abs() };
                    (fmt17(e), fmt17(rel))
                }
                None => (String::new(), String::new()),
            };
            lines.push(format!("lambda_{n} = {}", fmt17(lam)));
            csv.write_record([n.to_string(), fmt17(lam), fmt17(basis.residuals()[n]), cf, rel])?;
        }
        csv.flush().map_err(|e| RunError::io("eigenvalues.csv", e))
    })?;
    let manifest = RunManifest::new("eig", cfg.clone(), started).finish(&out, RunStatus::Complete, None)?;
    Ok(Outcome { manifest, lines })
}

/// Contents of `summary.json` for a simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub sites: usize,
    pub initial_rate: f64,
    /// `initial_rate * t_end`.
    pub expected_events: f64,
    pub stats: RunStats,
    pub observations: usize,
    pub snapshots: Vec<String>,
}

pub fn cmd_simulate(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome> {
    let started = crate::manifest::unix_now();
    let lattice = cfg.build_lattice()?;
    let c0 = initial_configuration(cfg, &lattice)?;
    let basis = tracked_basis(cfg, &lattice)?;
    let tracked = match &basis {
        Some(b) => b.tracked(&cfg.observables.modes)?,
        None => Vec::new(),
    };
    let initial_rate = total_jump_rate(&c0, &lattice);
    let params = cfg.sim_params();
    let mut out = OutputDir::create(out_dir)?;
    let mut manifest = RunManifest::new("simulate", cfg.clone(), started);
    manifest.inputs = input_digests(cfg)?;
    if let Some(b) = &basis {
        out.write(BASIS_FILE, |w| Ok(b.write_text(w)?))?;
    }

    let mut events = Vec::new();
    let record = cfg.output.events;
    let result = simulate_with(c0, &lattice, &params, &tracked, |e| {
        if record {
            events.push(*e);
        }
    });
    let sim = match result {
        Ok(sim) => sim,
        Err(e @ abwalk_core::Error::Budget { .. }) => {
            manifest.finish(&out, RunStatus::BudgetExceeded, Some(e.to_string()))?;
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    if sim.stats.conservation_violations > 0 {
        let msg = format!("{} conservation violations", sim.stats.conservation_violations);
        manifest.finish(&out, RunStatus::Failed, Some(msg.clone()))?;
        return Err(RunError::Threshold(msg));
    }

    let series = &sim.series;
    out.write(SERIES_FILE, |w| Ok(write_series_csv(w, series)?))?;
    let mut snapshots = Vec::new();
    if cfg.output.snapshots {
        for i in 0..series.len() {
            let name = snapshot_name(i);
            let grid = Grid {
                t: series.times()[i],
                epsilon: lattice.epsilon(),
                dim: lattice.dim(),
                values: series.snapshot(i).to_vec(),
            };
            out.write(&name, |w| Ok(grid.write(w)?))?;
            snapshots.push(name);
        }
    }
    if record {
        out.write("events.ndjson", |w| Ok(write_events(w, &events)?))?;
    }
    let summary = SimSummary {
        sites: lattice.len(),
        initial_rate,
        expected_events: initial_rate * cfg.dynamics.t_end,
        stats: sim.stats.clone(),
        observations: series.len(),
        snapshots,
    };
    out.write_json(SUMMARY_FILE, &summary)?;
    let manifest = manifest.finish(&out, RunStatus::Complete, None)?;
    let lines = vec![
        format!("events {} (annihilations {})", sim.stats.events, sim.stats.annihilations),
        format!("observations {}", series.len()),
        format!("conservation violations {}", sim.stats.conservation_violations),
    ];
    Ok(Outcome { manifest, lines })
}

pub fn cmd_evolve(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome> {
    let started = crate::manifest::unix_now();
    let lattice = cfg.build_lattice()?;
    let c0 = initial_configuration(cfg, &lattice)?;
    let u0 = c0.density(&lattice).into_values();
    let times = cfg.observation_times();
    let evolver = HeatEvolver::new(&lattice);
    let path = evolver.evolve_path(&u0, &times)?;
    let c = normalizer_c(&evolver, &u0, &times)?;
    let mut out = OutputDir::create(out_dir)?;
    let mut manifest = RunManifest::new("evolve", cfg.clone(), started);
    manifest.inputs = input_digests(cfg)?;
    for (i, (rho, &t)) in path.iter().zip(&times).enumerate() {
        let grid = Grid { t, epsilon: lattice.epsilon(), dim: lattice.dim(), values: rho.clone() };
        out.write(&format!("heat/rho_{i:05}.txt"), |w| Ok(grid.write(w)?))?;
    }
    out.write("normalizer.csv", |w| write_normalizer(w, &times, &c))?;
    let manifest = manifest.finish(&out, RunStatus::Complete, None)?;
    let last = times.len() - 1;
    let lines = vec![format!("C({}) = {}", fmt17(times[last]), fmt17(c[last]))];
    Ok(Outcome { manifest, lines })
}

fn write_normalizer<W: Write>(w: W, times: &[f64], c: &[f64]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["t", "c", "log_c_over_t"])?;
    for (&t, &ci) in times.iter().zip(c) {
        let rate = if t > 0.0 { fmt17(ci.ln() / t) } else { String::new() };
        csv.write_record([fmt17(t), fmt17(ci), rate])?;
    }
    csv.flush().map_err(|e| RunError::io("normalizer.csv", e))
}

/// Rebuilds the observable series of a finished simulation from its
/// manifest, `series.csv` and snapshot files, after checking every digest.
pub fn load_series(run: &Path) -> Result<(RunManifest, ObservableSeries, Option<SpectralBasis64>)> {
    let manifest = RunManifest::load(run)?;
    if manifest.command != "simulate" || manifest.status != RunStatus::Complete {
        return Err(RunError::Inventory {
            path: run.to_path_buf(),
            problem: format!("holds a {:?} `{}` run, not a complete simulation", manifest.status, manifest.command),
        });
    }
    manifest.verify(run)?;
    let cfg = &manifest.config;
    let series_path = run.join(SERIES_FILE);
    if manifest.digest_of(SERIES_FILE).is_none() {
        return Err(RunError::Inventory { path: series_path, problem: "is not in the manifest".into() });
    }
    let mut reader = csv::Reader::from_path(&series_path)?;
    let header = reader.headers()?.clone();
    let modes: Vec<usize> = header
        .iter()
        .skip(3)
        .map(|h| h.trim_start_matches("u_").parse().map_err(|_| RunError::Config(format!("bad column {h}"))))
        .collect::<Result<_>>()?;
    let summary: SimSummary = {
        let path = run.join(SUMMARY_FILE);
        let file = File::open(&path).map_err(|e| RunError::io(&path, e))?;
        serde_json::from_reader(BufReader::new(file))?
    };
    let meta = SeriesMeta {
        n: cfg.dynamics.n,
        epsilon: cfg.lattice.epsilon,
        dim: cfg.domain.dim(),
        sites: summary.sites,
        seed: cfg.dynamics.seed,
    };
    let mut series = ObservableSeries::new(meta, modes);
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let num = |j: usize| -> Result<f64> {
            row.get(j)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| RunError::Config(format!("{SERIES_FILE}: bad value in row {}", i + 1)))
        };
        let name = snapshot_name(i);
        if manifest.digest_of(&name).is_none() {
            return Err(RunError::Inventory {
                path: run.join(&name),
                problem: "is missing: the run was made without snapshots".into(),
            });
        }
        let path = run.join(&name);
        let file = File::open(&path).map_err(|e| RunError::io(&path, e))?;
        let grid = Grid::<i32>::read(BufReader::new(file))?;
        let k = row.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| RunError::Config("bad k".into()))?;
        let coeffs = (3..row.len()).map(num).collect::<Result<Vec<f64>>>()?;
        series.push(num(0)?, grid.values, coeffs, num(1)?, k);
    }
    series.validate()?;
    let basis = if manifest.digest_of(BASIS_FILE).is_some() {
        let path = run.join(BASIS_FILE);
        let file = File::open(&path).map_err(|e| RunError::io(&path, e))?;
        Some(SpectralBasis::read_text(BufReader::new(file))?)
    } else {
        None
    };
    Ok((manifest, series, basis))
}

/// Headline numbers of a comparison, also written to `compare.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub t_end: f64,
    pub delta: f64,
    /// Block-L1 distance to the normalized heat flow at the last observation.
    pub distance_end: f64,
    pub max_deficit_after_first: Option<f64>,
    pub identities_hold: bool,
    /// `|2K/N - trapezoid int V| / trapezoid int V` at the last observation.
    pub compensator_rel_error_end: f64,
    /// Average of `V` over the second half of the run.
    pub mean_v_second_half: Option<f64>,
    pub lambda1: Option<f64>,
    /// `(t, log C(t) / t)` at every positive observation time.
    pub log_c_over_t: Vec<(f64, f64)>,
    pub normalizer_nondecreasing: bool,
}

pub fn cmd_compare(run: &Path, config: Option<&RunConfig>, out_dir: &Path) -> Result<Outcome> {
    let started = crate::manifest::unix_now();
    let (run_manifest, series, basis) = load_series(run)?;
    let cfg = config.cloned().unwrap_or_else(|| run_manifest.config.clone());
    let lattice = run_manifest.config.build_lattice()?;
    if lattice.len() != series.meta().sites {
        return Err(RunError::Config("run and configuration lattices differ".into()));
    }
    let evolver = HeatEvolver::new(&lattice);
    let delta = cfg.observables.delta;
    let comparison = compare_to_limit(&series, &lattice, &evolver, delta)?;
    let segregation = segregation_report(&series, &lattice, delta, cfg.observables.c0)?;
    let u0: Vec<f64> = series.density(0);
    let c = normalizer_c(&evolver, &u0, series.times())?;
    let iv = integrated_v(&series);

    let mut out = OutputDir::create(out_dir)?;
    out.write("comparison.csv", |w| Ok(write_comparison_csv(w, &comparison)?))?;
    out.write("segregation.csv", |w| Ok(write_segregation_csv(w, &segregation)?))?;
    out.write("normalizer.csv", |w| write_normalizer(w, series.times(), &c))?;
    if let Some(b) = &basis {
        for &m in series.modes() {
            if m < b.len() {
                let drift = drift_residual(&series, b, m, cfg.observables.growth)?;
                out.write(&format!("drift_mode{m}.csv"), |w| Ok(write_drift_csv(w, &drift)?))?;
            }
        }
    }

    let last = series.len() - 1;
    let t_end = series.times()[last];
    let compensator_rel_error_end = {
        let (a, b) = (iv.compensator[last], iv.trapezoid[last]);
        if b > 0.0 {
            (a - b).abs() / b
        } else {
            a.abs()
        }
    };
    let summary = CompareSummary {
        t_end,
        delta,
        distance_end: comparison.rows[last].distance,
        max_deficit_after_first: series.times().get(1).and_then(|&t1| segregation.max_deficit_from(t1)),
        identities_hold: segregation.identities_hold(),
        compensator_rel_error_end,
        mean_v_second_half: time_average(series.times(), series.v(), 0.5 * t_end, t_end),
        lambda1: basis.as_ref().filter(|b| b.len() > 1).map(|b| b.eigenvalue(1)),
        log_c_over_t: series.times().iter().zip(&c).filter(|(&t, _)| t > 0.0).map(|(&t, &ci)| (t, ci.ln() / t)).collect(),
        normalizer_nondecreasing: c.windows(2).all(|w| w[1] >= w[0]),
    };
    out.write_json("compare.json", &summary)?;

    if cfg.output.svg && lattice.dim() == 2 {
        let wanted: Vec<usize> = if cfg.output.svg_times.is_empty() {
            vec![last]
        } else {
            cfg.output.svg_times.iter().filter_map(|&t| series.index_at(t)).collect()
        };
        let heat = evolver.evolve_path(&u0, series.times())?;
        for i in wanted {
            let empirical: Vec<f64> = series.density(i);
            let reference = abwalk_core::spectral::normalize_tv(&lattice, &heat[i]);
            let caption = format!("t = {}, block-L1 distance {:.4}", fmt17(series.times()[i]), comparison.rows[i].distance);
            if let Some(svg) = heatmap_pair(&lattice, ("empirical u", &empirical), ("normalized heat flow", &reference), &caption)
            {
                out.write_string(&format!("heatmaps/t_{i:05}.svg"), &svg)?;
            }
        }
    }

    let mut manifest = RunManifest::new("compare", cfg, started);
    manifest.inputs = run_manifest.files.clone();
    let manifest = manifest.finish(&out, RunStatus::Complete, None)?;
    let mut lines = vec![
        format!("distance at t = {}: {}", fmt17(t_end), fmt17(summary.distance_end)),
        format!("overlap identity holds: {}", summary.identities_hold),
        format!("compensator relative error at t_end: {}", fmt17(compensator_rel_error_end)),
    ];
    if let Some(d) = summary.max_deficit_after_first {
        lines.push(format!("max segregation deficit after the first observation: {}", fmt17(d)));
    }
    if !summary.identities_hold {
        return Err(RunError::Threshold("the integer overlap identity failed".into()));
    }
    Ok(Outcome { manifest, lines })
}
