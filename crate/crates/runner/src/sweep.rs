//! Replica sweeps over particle counts. Every replica is an independent
//! sequential simulation with seed `base + index`; finished replicas leave
//! a manifest under `replicas/` so an interrupted sweep resumes where it
//! stopped.

use std::fs;
use std::path::{Path, PathBuf};

use abwalk_core::analysis::{noise_scaling, qv_scaling, Growth, NoiseScaling, ObservableSeries, QvReport, ReplicaSet};
use abwalk_core::dynamics::{init_from_density, simulate, RunStats};
use abwalk_core::scalar::fmt17;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::commands::{tracked_basis, Outcome};
use crate::config::{RunConfig, SweepConfig};
use crate::error::{Result, RunError};
use crate::init::initial_density;
use crate::manifest::{OutputDir, RunManifest, RunStatus};

/// The result of one replica, written once it completes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub n: usize,
    pub index: usize,
    pub seed: u64,
    /// Digest of the sweep configuration; records from another
    /// configuration are recomputed.
    pub config_digest: String,
    pub stats: RunStats,
    pub series: ObservableSeries,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub mode: usize,
    pub lambda: f64,
    pub sample_time: f64,
    pub n_values: Vec<usize>,
    pub replicas: usize,
    /// `(N, seed, u_mode(sample_time))` in `(N, seed)` order.
    pub samples: Vec<(usize, u64, f64)>,
    pub noise: Option<NoiseScaling>,
    pub qv: Option<QvReport>,
    /// Why a fit was skipped.
    pub insufficient: Vec<String>,
    pub resumed: usize,
    pub slope_in_range: Option<bool>,
}

fn config_digest(cfg: &RunConfig) -> Result<String> {
    let text = serde_json::to_string(cfg)?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

fn replica_path(root: &Path, n: usize, index: usize) -> PathBuf {
    root.join("replicas").join(format!("n{n:07}_r{index:04}.json"))
}

fn load_replica(path: &Path, digest: &str) -> Option<ReplicaRecord> {
    let text = fs::read_to_string(path).ok()?;
    let rec: ReplicaRecord = serde_json::from_str(&text).ok()?;
    (rec.config_digest == digest).then_some(rec)
}

pub fn sweep_settings(cfg: &RunConfig, replicas: Option<usize>) -> Result<SweepConfig> {
    let mut s = cfg.sweep.clone().ok_or_else(|| RunError::Config("the sweep command needs a [sweep] table".into()))?;
    if let Some(r) = replicas {
        if r == 0 {
            return Err(RunError::Config("--replicas must be at least 1".into()));
        }
        s.replicas = r;
    }
    Ok(s)
}

pub fn cmd_sweep(cfg: &RunConfig, replicas: Option<usize>, out_dir: &Path) -> Result<Outcome> {
    let started = crate::manifest::unix_now();
    let settings = sweep_settings(cfg, replicas)?;
    let mut cfg = cfg.clone();
    cfg.sweep = Some(settings.clone());
    let lattice = cfg.build_lattice()?;
    let basis = tracked_basis(&cfg, &lattice)?.expect("a sweep always tracks its mode");
    let mode = settings.mode;
    let lambda = basis.eigenvalue(mode);
    let mut modes = cfg.observables.modes.clone();
    if !modes.contains(&mode) {
        modes.push(mode);
    }
    let tracked = basis.tracked(&modes)?;
    let rho = initial_density(&cfg, &lattice)?;
    let digest = config_digest(&cfg)?;
    let base = settings.base_seed.unwrap_or(cfg.dynamics.seed);
    fs::create_dir_all(out_dir.join("replicas")).map_err(|e| RunError::io(out_dir, e))?;

    let jobs: Vec<(usize, usize)> =
        settings.n_values.iter().flat_map(|&n| (0..settings.replicas).map(move |i| (n, i))).collect();
    let results: Vec<Result<(ReplicaRecord, bool)>> = jobs
        .par_iter()
        .map(|&(n, index)| {
            let path = replica_path(out_dir, n, index);
            if let Some(rec) = load_replica(&path, &digest) {
                return Ok((rec, true));
            }
            let seed = base + index as u64;
            let c0 = init_from_density(&lattice, &rho, n)?;
            let mut params = cfg.sim_params();
            params.seed = seed;
            let sim = simulate(c0, &lattice, &params, &tracked)?;
            if sim.stats.conservation_violations > 0 {
                return Err(RunError::Threshold(format!("replica N = {n}, seed {seed}: conservation violated")));
            }
            let rec = ReplicaRecord { n, index, seed, config_digest: digest.clone(), stats: sim.stats, series: sim.series };
            let tmp = path.with_extension("json.tmp");
            fs::write(&tmp, serde_json::to_vec(&rec)?).map_err(|e| RunError::io(&tmp, e))?;
            fs::rename(&tmp, &path).map_err(|e| RunError::io(&path, e))?;
            log::info!("replica N = {n} seed {seed}: {} events", rec.stats.events);
            Ok((rec, false))
        })
        .collect();
    let mut records = Vec::with_capacity(results.len());
    let mut resumed = 0;
    for r in results {
        let (rec, reused) = r?;
        resumed += usize::from(reused);
        records.push(rec);
    }
    let report = reduce(&cfg, &settings, lambda, records, resumed)?;

    let mut out = OutputDir::create(out_dir)?;
    out.write_json("sweep_report.json", &report)?;
    out.write("samples.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["n", "seed", &format!("u_{mode}")])?;
        for (n, seed, u) in &report.samples {
            csv.write_record([n.to_string(), seed.to_string(), fmt17(*u)])?;
        }
        csv.flush().map_err(|e| RunError::io("samples.csv", e))
    })?;
    let mut lines = vec![format!("replicas {} ({} resumed)", report.samples.len(), report.resumed)];
    if let Some(fit) = &report.noise {
        lines.push(format!("slope {} +- {}", fmt17(fit.slope), fmt17(fit.half_width)));
    }
    if let Some(qv) = &report.qv {
        lines.push(format!("qv beta_hat {} bound holds {}", fmt17(qv.beta_hat), qv.bound_holds));
    }
    for why in &report.insufficient {
        lines.push(format!("insufficient data: {why}"));
    }
    let failed = report.slope_in_range == Some(false);
    let status = if failed { RunStatus::Failed } else { RunStatus::Complete };
    let manifest = RunManifest::new("sweep", cfg, started);
    let manifest = manifest.finish(&out, status, failed.then(|| "slope outside sweep.slope_range".to_string()))?;
    if failed {
        let fit = report.noise.as_ref().map_or(f64::NAN, |f| f.slope);
        return Err(RunError::Threshold(format!("fitted slope {fit} outside {:?}", settings.slope_range)));
    }
    Ok(Outcome { manifest, lines })
}

/// Sorts by `(N, seed)` and runs both scaling fits. Fits that lack data are
/// recorded in `insufficient` rather than failing the sweep.
pub fn reduce(
    cfg: &RunConfig,
    settings: &SweepConfig,
    lambda: f64,
    mut records: Vec<ReplicaRecord>,
    resumed: usize,
) -> Result<SweepReport> {
    records.sort_by_key(|r| (r.n, r.seed));
    let mode = settings.mode;
    let sample_time = cfg.dynamics.t_end;
    let mut samples = Vec::with_capacity(records.len());
    for r in &records {
        let i = r.series.index_at(sample_time).ok_or_else(|| RunError::Config("sample time not observed".into()))?;
        let u = r.series.coefficient(mode).ok_or_else(|| RunError::Config(format!("mode {mode} not tracked")))?;
        samples.push((r.n, r.seed, u[i]));
    }
    let mut grouped: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut sets: Vec<ReplicaSet> = Vec::new();
    for r in &records {
        if grouped.last().map(|g| g.0) != Some(r.n) {
            grouped.push((r.n, Vec::new()));
            sets.push(ReplicaSet { n: r.n, series: Vec::new() });
        }
        let i = r.series.index_at(sample_time).unwrap();
        grouped.last_mut().unwrap().1.push(r.series.coefficient(mode).unwrap()[i]);
        sets.last_mut().unwrap().series.push(r.series.clone());
    }
    let mut insufficient = Vec::new();
    let noise = match noise_scaling(&grouped) {
        Ok(fit) => Some(fit),
        Err(abwalk_core::Error::InsufficientData(why)) => {
            insufficient.push(format!("noise scaling: {why}"));
            None
        }
        Err(e) => return Err(e.into()),
    };
    let qv = match qv_scaling(&sets, mode, lambda, Growth::HalfIntensity) {
        Ok(r) => Some(r),
        Err(abwalk_core::Error::InsufficientData(why)) => {
            insufficient.push(format!("quadratic variation: {why}"));
            None
        }
        Err(e) => return Err(e.into()),
    };
    let slope_in_range = match (settings.slope_range, &noise) {
        (Some([lo, hi]), Some(fit)) => Some(fit.slope >= lo && fit.slope <= hi),
        (Some(_), None) => Some(false),
        _ => None,
    };
    Ok(SweepReport {
        mode,
        lambda,
        sample_time,
        n_values: grouped.iter().map(|g| g.0).collect(),
        replicas: settings.replicas,
        samples,
        noise,
        qv,
        insufficient,
        resumed,
        slope_in_range,
    })
}
