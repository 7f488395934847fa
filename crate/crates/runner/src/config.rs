//! Run configuration: a TOML document with `[domain]`, `[lattice]`,
//! `[dynamics]`, `[observables]` and `[output]` tables, plus an optional
//! `[sweep]` table. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use abwalk_core::analysis::{Growth, DEFAULT_C0};
use abwalk_core::dynamics::SimParams;
use abwalk_core::{build_lattice, DomainSpec64, Lattice64, TimeScale};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RunError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub lattice: LatticeConfig,
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub observables: ObservablesConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainConfig {
    Rectangle { sides: Vec<f64> },
    Disc { center: Vec<f64>, radius: f64 },
    Ellipse { center: Vec<f64>, semi_axes: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub epsilon: f64,
    #[serde(default)]
    pub time_scale: TimeScale,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    /// Particles per species.
    pub n: usize,
    pub t_end: f64,
    pub seed: u64,
    pub initial: InitialCondition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_events: Option<u64>,
    #[serde(default)]
    pub general_path: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// Sign split of `prod_i cos(m_i pi x_i / a_i)` on a rectangle; `l` is
    /// the third index in 3D.
    Eigenmode {
        m: u32,
        n: u32,
        #[serde(default)]
        l: u32,
    },
    /// Sign split of the numeric Neumann eigenfunction with this index, on
    /// any domain.
    NumericMode { index: usize },
    /// `+` below the midpoint of `axis`, `-` above it.
    HalfSplit { axis: usize },
    /// Signed density read from a grid file, relative paths resolved
    /// against the configuration file.
    GridFile { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservablesConfig {
    /// Observation times; when empty, multiples of `sample_dt` up to `t_end`.
    #[serde(default)]
    pub sample_times: Vec<f64>,
    #[serde(default = "default_dt")]
    pub sample_dt: f64,
    /// Tracked Fourier modes (indices into the numeric basis, 0 = constant).
    #[serde(default = "default_modes")]
    pub modes: Vec<usize>,
    /// Eigenpairs computed for the basis, at least `max(modes) + 1`.
    #[serde(default = "default_eigenpairs")]
    pub eigenpairs: usize,
    /// Block side for the comparison and segregation statistics.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_c0")]
    pub c0: f64,
    #[serde(default)]
    pub growth: Growth,
}

fn default_dt() -> f64 {
    0.025
}

fn default_modes() -> Vec<usize> {
    vec![1]
}

fn default_eigenpairs() -> usize {
    6
}

fn default_delta() -> f64 {
    0.125
}

fn default_c0() -> f64 {
    DEFAULT_C0
}

impl Default for ObservablesConfig {
    fn default() -> Self {
        ObservablesConfig {
            sample_times: Vec::new(),
            sample_dt: default_dt(),
            modes: default_modes(),
            eigenpairs: default_eigenpairs(),
            delta: default_delta(),
            c0: default_c0(),
            growth: Growth::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "yes")]
    pub snapshots: bool,
    #[serde(default)]
    pub events: bool,
    #[serde(default = "yes")]
    pub svg: bool,
    /// Heatmap times for `compare`; the last observation when empty.
    #[serde(default)]
    pub svg_times: Vec<f64>,
}

fn yes() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { snapshots: true, events: false, svg: true, svg_times: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub n_values: Vec<usize>,
    pub replicas: usize,
    /// Replica `i` uses seed `base_seed + i`; defaults to `dynamics.seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_seed: Option<u64>,
    /// Mode whose coefficient variance is fitted.
    #[serde(default = "one")]
    pub mode: usize,
    /// Fail the sweep when the fitted slope leaves this interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_range: Option<[f64; 2]>,
}

fn one() -> usize {
    1
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML configuration, or the configuration embedded in a run
    /// manifest when the file is JSON. Relative grid-file paths are made
    /// absolute against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            let manifest: crate::manifest::RunManifest = serde_json::from_str(&text)
                .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
            manifest.config.validate()?;
            manifest.config
        } else {
            Self::from_toml(&text).map_err(|e| match e {
                RunError::Config(msg) => RunError::Config(format!("{}: {msg}", path.display())),
                other => other,
            })?
        };
        if let InitialCondition::GridFile { path: grid } = &mut cfg.dynamics.initial {
            if grid.is_relative() {
                *grid = path.parent().unwrap_or(Path::new(".")).join(&*grid);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(RunError::Config(msg));
        let dim = self.domain.dim();
        if !(2..=3).contains(&dim) {
            return bad(format!("domain: dimension must be 2 or 3, got {dim}"));
        }
        if !(self.lattice.epsilon > 0.0) || !self.lattice.epsilon.is_finite() {
            return bad(format!("lattice.epsilon must be positive, got {}", self.lattice.epsilon));
        }
        if self.dynamics.n == 0 {
            return bad("dynamics.n must be at least 1".into());
        }
        if !(self.dynamics.t_end >= 0.0) || !self.dynamics.t_end.is_finite() {
            return bad(format!("dynamics.t_end must be finite and nonnegative, got {}", self.dynamics.t_end));
        }
        match &self.dynamics.initial {
            InitialCondition::HalfSplit { axis } if *axis >= dim => {
                return bad(format!("dynamics.initial.axis {axis} out of range for dimension {dim}"));
            }
            InitialCondition::Eigenmode { m, n, l } => {
                if !matches!(self.domain, DomainConfig::Rectangle { .. }) {
                    return bad("dynamics.initial: eigenmode needs a rectangle; use numeric_mode".into());
                }
                if *m == 0 && *n == 0 && *l == 0 {
                    return bad("dynamics.initial: eigenmode (0, 0) has no sign change".into());
                }
                if dim == 2 && *l != 0 {
                    return bad("dynamics.initial.l is only meaningful in 3D".into());
                }
            }
            InitialCondition::NumericMode { index } if *index == 0 => {
                return bad("dynamics.initial.index must be at least 1".into());
            }
            _ => {}
        }
        let obs = &self.observables;
        if obs.sample_times.is_empty() && !(obs.sample_dt > 0.0) {
            return bad(format!("observables.sample_dt must be positive, got {}", obs.sample_dt));
        }
        if let Some(&t) = obs.sample_times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return bad(format!("observables.sample_times contains {t}"));
        }
        if obs.eigenpairs < 1 {
            return bad("observables.eigenpairs must be at least 1".into());
        }
        let needed = self.basis_size();
        if needed > obs.eigenpairs {
            return bad(format!("observables.eigenpairs is {} but mode {} is requested", obs.eigenpairs, needed - 1));
        }
        if !(obs.delta > self.lattice.epsilon) {
            return bad(format!("observables.delta {} must exceed epsilon {}", obs.delta, self.lattice.epsilon));
        }
        if let Some(s) = &self.sweep {
            if s.n_values.is_empty() || s.n_values.contains(&0) {
                return bad("sweep.n_values must be nonempty and positive".into());
            }
            if s.replicas == 0 {
                return bad("sweep.replicas must be at least 1".into());
            }
        }
        Ok(())
    }

    /// Eigenpairs needed for the tracked modes and the sweep mode.
    pub fn basis_size(&self) -> usize {
        let mut top = self.observables.modes.iter().copied().max().unwrap_or(0);
        if let Some(s) = &self.sweep {
            top = top.max(s.mode);
        }
        if let InitialCondition::NumericMode { index } = self.dynamics.initial {
            top = top.max(index);
        }
        top + 1
    }

    pub fn domain_spec(&self) -> Result<DomainSpec64> {
        Ok(match &self.domain {
            DomainConfig::Rectangle { sides } => DomainSpec64::rectangle(sides)?,
            DomainConfig::Disc { center, radius } => DomainSpec64::disc(center, *radius)?,
            DomainConfig::Ellipse { center, semi_axes } => DomainSpec64::ellipse(center, semi_axes)?,
        })
    }

    pub fn build_lattice(&self) -> Result<Lattice64> {
        Ok(build_lattice(&self.domain_spec()?, self.lattice.epsilon, self.lattice.time_scale)?)
    }

    /// Observation grid: the explicit times, or `k * sample_dt` for every
    /// `k` with `k * sample_dt <= t_end`, always including `0` and `t_end`.
    pub fn observation_times(&self) -> Vec<f64> {
        let t_end = self.dynamics.t_end;
        let mut times: Vec<f64> = if self.observables.sample_times.is_empty() {
            let dt = self.observables.sample_dt;
            let steps = (t_end / dt + 1e-9).floor() as u64;
            (0..=steps).map(|k| k as f64 * dt).collect()
        } else {
            self.observables.sample_times.iter().copied().filter(|&t| t <= t_end).collect()
        };
        times.push(0.0);
        times.push(t_end);
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
        times
    }

    pub fn sim_params(&self) -> SimParams {
        SimParams {
            max_events: self.dynamics.max_events,
            general_path: self.dynamics.general_path,
            record_events: false,
            ..SimParams::new(self.dynamics.t_end, self.dynamics.seed, self.observation_times())
        }
    }
}

impl DomainConfig {
    pub fn dim(&self) -> usize {
        match self {
            DomainConfig::Rectangle { sides } => sides.len(),
            DomainConfig::Disc { center, .. } => center.len(),
            DomainConfig::Ellipse { center, .. } => center.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SQUARE: &str = r#"
[domain]
shape = "rectangle"
sides = [1.0, 1.0]

[lattice]
epsilon = 0.0625
time_scale = "laplacian"

[dynamics]
n = 64
t_end = 0.1
seed = 7
initial = { preset = "eigenmode", m = 1, n = 0 }
"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = RunConfig::from_toml(SQUARE).unwrap();
        assert_eq!(cfg.observables.modes, vec![1]);
        assert_eq!(cfg.observables.c0, 0.1);
        assert!(cfg.output.snapshots);
        assert_eq!(cfg.lattice.time_scale, TimeScale::Laplacian);
        let times = cfg.observation_times();
        assert_eq!(times.len(), 5);
        assert_eq!(*times.last().unwrap(), 0.1);
    }

    #[test]
    fn unknown_keys_are_named() {
        let text = SQUARE.replace("seed = 7", "seed = 7\nsede = 8");
        let err = RunConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("sede"), "{err}");
        assert_eq!(err.exit_code(), 2);

        let text = SQUARE.replace("m = 1, n = 0", "m = 1, n = 0, q = 2");
        assert!(RunConfig::from_toml(&text).unwrap_err().to_string().contains('q'));
    }

    #[test]
    fn missing_keys_are_named() {
        let text = SQUARE.replace("epsilon = 0.0625\n", "");
        let err = RunConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("epsilon"), "{err}");
    }

    #[test]
    fn inconsistent_values_are_rejected() {
        for (from, to) in [
            ("epsilon = 0.0625", "epsilon = -1.0"),
            ("n = 64", "n = 0"),
            ("m = 1, n = 0", "m = 0, n = 0"),
            ("preset = \"eigenmode\", m = 1, n = 0", "preset = \"half_split\", axis = 2"),
        ] {
            let text = SQUARE.replace(from, to);
            assert!(matches!(RunConfig::from_toml(&text), Err(RunError::Config(_))), "{to}");
        }
        let text = format!("{SQUARE}\n[observables]\nmodes = [7]\n");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn explicit_times_are_clipped_and_bracketed() {
        let text = format!("{SQUARE}\n[observables]\nsample_times = [0.05, 0.5]\n");
        let cfg = RunConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.observation_times(), vec![0.0, 0.05, 0.1]);
    }
}
