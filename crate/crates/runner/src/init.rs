//! Initial densities for the configuration presets.

use std::f64::consts::PI;
use std::fs::File;
use std::io::BufReader;

use abwalk_core::dynamics::{init_from_density, Configuration};
use abwalk_core::io::Grid;
use abwalk_core::spectral::eig_neumann;
use abwalk_core::Lattice64;

use crate::config::{DomainConfig, InitialCondition, RunConfig};
use crate::error::{Result, RunError};

/// The signed density the particles are apportioned from. Values within
/// `1e-12` of the largest magnitude are zeroed, so nodal sites of a cosine
/// stay empty.
pub fn initial_density(cfg: &RunConfig, lattice: &Lattice64) -> Result<Vec<f64>> {
    let mut rho: Vec<f64> = match &cfg.dynamics.initial {
        InitialCondition::Eigenmode { m, n, l } => {
            let DomainConfig::Rectangle { sides } = &cfg.domain else {
                return Err(RunError::Config("eigenmode needs a rectangle".into()));
            };
            let idx = [*m, *n, *l];
            (0..lattice.len())
                .map(|x| {
                    lattice
                        .position(x)
                        .iter()
                        .zip(sides)
                        .zip(idx)
                        .map(|((&p, &a), k)| (PI * f64::from(k) * p / a).cos())
                        .product()
                })
                .collect()
        }
        InitialCondition::NumericMode { index } => {
            let basis = eig_neumann(lattice, index + 1)?;
            basis.phi(*index).to_vec()
        }
        InitialCondition::HalfSplit { axis } => {
            let (lo, hi) = lattice.coord_bounds();
            // twice the midpoint, in lattice units, keeps the comparison exact
            let mid2 = lo[*axis] + hi[*axis];
            (0..lattice.len())
                .map(|x| match (2 * lattice.coords(x)[*axis]).cmp(&mid2) {
                    std::cmp::Ordering::Less => 1.0,
                    std::cmp::Ordering::Greater => -1.0,
                    std::cmp::Ordering::Equal => 0.0,
                })
                .collect()
        }
        InitialCondition::GridFile { path } => {
            let file = File::open(path).map_err(|e| RunError::io(path, e))?;
            let grid = Grid::<f64>::read(BufReader::new(file))?;
            if grid.values.len() != lattice.len() {
                return Err(RunError::Config(format!(
                    "{}: grid has {} sites, lattice has {}",
                    path.display(),
                    grid.values.len(),
                    lattice.len()
                )));
            }
            grid.values
        }
    };
    let scale = rho.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    rho.iter_mut().filter(|v| v.abs() <= 1e-12 * scale).for_each(|v| *v = 0.0);
    Ok(rho)
}

pub fn initial_configuration(cfg: &RunConfig, lattice: &Lattice64) -> Result<Configuration> {
    let rho = initial_density(cfg, lattice)?;
    Ok(init_from_density(lattice, &rho, cfg.dynamics.n)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(initial: &str) -> RunConfig {
        RunConfig::from_toml(&format!(
            "[domain]\nshape = \"rectangle\"\nsides = [1.0, 1.0]\n[lattice]\nepsilon = 0.125\n\
             [dynamics]\nn = 40\nt_end = 0.0\nseed = 1\ninitial = {initial}\n[observables]\ndelta = 0.5\n"
        ))
        .unwrap()
    }

    #[test]
    fn cosine_preset_leaves_the_nodal_line_empty() {
        let cfg = config("{ preset = \"eigenmode\", m = 1, n = 0 }");
        let l = cfg.build_lattice().unwrap();
        let c = initial_configuration(&cfg, &l).unwrap();
        for x in 0..l.len() {
            let k = l.coords(x)[0];
            assert_eq!(c.eta()[x].signum(), (4 - k).signum() as i32, "{k}");
        }
    }

    #[test]
    fn half_split_is_antisymmetric() {
        let cfg = config("{ preset = \"half_split\", axis = 1 }");
        let l = cfg.build_lattice().unwrap();
        let rho = initial_density(&cfg, &l).unwrap();
        for x in 0..l.len() {
            let k = l.coords(x);
            let mirror = l.index_of(&[k[0], 8 - k[1]]).unwrap();
            assert_eq!(rho[x], -rho[mirror]);
        }
    }

    #[test]
    fn numeric_mode_matches_cosine_signs() {
        // the first mode of a square is degenerate, so either axis may carry it
        let cfg = config("{ preset = \"numeric_mode\", index = 1 }");
        let l = cfg.build_lattice().unwrap();
        let rho = initial_density(&cfg, &l).unwrap();
        let s = rho[l.index_of(&[0, 0]).unwrap()].signum() as i64;
        let matches = |axis: usize| {
            (0..l.len()).all(|x| {
                let k = l.coords(x)[axis];
                rho[x].signum() as i64 * (k != 4) as i64 * (rho[x] != 0.0) as i64 == s * (4 - k).signum()
            })
        };
        assert!(matches(0) || matches(1));
    }

    #[test]
    fn missing_grid_file_is_reported() {
        let cfg = config("{ preset = \"grid_file\", path = \"/nonexistent/rho.txt\" }");
        let l = cfg.build_lattice().unwrap();
        let err = initial_density(&cfg, &l).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/rho.txt"));
    }
}
