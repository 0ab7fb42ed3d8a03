//! Run report and field dumps written by the CLI.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::SimulationConfig;
use crate::error::{Error, Result};
use crate::grid::{write_field, DumpFormat, ScalarField};
use crate::pnp::{ConvergenceReport, Problem, SystemState};
use crate::transport::{compute_flux, RunSummary};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything needed to audit or repeat one solve: the resolved config,
/// the observables and the per-iteration history with solver statistics
/// and stage timings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SolveReport {
    pub version: String,
    pub config: SimulationConfig,
    pub dims: [usize; 3],
    pub converged: bool,
    pub sigma_s_per_cm: f64,
    pub f_sh_ev: f64,
    pub plane_flow_spread: f64,
    pub convergence: ConvergenceReport,
}

impl SolveReport {
    pub fn new(cfg: &SimulationConfig, p: &Problem, s: RunSummary) -> Self {
        Self {
            version: VERSION.to_string(),
            config: cfg.clone(),
            dims: p.grid.dims(),
            converged: s.report.converged,
            sigma_s_per_cm: s.sigma_s_per_cm,
            f_sh_ev: s.f_sh_ev,
            plane_flow_spread: s.plane_flow_spread,
            convergence: s.report,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Writes `u`, every species' density, potentials and flux components, and
/// the site density into `dir`.
pub fn write_fields(dir: &Path, p: &Problem, state: &SystemState, format: DumpFormat) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let ext = match format {
        DumpFormat::Binary => "bin",
        DumpFormat::Csv => "csv",
    };
    let mut named: Vec<(String, &ScalarField)> = vec![("u".into(), &state.u), ("sites".into(), &p.site_density)];
    for (i, s) in p.species.iter().enumerate() {
        named.push((format!("rho_{}", s.name), &state.rho[i]));
        named.push((format!("mu_id_{}", s.name), &state.mu_id[i]));
        named.push((format!("mu_ex_{}", s.name), &state.mu_ex[i]));
    }
    let flux = if state.rho_bar.len() == p.species.len() {
        Some(compute_flux(p, state)?)
    } else {
        None
    };
    if let Some(f) = &flux {
        for (s, v) in p.species.iter().zip(&f.species) {
            for (axis, c) in ["x", "y", "z"].iter().zip(v.components()) {
                named.push((format!("flux_{}_{axis}", s.name), c));
            }
        }
    }
    let mut written = Vec::with_capacity(named.len());
    for (name, field) in named {
        let file = format!("{name}.{ext}");
        write_field(&dir.join(&file), field, format)?;
        written.push(file);
    }
    Ok(written)
}
