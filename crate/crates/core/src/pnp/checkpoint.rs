//! State dumps: one binary field file per field plus `manifest.json`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SystemState;
use crate::error::{Error, Result};
use crate::grid::{read_field, write_field, DumpFormat, ScalarField};

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    iteration: usize,
    species: usize,
    transport: bool,
    files: Vec<String>,
}

fn names(species: usize, transport: bool) -> Vec<String> {
    let mut out = vec!["u.bin".to_string()];
    for prefix in ["rho", "mu_id", "mu_ex"] {
        out.extend((0..species).map(|i| format!("{prefix}_{i}.bin")));
    }
    if transport {
        for prefix in ["rho_bar", "dbar"] {
            out.extend((0..species).map(|i| format!("{prefix}_{i}.bin")));
        }
    }
    out
}

pub fn write_checkpoint(dir: &Path, state: &SystemState) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let n = state.rho.len();
    let transport = state.rho_bar.len() == n && n > 0;
    let files = names(n, transport);
    let mut fields: Vec<&ScalarField> = vec![&state.u];
    fields.extend(state.rho.iter());
    fields.extend(state.mu_id.iter());
    fields.extend(state.mu_ex.iter());
    if transport {
        fields.extend(state.rho_bar.iter());
        fields.extend(state.dbar.iter());
    }
    for (name, f) in files.iter().zip(fields) {
        write_field(&dir.join(name), f, DumpFormat::Binary)?;
    }
    let manifest = Manifest {
        iteration: state.iteration,
        species: n,
        transport,
        files,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

pub fn read_checkpoint(dir: &Path) -> Result<SystemState> {
    let text = std::fs::read_to_string(dir.join("manifest.json"))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
    if m.files != names(m.species, m.transport) {
        return Err(Error::Format("checkpoint manifest lists unexpected files".into()));
    }
    let mut fields = m
        .files
        .iter()
        .map(|f| read_field(&dir.join(f), DumpFormat::Binary))
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    let u = fields.next().unwrap();
    let mut take = |n: usize| -> Result<Vec<ScalarField>> {
        let v: Vec<ScalarField> = fields.by_ref().take(n).collect();
        for f in &v {
            u.grid().check_same(f.grid())?;
        }
        Ok(v)
    };
    let n = m.species;
    let rho = take(n)?;
    let mu_id = take(n)?;
    let mu_ex = take(n)?;
    let (rho_bar, dbar) = if m.transport { (take(n)?, take(n)?) } else { (Vec::new(), Vec::new()) };
    Ok(SystemState {
        u,
        rho,
        mu_id,
        mu_ex,
        rho_bar,
        dbar,
        iteration: m.iteration,
    })
}
