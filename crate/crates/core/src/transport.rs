//! Fluxes, conductivity and the parameter sweeps built on full solves.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::SimulationConfig;
use crate::constants::conductivity_to_s_per_cm;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, VectorField};
use crate::pnp::{bulk_state, gummel_step, plane_flows, run_to_convergence, ConvergenceReport, Problem, StageTimes, SystemState};

/// Node-averaged particle flux density of every species [nm^-2 s^-1].
#[derive(Debug, Clone)]
pub struct FluxField {
    pub species: Vec<VectorField>,
}

/// Face fluxes `sign * T (rho_bar_m - rho_bar_n) / area` of the last
/// transport solve, averaged from the two faces adjacent to each node (one
/// on the box boundary).
pub fn compute_flux(p: &Problem, state: &SystemState) -> Result<FluxField> {
    if state.rho_bar.len() != p.species.len() {
        return Err(Error::InvalidArgument("state carries no transport solution".into()));
    }
    let g = p.grid;
    let dims = g.dims();
    let h = g.spacing();
    let strides = [dims[1] * dims[2], dims[2], 1];
    let sign = p.functional.settings().ideal_sign.factor();
    let mut out = Vec::with_capacity(p.species.len());
    for i in 0..p.species.len() {
        let rb = state.rho_bar[i].values();
        let d = state.dbar[i].values();
        let mut comps = [ScalarField::zeros(g), ScalarField::zeros(g), ScalarField::zeros(g)];
        for (a, comp) in comps.iter_mut().enumerate() {
            let v = comp.values_mut();
            for m in 0..g.len() {
                let (x, y, z) = g.coords(m);
                let c = [x, y, z][a];
                let face = |lo: usize| {
                    let hi = lo + strides[a];
                    let dm = 2.0 * d[lo] * d[hi] / (d[lo] + d[hi]);
                    sign * dm * (rb[lo] - rb[hi]) / h[a]
                };
                let mut s = 0.0;
                let mut n = 0.0;
                if c + 1 < dims[a] {
                    s += face(m);
                    n += 1.0;
                }
                if c > 0 {
                    s += face(m - strides[a]);
                    n += 1.0;
                }
                v[m] = s / n;
            }
        }
        let [x, y, z] = comps;
        out.push(VectorField::new(x, y, z)?);
    }
    Ok(FluxField { species: out })
}

/// Net charge flow through each y-plane of faces [e/s], `+y` positive.
pub fn charge_plane_flows(p: &Problem, state: &SystemState) -> Result<Vec<f64>> {
    let mut total = vec![0.0; p.grid.ny - 1];
    for (i, s) in p.species.iter().enumerate() {
        for (t, f) in total.iter_mut().zip(plane_flows(p, state, i)?) {
            *t += s.charge() * f;
        }
    }
    Ok(total)
}

/// `sigma = (1 / (E_y L_y)) int J_b dy` with `E_y = V / L_y` and `J_b` the
/// cross-section average of the charge flux. The applied field points along
/// `+y`, so the current is along `-y`; the result is positive for an ohmic
/// response [S/cm].
pub fn conductivity(p: &Problem, state: &SystemState) -> Result<f64> {
    if p.bias == 0.0 {
        return Err(Error::InvalidArgument("conductivity needs a nonzero bias".into()));
    }
    let g = p.grid;
    let flows = charge_plane_flows(p, state)?;
    let area = g.lx * g.lz;
    // J_b at the face planes, integrated over y with the face spacing
    let integral: f64 = flows.iter().map(|f| f / area * g.dy()).sum();
    let e_field = p.bias / g.ly;
    Ok(conductivity_to_s_per_cm(-integral / (e_field * g.ly)))
}

/// Largest deviation of the plane flows of any species from their mean,
/// relative to that mean.
pub fn plane_flow_spread(p: &Problem, state: &SystemState) -> Result<f64> {
    let mut worst = 0.0_f64;
    for i in 0..p.species.len() {
        let f = plane_flows(p, state, i)?;
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        if mean == 0.0 {
            continue;
        }
        for v in &f {
            worst = worst.max((v - mean).abs() / mean.abs());
        }
    }
    Ok(worst)
}

/// Short-range energy of the mobile ions with the sites [eV].
pub fn short_range_energy(p: &Problem, state: &SystemState) -> Result<f64> {
    p.functional.free_energy_short_range(&state.rho)
}

/// Observables of one converged (or capped) solve.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunSummary {
    pub sigma_s_per_cm: f64,
    pub f_sh_ev: f64,
    pub plane_flow_spread: f64,
    pub nodes: usize,
    pub report: ConvergenceReport,
}

pub fn solve_config(cfg: &SimulationConfig) -> Result<(Problem, SystemState, RunSummary)> {
    let p = cfg.problem()?;
    let out = run_to_convergence(&p, &cfg.gummel())?;
    let summary = RunSummary {
        sigma_s_per_cm: conductivity(&p, &out.state)?,
        f_sh_ev: short_range_energy(&p, &out.state)?,
        plane_flow_spread: plane_flow_spread(&p, &out.state)?,
        nodes: p.grid.len(),
        report: out.report,
    };
    Ok((p, out.state, summary))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SweepRow {
    pub axis: f64,
    pub sigma_s_per_cm: f64,
    pub f_sh_ev: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SweepResult {
    pub axis_name: String,
    pub rows: Vec<SweepRow>,
}

fn sweep(cfg: &SimulationConfig, axis_name: &str, values: &[f64], set: impl Fn(&mut SimulationConfig, f64)) -> Result<SweepResult> {
    let mut rows = Vec::with_capacity(values.len());
    for &v in values {
        let mut c = cfg.clone();
        set(&mut c, v);
        let t = Instant::now();
        let (_, _, s) = solve_config(&c)?;
        log::info!("{axis_name} = {v}: sigma {:.6e} S/cm, F_sh {:.6e} eV", s.sigma_s_per_cm, s.f_sh_ev);
        rows.push(SweepRow {
            axis: v,
            sigma_s_per_cm: s.sigma_s_per_cm,
            f_sh_ev: s.f_sh_ev,
            iterations: s.report.iterations,
            converged: s.report.converged,
            seconds: t.elapsed().as_secs_f64(),
        });
    }
    rows.sort_by(|a, b| a.axis.total_cmp(&b.axis));
    Ok(SweepResult {
        axis_name: axis_name.into(),
        rows,
    })
}

/// Full solve per temperature; every temperature-dependent quantity is
/// rebuilt from the config.
pub fn temperature_sweep(cfg: &SimulationConfig, temperatures: &[f64]) -> Result<SweepResult> {
    sweep(cfg, "temperature_K", temperatures, |c, t| c.temperature = t)
}

/// Full solve per number of cells along the transport direction.
pub fn size_sweep(cfg: &SimulationConfig, cells: &[usize]) -> Result<SweepResult> {
    let v: Vec<f64> = cells.iter().map(|&m| m as f64).collect();
    sweep(cfg, "cells_y", &v, |c, m| c.cells_y = m as usize)
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("axis,sigma_S_per_cm,F_sh_eV,iterations,seconds\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.12e},{:.12e},{},{:.3}\n",
                r.axis, r.sigma_s_per_cm, r.f_sh_ev, r.iterations, r.seconds
            ));
        }
        s
    }

    /// Writes `<stem>.csv` and `<stem>.gp` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        let mut f = std::fs::File::create(dir.join(format!("{stem}.gp")))?;
        writeln!(f, "set datafile separator ','")?;
        writeln!(f, "set key autotitle columnhead")?;
        writeln!(f, "set xlabel '{}'", self.axis_name)?;
        writeln!(f, "set terminal pngcairo size 900,400")?;
        writeln!(f, "set output '{stem}.png'")?;
        writeln!(f, "set multiplot layout 1,2")?;
        writeln!(f, "set ylabel 'sigma [S/cm]'")?;
        writeln!(f, "plot '{stem}.csv' using 1:2 with linespoints")?;
        writeln!(f, "set ylabel 'F_sh [eV]'")?;
        writeln!(f, "plot '{stem}.csv' using 1:3 with linespoints")?;
        writeln!(f, "unset multiplot")?;
        Ok(())
    }
}

/// One refinement level of the complexity probe.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ComplexityRow {
    pub resolution: usize,
    pub nodes: usize,
    pub total_seconds: f64,
    pub fft_seconds: f64,
    pub solver_seconds: f64,
    pub poisson_cycles: usize,
    pub transport_cycles: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ComplexityTable {
    pub rows: Vec<ComplexityRow>,
    /// Slope of `log t_fft` against `log (N log N)`.
    pub fft_slope: f64,
    pub total_slope: f64,
}

/// Least-squares slope of `y` against `x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Times `sweeps` Gummel sweeps from the bulk seed at each resolution, so
/// every level does the same number of potential evaluations and solves.
pub fn complexity_probe(cfg: &SimulationConfig, resolutions: &[usize], sweeps: usize) -> Result<ComplexityTable> {
    if resolutions.len() < 3 {
        return Err(Error::InvalidArgument("complexity probe needs at least three levels".into()));
    }
    if sweeps == 0 {
        return Err(Error::InvalidArgument("complexity probe needs at least one sweep".into()));
    }
    let mut rows = Vec::new();
    for &r in resolutions {
        let mut c = cfg.clone();
        c.resolution = r;
        let p = c.problem()?;
        let settings = c.gummel();
        let clock = p.functional.fft_clock();
        let t = Instant::now();
        clock.reset();
        let mut state = bulk_state(&p)?;
        let mut times = StageTimes::default();
        let mut last = None;
        for _ in 0..sweeps {
            let (next, _, ps, ns) = gummel_step(&p, &state, &settings, &mut times)?;
            state = next;
            last = Some((ps, ns));
        }
        let (ps, ns) = last.expect("at least one sweep");
        log::info!("resolution {r}: {} nodes, {:.3} s", p.grid.len(), t.elapsed().as_secs_f64());
        rows.push(ComplexityRow {
            resolution: r,
            nodes: p.grid.len(),
            total_seconds: t.elapsed().as_secs_f64(),
            fft_seconds: clock.seconds(),
            solver_seconds: times.poisson + times.transport,
            poisson_cycles: ps.cycles,
            transport_cycles: ns.iter().map(|s| s.cycles).collect(),
        });
    }
    rows.sort_by_key(|r| r.nodes);
    let nlogn: Vec<f64> = rows.iter().map(|r| r.nodes as f64 * (r.nodes as f64).ln()).collect();
    let fft: Vec<f64> = rows.iter().map(|r| r.fft_seconds).collect();
    let tot: Vec<f64> = rows.iter().map(|r| r.total_seconds).collect();
    Ok(ComplexityTable {
        fft_slope: loglog_slope(&nlogn, &fft),
        total_slope: loglog_slope(&nlogn, &tot),
        rows,
    })
}

impl ComplexityTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("resolution,nodes,total_seconds,fft_seconds,solver_seconds,poisson_cycles,transport_cycles\n");
        for r in &self.rows {
            let tc: Vec<String> = r.transport_cycles.iter().map(|c| c.to_string()).collect();
            s.push_str(&format!(
                "{},{},{:.4},{:.4},{:.4},{},{}\n",
                r.resolution,
                r.nodes,
                r.total_seconds,
                r.fft_seconds,
                r.solver_seconds,
                r.poisson_cycles,
                tc.join(";")
            ));
        }
        s
    }

    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        let mut f = std::fs::File::create(dir.join(format!("{stem}.gp")))?;
        writeln!(f, "set datafile separator ','")?;
        writeln!(f, "set logscale xy")?;
        writeln!(f, "set xlabel 'nodes'")?;
        writeln!(f, "set ylabel 'seconds'")?;
        writeln!(f, "set terminal pngcairo size 600,400")?;
        writeln!(f, "set output '{stem}.png'")?;
        writeln!(f, "plot '{stem}.csv' every ::1 using 2:4 with linespoints title 'FFT', \\")?;
        writeln!(f, "     '{stem}.csv' every ::1 using 2:5 with linespoints title 'solver', \\")?;
        writeln!(f, "     '{stem}.csv' every ::1 using 2:($4*$2*log($2)/($2*log($2))) with lines dt 2 title 'N log N'")?;
        Ok(())
    }
}

/// Cross-section `y = const` of a field as `x z value` rows.
pub fn slice_y(f: &ScalarField, j: usize) -> Vec<[f64; 3]> {
    let g: &GridSpec = f.grid();
    let mut out = Vec::with_capacity(g.nx * g.nz);
    for i in 0..g.nx {
        for k in 0..g.nz {
            out.push([i as f64 * g.dx(), k as f64 * g.dz(), f.get(i, j, k)]);
        }
    }
    out
}
