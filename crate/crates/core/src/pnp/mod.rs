//! Self-consistent steady state: equilibrium start, then Gummel sweeps
//! alternating the Poisson solve, the excess potentials and one transformed
//! Nernst-Planck solve per mobile species.
//!
//! With sign `s` of the ideal term (`+1` conventional), the drift exponent is
//! `chi = s (q u + beta mu_ex + iota)` where `iota` is the activity part of the
//! ideal potential, and the flux is `J = -s D exp(-chi) grad(rho exp(chi))`.
//! The density-gradient half of the ideal potential is the diffusion term
//! itself. Reservoirs fix `rho_bar` on the y-faces to the value a bulk fluid
//! at the face potential would have.

mod checkpoint;

pub use checkpoint::{read_checkpoint, write_checkpoint};

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cdft::{Functional, FunctionalSettings, SpeciesSpec, SquareWellSpec, Thermo};
use crate::constants::CM2_PER_S_TO_NM2_PER_S;
use crate::elliptic::{assemble_np, assemble_poisson, solve, MgSettings, SolveStats, StencilOperator, EXPONENT_CLAMP};
use crate::error::{Error, Result};
use crate::grid::{BoundaryClass, GridSpec, ScalarField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GummelSettings {
    /// Relaxation of the potential update.
    pub lambda_u: f64,
    /// Relaxation of the density update.
    pub lambda_rho: f64,
    /// Density relaxation of the equilibrium iteration.
    pub lambda_eq: f64,
    /// Absolute max-norm threshold on the reduced potential.
    pub tol_u: f64,
    /// Max-norm threshold on density changes relative to the bulk density.
    pub tol_rho: f64,
    pub max_iterations: usize,
    pub max_eq_iterations: usize,
    /// Relative residual of the transport solves; tighter than the Poisson
    /// default so plane fluxes balance to well below the report precision.
    pub np_tolerance: f64,
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for GummelSettings {
    fn default() -> Self {
        Self {
            lambda_u: 0.2,
            lambda_rho: 1.0,
            lambda_eq: 0.1,
            tol_u: 1e-6,
            tol_rho: 1e-5,
            max_iterations: 500,
            max_eq_iterations: 2000,
            np_tolerance: 1e-13,
            checkpoint_every: 0,
            checkpoint_dir: None,
        }
    }
}

impl GummelSettings {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_u", self.lambda_u),
            ("lambda_rho", self.lambda_rho),
            ("lambda_eq", self.lambda_eq),
        ] {
            if !(v >= 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.tol_u > 0.0 && self.tol_rho > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Everything fixed during one solve.
#[derive(Debug)]
pub struct Problem {
    pub grid: GridSpec,
    pub thermo: Thermo,
    pub species: Vec<SpeciesSpec>,
    /// Fixed surface charge on the z = 0 face [e/nm^2].
    pub surface_charge: f64,
    /// Applied potential at y = ly relative to y = 0 [V].
    pub bias: f64,
    pub functional: Functional,
    pub mg: MgSettings,
    /// Stationary site density summed over groups, for reporting [nm^-3].
    pub site_density: ScalarField,
    mu_hs_bulk: Vec<f64>,
    activity_ref: Vec<f64>,
}

impl Problem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: GridSpec,
        thermo: Thermo,
        species: Vec<SpeciesSpec>,
        wells: &[SquareWellSpec],
        site_density: &[ScalarField],
        settings: FunctionalSettings,
        surface_charge: f64,
        bias: f64,
        mg: MgSettings,
    ) -> Result<Self> {
        if species.iter().any(|s| !s.mobile) {
            return Err(Error::InvalidArgument("transport species must be mobile".into()));
        }
        if species.iter().any(|s| !(s.bulk_density > 0.0)) {
            return Err(Error::InvalidArgument("mobile species need a positive bulk density".into()));
        }
        let functional = Functional::new(&grid, thermo, &species, wells, site_density, settings)?;
        let mu_hs_bulk = functional.mu_hs_bulk()?;
        let activity_ref = functional.activity_reference();
        let mut total = ScalarField::zeros(grid);
        for s in site_density {
            total.axpy(1.0, s)?;
        }
        Ok(Self {
            grid,
            thermo,
            species,
            surface_charge,
            bias,
            functional,
            mg,
            site_density: total,
            mu_hs_bulk,
            activity_ref,
        })
    }

    fn sign(&self) -> f64 {
        self.functional.settings().ideal_sign.factor()
    }

    /// Reduced potential on the y = ly face.
    pub fn bias_reduced(&self) -> f64 {
        self.thermo.beta() * self.bias
    }

    fn potential_boundary(&self, biased: bool) -> BoundaryClass {
        let high = if biased { self.bias_reduced() } else { 0.0 };
        BoundaryClass::uniform(&self.grid, 0.0, high)
    }

    /// Drift exponent of a bulk fluid at reduced potential `u`.
    fn chi_reference(&self, i: usize, u: f64) -> f64 {
        let s = &self.species[i];
        self.sign() * (s.charge() * u + self.thermo.beta() * self.mu_hs_bulk[i] + self.activity_ref[i])
    }

    fn diffusion_nm(&self, i: usize) -> f64 {
        self.species[i].diffusion * CM2_PER_S_TO_NM2_PER_S
    }
}

/// The iterated unknowns.
#[derive(Debug, Clone)]
pub struct SystemState {
    pub u: ScalarField,
    pub rho: Vec<ScalarField>,
    pub mu_id: Vec<ScalarField>,
    pub mu_ex: Vec<ScalarField>,
    /// Last transport solution and its coefficient, one per species; empty
    /// before the first Gummel step.
    pub rho_bar: Vec<ScalarField>,
    pub dbar: Vec<ScalarField>,
    pub iteration: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct StepRecord {
    pub du: f64,
    pub drho: f64,
    pub poisson_cycles: usize,
    pub np_cycles: Vec<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct StageTimes {
    pub poisson: f64,
    pub potentials: f64,
    pub transport: f64,
    /// Part of `potentials` spent in FFT convolutions.
    pub fft: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub equilibrium_iterations: usize,
    pub iterations: usize,
    pub equilibrium_history: Vec<StepRecord>,
    pub history: Vec<StepRecord>,
    pub last_poisson: SolveStats,
    pub last_transport: Vec<SolveStats>,
    pub times: StageTimes,
    pub seconds: f64,
}

fn check_finite(stage: &str, f: &ScalarField) -> Result<()> {
    match f.first_non_finite() {
        Some(node) => Err(Error::NonFinite {
            stage: stage.to_string(),
            node,
        }),
        None => Ok(()),
    }
}

fn max_rel_change(a: &ScalarField, b: &ScalarField, scale: f64) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs() / scale))
}

struct Potentials {
    mu_id: Vec<ScalarField>,
    mu_ex: Vec<ScalarField>,
    iota: Vec<ScalarField>,
}

fn potentials(p: &Problem, rho: &[ScalarField], times: &mut StageTimes) -> Result<Potentials> {
    let t = Instant::now();
    let clock = p.functional.fft_clock();
    let before = clock.seconds();
    let mu_ex = p.functional.mu_excess_total(rho)?;
    let iota = p.functional.activity_drift(rho)?;
    let mu_id = (0..rho.len())
        .map(|i| p.functional.mu_ideal(i, rho))
        .collect::<Result<Vec<_>>>()?;
    for m in &mu_ex {
        check_finite("excess potential", m)?;
    }
    times.fft += clock.seconds() - before;
    times.potentials += t.elapsed().as_secs_f64();
    Ok(Potentials { mu_id, mu_ex, iota })
}

/// Drift exponent of species `i`, clipped to the Slotboom range.
fn chi(p: &Problem, i: usize, u: &ScalarField, pot: &Potentials) -> Result<ScalarField> {
    let q = p.species[i].charge();
    let beta = p.thermo.beta();
    let s = p.sign();
    let mut clipped = 0usize;
    let vals: Vec<f64> = u
        .values()
        .iter()
        .zip(pot.mu_ex[i].values())
        .zip(pot.iota[i].values())
        .map(|((u, m), a)| {
            let c = s * (q * u + beta * m + a);
            if c.abs() > EXPONENT_CLAMP {
                clipped += 1;
                c.clamp(-EXPONENT_CLAMP, EXPONENT_CLAMP)
            } else {
                c
            }
        })
        .collect();
    if clipped > 0 {
        log::warn!("drift exponent of {} clipped at {clipped} nodes", p.species[i].name);
    }
    ScalarField::from_vec(p.grid, vals)
}

/// Largest potential change of one inner Newton step.
const NEWTON_STEP_LIMIT: f64 = 2.0;
const MAX_NEWTON_STEPS: usize = 60;

/// Density `exp(log_pref - s q u)` of every species.
fn densities_at(p: &Problem, log_pref: &[ScalarField], u: &ScalarField) -> Result<Vec<ScalarField>> {
    let s = p.sign();
    log_pref
        .iter()
        .zip(&p.species)
        .map(|(lp, sp)| {
            let q = sp.charge();
            lp.zip_map(u, |a, u| (a - s * q * u).min(EXPONENT_CLAMP).exp())
        })
        .collect()
}

/// Poisson solve with every density written as `exp(log_pref - s q u)` and
/// the prefactors held fixed, i.e. the nonlinear Poisson problem of the
/// Gummel map. Newton on this scalar problem only; with the reversed sign
/// the linearised charge term would be anti-diffusive and a single linear
/// solve at the current densities is used instead.
fn solve_poisson(
    p: &Problem,
    log_pref: &[ScalarField],
    guess: &ScalarField,
    biased: bool,
    tol: f64,
) -> Result<(ScalarField, SolveStats)> {
    let bc = p.potential_boundary(biased);
    let pref = 4.0 * std::f64::consts::PI * p.thermo.bjerrum();
    let s = p.sign();
    let mut u = guess.clone();
    bc.impose(&mut u);
    let mut total = SolveStats::default();
    for _ in 0..MAX_NEWTON_STEPS {
        let rho = densities_at(p, log_pref, &u)?;
        let charge = p.functional.charge_density(&rho)?;
        let (u_new, stats) = if s > 0.0 {
            let mut react = ScalarField::zeros(p.grid);
            for (r, sp) in rho.iter().zip(&p.species) {
                react.axpy(pref * sp.charge().powi(2), r)?;
            }
            let extra = react.zip_map(&u, |r, u| r * u)?;
            let op = assemble_poisson(&p.thermo, &charge, p.surface_charge, Some(&react), Some(&extra), &bc)?;
            solve(&op, &u, &p.mg)?
        } else {
            let op = assemble_poisson(&p.thermo, &charge, p.surface_charge, None, None, &bc)?;
            solve(&op, &u, &p.mg)?
        };
        check_finite("poisson", &u_new)?;
        total.cycles += stats.cycles;
        total.seconds += stats.seconds;
        total.residual = stats.residual;
        total.levels = stats.levels;
        total.history.extend(stats.history);
        let step = crate::grid::max_abs_diff(&u_new, &u)?;
        u = u.zip_map(&u_new, |a, b| a + (b - a).clamp(-NEWTON_STEP_LIMIT, NEWTON_STEP_LIMIT))?;
        if step <= tol || s <= 0.0 {
            return Ok((u, total));
        }
    }
    Err(Error::SolverDiverged {
        cycles: total.cycles,
        residual: total.residual,
        history: total.history,
    })
}

/// Zero-flux state with equal boundary potentials: Picard iteration of the
/// Boltzmann-type closure, densities relaxed with `lambda_eq`. Each sweep
/// freezes the excess potentials at the current densities and solves the
/// Poisson problem with the closure inside it. Convergence is measured on
/// the unrelaxed density update.
pub fn equilibrium_init(p: &Problem, settings: &GummelSettings) -> Result<(SystemState, ConvergenceReport)> {
    settings.validate()?;
    let start = Instant::now();
    let g = p.grid;
    let zero = ScalarField::zeros(g);
    let mut report = ConvergenceReport::default();
    let mut rho: Vec<ScalarField> = p.species.iter().map(|s| ScalarField::constant(g, s.bulk_density)).collect();
    let mut u = ScalarField::zeros(g);
    let mut it = 0;
    loop {
        let pot = potentials(p, &rho, &mut report.times)?;
        let log_pref = (0..p.species.len())
            .map(|i| {
                let c0 = p.chi_reference(i, 0.0);
                let lb = p.species[i].bulk_density.ln();
                Ok(chi(p, i, &zero, &pot)?.map(|c| lb + c0 - c))
            })
            .collect::<Result<Vec<_>>>()?;
        let t = Instant::now();
        let (u_new, stats) = solve_poisson(p, &log_pref, &u, false, 1e-2 * settings.tol_u)?;
        report.times.poisson += t.elapsed().as_secs_f64();
        let du = crate::grid::max_abs_diff(&u_new, &u)?;
        u = u_new;
        let targets = densities_at(p, &log_pref, &u)?;
        let mut drho = 0.0_f64;
        for (i, target) in targets.into_iter().enumerate() {
            check_finite("equilibrium density", &target)?;
            let rb = p.species[i].bulk_density;
            drho = drho.max(max_rel_change(&target, &rho[i], rb));
            let lam = settings.lambda_eq;
            rho[i] = rho[i].zip_map(&target, |a, b| (1.0 - lam) * a + lam * b)?;
        }
        it += 1;
        log::debug!("equilibrium {it}: du {du:.3e} drho {drho:.3e} u [{:.3}, {:.3}]", u.min(), u.max());
        report.equilibrium_history.push(StepRecord {
            du,
            drho,
            poisson_cycles: stats.cycles,
            np_cycles: Vec::new(),
        });
        report.last_poisson = stats;
        if du <= settings.tol_u && drho <= settings.tol_rho {
            break;
        }
        if it >= settings.max_eq_iterations {
            return Err(Error::NotConverged(it));
        }
    }
    report.equilibrium_iterations = it;
    report.seconds = start.elapsed().as_secs_f64();
    let pot = potentials(p, &rho, &mut report.times)?;
    Ok((
        SystemState {
            u,
            rho,
            mu_id: pot.mu_id,
            mu_ex: pot.mu_ex,
            rho_bar: Vec::new(),
            dbar: Vec::new(),
            iteration: 0,
        },
        report,
    ))
}

/// Uniform bulk densities at zero potential, with their potentials; a
/// cheap seed of fixed cost for timing studies.
pub fn bulk_state(p: &Problem) -> Result<SystemState> {
    let rho: Vec<ScalarField> = p.species.iter().map(|s| ScalarField::constant(p.grid, s.bulk_density)).collect();
    let pot = potentials(p, &rho, &mut StageTimes::default())?;
    Ok(SystemState {
        u: ScalarField::zeros(p.grid),
        rho,
        mu_id: pot.mu_id,
        mu_ex: pot.mu_ex,
        rho_bar: Vec::new(),
        dbar: Vec::new(),
        iteration: 0,
    })
}

/// Transport operator of species `i` for exponent `chi` at potential `u`.
fn transport_operator(p: &Problem, i: usize, chi: &ScalarField) -> Result<(StencilOperator, ScalarField)> {
    let d = p.diffusion_nm(i);
    let dbar = chi.map(|c| d * (-c).exp());
    let rb = p.species[i].bulk_density;
    let low = rb * p.chi_reference(i, 0.0).exp();
    let high = rb * p.chi_reference(i, p.bias_reduced()).exp();
    let op = assemble_np(&dbar, &BoundaryClass::uniform(&p.grid, low, high))?;
    Ok((op, dbar))
}

/// One Gummel sweep; returns the new state and its max-norm changes.
pub fn gummel_step(
    p: &Problem,
    state: &SystemState,
    settings: &GummelSettings,
    times: &mut StageTimes,
) -> Result<(SystemState, StepRecord, SolveStats, Vec<SolveStats>)> {
    let t = Instant::now();
    // quasi-Fermi form: each density follows exp(-s q (u - u_old))
    let sg = p.sign();
    let log_pref = state
        .rho
        .iter()
        .zip(&p.species)
        .map(|(r, sp)| r.zip_map(&state.u, |r, u| r.ln() + sg * sp.charge() * u))
        .collect::<Result<Vec<_>>>()?;
    let (u_new, pstats) = solve_poisson(p, &log_pref, &state.u, true, 1e-2 * settings.tol_u)?;
    times.poisson += t.elapsed().as_secs_f64();
    let lam = settings.lambda_u;
    let mut u = state.u.zip_map(&u_new, |a, b| (1.0 - lam) * a + lam * b)?;
    // the faces carry the biased values from the first sweep on
    if lam > 0.0 {
        p.potential_boundary(true).impose(&mut u);
    }
    let du = crate::grid::max_abs_diff(&u, &state.u)?;
    let pot = potentials(p, &state.rho, times)?;
    let t = Instant::now();
    let np = MgSettings {
        tolerance: settings.np_tolerance,
        ..p.mg
    };
    let mut rho = Vec::with_capacity(p.species.len());
    let mut rho_bar = Vec::with_capacity(p.species.len());
    let mut dbars = Vec::with_capacity(p.species.len());
    let mut nstats = Vec::with_capacity(p.species.len());
    let mut drho = 0.0_f64;
    for i in 0..p.species.len() {
        let c = chi(p, i, &u, &pot)?;
        let (op, dbar) = transport_operator(p, i, &c)?;
        let guess = state.rho[i].zip_map(&c, |r, c| r * c.exp())?;
        let (rb, stats) = solve(&op, &guess, &np)?;
        check_finite("transport", &rb)?;
        let fresh = rb.zip_map(&c, |r, c| r * (-c).exp())?;
        let lr = settings.lambda_rho;
        let next = state.rho[i].zip_map(&fresh, |a, b| ((1.0 - lr) * a + lr * b).max(0.0))?;
        drho = drho.max(max_rel_change(&next, &state.rho[i], p.species[i].bulk_density));
        rho.push(next);
        rho_bar.push(rb);
        dbars.push(dbar);
        nstats.push(stats);
    }
    times.transport += t.elapsed().as_secs_f64();
    let record = StepRecord {
        du,
        drho,
        poisson_cycles: pstats.cycles,
        np_cycles: nstats.iter().map(|s| s.cycles).collect(),
    };
    let next = SystemState {
        u,
        rho,
        mu_id: pot.mu_id,
        mu_ex: pot.mu_ex,
        rho_bar,
        dbar: dbars,
        iteration: state.iteration + 1,
    };
    Ok((next, record, pstats, nstats))
}

/// Outcome of a full solve; `report.converged` is false when the iteration
/// cap was hit, in which case `state` is the last iterate.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: SystemState,
    pub report: ConvergenceReport,
}

pub fn run_to_convergence(p: &Problem, settings: &GummelSettings) -> Result<RunOutcome> {
    let start = Instant::now();
    p.functional.fft_clock().reset();
    let (state, report) = equilibrium_init(p, settings)?;
    continue_from(p, settings, state, report, start)
}

/// Gummel sweeps from an arbitrary state (e.g. a checkpoint).
pub fn run_from_state(p: &Problem, settings: &GummelSettings, state: SystemState) -> Result<RunOutcome> {
    continue_from(p, settings, state, ConvergenceReport::default(), Instant::now())
}

fn continue_from(
    p: &Problem,
    settings: &GummelSettings,
    mut state: SystemState,
    mut report: ConvergenceReport,
    start: Instant,
) -> Result<RunOutcome> {
    settings.validate()?;
    loop {
        if report.iterations >= settings.max_iterations {
            break;
        }
        let step = gummel_step(p, &state, settings, &mut report.times);
        let (next, record, ps, ns) = match step {
            Ok(v) => v,
            Err(e) => {
                if let (Error::NonFinite { .. }, Some(dir)) = (&e, &settings.checkpoint_dir) {
                    let _ = write_checkpoint(&dir.join("last_good"), &state);
                }
                return Err(e);
            }
        };
        state = next;
        report.iterations += 1;
        report.last_poisson = ps;
        report.last_transport = ns;
        let done = record.du <= settings.tol_u && record.drho <= settings.tol_rho;
        log::debug!("gummel {}: du {:.3e} drho {:.3e}", report.iterations, record.du, record.drho);
        report.history.push(record);
        if settings.checkpoint_every > 0 && report.iterations % settings.checkpoint_every == 0 {
            if let Some(dir) = &settings.checkpoint_dir {
                write_checkpoint(&dir.join(format!("iter_{:05}", report.iterations)), &state)?;
            }
        }
        if done {
            report.converged = true;
            break;
        }
    }
    report.seconds = start.elapsed().as_secs_f64();
    Ok(RunOutcome { state, report })
}

/// Net particle flow of species `i` through each y-plane of faces, in the
/// `+y` direction [1/s], from the last transport solve.
pub fn plane_flows(p: &Problem, state: &SystemState, i: usize) -> Result<Vec<f64>> {
    if state.rho_bar.len() != p.species.len() {
        return Err(Error::InvalidArgument("state carries no transport solution".into()));
    }
    let op = assemble_np(&state.dbar[i], &BoundaryClass::uniform(&p.grid, 0.0, 0.0))?;
    Ok(op
        .plane_fluxes(state.rho_bar[i].values())
        .into_iter()
        .map(|f| p.sign() * f)
        .collect())
}

#[cfg(test)]
mod tests;
