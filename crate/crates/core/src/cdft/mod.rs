//! Ideal and excess chemical potentials of the mobile species.
//!
//! Energies are returned in eV. Internally everything is in units of
//! `k_B T` and multiplied by `1/beta` on the way out.

mod fmt;
mod shell;

use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use fmt::{
    finite_difference_gap, partials_point, phi_hs, phi_hs_partials, phi_point, HsFunctional, HsPartials,
    PointDensities, PointPartials, WeightedDensities,
};
pub use shell::{gauss_legendre, shell_integral, shell_integral_direct, sphere_rule, ShellStencil};

use crate::constants::{COULOMB_EV_NM, K_B_EV, MOLAR_IN_NM3, NM_TO_ANGSTROM};
use crate::error::{Error, Result};
use crate::grid::{integrate, GridSpec, ScalarField, VectorField};
use crate::spectral::{fft_for, ConvolutionPlan, Fft3, RadialKernel};

/// Densities below this are clamped inside logarithms [nm^-3].
pub const RHO_FLOOR: f64 = 1e-30;

/// Temperature and dielectric constant with the derived electrostatic
/// scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thermo {
    pub temperature: f64,
    pub dielectric: f64,
}

impl Thermo {
    pub fn new(temperature: f64, dielectric: f64) -> Result<Self> {
        if !(temperature > 0.0 && dielectric > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "temperature and dielectric constant must be positive (T={temperature}, eps={dielectric})"
            )));
        }
        Ok(Self {
            temperature,
            dielectric,
        })
    }

    /// `1/(k_B T)` [1/eV].
    pub fn beta(&self) -> f64 {
        1.0 / (K_B_EV * self.temperature)
    }

    pub fn kt(&self) -> f64 {
        K_B_EV * self.temperature
    }

    /// Bjerrum length [nm].
    pub fn bjerrum(&self) -> f64 {
        COULOMB_EV_NM / self.dielectric * self.beta()
    }

    /// Extended Debye-Hueckel `A` [(mol/L)^-1/2].
    pub fn dh_a(&self) -> f64 {
        1.82e6 * (self.dielectric * self.temperature).powf(-1.5)
    }

    /// Extended Debye-Hueckel `B` [1/(Angstrom (mol/L)^1/2)].
    pub fn dh_b(&self) -> f64 {
        50.3 * (self.dielectric * self.temperature).powf(-0.5)
    }

    /// Squared inverse Debye length for the given `sum_i rho_i q_i^2` [nm^-2].
    pub fn kappa_sq(&self, sum_rho_q2: f64) -> f64 {
        4.0 * PI * self.bjerrum() * sum_rho_q2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesSpec {
    pub name: String,
    pub valence: i32,
    /// Hard-sphere diameter [nm].
    pub diameter: f64,
    /// Diffusion coefficient [cm^2/s].
    pub diffusion: f64,
    /// Reservoir density [nm^-3].
    pub bulk_density: f64,
    pub mobile: bool,
    /// Ion-size parameter of the activity coefficient [nm]; the diameter
    /// when unset.
    pub activity_size: Option<f64>,
}

impl SpeciesSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.diameter > 0.0) {
            return Err(Error::InvalidArgument(format!("{}: diameter must be > 0", self.name)));
        }
        if !(self.bulk_density >= 0.0) {
            return Err(Error::InvalidArgument(format!("{}: bulk density must be >= 0", self.name)));
        }
        if self.mobile && !(self.diffusion > 0.0) {
            return Err(Error::InvalidArgument(format!("{}: diffusion must be > 0", self.name)));
        }
        Ok(())
    }

    pub fn radius(&self) -> f64 {
        0.5 * self.diameter
    }

    pub fn activity_size(&self) -> f64 {
        self.activity_size.unwrap_or(self.diameter)
    }

    pub fn charge(&self) -> f64 {
        self.valence as f64
    }
}

/// Square-well attraction between a mobile species and one group of
/// stationary sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareWellSpec {
    /// Index into the mobile species list.
    pub species: usize,
    /// Index into the site groups.
    pub sites: usize,
    /// Well depth [eV], positive for attraction.
    pub depth: f64,
    /// Contact distance `(sigma_a + sigma_b)/2` [nm].
    pub contact: f64,
    pub gamma: f64,
}

impl SquareWellSpec {
    pub fn kernel(&self) -> Result<RadialKernel> {
        RadialKernel::square_well(self.depth, self.contact, self.gamma)
    }
}

/// Sum of normalised Gaussians centred on fixed lattice sites.
#[derive(Debug, Clone, PartialEq)]
pub struct StationarySites {
    pub positions: Vec<[f64; 3]>,
    /// Gaussian sharpness `alpha` [nm^-2].
    pub sharpness: f64,
}

impl StationarySites {
    /// Sharpness giving a Gaussian standard deviation of `diameter / 4`.
    pub fn default_sharpness(diameter: f64) -> f64 {
        let sd = 0.25 * diameter;
        1.0 / (2.0 * sd * sd)
    }

    pub fn density(&self, grid: &GridSpec) -> ScalarField {
        let a = self.sharpness;
        let norm = (a / PI).powf(1.5);
        // exp(-70) is far below any density that matters
        let cut = (70.0 / a).sqrt();
        let h = grid.spacing();
        let dims = grid.dims();
        let mut out = ScalarField::zeros(*grid);
        for p in &self.positions {
            // unit mass on the unbounded lattice, so coarse grids do not
            // inflate the site count
            let lattice = [0, 1, 2].map(|d| {
                let n = (cut / h[d]).ceil() as i64 + 1;
                let c = (p[d] / h[d]).round() as i64;
                (c - n..=c + n)
                    .map(|m| (-a * (m as f64 * h[d] - p[d]).powi(2)).exp())
                    .sum::<f64>()
                    * h[d]
                    * (a / PI).sqrt()
            });
            let norm = norm / (lattice[0] * lattice[1] * lattice[2]);
            let lo = [0, 1, 2].map(|d| (((p[d] - cut) / h[d]).floor().max(0.0)) as usize);
            let hi = [0, 1, 2].map(|d| (((p[d] + cut) / h[d]).ceil() as usize).min(dims[d] - 1));
            for i in lo[0]..=hi[0] {
                for j in lo[1]..=hi[1] {
                    for k in lo[2]..=hi[2] {
                        let x = grid.position(i, j, k);
                        let r2 = (x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2) + (x[2] - p[2]).powi(2);
                        if r2 <= cut * cut {
                            let m = grid.idx(i, j, k);
                            out.values_mut()[m] += norm * (-a * r2).exp();
                        }
                    }
                }
            }
        }
        out
    }
}

/// MSA screening parameter `B(xi) = (xi + 1 - sqrt(1 + 2 xi)) / xi`.
pub fn msa_b(xi: f64) -> Result<f64> {
    if !(xi >= 0.0) {
        return Err(Error::InvalidArgument(format!("xi must be >= 0, got {xi}")));
    }
    if xi < 1e-6 {
        Ok(xi / 2.0 - xi * xi / 2.0)
    } else {
        Ok((xi + 1.0 - (1.0 + 2.0 * xi).sqrt()) / xi)
    }
}

/// Sign convention of the ideal chemical potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum IdealSign {
    /// `mu_id = +ln(gamma rho / rho_bulk)`.
    #[default]
    Conventional,
    /// `mu_id = -ln(gamma rho / rho_bulk)`.
    Reversed,
}

impl IdealSign {
    pub fn factor(self) -> f64 {
        match self {
            IdealSign::Conventional => 1.0,
            IdealSign::Reversed => -1.0,
        }
    }
}

/// Ionic strength `0.5 sum rho_i q_i^2` [nm^-3] at every node.
pub fn ionic_strength(rho: &[ScalarField], species: &[SpeciesSpec]) -> Result<ScalarField> {
    let g = *rho[0].grid();
    let mut out = ScalarField::zeros(g);
    for (r, s) in rho.iter().zip(species) {
        out.axpy(0.5 * s.charge() * s.charge(), r)?;
    }
    Ok(out)
}

/// `ln(gamma)` from extended Debye-Hueckel; `strength` in nm^-3, `size`
/// (ion-size parameter) in nm.
pub fn ln_activity(thermo: &Thermo, valence: f64, size: f64, strength: f64) -> f64 {
    let root = (strength.max(0.0) / MOLAR_IN_NM3).sqrt();
    -thermo.dh_a() * valence * valence * root / (1.0 + thermo.dh_b() * size * NM_TO_ANGSTROM * root)
}

/// `mu_id` [eV] of species `i`, exactly `sign * ln(gamma rho / rho_bulk)`.
pub fn mu_ideal(
    i: usize,
    rho: &[ScalarField],
    species: &[SpeciesSpec],
    thermo: &Thermo,
    sign: IdealSign,
) -> Result<ScalarField> {
    let s = &species[i];
    if !(s.bulk_density > 0.0) {
        return Err(Error::InvalidArgument(format!("{}: bulk density must be > 0", s.name)));
    }
    let strength = ionic_strength(rho, species)?;
    let kt = thermo.kt();
    let q = s.charge();
    let f = sign.factor();
    rho[i].zip_map(&strength, |r, ion| {
        let lg = ln_activity(thermo, q, s.activity_size(), ion);
        f * kt * (lg + (r.max(RHO_FLOOR) / s.bulk_density).ln())
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FunctionalSettings {
    pub hs_functional: HsFunctional,
    /// Azimuth and polar orders of the sphere rule.
    pub quadrature: [usize; 2],
    pub ideal_sign: IdealSign,
    /// Include the mean-field Coulomb term in the excess potential.
    pub coulomb: bool,
}

impl Default for FunctionalSettings {
    fn default() -> Self {
        Self {
            hs_functional: HsFunctional::Fmt,
            quadrature: [16, 16],
            ideal_sign: IdealSign::Conventional,
            coulomb: true,
        }
    }
}

/// Excess chemical potential split by contribution [eV].
#[derive(Debug, Clone)]
pub struct ExcessParts {
    pub hs: Vec<ScalarField>,
    pub sh: Vec<ScalarField>,
    pub coulomb: Vec<ScalarField>,
    pub el: Vec<ScalarField>,
}

impl ExcessParts {
    pub fn total(&self) -> Result<Vec<ScalarField>> {
        let mut out = Vec::with_capacity(self.hs.len());
        for i in 0..self.hs.len() {
            let mut t = self.hs[i].clone();
            t.axpy(1.0, &self.sh[i])?;
            t.axpy(1.0, &self.coulomb[i])?;
            t.axpy(1.0, &self.el[i])?;
            out.push(t);
        }
        Ok(out)
    }
}

/// Accumulated wall time [ns] spent in FFT convolutions.
#[derive(Debug, Default)]
pub struct FftClock(AtomicU64);

impl FftClock {
    pub fn seconds(&self) -> f64 {
        self.0.load(Ordering::Relaxed) as f64 * 1e-9
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed);
    }

    fn time<T>(&self, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.0.fetch_add(t.elapsed().as_nanos() as u64, Ordering::Relaxed);
        out
    }
}

/// All kernels and stencils for one grid, temperature and species set.
#[derive(Debug)]
pub struct Functional {
    grid: GridSpec,
    thermo: Thermo,
    species: Vec<SpeciesSpec>,
    settings: FunctionalSettings,
    shells: Vec<ShellStencil>,
    balls: Vec<ConvolutionPlan>,
    coulomb: ConvolutionPlan,
    /// `msa[i][j]` convolves with the MSA direct correlation of the pair.
    msa: Vec<Vec<ConvolutionPlan>>,
    /// Static short-range potential per mobile species [eV].
    mu_sh: Vec<ScalarField>,
    /// `conv(Phi_w, rho_s)` per well, paired with the mobile index.
    well_fields: Vec<(usize, ScalarField)>,
    clock: FftClock,
}

impl Functional {
    /// `site_density[g]` is the Gaussian density of site group `g`.
    pub fn new(
        grid: &GridSpec,
        thermo: Thermo,
        species: &[SpeciesSpec],
        wells: &[SquareWellSpec],
        site_density: &[ScalarField],
        settings: FunctionalSettings,
    ) -> Result<Self> {
        for s in species {
            s.validate()?;
        }
        let fft: Arc<Fft3> = fft_for(grid);
        let shells = species
            .iter()
            .map(|s| ShellStencil::new(grid, s.radius(), settings.quadrature))
            .collect::<Result<Vec<_>>>()?;
        let balls = species
            .iter()
            .map(|s| ConvolutionPlan::with_fft(grid, &RadialKernel::ball(s.radius())?, fft.clone()))
            .collect::<Result<Vec<_>>>()?;
        let coulomb = ConvolutionPlan::with_fft(grid, &RadialKernel::coulomb(), fft.clone())?;
        let lb = thermo.bjerrum();
        let sum_rho_q2: f64 = species.iter().map(|s| s.bulk_density * s.charge().powi(2)).sum();
        let kappa = thermo.kappa_sq(sum_rho_q2).sqrt();
        let mut msa = Vec::with_capacity(species.len());
        for a in species {
            let mut row = Vec::with_capacity(species.len());
            for b in species {
                let sigma = 0.5 * (a.diameter + b.diameter);
                let bb = msa_b(kappa * sigma)?;
                let k = RadialKernel::msa(a.charge() * b.charge() * lb, bb, sigma)?;
                row.push(ConvolutionPlan::with_fft(grid, &k, fft.clone())?);
            }
            msa.push(row);
        }
        let mut mu_sh: Vec<ScalarField> = species.iter().map(|_| ScalarField::zeros(*grid)).collect();
        let mut well_fields = Vec::with_capacity(wells.len());
        for w in wells {
            if w.species >= species.len() || w.sites >= site_density.len() {
                return Err(Error::InvalidArgument(format!(
                    "well refers to species {} / site group {} that do not exist",
                    w.species, w.sites
                )));
            }
            let plan = ConvolutionPlan::with_fft(grid, &w.kernel()?, fft.clone())?;
            let field = plan.apply(&site_density[w.sites])?;
            mu_sh[w.species].axpy(0.5, &field)?;
            well_fields.push((w.species, field));
        }
        Ok(Self {
            grid: *grid,
            thermo,
            species: species.to_vec(),
            settings,
            shells,
            balls,
            coulomb,
            msa,
            mu_sh,
            well_fields,
            clock: FftClock::default(),
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn thermo(&self) -> &Thermo {
        &self.thermo
    }

    pub fn species(&self) -> &[SpeciesSpec] {
        &self.species
    }

    pub fn settings(&self) -> &FunctionalSettings {
        &self.settings
    }

    pub fn fft_clock(&self) -> &FftClock {
        &self.clock
    }

    fn check(&self, rho: &[ScalarField]) -> Result<()> {
        if rho.len() != self.species.len() {
            return Err(Error::LengthMismatch {
                expected: self.species.len(),
                got: rho.len(),
            });
        }
        for r in rho {
            self.grid.check_same(r.grid())?;
        }
        Ok(())
    }

    pub fn weighted_densities(&self, rho: &[ScalarField]) -> Result<WeightedDensities> {
        self.check(rho)?;
        let mut n = WeightedDensities::zeros(self.grid);
        for (i, s) in self.species.iter().enumerate() {
            let r = s.radius();
            let n2 = self.shells[i].apply(&rho[i])?;
            let v2 = self.shells[i].apply_vector(&rho[i])?;
            let n3 = self.clock.time(|| self.balls[i].apply(&rho[i]))?;
            n.n0.axpy(1.0 / (4.0 * PI * r * r), &n2)?;
            n.n1.axpy(1.0 / (4.0 * PI * r), &n2)?;
            n.n2.axpy(1.0, &n2)?;
            n.n3.axpy(1.0, &n3)?;
            for (dst, src) in n.n2v.components_mut().into_iter().zip(v2.components()) {
                dst.axpy(1.0, src)?;
            }
            for (dst, src) in n.n1v.components_mut().into_iter().zip(v2.components()) {
                dst.axpy(1.0 / (4.0 * PI * r), src)?;
            }
        }
        n.check_packing()?;
        Ok(n)
    }

    /// Hard-sphere potential from precomputed partials [eV].
    pub fn mu_hs_from_partials(&self, d: &HsPartials) -> Result<Vec<ScalarField>> {
        let kt = self.thermo.kt();
        let mut out = Vec::with_capacity(self.species.len());
        for (i, s) in self.species.iter().enumerate() {
            let r = s.radius();
            let mut scalar = d.d2.clone();
            scalar.axpy(1.0 / (4.0 * PI * r), &d.d1)?;
            scalar.axpy(1.0 / (4.0 * PI * r * r), &d.d0)?;
            let mut vector = d.d2v.clone();
            for (dst, src) in vector.components_mut().into_iter().zip(d.d1v.components()) {
                dst.axpy(1.0 / (4.0 * PI * r), src)?;
            }
            let mut mu = self.shells[i].apply(&scalar)?;
            mu.axpy(1.0, &self.clock.time(|| self.balls[i].apply(&d.d3))?)?;
            // the vector weight is evaluated at r - r', opposite to the density
            mu.axpy(-1.0, &self.shells[i].apply_dot(&vector)?)?;
            mu.scale(kt);
            out.push(mu);
        }
        Ok(out)
    }

    pub fn mu_hs(&self, rho: &[ScalarField]) -> Result<Vec<ScalarField>> {
        let n = self.weighted_densities(rho)?;
        let d = phi_hs_partials(&n, self.settings.hs_functional)?;
        self.mu_hs_from_partials(&d)
    }

    /// Hard-sphere potential of the uniform reservoir [eV].
    pub fn mu_hs_bulk(&self) -> Result<Vec<f64>> {
        let mut n = PointDensities::from_array([0.0; 10]);
        for s in &self.species {
            let (r, rho) = (s.radius(), s.bulk_density);
            n.n0 += rho;
            n.n1 += rho * r;
            n.n2 += rho * 4.0 * PI * r * r;
            n.n3 += rho * 4.0 / 3.0 * PI * r.powi(3);
        }
        let d = partials_point(&n, self.settings.hs_functional)?;
        let kt = self.thermo.kt();
        Ok(self
            .species
            .iter()
            .map(|s| {
                let r = s.radius();
                kt * (d.d0 + d.d1 * r + d.d2 * 4.0 * PI * r * r + d.d3 * 4.0 / 3.0 * PI * r.powi(3))
            })
            .collect())
    }

    pub fn charge_density(&self, rho: &[ScalarField]) -> Result<ScalarField> {
        self.check(rho)?;
        let mut q = ScalarField::zeros(self.grid);
        for (r, s) in rho.iter().zip(&self.species) {
            q.axpy(s.charge(), r)?;
        }
        Ok(q)
    }

    /// Mean-field Coulomb potential `q_i k_B T l_B conv(1/r, sum q_j rho_j)`.
    pub fn mu_coulomb(&self, rho: &[ScalarField]) -> Result<Vec<ScalarField>> {
        let q = self.charge_density(rho)?;
        let psi = self.clock.time(|| self.coulomb.apply(&q))?;
        let scale = self.thermo.kt() * self.thermo.bjerrum();
        Ok(self
            .species
            .iter()
            .map(|s| psi.scaled(s.charge() * scale))
            .collect())
    }

    /// MSA electrostatic correlation potential, bulk constant set to zero.
    pub fn mu_electrostatic_correlation(&self, rho: &[ScalarField]) -> Result<Vec<ScalarField>> {
        self.check(rho)?;
        let kt = self.thermo.kt();
        let delta: Vec<ScalarField> = rho
            .iter()
            .zip(&self.species)
            .map(|(r, s)| r.map(|v| v - s.bulk_density))
            .collect();
        let mut out = Vec::with_capacity(self.species.len());
        for i in 0..self.species.len() {
            let mut mu = ScalarField::zeros(self.grid);
            for (j, d) in delta.iter().enumerate() {
                let c = self.clock.time(|| self.msa[i][j].apply(d))?;
                mu.axpy(-kt, &c)?;
            }
            out.push(mu);
        }
        Ok(out)
    }

    /// Static short-range potential (the sites do not move).
    pub fn mu_short_range(&self) -> &[ScalarField] {
        &self.mu_sh
    }

    pub fn mu_excess_parts(&self, rho: &[ScalarField]) -> Result<ExcessParts> {
        let hs = self.mu_hs(rho)?;
        let coulomb = if self.settings.coulomb {
            self.mu_coulomb(rho)?
        } else {
            self.species.iter().map(|_| ScalarField::zeros(self.grid)).collect()
        };
        let el = self.mu_electrostatic_correlation(rho)?;
        Ok(ExcessParts {
            hs,
            sh: self.mu_sh.clone(),
            coulomb,
            el,
        })
    }

    pub fn mu_excess_total(&self, rho: &[ScalarField]) -> Result<Vec<ScalarField>> {
        self.mu_excess_parts(rho)?.total()
    }

    pub fn mu_ideal(&self, i: usize, rho: &[ScalarField]) -> Result<ScalarField> {
        mu_ideal(i, rho, &self.species, &self.thermo, self.settings.ideal_sign)
    }

    /// Activity part of the ideal potential, `sign * ln(gamma_i)` [k_B T],
    /// which is what enters the drift beside the density gradient.
    pub fn activity_drift(&self, rho: &[ScalarField]) -> Result<Vec<ScalarField>> {
        let strength = ionic_strength(rho, &self.species)?;
        let f = self.settings.ideal_sign.factor();
        Ok(self
            .species
            .iter()
            .map(|s| strength.map(|ion| f * ln_activity(&self.thermo, s.charge(), s.activity_size(), ion)))
            .collect())
    }

    /// `sign * ln(gamma_i)` at the reservoir ionic strength [k_B T].
    pub fn activity_reference(&self) -> Vec<f64> {
        let strength: f64 = self
            .species
            .iter()
            .map(|s| 0.5 * s.bulk_density * s.charge().powi(2))
            .sum();
        let f = self.settings.ideal_sign.factor();
        self.species
            .iter()
            .map(|s| f * ln_activity(&self.thermo, s.charge(), s.activity_size(), strength))
            .collect()
    }

    /// Mean-field short-range energy with the sites [eV]:
    /// `1/2 sum_{a,b in {mobile, sites}} int int rho_a rho_b Phi_ab`.
    pub fn free_energy_short_range(&self, rho: &[ScalarField]) -> Result<f64> {
        self.check(rho)?;
        let mut total = 0.0;
        for (i, field) in &self.well_fields {
            let prod = rho[*i].zip_map(field, |a, b| a * b)?;
            total += integrate(&prod);
        }
        Ok(total)
    }
}

/// Weighted densities assembled directly from sphere samples and an
/// `O(N^2)` ball sum; the oracle for [`Functional::weighted_densities`].
pub fn weighted_densities_direct(
    rho: &[ScalarField],
    species: &[SpeciesSpec],
    order: [usize; 2],
) -> Result<WeightedDensities> {
    let g = *rho[0].grid();
    let mut n = WeightedDensities::zeros(g);
    for (r, s) in rho.iter().zip(species) {
        let rad = s.radius();
        let (n2, v2) = shell_integral_direct(r, rad, order);
        let dk = RadialKernel::ball(rad)?.discretize(g.spacing())?;
        let n3 = crate::spectral::direct_convolution(r, |i, j, k| dk.value(i, j, k));
        n.n0.axpy(1.0 / (4.0 * PI * rad * rad), &n2)?;
        n.n1.axpy(1.0 / (4.0 * PI * rad), &n2)?;
        n.n2.axpy(1.0, &n2)?;
        n.n3.axpy(1.0, &n3)?;
        for (a, c) in v2.iter().enumerate() {
            n.n2v.components_mut()[a].axpy(1.0, c)?;
            n.n1v.components_mut()[a].axpy(1.0 / (4.0 * PI * rad), c)?;
        }
    }
    Ok(n)
}

/// Hard-sphere potential by direct sphere sampling and `O(N^2)` ball sums.
pub fn mu_hs_direct(
    rho: &[ScalarField],
    species: &[SpeciesSpec],
    thermo: &Thermo,
    settings: &FunctionalSettings,
) -> Result<Vec<ScalarField>> {
    let n = weighted_densities_direct(rho, species, settings.quadrature)?;
    let d = phi_hs_partials(&n, settings.hs_functional)?;
    let g = *rho[0].grid();
    let kt = thermo.kt();
    let mut out = Vec::new();
    for s in species {
        let r = s.radius();
        let mut scalar = d.d2.clone();
        scalar.axpy(1.0 / (4.0 * PI * r), &d.d1)?;
        scalar.axpy(1.0 / (4.0 * PI * r * r), &d.d0)?;
        let (mut mu, _) = shell_integral_direct(&scalar, r, settings.quadrature);
        let dk = RadialKernel::ball(r)?.discretize(g.spacing())?;
        mu.axpy(1.0, &crate::spectral::direct_convolution(&d.d3, |i, j, k| dk.value(i, j, k)))?;
        for a in 0..3 {
            let mut comp = d.d2v.components()[a].clone();
            comp.axpy(1.0 / (4.0 * PI * r), d.d1v.components()[a])?;
            let (_, v) = shell_integral_direct(&comp, r, settings.quadrature);
            mu.axpy(-1.0, &v[a])?;
        }
        mu.scale(kt);
        out.push(mu);
    }
    Ok(out)
}

/// Per-node sum `sum_i rho_i` used by tests and reports.
pub fn total_density(rho: &[ScalarField]) -> Result<ScalarField> {
    let mut t = ScalarField::zeros(*rho[0].grid());
    for r in rho {
        t.axpy(1.0, r)?;
    }
    Ok(t)
}

/// Largest `|v|` of a vector field.
pub fn max_norm(v: &VectorField) -> f64 {
    let g = v.grid();
    (0..g.len())
        .into_par_iter()
        .map(|m| {
            let x = v.x.values()[m];
            let y = v.y.values()[m];
            let z = v.z.values()[m];
            (x * x + y * y + z * z).sqrt()
        })
        .reduce(|| 0.0, f64::max)
}
