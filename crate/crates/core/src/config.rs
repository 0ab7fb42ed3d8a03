//! Flat `key = value` run configuration (TOML syntax, no tables) and the
//! LiPON site lattice.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cdft::{FunctionalSettings, HsFunctional, IdealSign, SpeciesSpec, SquareWellSpec, StationarySites, Thermo};
use crate::constants::NM_TO_ANGSTROM;
use crate::elliptic::MgSettings;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::pnp::{GummelSettings, Problem};

/// Keys that have no default.
pub const REQUIRED_KEYS: &[&str] = &["sites"];

/// Site labels that carry a square well with the mobile cation.
pub const SITE_LABELS: [&str; 3] = ["s1", "s2", "s3"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    /// Lattice constants [nm].
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub cells_x: usize,
    /// Number of unit cells along the transport direction.
    pub cells_y: usize,
    pub cells_z: usize,
    /// Grid intervals per lattice constant.
    pub resolution: usize,

    pub temperature: f64,
    pub dielectric: f64,
    /// Fixed charge on the z = 0 face [e/nm^2].
    pub surface_charge: f64,
    /// Reservoir density of each ion species [nm^-3].
    pub bulk_density: f64,
    /// Diffusion coefficients [cm^2/s].
    pub diffusion_plus: f64,
    pub diffusion_minus: f64,
    pub valence_plus: i32,
    pub valence_minus: i32,
    /// Hard-sphere diameters [nm].
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    pub sigma_site: f64,
    /// Cation-site well depths [eV].
    pub well_s1: f64,
    pub well_s2: f64,
    pub well_s3: f64,
    /// Well range as a multiple of the contact distance.
    pub gamma: f64,
    /// Gaussian sharpness of the sites [nm^-2]; 0 selects a standard
    /// deviation of a quarter diameter.
    pub site_sharpness: f64,
    /// Ion-size parameter of the activity coefficient [Angstrom]; 0 uses
    /// each hard-sphere diameter.
    pub activity_size: f64,
    /// Motif entries `"label fx fy fz"` in fractional cell coordinates.
    pub sites: Vec<String>,
    /// Applied potential [V].
    pub bias: f64,

    pub functional: HsFunctional,
    pub quadrature_azimuth: usize,
    pub quadrature_polar: usize,
    pub ideal_mu_sign: IdealSign,
    /// Add the mean-field Coulomb term to the excess potential. Off by
    /// default because the Poisson potential already carries it.
    pub coulomb_in_excess: bool,

    pub lambda_u: f64,
    pub lambda_rho: f64,
    pub lambda_eq: f64,
    pub tol_u: f64,
    pub tol_rho: f64,
    pub max_iterations: usize,
    pub max_eq_iterations: usize,
    pub np_tolerance: f64,
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,

    pub mg_pre_sweeps: usize,
    pub mg_post_sweeps: usize,
    pub mg_weight: f64,
    pub mg_tolerance: f64,
    pub mg_max_cycles: usize,
    pub mg_krylov: bool,
    pub mg_coarse_nodes: usize,

    pub output_dir: PathBuf,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        let g = GummelSettings::default();
        let m = MgSettings::default();
        Self {
            a: 1.053,
            b: 0.612,
            c: 0.493,
            cells_x: 2,
            cells_y: 150,
            cells_z: 5,
            resolution: 8,
            temperature: 298.0,
            dielectric: 16.6,
            surface_charge: 0.1,
            bulk_density: 6.02e-5,
            diffusion_plus: 1e-6,
            diffusion_minus: 1e-6,
            valence_plus: 1,
            valence_minus: -1,
            sigma_plus: 0.06,
            sigma_minus: 0.001,
            sigma_site: 0.2,
            well_s1: 0.21,
            well_s2: 0.17,
            well_s3: 0.17,
            gamma: 1.2,
            site_sharpness: 0.0,
            activity_size: 0.0,
            sites: Vec::new(),
            bias: 0.01,
            functional: HsFunctional::Fmt,
            quadrature_azimuth: 16,
            quadrature_polar: 16,
            ideal_mu_sign: IdealSign::Conventional,
            coulomb_in_excess: false,
            lambda_u: g.lambda_u,
            lambda_rho: g.lambda_rho,
            lambda_eq: g.lambda_eq,
            tol_u: g.tol_u,
            tol_rho: g.tol_rho,
            max_iterations: g.max_iterations,
            max_eq_iterations: g.max_eq_iterations,
            np_tolerance: g.np_tolerance,
            checkpoint_every: 0,
            checkpoint_dir: None,
            mg_pre_sweeps: m.pre_sweeps,
            mg_post_sweeps: m.post_sweeps,
            mg_weight: m.weight,
            mg_tolerance: m.tolerance,
            mg_max_cycles: m.max_cycles,
            mg_krylov: m.krylov,
            mg_coarse_nodes: m.coarse_nodes,
            output_dir: PathBuf::from("out"),
            threads: 0,
        }
    }
}

/// One motif entry.
#[derive(Debug, Clone, PartialEq)]
pub struct MotifSite {
    pub label: String,
    pub frac: [f64; 3],
}

/// Sites of one label tiled over the box.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteGroup {
    pub label: String,
    pub positions: Vec<[f64; 3]>,
}

pub fn parse_motif_line(line: &str) -> Result<MotifSite> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != 4 {
        return Err(Error::Config(format!("site entry `{line}` must be `label x y z`")));
    }
    let mut frac = [0.0; 3];
    for a in 0..3 {
        frac[a] = parts[a + 1]
            .parse()
            .map_err(|_| Error::Config(format!("site entry `{line}`: `{}` is not a number", parts[a + 1])))?;
    }
    Ok(MotifSite {
        label: parts[0].to_string(),
        frac,
    })
}

/// Tiles the motif over `cells` unit cells of size `a x b x c`.
pub fn generate_lipon_sites(lattice: [f64; 3], cells: [usize; 3], motif: &[MotifSite]) -> Result<Vec<SiteGroup>> {
    let mut groups: Vec<SiteGroup> = Vec::new();
    for site in motif {
        if site.frac.iter().any(|f| !(0.0..1.0).contains(f)) {
            return Err(Error::Config(format!(
                "site `{}` has fractional coordinates {:?} outside [0, 1)",
                site.label, site.frac
            )));
        }
        let idx = match groups.iter().position(|g| g.label == site.label) {
            Some(i) => i,
            None => {
                groups.push(SiteGroup {
                    label: site.label.clone(),
                    positions: Vec::new(),
                });
                groups.len() - 1
            }
        };
        for ix in 0..cells[0] {
            for iy in 0..cells[1] {
                for iz in 0..cells[2] {
                    let cell = [ix, iy, iz];
                    groups[idx].positions.push([0, 1, 2].map(|a| (cell[a] as f64 + site.frac[a]) * lattice[a]));
                }
            }
        }
    }
    Ok(groups)
}

/// `label x y z` per line, positions in nm.
pub fn write_site_file(path: &Path, groups: &[SiteGroup]) -> Result<()> {
    let mut text = String::from("# label x_nm y_nm z_nm\n");
    for g in groups {
        for p in &g.positions {
            text.push_str(&format!("{} {:e} {:e} {:e}\n", g.label, p[0], p[1], p[2]));
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_site_file(path: &Path) -> Result<Vec<SiteGroup>> {
    let text = std::fs::read_to_string(path)?;
    let mut groups: Vec<SiteGroup> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let s = parse_motif_line(line).map_err(|e| Error::Format(e.to_string()))?;
        match groups.iter_mut().find(|g| g.label == s.label) {
            Some(g) => g.positions.push(s.frac),
            None => groups.push(SiteGroup {
                label: s.label,
                positions: vec![s.frac],
            }),
        }
    }
    Ok(groups)
}

impl SimulationConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if let Some((k, _)) = table.iter().find(|(_, v)| v.is_table()) {
            return Err(Error::Config(format!("key `{k}`: nested tables are not allowed")));
        }
        let missing: Vec<&str> = REQUIRED_KEYS.iter().copied().filter(|k| !table.contains_key(*k)).collect();
        if !missing.is_empty() {
            return Err(Error::Config(format!("missing required keys: {}", missing.join(", "))));
        }
        let cfg: SimulationConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("a", self.a),
            ("b", self.b),
            ("c", self.c),
            ("temperature", self.temperature),
            ("dielectric", self.dielectric),
            ("bulk_density", self.bulk_density),
            ("diffusion_plus", self.diffusion_plus),
            ("diffusion_minus", self.diffusion_minus),
            ("sigma_plus", self.sigma_plus),
            ("sigma_minus", self.sigma_minus),
            ("sigma_site", self.sigma_site),
            ("tol_u", self.tol_u),
            ("tol_rho", self.tol_rho),
            ("np_tolerance", self.np_tolerance),
            ("mg_tolerance", self.mg_tolerance),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{k} must be > 0, got {v}")));
            }
        }
        for (k, v) in [("well_s1", self.well_s1), ("well_s2", self.well_s2), ("well_s3", self.well_s3)] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{k} must be finite")));
            }
        }
        if !(self.gamma > 1.0) {
            return Err(Error::Config(format!("gamma must be > 1, got {}", self.gamma)));
        }
        if !(self.site_sharpness >= 0.0) {
            return Err(Error::Config(format!("site_sharpness must be >= 0, got {}", self.site_sharpness)));
        }
        if !(self.activity_size >= 0.0) {
            return Err(Error::Config(format!("activity_size must be >= 0, got {}", self.activity_size)));
        }
        if !self.bias.is_finite() || !self.surface_charge.is_finite() {
            return Err(Error::Config("bias and surface_charge must be finite".into()));
        }
        for (k, v) in [("cells_x", self.cells_x), ("cells_y", self.cells_y), ("cells_z", self.cells_z), ("resolution", self.resolution)] {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be >= 1")));
            }
        }
        if self.quadrature_azimuth == 0 || self.quadrature_polar == 0 {
            return Err(Error::Config("quadrature orders must be >= 1".into()));
        }
        if self.valence_plus <= 0 || self.valence_minus >= 0 {
            return Err(Error::Config("valence_plus must be > 0 and valence_minus < 0".into()));
        }
        if self.mg_max_cycles == 0 || !(self.mg_weight > 0.0 && self.mg_weight <= 1.0) {
            return Err(Error::Config("mg_max_cycles must be >= 1 and mg_weight in (0, 1]".into()));
        }
        self.gummel().validate()?;
        // below this size ln(gamma rho) is not monotone in rho and the
        // densities can run away to the packing limit
        let t = self.thermo()?;
        for sp in self.species() {
            let q2 = sp.charge().powi(2);
            let min = t.dh_a() * q2 / (8.0 * t.dh_b());
            let a = sp.activity_size() * NM_TO_ANGSTROM;
            if a < min {
                log::warn!("{}: activity size {a:.3} A is below {min:.3} A; the equilibrium may not exist", sp.name);
            }
        }
        for s in self.motif()? {
            if !SITE_LABELS.contains(&s.label.as_str()) {
                return Err(Error::Config(format!(
                    "site label `{}` unknown; expected one of {:?}",
                    s.label, SITE_LABELS
                )));
            }
            if s.frac.iter().any(|f| !(0.0..1.0).contains(f)) {
                return Err(Error::Config(format!("site `{}`: fractional coordinates must lie in [0, 1)", s.label)));
            }
        }
        Ok(())
    }

    pub fn motif(&self) -> Result<Vec<MotifSite>> {
        self.sites.iter().map(|l| parse_motif_line(l)).collect()
    }

    pub fn lattice(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }

    pub fn cells(&self) -> [usize; 3] {
        [self.cells_x, self.cells_y, self.cells_z]
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let cells = self.cells();
        let l = self.lattice();
        let n = cells.map(|c| c * self.resolution + 1);
        GridSpec::new(
            n[0],
            n[1],
            n[2],
            cells[0] as f64 * l[0],
            cells[1] as f64 * l[1],
            cells[2] as f64 * l[2],
        )
    }

    pub fn thermo(&self) -> Result<Thermo> {
        Thermo::new(self.temperature, self.dielectric)
    }

    pub fn species(&self) -> Vec<SpeciesSpec> {
        vec![
            SpeciesSpec {
                name: "cation".into(),
                valence: self.valence_plus,
                diameter: self.sigma_plus,
                diffusion: self.diffusion_plus,
                bulk_density: self.bulk_density,
                mobile: true,
                activity_size: self.activity_size(),
            },
            SpeciesSpec {
                name: "anion".into(),
                valence: self.valence_minus,
                diameter: self.sigma_minus,
                diffusion: self.diffusion_minus,
                bulk_density: self.bulk_density,
                mobile: true,
                activity_size: self.activity_size(),
            },
        ]
    }

    fn activity_size(&self) -> Option<f64> {
        (self.activity_size > 0.0).then(|| self.activity_size / NM_TO_ANGSTROM)
    }

    pub fn sharpness(&self) -> f64 {
        if self.site_sharpness > 0.0 {
            self.site_sharpness
        } else {
            StationarySites::default_sharpness(self.sigma_site)
        }
    }

    pub fn site_groups(&self) -> Result<Vec<SiteGroup>> {
        generate_lipon_sites(self.lattice(), self.cells(), &self.motif()?)
    }

    /// Wells and Gaussian densities for every label present in the motif.
    pub fn wells_and_sites(&self, grid: &GridSpec) -> Result<(Vec<SquareWellSpec>, Vec<ScalarField>)> {
        let groups = self.site_groups()?;
        let contact = 0.5 * (self.sigma_plus + self.sigma_site);
        let mut wells = Vec::new();
        let mut densities = Vec::new();
        for g in &groups {
            let depth = match g.label.as_str() {
                "s1" => self.well_s1,
                "s2" => self.well_s2,
                _ => self.well_s3,
            };
            let sites = StationarySites {
                positions: g.positions.clone(),
                sharpness: self.sharpness(),
            };
            wells.push(SquareWellSpec {
                species: 0,
                sites: densities.len(),
                depth,
                contact,
                gamma: self.gamma,
            });
            densities.push(sites.density(grid));
        }
        Ok((wells, densities))
    }

    pub fn functional_settings(&self) -> FunctionalSettings {
        FunctionalSettings {
            hs_functional: self.functional,
            quadrature: [self.quadrature_azimuth, self.quadrature_polar],
            ideal_sign: self.ideal_mu_sign,
            coulomb: self.coulomb_in_excess,
        }
    }

    pub fn gummel(&self) -> GummelSettings {
        GummelSettings {
            lambda_u: self.lambda_u,
            lambda_rho: self.lambda_rho,
            lambda_eq: self.lambda_eq,
            tol_u: self.tol_u,
            tol_rho: self.tol_rho,
            max_iterations: self.max_iterations,
            max_eq_iterations: self.max_eq_iterations,
            np_tolerance: self.np_tolerance,
            checkpoint_every: self.checkpoint_every,
            checkpoint_dir: self.checkpoint_dir.clone(),
        }
    }

    pub fn mg(&self) -> MgSettings {
        MgSettings {
            pre_sweeps: self.mg_pre_sweeps,
            post_sweeps: self.mg_post_sweeps,
            weight: self.mg_weight,
            coarse_nodes: self.mg_coarse_nodes,
            tolerance: self.mg_tolerance,
            max_cycles: self.mg_max_cycles,
            krylov: self.mg_krylov,
            ..MgSettings::default()
        }
    }

    pub fn problem(&self) -> Result<Problem> {
        let grid = self.grid()?;
        let (wells, sites) = self.wells_and_sites(&grid)?;
        Problem::new(
            grid,
            self.thermo()?,
            self.species(),
            &wells,
            &sites,
            self.functional_settings(),
            self.surface_charge,
            self.bias,
            self.mg(),
        )
    }
}

pub fn parse_config(path: &Path) -> Result<SimulationConfig> {
    let text = std::fs::read_to_string(path)?;
    SimulationConfig::from_toml(&text)
}
