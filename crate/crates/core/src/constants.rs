//! Physical constants (CODATA 2018) and unit conversions.
//!
//! Internal units: length nm, energy eV, temperature K, density nm^-3,
//! time s. The electrostatic potential is carried in reduced form
//! `u = e*phi/(k_B*T)`.

/// Boltzmann constant [eV/K].
pub const K_B_EV: f64 = 8.617_333_262e-5;

/// Elementary charge [C].
pub const E_CHARGE: f64 = 1.602_176_634e-19;

/// Vacuum permittivity [F/m].
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;

/// `e^2 / (4 pi eps0)` expressed in eV*nm.
pub const COULOMB_EV_NM: f64 = E_CHARGE / (4.0 * std::f64::consts::PI * EPSILON_0) * 1e9;

/// Avogadro constant [1/mol].
pub const AVOGADRO: f64 = 6.022_140_76e23;

/// Number density of a 1 mol/L solution, in nm^-3.
pub const MOLAR_IN_NM3: f64 = AVOGADRO * 1e-24;

/// cm^2/s to nm^2/s.
pub const CM2_PER_S_TO_NM2_PER_S: f64 = 1e14;

/// nm to Angstrom.
pub const NM_TO_ANGSTROM: f64 = 10.0;

/// Conductivity conversion factor from e/(nm s V) to S/cm.
///
/// For a charge flux integral `I = int J_b dy` with `J_b` in e*nm^-2*s^-1
/// and `dy` in nm, and a voltage in V, `sigma = I / V` has units
/// `e / (nm s V)`. Multiply by `E_CHARGE` (C/e) to obtain A/(nm V) = S/nm
/// and by 1e7 nm/cm to obtain S/cm.
pub const E_PER_NM_S_V_TO_S_PER_CM: f64 = E_CHARGE * 1e7;

pub fn conductivity_to_s_per_cm(e_per_nm_s_v: f64) -> f64 {
    e_per_nm_s_v * E_PER_NM_S_V_TO_S_PER_CM
}
