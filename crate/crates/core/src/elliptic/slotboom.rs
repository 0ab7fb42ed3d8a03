//! Effective densities `rho_bar = rho exp(chi)` and diffusivities
//! `D_bar = D exp(-chi)` with `chi = q u + beta (mu_id + mu_ex)`.

use crate::cdft::Thermo;
use crate::error::Result;
use crate::grid::ScalarField;

/// Bound on `|chi|`; larger exponents are clipped with a warning.
pub const EXPONENT_CLAMP: f64 = 500.0;

/// `chi` at every node, clipped to `[-EXPONENT_CLAMP, EXPONENT_CLAMP]`.
pub fn slotboom_exponent(
    charge: f64,
    u: &ScalarField,
    mu_id: &ScalarField,
    mu_ex: &ScalarField,
    thermo: &Thermo,
) -> Result<ScalarField> {
    u.grid().check_same(mu_id.grid())?;
    u.grid().check_same(mu_ex.grid())?;
    let beta = thermo.beta();
    let mut clipped = 0usize;
    let vals: Vec<f64> = u
        .values()
        .iter()
        .zip(mu_id.values())
        .zip(mu_ex.values())
        .map(|((u, a), b)| {
            let chi = charge * u + beta * (a + b);
            if chi.abs() > EXPONENT_CLAMP {
                clipped += 1;
                chi.clamp(-EXPONENT_CLAMP, EXPONENT_CLAMP)
            } else {
                chi
            }
        })
        .collect();
    if clipped > 0 {
        log::warn!("slotboom exponent clipped to +/-{EXPONENT_CLAMP} at {clipped} nodes");
    }
    ScalarField::from_vec(*u.grid(), vals)
}

pub fn slotboom_forward(
    rho: &ScalarField,
    charge: f64,
    diffusion: f64,
    u: &ScalarField,
    mu_id: &ScalarField,
    mu_ex: &ScalarField,
    thermo: &Thermo,
) -> Result<(ScalarField, ScalarField)> {
    let chi = slotboom_exponent(charge, u, mu_id, mu_ex, thermo)?;
    let rho_bar = rho.zip_map(&chi, |r, c| r * c.exp())?;
    let dbar = chi.map(|c| diffusion * (-c).exp());
    Ok((rho_bar, dbar))
}

pub fn slotboom_invert(
    rho_bar: &ScalarField,
    charge: f64,
    u: &ScalarField,
    mu_id: &ScalarField,
    mu_ex: &ScalarField,
    thermo: &Thermo,
) -> Result<ScalarField> {
    let chi = slotboom_exponent(charge, u, mu_id, mu_ex, thermo)?;
    rho_bar.zip_map(&chi, |r, c| r * (-c).exp())
}
