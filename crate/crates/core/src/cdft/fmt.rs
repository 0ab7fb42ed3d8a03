//! Hard-sphere free-energy density from fundamental measure theory.
//!
//! `Phi = -n0 ln(1-n3) + (n1 n2 - n1v.n2v)/(1-n3) + f3(n3) (n2^3 - 3 n2 n2v.n2v)`
//! with `f3 = 1/(24 pi (1-n3)^2)` for the Rosenfeld form and the
//! White-Bear expression for the modified form.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, VectorField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HsFunctional {
    #[default]
    Fmt,
    Mfmt,
}

/// Weighted densities at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointDensities {
    pub n0: f64,
    pub n1: f64,
    pub n2: f64,
    pub n3: f64,
    pub n1v: [f64; 3],
    pub n2v: [f64; 3],
}

/// The ten partial derivatives of `Phi` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointPartials {
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d1v: [f64; 3],
    pub d2v: [f64; 3],
}

impl PointDensities {
    /// Reads the scalar slots in the order `n0 n1 n2 n3 n1x n1y n1z n2x n2y n2z`.
    pub fn from_array(a: [f64; 10]) -> Self {
        Self {
            n0: a[0],
            n1: a[1],
            n2: a[2],
            n3: a[3],
            n1v: [a[4], a[5], a[6]],
            n2v: [a[7], a[8], a[9]],
        }
    }

    pub fn to_array(&self) -> [f64; 10] {
        [
            self.n0, self.n1, self.n2, self.n3, self.n1v[0], self.n1v[1], self.n1v[2], self.n2v[0],
            self.n2v[1], self.n2v[2],
        ]
    }
}

impl PointPartials {
    pub fn to_array(&self) -> [f64; 10] {
        [
            self.d0, self.d1, self.d2, self.d3, self.d1v[0], self.d1v[1], self.d1v[2], self.d2v[0],
            self.d2v[1], self.d2v[2],
        ]
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Below this packing fraction the modified-form coefficient is taken from
/// its Taylor series.
const MFMT_SERIES_BELOW: f64 = 1e-2;

/// Coefficient of `n2^3` in the modified form and its derivative.
fn mfmt_coefficient(x: f64) -> (f64, f64) {
    let c = 1.0 / (36.0 * PI);
    if x < MFMT_SERIES_BELOW {
        // ln(1-x)/x^2 + 1/(x(1-x)^2) = sum_k [(k+2) - 1/(k+2)] x^k
        let mut f = 0.0;
        let mut df = 0.0;
        let mut xk = 1.0;
        for k in 0..16 {
            let a = (k + 2) as f64 - 1.0 / (k + 2) as f64;
            f += a * xk;
            if k + 1 < 16 {
                let a1 = (k + 3) as f64 - 1.0 / (k + 3) as f64;
                df += (k + 1) as f64 * a1 * xk;
            }
            xk *= x;
        }
        (c * f, c * df)
    } else {
        let l = (1.0 - x).ln();
        let om = 1.0 - x;
        let f = l / (x * x) + 1.0 / (x * om * om);
        let df = -1.0 / (om * x * x) - 2.0 * l / (x * x * x) - 1.0 / (x * x * om * om)
            + 2.0 / (x * om * om * om);
        (c * f, c * df)
    }
}

fn cubic_coefficient(variant: HsFunctional, n3: f64) -> (f64, f64) {
    match variant {
        HsFunctional::Fmt => {
            let om = 1.0 - n3;
            (1.0 / (24.0 * PI * om * om), 1.0 / (12.0 * PI * om * om * om))
        }
        HsFunctional::Mfmt => mfmt_coefficient(n3),
    }
}

fn check_n3(n3: f64) -> Result<()> {
    if n3 < 1.0 {
        Ok(())
    } else {
        Err(Error::LogDomain(1.0 - n3))
    }
}

/// `Phi_hs` at one point.
pub fn phi_point(n: &PointDensities, variant: HsFunctional) -> Result<f64> {
    check_n3(n.n3)?;
    let om = 1.0 - n.n3;
    let vv = dot(n.n2v, n.n2v);
    let (f3, _) = cubic_coefficient(variant, n.n3);
    Ok(-n.n0 * om.ln() + (n.n1 * n.n2 - dot(n.n1v, n.n2v)) / om
        + f3 * (n.n2 * n.n2 * n.n2 - 3.0 * n.n2 * vv))
}

/// All ten partials of `Phi_hs` at one point.
pub fn partials_point(n: &PointDensities, variant: HsFunctional) -> Result<PointPartials> {
    check_n3(n.n3)?;
    let om = 1.0 - n.n3;
    let vv = dot(n.n2v, n.n2v);
    let (f3, df3) = cubic_coefficient(variant, n.n3);
    let mut p = PointPartials {
        d0: -om.ln(),
        d1: n.n2 / om,
        d2: n.n1 / om + 3.0 * f3 * (n.n2 * n.n2 - vv),
        d3: n.n0 / om + (n.n1 * n.n2 - dot(n.n1v, n.n2v)) / (om * om)
            + df3 * (n.n2 * n.n2 * n.n2 - 3.0 * n.n2 * vv),
        ..Default::default()
    };
    for a in 0..3 {
        p.d1v[a] = -n.n2v[a] / om;
        p.d2v[a] = -n.n1v[a] / om - 6.0 * f3 * n.n2 * n.n2v[a];
    }
    Ok(p)
}

/// Largest gap between each analytic partial and the central difference of
/// [`phi_point`] with step `h`, relative to `max(|partial|, 1e-3)`.
pub fn finite_difference_gap(n: &PointDensities, variant: HsFunctional, h: f64) -> Result<f64> {
    let p = partials_point(n, variant)?.to_array();
    let base = n.to_array();
    let mut worst = 0.0_f64;
    for slot in 0..10 {
        let mut a = base;
        let mut b = base;
        a[slot] += h;
        b[slot] -= h;
        let fd = (phi_point(&PointDensities::from_array(a), variant)?
            - phi_point(&PointDensities::from_array(b), variant)?)
            / (2.0 * h);
        worst = worst.max((fd - p[slot]).abs() / p[slot].abs().max(1e-3));
    }
    Ok(worst)
}

/// Weighted-density fields of the mobile species mixture.
#[derive(Debug, Clone)]
pub struct WeightedDensities {
    pub n0: ScalarField,
    pub n1: ScalarField,
    pub n2: ScalarField,
    pub n3: ScalarField,
    pub n1v: VectorField,
    pub n2v: VectorField,
}

impl WeightedDensities {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            n0: ScalarField::zeros(grid),
            n1: ScalarField::zeros(grid),
            n2: ScalarField::zeros(grid),
            n3: ScalarField::zeros(grid),
            n1v: VectorField::zeros(grid),
            n2v: VectorField::zeros(grid),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        self.n0.grid()
    }

    pub fn at(&self, m: usize) -> PointDensities {
        PointDensities {
            n0: self.n0.values()[m],
            n1: self.n1.values()[m],
            n2: self.n2.values()[m],
            n3: self.n3.values()[m],
            n1v: [self.n1v.x.values()[m], self.n1v.y.values()[m], self.n1v.z.values()[m]],
            n2v: [self.n2v.x.values()[m], self.n2v.y.values()[m], self.n2v.z.values()[m]],
        }
    }

    /// Errors with the first node where `n3 >= 1`.
    pub fn check_packing(&self) -> Result<()> {
        let g = *self.grid();
        if let Some(m) = self.n3.values().iter().position(|&v| !(v < 1.0)) {
            let (i, j, k) = g.coords(m);
            return Err(Error::PackingViolation {
                value: self.n3.values()[m],
                i,
                j,
                k,
            });
        }
        Ok(())
    }
}

/// Partial-derivative fields, one per weighted density slot.
#[derive(Debug, Clone)]
pub struct HsPartials {
    pub d0: ScalarField,
    pub d1: ScalarField,
    pub d2: ScalarField,
    pub d3: ScalarField,
    pub d1v: VectorField,
    pub d2v: VectorField,
}

/// Pointwise `Phi_hs` field in `k_B T` per nm^3.
pub fn phi_hs(n: &WeightedDensities, variant: HsFunctional) -> Result<ScalarField> {
    n.check_packing()?;
    let g = *n.grid();
    let v: Result<Vec<f64>> = (0..g.len())
        .into_par_iter()
        .map(|m| phi_point(&n.at(m), variant))
        .collect();
    ScalarField::from_vec(g, v?)
}

pub fn phi_hs_partials(n: &WeightedDensities, variant: HsFunctional) -> Result<HsPartials> {
    n.check_packing()?;
    let g = *n.grid();
    let rows: Result<Vec<[f64; 10]>> = (0..g.len())
        .into_par_iter()
        .map(|m| partials_point(&n.at(m), variant).map(|p| p.to_array()))
        .collect();
    let rows = rows?;
    let col = |c: usize| ScalarField::from_vec(g, rows.iter().map(|r| r[c]).collect()).unwrap();
    Ok(HsPartials {
        d0: col(0),
        d1: col(1),
        d2: col(2),
        d3: col(3),
        d1v: VectorField::new(col(4), col(5), col(6))?,
        d2v: VectorField::new(col(7), col(8), col(9))?,
    })
}
