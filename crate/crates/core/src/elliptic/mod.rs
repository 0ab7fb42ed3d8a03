//! Seven-point finite-volume operators for `-div(a grad x) + d x = f` on the
//! node-centred lattice, and a geometric multigrid solver for them.
//!
//! Every node owns the trapezoid control volume around it. Rows are scaled by
//! that volume, so interior rows form a symmetric matrix. The two y-faces are
//! Dirichlet (identity rows scaled by the would-be diagonal, couplings lifted
//! to the right-hand side); the x and z faces are no-flux, which in this
//! layout simply means there is no outer face.

mod mg;
mod slotboom;

pub use mg::{solve, MgSettings, SolveStats};
pub use slotboom::{slotboom_exponent, slotboom_forward, slotboom_invert, EXPONENT_CLAMP};

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::cdft::Thermo;
use crate::error::{Error, Result};
use crate::grid::{BoundaryClass, GridSpec, ScalarField};

/// Assembled operator together with its right-hand side.
#[derive(Debug, Clone)]
pub struct StencilOperator {
    grid: GridSpec,
    /// Conductance of the face towards `+x`, `+y`, `+z` (zero on the last layer).
    faces: [Vec<f64>; 3],
    diag: Vec<f64>,
    dirichlet: Vec<bool>,
    rhs: Vec<f64>,
    /// Node coefficient and reaction density, kept for re-discretising on
    /// coarse levels.
    coef: Vec<f64>,
    reaction: Vec<f64>,
}

fn harmonic(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

impl StencilOperator {
    /// General assembly. `coef` is the node diffusion coefficient (face values
    /// are harmonic means), `reaction` the optional zeroth-order term and
    /// `source` the right-hand side density. `boundary` supplies the y-face
    /// values.
    pub fn diffusion(
        coef: &ScalarField,
        reaction: Option<&ScalarField>,
        source: &ScalarField,
        boundary: &BoundaryClass,
    ) -> Result<Self> {
        let grid = *coef.grid();
        grid.check_same(source.grid())?;
        if let Some(r) = reaction {
            grid.check_same(r.grid())?;
        }
        if boundary.dims() != (grid.nx, grid.nz) {
            return Err(Error::GridMismatch("boundary face size differs from grid".into()));
        }
        let mut rhs: Vec<f64> = (0..grid.len())
            .map(|m| {
                let (i, j, k) = grid.coords(m);
                grid.node_weight(i, j, k) * source.values()[m]
            })
            .collect();
        let reaction = reaction.map(|r| r.values().to_vec()).unwrap_or_else(|| vec![0.0; grid.len()]);
        let mut op = Self::from_coefficients(grid, coef.values().to_vec(), reaction, true)?;
        for m in 0..grid.len() {
            if op.dirichlet[m] {
                let (i, j, k) = grid.coords(m);
                let g = if j == 0 { boundary.low(i, k) } else { boundary.high(i, k) };
                rhs[m] = op.diag[m] * g;
            }
        }
        // lift couplings to Dirichlet neighbours
        let [nx, ny, nz] = grid.dims();
        for i in 0..nx {
            for k in 0..nz {
                let lo = grid.idx(i, 0, k);
                let next = grid.idx(i, 1, k);
                let prev = grid.idx(i, ny - 2, k);
                if !op.dirichlet[next] {
                    rhs[next] += op.faces[1][lo] * boundary.low(i, k);
                }
                if !op.dirichlet[prev] {
                    rhs[prev] += op.faces[1][prev] * boundary.high(i, k);
                }
            }
        }
        op.rhs = rhs;
        Ok(op)
    }

    /// Builds the matrix part from node coefficients. Nodes on the y-faces are
    /// Dirichlet when `dirichlet_y` is set.
    pub(crate) fn from_coefficients(
        grid: GridSpec,
        coef: Vec<f64>,
        reaction: Vec<f64>,
        dirichlet_y: bool,
    ) -> Result<Self> {
        let n = grid.len();
        if coef.len() != n || reaction.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: coef.len().min(reaction.len()),
            });
        }
        if let Some(m) = coef.iter().position(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "diffusion coefficient must be positive and finite, got {} at node {m}",
                coef[m]
            )));
        }
        if let Some(m) = reaction.iter().position(|&d| !(d >= 0.0 && d.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "reaction term must be nonnegative, got {} at node {m}",
                reaction[m]
            )));
        }
        let dims = grid.dims();
        let h = grid.spacing();
        let strides = [dims[1] * dims[2], dims[2], 1];
        let w: [Vec<f64>; 3] = [0, 1, 2].map(|a| (0..dims[a]).map(|i| grid.trapezoid_weight(a, i)).collect());
        let faces: [Vec<f64>; 3] = [0, 1, 2].map(|a| {
            (0..n)
                .into_par_iter()
                .map(|m| {
                    let c = [m / strides[0], (m / strides[1]) % dims[1], m % dims[2]];
                    if c[a] + 1 >= dims[a] {
                        return 0.0;
                    }
                    let (b, d) = match a {
                        0 => (1, 2),
                        1 => (0, 2),
                        _ => (0, 1),
                    };
                    harmonic(coef[m], coef[m + strides[a]]) * w[b][c[b]] * w[d][c[d]] / h[a]
                })
                .collect()
        });
        let dirichlet: Vec<bool> = (0..n)
            .map(|m| {
                let j = (m / strides[1]) % dims[1];
                dirichlet_y && (j == 0 || j == dims[1] - 1)
            })
            .collect();
        let diag: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|m| {
                let (i, j, k) = grid.coords(m);
                let c = [i, j, k];
                let mut s = grid.node_weight(i, j, k) * reaction[m];
                for a in 0..3 {
                    s += faces[a][m];
                    if c[a] > 0 {
                        s += faces[a][m - strides[a]];
                    }
                }
                s
            })
            .collect();
        Ok(Self {
            grid,
            faces,
            diag,
            dirichlet,
            rhs: vec![0.0; n],
            coef,
            reaction,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Right-hand side in scaled (volume-integrated) form.
    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn is_dirichlet(&self, m: usize) -> bool {
        self.dirichlet[m]
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Conductance of the face between node `m` and its `+axis` neighbour.
    pub fn face(&self, axis: usize, m: usize) -> f64 {
        self.faces[axis][m]
    }

    pub(crate) fn coefficients(&self) -> (&[f64], &[f64]) {
        (&self.coef, &self.reaction)
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let dims = self.grid.dims();
        let strides = [dims[1] * dims[2], dims[2], 1];
        y.par_iter_mut().enumerate().for_each(|(m, out)| {
            if self.dirichlet[m] {
                *out = self.diag[m] * x[m];
                return;
            }
            let c = [m / strides[0], (m / strides[1]) % dims[1], m % dims[2]];
            let mut acc = self.diag[m] * x[m];
            for a in 0..3 {
                if c[a] + 1 < dims[a] {
                    let n = m + strides[a];
                    if !self.dirichlet[n] {
                        acc -= self.faces[a][m] * x[n];
                    }
                }
                if c[a] > 0 {
                    let n = m - strides[a];
                    if !self.dirichlet[n] {
                        acc -= self.faces[a][n] * x[n];
                    }
                }
            }
            *out = acc;
        });
    }

    /// `r = b - A x`.
    pub fn residual(&self, x: &[f64], r: &mut [f64]) {
        self.apply(x, r);
        r.par_iter_mut().zip(&self.rhs).for_each(|(r, b)| *r = b - *r);
    }

    /// Writes the Dirichlet values into `x`.
    pub fn impose_dirichlet(&self, x: &mut [f64]) {
        for m in 0..x.len() {
            if self.dirichlet[m] {
                x[m] = self.rhs[m] / self.diag[m];
            }
        }
    }

    /// Net flux through each y-plane of faces, in the direction of `+y`:
    /// `F_j = sum_(i,k) T_(i,j,k) (x_j - x_(j+1))`, for `j = 0 .. ny-2`.
    pub fn plane_fluxes(&self, x: &[f64]) -> Vec<f64> {
        let [nx, ny, nz] = self.grid.dims();
        (0..ny - 1)
            .map(|j| {
                let mut s = 0.0;
                for i in 0..nx {
                    for k in 0..nz {
                        let m = self.grid.idx(i, j, k);
                        s += self.faces[1][m] * (x[m] - x[m + nz]);
                    }
                }
                s
            })
            .collect()
    }
}

/// Reduced Poisson problem `(-lap + d) u = 4 pi l_B (sum_i q_i rho_i + rho_f) + s`.
///
/// `charge` is the mobile-ion charge density `sum_i q_i rho_i` [e/nm^3],
/// `surface_charge` [e/nm^2] sits on the z = 0 face and is lumped into the
/// half control volumes of that layer, i.e. a node density of
/// `2 rho_f / dz`. `reaction` and `extra` carry the optional linearisation
/// terms (`d` and `s`, already in reduced units).
pub fn assemble_poisson(
    thermo: &Thermo,
    charge: &ScalarField,
    surface_charge: f64,
    reaction: Option<&ScalarField>,
    extra: Option<&ScalarField>,
    boundary: &BoundaryClass,
) -> Result<StencilOperator> {
    let grid = *charge.grid();
    let pref = 4.0 * PI * thermo.bjerrum();
    let lump = 2.0 * surface_charge / grid.dz();
    let mut source = charge.scaled(pref);
    {
        let v = source.values_mut();
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                v[grid.idx(i, j, 0)] += pref * lump;
            }
        }
    }
    if let Some(e) = extra {
        source.axpy(1.0, e)?;
    }
    StencilOperator::diffusion(&ScalarField::constant(grid, 1.0), reaction, &source, boundary)
}

/// Transformed Nernst-Planck operator `-div(D grad rho_bar) = 0` with
/// Dirichlet `rho_bar` on the y-faces.
pub fn assemble_np(dbar: &ScalarField, boundary: &BoundaryClass) -> Result<StencilOperator> {
    if let Some(m) = dbar.values().iter().position(|&d| !(d > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "transformed diffusion coefficient must be positive, got {} at node {m}",
            dbar.values()[m]
        )));
    }
    StencilOperator::diffusion(dbar, None, &ScalarField::zeros(*dbar.grid()), boundary)
}

#[cfg(test)]
mod tests;
