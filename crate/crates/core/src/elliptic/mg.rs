use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::StencilOperator;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};

/// Multigrid and Krylov controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MgSettings {
    pub pre_sweeps: usize,
    pub post_sweeps: usize,
    /// Damping of the point-Jacobi smoother.
    pub weight: f64,
    /// Stop coarsening once a level has at most this many nodes.
    pub coarse_nodes: usize,
    pub tolerance: f64,
    /// Residual norm accepted when the right-hand side vanishes.
    pub abs_tolerance: f64,
    pub max_cycles: usize,
    /// Wrap the V-cycle in preconditioned conjugate gradients.
    pub krylov: bool,
}

impl Default for MgSettings {
    fn default() -> Self {
        Self {
            pre_sweeps: 2,
            post_sweeps: 2,
            weight: 0.8,
            coarse_nodes: 125,
            tolerance: 1e-10,
            abs_tolerance: 1e-14,
            max_cycles: 200,
            krylov: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub cycles: usize,
    /// Final `|b - A x| / |b|` (absolute when `b = 0`).
    pub residual: f64,
    pub history: Vec<f64>,
    pub levels: usize,
    pub seconds: f64,
}

/// Largest coarsest level solved by a dense factorisation; beyond this the
/// coarsest level gets a fixed number of smoothing sweeps.
const DENSE_LIMIT: usize = 3000;
const COARSE_SWEEPS: usize = 60;

type AxisMap = Vec<Vec<(usize, f64)>>;

struct Transfer {
    /// For each fine index along each axis, the coarse indices and weights.
    up: [AxisMap; 3],
    /// For each coarse index along each axis, the fine indices and weights.
    down: [AxisMap; 3],
}

struct Level {
    op: StencilOperator,
    transfer: Option<Transfer>,
}

enum Coarsest {
    Dense(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Sweeps,
}

struct Hierarchy {
    levels: Vec<Level>,
    coarsest: Coarsest,
}

fn coarse_dims(dims: [usize; 3]) -> Option<([usize; 3], [bool; 3])> {
    let which = dims.map(|n| n >= 5 && (n - 1) % 2 == 0);
    if !which.iter().any(|&b| b) {
        return None;
    }
    let mut out = dims;
    for a in 0..3 {
        if which[a] {
            out[a] = (dims[a] - 1) / 2 + 1;
        }
    }
    Some((out, which))
}

fn axis_maps(n_fine: usize, n_coarse: usize, coarsened: bool) -> (AxisMap, AxisMap) {
    let mut up = vec![Vec::new(); n_fine];
    let mut down = vec![Vec::new(); n_coarse];
    for i in 0..n_fine {
        if !coarsened {
            up[i].push((i, 1.0));
        } else if i % 2 == 0 {
            up[i].push((i / 2, 1.0));
        } else {
            up[i].push(((i - 1) / 2, 0.5));
            up[i].push(((i + 1) / 2, 0.5));
        }
    }
    for (i, row) in up.iter().enumerate() {
        for &(c, w) in row {
            down[c].push((i, w));
        }
    }
    (up, down)
}

impl Transfer {
    fn new(fine: [usize; 3], coarse: [usize; 3], which: [bool; 3]) -> Self {
        let maps = [0, 1, 2].map(|a| axis_maps(fine[a], coarse[a], which[a]));
        let [(u0, d0), (u1, d1), (u2, d2)] = maps;
        Self {
            up: [u0, u1, u2],
            down: [d0, d1, d2],
        }
    }

    /// `out[c] = sum_f P[f, c] v[f]`, optionally normalised by `sum_f P[f, c]`.
    fn restrict(&self, fine: [usize; 3], coarse: [usize; 3], v: &[f64], average: bool) -> Vec<f64> {
        let len = coarse[0] * coarse[1] * coarse[2];
        (0..len)
            .into_par_iter()
            .map(|m| {
                let c = [m / (coarse[1] * coarse[2]), (m / coarse[2]) % coarse[1], m % coarse[2]];
                let mut s = 0.0;
                let mut ws = 0.0;
                for &(i, wi) in &self.down[0][c[0]] {
                    for &(j, wj) in &self.down[1][c[1]] {
                        let base = (i * fine[1] + j) * fine[2];
                        for &(k, wk) in &self.down[2][c[2]] {
                            let w = wi * wj * wk;
                            s += w * v[base + k];
                            ws += w;
                        }
                    }
                }
                if average {
                    s / ws
                } else {
                    s
                }
            })
            .collect()
    }

    /// `x[f] += sum_c P[f, c] e[c]` at non-Dirichlet fine nodes.
    fn prolong_add(&self, fine: &StencilOperator, coarse: [usize; 3], e: &[f64], x: &mut [f64]) {
        let dims = fine.grid().dims();
        x.par_iter_mut().enumerate().for_each(|(m, xm)| {
            if fine.is_dirichlet(m) {
                return;
            }
            let f = [m / (dims[1] * dims[2]), (m / dims[2]) % dims[1], m % dims[2]];
            let mut s = 0.0;
            for &(i, wi) in &self.up[0][f[0]] {
                for &(j, wj) in &self.up[1][f[1]] {
                    let base = (i * coarse[1] + j) * coarse[2];
                    for &(k, wk) in &self.up[2][f[2]] {
                        s += wi * wj * wk * e[base + k];
                    }
                }
            }
            *xm += s;
        });
    }
}

fn dense_matrix(op: &StencilOperator) -> DMatrix<f64> {
    let g = op.grid();
    let n = g.len();
    let mut a = DMatrix::zeros(n, n);
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    for c in 0..n {
        x[c] = 1.0;
        op.apply(&x, &mut y);
        for r in 0..n {
            a[(r, c)] = y[r];
        }
        x[c] = 0.0;
    }
    a
}

impl Hierarchy {
    fn build(op: &StencilOperator, settings: &MgSettings) -> Result<Self> {
        let mut levels = vec![Level {
            op: op.clone(),
            transfer: None,
        }];
        loop {
            let cur = &levels.last().unwrap().op;
            let g = *cur.grid();
            if g.len() <= settings.coarse_nodes {
                break;
            }
            let Some((cd, which)) = coarse_dims(g.dims()) else { break };
            let transfer = Transfer::new(g.dims(), cd, which);
            let (coef, reaction) = cur.coefficients();
            let coef_c = transfer.restrict(g.dims(), cd, coef, true);
            let reaction_c = transfer.restrict(g.dims(), cd, reaction, true);
            let grid_c = GridSpec {
                nx: cd[0],
                ny: cd[1],
                nz: cd[2],
                lx: g.lx,
                ly: g.ly,
                lz: g.lz,
            };
            let op_c = StencilOperator::from_coefficients(grid_c, coef_c, reaction_c, true)?;
            levels.last_mut().unwrap().transfer = Some(transfer);
            levels.push(Level {
                op: op_c,
                transfer: None,
            });
        }
        let last = &levels.last().unwrap().op;
        let coarsest = if last.grid().len() <= DENSE_LIMIT {
            match dense_matrix(last).cholesky() {
                Some(c) => Coarsest::Dense(c),
                None => Coarsest::Sweeps,
            }
        } else {
            Coarsest::Sweeps
        };
        Ok(Self { levels, coarsest })
    }

    fn smooth(op: &StencilOperator, b: &[f64], x: &mut [f64], sweeps: usize, weight: f64) {
        let mut ax = vec![0.0; x.len()];
        let diag = op.diagonal();
        for _ in 0..sweeps {
            op.apply(x, &mut ax);
            x.par_iter_mut().enumerate().for_each(|(m, xm)| {
                if !op.is_dirichlet(m) {
                    *xm += weight * (b[m] - ax[m]) / diag[m];
                }
            });
        }
    }

    /// One V-cycle for `A e = r` from a zero guess. `r` must vanish on
    /// Dirichlet rows; so does the result.
    fn vcycle(&self, level: usize, r: &[f64], settings: &MgSettings) -> Vec<f64> {
        let lv = &self.levels[level];
        let op = &lv.op;
        let n = r.len();
        if level + 1 == self.levels.len() {
            return match &self.coarsest {
                Coarsest::Dense(ch) => {
                    let mut e = ch.solve(&DVector::from_column_slice(r)).data.as_vec().clone();
                    for m in 0..n {
                        if op.is_dirichlet(m) {
                            e[m] = 0.0;
                        }
                    }
                    e
                }
                Coarsest::Sweeps => {
                    let mut e = vec![0.0; n];
                    Self::smooth(op, r, &mut e, COARSE_SWEEPS, settings.weight);
                    e
                }
            };
        }
        let mut e = vec![0.0; n];
        Self::smooth(op, r, &mut e, settings.pre_sweeps, settings.weight);
        let mut res = vec![0.0; n];
        op.apply(&e, &mut res);
        res.par_iter_mut().zip(r).for_each(|(a, b)| *a = b - *a);
        let transfer = lv.transfer.as_ref().unwrap();
        let next = &self.levels[level + 1].op;
        let cd = next.grid().dims();
        let mut rc = transfer.restrict(op.grid().dims(), cd, &res, false);
        for (m, v) in rc.iter_mut().enumerate() {
            if next.is_dirichlet(m) {
                *v = 0.0;
            }
        }
        let ec = self.vcycle(level + 1, &rc, settings);
        transfer.prolong_add(op, cd, &ec, &mut e);
        Self::smooth(op, r, &mut e, settings.post_sweeps, settings.weight);
        e
    }
}

/// Fixed chunking keeps the summation order, and so the result, the same
/// for any thread count.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    const CHUNK: usize = 4096;
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partial.iter().sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn mask(op: &StencilOperator, v: &mut [f64]) {
    for (m, x) in v.iter_mut().enumerate() {
        if op.is_dirichlet(m) {
            *x = 0.0;
        }
    }
}

/// Solves `A x = b` from `initial`. Dirichlet values are written into the
/// guess first; each cycle is one V-cycle (inside conjugate gradients when
/// `krylov` is set).
pub fn solve(op: &StencilOperator, initial: &ScalarField, settings: &MgSettings) -> Result<(ScalarField, SolveStats)> {
    let start = Instant::now();
    op.grid().check_same(initial.grid())?;
    let hier = Hierarchy::build(op, settings)?;
    let mut x = initial.values().to_vec();
    op.impose_dirichlet(&mut x);
    let n = x.len();
    let bnorm = norm(op.rhs());
    let (scale, target) = if bnorm > 0.0 {
        (bnorm, settings.tolerance)
    } else {
        (1.0, settings.abs_tolerance)
    };
    let mut r = vec![0.0; n];
    op.residual(&x, &mut r);
    mask(op, &mut r);
    let mut rel = norm(&r) / scale;
    let mut history = vec![rel];
    let mut cycles = 0;
    let mut p = Vec::new();
    let mut rz = 0.0;
    let mut ap = vec![0.0; n];
    while rel > target {
        if cycles == settings.max_cycles || !rel.is_finite() {
            return Err(Error::SolverDiverged {
                cycles,
                residual: rel,
                history,
            });
        }
        let z = hier.vcycle(0, &r, settings);
        cycles += 1;
        if settings.krylov {
            let rz_new = dot(&r, &z);
            if p.is_empty() {
                p = z;
            } else {
                let beta = rz_new / rz;
                p.par_iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
            }
            rz = rz_new;
            op.apply(&p, &mut ap);
            mask(op, &mut ap);
            let alpha = rz / dot(&p, &ap);
            x.par_iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
            r.par_iter_mut().zip(&ap).for_each(|(r, a)| *r -= alpha * a);
        } else {
            x.par_iter_mut().zip(&z).for_each(|(x, z)| *x += z);
            op.residual(&x, &mut r);
            mask(op, &mut r);
        }
        rel = norm(&r) / scale;
        history.push(rel);
    }
    // guard against drift of the recursively updated residual
    if settings.krylov && cycles > 0 {
        op.residual(&x, &mut r);
        mask(op, &mut r);
        rel = norm(&r) / scale;
        *history.last_mut().unwrap() = rel;
    }
    let stats = SolveStats {
        cycles,
        residual: rel,
        history,
        levels: hier.levels.len(),
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((ScalarField::from_vec(*op.grid(), x)?, stats))
}
