//! Integrals over a sphere of radius `R` around every node.
//!
//! `int f(r') delta(|r' - r| - R) dr' = R^2 int f(r + R s) dOmega`, evaluated
//! with a product rule: uniform trapezoid in the azimuth and Gauss-Legendre
//! in `cos(polar)`. Off-grid samples are trilinear, zero outside the box.
//!
//! Because the lattice is uniform the sample offsets and interpolation
//! weights are the same at every node, so nodes whose whole sphere lies
//! inside the box use a merged sparse stencil; the rest evaluate sample by
//! sample with the zero-extension test.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{trilinear_sample, GridSpec, ScalarField, VectorField};

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Unit directions and solid-angle weights of the product rule; the
/// weights sum to `4 pi`.
pub fn sphere_rule(n_azimuth: usize, n_polar: usize) -> Vec<([f64; 3], f64)> {
    let (ct, wt) = gauss_legendre(n_polar);
    let mut out = Vec::with_capacity(n_azimuth * n_polar);
    for a in 0..n_azimuth {
        let th = 2.0 * PI * a as f64 / n_azimuth as f64;
        for (c, w) in ct.iter().zip(&wt) {
            let s = (1.0 - c * c).sqrt();
            // exact zeros keep on-axis samples from straddling a face
            let snap = |v: f64| if v.abs() < 1e-14 { 0.0 } else { v };
            out.push((
                [snap(s * th.cos()), snap(s * th.sin()), snap(*c)],
                w * 2.0 * PI / n_azimuth as f64,
            ));
        }
    }
    out
}

#[derive(Debug, Clone)]
struct Sample {
    base: [i64; 3],
    frac: [f64; 3],
    weight: f64,
    dir: [f64; 3],
}

type Stencil = Vec<(isize, f64)>;

/// Precomputed sphere quadrature for one grid and radius.
#[derive(Debug, Clone)]
pub struct ShellStencil {
    grid: GridSpec,
    radius: f64,
    samples: Vec<Sample>,
    interior_lo: [usize; 3],
    interior_hi: [usize; 3],
    scalar: Stencil,
    vector: [Stencil; 3],
}

impl ShellStencil {
    pub fn new(grid: &GridSpec, radius: f64, order: [usize; 2]) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!("shell radius must be > 0, got {radius}")));
        }
        if order[0] == 0 || order[1] == 0 {
            return Err(Error::InvalidArgument("quadrature order must be positive".into()));
        }
        let h = grid.spacing();
        let dims = grid.dims();
        let mut samples = Vec::new();
        for (dir, w) in sphere_rule(order[0], order[1]) {
            let mut base = [0i64; 3];
            let mut frac = [0.0; 3];
            for a in 0..3 {
                let s = radius * dir[a] / h[a];
                let b = s.floor();
                base[a] = b as i64;
                frac[a] = s - b;
            }
            samples.push(Sample {
                base,
                frac,
                weight: radius * radius * w,
                dir,
            });
        }
        let mut interior_lo = [0usize; 3];
        let mut interior_hi = [0usize; 3];
        for a in 0..3 {
            let bmin = samples.iter().map(|s| s.base[a]).min().unwrap();
            let bmax = samples.iter().map(|s| s.base[a]).max().unwrap();
            interior_lo[a] = (-bmin).max(0) as usize;
            let hi = dims[a] as i64 - 2 - bmax;
            interior_hi[a] = hi.max(-1) as usize;
            if hi < 0 {
                interior_lo[a] = 1;
                interior_hi[a] = 0;
            }
        }
        let strides = [(dims[1] * dims[2]) as isize, dims[2] as isize, 1];
        let mut merged: [BTreeMap<isize, f64>; 4] = Default::default();
        for s in &samples {
            for corner in 0..8 {
                let mut off = 0isize;
                let mut w = 1.0;
                for a in 0..3 {
                    let up = (corner >> (2 - a)) & 1;
                    off += (s.base[a] + up as i64) as isize * strides[a];
                    w *= if up == 1 { s.frac[a] } else { 1.0 - s.frac[a] };
                }
                if w == 0.0 {
                    continue;
                }
                *merged[0].entry(off).or_insert(0.0) += s.weight * w;
                for a in 0..3 {
                    *merged[a + 1].entry(off).or_insert(0.0) += s.weight * w * s.dir[a];
                }
            }
        }
        let [m0, m1, m2, m3] = merged.map(|m| m.into_iter().collect::<Vec<_>>());
        Ok(Self {
            grid: *grid,
            radius,
            samples,
            interior_lo,
            interior_hi,
            scalar: m0,
            vector: [m1, m2, m3],
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn is_interior(&self, idx: [usize; 3]) -> bool {
        (0..3).all(|a| idx[a] >= self.interior_lo[a] && idx[a] <= self.interior_hi[a])
    }

    /// Sum over samples with weight `weight * dir[component]` (or just
    /// `weight` for `None`), honouring zero extension.
    fn boundary_node(&self, vals: &[f64], idx: [usize; 3], component: Option<usize>) -> f64 {
        let dims = self.grid.dims();
        let mut acc = 0.0;
        'samples: for s in &self.samples {
            let mut lower = [0usize; 3];
            for a in 0..3 {
                let lo = idx[a] as i64 + s.base[a];
                let n = dims[a] as i64;
                if lo < 0 || lo > n - 1 || (lo == n - 1 && s.frac[a] != 0.0) {
                    continue 'samples;
                }
                lower[a] = lo as usize;
            }
            let mut v = 0.0;
            for corner in 0..8 {
                let mut w = 1.0;
                let mut p = [0usize; 3];
                for a in 0..3 {
                    let up = (corner >> (2 - a)) & 1;
                    w *= if up == 1 { s.frac[a] } else { 1.0 - s.frac[a] };
                    p[a] = lower[a] + up;
                }
                if w != 0.0 {
                    v += w * vals[(p[0] * dims[1] + p[1]) * dims[2] + p[2]];
                }
            }
            let scale = match component {
                None => 1.0,
                Some(a) => s.dir[a],
            };
            acc += s.weight * scale * v;
        }
        acc
    }

    fn run(&self, f: &ScalarField, component: Option<usize>) -> Result<ScalarField> {
        self.grid.check_same(f.grid())?;
        let g = self.grid;
        let vals = f.values();
        let stencil = match component {
            None => &self.scalar,
            Some(a) => &self.vector[a],
        };
        let out: Vec<f64> = (0..g.len())
            .into_par_iter()
            .map(|m| {
                let (i, j, k) = g.coords(m);
                if self.is_interior([i, j, k]) {
                    let mut acc = 0.0;
                    for &(off, w) in stencil {
                        acc += w * vals[(m as isize + off) as usize];
                    }
                    acc
                } else {
                    self.boundary_node(vals, [i, j, k], component)
                }
            })
            .collect();
        ScalarField::from_vec(g, out)
    }

    /// `R^2 int f(r + R s) dOmega` at every node.
    pub fn apply(&self, f: &ScalarField) -> Result<ScalarField> {
        self.run(f, None)
    }

    /// `R^2 int f(r + R s) s dOmega` at every node.
    pub fn apply_vector(&self, f: &ScalarField) -> Result<VectorField> {
        VectorField::new(self.run(f, Some(0))?, self.run(f, Some(1))?, self.run(f, Some(2))?)
    }

    /// `R^2 int F(r + R s) . s dOmega` for a vector field `F`.
    pub fn apply_dot(&self, f: &VectorField) -> Result<ScalarField> {
        let mut out = self.run(&f.x, Some(0))?;
        out.axpy(1.0, &self.run(&f.y, Some(1))?)?;
        out.axpy(1.0, &self.run(&f.z, Some(2))?)?;
        Ok(out)
    }
}

/// Sphere integral of `f` at every node (builds a one-off stencil).
pub fn shell_integral(f: &ScalarField, radius: f64, order: [usize; 2]) -> Result<ScalarField> {
    ShellStencil::new(f.grid(), radius, order)?.apply(f)
}

/// Sample-by-sample evaluation through [`trilinear_sample`]; the oracle for
/// the stencil path. Returns the scalar integral and the `s`-weighted one.
pub fn shell_integral_direct(
    f: &ScalarField,
    radius: f64,
    order: [usize; 2],
) -> (ScalarField, [ScalarField; 3]) {
    let g = *f.grid();
    let rule = sphere_rule(order[0], order[1]);
    let rows: Vec<[f64; 4]> = (0..g.len())
        .into_par_iter()
        .map(|m| {
            let (i, j, k) = g.coords(m);
            let c = g.position(i, j, k);
            let mut acc = [0.0; 4];
            for (d, w) in &rule {
                let p = [c[0] + radius * d[0], c[1] + radius * d[1], c[2] + radius * d[2]];
                let v = radius * radius * w * trilinear_sample(f, p);
                acc[0] += v;
                for a in 0..3 {
                    acc[a + 1] += v * d[a];
                }
            }
            acc
        })
        .collect();
    let col = |c: usize| ScalarField::from_vec(g, rows.iter().map(|r| r[c]).collect()).unwrap();
    (col(0), [col(1), col(2), col(3)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre(16);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // exact for degree 31
        let p30: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert!((p30 - 2.0 / 31.0).abs() < 1e-14);
        let (x5, w5) = gauss_legendre(5);
        assert!(x5[2].abs() < 1e-15);
        assert!((w5[2] - 128.0 / 225.0).abs() < 1e-14);
    }

    #[test]
    fn sphere_weights_sum_to_full_solid_angle() {
        let total: f64 = sphere_rule(16, 16).iter().map(|(_, w)| w).sum();
        assert!((total - 4.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn constant_gives_sphere_area_inside() {
        let g = GridSpec::new(12, 13, 11, 1.0, 1.2, 0.9).unwrap();
        let r = 0.17;
        let out = shell_integral(&ScalarField::constant(g, 2.5), r, [16, 16]).unwrap();
        let area = 4.0 * PI * r * r * 2.5;
        for m in 0..g.len() {
            let (i, j, k) = g.coords(m);
            let p = g.position(i, j, k);
            let inside = (0..3).all(|a| p[a] >= r && p[a] <= g.lengths()[a] - r);
            if inside {
                assert!((out.values()[m] - area).abs() < 1e-6 * area);
            }
        }
    }

    #[test]
    fn linear_field_at_centre() {
        let g = GridSpec::new(9, 9, 9, 1.0, 1.0, 1.0).unwrap();
        let f = ScalarField::from_fn(g, |x, _, _| x);
        let r = 0.23;
        let out = shell_integral(&f, r, [16, 16]).unwrap();
        let expected = 4.0 * PI * r * r * 0.5;
        assert!((out.get(4, 4, 4) - expected).abs() < 1e-6 * expected);
    }

    #[test]
    fn stencil_matches_direct_sampling_everywhere() {
        let g = GridSpec::new(7, 8, 6, 0.7, 0.6, 0.55).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let f = ScalarField::from_vec(g, (0..g.len()).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let r = 0.137;
        let st = ShellStencil::new(&g, r, [12, 10]).unwrap();
        let (s, v) = shell_integral_direct(&f, r, [12, 10]);
        let fast = st.apply(&f).unwrap();
        assert!(crate::grid::max_abs_diff(&fast, &s).unwrap() < 1e-12);
        let fv = st.apply_vector(&f).unwrap();
        for (a, b) in fv.components().iter().zip(&v) {
            assert!(crate::grid::max_abs_diff(a, b).unwrap() < 1e-12);
        }
    }

    #[test]
    fn zero_field_gives_zero() {
        let g = GridSpec::new(5, 5, 5, 1.0, 1.0, 1.0).unwrap();
        let out = shell_integral(&ScalarField::zeros(g), 0.3, [16, 16]).unwrap();
        assert_eq!(out.max_abs(), 0.0);
    }

    #[test]
    fn vector_shell_of_constant_vanishes_inside() {
        let g = GridSpec::new(9, 9, 9, 1.0, 1.0, 1.0).unwrap();
        let st = ShellStencil::new(&g, 0.2, [16, 16]).unwrap();
        let v = st.apply_vector(&ScalarField::constant(g, 3.0)).unwrap();
        for c in v.components() {
            assert!(c.get(4, 4, 4).abs() < 1e-13);
        }
    }
}
