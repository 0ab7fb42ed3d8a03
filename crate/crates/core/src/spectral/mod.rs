//! Linear (non-circular) convolution of node fields with radial kernels.
//!
//! The integral `h(r) = int f(r') g(|r - r'|) dr'` is discretised with
//! trapezoid weights on the node lattice and evaluated through a
//! zero-padded FFT. The kernel is embedded over all signed offsets
//! `-(n-1)..=(n-1)` per axis, so the padded size `>= 2n - 1` removes any
//! wrap-around.

mod fft;
mod kernel;

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

pub use fft::{next_smooth, Fft3};
pub use kernel::{DiscreteKernel, RadialKernel, VectorKernel};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, VectorField};

/// Which argument order the odd vector kernel is evaluated in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// `int f(r') g(r' - r) dr'`, used when building weighted densities.
    DensityWeighting,
    /// `int f(r') g(r - r') dr'`, used for chemical potentials.
    PotentialWeighting,
}

fn padded_dims(grid: &GridSpec) -> [usize; 3] {
    grid.dims().map(|n| next_smooth(2 * n - 1))
}

fn zero_spectrum(len: usize) -> Vec<Complex64> {
    vec![Complex64::new(0.0, 0.0); len]
}

/// Writes `value(di, dj, dk)` at every signed offset into a padded array.
fn embed_offsets(
    grid: &GridSpec,
    padded: [usize; 3],
    reach: [i64; 3],
    value: impl Fn(i64, i64, i64) -> f64 + Sync,
) -> Result<Vec<Complex64>> {
    let dims = grid.dims();
    let m = [0, 1, 2].map(|a| reach[a].min(dims[a] as i64 - 1));
    let [p0, p1, p2] = padded;
    let mut buf = zero_spectrum(p0 * p1 * p2);
    let bad = std::sync::Mutex::new(None);
    buf.par_chunks_mut(p1 * p2).enumerate().for_each(|(a, slab)| {
        let di = if a < p0 / 2 + 1 { a as i64 } else { a as i64 - p0 as i64 };
        if di.abs() > m[0] {
            return;
        }
        for dj in -m[1]..=m[1] {
            let b = dj.rem_euclid(p1 as i64) as usize;
            for dk in -m[2]..=m[2] {
                let c = dk.rem_euclid(p2 as i64) as usize;
                let v = value(di, dj, dk);
                if !v.is_finite() {
                    *bad.lock().unwrap() = Some((di, dj, dk));
                }
                slab[b * p2 + c] = Complex64::new(v, 0.0);
            }
        }
    });
    if let Some((i, j, k)) = bad.into_inner().unwrap() {
        return Err(Error::KernelNotFinite(i, j, k));
    }
    Ok(buf)
}

/// Trapezoid-weighted copy of `f` placed in the low corner of the padded
/// array; the rest is zero.
fn embed_field(f: &ScalarField, padded: [usize; 3]) -> Vec<Complex64> {
    let g = f.grid();
    let [nx, ny, nz] = g.dims();
    let [_, p1, p2] = padded;
    let mut buf = zero_spectrum(padded.iter().product());
    let vals = f.values();
    buf.par_chunks_mut(p1 * p2).enumerate().for_each(|(i, slab)| {
        if i >= nx {
            return;
        }
        let wx = g.trapezoid_weight(0, i);
        for j in 0..ny {
            let wxy = wx * g.trapezoid_weight(1, j);
            let src = &vals[(i * ny + j) * nz..(i * ny + j + 1) * nz];
            let dst = &mut slab[j * p2..j * p2 + nz];
            for (k, (d, s)) in dst.iter_mut().zip(src).enumerate() {
                *d = Complex64::new(wxy * g.trapezoid_weight(2, k) * s, 0.0);
            }
        }
    });
    buf
}

fn extract(grid: &GridSpec, padded: [usize; 3], buf: &[Complex64], scale: f64, imag: bool) -> ScalarField {
    let [nx, ny, nz] = grid.dims();
    let [_, p1, p2] = padded;
    let mut out = vec![0.0; nx * ny * nz];
    out.par_chunks_mut(ny * nz).enumerate().for_each(|(i, slab)| {
        for j in 0..ny {
            for k in 0..nz {
                let c = buf[(i * p1 + j) * p2 + k];
                slab[j * nz + k] = scale * if imag { c.im } else { c.re };
            }
        }
    });
    ScalarField::from_vec(*grid, out).expect("extracted field has grid size")
}

/// Precomputed kernel spectrum for one grid.
#[derive(Clone)]
pub struct ConvolutionPlan {
    grid: GridSpec,
    padded: [usize; 3],
    fft: Arc<Fft3>,
    spectrum: Vec<Complex64>,
    kernel: DiscreteKernel,
}

impl std::fmt::Debug for ConvolutionPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConvolutionPlan")
            .field("grid", &self.grid)
            .field("padded", &self.padded)
            .field("kernel", &self.kernel)
            .finish()
    }
}

/// Reusable FFT engine for one padded size.
pub fn fft_for(grid: &GridSpec) -> Arc<Fft3> {
    Arc::new(Fft3::new(padded_dims(grid)))
}

impl ConvolutionPlan {
    pub fn new(grid: &GridSpec, kernel: &RadialKernel) -> Result<Self> {
        Self::with_fft(grid, kernel, fft_for(grid))
    }

    /// Builds a plan that shares an existing FFT engine of matching size.
    pub fn with_fft(grid: &GridSpec, kernel: &RadialKernel, fft: Arc<Fft3>) -> Result<Self> {
        let padded = padded_dims(grid);
        if fft.dims() != padded {
            return Err(Error::GridMismatch(format!(
                "fft size {:?} does not match padded grid {:?}",
                fft.dims(),
                padded
            )));
        }
        let dk = kernel.discretize(grid.spacing())?;
        let mut spectrum = embed_offsets(grid, padded, dk.reach(), |i, j, k| dk.value(i, j, k))?;
        fft.forward(&mut spectrum);
        Ok(Self {
            grid: *grid,
            padded,
            fft,
            spectrum,
            kernel: dk,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn padded_dims(&self) -> [usize; 3] {
        self.padded
    }

    pub fn kernel(&self) -> &DiscreteKernel {
        &self.kernel
    }

    pub fn apply(&self, f: &ScalarField) -> Result<ScalarField> {
        self.grid.check_same(f.grid())?;
        let mut buf = embed_field(f, self.padded);
        self.fft.forward(&mut buf);
        buf.par_iter_mut()
            .zip(self.spectrum.par_iter())
            .for_each(|(b, k)| *b *= k);
        self.fft.inverse(&mut buf);
        let scale = 1.0 / self.fft.len() as f64;
        Ok(extract(&self.grid, self.padded, &buf, scale, false))
    }

    /// Convolves two fields with one forward/inverse transform pair by
    /// packing them as real and imaginary parts (the kernel is real and
    /// even, so its spectrum is real and the parts do not mix).
    pub fn apply_pair(&self, a: &ScalarField, b: &ScalarField) -> Result<(ScalarField, ScalarField)> {
        self.grid.check_same(a.grid())?;
        self.grid.check_same(b.grid())?;
        let mut buf = embed_field(a, self.padded);
        let im = embed_field(b, self.padded);
        buf.par_iter_mut()
            .zip(im.par_iter())
            .for_each(|(x, y)| x.im = y.re);
        drop(im);
        self.fft.forward(&mut buf);
        buf.par_iter_mut()
            .zip(self.spectrum.par_iter())
            .for_each(|(b, k)| *b *= k.re);
        self.fft.inverse(&mut buf);
        let scale = 1.0 / self.fft.len() as f64;
        Ok((
            extract(&self.grid, self.padded, &buf, scale, false),
            extract(&self.grid, self.padded, &buf, scale, true),
        ))
    }
}

/// Plan for an odd vector kernel; one spectrum per Cartesian component.
#[derive(Clone)]
pub struct VectorConvolutionPlan {
    grid: GridSpec,
    padded: [usize; 3],
    fft: Arc<Fft3>,
    spectra: [Vec<Complex64>; 3],
    kernel: VectorKernel,
}

impl std::fmt::Debug for VectorConvolutionPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VectorConvolutionPlan")
            .field("grid", &self.grid)
            .field("kernel", &self.kernel)
            .finish()
    }
}

impl VectorConvolutionPlan {
    pub fn new(grid: &GridSpec, kernel: &VectorKernel) -> Result<Self> {
        let padded = padded_dims(grid);
        let fft = fft_for(grid);
        let h = grid.spacing();
        let reach = [0, 1, 2].map(|a| (kernel.support() / h[a]).ceil() as i64 + 1);
        let mut spectra = Vec::with_capacity(3);
        for axis in 0..3 {
            let mut s = embed_offsets(grid, padded, reach, |i, j, k| kernel.value([i, j, k], h, axis))?;
            fft.forward(&mut s);
            spectra.push(s);
        }
        let spectra: [Vec<Complex64>; 3] = spectra.try_into().expect("three components");
        Ok(Self {
            grid: *grid,
            padded,
            fft,
            spectra,
            kernel: kernel.clone(),
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `h_a(r) = int f(r') g_a(r - r') dr'`, negated for
    /// [`Orientation::DensityWeighting`].
    pub fn apply_vector_weight(
        &self,
        f: &ScalarField,
        orientation: Option<Orientation>,
    ) -> Result<VectorField> {
        let orientation = orientation.ok_or(Error::OrientationUnset)?;
        self.grid.check_same(f.grid())?;
        let sign = match orientation {
            Orientation::PotentialWeighting => 1.0,
            Orientation::DensityWeighting => -1.0,
        };
        let mut input = embed_field(f, self.padded);
        self.fft.forward(&mut input);
        let scale = sign / self.fft.len() as f64;
        let mut comps = Vec::with_capacity(3);
        for spectrum in &self.spectra {
            let mut buf: Vec<Complex64> = input
                .par_iter()
                .zip(spectrum.par_iter())
                .map(|(a, b)| a * b)
                .collect();
            self.fft.inverse(&mut buf);
            comps.push(extract(&self.grid, self.padded, &buf, scale, false));
        }
        let z = comps.pop().unwrap();
        let y = comps.pop().unwrap();
        let x = comps.pop().unwrap();
        VectorField::new(x, y, z)
    }
}

/// Brute-force `O(N^2)` evaluation of the same trapezoid sum; the oracle
/// for [`ConvolutionPlan::apply`].
pub fn direct_convolution(f: &ScalarField, value: impl Fn(i64, i64, i64) -> f64 + Sync) -> ScalarField {
    let g = *f.grid();
    let [nx, ny, nz] = g.dims();
    let vals = f.values();
    let out: Vec<f64> = (0..g.len())
        .into_par_iter()
        .map(|m| {
            let (a, b, c) = g.coords(m);
            let mut acc = 0.0;
            for i in 0..nx {
                for j in 0..ny {
                    for k in 0..nz {
                        let w = g.node_weight(i, j, k);
                        acc += w
                            * vals[(i * ny + j) * nz + k]
                            * value(a as i64 - i as i64, b as i64 - j as i64, c as i64 - k as i64);
                    }
                }
            }
            acc
        })
        .collect();
    ScalarField::from_vec(g, out).unwrap()
}

/// Largest `|fft - direct| / max|direct|` for one kernel and field.
pub fn oracle_error(f: &ScalarField, kernel: &RadialKernel) -> Result<f64> {
    let plan = ConvolutionPlan::new(f.grid(), kernel)?;
    let fast = plan.apply(f)?;
    let dk = plan.kernel().clone();
    let slow = direct_convolution(f, |i, j, k| dk.value(i, j, k));
    let scale = slow.max_abs().max(f64::MIN_POSITIVE);
    Ok(crate::grid::max_abs_diff(&fast, &slow)? / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: GridSpec, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ScalarField::from_vec(grid, v).unwrap()
    }

    #[test]
    fn constant_kernel_integrates_field() {
        let g = GridSpec::new(5, 6, 7, 1.0, 2.0, 3.0).unwrap();
        let plan = ConvolutionPlan::new(&g, &RadialKernel::sampled(|_| 1.0, 1.0, 100.0)).unwrap();
        let h = plan.apply(&ScalarField::constant(g, 1.0)).unwrap();
        for v in h.values() {
            assert!((v - 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_kernel_is_identity_inside() {
        let g = GridSpec::new(6, 6, 6, 1.0, 1.0, 1.0).unwrap();
        let w0 = g.cell_volume();
        let plan = ConvolutionPlan::new(&g, &RadialKernel::sampled(|_| 0.0, 1.0 / w0, 1e-3)).unwrap();
        let f = random_field(g, 3);
        let h = plan.apply(&f).unwrap();
        for i in 1..5 {
            for j in 1..5 {
                for k in 1..5 {
                    assert!((h.get(i, j, k) - f.get(i, j, k)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let g = GridSpec::new(4, 5, 6, 1.0, 1.0, 1.0).unwrap();
        let plan = ConvolutionPlan::new(&g, &RadialKernel::coulomb()).unwrap();
        assert_eq!(plan.apply(&ScalarField::zeros(g)).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn coulomb_spike_matches_direct_sum() {
        let g = GridSpec::new(5, 5, 5, 1.0, 1.2, 0.9).unwrap();
        let mut f = ScalarField::zeros(g);
        f.set(2, 2, 2, 1.0);
        assert!(oracle_error(&f, &RadialKernel::coulomb()).unwrap() < 1e-10);
    }

    #[test]
    fn square_well_random_matches_direct_sum() {
        let g = GridSpec::new(6, 6, 6, 0.5, 0.5, 0.5).unwrap();
        let f = random_field(g, 11);
        let k = RadialKernel::square_well(0.21, 0.2, 1.2).unwrap();
        assert!(oracle_error(&f, &k).unwrap() < 1e-10);
    }

    #[test]
    fn all_kernel_families_match_direct_sum() {
        let g = GridSpec::new(7, 8, 6, 0.7, 0.9, 0.6).unwrap();
        let f = random_field(g, 5);
        let kernels = [
            RadialKernel::coulomb(),
            RadialKernel::square_well(0.17, 0.13, 1.2).unwrap(),
            RadialKernel::msa(4.5, 0.2, 0.35).unwrap(),
            RadialKernel::ball(0.22).unwrap(),
        ];
        for k in &kernels {
            assert!(oracle_error(&f, k).unwrap() < 1e-10, "{k:?}");
        }
    }

    #[test]
    fn no_wrap_around() {
        let g = GridSpec::new(8, 8, 8, 1.0, 1.0, 1.0).unwrap();
        let mut f = ScalarField::zeros(g);
        f.set(0, 0, 0, 1.0);
        let plan = ConvolutionPlan::new(&g, &RadialKernel::ball(0.5).unwrap()).unwrap();
        let h = plan.apply(&f).unwrap();
        // exact zero up to FFT roundoff; an aliased image would be O(peak)
        assert!(h.get(7, 7, 7).abs() < 1e-15 * h.max_abs());
        assert!(h.get(0, 0, 0) > 0.0);
    }

    #[test]
    fn reapplication_is_bitwise_identical() {
        let g = GridSpec::new(6, 7, 5, 1.0, 1.0, 1.0).unwrap();
        let plan = ConvolutionPlan::new(&g, &RadialKernel::coulomb()).unwrap();
        let f = random_field(g, 9);
        let a = plan.apply(&f).unwrap();
        let b = plan.apply(&f).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn pair_matches_single() {
        let g = GridSpec::new(6, 5, 7, 1.0, 0.8, 1.1).unwrap();
        let plan = ConvolutionPlan::new(&g, &RadialKernel::coulomb()).unwrap();
        let a = random_field(g, 1);
        let b = random_field(g, 2);
        let (ha, hb) = plan.apply_pair(&a, &b).unwrap();
        let sa = plan.apply(&a).unwrap();
        let sb = plan.apply(&b).unwrap();
        assert!(crate::grid::max_abs_diff(&ha, &sa).unwrap() < 1e-12 * sa.max_abs());
        assert!(crate::grid::max_abs_diff(&hb, &sb).unwrap() < 1e-12 * sb.max_abs());
    }

    #[test]
    fn vector_plan_requires_orientation_and_is_odd() {
        let g = GridSpec::new(5, 5, 5, 1.0, 1.0, 1.0).unwrap();
        let plan = VectorConvolutionPlan::new(&g, &VectorKernel::new(|s| (-s).exp(), 0.6)).unwrap();
        let f = random_field(g, 4);
        assert!(matches!(plan.apply_vector_weight(&f, None), Err(Error::OrientationUnset)));
        let a = plan.apply_vector_weight(&f, Some(Orientation::PotentialWeighting)).unwrap();
        let b = plan.apply_vector_weight(&f, Some(Orientation::DensityWeighting)).unwrap();
        for (ca, cb) in a.components().iter().zip(b.components()) {
            for (x, y) in ca.values().iter().zip(cb.values()) {
                assert_eq!(*x, -*y);
            }
        }
    }

    #[test]
    fn vector_plan_matches_direct_sum() {
        let g = GridSpec::new(5, 5, 5, 1.0, 1.0, 1.0).unwrap();
        let vk = VectorKernel::new(|s| 1.0 / (s * s), 0.8);
        let plan = VectorConvolutionPlan::new(&g, &vk).unwrap();
        let f = random_field(g, 8);
        let out = plan.apply_vector_weight(&f, Some(Orientation::PotentialWeighting)).unwrap();
        let h = g.spacing();
        for (axis, comp) in out.components().iter().enumerate() {
            let slow = direct_convolution(&f, |i, j, k| vk.value([i, j, k], h, axis));
            let err = crate::grid::max_abs_diff(comp, &slow).unwrap() / slow.max_abs();
            assert!(err < 1e-10);
        }
    }

    #[test]
    fn odd_kernel_kills_constants_inside() {
        let g = GridSpec::new(9, 9, 9, 1.0, 1.0, 1.0).unwrap();
        let plan = VectorConvolutionPlan::new(&g, &VectorKernel::new(|_| 1.0, 0.26)).unwrap();
        let out = plan
            .apply_vector_weight(&ScalarField::constant(g, 2.0), Some(Orientation::PotentialWeighting))
            .unwrap();
        for c in out.components() {
            for i in 3..6 {
                for j in 3..6 {
                    for k in 3..6 {
                        assert!(c.get(i, j, k).abs() < 1e-12);
                    }
                }
            }
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn linearity(sa in 0u64..1000, sb in 1000u64..2000, x in -5.0..5.0f64, y in -5.0..5.0f64) {
            let g = GridSpec::new(5, 6, 5, 1.0, 1.0, 1.0).unwrap();
            let plan = ConvolutionPlan::new(&g, &RadialKernel::msa(1.0, 0.3, 0.4).unwrap()).unwrap();
            let a = random_field(g, sa);
            let b = random_field(g, sb);
            let mut comb = a.scaled(x);
            comb.axpy(y, &b).unwrap();
            let lhs = plan.apply(&comb).unwrap();
            let mut rhs = plan.apply(&a).unwrap().scaled(x);
            rhs.axpy(y, &plan.apply(&b).unwrap()).unwrap();
            proptest::prop_assert!(crate::grid::max_abs_diff(&lhs, &rhs).unwrap() <= 1e-12 * rhs.max_abs().max(1e-300));
        }
    }
}
