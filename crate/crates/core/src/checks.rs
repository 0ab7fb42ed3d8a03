//! Self-checks against brute-force oracles, shared by the CLI and the
//! acceptance suite. No randomness: inputs come from fixed formulas and a
//! low-discrepancy sequence.

use serde::{Deserialize, Serialize};

use crate::cdft::{finite_difference_gap, HsFunctional, PointDensities};
use crate::error::Result;
use crate::grid::{GridSpec, ScalarField};
use crate::spectral::{oracle_error, RadialKernel};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConvolutionCase {
    pub kernel: String,
    pub dims: [usize; 3],
    pub max_rel_error: f64,
}

/// Smooth but non-separable test field.
pub fn probe_field(grid: GridSpec) -> ScalarField {
    ScalarField::from_fn(grid, |x, y, z| (1.3 * x + 0.7 * y).sin() * (0.9 * z + 0.4).cos() + 0.3)
}

fn probe_kernels() -> Result<Vec<RadialKernel>> {
    Ok(vec![
        RadialKernel::coulomb(),
        RadialKernel::ball(0.15)?,
        RadialKernel::square_well(0.2, 0.12, 1.5)?,
        RadialKernel::msa(2.0, 0.3, 0.25)?,
    ])
}

/// FFT convolution against the direct sum for every probe kernel on grids
/// up to 8^3 nodes.
pub fn convolution_check() -> Result<Vec<ConvolutionCase>> {
    let grids = [
        GridSpec::new(4, 4, 4, 0.3, 0.3, 0.3)?,
        GridSpec::new(5, 6, 7, 0.4, 0.6, 0.9)?,
        GridSpec::new(8, 8, 8, 0.7, 0.7, 0.7)?,
        GridSpec::new(8, 5, 6, 1.0, 0.5, 0.6)?,
    ];
    let mut out = Vec::new();
    for g in grids {
        let f = probe_field(g);
        for k in probe_kernels()? {
            out.push(ConvolutionCase {
                kernel: format!("{k:?}"),
                dims: g.dims(),
                max_rel_error: oracle_error(&f, &k)?,
            });
        }
    }
    Ok(out)
}

/// Point `index` of an additive-recurrence sequence in the admissible
/// weighted-density box (n3 < 0.8).
pub fn sample_point(index: usize) -> PointDensities {
    // fractional parts of multiples of square roots of primes
    const ALPHA: [f64; 10] = [
        1.414_213_562_373_095,
        1.732_050_807_568_877,
        2.236_067_977_499_79,
        2.645_751_311_064_591,
        3.316_624_790_355_4,
        3.605_551_275_463_989,
        4.123_105_625_617_661,
        4.358_898_943_540_674,
        4.795_831_523_312_719,
        5.385_164_807_134_504,
    ];
    let u: Vec<f64> = ALPHA.iter().map(|a| ((index as f64 + 1.0) * a).fract()).collect();
    PointDensities {
        n0: 2.0 * u[0],
        n1: u[1],
        n2: 3.0 * u[2],
        n3: 0.8 * u[3],
        n1v: [u[4] - 0.5, u[5] - 0.5, u[6] - 0.5],
        n2v: [2.0 * u[7] - 1.0, 2.0 * u[8] - 1.0, 2.0 * u[9] - 1.0],
    }
}

/// Largest finite-difference gap of the hard-sphere partials over `points`
/// sample points.
pub fn derivative_check(points: usize, variant: HsFunctional) -> Result<f64> {
    let mut worst = 0.0_f64;
    for m in 0..points {
        worst = worst.max(finite_difference_gap(&sample_point(m), variant, 1e-6)?);
    }
    Ok(worst)
}
