//! Radial kernels and their lattice discretization.
//!
//! A kernel `g(s)` is turned into a table of values on signed lattice
//! offsets `(di*dx, dj*dy, dk*dz)`. Smooth kernels are point-sampled.
//! Kernels with a jump (ball indicator, square well) are cell-averaged
//! and then normalised so that `sum(value) * dV` equals the exact
//! integral of the kernel. The `1/r` singularity of the Coulomb and MSA
//! kernels is replaced at the origin by the average over a sphere of one
//! cell volume.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type Profile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Number of sub-samples per axis used when cell-averaging a cell that
/// straddles a kernel discontinuity.
const CELL_SUBSAMPLES: usize = 24;

#[derive(Clone)]
enum Shape {
    Coulomb,
    /// `-depth` on `[inner, outer]`, zero elsewhere (the hard core is left
    /// to the hard-sphere term).
    SquareWell {
        depth: f64,
        inner: f64,
        outer: f64,
    },
    /// MSA electrostatic direct correlation `-k [2B/s - (B/s)^2 r - 1/r]`
    /// for `r <= s`.
    Msa {
        strength: f64,
        b: f64,
        sigma: f64,
    },
    Ball {
        radius: f64,
    },
    Sampled {
        profile: Profile,
        origin: f64,
        support: f64,
    },
}

/// Isotropic convolution kernel `g(|r|)`.
#[derive(Clone)]
pub struct RadialKernel {
    shape: Shape,
}

impl fmt::Debug for RadialKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.shape {
            Shape::Coulomb => write!(f, "Coulomb"),
            Shape::SquareWell { depth, inner, outer } => {
                write!(f, "SquareWell(-{depth} on [{inner}, {outer}])")
            }
            Shape::Msa { strength, b, sigma } => {
                write!(f, "Msa(k={strength}, B={b}, sigma={sigma})")
            }
            Shape::Ball { radius } => write!(f, "Ball(R={radius})"),
            Shape::Sampled { support, .. } => write!(f, "Sampled(support={support})"),
        }
    }
}

impl RadialKernel {
    /// `g(s) = 1/s`.
    pub fn coulomb() -> Self {
        Self {
            shape: Shape::Coulomb,
        }
    }

    /// Square-well attraction of depth `depth` between contact distance
    /// `sigma` and `gamma * sigma`.
    pub fn square_well(depth: f64, sigma: f64, gamma: f64) -> Result<Self> {
        if !(sigma > 0.0 && gamma > 1.0 && depth.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "square well needs sigma > 0, gamma > 1 (got sigma={sigma}, gamma={gamma})"
            )));
        }
        Ok(Self {
            shape: Shape::SquareWell {
                depth,
                inner: sigma,
                outer: gamma * sigma,
            },
        })
    }

    /// MSA second-order direct correlation with prefactor `strength`
    /// (`q_i q_j l_B`), screening parameter `b` and contact distance `sigma`.
    pub fn msa(strength: f64, b: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("MSA sigma must be > 0, got {sigma}")));
        }
        Ok(Self {
            shape: Shape::Msa { strength, b, sigma },
        })
    }

    /// Indicator of the ball `|r| <= radius`.
    pub fn ball(radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!("ball radius must be > 0, got {radius}")));
        }
        Ok(Self {
            shape: Shape::Ball { radius },
        })
    }

    /// Point-sampled kernel with an explicit value at the origin.
    pub fn sampled(
        profile: impl Fn(f64) -> f64 + Send + Sync + 'static,
        origin: f64,
        support: f64,
    ) -> Self {
        Self {
            shape: Shape::Sampled {
                profile: Arc::new(profile),
                origin,
                support,
            },
        }
    }

    /// Distance beyond which the kernel vanishes (`INFINITY` for Coulomb).
    pub fn support(&self) -> f64 {
        match &self.shape {
            Shape::Coulomb => f64::INFINITY,
            Shape::SquareWell { outer, .. } => *outer,
            Shape::Msa { sigma, .. } => *sigma,
            Shape::Ball { radius } => *radius,
            Shape::Sampled { support, .. } => *support,
        }
    }

    /// Continuous profile `g(s)`; for `s = 0` the singular kernels return
    /// infinity.
    pub fn eval(&self, s: f64) -> f64 {
        match &self.shape {
            Shape::Coulomb => 1.0 / s,
            Shape::SquareWell {
                depth,
                inner,
                outer,
            } => {
                if s >= *inner && s <= *outer {
                    -depth
                } else {
                    0.0
                }
            }
            Shape::Msa { strength, b, sigma } => msa_value(*strength, *b, *sigma, s),
            Shape::Ball { radius } => {
                if s <= *radius {
                    1.0
                } else {
                    0.0
                }
            }
            Shape::Sampled {
                profile,
                origin,
                support,
            } => {
                if s == 0.0 {
                    *origin
                } else if s > *support {
                    0.0
                } else {
                    profile(s)
                }
            }
        }
    }

    /// Discretises the kernel on a lattice with the given spacing.
    pub fn discretize(&self, spacing: [f64; 3]) -> Result<DiscreteKernel> {
        let cell = spacing[0] * spacing[1] * spacing[2];
        let r_eq = (3.0 * cell / (4.0 * PI)).cbrt();
        let (origin, scale) = match &self.shape {
            Shape::Coulomb => (Some(1.5 / r_eq), 1.0),
            Shape::Msa { strength, b, sigma } => {
                let a = sigma.min(r_eq);
                let integral = -strength
                    * 4.0
                    * PI
                    * (2.0 * b * a.powi(3) / (3.0 * sigma)
                        - b * b * a.powi(4) / (4.0 * sigma * sigma)
                        - 0.5 * a * a);
                (Some(integral / cell), 1.0)
            }
            Shape::Ball { radius } => {
                let exact = 4.0 / 3.0 * PI * radius.powi(3);
                let raw = self.averaged_sum(spacing)?;
                if raw == 0.0 {
                    // below lattice resolution: all weight on the origin cell
                    return Ok(DiscreteKernel::collapsed(self.clone(), spacing, exact / cell));
                }
                (None, exact / (raw * cell))
            }
            Shape::SquareWell {
                depth,
                inner,
                outer,
            } => {
                let exact = -depth * 4.0 / 3.0 * PI * (outer.powi(3) - inner.powi(3));
                let raw = self.averaged_sum(spacing)?;
                if raw == 0.0 {
                    return Ok(DiscreteKernel::collapsed(self.clone(), spacing, exact / cell));
                }
                (None, exact / (raw * cell))
            }
            Shape::Sampled { origin, .. } => (Some(*origin), 1.0),
        };
        // cell-averaged shapes take the origin from the average too
        let origin = origin.unwrap_or(0.0);
        if !origin.is_finite() {
            return Err(Error::KernelNotFinite(0, 0, 0));
        }
        Ok(DiscreteKernel {
            kernel: self.clone(),
            spacing,
            origin,
            scale,
            point: false,
        })
    }

    fn is_cell_averaged(&self) -> bool {
        matches!(self.shape, Shape::Ball { .. } | Shape::SquareWell { .. })
    }

    /// Sum of raw cell averages over every offset the kernel reaches.
    fn averaged_sum(&self, spacing: [f64; 3]) -> Result<f64> {
        let reach = self.support();
        let m = [0, 1, 2].map(|a| (reach / spacing[a]).ceil() as i64 + 1);
        let mut total = 0.0;
        for di in -m[0]..=m[0] {
            for dj in -m[1]..=m[1] {
                for dk in -m[2]..=m[2] {
                    total += self.cell_average([di, dj, dk], spacing);
                }
            }
        }
        if !total.is_finite() {
            return Err(Error::KernelNotFinite(0, 0, 0));
        }
        Ok(total)
    }

    /// Mean of the kernel over the lattice cell centred at the offset.
    fn cell_average(&self, off: [i64; 3], h: [f64; 3]) -> f64 {
        let c = [0, 1, 2].map(|a| off[a] as f64 * h[a]);
        // nearest and farthest distance from the origin to the cell
        let mut near2 = 0.0;
        let mut far2 = 0.0;
        for a in 0..3 {
            let lo = c[a] - 0.5 * h[a];
            let hi = c[a] + 0.5 * h[a];
            let n = if lo > 0.0 {
                lo
            } else if hi < 0.0 {
                -hi
            } else {
                0.0
            };
            let f = lo.abs().max(hi.abs());
            near2 += n * n;
            far2 += f * f;
        }
        let (near, far) = (near2.sqrt(), far2.sqrt());
        let (a, b, v) = match &self.shape {
            Shape::Ball { radius } => (0.0, *radius, 1.0),
            Shape::SquareWell {
                depth,
                inner,
                outer,
            } => (*inner, *outer, -depth),
            _ => unreachable!("cell averages only for piecewise-constant kernels"),
        };
        if far < a || near > b {
            return 0.0;
        }
        if near >= a && far <= b {
            return v;
        }
        let n = CELL_SUBSAMPLES;
        let mut hits = 0usize;
        for p in 0..n {
            let x = c[0] + ((p as f64 + 0.5) / n as f64 - 0.5) * h[0];
            for q in 0..n {
                let y = c[1] + ((q as f64 + 0.5) / n as f64 - 0.5) * h[1];
                for r in 0..n {
                    let z = c[2] + ((r as f64 + 0.5) / n as f64 - 0.5) * h[2];
                    let s = (x * x + y * y + z * z).sqrt();
                    if s >= a && s <= b {
                        hits += 1;
                    }
                }
            }
        }
        v * hits as f64 / (n * n * n) as f64
    }
}

fn msa_value(strength: f64, b: f64, sigma: f64, r: f64) -> f64 {
    if r > sigma {
        0.0
    } else {
        -strength * (2.0 * b / sigma - (b / sigma).powi(2) * r - 1.0 / r)
    }
}

/// A kernel bound to a lattice spacing; yields the value used for each
/// signed lattice offset.
#[derive(Clone)]
pub struct DiscreteKernel {
    kernel: RadialKernel,
    spacing: [f64; 3],
    origin: f64,
    scale: f64,
    /// Only the origin is nonzero.
    point: bool,
}

impl fmt::Debug for DiscreteKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiscreteKernel")
            .field("kernel", &self.kernel)
            .field("spacing", &self.spacing)
            .finish()
    }
}

impl DiscreteKernel {
    pub fn kernel(&self) -> &RadialKernel {
        &self.kernel
    }

    /// Largest offset index per axis with a possibly nonzero value.
    pub fn reach(&self) -> [i64; 3] {
        let s = self.kernel.support();
        [0, 1, 2].map(|a| {
            if s.is_finite() {
                (s / self.spacing[a]).ceil() as i64 + 1
            } else {
                i64::MAX
            }
        })
    }

    fn collapsed(kernel: RadialKernel, spacing: [f64; 3], origin: f64) -> Self {
        Self {
            kernel,
            spacing,
            origin,
            scale: 0.0,
            point: true,
        }
    }

    pub fn value(&self, di: i64, dj: i64, dk: i64) -> f64 {
        if self.point {
            return if di == 0 && dj == 0 && dk == 0 { self.origin } else { 0.0 };
        }
        if self.kernel.is_cell_averaged() {
            return self.scale * self.kernel.cell_average([di, dj, dk], self.spacing);
        }
        if di == 0 && dj == 0 && dk == 0 {
            return self.origin;
        }
        let h = self.spacing;
        let s = ((di as f64 * h[0]).powi(2) + (dj as f64 * h[1]).powi(2) + (dk as f64 * h[2]).powi(2))
            .sqrt();
        self.scale * self.kernel.eval(s)
    }
}

/// Odd vector kernel `g(|r|) r/|r|`, zero at the origin.
#[derive(Clone)]
pub struct VectorKernel {
    profile: Profile,
    support: f64,
}

impl fmt::Debug for VectorKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VectorKernel(support={})", self.support)
    }
}

impl VectorKernel {
    pub fn new(profile: impl Fn(f64) -> f64 + Send + Sync + 'static, support: f64) -> Self {
        Self {
            profile: Arc::new(profile),
            support,
        }
    }

    pub fn support(&self) -> f64 {
        self.support
    }

    /// Component `axis` of the kernel at the lattice offset.
    pub fn value(&self, off: [i64; 3], spacing: [f64; 3], axis: usize) -> f64 {
        if off == [0, 0, 0] {
            return 0.0;
        }
        let d = [0, 1, 2].map(|a| off[a] as f64 * spacing[a]);
        let s = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        if s > self.support {
            return 0.0;
        }
        (self.profile)(s) * d[axis] / s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coulomb_origin_is_sphere_mean() {
        let h = [0.1, 0.2, 0.3];
        let k = RadialKernel::coulomb().discretize(h).unwrap();
        let r_eq = (3.0 * 0.006 / (4.0 * PI)).cbrt();
        assert!((k.value(0, 0, 0) - 1.5 / r_eq).abs() < 1e-12);
        assert!((k.value(1, 0, 0) - 10.0).abs() < 1e-12);
        assert!((k.value(0, -1, 1) - 1.0 / (0.04f64 + 0.09).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sub_cell_ball_keeps_its_volume_at_the_origin() {
        let h = [0.13, 0.08, 0.06];
        let k = RadialKernel::ball(0.0005).unwrap().discretize(h).unwrap();
        let exact = 4.0 / 3.0 * PI * 0.0005f64.powi(3);
        assert!((k.value(0, 0, 0) * h[0] * h[1] * h[2] - exact).abs() < 1e-24);
        assert_eq!(k.value(-1, 2, 2), 0.0);
    }

    #[test]
    fn ball_is_normalised_to_exact_volume() {
        let h = [0.05, 0.04, 0.06];
        for radius in [0.01, 0.1, 0.23] {
            let k = RadialKernel::ball(radius).unwrap().discretize(h).unwrap();
            let m = k.reach();
            let mut sum = 0.0;
            for i in -m[0]..=m[0] {
                for j in -m[1]..=m[1] {
                    for l in -m[2]..=m[2] {
                        sum += k.value(i, j, l);
                    }
                }
            }
            let vol = sum * h[0] * h[1] * h[2];
            let exact = 4.0 / 3.0 * PI * radius.powi(3);
            assert!((vol - exact).abs() < 1e-12 * exact, "R={radius}");
        }
    }

    #[test]
    fn square_well_is_normalised_to_shell_integral() {
        let h = [0.1316, 0.0765, 0.0616];
        let k = RadialKernel::square_well(0.21, 0.13, 1.2).unwrap().discretize(h).unwrap();
        let m = k.reach();
        let mut sum = 0.0;
        for i in -m[0]..=m[0] {
            for j in -m[1]..=m[1] {
                for l in -m[2]..=m[2] {
                    let v = k.value(i, j, l);
                    assert!(v <= 0.0);
                    sum += v;
                }
            }
        }
        let exact = -0.21 * 4.0 / 3.0 * PI * (0.156f64.powi(3) - 0.13f64.powi(3));
        assert!((sum * h[0] * h[1] * h[2] - exact).abs() < 1e-12 * exact.abs());
    }

    #[test]
    fn msa_contact_value() {
        let (kq, b, s) = (4.5, 0.3, 0.2);
        let k = RadialKernel::msa(kq, b, s).unwrap();
        let expected = -kq * (2.0 * b / s - b * b / s - 1.0 / s);
        assert!((k.eval(s) - expected).abs() < 1e-12);
        assert_eq!(k.eval(s * 1.0001), 0.0);
    }

    #[test]
    fn msa_origin_cell_average() {
        // support larger than the cell sphere: origin value is the mean of
        // the composite expression over the sphere of radius r_eq
        let h = [0.02; 3];
        let (kq, b, s) = (2.0, 0.1, 0.5);
        let k = RadialKernel::msa(kq, b, s).unwrap().discretize(h).unwrap();
        let r_eq = (3.0 * 8e-6 / (4.0 * PI)).cbrt();
        // midpoint rule on the radial integral
        let n = 200_000;
        let mut acc = 0.0;
        for i in 0..n {
            let r = (i as f64 + 0.5) * r_eq / n as f64;
            acc += 4.0 * PI * r * r * msa_value(kq, b, s, r) * r_eq / n as f64;
        }
        let mean = acc / (4.0 / 3.0 * PI * r_eq.powi(3));
        assert!((k.value(0, 0, 0) - mean).abs() < 1e-6 * mean.abs());
    }

    #[test]
    fn sampled_kernel_respects_support() {
        let k = RadialKernel::sampled(|s| s * s, 7.0, 0.25)
            .discretize([0.1; 3])
            .unwrap();
        assert_eq!(k.value(0, 0, 0), 7.0);
        assert!((k.value(2, 0, 0) - 0.04).abs() < 1e-15);
        assert_eq!(k.value(3, 0, 0), 0.0);
    }

    #[test]
    fn rejects_nonfinite_origin() {
        let k = RadialKernel::sampled(|s| s, f64::NAN, 1.0);
        assert!(k.discretize([0.1; 3]).is_err());
    }

    #[test]
    fn vector_kernel_is_odd() {
        let k = VectorKernel::new(|s| 1.0 / s, 1.0);
        let h = [0.1, 0.2, 0.15];
        for a in 0..3 {
            let p = k.value([1, -2, 3], h, a);
            let m = k.value([-1, 2, -3], h, a);
            assert_eq!(p, -m);
        }
        assert_eq!(k.value([0, 0, 0], h, 1), 0.0);
    }
}
