//! In-place 3D complex FFT built from 1D rustfft plans.
//!
//! Layout is row-major with the last axis contiguous, matching the grid
//! index order.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

pub struct Fft3 {
    dims: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("dims", &self.dims).finish()
    }
}

/// Smallest integer `>= n` whose only prime factors are 2, 3 and 5.
pub fn next_smooth(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

impl Fft3 {
    pub fn new(dims: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = dims.map(|n| planner.plan_fft_forward(n));
        let inverse = dims.map(|n| planner.plan_fft_inverse(n));
        Self {
            dims,
            forward,
            inverse,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    /// Unnormalised inverse transform.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
    }

    fn run(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 3]) {
        assert_eq!(data.len(), self.len());
        let [n0, n1, n2] = self.dims;
        let slab = n1 * n2;

        // axis 2: contiguous lines
        let lines_per_task = (4096 / n2).max(1);
        data.par_chunks_mut(n2 * lines_per_task)
            .for_each(|chunk| plans[2].process(chunk));

        // axis 1: transpose each i-slab to [k][j]
        data.par_chunks_mut(slab).for_each(|s| {
            let mut t = vec![Complex64::new(0.0, 0.0); slab];
            for j in 0..n1 {
                for k in 0..n2 {
                    t[k * n1 + j] = s[j * n2 + k];
                }
            }
            plans[1].process(&mut t);
            for j in 0..n1 {
                for k in 0..n2 {
                    s[j * n2 + k] = t[k * n1 + j];
                }
            }
        });

        // axis 0: gather lines into [jk][i], transform, scatter back
        let mut t = vec![Complex64::new(0.0, 0.0); data.len()];
        {
            let src: &[Complex64] = data;
            t.par_chunks_mut(n0).enumerate().for_each(|(jk, line)| {
                for (i, v) in line.iter_mut().enumerate() {
                    *v = src[i * slab + jk];
                }
            });
        }
        t.par_chunks_mut(n0 * (4096 / n0).max(1))
            .for_each(|chunk| plans[0].process(chunk));
        data.par_chunks_mut(slab).enumerate().for_each(|(i, s)| {
            for (jk, v) in s.iter_mut().enumerate() {
                *v = t[jk * n0 + i];
            }
        });
    }
}
