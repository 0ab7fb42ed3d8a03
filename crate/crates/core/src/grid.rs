//! Uniform node-centred lattice on the box `(0, lx) x (0, ly) x (0, lz)`.
//!
//! Nodes sit on the boundary: node `(0, 0, 0)` is the origin and node
//! `(nx-1, ny-1, nz-1)` is `(lx, ly, lz)`. Values are stored with `k` (z)
//! fastest, i.e. the flat index of node `(i, j, k)` is `(i*ny + j)*nz + k`.
//! Both the FFT layout and the stencil code rely on this order.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub lx: f64,
    pub ly: f64,
    pub lz: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, nz: usize, lx: f64, ly: f64, lz: f64) -> Result<Self> {
        if nx < 4 || ny < 4 || nz < 4 {
            return Err(Error::InvalidGrid(format!(
                "node counts must be >= 4, got {nx}x{ny}x{nz}"
            )));
        }
        for (name, l) in [("lx", lx), ("ly", ly), ("lz", lz)] {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid(format!("{name} must be positive, got {l}")));
            }
        }
        Ok(Self { nx, ny, nz, lx, ly, lz })
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn lengths(&self) -> [f64; 3] {
        [self.lx, self.ly, self.lz]
    }

    pub fn dx(&self) -> f64 {
        self.lx / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / (self.ny - 1) as f64
    }

    pub fn dz(&self) -> f64 {
        self.lz / (self.nz - 1) as f64
    }

    pub fn spacing(&self) -> [f64; 3] {
        [self.dx(), self.dy(), self.dz()]
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx() * self.dy() * self.dz()
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.ny + j) * self.nz + k
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let k = idx % self.nz;
        let ij = idx / self.nz;
        (ij / self.ny, ij % self.ny, k)
    }

    #[inline]
    pub fn position(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            i as f64 * self.dx(),
            j as f64 * self.dy(),
            k as f64 * self.dz(),
        ]
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| p[a] >= 0.0 && p[a] <= self.lengths()[a])
    }

    /// Trapezoid weight (including spacing) of index `i` along `axis`.
    #[inline]
    pub fn trapezoid_weight(&self, axis: usize, i: usize) -> f64 {
        let n = self.dims()[axis];
        let h = self.spacing()[axis];
        if i == 0 || i == n - 1 {
            0.5 * h
        } else {
            h
        }
    }

    /// Trapezoid quadrature weight of a node (control-volume size).
    pub fn node_weight(&self, i: usize, j: usize, k: usize) -> f64 {
        self.trapezoid_weight(0, i) * self.trapezoid_weight(1, j) * self.trapezoid_weight(2, k)
    }

    pub fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_vec(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(x, y, z)` at every node.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                for k in 0..grid.nz {
                    let [x, y, z] = grid.position(i, j, k);
                    values.push(f(x, y, z));
                }
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.idx(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.grid.idx(i, j, k);
        self.values[idx] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v *= c);
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| v * c)
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &ScalarField) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        self.values
            .iter_mut()
            .zip(&other.values)
            .for_each(|(s, &o)| *s += a * o);
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the first non-finite value, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub x: ScalarField,
    pub y: ScalarField,
    pub z: ScalarField,
}

impl VectorField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            x: ScalarField::zeros(grid),
            y: ScalarField::zeros(grid),
            z: ScalarField::zeros(grid),
        }
    }

    pub fn new(x: ScalarField, y: ScalarField, z: ScalarField) -> Result<Self> {
        x.grid().check_same(y.grid())?;
        x.grid().check_same(z.grid())?;
        Ok(Self { x, y, z })
    }

    pub fn grid(&self) -> &GridSpec {
        self.x.grid()
    }

    pub fn components(&self) -> [&ScalarField; 3] {
        [&self.x, &self.y, &self.z]
    }

    pub fn components_mut(&mut self) -> [&mut ScalarField; 3] {
        [&mut self.x, &mut self.y, &mut self.z]
    }

    /// Pointwise dot product.
    pub fn dot(&self, other: &VectorField) -> Result<ScalarField> {
        self.grid().check_same(other.grid())?;
        let mut out = ScalarField::zeros(*self.grid());
        for (a, b) in self.components().into_iter().zip(other.components()) {
            for ((o, &va), &vb) in out.values_mut().iter_mut().zip(a.values()).zip(b.values()) {
                *o += va * vb;
            }
        }
        Ok(out)
    }
}

/// Face of the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Face {
    XLow,
    XHigh,
    YLow,
    YHigh,
    ZLow,
    ZHigh,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FaceCondition {
    /// Prescribed values on the face nodes, indexed `i*nz + k`.
    Dirichlet(Vec<f64>),
    NoFlux,
}

/// Boundary topology: Dirichlet on `y = 0` and `y = ly`, no-flux on the
/// four x/z faces. The topology is fixed; only the Dirichlet payload varies.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryClass {
    nx: usize,
    nz: usize,
    y_low: Vec<f64>,
    y_high: Vec<f64>,
}

impl BoundaryClass {
    pub fn new(grid: &GridSpec, y_low: Vec<f64>, y_high: Vec<f64>) -> Result<Self> {
        let n = grid.nx * grid.nz;
        if y_low.len() != n || y_high.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: y_low.len().min(y_high.len()),
            });
        }
        Ok(Self {
            nx: grid.nx,
            nz: grid.nz,
            y_low,
            y_high,
        })
    }

    pub fn uniform(grid: &GridSpec, low: f64, high: f64) -> Self {
        let n = grid.nx * grid.nz;
        Self {
            nx: grid.nx,
            nz: grid.nz,
            y_low: vec![low; n],
            y_high: vec![high; n],
        }
    }

    /// Dirichlet data taken from the y-face nodes of `f`.
    pub fn from_field(f: &ScalarField) -> Self {
        let g = *f.grid();
        let mut y_low = Vec::with_capacity(g.nx * g.nz);
        let mut y_high = Vec::with_capacity(g.nx * g.nz);
        for i in 0..g.nx {
            for k in 0..g.nz {
                y_low.push(f.get(i, 0, k));
                y_high.push(f.get(i, g.ny - 1, k));
            }
        }
        Self {
            nx: g.nx,
            nz: g.nz,
            y_low,
            y_high,
        }
    }

    pub fn condition(&self, face: Face) -> FaceCondition {
        match face {
            Face::YLow => FaceCondition::Dirichlet(self.y_low.clone()),
            Face::YHigh => FaceCondition::Dirichlet(self.y_high.clone()),
            _ => FaceCondition::NoFlux,
        }
    }

    #[inline]
    pub fn low(&self, i: usize, k: usize) -> f64 {
        self.y_low[i * self.nz + k]
    }

    #[inline]
    pub fn high(&self, i: usize, k: usize) -> f64 {
        self.y_high[i * self.nz + k]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.nz)
    }

    /// Writes the Dirichlet values into the y-face nodes of `f`.
    pub fn impose(&self, f: &mut ScalarField) {
        let g = *f.grid();
        for i in 0..g.nx {
            for k in 0..g.nz {
                f.set(i, 0, k, self.low(i, k));
                f.set(i, g.ny - 1, k, self.high(i, k));
            }
        }
    }
}

/// Trilinear interpolation of `f` at `p`; zero outside the box.
pub fn trilinear_sample(f: &ScalarField, p: [f64; 3]) -> f64 {
    let g = f.grid();
    if !g.contains(p) {
        return 0.0;
    }
    let dims = g.dims();
    let h = g.spacing();
    let mut base = [0usize; 3];
    let mut t = [0.0; 3];
    for a in 0..3 {
        let s = p[a] / h[a];
        let i = (s.floor() as usize).min(dims[a] - 2);
        base[a] = i;
        t[a] = s - i as f64;
    }
    let mut acc = 0.0;
    for di in 0..2 {
        let wx = if di == 0 { 1.0 - t[0] } else { t[0] };
        for dj in 0..2 {
            let wy = if dj == 0 { 1.0 - t[1] } else { t[1] };
            for dk in 0..2 {
                let wz = if dk == 0 { 1.0 - t[2] } else { t[2] };
                acc += wx * wy * wz * f.get(base[0] + di, base[1] + dj, base[2] + dk);
            }
        }
    }
    acc
}

pub fn max_abs_diff(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    a.grid().check_same(b.grid())?;
    Ok(a.values()
        .iter()
        .zip(b.values())
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())))
}

/// Trapezoid-rule volume integral.
pub fn integrate(f: &ScalarField) -> f64 {
    let g = f.grid();
    let mut total = 0.0;
    for i in 0..g.nx {
        let wx = g.trapezoid_weight(0, i);
        for j in 0..g.ny {
            let wxy = wx * g.trapezoid_weight(1, j);
            let mut line = 0.0;
            for k in 0..g.nz {
                line += g.trapezoid_weight(2, k) * f.get(i, j, k);
            }
            total += wxy * line;
        }
    }
    total
}

const DUMP_MAGIC: &[u8; 8] = b"PNPFLD01";

/// Field dump encodings used by `dump-fields` and checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpFormat {
    /// `PNPFLD01`, then nx, ny, nz as u64 LE, lx, ly, lz as f64 LE, then
    /// the node values as f64 LE in flat index order.
    Binary,
    /// Header line `# nx ny nz lx ly lz`, then `i,j,k,x,y,z,value` rows in
    /// flat index order.
    Csv,
}

pub fn write_field(path: &Path, f: &ScalarField, format: DumpFormat) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let g = f.grid();
    match format {
        DumpFormat::Binary => {
            w.write_all(DUMP_MAGIC)?;
            for n in [g.nx, g.ny, g.nz] {
                w.write_all(&(n as u64).to_le_bytes())?;
            }
            for l in [g.lx, g.ly, g.lz] {
                w.write_all(&l.to_le_bytes())?;
            }
            for v in f.values() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        DumpFormat::Csv => {
            writeln!(w, "# {} {} {} {:e} {:e} {:e}", g.nx, g.ny, g.nz, g.lx, g.ly, g.lz)?;
            writeln!(w, "i,j,k,x,y,z,value")?;
            for (idx, v) in f.values().iter().enumerate() {
                let (i, j, k) = g.coords(idx);
                let [x, y, z] = g.position(i, j, k);
                writeln!(w, "{i},{j},{k},{x:e},{y:e},{z:e},{v:e}")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_field(path: &Path, format: DumpFormat) -> Result<ScalarField> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);
    match format {
        DumpFormat::Binary => {
            let mut magic = [0u8; 8];
            r.read_exact(&mut magic)?;
            if &magic != DUMP_MAGIC {
                return Err(Error::Format("bad field dump magic".into()));
            }
            let mut b8 = [0u8; 8];
            let mut dims = [0usize; 3];
            for d in dims.iter_mut() {
                r.read_exact(&mut b8)?;
                *d = u64::from_le_bytes(b8) as usize;
            }
            let mut lens = [0.0; 3];
            for l in lens.iter_mut() {
                r.read_exact(&mut b8)?;
                *l = f64::from_le_bytes(b8);
            }
            let grid = GridSpec::new(dims[0], dims[1], dims[2], lens[0], lens[1], lens[2])?;
            let mut values = Vec::with_capacity(grid.len());
            for _ in 0..grid.len() {
                r.read_exact(&mut b8)?;
                values.push(f64::from_le_bytes(b8));
            }
            ScalarField::from_vec(grid, values)
        }
        DumpFormat::Csv => {
            let mut lines = r.lines();
            let header = lines
                .next()
                .ok_or_else(|| Error::Format("empty field dump".into()))??;
            let parts: Vec<&str> = header.trim_start_matches('#').split_whitespace().collect();
            if parts.len() != 6 {
                return Err(Error::Format(format!("bad header `{header}`")));
            }
            let parse_u = |s: &str| s.parse::<usize>().map_err(|e| Error::Format(e.to_string()));
            let parse_f = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(e.to_string()));
            let grid = GridSpec::new(
                parse_u(parts[0])?,
                parse_u(parts[1])?,
                parse_u(parts[2])?,
                parse_f(parts[3])?,
                parse_f(parts[4])?,
                parse_f(parts[5])?,
            )?;
            let _columns = lines.next();
            let mut values = Vec::with_capacity(grid.len());
            for line in lines {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let v = line
                    .rsplit(',')
                    .next()
                    .ok_or_else(|| Error::Format("bad row".into()))?;
                values.push(parse_f(v)?);
            }
            ScalarField::from_vec(grid, values)
        }
    }
}
