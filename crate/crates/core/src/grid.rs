//! Square periodic grid with Fourier spectral differentiation and midpoint
//! quadrature.
//!
//! Samples are stored row-major: `data[i * n + j]` holds the value at
//! `(x1, x2) = (coord(i), coord(j))`. Node coordinates are
//! `-L + k h` with `h = 2L / n`, so the origin is the node `(n/2, n/2)`.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Boundary-to-peak modulus ratio above which a field is considered
/// affected by the periodic truncation.
pub const BOUNDARY_WARN_RATIO: f64 = 1e-10;

struct GridInner {
    half_extent: f64,
    n: usize,
    h: f64,
    coords: Vec<f64>,
    /// Angular wavenumbers, Nyquist mode kept (used by the Laplacian).
    k: Vec<f64>,
    /// Angular wavenumbers with the Nyquist mode zeroed (first derivatives).
    kd: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

#[derive(Clone)]
pub struct Grid2D {
    inner: Arc<GridInner>,
}

impl fmt::Debug for Grid2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid2D")
            .field("half_extent", &self.inner.half_extent)
            .field("n", &self.inner.n)
            .finish()
    }
}

impl PartialEq for Grid2D {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.n == other.inner.n
                && self.inner.half_extent == other.inner.half_extent)
    }
}

impl Grid2D {
    /// `n` must be a power of two and at least 32.
    pub fn new(half_extent: f64, n: usize) -> Result<Self> {
        if !(half_extent.is_finite() && half_extent > 0.0) {
            return Err(Error::Config(format!(
                "grid half extent must be positive, got {half_extent}"
            )));
        }
        if n < 32 || !n.is_power_of_two() {
            return Err(Error::Config(format!(
                "points per side must be a power of two >= 32, got {n}"
            )));
        }
        let h = 2.0 * half_extent / n as f64;
        let coords = (0..n).map(|i| -half_extent + i as f64 * h).collect();
        let dk = std::f64::consts::PI / half_extent;
        let half = n / 2;
        let signed = |p: usize| -> f64 {
            if p < half {
                p as f64
            } else if p == half {
                half as f64
            } else {
                p as f64 - n as f64
            }
        };
        let k: Vec<f64> = (0..n).map(|p| dk * signed(p)).collect();
        let kd = (0..n)
            .map(|p| if p == half { 0.0 } else { k[p] })
            .collect();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        Ok(Grid2D {
            inner: Arc::new(GridInner {
                half_extent,
                n,
                h,
                coords,
                k,
                kd,
                fwd,
                inv,
            }),
        })
    }

    pub fn n(&self) -> usize {
        self.inner.n
    }

    pub fn half_extent(&self) -> f64 {
        self.inner.half_extent
    }

    pub fn spacing(&self) -> f64 {
        self.inner.h
    }

    /// Total number of nodes, `n * n`.
    pub fn len(&self) -> usize {
        self.inner.n * self.inner.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coords(&self) -> &[f64] {
        &self.inner.coords
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.inner.coords[i]
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.inner.n + j
    }

    pub fn node(&self, idx: usize) -> [f64; 2] {
        let n = self.inner.n;
        [self.inner.coords[idx / n], self.inner.coords[idx % n]]
    }

    /// Index of the node at the physical origin.
    pub fn origin_index(&self) -> usize {
        let c = self.inner.n / 2;
        self.index(c, c)
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.inner.k
    }

    pub fn derivative_wavenumbers(&self) -> &[f64] {
        &self.inner.kd
    }

    /// Area of one cell, `h^2`.
    pub fn cell_area(&self) -> f64 {
        self.inner.h * self.inner.h
    }

    /// Forward 2D DFT in place (unnormalized).
    pub fn fft2(&self, data: &mut [C64]) {
        self.transform(data, &self.inner.fwd);
    }

    /// Inverse 2D DFT in place, normalized so that `ifft2(fft2(u)) == u`.
    pub fn ifft2(&self, data: &mut [C64]) {
        self.transform(data, &self.inner.inv);
        let scale = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.inner.n;
        assert_eq!(data.len(), n * n, "field does not match grid");
        let mut scratch = vec![C64::default(); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
        transpose(data, n);
        plan.process_with_scratch(data, &mut scratch);
        transpose(data, n);
    }

    /// Midpoint (periodic trapezoid) rule, `h^2 * sum f`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        assert_eq!(f.len(), self.len(), "samples do not match grid");
        self.cell_area() * f.iter().sum::<f64>()
    }

    /// Evaluate `f(x1, x2)` at every node.
    pub fn sample<T>(&self, mut f: impl FnMut(f64, f64) -> T) -> Vec<T> {
        let c = &self.inner.coords;
        let mut out = Vec::with_capacity(self.len());
        for &x1 in c {
            for &x2 in c {
                out.push(f(x1, x2));
            }
        }
        out
    }
}

fn transpose(data: &mut [C64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// A complex wave function sampled on a [`Grid2D`].
#[derive(Clone)]
pub struct ComplexField2D {
    grid: Grid2D,
    data: Vec<C64>,
    mass: f64,
}

impl fmt::Debug for ComplexField2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ComplexField2D")
            .field("grid", &self.grid)
            .field("mass", &self.mass)
            .finish()
    }
}

impl ComplexField2D {
    /// Rejects data of the wrong length and non-finite samples.
    pub fn new(grid: &Grid2D, data: Vec<C64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::Config(format!(
                "field has {} samples, grid needs {}",
                data.len(),
                grid.len()
            )));
        }
        if let Some(idx) = data.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::Numerical(format!(
                "non-finite sample at node {:?}",
                grid.node(idx)
            )));
        }
        let mass = grid.cell_area() * data.iter().map(|v| v.norm_sqr()).sum::<f64>();
        Ok(ComplexField2D {
            grid: grid.clone(),
            data,
            mass,
        })
    }

    pub fn zeros(grid: &Grid2D) -> Self {
        ComplexField2D {
            grid: grid.clone(),
            data: vec![C64::default(); grid.len()],
            mass: 0.0,
        }
    }

    pub fn from_fn(grid: &Grid2D, f: impl FnMut(f64, f64) -> C64) -> Result<Self> {
        let data = grid.sample(f);
        Self::new(grid, data)
    }

    pub fn from_real(grid: &Grid2D, values: &[f64]) -> Result<Self> {
        Self::new(grid, values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    /// `h^2 * sum |u|^2`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn l2_norm(&self) -> f64 {
        self.mass.sqrt()
    }

    pub fn at(&self, i: usize, j: usize) -> C64 {
        self.data[self.grid.index(i, j)]
    }

    pub fn modulus(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.norm()).collect()
    }

    pub fn real_part(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.re).collect()
    }

    pub fn imag_part(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.im).collect()
    }

    pub fn max_modulus(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `<self, other> = h^2 sum conj(self) * other`.
    pub fn inner(&self, other: &ComplexField2D) -> C64 {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let s: C64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum();
        s * self.grid.cell_area()
    }

    pub fn scaled(&self, c: C64) -> Self {
        let data = self.data.iter().map(|v| v * c).collect();
        ComplexField2D {
            grid: self.grid.clone(),
            data,
            mass: self.mass * c.norm_sqr(),
        }
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: C64, other: &ComplexField2D, beta: C64) -> Result<Self> {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        Self::new(&self.grid, data)
    }

    /// Rescale to unit mass.
    pub fn normalized(&self) -> Result<Self> {
        if self.mass <= 0.0 {
            return Err(Error::Numerical("cannot normalize the zero field".into()));
        }
        Ok(self.scaled(C64::new(1.0 / self.mass.sqrt(), 0.0)))
    }

    pub fn conj(&self) -> Self {
        ComplexField2D {
            grid: self.grid.clone(),
            data: self.data.iter().map(|v| v.conj()).collect(),
            mass: self.mass,
        }
    }

    /// Ratio of the largest modulus on the outermost ring of nodes to the
    /// global maximum modulus.
    pub fn boundary_ratio(&self) -> f64 {
        let n = self.grid.n();
        let peak = self.max_modulus();
        if peak == 0.0 {
            return 0.0;
        }
        let mut edge = 0.0f64;
        for k in 0..n {
            for idx in [
                self.grid.index(0, k),
                self.grid.index(n - 1, k),
                self.grid.index(k, 0),
                self.grid.index(k, n - 1),
            ] {
                edge = edge.max(self.data[idx].norm());
            }
        }
        edge / peak
    }

    /// Logs a warning when the field is not negligible on the boundary.
    pub fn check_boundary(&self, what: &str) -> f64 {
        let ratio = self.boundary_ratio();
        if ratio > BOUNDARY_WARN_RATIO {
            log::warn!(
                "{what}: boundary modulus is {ratio:.2e} of the peak; enlarge the domain"
            );
        }
        ratio
    }
}

/// Spectral Laplacian under periodic extension.
pub fn laplacian(u: &ComplexField2D) -> ComplexField2D {
    let grid = u.grid();
    let k = grid.wavenumbers();
    let n = grid.n();
    let mut hat = u.data().to_vec();
    grid.fft2(&mut hat);
    for i in 0..n {
        for j in 0..n {
            hat[i * n + j] *= -(k[i] * k[i] + k[j] * k[j]);
        }
    }
    grid.ifft2(&mut hat);
    ComplexField2D::new(grid, hat).expect("Laplacian of a finite field is finite")
}

/// Spectral partial derivatives `(d/dx1, d/dx2)`.
pub fn gradient(u: &ComplexField2D) -> (ComplexField2D, ComplexField2D) {
    let grid = u.grid();
    let mut hat = u.data().to_vec();
    grid.fft2(&mut hat);
    let (d1, d2) = gradient_from_hat(grid, &hat);
    (
        ComplexField2D::new(grid, d1).expect("finite derivative"),
        ComplexField2D::new(grid, d2).expect("finite derivative"),
    )
}

/// Partial derivatives from precomputed Fourier coefficients.
pub(crate) fn gradient_from_hat(grid: &Grid2D, hat: &[C64]) -> (Vec<C64>, Vec<C64>) {
    let n = grid.n();
    let kd = grid.derivative_wavenumbers();
    let mut d1 = vec![C64::default(); hat.len()];
    let mut d2 = vec![C64::default(); hat.len()];
    for i in 0..n {
        for j in 0..n {
            let idx = i * n + j;
            d1[idx] = C64::new(0.0, kd[i]) * hat[idx];
            d2[idx] = C64::new(0.0, kd[j]) * hat[idx];
        }
    }
    grid.ifft2(&mut d1);
    grid.ifft2(&mut d2);
    (d1, d2)
}

/// `h^2 * sum f` over the grid nodes.
pub fn integrate(grid: &Grid2D, f: &[f64]) -> f64 {
    grid.integrate(f)
}

/// Writes a field snapshot: a header line `N L a Omega` followed by `N^2`
/// lines `re im` in row-major order, all reals with 17 significant digits.
pub fn write_snapshot(
    path: impl AsRef<Path>,
    u: &ComplexField2D,
    a: f64,
    omega: f64,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let grid = u.grid();
    let mut body = || -> std::io::Result<()> {
        writeln!(
            w,
            "{} {:.16e} {:.16e} {:.16e}",
            grid.n(),
            grid.half_extent(),
            a,
            omega
        )?;
        for v in u.data() {
            writeln!(w, "{:.16e} {:.16e}", v.re, v.im)?;
        }
        w.flush()
    };
    body().map_err(|e| Error::io(path, e))
}

/// A snapshot read back from disk.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub field: ComplexField2D,
    pub a: f64,
    pub omega: f64,
}

pub fn read_snapshot(path: impl AsRef<Path>) -> Result<Snapshot> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse(format!("{}: empty snapshot", path.display())))?
        .map_err(|e| Error::io(path, e))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(Error::Parse(format!(
            "{}: header must be `N L a Omega`, got {header:?}",
            path.display()
        )));
    }
    let n: usize = parse_num(fields[0], path)?;
    let half_extent: f64 = parse_num(fields[1], path)?;
    let a: f64 = parse_num(fields[2], path)?;
    let omega: f64 = parse_num(fields[3], path)?;
    let grid = Grid2D::new(half_extent, n)?;
    let mut data = Vec::with_capacity(grid.len());
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(re), Some(im), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse(format!(
                "{}: sample line must be `re im`, got {line:?}",
                path.display()
            )));
        };
        data.push(C64::new(parse_num(re, path)?, parse_num(im, path)?));
    }
    let field = ComplexField2D::new(&grid, data)?;
    Ok(Snapshot { field, a, omega })
}

fn parse_num<T: std::str::FromStr>(s: &str, path: &Path) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Parse(format!("{}: cannot parse {s:?}", path.display())))
}
