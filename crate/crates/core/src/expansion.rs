//! Linearized Townes operators and the correction fields of the refined
//! blow-up expansion
//!
//! ```text
//! ν ≈ Q + Ω²ε̄⁴Ψ₁ + Ω²ε̄⁵Ψ₂ + iΩ³ε̄⁶Φ_I
//! ```
//!
//! with `𝓛 = -Δ + 1 - Q²` (kernel `Q`) and `𝓛̃ = -Δ + 1 - 3Q²` (kernel
//! `∂₁Q, ∂₂Q`). Fields here are real and stored as plain vectors on a
//! [`Grid2D`]; the public results are wrapped as [`ComplexField2D`] with zero
//! imaginary part.

use crate::error::{Error, Result};
use crate::grid::{gradient, ComplexField2D, Grid2D, C64};
use crate::townes::Townes;

/// Half-extent of the grid the correction problems are solved on. The
/// corrections decay slower than `Q`, so this is twice the comparison box.
pub const SOLVE_HALF_EXTENT: f64 = 20.0;
pub const SOLVE_N: usize = 512;

/// Relative size of a right-hand side's kernel component that still counts
/// as solvable.
pub const SOLVABILITY_TOL: f64 = 1e-8;

pub fn solve_grid() -> Grid2D {
    Grid2D::new(SOLVE_HALF_EXTENT, SOLVE_N).expect("valid solve grid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    /// `-Δ + 1 - Q²`
    L,
    /// `-Δ + 1 - 3Q²`
    LTilde,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// `‖A x - b‖ / ‖b‖` after projecting out the kernel.
    pub relative_residual: f64,
}

#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    kind: OperatorKind,
    grid: Grid2D,
    q: Vec<f64>,
    potential: Vec<f64>,
    /// Kernel fields as lifted from the radial profile.
    raw_kernel: Vec<Vec<f64>>,
    /// Orthonormal basis of the same span.
    kernel: Vec<Vec<f64>>,
    pub tol: f64,
    pub max_iter: usize,
}

fn dot(grid: &Grid2D, a: &[f64], b: &[f64]) -> f64 {
    grid.cell_area() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

fn norm(grid: &Grid2D, a: &[f64]) -> f64 {
    dot(grid, a, a).sqrt()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yk, xk) in y.iter_mut().zip(x) {
        *yk += alpha * xk;
    }
}

fn to_complex(v: &[f64]) -> Vec<C64> {
    v.iter().map(|&x| C64::new(x, 0.0)).collect()
}

pub(crate) fn real_field(grid: &Grid2D, v: &[f64]) -> ComplexField2D {
    ComplexField2D::new(grid, to_complex(v)).expect("finite field")
}

/// `Q(|x|)` on every node, using the Bessel tail beyond the profile's range.
fn sample_q(townes: &Townes, grid: &Grid2D) -> Vec<f64> {
    grid.sample(|x1, x2| townes.profile.value(x1.hypot(x2)))
}

fn sample_q_gradient(townes: &Townes, grid: &Grid2D) -> (Vec<f64>, Vec<f64>) {
    grid.sample(|x1, x2| {
        let r = x1.hypot(x2);
        if r == 0.0 {
            (0.0, 0.0)
        } else {
            let dq = townes.profile.eval(r).1;
            (dq * x1 / r, dq * x2 / r)
        }
    })
    .into_iter()
    .unzip()
}

/// Spectral gradient of a real field, evaluated at the origin node.
fn gradient_at_origin(grid: &Grid2D, v: &[f64]) -> [f64; 2] {
    let (d1, d2) = gradient(&real_field(grid, v));
    let o = grid.origin_index();
    [d1.data()[o].re, d2.data()[o].re]
}

impl LinearizedOperator {
    pub fn new(kind: OperatorKind, townes: &Townes, grid: &Grid2D) -> Result<Self> {
        let q = sample_q(townes, grid);
        let c = match kind {
            OperatorKind::L => 1.0,
            OperatorKind::LTilde => 3.0,
        };
        let potential = q.iter().map(|v| 1.0 - c * v * v).collect();
        let raw_kernel = match kind {
            OperatorKind::L => vec![q.clone()],
            OperatorKind::LTilde => {
                let (g1, g2) = sample_q_gradient(townes, grid);
                vec![g1, g2]
            }
        };
        // Gram–Schmidt
        let mut kernel: Vec<Vec<f64>> = Vec::new();
        for k in &raw_kernel {
            let mut v = k.clone();
            for b in &kernel {
                let c = dot(grid, b, &v);
                axpy(&mut v, -c, b);
            }
            let nv = norm(grid, &v);
            if !(nv > 0.0) {
                return Err(Error::Numerical("degenerate kernel basis".into()));
            }
            v.iter_mut().for_each(|x| *x /= nv);
            kernel.push(v);
        }
        Ok(LinearizedOperator {
            kind,
            grid: grid.clone(),
            q,
            potential,
            raw_kernel,
            kernel,
            tol: 1e-11,
            max_iter: 2000,
        })
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    /// `Q` on the operator's grid.
    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// Orthonormal kernel basis.
    pub fn kernel(&self) -> &[Vec<f64>] {
        &self.kernel
    }

    /// Kernel fields before orthonormalization (`Q`, or `∂₁Q, ∂₂Q`).
    pub fn raw_kernel(&self) -> &[Vec<f64>] {
        &self.raw_kernel
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let grid = &self.grid;
        let n = grid.n();
        let k = grid.wavenumbers();
        let mut hat = to_complex(v);
        grid.fft2(&mut hat);
        for p in 0..n {
            for q in 0..n {
                hat[p * n + q] *= k[p] * k[p] + k[q] * k[q];
            }
        }
        grid.ifft2(&mut hat);
        hat.iter()
            .zip(v)
            .zip(&self.potential)
            .map(|((l, x), w)| l.re + w * x)
            .collect()
    }

    /// `(1 - Δ)^{-1} v`.
    fn precondition(&self, v: &[f64]) -> Vec<f64> {
        let grid = &self.grid;
        let n = grid.n();
        let k = grid.wavenumbers();
        let mut hat = to_complex(v);
        grid.fft2(&mut hat);
        for p in 0..n {
            for q in 0..n {
                hat[p * n + q] /= 1.0 + k[p] * k[p] + k[q] * k[q];
            }
        }
        grid.ifft2(&mut hat);
        hat.iter().map(|c| c.re).collect()
    }

    /// Removes the kernel component in place.
    pub fn project(&self, v: &mut [f64]) {
        for b in &self.kernel {
            let c = dot(&self.grid, b, v);
            axpy(v, -c, b);
        }
    }

    /// `‖A k‖ / ‖k‖` for each raw kernel field.
    pub fn kernel_residuals(&self) -> Vec<f64> {
        self.raw_kernel
            .iter()
            .map(|k| norm(&self.grid, &self.apply(k)) / norm(&self.grid, k))
            .collect()
    }

    /// Inner products of `rhs` with the orthonormal kernel basis.
    pub fn kernel_components(&self, rhs: &[f64]) -> Vec<f64> {
        self.kernel.iter().map(|b| dot(&self.grid, b, rhs)).collect()
    }

    /// The solution of `A x = rhs` orthogonal to the kernel. Requires `rhs`
    /// to be orthogonal to the kernel up to [`SOLVABILITY_TOL`].
    pub fn solve_kernel_projected(&self, rhs: &[f64]) -> Result<SolveReport> {
        self.solve_with_scale(rhs, norm(&self.grid, rhs))
    }

    /// As [`Self::solve_kernel_projected`], with solvability judged relative
    /// to `scale` instead of `‖rhs‖`.
    pub fn solve_with_scale(&self, rhs: &[f64], scale: f64) -> Result<SolveReport> {
        let grid = &self.grid;
        assert_eq!(rhs.len(), grid.len(), "right-hand side does not match grid");
        let bnorm = norm(grid, rhs);
        if bnorm == 0.0 {
            return Ok(SolveReport {
                solution: vec![0.0; rhs.len()],
                iterations: 0,
                relative_residual: 0.0,
            });
        }
        let tol = SOLVABILITY_TOL * scale.max(bnorm);
        for (index, inner) in self.kernel_components(rhs).into_iter().enumerate() {
            if inner.abs() > tol {
                return Err(Error::Orthogonality { index, inner, tol });
            }
        }
        let mut b = rhs.to_vec();
        self.project(&mut b);
        let op = |v: &[f64]| {
            let mut w = v.to_vec();
            self.project(&mut w);
            let mut out = self.apply(&w);
            self.project(&mut out);
            out
        };
        let pre = |v: &[f64]| {
            let mut w = v.to_vec();
            self.project(&mut w);
            let mut out = self.precondition(&w);
            self.project(&mut out);
            out
        };
        let mut x = vec![0.0; b.len()];
        let mut iterations = 0;
        let mut rel = 1.0;
        // restarted on the true residual to guard against drift
        for _ in 0..4 {
            let ax = op(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bk, ak)| bk - ak).collect();
            rel = norm(grid, &r) / bnorm;
            if rel < self.tol {
                break;
            }
            let (dx, it) = minres(grid, &op, &pre, &r, self.tol * bnorm / norm(grid, &r), self.max_iter);
            iterations += it;
            axpy(&mut x, 1.0, &dx);
        }
        let ax = op(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bk, ak)| bk - ak).collect();
        rel = rel.min(norm(grid, &r) / bnorm);
        if rel > 1e-8 {
            return Err(Error::Numerical(format!(
                "kernel-projected solve stalled at relative residual {rel:e} after {iterations} iterations"
            )));
        }
        self.project(&mut x);
        Ok(SolveReport {
            solution: x,
            iterations,
            relative_residual: rel,
        })
    }

    /// Adds a kernel combination so that the spectral gradient vanishes at
    /// the origin node. Only meaningful for `𝓛̃`.
    fn pin_origin_gradient(&self, v: &mut [f64]) -> Result<()> {
        let g = gradient_at_origin(&self.grid, v);
        let h0 = gradient_at_origin(&self.grid, &self.raw_kernel[0]);
        let h1 = gradient_at_origin(&self.grid, &self.raw_kernel[1]);
        // columns: gradients of ∂₁Q and ∂₂Q at 0
        let (a, b, c, d) = (h0[0], h1[0], h0[1], h1[1]);
        let det = a * d - b * c;
        if !(det.abs() > 1e-12) {
            return Err(Error::Numerical("Hessian of Q at the origin is singular".into()));
        }
        let c1 = -(d * g[0] - b * g[1]) / det;
        let c2 = -(a * g[1] - c * g[0]) / det;
        axpy(v, c1, &self.raw_kernel[0]);
        axpy(v, c2, &self.raw_kernel[1]);
        Ok(())
    }
}

/// Preconditioned MINRES for a symmetric operator and an SPD
/// preconditioner. Returns the iterate and the iteration count.
fn minres(
    grid: &Grid2D,
    op: &dyn Fn(&[f64]) -> Vec<f64>,
    pre: &dyn Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    rtol: f64,
    max_iter: usize,
) -> (Vec<f64>, usize) {
    let len = b.len();
    let mut x = vec![0.0; len];
    let mut r1 = b.to_vec();
    let mut y = pre(&r1);
    let beta1 = dot(grid, &r1, &y).max(0.0).sqrt();
    if beta1 == 0.0 {
        return (x, 0);
    }
    let mut r2 = r1.clone();
    let (mut oldb, mut beta) = (0.0, beta1);
    let (mut dbar, mut epsln, mut phibar) = (0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let mut w = vec![0.0; len];
    let mut w2 = vec![0.0; len];
    for itn in 1..=max_iter {
        let v: Vec<f64> = y.iter().map(|t| t / beta).collect();
        y = op(&v);
        if itn >= 2 {
            axpy(&mut y, -beta / oldb, &r1);
        }
        let alfa = dot(grid, &v, &y);
        axpy(&mut y, -alfa / beta, &r2);
        r1 = std::mem::replace(&mut r2, y);
        y = pre(&r2);
        oldb = beta;
        beta = dot(grid, &r2, &y).max(0.0).sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        let w1 = std::mem::replace(&mut w2, std::mem::take(&mut w));
        w = v
            .iter()
            .zip(&w1)
            .zip(&w2)
            .map(|((vk, a), b)| (vk - oldeps * a - delta * b) / gamma)
            .collect();
        axpy(&mut x, phi, &w);
        if phibar < rtol * beta1 || beta == 0.0 {
            return (x, itn);
        }
    }
    (x, max_iter)
}

/// `[|x|² + ½(x·x₀)²] Q`.
fn psi1_source(grid: &Grid2D, q: &[f64], x0: [f64; 2]) -> Vec<f64> {
    grid.sample(|x1, x2| {
        let p = x1 * x0[0] + x2 * x0[1];
        x1 * x1 + x2 * x2 + 0.5 * p * p
    })
    .into_iter()
    .zip(q)
    .map(|(s, qk)| s * qk)
    .collect()
}

/// `½(|x|² + C̃)(x·x₀) Q`.
fn psi2_source(grid: &Grid2D, q: &[f64], x0: [f64; 2], c_tilde: f64) -> Vec<f64> {
    grid.sample(|x1, x2| 0.5 * (x1 * x1 + x2 * x2 + c_tilde) * (x1 * x0[0] + x2 * x0[1]))
        .into_iter()
        .zip(q)
        .map(|(s, qk)| s * qk)
        .collect()
}

fn check_direction(x0: [f64; 2]) -> Result<()> {
    let r = x0[0].hypot(x0[1]);
    if (r - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("x0 must be a unit vector, |x0| = {r}")));
    }
    Ok(())
}

/// `‖A x - b‖ / ‖b‖` without any projection, for diagnostics.
fn raw_relative_residual(op: &LinearizedOperator, x: &[f64], b: &[f64]) -> f64 {
    let ax = op.apply(x);
    let r: Vec<f64> = ax.iter().zip(b).map(|(a, bk)| a - bk).collect();
    norm(op.grid(), &r) / norm(op.grid(), b)
}

fn solve_pinned(op: &LinearizedOperator, rhs: Vec<f64>) -> Result<Vec<f64>> {
    let mut x = op.solve_kernel_projected(&rhs)?.solution;
    op.pin_origin_gradient(&mut x)?;
    Ok(x)
}

/// `𝓛̃Ψ₁ = -[|x|² + ½(x·x₀)²]Q` with `∇Ψ₁(0) = 0`.
pub fn solve_psi1(op: &LinearizedOperator, x0: [f64; 2]) -> Result<Vec<f64>> {
    assert_eq!(op.kind(), OperatorKind::LTilde);
    check_direction(x0)?;
    let rhs = psi1_source(op.grid(), op.q(), x0).iter().map(|v| -v).collect();
    solve_pinned(op, rhs)
}

/// `𝓛̃Ψ₂ = -½(|x|² + C̃)(x·x₀)Q` with `∇Ψ₂(0) = 0`. Solvable only for
/// `C̃ = -2M₂/a*`.
pub fn solve_psi2(op: &LinearizedOperator, x0: [f64; 2], c_tilde: f64) -> Result<Vec<f64>> {
    assert_eq!(op.kind(), OperatorKind::LTilde);
    check_direction(x0)?;
    let rhs = psi2_source(op.grid(), op.q(), x0, c_tilde).iter().map(|v| -v).collect();
    solve_pinned(op, rhs)
}

/// `-2 x⊥·∇ψ` with `x⊥ = (-x₂, x₁)`.
pub fn rotation_source(grid: &Grid2D, psi: &[f64]) -> Vec<f64> {
    let (d1, d2) = gradient(&real_field(grid, psi));
    let c = grid.coords();
    let n = grid.n();
    let mut out = vec![0.0; grid.len()];
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            out[k] = -2.0 * (-c[j] * d1.data()[k].re + c[i] * d2.data()[k].re);
        }
    }
    out
}

/// `𝓛Φ_I = -2 x⊥·∇Ψ₁` with `<Q, Φ_I> = 0`.
pub fn solve_phi_i(op: &LinearizedOperator, psi1: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(op.kind(), OperatorKind::L);
    let grid = op.grid();
    let rhs = rotation_source(grid, psi1);
    let (d1, d2) = gradient(&real_field(grid, psi1));
    let mut scale = 0.0;
    for (k, (a, b)) in d1.data().iter().zip(d2.data()).enumerate() {
        let x = grid.node(k);
        scale += 4.0 * (x[0] * x[0] + x[1] * x[1]) * (a.re * a.re + b.re * b.re);
    }
    let scale = (scale * grid.cell_area()).sqrt();
    Ok(op.solve_with_scale(&rhs, scale)?.solution)
}

/// The three correction fields for one direction `x₀`.
#[derive(Debug, Clone)]
pub struct ExpansionSet {
    pub grid: Grid2D,
    pub x0: [f64; 2],
    pub q: Vec<f64>,
    pub psi1: Vec<f64>,
    pub psi2: Vec<f64>,
    pub phi_i: Vec<f64>,
    /// `<∂ᵢQ, source>` for Ψ₁ and Ψ₂ (raw kernel fields, unnormalized).
    pub psi1_solvability: [f64; 2],
    pub psi2_solvability: [f64; 2],
    /// `<Q, x⊥·∇Ψ₁>`.
    pub phi_solvability: f64,
    pub grad_psi1_origin: [f64; 2],
    pub grad_psi2_origin: [f64; 2],
    pub q_phi_inner: f64,
    /// `‖𝓛̃Ψ - f‖/‖f‖` etc. for the three problems.
    pub residuals: [f64; 3],
}

impl ExpansionSet {
    pub fn compute(townes: &Townes, grid: &Grid2D, x0: [f64; 2]) -> Result<Self> {
        check_direction(x0)?;
        let lt = LinearizedOperator::new(OperatorKind::LTilde, townes, grid)?;
        let l = LinearizedOperator::new(OperatorKind::L, townes, grid)?;
        let c_tilde = townes.constants.c_tilde;
        let s1 = psi1_source(grid, lt.q(), x0);
        let s2 = psi2_source(grid, lt.q(), x0, c_tilde);
        let solv = |s: &[f64]| [dot(grid, &lt.raw_kernel()[0], s), dot(grid, &lt.raw_kernel()[1], s)];
        let psi1 = solve_psi1(&lt, x0)?;
        let psi2 = solve_psi2(&lt, x0, c_tilde)?;
        let rot = rotation_source(grid, &psi1);
        let phi_i = solve_phi_i(&l, &psi1)?;
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        let residuals = [
            raw_relative_residual(&lt, &psi1, &neg(&s1)),
            raw_relative_residual(&lt, &psi2, &neg(&s2)),
            raw_relative_residual(&l, &phi_i, &rot),
        ];
        Ok(ExpansionSet {
            grid: grid.clone(),
            x0,
            q: lt.q().to_vec(),
            psi1_solvability: solv(&s1),
            psi2_solvability: solv(&s2),
            phi_solvability: -0.5 * dot(grid, l.q(), &rot),
            grad_psi1_origin: gradient_at_origin(grid, &psi1),
            grad_psi2_origin: gradient_at_origin(grid, &psi2),
            q_phi_inner: dot(grid, l.q(), &phi_i),
            psi1,
            psi2,
            phi_i,
            residuals,
        })
    }

    /// The centered block of `v` matching `target`, which must share the
    /// spacing and have at most as many nodes.
    pub fn restrict(&self, v: &[f64], target: &Grid2D) -> Result<Vec<f64>> {
        restrict(&self.grid, v, target)
    }
}

/// The centered block of a field on `grid` matching `target`.
pub fn restrict(grid: &Grid2D, v: &[f64], target: &Grid2D) -> Result<Vec<f64>> {
    let (n, m) = (grid.n(), target.n());
    if m > n || (grid.spacing() - target.spacing()).abs() > 1e-12 * grid.spacing() {
        return Err(Error::Config(format!(
            "grid {m}/{} is not a centered block of {n}/{}",
            target.half_extent(),
            grid.half_extent()
        )));
    }
    let off = (n - m) / 2;
    let mut out = Vec::with_capacity(m * m);
    for i in 0..m {
        out.extend_from_slice(&v[(i + off) * n + off..(i + off) * n + off + m]);
    }
    Ok(out)
}

/// Distances of a rescaled, aligned minimizer `ν` from the truncations of
/// the expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionResiduals {
    /// `‖ν - Q‖∞`.
    pub r0: f64,
    /// `‖ν - Q - Ω²ε̄⁴Ψ₁‖∞ / (Ω²ε̄⁴)`.
    pub r1: f64,
    /// `‖Im ν - Ω³ε̄⁶Φ_I‖∞ / (Ω³ε̄⁶)`.
    pub r_im: f64,
    /// `‖Im ν‖∞ / (Ω³ε̄⁶)`.
    pub im_ratio: f64,
}

impl ExpansionResiduals {
    pub fn to_key_values(&self) -> String {
        crate::kv::render([
            ("r0", format!("{:.16e}", self.r0)),
            ("r1", format!("{:.16e}", self.r1)),
            ("r_im", format!("{:.16e}", self.r_im)),
            ("im_ratio", format!("{:.16e}", self.im_ratio)),
        ])
    }
}

pub fn expansion_residuals(
    nu: &ComplexField2D,
    set: &ExpansionSet,
    omega: f64,
    eps_bar: f64,
) -> Result<ExpansionResiduals> {
    let target = nu.grid();
    let q = set.restrict(&set.q, target)?;
    let psi1 = set.restrict(&set.psi1, target)?;
    let phi = set.restrict(&set.phi_i, target)?;
    let s1 = omega * omega * eps_bar.powi(4);
    let s3 = omega.powi(3) * eps_bar.powi(6);
    let (mut r0, mut r1, mut r_im, mut im) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (k, v) in nu.data().iter().enumerate() {
        r0 = r0.max((v - q[k]).norm());
        r1 = r1.max((v - q[k] - s1 * psi1[k]).norm());
        r_im = r_im.max((v.im - s3 * phi[k]).abs());
        im = im.max(v.im.abs());
    }
    Ok(ExpansionResiduals {
        r0,
        r1: r1 / s1,
        r_im: r_im / s3,
        im_ratio: im / s3,
    })
}
