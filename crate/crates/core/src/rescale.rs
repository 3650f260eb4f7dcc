//! Blow-up data of a minimizer: maximum point, length scales, and the
//! rescaled, phase-aligned profile compared against `Q`.

use crate::error::{Error, Result};
use crate::gpe::{MinimizerResult, TrapSpec};
use crate::grid::{ComplexField2D, Grid2D, C64};
use crate::townes::{lift_to_grid, Townes};

/// Half-extent of the rescaled comparison grid.
pub const COMPARISON_HALF_EXTENT: f64 = 10.0;
/// Nodes per side of the rescaled comparison grid.
pub const COMPARISON_N: usize = 256;

/// Parts of a rescaled window that leave the lab box are filled with zeros
/// only if the lab field is below this fraction of its peak on the boundary.
pub const ZERO_FILL_RATIO: f64 = 1e-3;

pub fn comparison_grid() -> Grid2D {
    Grid2D::new(COMPARISON_HALF_EXTENT, COMPARISON_N).expect("valid comparison grid")
}

/// Maximum point of `|u|`, refined below the grid spacing by a least-squares
/// quadratic fit of `|u|²` on the 3×3 stencil around the best node.
pub fn locate_max(u: &ComplexField2D) -> Result<[f64; 2]> {
    let grid = u.grid();
    let n = grid.n();
    let m = u.data().iter().map(|v| v.norm_sqr()).collect::<Vec<_>>();
    let mut best = 0;
    for k in 1..m.len() {
        let closer = || {
            let (p, q) = (grid.node(k), grid.node(best));
            p[0].hypot(p[1]) < q[0].hypot(q[1])
        };
        if m[k] > m[best] || (m[k] == m[best] && closer()) {
            best = k;
        }
    }
    if m[best] == 0.0 {
        return Err(Error::Numerical("cannot locate the maximum of a zero field".into()));
    }
    let (i, j) = (best / n, best % n);
    if i == 0 || j == 0 || i == n - 1 || j == n - 1 {
        return Err(Error::DomainTooSmall(format!(
            "maximum of |u| sits on the boundary node {:?}",
            grid.node(best)
        )));
    }
    let h = grid.spacing();
    let f = |di: isize, dj: isize| m[grid.index((i as isize + di) as usize, (j as isize + dj) as usize)];
    let mut g = [0.0; 2];
    let mut hess = [[0.0; 2]; 2];
    for s in -1..=1 {
        g[0] += (f(1, s) - f(-1, s)) / (6.0 * h);
        g[1] += (f(s, 1) - f(s, -1)) / (6.0 * h);
        hess[0][0] += (f(1, s) - 2.0 * f(0, s) + f(-1, s)) / (3.0 * h * h);
        hess[1][1] += (f(s, 1) - 2.0 * f(s, 0) + f(s, -1)) / (3.0 * h * h);
    }
    hess[0][1] = (f(1, 1) - f(1, -1) - f(-1, 1) + f(-1, -1)) / (4.0 * h * h);
    hess[1][0] = hess[0][1];
    let det = hess[0][0] * hess[1][1] - hess[0][1] * hess[1][0];
    let node = grid.node(best);
    if !(hess[0][0] < 0.0 && det > 0.0) {
        return Ok(node);
    }
    let d1 = -(hess[1][1] * g[0] - hess[0][1] * g[1]) / det;
    let d2 = -(hess[0][0] * g[1] - hess[1][0] * g[0]) / det;
    Ok([node[0] + d1.clamp(-h, h), node[1] + d2.clamp(-h, h)])
}

/// Trigonometric interpolation weights of one axis at the points `t`.
/// Row `k` holds `e^{i k_p (t_k + L)}` with the Nyquist column as a cosine.
fn axis_weights(grid: &Grid2D, t: &[f64]) -> Vec<C64> {
    let n = grid.n();
    let l = grid.half_extent();
    let k = grid.wavenumbers();
    let mut w = vec![C64::default(); t.len() * n];
    for (r, &tk) in t.iter().enumerate() {
        for p in 0..n {
            let arg = k[p] * (tk + l);
            w[r * n + p] = if p == n / 2 {
                C64::new(arg.cos(), 0.0)
            } else {
                C64::from_polar(1.0, arg)
            };
        }
    }
    w
}

/// Values of `u` at `offset + scale * y` for every node `y` of `target`,
/// by exact trigonometric interpolation of the lab field. Points outside
/// the lab box become zero, which requires `u` to be negligible on the lab
/// boundary.
pub fn sample_affine(
    u: &ComplexField2D,
    target: &Grid2D,
    offset: [f64; 2],
    scale: f64,
) -> Result<Vec<C64>> {
    let lab = u.grid();
    let l = lab.half_extent();
    let n = lab.n();
    let m = target.n();
    let t1: Vec<f64> = target.coords().iter().map(|&y| offset[0] + scale * y).collect();
    let t2: Vec<f64> = target.coords().iter().map(|&y| offset[1] + scale * y).collect();
    let inside = |t: f64| t >= -l && t <= l;
    if !(t1.iter().chain(&t2).all(|&t| inside(t))) {
        let ratio = u.boundary_ratio();
        if ratio > ZERO_FILL_RATIO {
            return Err(Error::Range(format!(
                "rescaled window leaves the lab box [-{l}, {l}]² while the field is still {ratio:.2e} of its peak on the boundary"
            )));
        }
    }

    let mut hat = u.data().to_vec();
    lab.fft2(&mut hat);
    let w1 = axis_weights(lab, &t1);
    let w2 = axis_weights(lab, &t2);
    // tmp[r][q] = sum_p w1[r][p] hat[p][q]
    let mut tmp = vec![C64::default(); m * n];
    for r in 0..m {
        let row = &mut tmp[r * n..(r + 1) * n];
        for p in 0..n {
            let c = w1[r * n + p];
            let src = &hat[p * n..(p + 1) * n];
            for (dst, s) in row.iter_mut().zip(src) {
                *dst += c * s;
            }
        }
    }
    let norm = 1.0 / (n * n) as f64;
    let mut out = vec![C64::default(); m * m];
    for r in 0..m {
        if !inside(t1[r]) {
            continue;
        }
        let row = &tmp[r * n..(r + 1) * n];
        for s in 0..m {
            if !inside(t2[s]) {
                continue;
            }
            let wrow = &w2[s * n..(s + 1) * n];
            let v: C64 = row.iter().zip(wrow).map(|(a, b)| a * b).sum();
            out[r * m + s] = v * norm;
        }
    }
    Ok(out)
}

/// `amplitude · u(ε y + x_a) · e^{-iΩε y·x_a⊥}` on `target`.
pub fn rescale_onto(
    u: &ComplexField2D,
    target: &Grid2D,
    x_a: [f64; 2],
    eps: f64,
    omega: f64,
    amplitude: f64,
) -> Result<ComplexField2D> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("scale must be positive, got {eps}")));
    }
    let mut vals = sample_affine(u, target, x_a, eps)?;
    let perp = [-x_a[1], x_a[0]];
    let c = target.coords();
    let m = target.n();
    for r in 0..m {
        for s in 0..m {
            let phase = -omega * eps * (c[r] * perp[0] + c[s] * perp[1]);
            vals[r * m + s] *= C64::from_polar(amplitude, phase);
        }
    }
    ComplexField2D::new(target, vals)
}

/// [`rescale_onto`] the standard comparison grid.
pub fn rescale(
    u: &ComplexField2D,
    x_a: [f64; 2],
    eps: f64,
    omega: f64,
    amplitude: f64,
) -> Result<ComplexField2D> {
    rescale_onto(u, &comparison_grid(), x_a, eps, omega, amplitude)
}

/// Constant phase `θ ∈ (-π, π]` maximizing `Re(e^{iθ}∫q v)` and the field
/// `e^{iθ}v`. Afterwards `∫q Im(e^{iθ}v) = 0`.
pub fn align_phase(v: &ComplexField2D, q: &ComplexField2D) -> Result<(f64, ComplexField2D)> {
    let overlap = q.inner(v);
    let scale = v.l2_norm() * q.l2_norm();
    if !(overlap.norm() > 1e-14 * scale) || scale == 0.0 {
        return Err(Error::AlignmentUndefined(overlap.norm()));
    }
    let mut theta = -overlap.arg();
    if theta <= -std::f64::consts::PI {
        theta += 2.0 * std::f64::consts::PI;
    }
    Ok((theta, v.scaled(C64::from_polar(1.0, theta))))
}

/// Blow-up scalars of one minimizer.
#[derive(Debug, Clone)]
pub struct BlowupRecord {
    pub x_a: [f64; 2],
    pub eps_a: f64,
    pub eps_bar: f64,
    pub mu: f64,
    /// Phase aligning the rescaled profile with `Q`.
    pub theta: f64,
    /// `‖w_a - Q/√a*‖∞` on the comparison grid.
    pub sup_dist: f64,
    /// `‖w_a - Q/√a*‖₂` on the comparison grid.
    pub l2_dist: f64,
    /// `ε_a / [(a* - a)^{(1+2β)/4} / (√C0 λ)]`.
    pub eps_ratio: f64,
    /// `-μ ε_a²`.
    pub mu_eps_sq: f64,
    /// `ε̄ / ε_a`.
    pub eps_bar_ratio: f64,
    /// `(|x_a|² - 1) / ε̄²`.
    pub max_point_ratio: f64,
    /// Phase-aligned `w_a` on the comparison grid.
    pub profile: ComplexField2D,
}

impl BlowupRecord {
    pub fn abs_x_a(&self) -> f64 {
        self.x_a[0].hypot(self.x_a[1])
    }
}

/// Predicted blow-up width `(a* - a)^{(1+2β)/4} / (√C0 λ)`.
pub fn predicted_eps(trap: &TrapSpec, lambda: f64) -> f64 {
    (trap.a_star() - trap.a()).powf((1.0 + 2.0 * trap.beta()) / 4.0) / (trap.c0().sqrt() * lambda)
}

pub fn blowup_record(res: &MinimizerResult, trap: &TrapSpec, townes: &Townes) -> Result<BlowupRecord> {
    let eps_bar = match res.eps_bar {
        Some(e) if res.mu < 0.0 => e,
        _ => return Err(Error::NotBlowup(res.mu)),
    };
    let c = &townes.constants;
    let target = comparison_grid();
    let w = rescale_onto(&res.field, &target, res.x_a, res.eps_a, trap.omega(), res.eps_a)?;
    let q = lift_to_grid(&townes.profile, &target, [0.0, 0.0])?
        .scaled(C64::new(1.0 / c.a_star.sqrt(), 0.0));
    let (theta, aligned) = align_phase(&w, &q)?;
    let diff = aligned.combine(C64::new(1.0, 0.0), &q, C64::new(-1.0, 0.0))?;
    let r2 = res.x_a[0].powi(2) + res.x_a[1].powi(2);
    Ok(BlowupRecord {
        x_a: res.x_a,
        eps_a: res.eps_a,
        eps_bar,
        mu: res.mu,
        theta,
        sup_dist: diff.max_modulus(),
        l2_dist: diff.l2_norm(),
        eps_ratio: res.eps_a / predicted_eps(trap, c.lambda),
        mu_eps_sq: -res.mu * res.eps_a * res.eps_a,
        eps_bar_ratio: eps_bar / res.eps_a,
        max_point_ratio: (r2 - 1.0) / (eps_bar * eps_bar),
        profile: aligned,
    })
}

/// Initial state for a new coupling from the minimizer at a neighbouring
/// one: the profile is stretched about `x_a` by `ε_prev / ε_next` and the
/// local rotation phase is switched from `Ω_prev` to `Ω_next`.
pub fn warm_start(
    prev: &ComplexField2D,
    x_a: [f64; 2],
    eps_prev: f64,
    eps_next: f64,
    omega_prev: f64,
    omega_next: f64,
) -> Result<ComplexField2D> {
    let grid = prev.grid();
    let s = eps_prev / eps_next;
    // x' = x_a + s (x - x_a) = (1 - s) x_a + s x
    let offset = [(1.0 - s) * x_a[0], (1.0 - s) * x_a[1]];
    let mut vals = sample_affine(prev, grid, offset, s)?;
    let perp = [-x_a[1], x_a[0]];
    let dw = omega_next - s * omega_prev;
    let phases = grid.sample(|x1, x2| C64::from_polar(1.0, dw * (x1 * perp[0] + x2 * perp[1])));
    for (v, p) in vals.iter_mut().zip(phases) {
        *v *= p;
    }
    ComplexField2D::new(grid, vals)?.normalized()
}
