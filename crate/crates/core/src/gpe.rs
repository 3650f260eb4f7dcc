//! The rotating Gross–Pitaevskii energy
//!
//! ```text
//! F(u) = ∫|(∇ - iΩx⊥)u|² + (Ω²/8)∫(|x|² - 1)²|u|² - (a/2)∫|u|⁴
//! ```
//!
//! and its minimization over unit-mass fields by a preconditioned, normalized
//! gradient flow with backtracking.
//!
//! All derivatives are spectral with the Nyquist mode removed, and the
//! kinetic operator is `-(D1² + D2²)` built from the same first derivatives,
//! so the discrete energy and its gradient are exactly consistent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{gradient_from_hat, ComplexField2D, Grid2D, C64};
use crate::rescale::locate_max;
use crate::townes::RadialProfile;

/// Parameters of one minimization problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapSpec {
    c0: f64,
    beta: f64,
    a: f64,
    a_star: f64,
    omega: f64,
}

impl TrapSpec {
    /// `Ω = C0 (a* - a)^(-β)`.
    pub fn from_schedule(c0: f64, beta: f64, a: f64, a_star: f64) -> Result<Self> {
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(Error::Config(format!("C0 must be positive, got {c0}")));
        }
        if !(0.0..0.5).contains(&beta) {
            return Err(Error::Config(format!("beta must lie in [0, 1/2), got {beta}")));
        }
        check_coupling(a, a_star)?;
        let omega = c0 * (a_star - a).powf(-beta);
        Ok(TrapSpec {
            c0,
            beta,
            a,
            a_star,
            omega,
        })
    }

    /// A fixed rotation speed, outside the schedule (`β = 0`, `C0 = Ω`).
    pub fn with_omega(a: f64, omega: f64, a_star: f64) -> Result<Self> {
        if !(omega >= 0.0 && omega.is_finite()) {
            return Err(Error::Config(format!("Omega must be >= 0, got {omega}")));
        }
        check_coupling(a, a_star)?;
        Ok(TrapSpec {
            c0: omega,
            beta: 0.0,
            a,
            a_star,
            omega,
        })
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn a_star(&self) -> f64 {
        self.a_star
    }
    pub fn omega(&self) -> f64 {
        self.omega
    }
}

fn check_coupling(a: f64, a_star: f64) -> Result<()> {
    if !(a_star > 0.0 && a_star.is_finite()) {
        return Err(Error::Config(format!("a* must be positive, got {a_star}")));
    }
    if !(a >= 0.0) {
        return Err(Error::Config(format!("a must be >= 0, got {a}")));
    }
    if a >= a_star {
        return Err(Error::Config(format!(
            "no minimizer exists for a = {a} >= a* = {a_star}"
        )));
    }
    Ok(())
}

/// Terms of the energy of one field.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyBreakdown {
    /// `∫|(∇ - iΩx⊥)u|²`.
    pub covariant_kinetic: f64,
    /// `(Ω²/8)∫(|x|² - 1)²|u|²`.
    pub trap: f64,
    /// `-(a/2)∫|u|⁴`.
    pub interaction: f64,
    pub total: f64,
    /// `∫|∇u|²`.
    pub gradient_sq: f64,
    /// `∫|∇|u||²`, the lower bound in the diamagnetic inequality.
    pub modulus_kinetic: f64,
    /// `∫|u|⁴`.
    pub quartic: f64,
}

/// Grid samples that depend only on the trap, plus the derivative machinery.
pub struct Hamiltonian {
    grid: Grid2D,
    trap: TrapSpec,
    /// Components of `Ω x⊥ = Ω(-x2, x1)`.
    vec_pot: (Vec<f64>, Vec<f64>),
    /// `Ω²|x|² + (Ω²/8)(|x|² - 1)²`.
    potential: Vec<f64>,
    /// `(Ω²/8)(|x|² - 1)²`.
    trap_potential: Vec<f64>,
}

/// A field with its Fourier coefficients and first derivatives.
struct Evaluated {
    u: Vec<C64>,
    hat: Vec<C64>,
    d1: Vec<C64>,
    d2: Vec<C64>,
    energy: EnergyBreakdown,
}

impl Hamiltonian {
    pub fn new(grid: &Grid2D, trap: TrapSpec) -> Self {
        let w = trap.omega;
        let a1 = grid.sample(|_, x2| -w * x2);
        let a2 = grid.sample(|x1, _| w * x1);
        let trap_potential = grid.sample(|x1, x2| {
            let s = x1 * x1 + x2 * x2 - 1.0;
            w * w / 8.0 * s * s
        });
        let potential = grid
            .sample(|x1, x2| w * w * (x1 * x1 + x2 * x2))
            .into_iter()
            .zip(&trap_potential)
            .map(|(a, b)| a + b)
            .collect();
        Hamiltonian {
            grid: grid.clone(),
            trap,
            vec_pot: (a1, a2),
            potential,
            trap_potential,
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn trap(&self) -> &TrapSpec {
        &self.trap
    }

    fn evaluate(&self, u: Vec<C64>) -> Evaluated {
        let mut hat = u.clone();
        self.grid.fft2(&mut hat);
        let (d1, d2) = gradient_from_hat(&self.grid, &hat);
        let energy = self.energy_terms(&u, &d1, &d2);
        Evaluated {
            u,
            hat,
            d1,
            d2,
            energy,
        }
    }

    fn energy_terms(&self, u: &[C64], d1: &[C64], d2: &[C64]) -> EnergyBreakdown {
        let (a1, a2) = &self.vec_pot;
        let i = C64::new(0.0, 1.0);
        let mut cov = 0.0;
        let mut trap = 0.0;
        let mut quartic = 0.0;
        let mut grad = 0.0;
        let mut modk = 0.0;
        for k in 0..u.len() {
            let v = u[k];
            let c1 = d1[k] - i * a1[k] * v;
            let c2 = d2[k] - i * a2[k] * v;
            cov += c1.norm_sqr() + c2.norm_sqr();
            let m2 = v.norm_sqr();
            trap += self.trap_potential[k] * m2;
            quartic += m2 * m2;
            grad += d1[k].norm_sqr() + d2[k].norm_sqr();
            if m2 > 0.0 {
                let g1 = (v.conj() * d1[k]).re;
                let g2 = (v.conj() * d2[k]).re;
                modk += (g1 * g1 + g2 * g2) / m2;
            }
        }
        let da = self.grid.cell_area();
        let covariant_kinetic = cov * da;
        let trap = trap * da;
        let quartic = quartic * da;
        let interaction = -0.5 * self.trap.a * quartic;
        EnergyBreakdown {
            covariant_kinetic,
            trap,
            interaction,
            total: covariant_kinetic + trap + interaction,
            gradient_sq: grad * da,
            modulus_kinetic: modk * da,
            quartic,
        }
    }

    /// `Hu - a|u|²u` where `H = -Δ + 2iΩ x⊥·∇ + Ω²|x|² + (Ω²/8)(|x|²-1)²`.
    fn gradient_of(&self, ev: &Evaluated) -> Vec<C64> {
        let n = self.grid.n();
        let kd = self.grid.derivative_wavenumbers();
        let mut lap = ev.hat.clone();
        for p in 0..n {
            for q in 0..n {
                lap[p * n + q] *= kd[p] * kd[p] + kd[q] * kd[q];
            }
        }
        self.grid.ifft2(&mut lap);
        let (a1, a2) = &self.vec_pot;
        let two_i = C64::new(0.0, 2.0);
        let a = self.trap.a;
        for k in 0..lap.len() {
            let v = ev.u[k];
            lap[k] += two_i * (a1[k] * ev.d1[k] + a2[k] * ev.d2[k])
                + (self.potential[k] - a * v.norm_sqr()) * v;
        }
        lap
    }

    pub fn energy(&self, u: &ComplexField2D) -> EnergyBreakdown {
        self.check_grid(u);
        self.evaluate(u.data().to_vec()).energy
    }

    /// The unconstrained energy gradient `Hu - a|u|²u` (half the Fréchet
    /// derivative with respect to the real inner product `Re<·,·>`).
    pub fn energy_gradient(&self, u: &ComplexField2D) -> ComplexField2D {
        self.check_grid(u);
        let ev = self.evaluate(u.data().to_vec());
        ComplexField2D::new(&self.grid, self.gradient_of(&ev)).expect("finite gradient")
    }

    fn check_grid(&self, u: &ComplexField2D) {
        assert_eq!(u.grid(), &self.grid, "field and Hamiltonian use different grids");
    }
}

/// Energy of `u` for the trap.
pub fn energy(u: &ComplexField2D, trap: &TrapSpec) -> EnergyBreakdown {
    Hamiltonian::new(u.grid(), *trap).energy(u)
}

/// Pointwise residual of the Euler–Lagrange equation
/// `Hu - a|u|²u - μu`.
pub fn el_residual(u: &ComplexField2D, trap: &TrapSpec, mu: f64) -> ComplexField2D {
    let g = Hamiltonian::new(u.grid(), *trap).energy_gradient(u);
    g.combine(C64::new(1.0, 0.0), u, C64::new(-mu, 0.0))
        .expect("finite residual")
}

/// `μ = I - (a/2)∫|u|⁴` for a unit-mass `u` with energy `total`.
pub fn chemical_potential(u: &ComplexField2D, trap: &TrapSpec, total: f64) -> f64 {
    let grid = u.grid();
    let quartic = grid.integrate(&u.data().iter().map(|v| v.norm_sqr().powi(2)).collect::<Vec<_>>());
    total - 0.5 * trap.a * quartic
}

/// `Re<u, Hu - a|u|²u> / <u, u>`.
pub fn rayleigh_quotient(u: &ComplexField2D, trap: &TrapSpec) -> f64 {
    let g = Hamiltonian::new(u.grid(), *trap).energy_gradient(u);
    u.inner(&g).re / u.mass()
}

fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let f = |s: f64| (-1.0 / s).exp();
    f(t) / (f(t) + f(1.0 - t))
}

/// Trial state `φ(x - y0) Q(τ|x - y0|) e^{iΩ x·y0⊥}`, normalized to unit
/// mass. `φ` is a smooth cutoff equal to one up to half the distance from
/// `y0` to the boundary and zero beyond it.
pub fn init_trial(
    grid: &Grid2D,
    trap: &TrapSpec,
    q: &RadialProfile,
    y0: [f64; 2],
    tau: f64,
) -> Result<ComplexField2D> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!("tau must be positive, got {tau}")));
    }
    if tau * grid.spacing() > 0.5 {
        return Err(Error::Resolution(format!(
            "tau = {tau} is unresolved on spacing h = {} (tau*h > 0.5); use a finer grid",
            grid.spacing()
        )));
    }
    let outer = grid.half_extent() - y0[0].abs().max(y0[1].abs());
    if outer <= 0.0 {
        return Err(Error::Config(format!("trial center {y0:?} lies outside the grid")));
    }
    let inner = 0.5 * outer;
    let w = trap.omega();
    let perp = [-y0[1], y0[0]];
    let u = ComplexField2D::from_fn(grid, |x1, x2| {
        let rho = (x1 - y0[0]).hypot(x2 - y0[1]);
        let cut = 1.0 - smooth_step((rho - inner) / (outer - inner));
        if cut == 0.0 {
            return C64::default();
        }
        let amp = cut * q.value(tau * rho);
        C64::from_polar(amp, w * (x1 * perp[0] + x2 * perp[1]))
    })?;
    u.normalized()
}

/// Width parameter `τ = λ√C0 (a* - a)^{-(1+2β)/4}` of the optimal trial state.
pub fn optimal_tau(trap: &TrapSpec, lambda: f64) -> f64 {
    lambda * trap.c0().sqrt() * (trap.a_star() - trap.a()).powf(-(1.0 + 2.0 * trap.beta()) / 4.0)
}

#[derive(Debug, Clone)]
pub struct MinimizeOptions {
    /// Stop when the L² norm of the Euler–Lagrange residual drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial step of the preconditioned flow; later steps start from the
    /// previously accepted one.
    pub dt_initial: f64,
    pub dt_max: f64,
    /// Backtracking gives up below this step.
    pub dt_floor: f64,
    /// Extra runs from randomly phase-perturbed copies of the initial state.
    pub restarts: usize,
    pub seed: u64,
    /// Minimum admissible `ε_a` in units of the grid spacing.
    pub min_width_cells: f64,
    /// Keep per-iteration diagnostics in [`MinimizerResult::trace`].
    pub record_trace: bool,
    /// Polak–Ribière conjugate directions instead of plain descent.
    pub conjugate: bool,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            tol: 1e-7,
            max_iter: 20_000,
            dt_initial: 0.5,
            dt_max: 50.0,
            dt_floor: 1e-8,
            restarts: 1,
            seed: 0,
            min_width_cells: 4.0,
            record_trace: false,
            conjugate: true,
        }
    }
}

/// Diagnostics of one accepted flow step.
#[derive(Debug, Clone, Copy)]
pub struct TraceEntry {
    pub iteration: usize,
    pub energy: EnergyBreakdown,
    pub residual: f64,
    pub dt: f64,
}

#[derive(Debug, Clone)]
pub struct MinimizerResult {
    pub field: ComplexField2D,
    pub energy: EnergyBreakdown,
    pub mu: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Maximum point of `|u|`.
    pub x_a: [f64; 2],
    /// `(∫|∇|u||²)^{-1/2}`.
    pub eps_a: f64,
    /// `sqrt(-1/μ)`, defined only for `μ < 0`.
    pub eps_bar: Option<f64>,
    pub trace: Vec<TraceEntry>,
}

impl MinimizerResult {
    /// Diagnostics of a stored field, as if it had been returned by
    /// [`minimize`] with default options. `iterations` is zero and the
    /// trace is empty.
    pub fn from_field(field: &ComplexField2D, trap: &TrapSpec) -> Result<Self> {
        check_coupling(trap.a(), trap.a_star())?;
        let field = field.normalized()?;
        let energy = energy(&field, trap);
        let mu = chemical_potential(&field, trap, energy.total);
        let residual = el_residual(&field, trap, mu).l2_norm();
        let x_a = locate_max(&field)?;
        Ok(MinimizerResult {
            energy,
            mu,
            iterations: 0,
            residual,
            converged: residual < MinimizeOptions::default().tol,
            x_a,
            eps_a: energy.modulus_kinetic.powf(-0.5),
            eps_bar: (mu < 0.0).then(|| (-1.0 / mu).sqrt()),
            trace: Vec::new(),
            field,
        })
    }

    /// Scalar summary as `key=value` lines.
    pub fn to_key_values(&self) -> String {
        crate::kv::render([
            ("energy", format!("{:.16e}", self.energy.total)),
            ("covariant_kinetic", format!("{:.16e}", self.energy.covariant_kinetic)),
            ("trap", format!("{:.16e}", self.energy.trap)),
            ("interaction", format!("{:.16e}", self.energy.interaction)),
            ("mu", format!("{:.16e}", self.mu)),
            ("iterations", self.iterations.to_string()),
            ("residual", format!("{:.16e}", self.residual)),
            ("converged", self.converged.to_string()),
            ("x_a1", format!("{:.16e}", self.x_a[0])),
            ("x_a2", format!("{:.16e}", self.x_a[1])),
            ("eps_a", format!("{:.16e}", self.eps_a)),
            (
                "eps_bar",
                self.eps_bar.map_or("nan".to_string(), |e| format!("{e:.16e}")),
            ),
        ])
    }
}

struct FlowOutcome {
    ev: Evaluated,
    mu: f64,
    residual: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<TraceEntry>,
}

fn inner_re(grid: &Grid2D, a: &[C64], b: &[C64]) -> f64 {
    grid.cell_area() * a.iter().zip(b).map(|(x, y)| (x.conj() * y).re).sum::<f64>()
}

fn normalize_vec(grid: &Grid2D, u: &mut [C64]) -> Result<()> {
    let m = grid.cell_area() * u.iter().map(|v| v.norm_sqr()).sum::<f64>();
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::Numerical(format!("flow produced a field of mass {m}")));
    }
    let s = 1.0 / m.sqrt();
    for v in u.iter_mut() {
        *v *= s;
    }
    Ok(())
}

impl Hamiltonian {
    /// `c (c + V)^{-1/2} (c - Δ)^{-1} (c + V)^{-1/2} v`, an approximate
    /// inverse of `c + H` that is symmetric and positive.
    fn precondition(&self, v: &[C64], shift: f64, weight: &[f64]) -> Vec<C64> {
        let n = self.grid.n();
        let k = self.grid.wavenumbers();
        let mut hat: Vec<C64> = v.iter().zip(weight).map(|(x, w)| x * *w).collect();
        self.grid.fft2(&mut hat);
        for p in 0..n {
            for q in 0..n {
                hat[p * n + q] *= shift / (shift + k[p] * k[p] + k[q] * k[q]);
            }
        }
        self.grid.ifft2(&mut hat);
        for (x, w) in hat.iter_mut().zip(weight) {
            *x *= *w;
        }
        hat
    }

    fn step_to(&self, u: &[C64], dir: &[C64], t: f64) -> Result<Evaluated> {
        let mut trial: Vec<C64> = u.iter().zip(dir).map(|(uk, dk)| uk - t * dk).collect();
        normalize_vec(&self.grid, &mut trial)?;
        Ok(self.evaluate(trial))
    }

    fn flow(&self, init: Vec<C64>, opts: &MinimizeOptions) -> Result<FlowOutcome> {
        let grid = &self.grid;
        let mut u = init;
        normalize_vec(grid, &mut u)?;
        let mut ev = self.evaluate(u);
        let mut dt = opts.dt_initial;
        let mut trace = Vec::new();
        let mut iterations = 0;
        // previous (residual, preconditioned residual, search direction)
        let mut prev: Option<(Vec<C64>, Vec<C64>, Vec<C64>)> = None;
        loop {
            let g = self.gradient_of(&ev);
            let mu = inner_re(grid, &ev.u, &g);
            let r: Vec<C64> = g.iter().zip(&ev.u).map(|(gk, uk)| gk - mu * uk).collect();
            let residual = inner_re(grid, &r, &r).sqrt();
            if opts.record_trace {
                trace.push(TraceEntry {
                    iteration: iterations,
                    energy: ev.energy,
                    residual,
                    dt,
                });
            }
            if residual < opts.tol || iterations >= opts.max_iter {
                let converged = residual < opts.tol;
                return Ok(FlowOutcome {
                    ev,
                    mu,
                    residual,
                    iterations,
                    converged,
                    trace,
                });
            }

            let shift = ev.energy.gradient_sq.max(1.0);
            let weight: Vec<f64> = self.potential.iter().map(|v| (shift / (shift + v)).sqrt()).collect();
            let pg = self.precondition(&g, shift, &weight);
            let pu = self.precondition(&ev.u, shift, &weight);
            let alpha = inner_re(grid, &ev.u, &pg) / inner_re(grid, &ev.u, &pu);
            let pr: Vec<C64> = pg.iter().zip(&pu).map(|(a, b)| a - alpha * b).collect();

            let mut dir = pr.clone();
            if opts.conjugate {
                if let Some((r_old, pr_old, d_old)) = &prev {
                    let num = inner_re(grid, &r, &pr) - inner_re(grid, &r, pr_old);
                    let den = inner_re(grid, r_old, pr_old);
                    let beta = (num / den).max(0.0);
                    if beta > 0.0 && beta.is_finite() {
                        let along = inner_re(grid, &ev.u, d_old);
                        for ((d, dold), uk) in dir.iter_mut().zip(d_old).zip(&ev.u) {
                            *d += beta * (dold - along * uk);
                        }
                        if inner_re(grid, &r, &dir) <= 0.0 {
                            dir.copy_from_slice(&pr);
                        }
                    }
                }
            }
            // dE/dt at t = 0 along normalize(u - t d)
            let slope = -2.0 * inner_re(grid, &r, &dir);

            // exact second derivative along the same curve
            let dd = self.evaluate(dir.clone());
            let norm_d = inner_re(grid, &dir, &dir);
            let mut quartic_mix = 0.0;
            for (uk, dk) in ev.u.iter().zip(&dir) {
                let x = (uk.conj() * dk).re;
                quartic_mix += 2.0 * x * x + uk.norm_sqr() * dk.norm_sqr();
            }
            quartic_mix *= grid.cell_area();
            let quad = dd.energy.covariant_kinetic + dd.energy.trap;
            let curv = 2.0 * (quad - mu * norm_d - self.trap.a * quartic_mix);
            if curv > 0.0 {
                dt = (-slope / curv).min(opts.dt_max);
            }

            let e0 = ev.energy.total;
            let slack = 1e-13 * e0.abs().max(1.0);
            loop {
                let cand = self.step_to(&ev.u, &dir, dt)?;
                if cand.energy.total <= e0 + slack {
                    ev = cand;
                    break;
                }
                dt *= 0.5;
                if dt < opts.dt_floor {
                    return Err(Error::Numerical(format!(
                        "energy still increases at step {dt:e} (iteration {iterations}, residual {residual:e})"
                    )));
                }
            }
            prev = opts.conjugate.then_some((r, pr, dir));
            iterations += 1;
        }
    }
}

fn random_phase(grid: &Grid2D, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let l = grid.half_extent();
    let modes: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.gen_range(-2..=2) as f64,
                rng.gen_range(-2..=2) as f64,
                rng.gen_range(-0.3..0.3),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    grid.sample(|x1, x2| {
        modes
            .iter()
            .map(|&(m1, m2, amp, ph)| {
                amp * (std::f64::consts::PI / l * (m1 * x1 + m2 * x2) + ph).cos()
            })
            .sum()
    })
}

/// Minimizes the energy over unit-mass fields starting from `init`.
pub fn minimize(
    trap: &TrapSpec,
    init: &ComplexField2D,
    opts: &MinimizeOptions,
) -> Result<MinimizerResult> {
    check_coupling(trap.a(), trap.a_star())?;
    let grid = init.grid();
    let ham = Hamiltonian::new(grid, *trap);
    let mut best = ham.flow(init.data().to_vec(), opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        let phase = random_phase(grid, &mut rng);
        let start = init
            .data()
            .iter()
            .zip(&phase)
            .map(|(v, &p)| v * C64::from_polar(1.0, p))
            .collect();
        let cand = ham.flow(start, opts)?;
        let (eb, ec) = (best.ev.energy.total, cand.ev.energy.total);
        if (cand.converged && !best.converged) || ec < eb - 1e-10 * eb.abs().max(1.0) {
            best = cand;
        }
    }

    let field = ComplexField2D::new(grid, best.ev.u)?;
    let energy = best.ev.energy;
    let eps_a = energy.modulus_kinetic.powf(-0.5);
    if eps_a < opts.min_width_cells * grid.spacing() {
        return Err(Error::Resolution(format!(
            "blow-up width eps_a = {eps_a:.4} is below {} grid cells (h = {}); refine the grid",
            opts.min_width_cells,
            grid.spacing()
        )));
    }
    field.check_boundary("minimizer");
    let x_a = locate_max(&field)?;
    let mu = best.mu;
    Ok(MinimizerResult {
        field,
        energy,
        mu,
        iterations: best.iterations,
        residual: best.residual,
        converged: best.converged,
        x_a,
        eps_a,
        eps_bar: (mu < 0.0).then(|| (-1.0 / mu).sqrt()),
        trace: best.trace,
    })
}
