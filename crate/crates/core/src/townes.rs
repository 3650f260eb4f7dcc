//! The Townes profile: the positive radial solution of `ΔQ - Q + Q³ = 0` in
//! the plane, found by shooting on `Q(0)`, and the constants derived from it.
//!
//! The radial ODE `Q'' + Q'/r = Q - Q³` is integrated with classical RK4 from
//! `r0 = 1e-4`, seeded by the series `Q(r) = Q(0) + Q''(0) r²/2`. A trajectory
//! either overshoots (crosses zero) or undershoots (turns back up while still
//! positive and then oscillates around `Q = 1`); the separatrix between the
//! two is bisected to machine precision. Beyond `r = 10` the bisected
//! trajectory is no longer trustworthy, so the tail is continued with the
//! linearized decaying solution `A K0(r)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{gradient, ComplexField2D, Grid2D};

pub const DEFAULT_R_MAX: f64 = 20.0;
pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_TOL: f64 = 1e-12;

const START_RADIUS: f64 = 1e-4;
const MATCH_RADIUS: f64 = 10.0;
const CLASSIFY_CAP: f64 = 80.0;
const MAX_BISECTIONS: usize = 200;

/// Sampled Townes profile on the uniform radial nodes `r_i = i * step`.
#[derive(Debug, Clone)]
pub struct RadialProfile {
    step: f64,
    q0: f64,
    values: Vec<f64>,
    derivatives: Vec<f64>,
    /// `A` in the tail continuation `Q(r) = A K0(r)`.
    tail_amplitude: f64,
}

/// Constants derived from `Q`. Integrals are over the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TownesConstants {
    /// `∫Q²`, the critical coupling.
    pub a_star: f64,
    /// `∫|x|²Q²`.
    pub m2: f64,
    /// `(5 M2 / 4)^{1/4}`.
    pub lambda: f64,
    /// `-8 λ⁴ / (5 a*)`, the maximum-point constant.
    pub c_tilde: f64,
    pub q0: f64,
    /// `∫|∇Q|²`.
    pub gradient_sq: f64,
    /// `∫Q⁴`.
    pub quartic: f64,
    /// `|∫|∇Q|² - ∫Q²| / ∫Q²`.
    pub pohozaev_gradient_residual: f64,
    /// `|½∫Q⁴ - ∫Q²| / ∫Q²`.
    pub pohozaev_quartic_residual: f64,
}

impl TownesConstants {
    /// `key=value` lines: a_star, M2, lambda, C_tilde, q0.
    pub fn to_key_values(&self) -> String {
        format!(
            "a_star={:.16e}\nM2={:.16e}\nlambda={:.16e}\nC_tilde={:.16e}\nq0={:.16e}\n",
            self.a_star, self.m2, self.lambda, self.c_tilde, self.q0
        )
    }

    /// Parses the output of [`to_key_values`](Self::to_key_values) and
    /// recomputes the dependent fields. Pohozaev residuals are not stored
    /// and come back as NaN.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let kv = crate::kv::parse(text)?;
        let get = |k: &str| -> Result<f64> {
            kv.get(k)
                .ok_or_else(|| Error::Parse(format!("missing key {k}")))?
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad value for {k}")))
        };
        let a_star = get("a_star")?;
        let m2 = get("M2")?;
        Ok(TownesConstants {
            a_star,
            m2,
            lambda: get("lambda")?,
            c_tilde: get("C_tilde")?,
            q0: get("q0")?,
            gradient_sq: a_star,
            quartic: 2.0 * a_star,
            pohozaev_gradient_residual: f64::NAN,
            pohozaev_quartic_residual: f64::NAN,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Crosses,
    TurnsBack,
    Undecided,
}

fn rhs(r: f64, q: f64, p: f64) -> (f64, f64) {
    (p, q - q * q * q - p / r)
}

fn rk4(r: f64, q: f64, p: f64, dr: f64) -> (f64, f64) {
    let (k1q, k1p) = rhs(r, q, p);
    let (k2q, k2p) = rhs(r + dr / 2.0, q + dr / 2.0 * k1q, p + dr / 2.0 * k1p);
    let (k3q, k3p) = rhs(r + dr / 2.0, q + dr / 2.0 * k2q, p + dr / 2.0 * k2p);
    let (k4q, k4p) = rhs(r + dr, q + dr * k3q, p + dr * k3p);
    (
        q + dr / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q),
        p + dr / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
    )
}

/// Integrates from the series start to the first node `r = step` and then
/// on nodes, calling `visit(i, q, p)` for every node `i >= 1` until it
/// returns false or `last` is reached.
fn integrate(q0: f64, step: f64, last: usize, mut visit: impl FnMut(usize, f64, f64) -> bool) {
    let curv = (q0 - q0 * q0 * q0) / 2.0;
    let mut q = q0 + curv * START_RADIUS * START_RADIUS / 2.0;
    let mut p = curv * START_RADIUS;
    (q, p) = rk4(START_RADIUS, q, p, step - START_RADIUS);
    if !visit(1, q, p) {
        return;
    }
    for i in 1..last {
        (q, p) = rk4(i as f64 * step, q, p, step);
        if !visit(i + 1, q, p) {
            return;
        }
    }
}

fn classify(q0: f64, step: f64) -> Outcome {
    let mut outcome = Outcome::Undecided;
    let last = (CLASSIFY_CAP / step).round() as usize;
    integrate(q0, step, last, |_, q, p| {
        if q < 0.0 {
            outcome = Outcome::Crosses;
        } else if p > 0.0 {
            outcome = Outcome::TurnsBack;
        } else if !q.is_finite() {
            return false;
        }
        outcome == Outcome::Undecided
    });
    outcome
}

/// Shoots for the Townes profile with the default radial step.
pub fn shoot_townes(r_max: f64, tol: f64) -> Result<RadialProfile> {
    shoot_townes_with_step(r_max, tol, DEFAULT_STEP)
}

/// Shoots for the Townes profile on nodes spaced `step` apart.
///
/// `tol` bounds the width of the final bisection bracket on `Q(0)`; the
/// bracket is always narrowed until neighbouring floats meet, so any
/// `tol <= 1e-10` is honoured.
pub fn shoot_townes_with_step(r_max: f64, tol: f64, step: f64) -> Result<RadialProfile> {
    if !(r_max >= 15.0 && r_max.is_finite()) {
        return Err(Error::Config(format!("R_max must be >= 15, got {r_max}")));
    }
    if !(tol > 0.0 && tol <= 1e-10) {
        return Err(Error::Config(format!("tol must be in (0, 1e-10], got {tol}")));
    }
    if !(step > START_RADIUS && step <= 1e-2) {
        return Err(Error::Config(format!("radial step {step} out of range")));
    }

    // Bracket: first undershoot -> overshoot transition when scanning up.
    let mut lo = None;
    let mut hi = None;
    let mut prev: Option<(f64, Outcome)> = None;
    for k in 0..=19 {
        let q0 = 1.25 + 0.25 * k as f64;
        let o = classify(q0, step);
        if let Some((p, Outcome::TurnsBack)) = prev {
            if o == Outcome::Crosses {
                lo = Some(p);
                hi = Some(q0);
                break;
            }
        }
        prev = Some((q0, o));
    }
    let (Some(mut lo), Some(mut hi)) = (lo, hi) else {
        return Err(Error::Config(
            "no undershoot/overshoot bracket found for Q(0)".into(),
        ));
    };

    let mut converged = false;
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            converged = true;
            break;
        }
        match classify(mid, step) {
            Outcome::TurnsBack => lo = mid,
            Outcome::Crosses => hi = mid,
            Outcome::Undecided => {
                lo = mid;
                hi = mid;
                converged = true;
                break;
            }
        }
    }
    if !converged || hi - lo > tol {
        return Err(Error::Numerical(format!(
            "shooting did not converge: bracket [{lo}, {hi}]"
        )));
    }

    let q0 = lo;
    let last = (r_max / step).round() as usize;
    let last = last + last % 2;
    let match_idx = ((MATCH_RADIUS.min(r_max / 2.0)) / step).round() as usize;
    let mut values = vec![0.0; last + 1];
    let mut derivatives = vec![0.0; last + 1];
    values[0] = q0;
    integrate(q0, step, match_idx, |i, q, p| {
        values[i] = q;
        derivatives[i] = p;
        true
    });
    let (k0m, _) = bessel_k0_k1(match_idx as f64 * step);
    let tail_amplitude = values[match_idx] / k0m;
    for i in (match_idx + 1)..=last {
        let (k0, k1) = bessel_k0_k1(i as f64 * step);
        values[i] = tail_amplitude * k0;
        derivatives[i] = -tail_amplitude * k1;
    }

    let profile = RadialProfile {
        step,
        q0,
        values,
        derivatives,
        tail_amplitude,
    };
    profile.check_shape()?;
    Ok(profile)
}

/// Modified Bessel functions `(K0(r), K1(r))` for `r > 0`, from the
/// integral `K_ν(r) = ∫_0^∞ exp(-r cosh t) cosh(ν t) dt` with the
/// trapezoid rule (exponentially convergent for this integrand).
pub fn bessel_k0_k1(r: f64) -> (f64, f64) {
    assert!(r > 0.0, "K_nu needs r > 0");
    let dt = 0.02;
    let t_max = (750.0 / r).max(1.0).acosh() + 1.0;
    let steps = (t_max / dt).ceil() as usize;
    let (mut k0, mut k1) = (0.5 * (-r).exp(), 0.5 * (-r).exp());
    for i in 1..=steps {
        let t = i as f64 * dt;
        let c = t.cosh();
        let e = (-r * c).exp();
        k0 += e;
        k1 += e * c;
    }
    (k0 * dt, k1 * dt)
}

impl RadialProfile {
    fn check_shape(&self) -> Result<()> {
        for i in 1..self.values.len() {
            if !(self.values[i] > 0.0 && self.values[i] < self.values[i - 1]) {
                return Err(Error::Numerical(format!(
                    "Townes profile not positive and decreasing at r = {}",
                    i as f64 * self.step
                )));
            }
        }
        Ok(())
    }

    pub fn q0(&self) -> f64 {
        self.q0
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn r_max(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn derivatives(&self) -> &[f64] {
        &self.derivatives
    }

    pub fn radii(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |i| i as f64 * self.step)
    }

    pub fn tail_amplitude(&self) -> f64 {
        self.tail_amplitude
    }

    /// `(Q(r), Q'(r))` by cubic Hermite interpolation inside the sampled
    /// range, and from the `A K0` tail beyond it.
    pub fn eval(&self, r: f64) -> (f64, f64) {
        let r = r.abs();
        let last = self.values.len() - 1;
        let x = r / self.step;
        if x >= last as f64 {
            let (k0, k1) = bessel_k0_k1(r);
            return (self.tail_amplitude * k0, -self.tail_amplitude * k1);
        }
        let i = x.floor() as usize;
        let t = x - i as f64;
        let s = self.step;
        let (q0, q1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.derivatives[i] * s, self.derivatives[i + 1] * s);
        let t2 = t * t;
        let t3 = t2 * t;
        let q = (2.0 * t3 - 3.0 * t2 + 1.0) * q0
            + (t3 - 2.0 * t2 + t) * d0
            + (-2.0 * t3 + 3.0 * t2) * q1
            + (t3 - t2) * d1;
        let dq = ((6.0 * t2 - 6.0 * t) * q0
            + (3.0 * t2 - 4.0 * t + 1.0) * d0
            + (-6.0 * t2 + 6.0 * t) * q1
            + (3.0 * t2 - 2.0 * t) * d1)
            / s;
        (q, dq)
    }

    pub fn value(&self, r: f64) -> f64 {
        self.eval(r).0
    }
}

/// Composite Simpson rule on the profile nodes for `∫_0^{R_max} f(r, Q, Q') dr`.
fn simpson(q: &RadialProfile, f: impl Fn(f64, f64, f64) -> f64) -> f64 {
    let n = q.values.len() - 1;
    debug_assert!(n % 2 == 0);
    let mut acc = 0.0;
    for i in 0..=n {
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * f(i as f64 * q.step, q.values[i], q.derivatives[i]);
    }
    acc * q.step / 3.0
}

pub fn townes_constants(q: &RadialProfile) -> TownesConstants {
    let tp = 2.0 * PI;
    let a_star = tp * simpson(q, |r, v, _| v * v * r);
    let m2 = tp * simpson(q, |r, v, _| v * v * r * r * r);
    let gradient_sq = tp * simpson(q, |r, _, d| d * d * r);
    let quartic = tp * simpson(q, |r, v, _| v.powi(4) * r);
    let lambda = (1.25 * m2).powf(0.25);
    TownesConstants {
        a_star,
        m2,
        lambda,
        c_tilde: -8.0 * lambda.powi(4) / (5.0 * a_star),
        q0: q.q0,
        gradient_sq,
        quartic,
        pohozaev_gradient_residual: (gradient_sq - a_star).abs() / a_star,
        pohozaev_quartic_residual: (0.5 * quartic - a_star).abs() / a_star,
    }
}

fn check_support(q: &RadialProfile, grid: &Grid2D, center: [f64; 2], scale: f64) -> Result<()> {
    let reach = scale * (grid.half_extent() * std::f64::consts::SQRT_2 + center[0].hypot(center[1]));
    if reach > q.r_max() {
        return Err(Error::Range(format!(
            "grid reaches r = {reach:.3} but the profile stops at {}",
            q.r_max()
        )));
    }
    Ok(())
}

/// `Q(|x - center|)` on the grid nodes, as a real field.
pub fn lift_to_grid(q: &RadialProfile, grid: &Grid2D, center: [f64; 2]) -> Result<ComplexField2D> {
    let vals = lift_scaled(q, grid, center, 1.0)?;
    ComplexField2D::from_real(grid, &vals)
}

/// `Q(scale * |x - center|)` at the grid nodes.
pub fn lift_scaled(q: &RadialProfile, grid: &Grid2D, center: [f64; 2], scale: f64) -> Result<Vec<f64>> {
    check_support(q, grid, center, scale)?;
    Ok(grid.sample(|x1, x2| q.value(scale * (x1 - center[0]).hypot(x2 - center[1]))))
}

/// The radial gradient `Q'(r) x/r` of `Q(|x - center|)` from the profile,
/// zero at the center.
pub fn lift_gradient(q: &RadialProfile, grid: &Grid2D, center: [f64; 2]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_support(q, grid, center, 1.0)?;
    let pairs = grid.sample(|x1, x2| {
        let (d1, d2) = (x1 - center[0], x2 - center[1]);
        let r = d1.hypot(d2);
        if r == 0.0 {
            (0.0, 0.0)
        } else {
            let dq = q.eval(r).1;
            (dq * d1 / r, dq * d2 / r)
        }
    });
    Ok(pairs.into_iter().unzip())
}

/// Both sides of the Gagliardo–Nirenberg inequality
/// `∫|u|⁴ <= (2/a*) ∫|∇u|² ∫|u|²`, returned as `(lhs, rhs)`.
pub fn gn_sides(u: &ComplexField2D, a_star: f64) -> (f64, f64) {
    let grid = u.grid();
    let quartic = grid.integrate(&u.data().iter().map(|v| v.norm_sqr().powi(2)).collect::<Vec<_>>());
    let (d1, d2) = gradient(u);
    let grad_sq = d1.mass() + d2.mass();
    (quartic, 2.0 / a_star * grad_sq * u.mass())
}

/// Relative gap in the Gagliardo–Nirenberg inequality at `u = Q` on `grid`,
/// `|∫Q⁴ - (2/a*)∫|∇Q|²∫Q²| / ∫Q⁴`.
pub fn gn_equality_check(q: &RadialProfile, grid: &Grid2D) -> Result<f64> {
    let a_star = townes_constants(q).a_star;
    let field = lift_to_grid(q, grid, [0.0, 0.0])?;
    Ok(gn_relative_gap(&field, a_star))
}

pub fn gn_relative_gap(u: &ComplexField2D, a_star: f64) -> f64 {
    let (lhs, rhs) = gn_sides(u, a_star);
    (lhs - rhs).abs() / lhs
}

/// A solved profile together with its constants.
#[derive(Debug, Clone)]
pub struct Townes {
    pub profile: RadialProfile,
    pub constants: TownesConstants,
}

impl Townes {
    /// Shoots with the default radius, step and tolerance.
    pub fn solve() -> Result<Self> {
        Self::from_profile(shoot_townes(DEFAULT_R_MAX, DEFAULT_TOL)?)
    }

    pub fn from_profile(profile: RadialProfile) -> Result<Self> {
        let constants = townes_constants(&profile);
        Ok(Townes { profile, constants })
    }
}
