#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::Rng;
use rotgp::{ComplexField2D, Grid2D, Townes, C64};

pub fn townes() -> &'static Townes {
    static T: OnceLock<Townes> = OnceLock::new();
    T.get_or_init(|| Townes::solve().expect("townes"))
}

/// Gaussian envelope times a few low Fourier modes with random complex
/// coefficients, unit mass.
pub fn random_smooth(grid: &Grid2D, rng: &mut impl Rng, width: f64) -> ComplexField2D {
    let l = grid.half_extent();
    let modes: Vec<(f64, f64, C64)> = (0..6)
        .map(|_| {
            (
                rng.gen_range(-3..=3) as f64,
                rng.gen_range(-3..=3) as f64,
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            )
        })
        .collect();
    let c = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
    ComplexField2D::from_fn(grid, |x1, x2| {
        let env = (-((x1 - c[0]).powi(2) + (x2 - c[1]).powi(2)) / (width * width)).exp();
        let s: C64 = modes
            .iter()
            .map(|&(m1, m2, a)| a * C64::from_polar(1.0, PI / l * (m1 * x1 + m2 * x2)))
            .sum();
        env * (s + C64::new(0.2, 0.0))
    })
    .unwrap()
    .normalized()
    .unwrap()
}

/// Field rotated by 90 degrees, `u'(x) = u(-x2, x1)`.
pub fn rotate_quarter(u: &ComplexField2D) -> ComplexField2D {
    let n = u.grid().n();
    let mut out = vec![C64::default(); n * n];
    for i in 0..n {
        for j in 0..n {
            // node (x_i, x_j) pulls from (x_j, -x_i)
            out[i * n + j] = u.at(j, (n - i) % n);
        }
    }
    ComplexField2D::new(u.grid(), out).unwrap()
}

/// Independent radial shooting with RK4 at step `h` and plain bisection.
/// Returns `(Q(0), a*)` with `a* = 2π∫Q² r dr` by Simpson's rule on `[0, 12]`.
pub fn shooting_oracle(h: f64) -> (f64, f64) {
    fn rhs(r: f64, q: f64, p: f64) -> (f64, f64) {
        (p, q - q * q * q - p / r)
    }
    // +1 crosses zero, -1 turns back up, 0 neither by r = 40
    let run = |q0: f64, record: Option<&mut Vec<f64>>| -> i32 {
        let r0 = 1e-5;
        let mut q = q0 + 0.25 * (q0 - q0.powi(3)) * r0 * r0;
        let mut p = 0.5 * (q0 - q0.powi(3)) * r0;
        let mut r = r0;
        let steps = (40.0 / h) as usize;
        let mut rec = record;
        if let Some(v) = rec.as_deref_mut() {
            v.push(q0);
        }
        // first step brings r from r0 to h so nodes sit on multiples of h
        let mut dt = h - r0;
        for _ in 0..steps {
            let (k1q, k1p) = rhs(r, q, p);
            let (k2q, k2p) = rhs(r + 0.5 * dt, q + 0.5 * dt * k1q, p + 0.5 * dt * k1p);
            let (k3q, k3p) = rhs(r + 0.5 * dt, q + 0.5 * dt * k2q, p + 0.5 * dt * k2p);
            let (k4q, k4p) = rhs(r + dt, q + dt * k3q, p + dt * k3p);
            q += dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
            p += dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
            r += dt;
            dt = h;
            if let Some(v) = rec.as_deref_mut() {
                v.push(q);
                if r > 12.0 - 0.5 * h {
                    return 0;
                }
            }
            if q < 0.0 {
                return 1;
            }
            if p > 0.0 {
                return -1;
            }
        }
        0
    };
    let (mut lo, mut hi) = (2.0, 2.5);
    assert_eq!(run(lo, None), -1);
    assert_eq!(run(hi, None), 1);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match run(mid, None) {
            1 => hi = mid,
            _ => lo = mid,
        }
    }
    let mut vals = Vec::new();
    run(lo, Some(&mut vals));
    let n = vals.len() - 1 - (vals.len() - 1) % 2;
    let f = |i: usize| vals[i] * vals[i] * (i as f64 * h);
    let mut s = f(0) + f(n);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i);
    }
    (lo, 2.0 * PI * s * h / 3.0)
}

/// Lowest eigenpair of the linear rotating-trap Hamiltonian
/// `(-i∇ - Ωx⊥)² + (Ω²/8)(|x|² - 1)²` by inverse iteration with an inner
/// conjugate-gradient solve. Derivatives are applied with their own FFTs.
pub fn linear_ground_state(grid: &Grid2D, omega: f64) -> (f64, ComplexField2D) {
    use rustfft::FftPlanner;
    let n = grid.n();
    let l = grid.half_extent();
    let h = grid.spacing();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let k: Vec<f64> = (0..n)
        .map(|m| {
            if 2 * m == n {
                0.0
            } else if 2 * m < n {
                PI / l * m as f64
            } else {
                PI / l * (m as f64 - n as f64)
            }
        })
        .collect();
    let fft2 = |v: &mut Vec<C64>, forward: bool| {
        let plan = if forward { &fwd } else { &inv };
        for row in v.chunks_mut(n) {
            plan.process(row);
        }
        let mut col = vec![C64::default(); n];
        for j in 0..n {
            for i in 0..n {
                col[i] = v[i * n + j];
            }
            plan.process(&mut col);
            for i in 0..n {
                v[i * n + j] = col[i];
            }
        }
        if !forward {
            let s = 1.0 / (n * n) as f64;
            v.iter_mut().for_each(|z| *z *= s);
        }
    };
    let x: Vec<f64> = (0..n).map(|i| -l + i as f64 * h).collect();
    let apply = |u: &[C64]| -> Vec<C64> {
        let mut hat = u.to_vec();
        fft2(&mut hat, true);
        // D_j u = F^{-1}(i k_j û); Hu = -ΣD_j² u + 2i A·Du + (|A|² + V)u
        let mut d1 = hat.clone();
        let mut d2 = hat.clone();
        let mut lap = hat.clone();
        for i in 0..n {
            for j in 0..n {
                let idx = i * n + j;
                d1[idx] *= C64::new(0.0, k[i]);
                d2[idx] *= C64::new(0.0, k[j]);
                lap[idx] *= -(k[i] * k[i] + k[j] * k[j]);
            }
        }
        fft2(&mut d1, false);
        fft2(&mut d2, false);
        fft2(&mut lap, false);
        let mut out = vec![C64::default(); n * n];
        for i in 0..n {
            for j in 0..n {
                let idx = i * n + j;
                let (a1, a2) = (-omega * x[j], omega * x[i]);
                let r2 = x[i] * x[i] + x[j] * x[j];
                let v = a1 * a1 + a2 * a2 + omega * omega / 8.0 * (r2 - 1.0).powi(2);
                out[idx] = -lap[idx] + C64::new(0.0, 2.0) * (a1 * d1[idx] + a2 * d2[idx]) + v * u[idx];
            }
        }
        out
    };
    let dot = |a: &[C64], b: &[C64]| -> C64 { a.iter().zip(b).map(|(p, q)| p.conj() * q).sum::<C64>() * (h * h) };
    let norm = |a: &[C64]| dot(a, a).re.sqrt();
    let shift = 1.0;
    let solve = |b: &[C64]| -> Vec<C64> {
        let mut xk = vec![C64::default(); b.len()];
        let mut r = b.to_vec();
        let mut p = r.clone();
        let mut rr = dot(&r, &r).re;
        let b_norm = rr.sqrt();
        for _ in 0..5000 {
            let mut ap = apply(&p);
            for (a, pk) in ap.iter_mut().zip(&p) {
                *a += shift * pk;
            }
            let alpha = rr / dot(&p, &ap).re;
            for idx in 0..xk.len() {
                xk[idx] += alpha * p[idx];
                r[idx] -= alpha * ap[idx];
            }
            let rr_new = dot(&r, &r).re;
            if rr_new.sqrt() < 1e-13 * b_norm {
                break;
            }
            let beta = rr_new / rr;
            for idx in 0..p.len() {
                p[idx] = r[idx] + beta * p[idx];
            }
            rr = rr_new;
        }
        xk
    };
    let mut u: Vec<C64> = (0..n * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            C64::new((-(x[i] * x[i] + x[j] * x[j])).exp(), 0.0)
        })
        .collect();
    let mut ev = 0.0;
    for _ in 0..2000 {
        let s = 1.0 / norm(&u);
        u.iter_mut().for_each(|z| *z *= s);
        let hu = apply(&u);
        ev = dot(&u, &hu).re;
        let res: Vec<C64> = hu.iter().zip(&u).map(|(a, b)| a - ev * b).collect();
        if norm(&res) < 1e-11 * ev.abs() {
            break;
        }
        u = solve(&u);
    }
    let s = 1.0 / norm(&u);
    u.iter_mut().for_each(|z| *z *= s);
    (ev, ComplexField2D::new(grid, u).unwrap())
}

pub fn l2(grid: &Grid2D, v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() * grid.cell_area()).sqrt()
}

/// Sources of the two `𝓛̃` problems for `x0 = (1, 0)` and the raw kernel
/// fields `∂₁Q, ∂₂Q`, sampled from the radial profile.
pub fn expansion_sources(grid: &Grid2D, c_tilde: f64) -> (Vec<f64>, Vec<f64>, [Vec<f64>; 2]) {
    let p = &townes().profile;
    let q = grid.sample(|x1, x2| p.value(x1.hypot(x2)));
    let radial = |x1: f64, x2: f64| {
        let r = x1.hypot(x2);
        if r == 0.0 {
            0.0
        } else {
            p.eval(r).1 / r
        }
    };
    let g1 = grid.sample(|x1, x2| radial(x1, x2) * x1);
    let g2 = grid.sample(|x1, x2| radial(x1, x2) * x2);
    let s1 = grid
        .sample(|x1, x2| x1 * x1 + x2 * x2 + 0.5 * x1 * x1)
        .iter()
        .zip(&q)
        .map(|(a, b)| a * b)
        .collect();
    let s2 = grid
        .sample(|x1, x2| 0.5 * (x1 * x1 + x2 * x2 + c_tilde) * x1)
        .iter()
        .zip(&q)
        .map(|(a, b)| a * b)
        .collect();
    (s1, s2, [g1, g2])
}
