//! Fixtures shared by the benchmarks.

use rotgp::gpe::{init_trial, optimal_tau, TrapSpec};
use rotgp::{ComplexField2D, Grid2D, Townes};

/// Trial state at `a = fraction · a*`, `β = 0`, `C0 = 1` on `[-4, 4)²`.
pub fn trial(townes: &Townes, fraction: f64, n: usize) -> (TrapSpec, ComplexField2D) {
    let c = &townes.constants;
    let trap = TrapSpec::from_schedule(1.0, 0.0, fraction * c.a_star, c.a_star).expect("trap");
    let grid = Grid2D::new(4.0, n).expect("grid");
    let tau = optimal_tau(&trap, c.lambda);
    let u = init_trial(&grid, &trap, &townes.profile, [1.0, 0.0], tau).expect("trial");
    (trap, u)
}
