//! Phase singularities of a sampled wave function.
//!
//! A plaquette is the square cell spanned by nodes `(i, j)` and
//! `(i + 1, j + 1)`; its winding is the sum of principal phase increments
//! along its counter-clockwise boundary divided by `2π`. The grid is not
//! wrapped, so an `N × N` grid has `(N - 1)²` plaquettes.

use std::f64::consts::PI;

use crate::grid::{ComplexField2D, C64};

/// Edges touching a node with modulus below this carry no usable phase.
pub const UNRELIABLE_MODULUS: f64 = 1e-14;
/// Default modulus threshold, relative to `max|u|`.
pub const DEFAULT_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct WindingMap {
    /// Plaquettes per side.
    pub cells: usize,
    /// Row-major by the lower-left node index.
    pub windings: Vec<i32>,
    /// Plaquettes with at least one near-zero corner; their winding is 0.
    pub unreliable: Vec<bool>,
}

impl WindingMap {
    pub fn at(&self, i: usize, j: usize) -> i32 {
        self.windings[i * self.cells + j]
    }

    pub fn is_unreliable(&self, i: usize, j: usize) -> bool {
        self.unreliable[i * self.cells + j]
    }

    /// Sum of windings over plaquettes `i0..i1 × j0..j1`.
    pub fn sum_over(&self, i0: usize, j0: usize, i1: usize, j1: usize) -> i32 {
        (i0..i1).flat_map(|i| (j0..j1).map(move |j| (i, j))).map(|(i, j)| self.at(i, j)).sum()
    }
}

fn increment(a: C64, b: C64) -> f64 {
    (b * a.conj()).arg()
}

pub fn winding_map(u: &ComplexField2D) -> WindingMap {
    let grid = u.grid();
    let n = grid.n();
    let cells = n - 1;
    let d = u.data();
    let mut windings = vec![0; cells * cells];
    let mut unreliable = vec![false; cells * cells];
    for i in 0..cells {
        for j in 0..cells {
            let corners = [d[i * n + j], d[(i + 1) * n + j], d[(i + 1) * n + j + 1], d[i * n + j + 1]];
            if corners.iter().any(|c| c.norm() < UNRELIABLE_MODULUS) {
                unreliable[i * cells + j] = true;
                continue;
            }
            let total: f64 = (0..4).map(|k| increment(corners[k], corners[(k + 1) % 4])).sum();
            windings[i * cells + j] = (total / (2.0 * PI)).round() as i32;
        }
    }
    WindingMap {
        cells,
        windings,
        unreliable,
    }
}

/// Winding of `u` along the counter-clockwise boundary of the node
/// rectangle `[i0, i1] × [j0, j1]`.
pub fn loop_winding(u: &ComplexField2D, i0: usize, j0: usize, i1: usize, j1: usize) -> i32 {
    let n = u.grid().n();
    assert!(i0 < i1 && j0 < j1 && i1 < n && j1 < n, "bad rectangle");
    let d = u.data();
    let at = |i: usize, j: usize| d[i * n + j];
    let mut path = Vec::new();
    path.extend((i0..=i1).map(|i| (i, j0)));
    path.extend((j0 + 1..=j1).map(|j| (i1, j)));
    path.extend((i0..i1).rev().map(|i| (i, j1)));
    path.extend((j0..j1).rev().map(|j| (i0, j)));
    let total: f64 = path
        .windows(2)
        .map(|w| increment(at(w[0].0, w[0].1), at(w[1].0, w[1].1)))
        .sum();
    (total / (2.0 * PI)).round() as i32
}

#[derive(Debug, Clone, PartialEq)]
pub struct VortexReport {
    /// Plaquette centers with nonzero winding, and the winding.
    pub vortices: Vec<([f64; 2], i32)>,
    pub unreliable_cells: usize,
    /// Largest scanned radius, `L - h`.
    pub scan_radius: f64,
    pub vortex_free_radius: f64,
    /// `min|u| / max|u|` over nodes inside the vortex-free disk.
    pub min_modulus_ratio: f64,
    pub threshold: f64,
}

impl VortexReport {
    /// Nonzero-winding plaquettes that meet the disk `|x| <= radius`.
    pub fn count_within(&self, radius: f64, half_cell: f64) -> usize {
        self.vortices
            .iter()
            .filter(|(c, _)| rect_distance(*c, half_cell) <= radius)
            .count()
    }
}

/// Distance from the origin to the square of half-width `half` at `c`.
fn rect_distance(c: [f64; 2], half: f64) -> f64 {
    let dx = (c[0].abs() - half).max(0.0);
    let dy = (c[1].abs() - half).max(0.0);
    dx.hypot(dy)
}

/// Largest `R` such that the disk `|x| < R` meets no plaquette with nonzero
/// (or unreliable) winding and holds no node with `|u| <= threshold·max|u|`,
/// capped at `L - h`. A zero at the center gives `R = 0`.
pub fn vortex_free_radius(u: &ComplexField2D, threshold: f64) -> f64 {
    scan(u, threshold).vortex_free_radius
}

pub fn scan(u: &ComplexField2D, threshold: f64) -> VortexReport {
    let grid = u.grid();
    let h = grid.spacing();
    let map = winding_map(u);
    let cells = map.cells;
    let scan_radius = grid.half_extent() - h;
    let mut radius = scan_radius;
    let mut vortices = Vec::new();
    let mut unreliable_cells = 0;
    for i in 0..cells {
        for j in 0..cells {
            let w = map.at(i, j);
            let bad = map.is_unreliable(i, j);
            if w == 0 && !bad {
                continue;
            }
            let c = [grid.coord(i) + 0.5 * h, grid.coord(j) + 0.5 * h];
            if bad {
                unreliable_cells += 1;
            } else {
                vortices.push((c, w));
            }
            radius = radius.min(rect_distance(c, 0.5 * h));
        }
    }
    let peak = u.max_modulus();
    let cut = threshold * peak;
    for (k, v) in u.data().iter().enumerate() {
        if v.norm() <= cut {
            let x = grid.node(k);
            radius = radius.min(x[0].hypot(x[1]));
        }
    }
    let mut min_ratio = f64::INFINITY;
    for (k, v) in u.data().iter().enumerate() {
        let x = grid.node(k);
        if x[0].hypot(x[1]) < radius {
            min_ratio = min_ratio.min(v.norm() / peak);
        }
    }
    if !min_ratio.is_finite() {
        min_ratio = 0.0;
    }
    VortexReport {
        vortices,
        unreliable_cells,
        scan_radius,
        vortex_free_radius: radius,
        min_modulus_ratio: min_ratio,
        threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2D;

    fn vortex_at(grid: &Grid2D, c: [f64; 2], charge: i32) -> ComplexField2D {
        ComplexField2D::from_fn(grid, |x1, x2| {
            let z = C64::new(x1 - c[0], x2 - c[1]);
            let z = if charge >= 0 { z.powi(charge) } else { z.conj().powi(-charge) };
            z * (-(x1 * x1 + x2 * x2) / 4.0).exp()
        })
        .unwrap()
    }

    #[test]
    fn constant_phase_has_no_windings() {
        let g = Grid2D::new(3.0, 32).unwrap();
        let u = ComplexField2D::from_fn(&g, |x1, _| C64::from_polar(1.0 + x1 * x1, 0.4)).unwrap();
        let m = winding_map(&u);
        assert!(m.windings.iter().all(|&w| w == 0));
        assert_eq!(m.windings.len(), 31 * 31);
    }

    #[test]
    fn canonical_vortex() {
        let g = Grid2D::new(3.0, 32).unwrap();
        let h = g.spacing();
        let u = vortex_at(&g, [0.5 * h, 0.5 * h], 1);
        let m = winding_map(&u);
        let o = g.n() / 2;
        assert_eq!(m.at(o, o), 1);
        assert_eq!(m.windings.iter().map(|w| w.abs()).sum::<i32>(), 1);
        let mc = winding_map(&u.conj());
        assert!(m.windings.iter().zip(&mc.windings).all(|(a, b)| *a == -*b));
    }

    #[test]
    fn vortex_on_node_is_flagged() {
        let g = Grid2D::new(3.0, 32).unwrap();
        let u = vortex_at(&g, [0.0, 0.0], 1);
        let m = winding_map(&u);
        assert_eq!(m.unreliable.iter().filter(|&&b| b).count(), 4);
        assert_eq!(vortex_free_radius(&u, DEFAULT_THRESHOLD), 0.0);
    }

    #[test]
    fn radius_of_zero_free_field() {
        let g = Grid2D::new(3.0, 64).unwrap();
        let u = ComplexField2D::from_fn(&g, |x1, x2| C64::new((-(x1 * x1 + x2 * x2) / 8.0).exp(), 0.0)).unwrap();
        let r = scan(&u, DEFAULT_THRESHOLD);
        assert_eq!(r.vortex_free_radius, 3.0 - g.spacing());
        assert!(r.vortices.is_empty());
    }

    #[test]
    fn planted_vortex_radius() {
        let g = Grid2D::new(4.0, 128).unwrap();
        let h = g.spacing();
        for angle in [0.3f64, 1.1, 2.9, 4.4] {
            let c = [1.5 * angle.cos(), 1.5 * angle.sin()];
            let u = vortex_at(&g, c, 1);
            let r = vortex_free_radius(&u, DEFAULT_THRESHOLD);
            assert!(r >= 1.5 - 2.0 * h && r <= 1.5, "angle {angle}: radius {r}");
        }
    }

    #[test]
    fn loop_matches_sum_inside() {
        let g = Grid2D::new(3.0, 64).unwrap();
        let u = ComplexField2D::from_fn(&g, |x1, x2| {
            let z = C64::new(x1, x2);
            (z - C64::new(0.71, 0.33)) * (z - C64::new(-1.03, 0.52)) * (z.conj() - C64::new(0.2, -1.21))
        })
        .unwrap();
        let m = winding_map(&u);
        assert_eq!(loop_winding(&u, 1, 1, 62, 62), m.sum_over(1, 1, 62, 62));
        assert_eq!(m.sum_over(0, 0, 63, 63), 1);
    }
}
