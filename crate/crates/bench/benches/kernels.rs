use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rotgp::expansion::{LinearizedOperator, OperatorKind};
use rotgp::gpe::{minimize, Hamiltonian, MinimizeOptions};
use rotgp::grid::laplacian;
use rotgp::townes::shoot_townes;
use rotgp::{vortex, Grid2D, Townes};
use rotgp_bench::trial;

fn spectral(c: &mut Criterion) {
    let t = Townes::solve().unwrap();
    let mut g = c.benchmark_group("spectral");
    for n in [128, 256, 512] {
        let (trap, u) = trial(&t, 0.9, n);
        g.bench_with_input(BenchmarkId::new("laplacian", n), &u, |b, u| b.iter(|| laplacian(black_box(u))));
        let ham = Hamiltonian::new(u.grid(), trap);
        g.bench_with_input(BenchmarkId::new("energy", n), &u, |b, u| b.iter(|| ham.energy(black_box(u))));
        g.bench_with_input(BenchmarkId::new("energy_gradient", n), &u, |b, u| {
            b.iter(|| ham.energy_gradient(black_box(u)))
        });
        g.bench_with_input(BenchmarkId::new("winding_map", n), &u, |b, u| {
            b.iter(|| vortex::winding_map(black_box(u)))
        });
    }
    g.finish();
}

fn townes(c: &mut Criterion) {
    c.bench_function("shoot_townes", |b| b.iter(|| shoot_townes(black_box(24.0), 1e-12).unwrap()));
}

fn linearized(c: &mut Criterion) {
    let t = Townes::solve().unwrap();
    let grid = Grid2D::new(20.0, 512).unwrap();
    let op = LinearizedOperator::new(OperatorKind::LTilde, &t, &grid).unwrap();
    let v: Vec<f64> = (0..grid.len()).map(|k| ((k % 97) as f64).sin()).collect();
    c.bench_function("ltilde_apply_512", |b| b.iter(|| op.apply(black_box(&v))));
}

fn minimizer(c: &mut Criterion) {
    let t = Townes::solve().unwrap();
    let (trap, u) = trial(&t, 0.85, 128);
    let opts = MinimizeOptions {
        restarts: 0,
        ..MinimizeOptions::default()
    };
    let mut g = c.benchmark_group("minimize");
    g.sample_size(10);
    g.bench_function("n128", |b| b.iter(|| minimize(&trap, black_box(&u), &opts).unwrap()));
    g.finish();
}

criterion_group!(benches, spectral, townes, linearized, minimizer);
criterion_main!(benches);
