use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use robin_fem::assembly::{assemble_jacobian_with, assemble_residual_with};
use robin_fem::mesh::{generate_unit_square, DiscreteField};
use robin_fem::{instances, regularize, Exec};

fn paths() -> Vec<(&'static str, Exec)> {
    let mut out = vec![("sequential", Exec::Sequential)];
    if Exec::default() != Exec::Sequential {
        out.push(("parallel", Exec::default()));
    }
    out
}

fn bench_assembly(c: &mut Criterion) {
    for m in [64, 256] {
        let mesh = generate_unit_square(m).unwrap().into_shared();
        let spec = instances::singular_demo(mesh.clone(), 1.0).unwrap();
        let rp = regularize(&spec, 1024).unwrap();
        let u = DiscreteField::interpolate(mesh.clone(), |x, y| 1.0 + x * (1.0 - x) + 0.5 * y).into_values();
        let j = assemble_jacobian_with(&rp, &u, Exec::Sequential);

        let mut group = c.benchmark_group(format!("square_m{m}"));
        for (name, exec) in paths() {
            group.bench_with_input(BenchmarkId::new("residual", name), &exec, |b, &exec| {
                b.iter(|| assemble_residual_with(&rp, black_box(&u), exec).unwrap())
            });
            group.bench_with_input(BenchmarkId::new("jacobian", name), &exec, |b, &exec| {
                b.iter(|| assemble_jacobian_with(&rp, black_box(&u), exec))
            });
            let mut out = vec![0.0; u.len()];
            group.bench_with_input(BenchmarkId::new("matvec", name), &exec, |b, &exec| {
                b.iter(|| j.matvec(black_box(&u), &mut out, exec))
            });
        }
        group.finish();
    }
}

criterion_group!(benches, bench_assembly);
criterion_main!(benches);
