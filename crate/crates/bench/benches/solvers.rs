use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use mpet_bench::{barenblatt, mpet4, preconditioner};
use mpet_core::assembly::assemble_full;
use mpet_core::krylov::minres_mpet;
use mpet_core::mesh::build_unit_square_mesh;
use mpet_core::splitsolve::{FixedStress, FixedStressOptions};

const MESHES: [usize; 2] = [8, 16];

fn assembly(c: &mut Criterion) {
    let mut g = c.benchmark_group("assembly");
    for n in MESHES {
        let (_, prob) = barenblatt(n);
        g.bench_with_input(BenchmarkId::new("barenblatt", n), &n, |b, &n| {
            b.iter(|| {
                let mesh = build_unit_square_mesh(n).unwrap();
                assemble_full(&mesh, &prob.model, &prob.bc).unwrap()
            })
        });
    }
    g.finish();
}

fn preconditioner_apply(c: &mut Criterion) {
    let mut g = c.benchmark_group("preconditioner_apply");
    for n in MESHES {
        let (_, prob) = mpet4(n);
        let pc = preconditioner(&prob);
        let r = prob.sys.rhs();
        g.bench_with_input(BenchmarkId::new("mpet4", n), &r, |b, r| b.iter(|| pc.apply(r).unwrap()));
    }
    g.finish();
}

fn solvers(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve");
    g.sample_size(10);
    for n in MESHES {
        let (cfg, prob) = barenblatt(n);
        let pc = preconditioner(&prob);
        let fs = FixedStress::new(&prob.sys, &prob.model).unwrap();
        let opts = FixedStressOptions { reduction: cfg.reduction, max_iter: cfg.max_iter, reference: None };
        g.bench_with_input(BenchmarkId::new("fixed_stress", n), &n, |b, _| b.iter(|| fs.solve(&pc, &opts).unwrap()));
        g.bench_with_input(BenchmarkId::new("minres", n), &n, |b, _| {
            b.iter(|| minres_mpet(&prob.sys, &pc, cfg.reduction, cfg.max_iter).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, assembly, preconditioner_apply, solvers);
criterion_main!(benches);
