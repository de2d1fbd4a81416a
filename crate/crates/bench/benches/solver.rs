use criterion::{criterion_group, criterion_main, Criterion};
use msmfe_bench::example2_fixture;
use msmfe_core::SolvePath;

fn step(c: &mut Criterion) {
    let mut group = c.benchmark_group("example2_step");
    group.sample_size(10);
    for level in [1usize, 2] {
        let (stepper, init) = example2_fixture(level).expect("fixture");
        for (name, path) in [("reduced", SolvePath::Reduced), ("full", SolvePath::Full)] {
            // warm the operator caches so only the step itself is timed
            stepper.step(&init, 1e-4, path, 1e-10).expect("step");
            group.bench_function(format!("{name}/h=1_{}", 4 << level), |b| {
                b.iter(|| stepper.step(&init, 1e-4, path, 1e-10).expect("step"))
            });
        }
    }
    group.finish();
}

fn assembly(c: &mut Criterion) {
    let problem = msmfe_core::presets::example2();
    let mesh = msmfe_core::presets::example2_mesh(3).expect("mesh");
    c.bench_function("assemble_and_factor/h=1_32", |b| {
        b.iter(|| msmfe_core::Stepper::new(&mesh, problem.model.clone(), problem.data.clone()).expect("stepper"))
    });
}

criterion_group!(benches, step, assembly);
criterion_main!(benches);
