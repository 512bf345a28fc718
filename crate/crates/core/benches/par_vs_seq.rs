//! Data-parallel inner loops benched under both execution modes. Group
//! names carry the compiled mode, so
//!
//!     cargo bench -p osl-core
//!     cargo bench -p osl-core --no-default-features
//!
//! produce directly comparable reports for the rayon and sequential paths.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use osl_core::grid::build_euclidean_grids;
use osl_core::operators::{grand_sharp_maximal, KernelOp};
use osl_core::orlicz::{orlicz_maximal, YoungFn};
use osl_core::rng::SplitMix64;
use osl_core::sparse::{sparse_operator, witness_sets};
use osl_core::weights::{a_inf_constant, a_p_constant, Family, Weight};

fn bench_core(c: &mut Criterion) {
    let (space, mut systems) = build_euclidean_grids(512, 9, 1).unwrap();
    let sys = systems.remove(0);
    let fam = Family::whole(&sys);
    let w = Weight::power(&space, -0.4, 0.0, 1.0 / 1024.0).unwrap();
    let mut rng = SplitMix64::new(1);
    let f: Vec<f64> = (0..512).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
    let gauge = YoungFn::power_log(1.0, 1.0).unwrap();
    let t = KernelOp::hilbert(&space).unwrap();
    let cubes: Vec<usize> = (0..sys.cubes.len()).collect();
    let ids: Vec<usize> = (0..sys.cubes.len()).step_by(3).collect();
    let family = witness_sets(&space, &sys, &ids, 0.1).unwrap();

    let mut group = c.benchmark_group(format!("core/{}", osl_core::EXEC_MODE));
    group.sample_size(20);
    group.bench_function("a_p_constant/512", |b| {
        b.iter(|| a_p_constant(&space, black_box(&w), &fam, 2.0).unwrap())
    });
    group.bench_function("a_inf_constant/512", |b| {
        b.iter(|| a_inf_constant(&space, black_box(&w), &fam).unwrap())
    });
    group.bench_function("orlicz_maximal/512", |b| {
        b.iter(|| orlicz_maximal(&space, black_box(&f), &fam, &gauge, Some(&w), 1e-9).unwrap())
    });
    group.bench_function("grand_sharp_maximal/512", |b| {
        b.iter(|| grand_sharp_maximal(&space, &sys, &t, black_box(&f), 6.0, &cubes).unwrap())
    });
    group.bench_function("sparse_operator/512", |b| {
        b.iter(|| sparse_operator(&space, &sys, &family, &gauge, black_box(&f), None, 1e-9).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_core);
criterion_main!(benches);
