use std::collections::BTreeMap;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use packlab_core::engine::pack;
use packlab_core::metrics::RunRecord;
use packlab_core::par::{self, Parallelism};
use packlab_core::params::{Assignment, ParamKind, ParamValue};
use packlab_core::recipe::{Ingredient, PackingVolume, Recipe};
use packlab_core::rng::{below, engine_rng, unit_f64};
use packlab_core::runner::{run_in_memory, RunOptions};
use packlab_core::sampler::{ExperimentConfig, ParameterSpec};
use packlab_core::xfilter::{self, Predicate, RowGroup};
use packlab_core::density;

const MODES: [(&str, Parallelism); 2] = [("sequential", Parallelism::Sequential), ("auto", Parallelism::Auto)];

fn job_matrix(c: &mut Criterion) {
    let recipe = Recipe::new(
        "bench",
        PackingVolume::plane2d(66.0, 66.0).with_periodic(true),
        2.0,
        vec![Ingredient::new("s", 5.0, 40).with_jitter(50, 6.0)],
    );
    let spec = ParameterSpec::even("ingredient.s.nb_jitter", ParamKind::Integer, 5.0, 200.0, 8);
    let cfg = ExperimentConfig::new(recipe, vec![spec], 8, 8);
    let mut g = c.benchmark_group("job_matrix_8x8");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &m| {
            b.iter(|| run_in_memory(&cfg, &RunOptions::new(m)).unwrap())
        });
    }
    g.finish();
}

fn voxelize(c: &mut Criterion) {
    let volume = PackingVolume::box3d(100.0, 100.0, 100.0).with_periodic(true);
    let recipe = Recipe::new("vox", volume.clone(), 2.0, vec![Ingredient::new("s", 5.0, 300)]);
    let outputs: Vec<_> = (0..32).map(|s| pack(&recipe, &Assignment::new(), s).unwrap()).collect();
    let mut g = c.benchmark_group("voxelize_32_outputs");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &m| {
            b.iter(|| {
                let vols = par::map(&outputs, m, |o| density::voxelize(o, &volume, [24, 24, 24]));
                density::average_volumes(&vols).unwrap()
            })
        });
    }
    g.finish();
}

fn filter_scan(c: &mut Criterion) {
    let mut rng = engine_rng(5);
    let records: Vec<RunRecord> = (0..100_000u32)
        .map(|i| {
            let mut params = Assignment::new();
            params.insert("ingredient.s.nb_jitter".into(), ParamValue::Int(below(&mut rng, 500) as i64));
            params.insert("ingredient.s.radius".into(), ParamValue::Num(1.0 + 9.0 * unit_f64(&mut rng)));
            RunRecord {
                run_index: i,
                seeds: vec![i as u64],
                params,
                metrics: BTreeMap::from([("usage".to_string(), unit_f64(&mut rng))]),
                distances: BTreeMap::new(),
            }
        })
        .collect();
    let row = RowGroup::new()
        .with("usage", Predicate::Range([0.2, 0.9]))
        .with("ingredient.s.radius", Predicate::Range([2.0, 6.0]));
    let mut g = c.benchmark_group("histogram_100k_rows");
    for (name, mode) in MODES {
        let table = xfilter::load_records(&records).unwrap().with_parallelism(mode);
        g.bench_function(name, |b| b.iter(|| table.histogram(&row, "ingredient.s.nb_jitter", 20).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, job_matrix, voxelize, filter_scan);
criterion_main!(benches);
