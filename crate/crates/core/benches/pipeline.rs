//! Sequential versus parallel evaluation, plus the two hot kernels.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use polar_core::agent::{OraclePlanner, RunConfig};
use polar_core::distill::Distiller;
use polar_core::encoder::Encoder;
use polar_core::eval::{evaluate, gen_scenarios, prepare, EvalMode, EvalOptions, ScenarioKind, SpecData, DEFAULT_FILLER_COUNT};
use polar_core::exec::Execution;
use polar_core::memory::GraphConfig;
use polar_core::world::{gen_world, shortest_path_length};

fn suite(n: usize) -> Vec<SpecData> {
    let encoder = Encoder::builtin();
    let planner = OraclePlanner::default();
    gen_scenarios(0, ScenarioKind::CompositionalJoint, n, DEFAULT_FILLER_COUNT)
        .unwrap()
        .iter()
        .map(|s| prepare(s, &planner, &encoder, &Distiller::builtin(), GraphConfig::default(), &RunConfig::default()).unwrap())
        .collect()
}

fn evaluation(c: &mut Criterion) {
    let data = suite(16);
    let encoder = Encoder::builtin();
    let planner = OraclePlanner::new(encoder.clone());
    let mut group = c.benchmark_group("evaluate");
    group.sample_size(10);
    let mut modes = vec![("sequential", Execution::Sequential)];
    if Execution::parallel_available() {
        modes.push(("parallel", Execution::Parallel));
    }
    for (name, execution) in modes {
        let options = EvalOptions { execution, ..EvalOptions::default() };
        group.bench_function(name, |b| {
            b.iter(|| black_box(evaluate(&data, EvalMode::Polar, &encoder, &planner, &options).unwrap()))
        });
    }
    group.finish();
}

fn kernels(c: &mut Criterion) {
    let encoder = Encoder::builtin();
    c.bench_function("encode_sentence", |b| {
        b.iter(|| black_box(encoder.encode(black_box("the mug I use for my tea break with green tea")).unwrap()))
    });

    let spec = gen_scenarios(1, ScenarioKind::Distractor, 1, DEFAULT_FILLER_COUNT).unwrap().remove(0);
    let world = gen_world(&spec.world).unwrap();
    let points: Vec<_> = world.objects().iter().map(|o| o.position).collect();
    c.bench_function("shortest_path", |b| {
        b.iter_batched(
            || (points[0], points[points.len() - 1]),
            |(from, to)| black_box(shortest_path_length(&world, from, to).unwrap()),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, evaluation, kernels);
criterion_main!(benches);
