use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cmhop_bench::fixture;
use cmhop_core::geometry::ScaffoldState;
use cmhop_core::rng::substream;
use cmhop_core::sampling::{multistep_metric_sample, pf_ode_sample, ModelFn, OdeSolver, Renoise, SamplingPlan};
use cmhop_core::{Error, NoiseSchedule};

fn consistency_vs_heun(c: &mut Criterion) {
    let fx = fixture(1);
    let schedule = NoiseSchedule::default();
    let ex = &fx.examples[0];
    let f = ModelFn { net: &fx.net, params: &fx.params, context: &ex.context, schedule: &schedule };
    let atoms = ex.clean.atom_count();
    let none = None::<fn(&ScaffoldState) -> Result<f64, Error>>;

    let mut group = c.benchmark_group("sampling");
    group.sample_size(10);
    for steps in [1, 5, 50] {
        let plan = SamplingPlan::karras(&schedule, steps, 1, Renoise::AsPrinted).unwrap();
        group.bench_with_input(BenchmarkId::new("consistency", steps), &plan, |b, plan| {
            let mut rng = substream(0, "bench-cm");
            b.iter(|| multistep_metric_sample(&f, plan, atoms, none, &mut rng).unwrap())
        });
    }
    for steps in [50, 500] {
        group.bench_with_input(BenchmarkId::new("heun", steps), &steps, |b, &steps| {
            let mut rng = substream(0, "bench-ode");
            b.iter(|| pf_ode_sample(&f, &schedule, atoms, steps, OdeSolver::Heun, &mut rng).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, consistency_vs_heun);
criterion_main!(benches);
