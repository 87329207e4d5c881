use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use scenforge_bench::{build, describe, end_to_end, score, simulate, REQUESTS};

fn stages(c: &mut Criterion) {
    let names = ["intersection", "construction", "cut_in"];
    let mut g = c.benchmark_group("stages");
    for (name, text) in names.iter().zip(REQUESTS) {
        let desc = describe(text, 1);
        let bundle = build(&desc, 1);
        let trace = simulate(&bundle, 20.0);
        g.bench_with_input(BenchmarkId::new("interpret", name), &text, |b, t| b.iter(|| describe(black_box(t), 1)));
        g.bench_with_input(BenchmarkId::new("build", name), &desc, |b, d| b.iter(|| build(black_box(d), 1)));
        g.bench_with_input(BenchmarkId::new("simulate_20s", name), &bundle, |b, x| b.iter(|| simulate(black_box(x), 20.0)));
        g.bench_with_input(BenchmarkId::new("score", name), &(&bundle, &trace), |b, (x, t)| b.iter(|| score(black_box(x), black_box(t))));
    }
    g.finish();
}

fn whole(c: &mut Criterion) {
    c.bench_function("end_to_end", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            end_to_end(black_box(REQUESTS[(seed % 3) as usize]), seed)
        })
    });
}

criterion_group!(benches, stages, whole);
criterion_main!(benches);
