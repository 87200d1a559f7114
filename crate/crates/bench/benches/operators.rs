use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use polydisc::multiplier::apply_tm;
use polydisc_bench::{decomposition, field, hybrid, paraproduct, symbol};

fn hybrids(c: &mut Criterion) {
    let mut group = c.benchmark_group("hybrid_evaluate");
    group.sample_size(10);
    for (pattern, l) in [("S", 10), ("SS", 5), ("SM", 5), ("MS", 5)] {
        let op = hybrid(pattern, l).unwrap();
        let f = field(1, pattern.len(), l).unwrap();
        group.bench_with_input(BenchmarkId::new(pattern, l), &f, |b, f| b.iter(|| op.evaluate(black_box(f)).unwrap()));
    }
    group.finish();
}

fn paraproducts(c: &mut Criterion) {
    let mut group = c.benchmark_group("paraproduct_apply");
    group.sample_size(10);
    for (tv, l) in [(&[1u8][..], 10), (&[1, 2][..], 5), (&[3, 3][..], 5)] {
        let op = paraproduct(tv, l).unwrap();
        let (f, g) = (field(2, tv.len(), l).unwrap(), field(3, tv.len(), l).unwrap());
        let id = BenchmarkId::new(format!("{tv:?}"), l);
        group.bench_function(id, |b| b.iter(|| op.apply(black_box(&f), black_box(&g)).unwrap()));
    }
    group.finish();
}

fn multipliers(c: &mut Criterion) {
    let mut group = c.benchmark_group("apply_tm");
    for (name, dim, l) in [("riesz", 1, 10), ("double-riesz", 2, 6), ("mikhlin", 1, 10)] {
        let m = symbol(name, dim).unwrap();
        let (f, g) = (field(4, dim, l).unwrap(), field(5, dim, l).unwrap());
        group.bench_function(BenchmarkId::new(name, l), |b| b.iter(|| apply_tm(&m, black_box(&f), black_box(&g)).unwrap()));
    }
    group.finish();
}

fn decompositions(c: &mut Criterion) {
    let mut group = c.benchmark_group("bump_decomposition");
    for mean_zero in [false, true] {
        let name = if mean_zero { "mean_zero" } else { "plain" };
        group.bench_function(BenchmarkId::new(name, 12), |b| b.iter(|| decomposition(black_box(mean_zero), 12).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, hybrids, paraproducts, multipliers, decompositions);
criterion_main!(benches);
