use std::hint::black_box;

use batree::INF;
use batree_bench::{configs, filled, keys};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

const MK: u64 = 100_000;

fn updates(c: &mut Criterion) {
    let mut g = c.benchmark_group("insert+delete");
    g.throughput(Throughput::Elements(2));
    for (name, cfg) in configs() {
        let t = filled(cfg, MK / 2, MK, 1);
        let ks = keys(4096, MK, 2);
        let mut i = 0;
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let k = ks[i % ks.len()];
                i += 1;
                black_box(t.insert(k).unwrap());
                black_box(t.delete(k).unwrap());
            })
        });
    }
    g.finish();
}

fn queries(c: &mut Criterion) {
    let (_, cfg) = configs().remove(0);
    let t = filled(cfg, MK / 2, MK, 3);
    let ks = keys(4096, MK, 4);
    let mut g = c.benchmark_group("queries");
    let mut i = 0;
    g.bench_function("contains", |b| {
        b.iter(|| {
            i += 1;
            black_box(t.contains(ks[i % ks.len()]).unwrap())
        })
    });
    g.bench_function("rank", |b| {
        b.iter(|| {
            i += 1;
            black_box(t.rank(ks[i % ks.len()]))
        })
    });
    g.bench_function("select", |b| {
        b.iter(|| {
            i += 1;
            black_box(t.select(ks[i % ks.len()] / 2 + 1).unwrap())
        })
    });
    for rq in [8, 256, 8192, 65536] {
        g.bench_with_input(BenchmarkId::new("range_count", rq), &rq, |b, &rq| {
            b.iter(|| {
                i += 1;
                let lo = ks[i % ks.len()] % (MK - rq);
                black_box(t.range_count(lo, lo + rq - 1))
            })
        });
    }
    g.bench_function("snapshot+len", |b| b.iter(|| black_box(t.snapshot().range_count(0, INF - 1))));
    g.finish();
}

fn sorted_build(c: &mut Criterion) {
    let mut g = c.benchmark_group("sorted build 2048");
    g.sample_size(10);
    g.throughput(Throughput::Elements(2048));
    for (name, cfg) in configs() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let t = batree::BatTree::with_config(cfg.clone());
                for k in 0..2048 {
                    t.insert(k).unwrap();
                }
                t
            })
        });
    }
    g.finish();
}

criterion_group!(benches, updates, queries, sorted_build);
criterion_main!(benches);
