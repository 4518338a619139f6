use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use nstrace::calltree::{build_forest, ForestOptions, OpRecord};
use nstrace::exec::Execution;
use nstrace::report::aggregate;
use nstrace::taxonomy::{builtin, classify_all};
use nstrace::trace::{Device, SourceFormat, TraceEvent, TraceSet};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::hint::black_box;

const OPS: &[&str] = &[
    "aten::addmm", "aten::bmm", "aten::conv2d", "aten::relu", "aten::add", "aten::softmax", "aten::max_pool2d",
    "aten::embedding", "aten::copy_", "aten::transpose", "aten::cat", "aten::empty", "volta_sgemm_128x64_nn",
    "Memcpy HtoD (Pageable -> Device)", "vectorized_elementwise_kernel",
];

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn records(n: usize) -> Vec<OpRecord> {
    let mut rng = StdRng::seed_from_u64(7);
    (0..n)
        .map(|i| {
            let name = OPS[rng.gen_range(0..OPS.len())];
            let name = if i % 64 == 0 { format!("{name}_{}", i % 4096) } else { name.to_string() };
            OpRecord::new(name, Device::Cpu, rng.gen_range(0..100_000), 0)
        })
        .collect()
}

/// `lanes` lanes of back-to-back three-level call stacks.
fn trace(lanes: usize, stacks_per_lane: usize) -> TraceSet {
    let mut set = TraceSet::new("bench", SourceFormat::Canonical);
    for lane in 0..lanes {
        let lane = lane.to_string();
        for s in 0..stacks_per_lane as i64 {
            let t = s * 100;
            set.events.push(TraceEvent::span("aten::linear", lane.as_str(), Device::Cpu, t, 100));
            set.events.push(TraceEvent::span("aten::addmm", lane.as_str(), Device::Cpu, t + 10, 80));
            set.events.push(TraceEvent::span("aten::copy_", lane.as_str(), Device::Cpu, t + 20, 30));
        }
    }
    set
}

fn bench_classify(c: &mut Criterion) {
    let rules = builtin("ml8").expect("builtin rules");
    let input = records(200_000);
    let mut group = c.benchmark_group("classify_all");
    group.throughput(Throughput::Elements(input.len() as u64));
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &input, |b, input| {
            b.iter(|| black_box(classify_all(input.clone(), &rules, exec)))
        });
    }
    group.finish();
}

fn bench_aggregate(c: &mut Criterion) {
    let rules = builtin("ml8").expect("builtin rules");
    let taxonomy = rules.taxonomy();
    let (classified, _) = classify_all(records(1_000_000), &rules, Execution::Parallel);
    let mut group = c.benchmark_group("aggregate");
    group.throughput(Throughput::Elements(classified.len() as u64));
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| black_box(aggregate(&classified, &taxonomy, "bench", exec).unwrap())));
    }
    group.finish();
}

fn bench_forest(c: &mut Criterion) {
    let set = trace(16, 10_000);
    let mut group = c.benchmark_group("build_forest");
    group.throughput(Throughput::Elements(set.events.len() as u64));
    for (name, exec) in MODES {
        let opts = ForestOptions { clip: false, exec };
        group.bench_function(name, |b| b.iter(|| black_box(build_forest(&set, opts).unwrap())));
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_classify, bench_aggregate, bench_forest
}
criterion_main!(benches);
