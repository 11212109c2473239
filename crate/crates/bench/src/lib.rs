//! Benchmarks for the simulation engine. Run with `cargo bench -p ecasim-bench`.

use criterion::{BenchmarkId, Criterion, Throughput};
use ecasim_core::{schedule_oracle, ProtocolVariant, ScheduleSnapshot, SlotOutcome, StationState, World, WorldConfig};
use std::hint::black_box;

pub const SLOTS: u64 = 100_000;

pub fn world(variant: ProtocolVariant, n: usize) -> World {
    World::uniform(WorldConfig::default(), variant, n, 1).unwrap()
}

/// Saturated runs, where idle stretches are skipped.
pub fn saturated(c: &mut Criterion) {
    let mut group = c.benchmark_group("saturated");
    group.throughput(Throughput::Elements(SLOTS));
    for variant in ProtocolVariant::ALL {
        for n in [10, 50] {
            group.bench_with_input(BenchmarkId::new(variant.name(), n), &n, |b, &n| {
                b.iter(|| black_box(world(variant, n).run(SLOTS).unwrap()))
            });
        }
    }
    group.finish();
}

/// The same runs stepped slot by slot, as when tracing.
pub fn slot_by_slot(c: &mut Criterion) {
    let mut group = c.benchmark_group("slot_by_slot");
    group.throughput(Throughput::Elements(SLOTS));
    for variant in [ProtocolVariant::CSMA_CA, ProtocolVariant::ECA_FAIR_SHARE] {
        for n in [10, 50] {
            group.bench_with_input(BenchmarkId::new(variant.name(), n), &n, |b, &n| {
                b.iter(|| {
                    let mut busy = 0u64;
                    let mut count = |_: u64, _: &[StationState], o: &SlotOutcome| busy += u64::from(*o != SlotOutcome::Empty);
                    world(variant, n).run_observed(SLOTS, &mut count).unwrap();
                    black_box(busy)
                })
            });
        }
    }
    group.finish();
}

pub fn oracle(c: &mut Criterion) {
    let periodic: Vec<(u64, u64)> = (0..50).map(|i| (256, i * 5)).collect();
    let snapshot = ScheduleSnapshot::periodic(&periodic);
    c.bench_function("oracle/50_stations", |b| b.iter(|| schedule_oracle(black_box(&snapshot))));
}
