use criterion::{criterion_group, criterion_main};
use ecasim_bench::{oracle, saturated, slot_by_slot};

criterion_group! {
    name = benches;
    config = criterion::Criterion::default().sample_size(10);
    targets = saturated, slot_by_slot, oracle
}
criterion_main!(benches);
