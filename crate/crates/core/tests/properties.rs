use ecasim_core::*;
use proptest::prelude::*;

fn variant() -> impl Strategy<Value = ProtocolVariant> {
    (0usize..4).prop_map(|i| ProtocolVariant::ALL[i])
}

fn mixed_world(variants: &[ProtocolVariant], seed: u64) -> World {
    let specs: Vec<StationSpec> = variants.iter().map(|&v| StationSpec::saturated(v)).collect();
    World::new(WorldConfig::default(), &specs, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn station_state_stays_in_range(variants in prop::collection::vec(variant(), 1..12), seed: u64) {
        let mut world = mixed_world(&variants, seed);
        let mac = world.config().mac;
        for _ in 0..3_000 {
            world.step();
            for st in world.stations() {
                prop_assert!(st.stage <= mac.max_stage);
                prop_assert!(st.retries < mac.retry_limit);
                prop_assert!(st.backoff < mac.window(st.stage));
                if st.is_deterministic() {
                    prop_assert!(st.backoff <= mac.deterministic_backoff(st.stage));
                }
                if !st.variant.fair_share() {
                    prop_assert_eq!(st.burst_size(), 1);
                }
            }
        }
    }

    #[test]
    fn outcome_follows_zero_counters(variants in prop::collection::vec(variant(), 1..10), seed: u64) {
        let mut world = mixed_world(&variants, seed);
        for _ in 0..2_000 {
            let ready: Vec<usize> = world.stations().iter().filter(|s| s.backoff == 0).map(|s| s.id.0).collect();
            let out = world.step();
            let tx: Vec<usize> = out.transmitters().iter().map(|t| t.station.0).collect();
            prop_assert_eq!(&tx, &ready);
            match ready.len() {
                0 => prop_assert_eq!(out, SlotOutcome::Empty),
                1 => prop_assert!(matches!(out, SlotOutcome::Success(_))),
                _ => prop_assert!(out.is_collision()),
            }
        }
    }

    #[test]
    fn throughput_below_ceiling(variants in prop::collection::vec(variant(), 1..20), seed: u64) {
        let mut world = mixed_world(&variants, seed);
        let m = world.run(50_000).unwrap();
        let t = throughput(&m).unwrap();
        let ceiling = world.config().timing.goodput_ceiling_bps();
        prop_assert!(t.aggregate_bps > 0.0);
        prop_assert!(t.aggregate_bps < ceiling);
        let sum: f64 = t.per_station_bps.iter().sum();
        prop_assert!((sum - t.aggregate_bps).abs() <= 1e-6 * t.aggregate_bps);
        let j = packet_jfi(&m).unwrap();
        prop_assert!(j >= 1.0 / variants.len() as f64 - 1e-12 && j <= 1.0 + 1e-12);
    }

    #[test]
    fn slot_accounting(variants in prop::collection::vec(variant(), 1..16), seed: u64, slots in 1u64..40_000) {
        let mut world = mixed_world(&variants, seed);
        let m = world.run(slots).unwrap();
        prop_assert_eq!(m.tally.total(), slots);
        let attempts: u64 = m.attempts.iter().sum();
        let collided: u64 = m.collided_attempts.iter().sum();
        prop_assert_eq!(attempts - collided, m.tally.successes());
        prop_assert!(collided >= 2 * m.tally.collisions());
        let expected = ecasim_core::timing::tally_airtime(&m.tally, &world.config().timing);
        prop_assert_eq!(m.elapsed_us, expected);
    }
}

#[test]
fn lone_eca_station_matches_closed_form() {
    let mut world = World::uniform(WorldConfig::default(), ProtocolVariant::ECA, 1, 8).unwrap();
    let first = u64::from(world.stations()[0].backoff);
    let m = world.run(800_000 + first + 1).unwrap();
    // one success after `first` idle slots, then 100_000 cycles of 7 idle + 1 success
    let p = TimingParams::default();
    let elapsed = first as f64 * 9.0 + p.success_us(1) + 100_000.0 * (7.0 * 9.0 + p.success_us(1));
    assert_eq!(m.delivered, vec![100_001]);
    assert!((m.elapsed_us - elapsed).abs() < 1e-6 * elapsed);
    let t = throughput(&m).unwrap().aggregate_bps;
    let cycle = 12_000.0 / (63.0 + 134.0 + 12_288.0 / 65.0) * 1e6;
    assert!((t - cycle).abs() / cycle < 1e-3, "{t} vs {cycle}");
}

#[test]
fn fair_share_equalizes_packets_once_converged() {
    for seed in 0..10 {
        let mut world = World::uniform(WorldConfig::default(), ProtocolVariant::ECA_FAIR_SHARE, 12, seed).unwrap();
        let report = world.run_until_collision_free(500_000, 10_000).unwrap();
        assert!(report.converged, "seed {seed}");
        let before: Vec<u64> = world.stations().iter().map(|s| s.delivered).collect();
        // a whole number of the longest cycle
        let cycle = u64::from(world.config().mac.window(world.config().mac.max_stage)) / 2;
        let m = world.run(40 * cycle).unwrap();
        let gained: Vec<u64> = m.delivered.iter().zip(&before).map(|(a, b)| a - b).collect();
        assert!(gained.iter().all(|&g| g == gained[0]), "seed {seed}: {gained:?}");
        assert_eq!(gained[0], 40 * cycle * 2 / 16);
    }
}

#[test]
fn hysteresis_alone_is_unfair_once_converged() {
    let mut unequal = 0;
    for seed in 0..10 {
        let mut world = World::uniform(WorldConfig::default(), ProtocolVariant::ECA_HYSTERESIS, 12, seed).unwrap();
        assert!(world.run_until_collision_free(500_000, 10_000).unwrap().converged);
        let stages: Vec<u32> = world.stations().iter().map(|s| s.stage).collect();
        if stages.iter().any(|&s| s != stages[0]) {
            unequal += 1;
            let m = world.run(100_000).unwrap();
            assert!(packet_jfi(&m).unwrap() < 1.0);
        }
    }
    assert!(unequal > 0);
}
