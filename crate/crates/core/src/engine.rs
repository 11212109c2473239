//! Slot-synchronized channel loop.
//!
//! Each slot the engine collects the transmission intents of all stations
//! and arbitrates an ideal shared channel: no intent leaves the slot empty,
//! exactly one is a success, two or more collide. Transmitters then apply
//! the success or collision update and every other backlogged station
//! counts down one slot. A station never counts down in a slot where it
//! transmits, so a deterministic backoff `b` repeats every `b + 1` slots.
//!
//! Under saturation nothing can happen until the smallest backoff reaches
//! zero, so [`World::run`] jumps over idle stretches in one step. Runs that
//! need every slot (traces) go through [`World::run_observed`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::calendar::Calendar;
use crate::error::{ConfigError, EngineError};
use crate::mac::{MacParams, ProtocolVariant, StationId, StationState, TxAttempt};
use crate::metrics::{schedule_oracle, CollisionSeries, RunMetrics, ScheduleEntry, ScheduleSnapshot, ScheduleVerdict, SlotTally};
use crate::rng::{mac_stream, traffic_stream, StationRng};
use crate::timing::{tally_airtime, TimingParams};

/// Channel verdict for one slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotOutcome {
    Empty,
    Success(TxAttempt),
    /// Two or more simultaneous attempts.
    Collision(Vec<TxAttempt>),
}

impl SlotOutcome {
    pub fn is_collision(&self) -> bool {
        matches!(self, SlotOutcome::Collision(_))
    }

    pub fn transmitters(&self) -> &[TxAttempt] {
        match self {
            SlotOutcome::Empty => &[],
            SlotOutcome::Success(tx) => std::slice::from_ref(tx),
            SlotOutcome::Collision(txs) => txs,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SlotOutcome::Empty => "empty",
            SlotOutcome::Success(_) => "success",
            SlotOutcome::Collision(_) => "collision",
        }
    }
}

/// Packet arrival process of one station.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TrafficModel {
    /// A packet is always waiting.
    #[default]
    Saturated,
    /// One arrival per slot with probability `arrival_prob`, into a queue
    /// of `capacity` packets; arrivals to a full queue are lost.
    Bernoulli { arrival_prob: f64, capacity: u32 },
}

impl TrafficModel {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match *self {
            TrafficModel::Saturated => Ok(()),
            TrafficModel::Bernoulli { arrival_prob, capacity } => {
                if !(arrival_prob > 0.0 && arrival_prob <= 1.0) {
                    return Err(ConfigError::Traffic(format!(
                        "arrival probability must lie in (0, 1], got {arrival_prob}"
                    )));
                }
                if capacity == 0 {
                    return Err(ConfigError::Traffic("queue capacity must be at least 1".into()));
                }
                Ok(())
            }
        }
    }
}

/// Variant and traffic of one station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationSpec {
    pub variant: ProtocolVariant,
    #[serde(default)]
    pub traffic: TrafficModel,
}

impl StationSpec {
    pub fn saturated(variant: ProtocolVariant) -> Self {
        Self {
            variant,
            traffic: TrafficModel::Saturated,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub mac: MacParams,
    pub timing: TimingParams,
    /// Sampling interval of the cumulative collision-fraction series.
    pub sample_every: u64,
    /// Collision-free slots required to call a world converged when the
    /// schedule oracle does not apply (legacy stations or unsaturated traffic).
    pub observation_window: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            mac: MacParams::default(),
            timing: TimingParams::default(),
            sample_every: 100,
            observation_window: 10_000,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.mac.validate()?;
        self.timing.validate()?;
        if self.sample_every == 0 {
            return Err(ConfigError::Traffic("sample_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Receives every slot before its outcome is applied.
pub trait SlotObserver {
    /// False for observers that do not care about individual idle slots,
    /// which lets the engine skip over them.
    const EVERY_SLOT: bool = true;

    /// `stations` holds the state at the start of slot `slot`.
    fn observe(&mut self, slot: u64, stations: &[StationState], outcome: &SlotOutcome);
}

/// Observer that ignores everything.
pub struct NoObserver;

impl SlotObserver for NoObserver {
    const EVERY_SLOT: bool = false;

    fn observe(&mut self, _: u64, _: &[StationState], _: &SlotOutcome) {}
}

impl<F: FnMut(u64, &[StationState], &SlotOutcome)> SlotObserver for F {
    fn observe(&mut self, slot: u64, stations: &[StationState], outcome: &SlotOutcome) {
        self(slot, stations, outcome)
    }
}

#[derive(Debug, Clone)]
struct TrafficSource {
    model: TrafficModel,
    backlog: u64,
    generated: u64,
    overflow: u64,
    rng: StationRng,
}

impl TrafficSource {
    fn arrive(&mut self) {
        if let TrafficModel::Bernoulli { arrival_prob, capacity } = self.model {
            if self.rng.gen_bool(arrival_prob) {
                self.generated += 1;
                if self.backlog < u64::from(capacity) {
                    self.backlog += 1;
                } else {
                    self.overflow += 1;
                }
            }
        }
    }

    fn remove(&mut self, packets: u64) {
        if let TrafficModel::Bernoulli { .. } = self.model {
            debug_assert!(self.backlog >= packets);
            self.backlog -= packets;
        }
    }

    fn has_packet(&self) -> bool {
        match self.model {
            TrafficModel::Saturated => true,
            TrafficModel::Bernoulli { .. } => self.backlog > 0,
        }
    }

    /// Most packets one burst may carry.
    fn burst_cap(&self) -> u32 {
        match self.model {
            TrafficModel::Saturated => u32::MAX,
            TrafficModel::Bernoulli { .. } => self.backlog.min(u64::from(u32::MAX)) as u32,
        }
    }
}

/// Packet accounting of one unsaturated station.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueStats {
    pub generated: u64,
    pub overflow: u64,
    pub backlog: u64,
}

/// Result of [`World::run_until_collision_free`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub metrics: RunMetrics,
    pub converged: bool,
    pub slots_to_convergence: Option<u64>,
}

/// Largest contention window served by the calendar fast path; larger
/// configurations are simulated slot by slot.
const MAX_CALENDAR_HORIZON: u64 = 1 << 20;

/// A single collision domain and its stations.
#[derive(Debug, Clone)]
pub struct World {
    config: WorldConfig,
    stations: Vec<StationState>,
    mac_rngs: Vec<StationRng>,
    traffic: Vec<TrafficSource>,
    slot_index: u64,
    all_saturated: bool,
    oracle_applies: bool,
    attempts: Vec<u64>,
    collided_attempts: Vec<u64>,
    tally: SlotTally,
    series: CollisionSeries,
    certified_at: Option<u64>,
    clear_since: u64,
    intents: Vec<TxAttempt>,
}

impl World {
    pub fn new(config: WorldConfig, specs: &[StationSpec], seed: u64) -> Result<Self, ConfigError> {
        config.validate()?;
        if specs.is_empty() {
            return Err(ConfigError::NoStations);
        }
        let mut stations = Vec::with_capacity(specs.len());
        let mut mac_rngs = Vec::with_capacity(specs.len());
        let mut traffic = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            spec.traffic.validate()?;
            let mut rng = mac_stream(seed, i);
            let mut station = StationState::new(StationId(i), &config.mac, spec.variant, &mut rng)?;
            let source = TrafficSource {
                model: spec.traffic,
                backlog: 0,
                generated: 0,
                overflow: 0,
                rng: traffic_stream(seed, i),
            };
            station.has_packet = source.has_packet();
            stations.push(station);
            mac_rngs.push(rng);
            traffic.push(source);
        }
        let all_saturated = specs.iter().all(|s| s.traffic == TrafficModel::Saturated);
        let oracle_applies = all_saturated && specs.iter().all(|s| s.variant.deterministic_after_success());
        let n = specs.len();
        Ok(Self {
            config,
            stations,
            mac_rngs,
            traffic,
            slot_index: 0,
            all_saturated,
            oracle_applies,
            attempts: vec![0; n],
            collided_attempts: vec![0; n],
            tally: SlotTally::default(),
            series: CollisionSeries::new(config.sample_every),
            certified_at: None,
            clear_since: 0,
            intents: Vec::with_capacity(n),
        })
    }

    /// `n` saturated stations running `variant`.
    pub fn uniform(config: WorldConfig, variant: ProtocolVariant, n: usize, seed: u64) -> Result<Self, ConfigError> {
        Self::new(config, &vec![StationSpec::saturated(variant); n], seed)
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn stations(&self) -> &[StationState] {
        &self.stations
    }

    /// Direct access for setting up specific contention states.
    pub fn stations_mut(&mut self) -> &mut [StationState] {
        &mut self.stations
    }

    pub fn slot_index(&self) -> u64 {
        self.slot_index
    }

    pub fn queue_stats(&self, station: usize) -> QueueStats {
        let t = &self.traffic[station];
        QueueStats {
            generated: t.generated,
            overflow: t.overflow,
            backlog: t.backlog,
        }
    }

    /// Whether collision-free operation is certified by the schedule oracle
    /// (all stations deterministic and saturated) rather than by observation.
    pub fn oracle_applies(&self) -> bool {
        self.oracle_applies
    }

    /// Advance one slot.
    pub fn step(&mut self) -> SlotOutcome {
        self.step_with(&mut NoObserver)
    }

    fn step_with<O: SlotObserver>(&mut self, observer: &mut O) -> SlotOutcome {
        self.intents.clear();
        for (station, source) in self.stations.iter().zip(&self.traffic) {
            if let Some(mut attempt) = station.intent() {
                attempt.n_packets = attempt.n_packets.min(source.burst_cap());
                self.intents.push(attempt);
            }
        }
        let outcome = match self.intents.len() {
            0 => SlotOutcome::Empty,
            1 => SlotOutcome::Success(self.intents[0]),
            _ => SlotOutcome::Collision(self.intents.clone()),
        };
        observer.observe(self.slot_index, &self.stations, &outcome);

        let params = self.config.mac;
        let mut newly_deterministic = false;
        for (i, station) in self.stations.iter_mut().enumerate() {
            if !station.has_packet {
                continue;
            }
            if station.backoff > 0 {
                station.countdown();
                continue;
            }
            self.attempts[i] += 1;
            let rng = &mut self.mac_rngs[i];
            match &outcome {
                SlotOutcome::Success(attempt) => {
                    let was_deterministic = station.is_deterministic();
                    station.on_success(attempt, &params, rng);
                    self.traffic[i].remove(u64::from(attempt.n_packets));
                    newly_deterministic = station.is_deterministic() && !was_deterministic;
                }
                SlotOutcome::Collision(_) => {
                    self.collided_attempts[i] += 1;
                    let dropped = station.dropped;
                    station.on_collision(&params, rng);
                    self.traffic[i].remove(station.dropped - dropped);
                }
                SlotOutcome::Empty => unreachable!("backlogged station at zero backoff without intent"),
            }
        }

        if !self.all_saturated {
            for ((station, source), rng) in self.stations.iter_mut().zip(&mut self.traffic).zip(&mut self.mac_rngs) {
                source.arrive();
                match (station.has_packet, source.has_packet()) {
                    (true, false) => {
                        station.has_packet = false;
                        station.on_queue_empty(&params, rng);
                    }
                    (false, true) => station.has_packet = true,
                    _ => {}
                }
            }
        }

        #[cfg(debug_assertions)]
        self.check_invariants();

        self.tally.record(&outcome);
        self.series.record(outcome.is_collision());
        self.slot_index += 1;
        if outcome.is_collision() {
            self.certified_at = None;
            self.clear_since = self.slot_index;
        } else if newly_deterministic && self.oracle_applies && self.certified_at.is_none() {
            self.try_certify(None);
        }
        outcome
    }

    #[cfg(debug_assertions)]
    fn check_invariants(&self) {
        let p = &self.config.mac;
        for s in &self.stations {
            debug_assert!(s.stage <= p.max_stage, "stage bound violated: {s:?}");
            debug_assert!(s.retries < p.retry_limit, "retry bound violated: {s:?}");
            debug_assert!(s.backoff < p.window(s.stage), "backoff bound violated: {s:?}");
        }
    }

    fn try_certify(&mut self, wake: Option<&[u64]>) {
        if !self.stations.iter().all(StationState::is_deterministic) {
            return;
        }
        let snapshot = match wake {
            Some(wake) => self.snapshot_with(|i, _| wake[i]),
            None => self.schedule_snapshot(),
        };
        if schedule_oracle(&snapshot) == ScheduleVerdict::CollisionFree {
            self.certified_at = Some(self.slot_index);
        }
    }

    /// Current transmission schedule of every station.
    pub fn schedule_snapshot(&self) -> ScheduleSnapshot {
        self.snapshot_with(|_, s| self.slot_index + u64::from(s.backoff))
    }

    fn snapshot_with(&self, phase: impl Fn(usize, &StationState) -> u64) -> ScheduleSnapshot {
        let params = &self.config.mac;
        ScheduleSnapshot::new(
            self.stations
                .iter()
                .enumerate()
                .map(|(i, s)| ScheduleEntry {
                    deterministic: s.variant.deterministic_after_success() && s.is_deterministic() && s.has_packet,
                    period: u64::from(params.deterministic_period(s.stage)),
                    phase: phase(i, s),
                })
                .collect(),
        )
    }

    /// Slot at which collision-free operation was certified, if it holds now.
    ///
    /// With the oracle this is the slot after the success that completed a
    /// conflict-free schedule. Otherwise it is the start of the current
    /// collision-free stretch once that stretch spans `window` slots.
    pub fn convergence_slot(&self, window: u64) -> Option<u64> {
        if self.oracle_applies {
            self.certified_at
        } else {
            (self.slot_index - self.clear_since >= window).then_some(self.clear_since)
        }
    }

    /// Run `n_slots` more slots and report metrics for the whole history.
    pub fn run(&mut self, n_slots: u64) -> Result<RunMetrics, EngineError> {
        self.run_observed(n_slots, &mut NoObserver)
    }

    /// Like [`World::run`], showing every slot to `observer`.
    pub fn run_observed<O: SlotObserver>(&mut self, n_slots: u64, observer: &mut O) -> Result<RunMetrics, EngineError> {
        if n_slots == 0 {
            return Err(EngineError::ZeroSlots);
        }
        self.drive(self.slot_index + n_slots, None, observer);
        Ok(self.metrics())
    }

    /// Run until collision-free operation is certified or `max_slots` more
    /// slots have elapsed. `window` is the observation window used when the
    /// schedule oracle does not apply.
    pub fn run_until_collision_free(&mut self, max_slots: u64, window: u64) -> Result<ConvergenceReport, EngineError> {
        if max_slots == 0 {
            return Err(EngineError::ZeroSlots);
        }
        if window == 0 {
            return Err(EngineError::ZeroWindow);
        }
        self.drive(self.slot_index + max_slots, Some(window), &mut NoObserver);
        let slots_to_convergence = self.convergence_slot(window);
        let mut metrics = self.metrics();
        metrics.convergence_slot = slots_to_convergence;
        Ok(ConvergenceReport {
            metrics,
            converged: slots_to_convergence.is_some(),
            slots_to_convergence,
        })
    }

    fn drive<O: SlotObserver>(&mut self, end: u64, stop_window: Option<u64>, observer: &mut O) {
        if !O::EVERY_SLOT && self.all_saturated {
            let horizon = u64::from(self.config.mac.window(self.config.mac.max_stage));
            let in_range = self.stations.iter().all(|s| u64::from(s.backoff) < horizon);
            if horizon <= MAX_CALENDAR_HORIZON && in_range {
                self.drive_saturated(end, stop_window, horizon);
                return;
            }
        }
        while self.slot_index < end {
            if let Some(window) = stop_window {
                if self.convergence_slot(window).is_some() {
                    return;
                }
            }
            self.step_with(observer);
        }
    }

    /// Saturated fast path. Every station is always backlogged, so its next
    /// attempt happens at the absolute slot `now + backoff`. Stations wait in
    /// a calendar keyed by that slot and idle stretches cost nothing. Backoff
    /// counters are written back when the loop exits.
    fn drive_saturated(&mut self, end: u64, stop_window: Option<u64>, horizon: u64) {
        let params = self.config.mac;
        let mut calendar = Calendar::new(horizon, self.stations.len());
        let mut wake: Vec<u64> = Vec::with_capacity(self.stations.len());
        for (i, s) in self.stations.iter().enumerate() {
            let t = self.slot_index + u64::from(s.backoff);
            calendar.insert(t, i);
            wake.push(t);
        }
        // outcome counts indexed by log2 of the (longest) burst
        let mut successes = [0u64; 32];
        let mut collisions = [0u64; 32];
        let mut transmitters = Vec::with_capacity(self.stations.len());

        loop {
            if let Some(window) = stop_window {
                if self.convergence_slot(window).is_some() {
                    break;
                }
            }
            let Some(next) = calendar.next_slot(self.slot_index) else {
                break;
            };
            let mut target = next.min(end);
            if let (Some(window), false) = (stop_window, self.oracle_applies) {
                target = target.min(self.clear_since + window);
            }
            if target > self.slot_index {
                let idle = target - self.slot_index;
                self.tally.empty += idle;
                self.series.record_clear(idle);
                self.slot_index = target;
                continue;
            }
            if self.slot_index >= end {
                break;
            }

            transmitters.clear();
            calendar.drain(next, &mut transmitters);
            let collision = transmitters.len() > 1;
            let mut newly_deterministic = false;
            let mut longest_stage = 0;
            for &i in &transmitters {
                let station = &mut self.stations[i];
                station.backoff = 0;
                self.attempts[i] += 1;
                let burst = station.burst_size();
                longest_stage = longest_stage.max(burst.trailing_zeros());
                let rng = &mut self.mac_rngs[i];
                if collision {
                    self.collided_attempts[i] += 1;
                    station.on_collision(&params, rng);
                } else {
                    let was_deterministic = station.is_deterministic();
                    let attempt = TxAttempt {
                        station: station.id,
                        n_packets: burst,
                    };
                    station.on_success(&attempt, &params, rng);
                    newly_deterministic = station.is_deterministic() && !was_deterministic;
                }
                debug_assert!(station.stage <= params.max_stage && station.retries < params.retry_limit);
                debug_assert!(station.backoff < params.window(station.stage));
            }

            if collision {
                collisions[longest_stage as usize] += 1;
            } else {
                successes[longest_stage as usize] += 1;
            }
            self.series.record(collision);
            self.slot_index += 1;
            for &i in &transmitters {
                let t = self.slot_index + u64::from(self.stations[i].backoff);
                wake[i] = t;
                calendar.insert(t, i);
            }

            if collision {
                self.certified_at = None;
                self.clear_since = self.slot_index;
            } else if newly_deterministic && self.oracle_applies && self.certified_at.is_none() {
                self.try_certify(Some(&wake));
            }
        }

        for (station, &t) in self.stations.iter_mut().zip(&wake) {
            station.backoff = (t - self.slot_index) as u32;
        }
        for (stage, (&ok, &bad)) in successes.iter().zip(&collisions).enumerate() {
            if ok > 0 {
                *self.tally.successes_by_burst.entry(1 << stage).or_default() += ok;
            }
            if bad > 0 {
                *self.tally.collisions_by_burst.entry(1 << stage).or_default() += bad;
            }
        }
    }

    /// Metrics accumulated since the world was created.
    pub fn metrics(&self) -> RunMetrics {
        RunMetrics {
            n_slots: self.slot_index,
            delivered: self.stations.iter().map(|s| s.delivered).collect(),
            dropped: self.stations.iter().map(|s| s.dropped).collect(),
            attempts: self.attempts.clone(),
            collided_attempts: self.collided_attempts.clone(),
            payload_bits: self.config.timing.payload_bits,
            elapsed_us: tally_airtime(&self.tally, &self.config.timing),
            tally: self.tally.clone(),
            collision_series: self.series.clone(),
            convergence_slot: self.convergence_slot(self.config.observation_window),
        }
    }
}
