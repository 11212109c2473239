//! Run statistics: throughput, fairness, collision history, confidence
//! intervals, and the analytical check for collision-free schedules.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::engine::SlotOutcome;
use crate::error::MetricsError;

/// Slot counts by outcome kind and burst size.
///
/// Success bursts are keyed by packet count; collisions by the packet count
/// of their longest participant, which is what sets their airtime.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotTally {
    pub empty: u64,
    pub successes_by_burst: BTreeMap<u32, u64>,
    pub collisions_by_burst: BTreeMap<u32, u64>,
}

impl SlotTally {
    pub fn record(&mut self, outcome: &SlotOutcome) {
        match outcome {
            SlotOutcome::Empty => self.empty += 1,
            SlotOutcome::Success(tx) => *self.successes_by_burst.entry(tx.n_packets).or_default() += 1,
            SlotOutcome::Collision(txs) => {
                let longest = txs.iter().map(|t| t.n_packets).max().unwrap_or(1);
                *self.collisions_by_burst.entry(longest).or_default() += 1;
            }
        }
    }

    pub fn successes(&self) -> u64 {
        self.successes_by_burst.values().sum()
    }

    pub fn collisions(&self) -> u64 {
        self.collisions_by_burst.values().sum()
    }

    pub fn total(&self) -> u64 {
        self.empty + self.successes() + self.collisions()
    }
}

/// Cumulative fraction of slots spent in collision, sampled every
/// `every` slots: the sample at slot `t` is `collisions in [0, t] / (t + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionSeries {
    every: u64,
    slots: u64,
    collisions: u64,
    next_sample: u64,
    samples: Vec<(u64, f64)>,
}

impl CollisionSeries {
    pub fn new(every: u64) -> Self {
        assert!(every > 0, "sampling interval must be positive");
        Self {
            every,
            slots: 0,
            collisions: 0,
            next_sample: every,
            samples: Vec::new(),
        }
    }

    pub fn every(&self) -> u64 {
        self.every
    }

    #[inline]
    pub fn record(&mut self, collision: bool) {
        self.collisions += u64::from(collision);
        self.slots += 1;
        if self.slots == self.next_sample {
            self.push_sample();
        }
    }

    /// `slots` consecutive collision-free slots.
    pub fn record_clear(&mut self, slots: u64) {
        let end = self.slots + slots;
        while self.next_sample <= end {
            self.slots = self.next_sample;
            self.push_sample();
        }
        self.slots = end;
    }

    fn push_sample(&mut self) {
        self.next_sample += self.every;
        self.samples
            .push((self.slots - 1, self.collisions as f64 / self.slots as f64));
    }

    pub fn samples(&self) -> &[(u64, f64)] {
        &self.samples
    }

    /// Fraction over every slot recorded so far, sampled or not.
    pub fn current(&self) -> f64 {
        if self.slots == 0 {
            0.0
        } else {
            self.collisions as f64 / self.slots as f64
        }
    }
}

/// Everything measured over one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub n_slots: u64,
    /// Packets delivered per station.
    pub delivered: Vec<u64>,
    /// Packets discarded at the retry limit, per station.
    pub dropped: Vec<u64>,
    /// Transmission attempts per station.
    pub attempts: Vec<u64>,
    /// Attempts that ended in a collision, per station.
    pub collided_attempts: Vec<u64>,
    pub payload_bits: u64,
    pub elapsed_us: f64,
    pub tally: SlotTally,
    pub collision_series: CollisionSeries,
    /// First slot of the collision-free regime, when it was certified.
    pub convergence_slot: Option<u64>,
}

impl RunMetrics {
    pub fn delivered_bits(&self) -> Vec<u64> {
        self.delivered.iter().map(|&p| p * self.payload_bits).collect()
    }

    /// Fraction of all attempts that collided.
    pub fn attempt_collision_probability(&self) -> Option<f64> {
        let attempts: u64 = self.attempts.iter().sum();
        (attempts > 0).then(|| self.collided_attempts.iter().sum::<u64>() as f64 / attempts as f64)
    }

    /// Fraction of slots in collision over the whole run.
    pub fn collision_fraction(&self) -> f64 {
        self.collision_series.current()
    }
}

/// Jain's fairness index `(sum x)^2 / (n * sum x^2)`.
pub fn jfi(allocation: &[f64]) -> Result<f64, MetricsError> {
    let sum: f64 = allocation.iter().sum();
    let sum_sq: f64 = allocation.iter().map(|x| x * x).sum();
    if allocation.is_empty() || sum_sq == 0.0 {
        return Err(MetricsError::DegenerateAllocation);
    }
    Ok(sum * sum / (allocation.len() as f64 * sum_sq))
}

/// Jain's index over delivered packet counts.
pub fn packet_jfi(metrics: &RunMetrics) -> Result<f64, MetricsError> {
    let counts: Vec<f64> = metrics.delivered.iter().map(|&c| c as f64).collect();
    jfi(&counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub per_station_bps: Vec<f64>,
    pub aggregate_bps: f64,
}

/// Delivered payload over elapsed airtime, in bits per second.
pub fn throughput(metrics: &RunMetrics) -> Result<Throughput, MetricsError> {
    if !(metrics.elapsed_us > 0.0) {
        return Err(MetricsError::ZeroElapsed);
    }
    let seconds = metrics.elapsed_us * 1e-6;
    let per_station_bps: Vec<f64> = metrics
        .delivered_bits()
        .into_iter()
        .map(|bits| bits as f64 / seconds)
        .collect();
    let aggregate_bps = metrics.delivered.iter().sum::<u64>() as f64 * metrics.payload_bits as f64 / seconds;
    Ok(Throughput {
        per_station_bps,
        aggregate_bps,
    })
}

/// Sampled cumulative collision fraction of a run.
pub fn collision_fraction_series(metrics: &RunMetrics) -> &[(u64, f64)] {
    metrics.collision_series.samples()
}

/// Transmission schedule of one station at a given instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    /// Whether the station's backoff came from the deterministic rule.
    pub deterministic: bool,
    /// Slots between consecutive transmissions.
    pub period: u64,
    /// Absolute index of the next transmission slot.
    pub phase: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleSnapshot {
    pub entries: Vec<ScheduleEntry>,
}

impl ScheduleSnapshot {
    pub fn new(entries: Vec<ScheduleEntry>) -> Self {
        Self { entries }
    }

    /// All-deterministic snapshot from `(period, phase)` pairs.
    pub fn periodic(schedule: &[(u64, u64)]) -> Self {
        Self::new(
            schedule
                .iter()
                .map(|&(period, phase)| ScheduleEntry {
                    deterministic: true,
                    period,
                    phase,
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleVerdict {
    /// No two stations ever transmit in the same slot.
    CollisionFree,
    /// Some pair of stations will eventually collide.
    Conflict,
    /// Some station is not on a deterministic schedule.
    NotApplicable,
}

/// Decide whether a set of periodic transmitters is collision-free.
///
/// Stations `i` and `j` transmit in slots `o_i + a p_i` and `o_j + b p_j`;
/// these progressions meet iff `o_i ≡ o_j (mod gcd(p_i, p_j))`. With
/// power-of-two periods the gcd is the smaller period.
pub fn schedule_oracle(snapshot: &ScheduleSnapshot) -> ScheduleVerdict {
    let entries = &snapshot.entries;
    if entries.iter().any(|e| !e.deterministic || e.period == 0) {
        return ScheduleVerdict::NotApplicable;
    }
    for (i, a) in entries.iter().enumerate() {
        for b in &entries[i + 1..] {
            let g = gcd(a.period, b.period);
            if a.phase % g == b.phase % g {
                return ScheduleVerdict::Conflict;
            }
        }
    }
    ScheduleVerdict::CollisionFree
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub mean: f64,
    pub half_width: f64,
}

impl ConfidenceInterval {
    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }
}

/// Two-sided Student-t interval for the mean: `mean ± t(n-1) * s / sqrt(n)`
/// with `s` the sample standard deviation.
pub fn confidence_interval(samples: &[f64], level: f64) -> Result<ConfidenceInterval, MetricsError> {
    let n = samples.len();
    if n < 2 {
        return Err(MetricsError::TooFewSamples(n));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(MetricsError::ConfidenceLevel);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let stderr = (var / n as f64).sqrt();
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("degrees of freedom are positive")
        .inverse_cdf(1.0 - (1.0 - level) / 2.0);
    Ok(ConfidenceInterval {
        mean,
        half_width: t * stderr,
    })
}
