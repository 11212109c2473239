//! Airtime of slot outcomes.
//!
//! An empty slot lasts `empty_slot_us`. A busy slot carrying a burst of
//! `k` aggregated packets lasts
//!
//! ```text
//! phy_header + k * (L + per_mpdu_overhead) / rate + SIFS + ACK + DIFS
//! ```
//!
//! A collision occupies the channel for the longest colliding burst, with
//! the ACK replaced by the ACK timeout the transmitters wait out.

use serde::{Deserialize, Serialize};

use crate::engine::SlotOutcome;
use crate::error::ConfigError;
use crate::metrics::SlotTally;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingParams {
    pub empty_slot_us: f64,
    pub sifs_us: f64,
    pub difs_us: f64,
    pub phy_header_us: f64,
    pub ack_us: f64,
    /// Wait before a transmitter concludes its burst collided. Defaults to `ack_us`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ack_timeout_us: Option<f64>,
    /// MAC header, A-MPDU delimiter and FCS carried with each packet.
    pub per_mpdu_overhead_bits: u64,
    pub payload_bits: u64,
    pub data_rate_bps: u64,
}

impl Default for TimingParams {
    fn default() -> Self {
        Self {
            empty_slot_us: 9.0,
            sifs_us: 16.0,
            difs_us: 34.0,
            phy_header_us: 40.0,
            ack_us: 44.0,
            ack_timeout_us: None,
            per_mpdu_overhead_bits: 288,
            payload_bits: 12_000,
            data_rate_bps: 65_000_000,
        }
    }
}

impl TimingParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let durations = [
            ("empty_slot_us", self.empty_slot_us),
            ("sifs_us", self.sifs_us),
            ("difs_us", self.difs_us),
            ("phy_header_us", self.phy_header_us),
            ("ack_us", self.ack_us),
            ("ack_timeout_us", self.ack_timeout()),
        ];
        for (name, value) in durations {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConfigError::Timing(name));
            }
        }
        if self.payload_bits == 0 {
            return Err(ConfigError::Timing("payload_bits"));
        }
        if self.data_rate_bps == 0 {
            return Err(ConfigError::Timing("data_rate_bps"));
        }
        Ok(())
    }

    pub fn ack_timeout(&self) -> f64 {
        self.ack_timeout_us.unwrap_or(self.ack_us)
    }

    /// On-air time of one packet with its per-MPDU overhead.
    pub fn packet_airtime_us(&self) -> f64 {
        (self.payload_bits + self.per_mpdu_overhead_bits) as f64 * 1e6 / self.data_rate_bps as f64
    }

    fn burst_airtime_us(&self, n_packets: u32) -> f64 {
        self.phy_header_us + f64::from(n_packets) * self.packet_airtime_us()
    }

    pub fn success_us(&self, n_packets: u32) -> f64 {
        self.burst_airtime_us(n_packets) + self.sifs_us + self.ack_us + self.difs_us
    }

    /// Collision whose longest participant burst carries `longest_burst` packets.
    pub fn collision_us(&self, longest_burst: u32) -> f64 {
        self.burst_airtime_us(longest_burst) + self.sifs_us + self.ack_timeout() + self.difs_us
    }

    /// Upper bound on any throughput: the fraction of raw rate spent on payload.
    pub fn goodput_ceiling_bps(&self) -> f64 {
        self.data_rate_bps as f64 * self.payload_bits as f64
            / (self.payload_bits + self.per_mpdu_overhead_bits) as f64
    }
}

/// Duration of one slot, in microseconds.
pub fn slot_duration(outcome: &SlotOutcome, params: &TimingParams) -> f64 {
    match outcome {
        SlotOutcome::Empty => params.empty_slot_us,
        SlotOutcome::Success(tx) => params.success_us(tx.n_packets),
        SlotOutcome::Collision(txs) => {
            params.collision_us(txs.iter().map(|t| t.n_packets).max().unwrap_or(1))
        }
    }
}

/// Total duration of a sequence of slots, in microseconds.
///
/// Outcomes are tallied by kind and burst size in integer counters first,
/// so the result carries only a handful of rounding steps regardless of
/// sequence length.
pub fn elapsed_time<'a, I>(outcomes: I, params: &TimingParams) -> f64
where
    I: IntoIterator<Item = &'a SlotOutcome>,
{
    let mut tally = SlotTally::default();
    for outcome in outcomes {
        tally.record(outcome);
    }
    tally_airtime(&tally, params)
}

/// Duration of a tallied run, in microseconds.
pub fn tally_airtime(tally: &SlotTally, params: &TimingParams) -> f64 {
    let empty = tally.empty as f64 * params.empty_slot_us;
    let success: f64 = tally
        .successes_by_burst
        .iter()
        .map(|(&k, &n)| n as f64 * params.success_us(k))
        .sum();
    let collision: f64 = tally
        .collisions_by_burst
        .iter()
        .map(|(&k, &n)| n as f64 * params.collision_us(k))
        .sum();
    empty + success + collision
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mac::{StationId, TxAttempt};
    use proptest::prelude::*;

    fn success(k: u32) -> SlotOutcome {
        SlotOutcome::Success(TxAttempt { station: StationId(0), n_packets: k })
    }

    fn collision(ks: &[u32]) -> SlotOutcome {
        SlotOutcome::Collision(
            ks.iter()
                .enumerate()
                .map(|(i, &k)| TxAttempt { station: StationId(i), n_packets: k })
                .collect(),
        )
    }

    #[test]
    fn empty_slot() {
        assert_eq!(slot_duration(&SlotOutcome::Empty, &TimingParams::default()), 9.0);
    }

    #[test]
    fn single_packet_success() {
        // 40 + 12288 bits / 65 Mb/s + 16 + 44 + 34
        let expected = 134.0 + 12288.0 / 65.0;
        let got = slot_duration(&success(1), &TimingParams::default());
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 323.05).abs() < 0.01);
    }

    #[test]
    fn burst_increment_is_one_packet() {
        let p = TimingParams::default();
        let d = slot_duration(&success(2), &p) - slot_duration(&success(1), &p);
        assert!((d - 12288.0 / 65.0).abs() < 1e-12);
    }

    #[test]
    fn collision_uses_longest_burst() {
        let p = TimingParams::default();
        assert_eq!(slot_duration(&collision(&[1, 4, 2]), &p), p.collision_us(4));
        // with the default timeout a collision is as long as the success of its longest burst
        assert_eq!(p.collision_us(4), p.success_us(4));
        let q = TimingParams { ack_timeout_us: Some(60.0), ..p };
        assert_eq!(q.collision_us(4) - q.success_us(4), 16.0);
    }

    #[test]
    fn elapsed_simple_sequences() {
        let p = TimingParams::default();
        let empties = vec![SlotOutcome::Empty; 100];
        assert_eq!(elapsed_time(&empties, &p), 900.0);
        assert_eq!(elapsed_time(&[], &p), 0.0);
    }

    #[test]
    fn validation() {
        assert!(TimingParams::default().validate().is_ok());
        let p = TimingParams { sifs_us: 0.0, ..Default::default() };
        assert_eq!(p.validate(), Err(ConfigError::Timing("sifs_us")));
        let p = TimingParams { data_rate_bps: 0, ..Default::default() };
        assert_eq!(p.validate(), Err(ConfigError::Timing("data_rate_bps")));
        let p = TimingParams { ack_timeout_us: Some(-1.0), ..Default::default() };
        assert_eq!(p.validate(), Err(ConfigError::Timing("ack_timeout_us")));
    }

    fn outcome_strategy() -> impl Strategy<Value = SlotOutcome> {
        prop_oneof![
            Just(SlotOutcome::Empty),
            (0u32..6).prop_map(|s| success(1 << s)),
            prop::collection::vec(0u32..6, 2..5)
                .prop_map(|v| collision(&v.iter().map(|s| 1 << s).collect::<Vec<_>>())),
        ]
    }

    proptest! {
        #[test]
        fn elapsed_is_sum_of_slots(seq in prop::collection::vec(outcome_strategy(), 0..300)) {
            let p = TimingParams::default();
            let direct: f64 = seq.iter().map(|o| slot_duration(o, &p)).sum();
            let total = elapsed_time(&seq, &p);
            prop_assert!((total - direct).abs() <= 1e-9 * direct.max(1.0));
        }

        #[test]
        fn airtime_monotone_in_burst(k in 1u32..512) {
            let p = TimingParams::default();
            prop_assert!(p.success_us(k + 1) > p.success_us(k));
            prop_assert!(p.collision_us(k + 1) > p.collision_us(k));
        }
    }
}
