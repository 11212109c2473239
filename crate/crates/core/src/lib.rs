//! Slot-level simulation of CSMA/CA and CSMA/ECA medium access in a single
//! WLAN collision domain.
//!
//! * [`mac`]: the per-station contention state machine for all four protocol variants.
//! * [`engine`]: the slot loop and ideal-channel arbitration.
//! * [`timing`]: airtime of each slot outcome.
//! * [`metrics`]: throughput, fairness, collision history, confidence intervals
//!   and the collision-free schedule oracle.

mod calendar;
pub mod engine;
pub mod error;
pub mod mac;
pub mod metrics;
pub mod rng;
pub mod timing;

pub use engine::{
    ConvergenceReport, NoObserver, QueueStats, SlotObserver, SlotOutcome, StationSpec, TrafficModel, World,
    WorldConfig,
};
pub use error::{ConfigError, EngineError, MetricsError};
pub use mac::{MacParams, ProtocolVariant, StationId, StationState, TxAttempt};
pub use metrics::{
    collision_fraction_series, confidence_interval, jfi, packet_jfi, schedule_oracle, throughput,
    CollisionSeries, ConfidenceInterval, RunMetrics, ScheduleEntry, ScheduleSnapshot, ScheduleVerdict, SlotTally,
    Throughput,
};
pub use timing::{elapsed_time, slot_duration, TimingParams};
