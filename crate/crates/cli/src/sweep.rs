//! Replicated runs and sweeps over the station count.
//!
//! Replication `r` of a point runs with seed `master ^ r`. The same seeds
//! are reused at every point, so neighbouring station counts and variants
//! are compared under common random numbers. Replications may execute in
//! any order on the rayon pool; results are always reduced in replication
//! order, so the output does not depend on scheduling.

use ecasim_core::rng::replication_seed;
use ecasim_core::{confidence_interval, packet_jfi, throughput, ConfigError, EngineError, RunMetrics, World};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::scenario::{Point, Scenario};

/// Confidence level of every interval in a result row.
pub const CI_LEVEL: f64 = 0.95;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("{point}, replication {replication}: {source}")]
    Config {
        point: String,
        replication: u64,
        #[source]
        source: ConfigError,
    },
    #[error("{point}, replication {replication}: {source}")]
    Engine {
        point: String,
        replication: u64,
        #[source]
        source: EngineError,
    },
    #[error("scenario has no sweep range")]
    NoRange,
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Serial,
}

/// What one replication contributes to its row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSummary {
    pub seed: u64,
    pub throughput_bps: f64,
    pub per_station_bps: Vec<f64>,
    /// `None` when no packet was delivered.
    pub jfi: Option<f64>,
    pub collision_fraction: f64,
    pub attempt_collision_prob: Option<f64>,
    pub convergence_slot: Option<u64>,
}

impl ReplicationSummary {
    pub fn converged(&self) -> bool {
        self.convergence_slot.is_some()
    }
}

/// One line of the results table.
///
/// Field order is the column order of the CSV output and is part of the
/// output format.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: String,
    pub n: usize,
    pub variant_mix: String,
    pub replications: u64,
    pub slots: u64,
    pub throughput_mbps_mean: f64,
    /// Half-width of the 95% interval; empty with a single replication.
    pub throughput_mbps_ci95: Option<f64>,
    pub jfi_mean: Option<f64>,
    pub jfi_ci95: Option<f64>,
    pub collision_fraction_mean: f64,
    pub attempt_collision_prob_mean: Option<f64>,
    /// Fraction of replications that reached collision-free operation.
    pub convergence_rate: f64,
    pub mean_slots_to_convergence: Option<f64>,
    pub median_slots_to_convergence: Option<f64>,
}

/// A finished point: its row, the per-replication data behind it and the
/// cumulative collision fraction averaged over replications.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub point: Point,
    pub row: ResultRow,
    pub replications: Vec<ReplicationSummary>,
    pub mean_series: Vec<(u64, f64)>,
}

/// Receives points as they finish, in sweep order.
pub trait SweepSink {
    fn point(&mut self, result: &PointResult) -> Result<(), SweepError>;

    fn finish(&mut self, _rows: &[ResultRow]) -> Result<(), SweepError> {
        Ok(())
    }
}

/// Keeps nothing.
pub struct NullSink;

impl SweepSink for NullSink {
    fn point(&mut self, _result: &PointResult) -> Result<(), SweepError> {
        Ok(())
    }
}

/// Build the world of one replication, with initial backoffs applied.
pub fn build_world(scenario: &Scenario, point: &Point, replication: u64) -> Result<World, SweepError> {
    let seed = replication_seed(scenario.seed, replication);
    let mut world = World::new(scenario.world_config(), &point.station_specs(scenario.traffic), seed).map_err(|source| {
        SweepError::Config {
            point: point.label(),
            replication,
            source,
        }
    })?;
    if let Some(backoffs) = &scenario.initial_backoffs {
        for (station, &b) in world.stations_mut().iter_mut().zip(backoffs) {
            station.backoff = b;
        }
    }
    Ok(world)
}

fn run_replication(scenario: &Scenario, point: &Point, replication: u64) -> Result<(ReplicationSummary, RunMetrics), SweepError> {
    let mut world = build_world(scenario, point, replication)?;
    let metrics = world.run(scenario.slots).map_err(|source| SweepError::Engine {
        point: point.label(),
        replication,
        source,
    })?;
    // one slot always has positive airtime, so the elapsed time is never zero
    let tput = throughput(&metrics).expect("a run of at least one slot has positive airtime");
    let summary = ReplicationSummary {
        seed: replication_seed(scenario.seed, replication),
        throughput_bps: tput.aggregate_bps,
        per_station_bps: tput.per_station_bps,
        jfi: packet_jfi(&metrics).ok(),
        collision_fraction: metrics.collision_fraction(),
        attempt_collision_prob: metrics.attempt_collision_probability(),
        convergence_slot: metrics.convergence_slot,
    };
    Ok((summary, metrics))
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some((sorted[n / 2 - 1] + sorted[n / 2]) / 2.0),
    }
}

fn half_width(xs: &[f64]) -> Option<f64> {
    confidence_interval(xs, CI_LEVEL).ok().map(|ci| ci.half_width)
}

/// Reduce replications, in index order, into a row.
pub fn summarize(scenario: &Scenario, point: &Point, reps: &[ReplicationSummary]) -> ResultRow {
    let mbps: Vec<f64> = reps.iter().map(|r| r.throughput_bps / 1e6).collect();
    let jfis: Vec<f64> = reps.iter().filter_map(|r| r.jfi).collect();
    let fractions: Vec<f64> = reps.iter().map(|r| r.collision_fraction).collect();
    let probs: Vec<f64> = reps.iter().filter_map(|r| r.attempt_collision_prob).collect();
    let mut conv: Vec<f64> = reps.iter().filter_map(|r| r.convergence_slot).map(|s| s as f64).collect();
    conv.sort_by(f64::total_cmp);
    ResultRow {
        scenario: scenario.name.clone(),
        n: point.n(),
        variant_mix: point.label(),
        replications: reps.len() as u64,
        slots: scenario.slots,
        throughput_mbps_mean: mean(&mbps).unwrap_or(0.0),
        throughput_mbps_ci95: half_width(&mbps),
        jfi_mean: mean(&jfis),
        jfi_ci95: half_width(&jfis),
        collision_fraction_mean: mean(&fractions).unwrap_or(0.0),
        attempt_collision_prob_mean: mean(&probs),
        convergence_rate: conv.len() as f64 / reps.len().max(1) as f64,
        mean_slots_to_convergence: mean(&conv),
        median_slots_to_convergence: median(&conv),
    }
}

/// Accumulates collision-fraction samples across replications.
struct SeriesMean {
    sums: Vec<(u64, f64)>,
    count: usize,
}

impl SeriesMean {
    fn new() -> Self {
        Self { sums: Vec::new(), count: 0 }
    }

    fn add(&mut self, samples: &[(u64, f64)]) {
        if self.count == 0 {
            self.sums = samples.to_vec();
        } else {
            for (acc, &(slot, f)) in self.sums.iter_mut().zip(samples) {
                debug_assert_eq!(acc.0, slot);
                acc.1 += f;
            }
        }
        self.count += 1;
    }

    fn finish(self) -> Vec<(u64, f64)> {
        let n = self.count.max(1) as f64;
        self.sums.into_iter().map(|(slot, sum)| (slot, sum / n)).collect()
    }
}

/// Run every replication of one point.
pub fn run_point(scenario: &Scenario, point: &Point, execution: Execution) -> Result<PointResult, SweepError> {
    let job = |rep: u64| {
        run_replication(scenario, point, rep).map(|(summary, metrics)| {
            let series = metrics.collision_series.samples().to_vec();
            (summary, series)
        })
    };
    let outcomes: Vec<(ReplicationSummary, Vec<(u64, f64)>)> = match execution {
        Execution::Serial => (0..scenario.replications).map(job).collect::<Result<_, _>>()?,
        Execution::Parallel => (0..scenario.replications)
            .into_par_iter()
            .map(job)
            .collect::<Result<_, _>>()?,
    };
    let mut series = SeriesMean::new();
    let mut replications = Vec::with_capacity(outcomes.len());
    for (summary, samples) in outcomes {
        series.add(&samples);
        replications.push(summary);
    }
    Ok(PointResult {
        point: point.clone(),
        row: summarize(scenario, point, &replications),
        replications,
        mean_series: series.finish(),
    })
}

fn run_points(scenario: &Scenario, points: &[Point], execution: Execution, sink: &mut dyn SweepSink) -> Result<Vec<PointResult>, SweepError> {
    let mut results = Vec::with_capacity(points.len());
    for point in points {
        let result = run_point(scenario, point, execution)?;
        sink.point(&result)?;
        results.push(result);
    }
    let rows: Vec<ResultRow> = results.iter().map(|r| r.row.clone()).collect();
    sink.finish(&rows)?;
    Ok(results)
}

/// Every point of the scenario's sweep range.
pub fn sweep(scenario: &Scenario, execution: Execution, sink: &mut dyn SweepSink) -> Result<Vec<PointResult>, SweepError> {
    if scenario.sweep.is_none() {
        return Err(SweepError::NoRange);
    }
    run_points(scenario, &scenario.sweep_points(), execution, sink)
}

/// The scenario's fixed population(s), ignoring any sweep range.
pub fn run(scenario: &Scenario, execution: Execution, sink: &mut dyn SweepSink) -> Result<Vec<PointResult>, SweepError> {
    run_points(scenario, &scenario.single_points(), execution, sink)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Population, SweepRange};
    use ecasim_core::ProtocolVariant;

    fn small(variant: ProtocolVariant, n: usize) -> Scenario {
        let mut s = Scenario::uniform("t", variant, n);
        s.slots = 20_000;
        s.replications = 4;
        s.seed = 11;
        s
    }

    #[test]
    fn median_and_mean() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0]), Some(3.0));
        assert_eq!(median(&[1.0, 2.0, 10.0]), Some(2.0));
        assert_eq!(median(&[1.0, 2.0, 4.0, 10.0]), Some(3.0));
        assert_eq!(mean(&[1.0, 2.0]), Some(1.5));
        assert_eq!(mean(&[]), None);
    }

    #[test]
    fn serial_matches_parallel() {
        let s = small(ProtocolVariant::ECA_HYSTERESIS, 8);
        let point = &s.single_points()[0];
        let a = run_point(&s, point, Execution::Serial).unwrap();
        let b = run_point(&s, point, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn replications_use_derived_seeds() {
        let s = small(ProtocolVariant::CSMA_CA, 5);
        let r = run_point(&s, &s.single_points()[0], Execution::Serial).unwrap();
        let seeds: Vec<u64> = r.replications.iter().map(|x| x.seed).collect();
        assert_eq!(seeds, vec![11, 10, 9, 8]);
        // replications differ from each other
        assert_ne!(r.replications[0].throughput_bps, r.replications[1].throughput_bps);
    }

    #[test]
    fn single_replication_has_no_interval() {
        let mut s = small(ProtocolVariant::ECA, 4);
        s.replications = 1;
        let r = run_point(&s, &s.single_points()[0], Execution::Serial).unwrap();
        assert_eq!(r.row.throughput_mbps_ci95, None);
        assert_eq!(r.row.jfi_ci95, None);
        assert!(r.row.jfi_mean.is_some());
    }

    #[test]
    fn row_invariants() {
        let s = small(ProtocolVariant::ECA_FAIR_SHARE, 6);
        let r = run_point(&s, &s.single_points()[0], Execution::Serial).unwrap();
        let row = &r.row;
        assert!(row.throughput_mbps_ci95.unwrap() >= 0.0);
        assert!(row.jfi_ci95.unwrap() >= 0.0);
        assert!((0.0..=1.0).contains(&row.convergence_rate));
        assert_eq!(row.n, 6);
        assert_eq!(row.variant_mix, "eca-hyst-fs:6");
        assert_eq!(r.mean_series.len() as u64, s.slots / s.sample_every);
        let last = r.mean_series.last().unwrap().1;
        assert!((last - row.collision_fraction_mean).abs() < 1e-12);
    }

    #[test]
    fn sweep_needs_range() {
        let s = small(ProtocolVariant::ECA, 4);
        assert!(matches!(sweep(&s, Execution::Serial, &mut NullSink), Err(SweepError::NoRange)));
    }

    #[test]
    fn sweep_emits_one_row_per_point() {
        let mut s = Scenario::new(
            "sw",
            Population::Uniform {
                variants: vec![ProtocolVariant::CSMA_CA, ProtocolVariant::ECA],
                n: None,
            },
        );
        s.slots = 2_000;
        s.replications = 2;
        s.sweep = Some(SweepRange { n_min: 2, n_max: 6, n_step: 2 });
        let results = sweep(&s, Execution::Parallel, &mut NullSink).unwrap();
        let labels: Vec<String> = results.iter().map(|r| r.row.variant_mix.clone()).collect();
        assert_eq!(labels, ["csma-ca:2", "csma-ca:4", "csma-ca:6", "eca:2", "eca:4", "eca:6"]);
    }

    #[test]
    fn initial_backoffs_are_applied() {
        let mut s = small(ProtocolVariant::ECA, 3);
        s.initial_backoffs = Some(vec![0, 0, 5]);
        let w = build_world(&s, &s.single_points()[0], 0).unwrap();
        let b: Vec<u32> = w.stations().iter().map(|st| st.backoff).collect();
        assert_eq!(b, vec![0, 0, 5]);
    }
}
