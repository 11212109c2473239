//! Scenario files.
//!
//! A scenario is a TOML document of flat keys plus a few optional tables.
//! Every key except the population is optional; omitted keys take the
//! defaults shown here.
//!
//! ```toml
//! name = "fig2"              # label copied into result rows
//!
//! # population: exactly one of the three forms
//! variant = "eca-hyst-fs"    # one variant ...
//! # variants = ["csma-ca", "eca"]   # ... or several, simulated separately
//! n = 12                     # stations per point (alias `N`); not needed with [sweep]
//! # [stations]               # ... or a mixed cell, station counts per variant
//! # csma-ca = 5
//! # eca-hyst-fs = 5
//!
//! slots = 1000000            # slots per replication
//! seed = 1                   # master seed
//! replications = 50
//! sample_every = 100         # collision-fraction sampling interval
//! observation_window = 10000 # collision-free slots that certify convergence
//!                            # when the schedule oracle does not apply
//! initial_backoffs = [3, 7, 12, 12]  # optional, overrides the first draws
//!
//! [sweep]                    # optional range over the station count
//! n_min = 2
//! n_max = 50
//! n_step = 1
//!
//! [mac]
//! cw_min = 16
//! max_stage = 5
//! retry_limit = 7
//!
//! [timing]
//! empty_slot_us = 9.0
//! sifs_us = 16.0
//! difs_us = 34.0
//! phy_header_us = 40.0
//! ack_us = 44.0
//! # ack_timeout_us = 44.0   # defaults to ack_us
//! per_mpdu_overhead_bits = 288
//! payload_bits = 12000
//! data_rate_bps = 65000000
//!
//! [traffic]
//! kind = "saturated"         # or "bernoulli" with arrival_prob and capacity
//! ```
//!
//! Variant names: `csma-ca` (alias `legacy`), `eca`, `eca-hyst`, `eca-hyst-fs`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use ecasim_core::{MacParams, ProtocolVariant, StationSpec, TimingParams, TrafficModel, WorldConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Syntax(String),
    #[error("invalid `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
}

fn invalid(field: &'static str, message: impl fmt::Display) -> ScenarioError {
    ScenarioError::Invalid {
        field,
        message: message.to_string(),
    }
}

/// Inclusive range of station counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRange {
    pub n_min: usize,
    pub n_max: usize,
    #[serde(default = "one")]
    pub n_step: usize,
}

fn one() -> usize {
    1
}

impl SweepRange {
    pub fn counts(&self) -> impl Iterator<Item = usize> {
        (self.n_min..=self.n_max).step_by(self.n_step)
    }
}

/// Who contends in the cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Population {
    /// Each listed variant is simulated on its own, with `n` stations
    /// (or the sweep range).
    Uniform {
        variants: Vec<ProtocolVariant>,
        n: Option<usize>,
    },
    /// One cell holding several variants; counts per variant, legacy first.
    Mixed(Vec<(ProtocolVariant, usize)>),
}

/// A station population simulated as one result row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Point {
    pub mix: Vec<(ProtocolVariant, usize)>,
}

impl Point {
    pub fn n(&self) -> usize {
        self.mix.iter().map(|&(_, c)| c).sum()
    }

    /// `variant:count` terms joined by `+`, e.g. `csma-ca:5+eca-hyst-fs:5`.
    pub fn label(&self) -> String {
        self.mix
            .iter()
            .map(|(v, c)| format!("{v}:{c}"))
            .collect::<Vec<_>>()
            .join("+")
    }

    pub fn station_specs(&self, traffic: TrafficModel) -> Vec<StationSpec> {
        self.mix
            .iter()
            .flat_map(|&(variant, count)| std::iter::repeat(StationSpec { variant, traffic }).take(count))
            .collect()
    }
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub population: Population,
    pub mac: MacParams,
    pub timing: TimingParams,
    pub traffic: TrafficModel,
    pub slots: u64,
    pub seed: u64,
    pub replications: u64,
    pub sample_every: u64,
    pub observation_window: u64,
    pub sweep: Option<SweepRange>,
    pub initial_backoffs: Option<Vec<u32>>,
}

/// On-disk form. Every field is optional so defaults can be filled in and
/// the written form of a [`Scenario`] is fully explicit.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    variant: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    variants: Option<Vec<String>>,
    #[serde(alias = "N", skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    slots: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    replications: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sample_every: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    observation_window: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_backoffs: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stations: Option<BTreeMap<String, usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepRange>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mac: Option<MacParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timing: Option<TimingParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    traffic: Option<TrafficModel>,
}

pub const DEFAULT_SLOTS: u64 = 1_000_000;
pub const DEFAULT_REPLICATIONS: u64 = 50;
pub const DEFAULT_SEED: u64 = 1;

impl Scenario {
    /// Scenario with default parameters for a population.
    pub fn new(name: impl Into<String>, population: Population) -> Self {
        let world = WorldConfig::default();
        Self {
            name: name.into(),
            population,
            mac: world.mac,
            timing: world.timing,
            traffic: TrafficModel::Saturated,
            slots: DEFAULT_SLOTS,
            seed: DEFAULT_SEED,
            replications: DEFAULT_REPLICATIONS,
            sample_every: world.sample_every,
            observation_window: world.observation_window,
            sweep: None,
            initial_backoffs: None,
        }
    }

    /// `n` stations of one variant.
    pub fn uniform(name: impl Into<String>, variant: ProtocolVariant, n: usize) -> Self {
        Self::new(
            name,
            Population::Uniform {
                variants: vec![variant],
                n: Some(n),
            },
        )
    }

    pub fn world_config(&self) -> WorldConfig {
        WorldConfig {
            mac: self.mac,
            timing: self.timing,
            sample_every: self.sample_every,
            observation_window: self.observation_window,
        }
    }

    /// Check every invariant that does not depend on the command run.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.mac.validate().map_err(|e| invalid("mac", e))?;
        self.timing.validate().map_err(|e| invalid("timing", e))?;
        self.traffic.validate().map_err(|e| invalid("traffic", e))?;
        if self.slots == 0 {
            return Err(invalid("slots", "must be at least 1"));
        }
        if self.replications == 0 {
            return Err(invalid("replications", "must be at least 1"));
        }
        if self.sample_every == 0 {
            return Err(invalid("sample_every", "must be at least 1"));
        }
        if self.observation_window == 0 {
            return Err(invalid("observation_window", "must be at least 1"));
        }
        match &self.population {
            Population::Uniform { variants, n } => {
                if variants.is_empty() {
                    return Err(invalid("variants", "at least one variant is required"));
                }
                if *n == Some(0) {
                    return Err(invalid("n", "total stations must be at least 1"));
                }
                if n.is_none() && self.sweep.is_none() {
                    return Err(invalid("n", "station count missing (give `n` or a [sweep] range)"));
                }
            }
            Population::Mixed(mix) => {
                if mix.iter().map(|&(_, c)| c).sum::<usize>() == 0 {
                    return Err(invalid("stations", "total stations must be at least 1"));
                }
                if self.sweep.is_some() {
                    return Err(invalid("sweep", "a sweep needs `variant` or `variants`, not a [stations] mix"));
                }
            }
        }
        if let Some(range) = &self.sweep {
            if range.n_min == 0 || range.n_step == 0 || range.n_max < range.n_min {
                return Err(invalid("sweep", "range must satisfy 1 <= n_min <= n_max and n_step >= 1"));
            }
        }
        if let Some(backoffs) = &self.initial_backoffs {
            if let Some(&b) = backoffs.iter().find(|&&b| b >= self.mac.cw_min) {
                return Err(invalid("initial_backoffs", format!("{b} is outside [0, cw_min - 1]")));
            }
            if self.sweep.is_some() {
                return Err(invalid("initial_backoffs", "not supported together with [sweep]"));
            }
            let counts: Vec<usize> = self.single_points().iter().map(Point::n).collect();
            if counts.iter().any(|&n| n != backoffs.len()) {
                return Err(invalid(
                    "initial_backoffs",
                    format!("{} values given for {:?} stations", backoffs.len(), counts),
                ));
            }
        }
        Ok(())
    }

    /// Populations simulated by `run`, ignoring any sweep range.
    pub fn single_points(&self) -> Vec<Point> {
        match &self.population {
            Population::Uniform { variants, n } => variants
                .iter()
                .filter_map(|&v| n.map(|n| Point { mix: vec![(v, n)] }))
                .collect(),
            Population::Mixed(mix) => vec![Point { mix: mix.clone() }],
        }
    }

    /// Populations simulated by `sweep`: variant-major, then ascending N.
    pub fn sweep_points(&self) -> Vec<Point> {
        match (&self.population, &self.sweep) {
            (Population::Uniform { variants, .. }, Some(range)) => variants
                .iter()
                .flat_map(|&v| range.counts().map(move |n| Point { mix: vec![(v, n)] }))
                .collect(),
            _ => self.single_points(),
        }
    }

    /// Serialize to the scenario file format with every field explicit.
    pub fn to_toml(&self) -> String {
        let mut file = ScenarioFile {
            name: Some(self.name.clone()),
            slots: Some(self.slots),
            seed: Some(self.seed),
            replications: Some(self.replications),
            sample_every: Some(self.sample_every),
            observation_window: Some(self.observation_window),
            initial_backoffs: self.initial_backoffs.clone(),
            sweep: self.sweep,
            mac: Some(self.mac),
            timing: Some(self.timing),
            traffic: Some(self.traffic),
            ..Default::default()
        };
        match &self.population {
            Population::Uniform { variants, n } => {
                file.variants = Some(variants.iter().map(|v| v.name().to_string()).collect());
                file.n = *n;
            }
            Population::Mixed(mix) => {
                file.stations = Some(mix.iter().map(|(v, c)| (v.name().to_string(), *c)).collect());
            }
        }
        toml::to_string(&file).expect("scenario fields are representable in TOML")
    }
}

/// Command-line replacements for scenario keys.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replications: Option<u64>,
    pub slots: Option<u64>,
    pub n_min: Option<usize>,
    pub n_max: Option<usize>,
    pub n_step: Option<usize>,
}

impl Overrides {
    /// Apply to `scenario` and validate the result.
    pub fn apply(&self, scenario: &mut Scenario) -> Result<(), ScenarioError> {
        if let Some(seed) = self.seed {
            scenario.seed = seed;
        }
        if let Some(r) = self.replications {
            scenario.replications = r;
        }
        if let Some(slots) = self.slots {
            scenario.slots = slots;
        }
        if self.n_min.is_some() || self.n_max.is_some() || self.n_step.is_some() {
            let current = scenario.sweep;
            let n_min = self.n_min.or(current.map(|r| r.n_min));
            let n_max = self.n_max.or(current.map(|r| r.n_max));
            match (n_min, n_max) {
                (Some(n_min), Some(n_max)) => {
                    scenario.sweep = Some(SweepRange {
                        n_min,
                        n_max,
                        n_step: self.n_step.or(current.map(|r| r.n_step)).unwrap_or(1),
                    });
                }
                _ => return Err(invalid("sweep", "both ends of the station range are needed")),
            }
        }
        scenario.validate()
    }
}

fn parse_variant(field: &'static str, name: &str) -> Result<ProtocolVariant, ScenarioError> {
    name.parse().map_err(|e| invalid(field, e))
}

/// Parse and validate scenario text.
pub fn parse_scenario_str(text: &str) -> Result<Scenario, ScenarioError> {
    parse_with(text, &Overrides::default())
}

fn parse_with(text: &str, overrides: &Overrides) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Syntax(e.message().to_string()))?;

    let population = match (&file.variant, &file.variants, &file.stations) {
        (Some(v), None, None) => Population::Uniform {
            variants: vec![parse_variant("variant", v)?],
            n: file.n,
        },
        (None, Some(vs), None) => Population::Uniform {
            variants: vs
                .iter()
                .map(|v| parse_variant("variants", v))
                .collect::<Result<_, _>>()?,
            n: file.n,
        },
        (None, None, Some(mix)) => {
            if file.n.is_some() {
                return Err(invalid("n", "not allowed with a [stations] mix"));
            }
            let mut parsed: Vec<(ProtocolVariant, usize)> = mix
                .iter()
                .map(|(name, &count)| Ok((parse_variant("stations", name)?, count)))
                .collect::<Result<_, ScenarioError>>()?;
            parsed.sort();
            if parsed.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(invalid("stations", "a variant is listed twice under different names"));
            }
            Population::Mixed(parsed)
        }
        (None, None, None) => return Err(invalid("variant", "no population given (`variant`, `variants` or [stations])")),
        _ => return Err(invalid("variant", "give only one of `variant`, `variants` and [stations]")),
    };

    let defaults = Scenario::new("", population.clone());
    let mut scenario = Scenario {
        name: file.name.unwrap_or_else(|| "scenario".to_string()),
        population,
        mac: file.mac.unwrap_or(defaults.mac),
        timing: file.timing.unwrap_or(defaults.timing),
        traffic: file.traffic.unwrap_or(defaults.traffic),
        slots: file.slots.unwrap_or(defaults.slots),
        seed: file.seed.unwrap_or(defaults.seed),
        replications: file.replications.unwrap_or(defaults.replications),
        sample_every: file.sample_every.unwrap_or(defaults.sample_every),
        observation_window: file.observation_window.unwrap_or(defaults.observation_window),
        sweep: file.sweep,
        initial_backoffs: file.initial_backoffs,
    };
    overrides.apply(&mut scenario)?;
    Ok(scenario)
}

/// Read, parse and validate a scenario file.
pub fn parse_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    parse_scenario_with(path, &Overrides::default())
}

/// Like [`parse_scenario`], with `overrides` applied before validation.
pub fn parse_scenario_with(path: impl AsRef<Path>, overrides: &Overrides) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_with(&text, overrides)
}
