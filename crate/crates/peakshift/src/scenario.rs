//! Scenario files and their compiled runtime form.
//!
//! A scenario document is a JSON file describing the tariff, the population
//! (explicit households or a seeded generator), the discount factor, and the
//! simulation horizon. Compiling a document validates every cross-field
//! invariant and derives the tariff geometry: peak slot, threshold, shifter
//! count, and the common shiftable load. The compiled form also carries a
//! fingerprint (SHA-256 of the canonical document JSON) that output tables
//! embed so every row can be traced back to its exact inputs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{
    aggregate_desired, peak_slot, required_shifters, ConsumerSpec, ConsumptionPattern, ModelError,
    PricingScheme, LOAD_EPS,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("scenario JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{field}: {message}")]
    Validation { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        field: field.to_string(),
        message: message.into(),
    }
}

/// Tariff price levels as written in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceLevels {
    pub low: f64,
    pub high: f64,
}

/// Population section: either explicit household specs or a seeded generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationDoc {
    Explicit(Vec<ConsumerSpec>),
    Generated(GeneratorSpec),
}

/// How many households of each stock profile to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCounts {
    #[serde(default)]
    pub type1: usize,
    #[serde(default)]
    pub type2: usize,
    #[serde(default)]
    pub type3: usize,
}

impl TypeCounts {
    pub fn total(&self) -> usize {
        self.type1 + self.type2 + self.type3
    }
}

/// Seeded population generator settings.
///
/// Every generated household puts `peak_load` kWh in the peak slot and
/// spreads the rest of its demand over the off-peak slots, optionally with
/// seeded multiplicative jitter. The per-slot non-shiftable floor is
/// `1 - shiftable_fraction` of the desired load, so the peak-slot shiftable
/// load is uniform across the population by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub counts: TypeCounts,
    pub seed: u64,
    #[serde(default = "default_shiftable_fraction")]
    pub shiftable_fraction: f64,
    /// Desired load in the peak slot, identical for every household.
    /// Defaults to `0.95 * 24 / slots`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_load: Option<f64>,
    /// Peak slot index. Defaults to 72% of the way through the day, inside
    /// the low-slope evening region.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_slot: Option<usize>,
    /// Relative spread of the off-peak load weights, in [0, 1).
    #[serde(default)]
    pub jitter: f64,
}

fn default_shiftable_fraction() -> f64 {
    0.4
}

fn default_renewable() -> f64 {
    0.8
}

/// A scenario file, exactly as parsed. One of `par_goal` and `threshold`
/// must be present, never both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub slots_per_period: usize,
    pub prices: PriceLevels,
    /// Fractional peak reduction the tariff must induce; the threshold is
    /// `(1 - par_goal)` times the desired aggregate peak load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub par_goal: Option<f64>,
    /// Explicit tariff threshold in kWh.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub population: PopulationDoc,
    pub discount: f64,
    pub horizon: u64,
    /// Probability that renewable supply covers a shifted load, used by the
    /// stationary-contract baseline.
    #[serde(default = "default_renewable")]
    pub renewable_availability: f64,
    /// Reserved hook: weekday indices (0-6) per consumer id on which that
    /// household must not be scheduled. Parsed and validated, not yet used
    /// by any scheduler.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocked_days: Option<BTreeMap<String, Vec<u8>>>,
}

/// A validated scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub population: Vec<ConsumerSpec>,
    pub pricing: PricingScheme,
    pub discount: f64,
    pub horizon: u64,
    pub renewable_availability: f64,
    /// SHA-256 of the canonical document JSON, lowercase hex.
    pub fingerprint: String,
    pub blocked_days: BTreeMap<usize, Vec<u8>>,
}

impl Scenario {
    pub fn consumers(&self) -> usize {
        self.population.len()
    }

    pub fn slots(&self) -> usize {
        self.population
            .first()
            .map_or(0, |consumer| consumer.desired.slots())
    }

    pub fn shifter_count(&self) -> usize {
        self.pricing.shifter_count
    }
}

/// Reads and parses a scenario document from disk.
pub fn load_document(path: &Path) -> Result<ScenarioDocument, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Parses, compiles, and validates a scenario file in one step.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    compile(&load_document(path)?)
}

/// SHA-256 fingerprint of a document's canonical JSON serialization.
pub fn fingerprint(doc: &ScenarioDocument) -> String {
    let canonical = serde_json::to_string(doc).expect("scenario documents serialize");
    let digest = Sha256::digest(canonical.as_bytes());
    let mut hex = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write;
        write!(hex, "{byte:02x}").unwrap();
    }
    hex
}

/// Validates a document and derives the runtime scenario.
pub fn compile(doc: &ScenarioDocument) -> Result<Scenario, ScenarioError> {
    let slots = doc.slots_per_period;
    if slots < 2 {
        return Err(invalid("slots_per_period", "need at least two slots"));
    }
    if doc.prices.low < 0.0 || doc.prices.high <= doc.prices.low {
        return Err(invalid(
            "prices",
            format!(
                "peak price {} must exceed the off-peak price {}",
                doc.prices.high, doc.prices.low
            ),
        ));
    }
    if !(doc.discount > 0.0 && doc.discount < 1.0) {
        return Err(invalid("discount", "must lie strictly between 0 and 1"));
    }
    if doc.horizon == 0 {
        return Err(invalid("horizon", "must be at least one period"));
    }
    if !(0.0..=1.0).contains(&doc.renewable_availability) {
        return Err(invalid("renewable_availability", "must lie in [0, 1]"));
    }

    let population = match &doc.population {
        PopulationDoc::Explicit(consumers) => {
            if consumers.is_empty() {
                return Err(invalid("population.explicit", "population is empty"));
            }
            for (position, consumer) in consumers.iter().enumerate() {
                if consumer.id != position {
                    return Err(invalid(
                        "population.explicit",
                        format!(
                            "consumer ids must be 0..n-1 in order; position {position} has id {}",
                            consumer.id
                        ),
                    ));
                }
                consumer.validate(slots)?;
            }
            consumers.clone()
        }
        PopulationDoc::Generated(spec) => generate_population(spec, slots)?,
    };

    let aggregate = aggregate_desired(&population);
    let peak = peak_slot(&population);
    let peak_load = aggregate[peak];

    let threshold = match (doc.par_goal, doc.threshold) {
        (Some(_), Some(_)) => {
            return Err(invalid(
                "par_goal/threshold",
                "give exactly one of par_goal and threshold, not both",
            ))
        }
        (None, None) => {
            return Err(invalid(
                "par_goal/threshold",
                "one of par_goal and threshold is required",
            ))
        }
        (Some(goal), None) => {
            if !(0.0..1.0).contains(&goal) || goal == 0.0 {
                return Err(invalid("par_goal", "must lie in (0, 1)"));
            }
            (1.0 - goal) * peak_load
        }
        (None, Some(threshold)) => {
            if threshold <= 0.0 {
                return Err(invalid("threshold", "must be positive"));
            }
            threshold
        }
    };

    if peak_load <= threshold {
        return Err(invalid(
            "threshold",
            format!("desired aggregate peak load {peak_load} does not exceed the threshold {threshold}"),
        ));
    }
    for (slot, &load) in aggregate.iter().enumerate() {
        if slot != peak && load > threshold + LOAD_EPS {
            return Err(invalid(
                "threshold",
                format!("desired aggregate load {load} at off-peak slot {slot} exceeds the threshold {threshold}; only the peak slot may"),
            ));
        }
    }

    let peak_shiftable = population[0].shiftable_at(peak);
    let shifter_count = required_shifters(&population, threshold, peak_shiftable)?;
    if shifter_count == 0 {
        return Err(invalid("threshold", "no shifters required; nothing to schedule"));
    }

    let pricing = PricingScheme {
        price_low: doc.prices.low,
        price_high: doc.prices.high,
        threshold,
        peak_slot: peak,
        shifter_count,
        peak_shiftable,
    };
    pricing.validate()?;

    let mut blocked_days = BTreeMap::new();
    if let Some(blocked) = &doc.blocked_days {
        for (key, days) in blocked {
            let id: usize = key
                .parse()
                .map_err(|_| invalid("blocked_days", format!("key {key:?} is not a consumer id")))?;
            if id >= population.len() {
                return Err(invalid(
                    "blocked_days",
                    format!("consumer id {id} out of range"),
                ));
            }
            if days.iter().any(|&d| d > 6) {
                return Err(invalid(
                    "blocked_days",
                    format!("consumer {id}: weekday indices must be 0-6"),
                ));
            }
            blocked_days.insert(id, days.clone());
        }
    }

    Ok(Scenario {
        population,
        pricing,
        discount: doc.discount,
        horizon: doc.horizon,
        renewable_availability: doc.renewable_availability,
        fingerprint: fingerprint(doc),
        blocked_days,
    })
}

/// Stock household profiles: demand, discomfort slopes for the early and
/// late (evening) slot ranges, fixed inconvenience, and discomfort cap.
struct TypeParams {
    total_demand: f64,
    slope_early: f64,
    slope_late: f64,
    fixed_discomfort: f64,
    discomfort_cap: f64,
}

const TYPE_PARAMS: [TypeParams; 3] = [
    TypeParams {
        total_demand: 10.0,
        slope_early: 0.2,
        slope_late: 0.1,
        fixed_discomfort: 0.7,
        discomfort_cap: 0.71,
    },
    TypeParams {
        total_demand: 8.0,
        slope_early: 0.1,
        slope_late: 0.05,
        fixed_discomfort: 1.5,
        discomfort_cap: 0.91,
    },
    TypeParams {
        total_demand: 11.0,
        slope_early: 0.15,
        slope_late: 0.1,
        fixed_discomfort: 1.2,
        discomfort_cap: 0.95,
    },
];

/// First slot of the low-slope evening region: the early region scales as
/// 14/24 of the day.
fn evening_start(slots: usize) -> usize {
    slots * 14 / 24
}

/// Default peak slot, 72% of the way through the day.
fn default_peak_slot(slots: usize) -> usize {
    ((slots as f64 * 0.72) as usize).min(slots - 1)
}

/// Builds the population a generator spec describes. Deterministic for a
/// given spec: the jitter stream is seeded and consumed in id order.
pub fn generate_population(
    spec: &GeneratorSpec,
    slots: usize,
) -> Result<Vec<ConsumerSpec>, ScenarioError> {
    use rand::{Rng, SeedableRng};

    let n = spec.counts.total();
    if n == 0 {
        return Err(invalid("population.generated.counts", "no consumers requested"));
    }
    if !(0.0..1.0).contains(&spec.shiftable_fraction) || spec.shiftable_fraction == 0.0 {
        return Err(invalid(
            "population.generated.shiftable_fraction",
            "must lie in (0, 1)",
        ));
    }
    if !(0.0..1.0).contains(&spec.jitter) {
        return Err(invalid("population.generated.jitter", "must lie in [0, 1)"));
    }
    let peak = spec.peak_slot.unwrap_or_else(|| default_peak_slot(slots));
    if peak >= slots {
        return Err(invalid(
            "population.generated.peak_slot",
            format!("slot {peak} out of range for {slots} slots"),
        ));
    }
    let peak_load = spec.peak_load.unwrap_or(0.95 * 24.0 / slots as f64);
    if peak_load <= 0.0 {
        return Err(invalid("population.generated.peak_load", "must be positive"));
    }

    let evening = evening_start(slots);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(spec.seed);
    let mut population = Vec::with_capacity(n);

    let type_runs = [
        (spec.counts.type1, &TYPE_PARAMS[0]),
        (spec.counts.type2, &TYPE_PARAMS[1]),
        (spec.counts.type3, &TYPE_PARAMS[2]),
    ];
    let mut id = 0;
    for (count, params) in type_runs {
        let offpeak_total = params.total_demand - peak_load;
        if offpeak_total <= 0.0 {
            return Err(invalid(
                "population.generated.peak_load",
                format!(
                    "peak load {peak_load} exceeds a type's total demand {}",
                    params.total_demand
                ),
            ));
        }
        // Loud off-peak slots would move the aggregate peak; cap the jittered
        // weights well under the peak.
        let flat = offpeak_total / (slots - 1) as f64;
        if flat * (1.0 + spec.jitter) >= peak_load {
            return Err(invalid(
                "population.generated.peak_load",
                "off-peak slots would rival the peak; raise peak_load or lower jitter",
            ));
        }

        for _ in 0..count {
            let mut weights = vec![0.0; slots];
            let mut total = 0.0;
            for (slot, weight) in weights.iter_mut().enumerate() {
                if slot == peak {
                    continue;
                }
                *weight = if spec.jitter > 0.0 {
                    1.0 + spec.jitter * rng.gen_range(-1.0..1.0)
                } else {
                    1.0
                };
                total += *weight;
            }
            let mut desired = vec![0.0; slots];
            desired[peak] = peak_load;
            for (slot, weight) in weights.iter().enumerate() {
                if slot != peak {
                    desired[slot] = offpeak_total * weight / total;
                }
            }
            let nonshiftable: Vec<f64> = desired
                .iter()
                .map(|d| d * (1.0 - spec.shiftable_fraction))
                .collect();
            let slope: Vec<f64> = (0..slots)
                .map(|slot| {
                    if slot < evening {
                        params.slope_early
                    } else {
                        params.slope_late
                    }
                })
                .collect();
            let consumer = ConsumerSpec {
                id,
                total_demand: params.total_demand,
                desired: ConsumptionPattern::new(desired).expect("generated loads are non-negative"),
                nonshiftable: ConsumptionPattern::new(nonshiftable)
                    .expect("generated floors are non-negative"),
                slope,
                fixed_discomfort: params.fixed_discomfort,
                discomfort_cap: params.discomfort_cap,
            };
            consumer.validate(slots)?;
            population.push(consumer);
            id += 1;
        }
    }
    Ok(population)
}
