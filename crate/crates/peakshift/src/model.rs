//! Stage-game primitives: consumption patterns, two-level critical-peak
//! prices, discomfort costs, and consumer classification.
//!
//! Loads are kWh per slot, prices $/kWh, costs $. Slots are 0-based.

use std::ops::Index;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for load comparisons: pattern equality, threshold
/// boundaries, and integrality snapping in shifter counts.
pub const LOAD_EPS: f64 = 1e-9;

/// Maximum spread tolerated by the uniform peak-shiftable check.
pub const SHIFTABLE_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("pattern has {actual} slots, expected {expected}")]
    SlotCountMismatch { expected: usize, actual: usize },
    #[error("negative load {value} at slot {slot}")]
    NegativeLoad { slot: usize, value: f64 },
    #[error("consumer {id}: desired loads sum to {actual} but total demand is {declared}")]
    DemandMismatch { id: usize, actual: f64, declared: f64 },
    #[error("consumer {id}: desired load {desired} at slot {slot} is below the non-shiftable floor {floor}")]
    BelowFloor {
        id: usize,
        slot: usize,
        desired: f64,
        floor: f64,
    },
    #[error("consumer {id}: discomfort parameters must be non-negative")]
    NegativeDiscomfort { id: usize },
    #[error("peak price {high} must exceed the off-peak price {low}, both non-negative")]
    PriceOrder { low: f64, high: f64 },
    #[error("peak-slot shiftable loads are not uniform across consumers (spread {spread})")]
    NonUniformShiftable { spread: f64 },
    #[error("peak-slot shiftable load must be positive, got {value}")]
    NoShiftableLoad { value: f64 },
    #[error("clearing the peak needs {required} shifters but the population has {available}")]
    InfeasibleThreshold { required: usize, available: usize },
}

/// Per-slot energy consumption over one billing period. Entries are
/// non-negative; the slot count is fixed by the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConsumptionPattern(Vec<f64>);

impl ConsumptionPattern {
    pub fn new(loads: Vec<f64>) -> Result<Self, ModelError> {
        for (slot, &value) in loads.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(ModelError::NegativeLoad { slot, value });
            }
        }
        Ok(Self(loads))
    }

    pub fn slots(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    /// Element-wise equality within [`LOAD_EPS`] per slot.
    pub fn approx_eq(&self, other: &Self) -> bool {
        self.0.len() == other.0.len()
            && self
                .0
                .iter()
                .zip(&other.0)
                .all(|(a, b)| (a - b).abs() <= LOAD_EPS)
    }
}

impl Index<usize> for ConsumptionPattern {
    type Output = f64;

    fn index(&self, slot: usize) -> &f64 {
        &self.0[slot]
    }
}

/// A household's demand profile and discomfort parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsumerSpec {
    pub id: usize,
    /// Total energy demand per period; equals the sum of `desired`.
    pub total_demand: f64,
    pub desired: ConsumptionPattern,
    /// Per-slot floor below which load cannot be rescheduled.
    pub nonshiftable: ConsumptionPattern,
    /// Per-slot marginal discomfort of deviating from the desired load.
    pub slope: Vec<f64>,
    /// Fixed inconvenience incurred by any deviation from desired.
    pub fixed_discomfort: f64,
    /// Upper bound on acceptable long-run average discomfort.
    pub discomfort_cap: f64,
}

impl ConsumerSpec {
    pub fn validate(&self, slots: usize) -> Result<(), ModelError> {
        for actual in [
            self.desired.slots(),
            self.nonshiftable.slots(),
            self.slope.len(),
        ] {
            if actual != slots {
                return Err(ModelError::SlotCountMismatch {
                    expected: slots,
                    actual,
                });
            }
        }
        let sum = self.desired.total();
        if (sum - self.total_demand).abs() > LOAD_EPS {
            return Err(ModelError::DemandMismatch {
                id: self.id,
                actual: sum,
                declared: self.total_demand,
            });
        }
        for slot in 0..slots {
            if self.desired[slot] + LOAD_EPS < self.nonshiftable[slot] {
                return Err(ModelError::BelowFloor {
                    id: self.id,
                    slot,
                    desired: self.desired[slot],
                    floor: self.nonshiftable[slot],
                });
            }
        }
        if self.fixed_discomfort < 0.0
            || self.discomfort_cap < 0.0
            || self.slope.iter().any(|&k| k < 0.0)
        {
            return Err(ModelError::NegativeDiscomfort { id: self.id });
        }
        Ok(())
    }

    /// Load the consumer can move out of the given slot.
    pub fn shiftable_at(&self, slot: usize) -> f64 {
        self.desired[slot] - self.nonshiftable[slot]
    }
}

/// Two-level critical-peak tariff plus the peak geometry derived from the
/// population it was built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingScheme {
    pub price_low: f64,
    pub price_high: f64,
    /// Aggregate load above which a slot is billed at the peak price.
    pub threshold: f64,
    /// The one slot whose desired aggregate load exceeds the threshold.
    pub peak_slot: usize,
    /// Number of consumers that must shift to clear the peak.
    pub shifter_count: usize,
    /// Common per-consumer shiftable load at the peak slot.
    pub peak_shiftable: f64,
}

impl PricingScheme {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.price_low < 0.0 || self.price_high <= self.price_low {
            return Err(ModelError::PriceOrder {
                low: self.price_low,
                high: self.price_high,
            });
        }
        Ok(())
    }

    /// Premium paid per kWh billed at the peak price.
    pub fn price_gap(&self) -> f64 {
        self.price_high - self.price_low
    }
}

/// Willingness-to-shift class of a consumer under a given tariff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConsumerClass {
    /// Shifts voluntarily: the price premium alone outweighs its discomfort.
    Low,
    /// Shifts only when compensated by the scheduling mechanism.
    Medium,
    /// Too costly to schedule at all.
    High,
}

/// Two-level price for one slot given its aggregate load.
///
/// Boundary loads are billed low; the epsilon absorbs float noise in
/// aggregate sums so exact-threshold schedules are not tipped high.
pub fn price_at_slot(total_load: f64, pricing: &PricingScheme) -> f64 {
    if total_load <= pricing.threshold + LOAD_EPS {
        pricing.price_low
    } else {
        pricing.price_high
    }
}

/// Per-slot prices for a whole load vector.
pub fn slot_prices(loads: &[f64], pricing: &PricingScheme) -> Vec<f64> {
    loads.iter().map(|&l| price_at_slot(l, pricing)).collect()
}

/// Sum of desired patterns across the population, slot by slot.
pub fn aggregate_desired(population: &[ConsumerSpec]) -> Vec<f64> {
    let slots = population.first().map_or(0, |c| c.desired.slots());
    let mut total = vec![0.0; slots];
    for consumer in population {
        for (slot, load) in consumer.desired.iter().enumerate() {
            total[slot] += load;
        }
    }
    total
}

/// Slot with the largest desired aggregate load, ties to the lowest slot.
/// The population must be non-empty.
pub fn peak_slot(population: &[ConsumerSpec]) -> usize {
    let loads = aggregate_desired(population);
    assert!(!loads.is_empty(), "peak slot of an empty population");
    let mut best = 0;
    for (slot, &load) in loads.iter().enumerate() {
        if load > loads[best] {
            best = slot;
        }
    }
    best
}

/// Aggregate loads of an action profile, slot by slot.
pub fn slot_loads(profile: &[&ConsumptionPattern]) -> Vec<f64> {
    let slots = profile.first().map_or(0, |p| p.slots());
    let mut total = vec![0.0; slots];
    for pattern in profile {
        for (slot, load) in pattern.iter().enumerate() {
            total[slot] += load;
        }
    }
    total
}

/// Peak-to-average ratio of an aggregate load vector.
pub fn peak_to_average(loads: &[f64]) -> f64 {
    assert!(!loads.is_empty());
    let peak = loads.iter().fold(f64::MIN, |a, &b| a.max(b));
    let mean = loads.iter().sum::<f64>() / loads.len() as f64;
    peak / mean
}

/// Number of consumers that must fully shift their peak-slot shiftable load
/// to bring the aggregate peak under the threshold.
///
/// Verifies that every consumer's peak-slot shiftable load matches
/// `peak_shiftable` within [`SHIFTABLE_TOL`]. Ratios within [`LOAD_EPS`] of an
/// integer are taken exactly; anything else rounds up.
pub fn required_shifters(
    population: &[ConsumerSpec],
    threshold: f64,
    peak_shiftable: f64,
) -> Result<usize, ModelError> {
    let peak = peak_slot(population);
    let mut spread: f64 = 0.0;
    for consumer in population {
        spread = spread.max((consumer.shiftable_at(peak) - peak_shiftable).abs());
    }
    if spread > SHIFTABLE_TOL {
        return Err(ModelError::NonUniformShiftable { spread });
    }
    if peak_shiftable <= 0.0 {
        return Err(ModelError::NoShiftableLoad {
            value: peak_shiftable,
        });
    }
    let excess = aggregate_desired(population)[peak] - threshold;
    if excess <= 0.0 {
        return Ok(0);
    }
    let ratio = excess / peak_shiftable;
    let count = if (ratio - ratio.round()).abs() <= LOAD_EPS {
        ratio.round() as usize
    } else {
        ratio.ceil() as usize
    };
    if count > population.len() {
        return Err(ModelError::InfeasibleThreshold {
            required: count,
            available: population.len(),
        });
    }
    Ok(count)
}

/// Discomfort of consuming `pattern` instead of the desired one: zero when
/// they match within [`LOAD_EPS`] per slot, otherwise the fixed inconvenience
/// plus the slope-weighted absolute deviations.
pub fn discomfort(pattern: &ConsumptionPattern, consumer: &ConsumerSpec) -> f64 {
    if pattern.approx_eq(&consumer.desired) {
        return 0.0;
    }
    let deviation: f64 = pattern
        .iter()
        .zip(consumer.desired.iter())
        .zip(&consumer.slope)
        .map(|((a, d), k)| k * (a - d).abs())
        .sum();
    consumer.fixed_discomfort + deviation
}

/// Billing for one consumer's pattern under the given per-slot prices.
pub fn billing(pattern: &ConsumptionPattern, prices: &[f64]) -> f64 {
    pattern.iter().zip(prices).map(|(a, p)| a * p).sum()
}

/// One consumer's cost for a full action profile: billing at the prices the
/// profile induces, plus its own discomfort. `index` selects the consumer's
/// pattern within `profile`.
pub fn stage_cost(
    profile: &[&ConsumptionPattern],
    pricing: &PricingScheme,
    consumer: &ConsumerSpec,
    index: usize,
) -> f64 {
    let loads = slot_loads(profile);
    let prices = slot_prices(&loads, pricing);
    billing(profile[index], &prices) + discomfort(profile[index], consumer)
}

/// Off-peak slot with the smallest discomfort slope, ties to the earliest.
pub fn cheapest_offpeak_slot(slope: &[f64], peak_slot: usize) -> usize {
    let mut best = usize::MAX;
    for (slot, &k) in slope.iter().enumerate() {
        if slot == peak_slot {
            continue;
        }
        if best == usize::MAX || k < slope[best] {
            best = slot;
        }
    }
    assert!(best != usize::MAX, "need at least two slots");
    best
}

/// Discomfort of the cheapest full shift: the consumer's peak-slot shiftable
/// load moved to its lowest-slope off-peak slot. Zero when nothing is
/// shiftable at the peak.
pub fn min_shift_discomfort(consumer: &ConsumerSpec, peak_slot: usize) -> f64 {
    let shiftable = consumer.shiftable_at(peak_slot);
    if shiftable <= LOAD_EPS {
        return 0.0;
    }
    let target = cheapest_offpeak_slot(&consumer.slope, peak_slot);
    consumer.fixed_discomfort + (consumer.slope[peak_slot] + consumer.slope[target]) * shiftable
}

/// Classifies a consumer's willingness to shift.
///
/// `peak_load` is the desired aggregate load at the peak slot. The consumer
/// is `Medium` when the per-shifter billing relief at the peak exceeds its
/// cheapest full-shift discomfort and its fixed inconvenience exceeds the
/// price premium on its own peak-slot load; `Low` when the relief condition
/// holds but the premium already covers its inconvenience; `High` when the
/// relief condition fails, regardless of the premium.
pub fn classify(consumer: &ConsumerSpec, pricing: &PricingScheme, peak_load: f64) -> ConsumerClass {
    let relief = pricing.price_gap() * peak_load / pricing.shifter_count as f64;
    let shift_discomfort = min_shift_discomfort(consumer, pricing.peak_slot);
    let premium = pricing.price_gap() * consumer.desired[pricing.peak_slot];
    if relief <= shift_discomfort {
        ConsumerClass::High
    } else if consumer.fixed_discomfort > premium {
        ConsumerClass::Medium
    } else {
        ConsumerClass::Low
    }
}
