//! Stationary scheduling mechanisms to compare the rotation engine against.
//!
//! Every mechanism here induces a fixed per-period outcome, so its expected
//! per-period costs and loads can be written down directly:
//!
//! * `N-DSM`: the rotation mechanism itself, priced analytically at its
//!   target frequencies.
//! * `OG-DSM`: no scheduling at all; everyone consumes as desired and the
//!   peak price applies.
//! * `JO-DSM`: the joint cost optimum with a fixed assignment; the cheapest
//!   shifters shift every period, ignoring fairness and incentives.
//! * `SC-DSM`: a stationary contract backed by renewable supply; every
//!   household shifts whenever the renewable is unavailable.
//! * `BILLING-MIN`: pro-rata shifting; every household moves an equal share
//!   of the excess peak load every period, keeping bills minimal at the
//!   price of everyone's fixed inconvenience.

use std::fmt;

use thiserror::Error;

use crate::model::{
    aggregate_desired, cheapest_offpeak_slot, discomfort, peak_to_average, slot_loads,
    slot_prices, ConsumptionPattern, LOAD_EPS,
};
use crate::pareto::{min_shift_pattern, population_extremes, solve_target, ParetoError};
use crate::scenario::Scenario;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error(transparent)]
    Pareto(#[from] ParetoError),
    #[error(
        "pro-rata shifting needs {required} kWh from consumer {consumer} but only {available} of its peak-slot load is shiftable"
    )]
    InsufficientShiftable {
        consumer: usize,
        required: f64,
        available: f64,
    },
}

/// The mechanisms [`run_baseline`] can price.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mechanism {
    RotationDsm,
    NoDsm,
    JointOptimum,
    StationaryContract,
    ProRata,
}

impl Mechanism {
    pub const ALL: [Mechanism; 5] = [
        Mechanism::RotationDsm,
        Mechanism::NoDsm,
        Mechanism::JointOptimum,
        Mechanism::StationaryContract,
        Mechanism::ProRata,
    ];
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = match self {
            Mechanism::RotationDsm => "N-DSM",
            Mechanism::NoDsm => "OG-DSM",
            Mechanism::JointOptimum => "JO-DSM",
            Mechanism::StationaryContract => "SC-DSM",
            Mechanism::ProRata => "BILLING-MIN",
        };
        f.write_str(label)
    }
}

/// Expected per-period outcome of a stationary mechanism.
#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub mechanism: Mechanism,
    /// Expected per-period stage cost per consumer.
    pub per_consumer: Vec<f64>,
    pub total_cost: f64,
    /// Expected per-period discomfort summed over consumers.
    pub total_discomfort: f64,
    /// Expected metered load per slot (renewable supply not netted out).
    pub expected_loads: Vec<f64>,
    pub peak_load: f64,
    pub par: f64,
}

impl BaselineResult {
    fn from_parts(
        mechanism: Mechanism,
        per_consumer: Vec<f64>,
        total_discomfort: f64,
        expected_loads: Vec<f64>,
        peak_slot: usize,
    ) -> Self {
        let total_cost = per_consumer.iter().sum();
        let peak_load = expected_loads[peak_slot];
        let par = peak_to_average(&expected_loads);
        BaselineResult {
            mechanism,
            per_consumer,
            total_cost,
            total_discomfort,
            expected_loads,
            peak_load,
            par,
        }
    }
}

/// Prices one mechanism on a scenario.
pub fn run_baseline(
    mechanism: Mechanism,
    scenario: &Scenario,
) -> Result<BaselineResult, BaselineError> {
    match mechanism {
        Mechanism::RotationDsm => rotation_dsm(scenario),
        Mechanism::NoDsm => no_dsm(scenario),
        Mechanism::JointOptimum => joint_optimum(scenario),
        Mechanism::StationaryContract => stationary_contract(scenario),
        Mechanism::ProRata => pro_rata(scenario),
    }
}

/// Prices a concrete one-period profile: returns per-consumer stage costs
/// and the total discomfort.
fn price_profile(scenario: &Scenario, profile: &[ConsumptionPattern]) -> (Vec<f64>, f64) {
    let refs: Vec<&ConsumptionPattern> = profile.iter().collect();
    let loads = slot_loads(&refs);
    let prices = slot_prices(&loads, &scenario.pricing);
    let mut costs = Vec::with_capacity(profile.len());
    let mut pain_total = 0.0;
    for (consumer, pattern) in profile.iter().enumerate() {
        let billing: f64 = pattern.iter().zip(&prices).map(|(l, p)| l * p).sum();
        let pain = discomfort(pattern, &scenario.population[consumer]);
        costs.push(billing + pain);
        pain_total += pain;
    }
    (costs, pain_total)
}

/// The rotation mechanism priced analytically: per-consumer costs are the
/// target costs, loads are the desired aggregate with the scheduled shifts
/// applied at their expected frequencies.
pub fn rotation_dsm(scenario: &Scenario) -> Result<BaselineResult, BaselineError> {
    let extremes = population_extremes(&scenario.population, &scenario.pricing)?;
    let target = solve_target(&extremes, scenario.pricing.shifter_count)?;
    let aggregate = aggregate_desired(&scenario.population);

    let mut expected_loads = aggregate.clone();
    let mut total_discomfort = 0.0;
    for (consumer, extreme) in extremes.iter().enumerate() {
        let frequency = target.indices[consumer];
        if frequency == 0.0 {
            continue;
        }
        total_discomfort += frequency * extreme.shift_discomfort();
        let plan = min_shift_pattern(
            &scenario.population[consumer],
            &scenario.pricing,
            &aggregate,
        );
        for &(slot, amount) in &plan.receiving {
            expected_loads[slot] += frequency * amount;
        }
        expected_loads[scenario.pricing.peak_slot] -=
            frequency * scenario.pricing.peak_shiftable;
    }

    Ok(BaselineResult::from_parts(
        Mechanism::RotationDsm,
        target.costs,
        total_discomfort,
        expected_loads,
        scenario.pricing.peak_slot,
    ))
}

/// No demand-side management: everyone consumes as desired, the peak slot
/// exceeds the threshold, and the peak price applies.
pub fn no_dsm(scenario: &Scenario) -> Result<BaselineResult, BaselineError> {
    let profile: Vec<ConsumptionPattern> = scenario
        .population
        .iter()
        .map(|c| c.desired.clone())
        .collect();
    let (per_consumer, total_discomfort) = price_profile(scenario, &profile);
    let refs: Vec<&ConsumptionPattern> = profile.iter().collect();
    let loads = slot_loads(&refs);
    Ok(BaselineResult::from_parts(
        Mechanism::NoDsm,
        per_consumer,
        total_discomfort,
        loads,
        scenario.pricing.peak_slot,
    ))
}

/// Joint cost minimum with a fixed assignment: the consumers with the
/// cheapest shift discomfort (ties to the lower id) shift every period.
/// Nothing rotates, so their inconvenience is permanent.
pub fn joint_optimum(scenario: &Scenario) -> Result<BaselineResult, BaselineError> {
    let extremes = population_extremes(&scenario.population, &scenario.pricing)?;
    let aggregate = aggregate_desired(&scenario.population);
    let mut order: Vec<usize> = (0..scenario.consumers()).collect();
    order.sort_by(|&a, &b| {
        extremes[a]
            .shift_discomfort()
            .partial_cmp(&extremes[b].shift_discomfort())
            .expect("discomforts are finite")
            .then_with(|| a.cmp(&b))
    });
    let shifters = &order[..scenario.pricing.shifter_count];

    let profile: Vec<ConsumptionPattern> = scenario
        .population
        .iter()
        .map(|consumer| {
            if shifters.contains(&consumer.id) {
                min_shift_pattern(consumer, &scenario.pricing, &aggregate).pattern
            } else {
                consumer.desired.clone()
            }
        })
        .collect();
    let (per_consumer, total_discomfort) = price_profile(scenario, &profile);
    let refs: Vec<&ConsumptionPattern> = profile.iter().collect();
    let loads = slot_loads(&refs);
    Ok(BaselineResult::from_parts(
        Mechanism::JointOptimum,
        per_consumer,
        total_discomfort,
        loads,
        scenario.pricing.peak_slot,
    ))
}

/// Stationary renewable-backed contract: with probability equal to the
/// renewable availability the peak excess is covered by renewable supply and
/// nobody shifts; otherwise every household shifts. Bills stay at the
/// off-peak level either way, so the expected cost is the base bill plus
/// the unavailability probability times the shift discomfort.
pub fn stationary_contract(scenario: &Scenario) -> Result<BaselineResult, BaselineError> {
    let epsilon = scenario.renewable_availability;
    let extremes = population_extremes(&scenario.population, &scenario.pricing)?;
    let aggregate = aggregate_desired(&scenario.population);

    let mut per_consumer = Vec::with_capacity(scenario.consumers());
    let mut total_discomfort = 0.0;
    let mut expected_loads = aggregate.clone();
    for (consumer, extreme) in extremes.iter().enumerate() {
        let pain = (1.0 - epsilon) * extreme.shift_discomfort();
        per_consumer.push(extreme.base_cost + pain);
        total_discomfort += pain;
        let plan = min_shift_pattern(
            &scenario.population[consumer],
            &scenario.pricing,
            &aggregate,
        );
        for &(slot, amount) in &plan.receiving {
            expected_loads[slot] += (1.0 - epsilon) * amount;
        }
        expected_loads[scenario.pricing.peak_slot] -=
            (1.0 - epsilon) * scenario.pricing.peak_shiftable;
    }

    Ok(BaselineResult::from_parts(
        Mechanism::StationaryContract,
        per_consumer,
        total_discomfort,
        expected_loads,
        scenario.pricing.peak_slot,
    ))
}

/// Pro-rata shifting: every household moves an equal share of the excess
/// peak load to its cheapest off-peak slot, every period. Bills stay
/// off-peak for everyone, but so does everyone's fixed inconvenience.
pub fn pro_rata(scenario: &Scenario) -> Result<BaselineResult, BaselineError> {
    let aggregate = aggregate_desired(&scenario.population);
    let peak = scenario.pricing.peak_slot;
    let excess = aggregate[peak] - scenario.pricing.threshold;
    let share = excess / scenario.consumers() as f64;

    let mut profile = Vec::with_capacity(scenario.consumers());
    for consumer in &scenario.population {
        let available = consumer.shiftable_at(peak);
        if share > available + LOAD_EPS {
            return Err(BaselineError::InsufficientShiftable {
                consumer: consumer.id,
                required: share,
                available,
            });
        }
        let mut loads: Vec<f64> = consumer.desired.as_slice().to_vec();
        let receiving = cheapest_offpeak_slot(&consumer.slope, peak);
        loads[peak] -= share;
        loads[receiving] += share;
        profile.push(ConsumptionPattern::new(loads).expect("shares keep loads non-negative"));
    }

    let (per_consumer, total_discomfort) = price_profile(scenario, &profile);
    let refs: Vec<&ConsumptionPattern> = profile.iter().collect();
    let loads = slot_loads(&refs);
    Ok(BaselineResult::from_parts(
        Mechanism::ProRata,
        per_consumer,
        total_discomfort,
        loads,
        scenario.pricing.peak_slot,
    ))
}
