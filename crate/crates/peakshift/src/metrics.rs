//! Cross-mechanism comparison and diagnostics.
//!
//! [`compare`] prices every mechanism on a scenario and, for the rotation
//! mechanism, optionally cross-checks the analytic per-period total against
//! a simulated run. [`fairness_report`] verifies that each consumer's
//! expected discomfort under the target frequencies respects its cap, and
//! [`convergence_diag`] measures how the discounted selection frequencies
//! settle
//! on the starting indices.

use thiserror::Error;

use crate::baselines::{run_baseline, BaselineError, Mechanism};
use crate::engine::{AgentPolicy, Engine, EngineError, PeriodRecord};
use crate::pareto::{population_extremes, solve_target};
use crate::scenario::Scenario;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// One mechanism's expected per-period outcome on a scenario.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub mechanism: Mechanism,
    pub total_cost: f64,
    pub total_discomfort: f64,
    pub peak_load: f64,
    pub par: f64,
    /// Discounted-average per-period total from a simulated run; rotation
    /// row only, when a simulation horizon was requested.
    pub simulated_total: Option<f64>,
    /// Absolute difference between the analytic and simulated totals.
    pub sim_gap: Option<f64>,
}

/// All mechanisms side by side, stamped with the scenario fingerprint.
#[derive(Debug, Clone)]
pub struct ComparisonTable {
    pub fingerprint: String,
    pub rows: Vec<ComparisonRow>,
}

/// Prices every mechanism on the scenario. When `simulate_periods` is set,
/// the rotation row is cross-checked by running the engine compliantly for
/// that many periods and comparing the discounted-average per-period total
/// against the analytic one.
pub fn compare(
    scenario: &Scenario,
    simulate_periods: Option<u64>,
) -> Result<ComparisonTable, MetricsError> {
    let mut rows = Vec::with_capacity(Mechanism::ALL.len());
    for mechanism in Mechanism::ALL {
        let result = run_baseline(mechanism, scenario)?;
        let (simulated_total, sim_gap) = match (mechanism, simulate_periods) {
            (Mechanism::RotationDsm, Some(periods)) if periods > 0 => {
                let simulated = simulated_average_total(scenario, periods)?;
                (Some(simulated), Some((simulated - result.total_cost).abs()))
            }
            _ => (None, None),
        };
        rows.push(ComparisonRow {
            mechanism,
            total_cost: result.total_cost,
            total_discomfort: result.total_discomfort,
            peak_load: result.peak_load,
            par: result.par,
            simulated_total,
            sim_gap,
        });
    }
    Ok(ComparisonTable {
        fingerprint: scenario.fingerprint.clone(),
        rows,
    })
}

/// Discounted average per-period population cost of a compliant run:
/// `(1 - d) / (1 - d^T) * sum_t d^t * total_t`.
fn simulated_average_total(scenario: &Scenario, periods: u64) -> Result<f64, MetricsError> {
    let engine = Engine::new(scenario)?;
    let mut state = engine.init_state();
    let trace = engine.run(&mut state, periods, &AgentPolicy::Compliant)?;
    let delta = scenario.discount;
    let mut total = 0.0;
    let mut weight = 1.0;
    for record in &trace.records {
        total += weight * record.stage_costs.iter().sum::<f64>();
        weight *= delta;
    }
    Ok(total * (1.0 - delta) / (1.0 - weight))
}

/// One consumer's expected discomfort under the target frequencies.
#[derive(Debug, Clone, Copy)]
pub struct FairnessRow {
    pub consumer: usize,
    /// Scheduling frequency from the target solution.
    pub frequency: f64,
    /// Discomfort of one full shift.
    pub shift_discomfort: f64,
    /// Expected per-period discomfort, `frequency * shift_discomfort`.
    pub expected_discomfort: f64,
    pub discomfort_cap: f64,
    pub within_cap: bool,
}

#[derive(Debug, Clone)]
pub struct FairnessReport {
    pub fingerprint: String,
    pub rows: Vec<FairnessRow>,
    pub all_within_caps: bool,
}

/// Expected per-consumer discomfort at the target frequencies, checked
/// against each consumer's discomfort cap.
pub fn fairness_report(scenario: &Scenario) -> Result<FairnessReport, MetricsError> {
    let extremes = population_extremes(&scenario.population, &scenario.pricing)
        .map_err(BaselineError::from)?;
    let target = solve_target(&extremes, scenario.pricing.shifter_count)
        .map_err(BaselineError::from)?;
    let mut rows = Vec::with_capacity(scenario.consumers());
    let mut all_within = true;
    for (consumer, extreme) in extremes.iter().enumerate() {
        let frequency = target.indices[consumer];
        let shift_discomfort = extreme.shift_discomfort();
        let expected = frequency * shift_discomfort;
        let cap = scenario.population[consumer].discomfort_cap;
        let within = expected <= cap + 1e-9;
        all_within &= within;
        rows.push(FairnessRow {
            consumer,
            frequency,
            shift_discomfort,
            expected_discomfort: expected,
            discomfort_cap: cap,
            within_cap: within,
        });
    }
    Ok(FairnessReport {
        fingerprint: scenario.fingerprint.clone(),
        rows,
        all_within_caps: all_within,
    })
}

/// How closely the discounted selection frequencies settled on the starting
/// indices over a recorded run.
#[derive(Debug, Clone)]
pub struct ConvergenceDiag {
    /// `(1 - d) * sum_t d^t * [i scheduled at t]` per consumer.
    pub discounted_frequency: Vec<f64>,
    /// Absolute difference to the starting index, per consumer.
    pub gap: Vec<f64>,
    pub max_gap: f64,
    /// `d^T`: the truncation bound the gaps must stay under, since an index
    /// never exceeds one.
    pub bound: f64,
}

/// Measures the discounted selection frequency of every consumer over a
/// compliant trace against its starting index. The index update rule makes
/// the two equal up to the `d^T` truncation term, so `max_gap <= bound` is
/// the expected outcome for any horizon.
pub fn convergence_diag(
    records: &[PeriodRecord],
    initial_indices: &[f64],
    discount: f64,
) -> ConvergenceDiag {
    let n = initial_indices.len();
    let mut frequency = vec![0.0; n];
    let mut weight = 1.0;
    for record in records {
        for &consumer in &record.active_set {
            frequency[consumer] += weight;
        }
        weight *= discount;
    }
    for value in &mut frequency {
        *value *= 1.0 - discount;
    }
    let gap: Vec<f64> = frequency
        .iter()
        .zip(initial_indices)
        .map(|(f, g)| (f - g).abs())
        .collect();
    let max_gap = gap.iter().fold(0.0f64, |a, &b| a.max(b));
    ConvergenceDiag {
        discounted_frequency: frequency,
        gap,
        max_gap,
        bound: weight,
    }
}
