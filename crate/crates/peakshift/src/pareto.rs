//! Achievable-cost geometry of the repeated scheduling game: per-consumer
//! extreme costs, the efficient boundary, target cost selection, and the
//! discount factors that make the targets enforceable.
//!
//! Costs here are long-run discounted averages. Each consumer's averages are
//! spanned by two extremes: `base_cost` (never shifts, every slot billed low)
//! and `shift_cost` (shifts every period). A schedule that always clears the
//! peak with exactly `m` shifters per period puts the cost vector on the
//! hyperplane where the shift-frequency coordinates sum to `m`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    cheapest_offpeak_slot, discomfort, ConsumerSpec, ConsumptionPattern, PricingScheme, LOAD_EPS,
};

/// Tolerance for hyperplane membership and feasibility sums.
pub const SUM_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ParetoError {
    #[error("consumer {consumer}: cost cap sits below the base cost, nothing is enforceable")]
    InfeasibleCap { consumer: usize },
    #[error("target needs {required} shifters per period but caps admit only {capacity:.6}")]
    Infeasible { required: usize, capacity: f64 },
}

/// Outcome of planning a consumer's cheapest full shift out of the peak slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftPlan {
    pub pattern: ConsumptionPattern,
    /// Off-peak slots that received load, with amounts, in fill order.
    pub receiving: Vec<(usize, f64)>,
    /// True when the single cheapest slot lacked headroom and the load was
    /// spread across several slots. Callers should surface this: the tariff
    /// threshold is normally far above every off-peak slot.
    pub split: bool,
}

/// The cost landmarks spanning one consumer's achievable discounted averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremeCosts {
    /// Never shifts and every slot is billed low: the floor of its costs.
    pub base_cost: f64,
    /// Shifts every period: base billing plus the full-shift discomfort.
    pub shift_cost: f64,
    /// Cost when nobody cooperates and the peak is billed high.
    pub ne_cost: f64,
    /// Enforceable ceiling: the smaller of the discomfort-capped cost and
    /// `ne_cost`.
    pub cap_cost: f64,
    /// The pattern behind `shift_cost`.
    pub shift_pattern: ConsumptionPattern,
    /// Largest enforceable shift frequency, `(cap - base) / (shift - base)`.
    /// Zero when the consumer has nothing to shift.
    pub index_cap: f64,
    /// True when the shift pattern had to spread across several slots.
    pub split_shift: bool,
}

impl ExtremeCosts {
    /// Discomfort of the cheapest full shift.
    pub fn shift_discomfort(&self) -> f64 {
        self.shift_cost - self.base_cost
    }

    /// Shift frequency actually usable per period, `min(1, index_cap)`.
    pub fn frequency_cap(&self) -> f64 {
        self.index_cap.min(1.0)
    }
}

/// Membership of a cost vector relative to the efficient boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParetoMembership {
    /// On the boundary: normalized costs sum to the shifter count.
    OnBoundary,
    /// Achievable but wasteful, or unachievable without extra shifters.
    InteriorViolation,
    /// Below some consumer's base cost, unachievable outright.
    Infeasible,
}

/// Per-consumer cost targets on the efficient boundary together with the
/// shift frequencies that realize them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetCostVector {
    pub costs: Vec<f64>,
    /// Long-run shift frequency per consumer; sums to `shifter_count`.
    pub indices: Vec<f64>,
    pub shifter_count: usize,
}

/// Plans the cheapest full shift of the consumer's peak-slot shiftable load.
///
/// The load goes to the lowest-slope off-peak slot (ties to the earliest).
/// If that slot cannot absorb it without pushing the aggregate over the
/// threshold, the load spreads across off-peak slots in slope order, each up
/// to its headroom, with any unplaceable remainder dumped on the cheapest
/// slot. `aggregate_desired` is the population's desired load per slot.
pub fn min_shift_pattern(
    consumer: &ConsumerSpec,
    pricing: &PricingScheme,
    aggregate_desired: &[f64],
) -> ShiftPlan {
    let peak = pricing.peak_slot;
    let shiftable = consumer.shiftable_at(peak);
    if shiftable <= LOAD_EPS {
        return ShiftPlan {
            pattern: consumer.desired.clone(),
            receiving: Vec::new(),
            split: false,
        };
    }

    let mut loads = consumer.desired.as_slice().to_vec();
    loads[peak] -= shiftable;

    let cheapest = cheapest_offpeak_slot(&consumer.slope, peak);
    let headroom = |slot: usize| (pricing.threshold - aggregate_desired[slot]).max(0.0);

    if headroom(cheapest) + LOAD_EPS >= shiftable {
        loads[cheapest] += shiftable;
        return ShiftPlan {
            pattern: ConsumptionPattern::new(loads).expect("shift keeps loads non-negative"),
            receiving: vec![(cheapest, shiftable)],
            split: false,
        };
    }

    // Fallback: spread in slope order. The scenarios this library targets
    // leave ample headroom, so this path is exceptional by construction.
    let mut order: Vec<usize> = (0..consumer.desired.slots()).filter(|&h| h != peak).collect();
    order.sort_by(|&a, &b| {
        consumer.slope[a]
            .total_cmp(&consumer.slope[b])
            .then(a.cmp(&b))
    });
    let mut receiving = Vec::new();
    let mut left = shiftable;
    for &slot in &order {
        if left <= LOAD_EPS {
            break;
        }
        let take = headroom(slot).min(left);
        if take > LOAD_EPS {
            loads[slot] += take;
            receiving.push((slot, take));
            left -= take;
        }
    }
    if left > LOAD_EPS {
        // No slot can legally absorb the rest; keep discomfort minimal.
        loads[cheapest] += left;
        receiving.push((cheapest, left));
    }
    ShiftPlan {
        pattern: ConsumptionPattern::new(loads).expect("shift keeps loads non-negative"),
        receiving,
        split: true,
    }
}

/// Computes one consumer's cost landmarks under the tariff.
pub fn extreme_costs(
    consumer: &ConsumerSpec,
    pricing: &PricingScheme,
    aggregate_desired: &[f64],
) -> Result<ExtremeCosts, ParetoError> {
    let plan = min_shift_pattern(consumer, pricing, aggregate_desired);
    let base_cost = pricing.price_low * consumer.total_demand;
    let shift_cost = base_cost + discomfort(&plan.pattern, consumer);
    let ne_cost = base_cost + pricing.price_gap() * consumer.desired[pricing.peak_slot];
    let cap_cost = (base_cost + consumer.discomfort_cap).min(ne_cost);

    let span = shift_cost - base_cost;
    let index_cap = if span > LOAD_EPS {
        (cap_cost - base_cost) / span
    } else {
        0.0
    };
    if index_cap < 0.0 {
        return Err(ParetoError::InfeasibleCap {
            consumer: consumer.id,
        });
    }
    Ok(ExtremeCosts {
        base_cost,
        shift_cost,
        ne_cost,
        cap_cost,
        shift_pattern: plan.pattern,
        index_cap,
        split_shift: plan.split,
    })
}

/// Cost landmarks for a whole population.
pub fn population_extremes(
    population: &[ConsumerSpec],
    pricing: &PricingScheme,
) -> Result<Vec<ExtremeCosts>, ParetoError> {
    let aggregate = crate::model::aggregate_desired(population);
    population
        .iter()
        .map(|consumer| extreme_costs(consumer, pricing, &aggregate))
        .collect()
}

/// Tests a cost vector against the efficient boundary for `m` shifters.
pub fn pareto_membership(
    costs: &[f64],
    extremes: &[ExtremeCosts],
    shifter_count: usize,
) -> ParetoMembership {
    let mut sum = 0.0;
    for (cost, extreme) in costs.iter().zip(extremes) {
        let offset = cost - extreme.base_cost;
        if offset < -SUM_EPS {
            return ParetoMembership::Infeasible;
        }
        let span = extreme.shift_cost - extreme.base_cost;
        if span > LOAD_EPS {
            sum += offset / span;
        } else if offset > SUM_EPS {
            // No shift can raise this consumer's cost above base.
            return ParetoMembership::InteriorViolation;
        }
    }
    if (sum - shifter_count as f64).abs() <= SUM_EPS {
        ParetoMembership::OnBoundary
    } else {
        ParetoMembership::InteriorViolation
    }
}

/// Picks the cheapest boundary point: total discomfort is minimized by
/// loading shift frequency onto consumers in order of their full-shift
/// discomfort (ties to the lowest id), each saturated at its frequency cap.
pub fn solve_target(
    extremes: &[ExtremeCosts],
    shifter_count: usize,
) -> Result<TargetCostVector, ParetoError> {
    let capacity: f64 = extremes.iter().map(ExtremeCosts::frequency_cap).sum();
    let required = shifter_count as f64;
    if capacity + SUM_EPS < required {
        return Err(ParetoError::Infeasible {
            required: shifter_count,
            capacity,
        });
    }

    let mut order: Vec<usize> = (0..extremes.len()).collect();
    order.sort_by(|&a, &b| {
        extremes[a]
            .shift_discomfort()
            .total_cmp(&extremes[b].shift_discomfort())
            .then(a.cmp(&b))
    });

    let mut indices = vec![0.0; extremes.len()];
    let mut remaining = required;
    for &i in &order {
        if remaining <= 0.0 {
            break;
        }
        let take = extremes[i].frequency_cap().min(remaining);
        indices[i] = take;
        remaining -= take;
    }

    let costs = indices
        .iter()
        .zip(extremes)
        .map(|(g, e)| e.base_cost + g * (e.shift_cost - e.base_cost))
        .collect();
    Ok(TargetCostVector {
        costs,
        indices,
        shifter_count,
    })
}

/// Discount factor above which every boundary point with unit frequency caps
/// is enforceable: `1 - 1/(n - m + 1)`.
pub fn min_discount(population: usize, shifter_count: usize) -> f64 {
    assert!(
        (1..=population).contains(&shifter_count),
        "shifter count must be between 1 and the population size"
    );
    1.0 - 1.0 / (population - shifter_count + 1) as f64
}

/// Sharper enforceability bound that credits the largest frequency caps:
/// `1 - (m - sum of the m-1 largest caps) / (n - m + 1)`. Caps above 1 count
/// as 1. Reduces to `1 - 1/n` when `m` is 1.
pub fn exact_min_discount(caps: &[f64], shifter_count: usize) -> f64 {
    let population = caps.len();
    assert!(
        (1..=population).contains(&shifter_count),
        "shifter count must be between 1 and the population size"
    );
    let mut sorted: Vec<f64> = caps.iter().map(|&g| g.min(1.0)).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let head: f64 = sorted[..shifter_count - 1].iter().sum();
    1.0 - (shifter_count as f64 - head) / (population - shifter_count + 1) as f64
}
