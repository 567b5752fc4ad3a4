//! Shared helpers for the integration suites: a seeded generator for random
//! feasible scenarios and random feasible consumption patterns.

use peakshift::model::{ConsumerSpec, ConsumptionPattern};
use peakshift::scenario::{compile, PopulationDoc, PriceLevels, Scenario, ScenarioDocument};
use peakshift::{classify, exact_min_discount, population_extremes, solve_target, ConsumerClass};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PRICE_LOW: f64 = 0.1;
pub const PRICE_HIGH: f64 = 0.8;

/// Draws a scenario where every household is in the medium discomfort class,
/// the peak slot is shared, the per-household peak shiftable load is uniform,
/// and the discount clears both enforceability bounds: the exact lower-edge
/// bound, and delta * cap_i >= m/(m+1) for every i. The second condition keeps
/// a cap-saturated household that misses a scheduling slot inside its cap: an
/// unselected index above m/(m+1) would force the index sum past m, so under
/// that condition the largest-m rule always picks anyone in the danger zone.
/// Rejection-sampled, so the result is deterministic per seed.
pub fn random_scenario(seed: u64, max_consumers: usize) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..200 {
        if let Some(scenario) = try_draw(&mut rng, max_consumers) {
            return scenario;
        }
    }
    panic!("no feasible scenario within 200 draws for seed {seed}");
}

fn try_draw(rng: &mut ChaCha8Rng, max_consumers: usize) -> Option<Scenario> {
    let consumers = rng.gen_range(2..=max_consumers);
    let slots = rng.gen_range(3..=5usize);
    let peak_slot = rng.gen_range(0..slots);
    let shiftable = rng.gen_range(0.2..0.4f64);
    let gap = PRICE_HIGH - PRICE_LOW;

    let mut population = Vec::with_capacity(consumers);
    for id in 0..consumers {
        let peak = rng.gen_range((0.6f64).max(shiftable + 0.15)..1.5);
        let mut desired = vec![0.0; slots];
        let mut nonshiftable = vec![0.0; slots];
        desired[peak_slot] = peak;
        nonshiftable[peak_slot] = peak - shiftable;
        for slot in 0..slots {
            if slot == peak_slot {
                continue;
            }
            let load = peak * rng.gen_range(0.1..0.35);
            desired[slot] = load;
            nonshiftable[slot] = 0.3 * load;
        }
        // Gentle slopes and a fixed term just above the billing gap keep the
        // full-shift discomfort close to its floor, so a cap drawn as a high
        // fraction of it stays above m/(m+1). Steeper draws are legal inputs
        // but leave no discount able to honor the cap under rotation.
        let slope: Vec<f64> = (0..slots).map(|_| rng.gen_range(0.02..0.06)).collect();
        let fixed_discomfort = gap * peak * rng.gen_range(1.05..1.12);
        let discomfort_cap = gap * peak * rng.gen_range(0.93..0.97);
        let total_demand: f64 = desired.iter().sum();
        population.push(ConsumerSpec {
            id,
            total_demand,
            desired: ConsumptionPattern::new(desired).unwrap(),
            nonshiftable: ConsumptionPattern::new(nonshiftable).unwrap(),
            slope,
            fixed_discomfort,
            discomfort_cap,
        });
    }

    let aggregate: Vec<f64> = (0..slots)
        .map(|h| population.iter().map(|c| c.desired[h]).sum())
        .collect();
    let peak_load = aggregate[peak_slot];
    let shifters = rng.gen_range(1..=(consumers / 3).clamp(1, 2));
    let threshold = peak_load - shifters as f64 * shiftable;
    let worst_offpeak = aggregate
        .iter()
        .enumerate()
        .filter(|&(h, _)| h != peak_slot)
        .map(|(_, &l)| l)
        .fold(0.0, f64::max);
    if threshold <= worst_offpeak + 0.05 {
        return None;
    }

    let scenario = compile(&document(slots, threshold, population, 0.9)).ok()?;
    let extremes = population_extremes(&scenario.population, &scenario.pricing).ok()?;
    let caps: Vec<f64> = extremes.iter().map(|e| e.frequency_cap()).collect();
    solve_target(&extremes, scenario.pricing.shifter_count).ok()?;
    for consumer in &scenario.population {
        if classify(consumer, &scenario.pricing, peak_load) != ConsumerClass::Medium {
            return None;
        }
    }

    // Largest-m selection can only overflow a cap from an index that is both
    // unselected and above delta * cap; indices above m/(m+1) are always
    // selected, so delta * min cap >= m/(m+1) (with margin) closes the box.
    let m = scenario.pricing.shifter_count as f64;
    let min_cap = caps.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_cap <= m / (m + 1.0) + 0.02 {
        return None;
    }
    let upper_edge = m / ((m + 1.0) * min_cap);
    let lower_edge = exact_min_discount(&caps, scenario.pricing.shifter_count);
    let discount = (lower_edge + 0.8 * (1.0 - lower_edge)).max(upper_edge + 0.5 * (1.0 - upper_edge));
    let population = scenario.population;
    compile(&document(slots, threshold, population, discount)).ok()
}

fn document(
    slots: usize,
    threshold: f64,
    population: Vec<ConsumerSpec>,
    discount: f64,
) -> ScenarioDocument {
    ScenarioDocument {
        slots_per_period: slots,
        prices: PriceLevels {
            low: PRICE_LOW,
            high: PRICE_HIGH,
        },
        par_goal: None,
        threshold: Some(threshold),
        population: PopulationDoc::Explicit(population),
        discount,
        horizon: 1000,
        renewable_availability: 0.8,
        blocked_days: None,
    }
}

/// Minimizes `sum w_i x_i` over `sum x_i = total, 0 <= x_i <= cap_i` by
/// enumerating vertices: every coordinate at a bound except at most one.
pub fn lp_vertex_minimum(caps: &[f64], weights: &[f64], total: f64) -> f64 {
    let n = caps.len();
    assert!(n <= 20, "vertex enumeration is exponential");
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << n) {
        let mut saturated = 0.0;
        let mut cost = 0.0;
        for i in 0..n {
            if mask >> i & 1 == 1 {
                saturated += caps[i];
                cost += caps[i] * weights[i];
            }
        }
        let fractional = total - saturated;
        if fractional.abs() <= 1e-12 {
            best = best.min(cost);
            continue;
        }
        if fractional < 0.0 {
            continue;
        }
        for j in 0..n {
            if mask >> j & 1 == 0 && fractional <= caps[j] + 1e-12 {
                best = best.min(cost + fractional * weights[j]);
            }
        }
    }
    best
}

/// A random pattern that respects the consumer's per-slot floors and total
/// demand: the shiftable remainder is spread by random weights.
pub fn random_pattern(rng: &mut ChaCha8Rng, consumer: &ConsumerSpec) -> ConsumptionPattern {
    let slots = consumer.desired.slots();
    let floors: Vec<f64> = (0..slots).map(|h| consumer.nonshiftable[h]).collect();
    let spare = consumer.total_demand - floors.iter().sum::<f64>();
    let weights: Vec<f64> = (0..slots).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let loads: Vec<f64> = floors
        .iter()
        .zip(&weights)
        .map(|(f, w)| f + spare * w / total)
        .collect();
    ConsumptionPattern::new(loads).unwrap()
}
