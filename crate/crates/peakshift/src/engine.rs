//! The repeated-game scheduling engine.
//!
//! Each period the scheduler picks the `shifter_count` consumers with the
//! largest scheduling indices and recommends they move their peak-slot
//! shiftable load to their cheapest off-peak slot; everyone else is told to
//! consume as desired. Indices are debited for the scheduled consumers and
//! renormalized by the discount factor, which keeps their sum constant and
//! makes each consumer's discounted selection frequency equal its starting
//! index exactly.
//!
//! The threat sustaining compliance is public and grim: if the aggregate
//! peak-slot load ever exceeds the tariff threshold, the peak price goes
//! high, every consumer reverts to its desired pattern forever, and the peak
//! price stays high. [`Engine::audit_ic`] measures the resulting incentive
//! gap both analytically and by simulating one-shot deviations.

use std::sync::Arc;

use thiserror::Error;

use crate::model::{
    discomfort, slot_loads, slot_prices, ConsumerSpec, ConsumptionPattern, PricingScheme, LOAD_EPS,
};
use crate::pareto::{min_shift_pattern, population_extremes, solve_target, ExtremeCosts,
    ParetoError, TargetCostVector};
use crate::scenario::Scenario;

/// Slack allowed on the index box `[0, min(1, cap)]` before the engine
/// declares the dynamics divergent.
pub const INDEX_TOL: f64 = 1e-7;

/// Tail resolution the incentive audit aims for: simulation horizons are
/// chosen so the unsimulated remainder is below this.
pub const AUDIT_RESOLUTION: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("scheduling index of consumer {consumer} left [0, {cap}]: {value}")]
    IndexOutOfBounds {
        consumer: usize,
        value: f64,
        cap: f64,
    },
    #[error(
        "consumer {consumer} gains by deviating at period {period}: \
         following costs {follow}, deviating costs {deviate}"
    )]
    NotIncentiveCompatible {
        consumer: usize,
        period: u64,
        follow: f64,
        deviate: f64,
    },
    #[error("punishment is not absorbing: period {period} after a breach is not at the static equilibrium")]
    PunishmentEscaped { period: u64 },
    #[error(transparent)]
    Pareto(#[from] ParetoError),
}

/// Public state of the repeated game.
#[derive(Debug, Clone, PartialEq)]
pub struct GameState {
    pub period: u64,
    /// Scheduling index per consumer; the sum stays equal to the shifter
    /// count while cooperation lasts.
    pub indices: Vec<f64>,
    /// Set once the peak price has gone high; never unset.
    pub punished: bool,
}

/// Game state plus the tie-breaking memory of the scheduler.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineState {
    pub game: GameState,
    /// Period at which each consumer was last scheduled, if ever.
    pub last_selected: Vec<Option<u64>>,
}

/// How consumers act on the recommendations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentPolicy {
    /// Everyone follows the recommendation.
    Compliant,
    /// One consumer plays its desired pattern at one period, everyone else
    /// complies. If the consumer is recommended the desired pattern at that
    /// period anyway, nothing observable happens.
    OneShotDeviator { consumer: usize, period: u64 },
    /// One consumer plays the cheaper of the recommendation and its desired
    /// pattern each period, judged against everyone else complying.
    MyopicBestResponse { consumer: usize },
}

/// Everything observable about one settled period.
#[derive(Debug, Clone)]
pub struct PeriodRecord {
    pub period: u64,
    /// Consumers scheduled to shift this period, ascending by id. Empty in
    /// punishment periods.
    pub active_set: Vec<usize>,
    /// Whether this period ran under punishment.
    pub punished: bool,
    pub actions: Vec<Arc<ConsumptionPattern>>,
    pub slot_loads: Vec<f64>,
    pub prices: Vec<f64>,
    /// True when the peak-slot load exceeded the threshold this period.
    pub breached: bool,
    pub stage_costs: Vec<f64>,
    pub discomforts: Vec<f64>,
    /// Consumers whose action differed from their recommendation.
    pub deviators: Vec<usize>,
    /// A deviation happened but the peak price stayed low, so the public
    /// signal did not move. No current policy produces one; the flag is
    /// diagnostic.
    pub quiet_deviation: bool,
}

/// A contiguous run of periods and the discount used to price them.
#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub records: Vec<PeriodRecord>,
    pub discount: f64,
}

/// Discounted cost of one consumer over a trace, split into its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscountedCost {
    pub total: f64,
    pub billing: f64,
    pub discomfort: f64,
    /// Upper bound on the discounted cost of everything after the trace,
    /// assuming stage costs stay no worse than the worst observed.
    pub tail_bound: f64,
}

impl SimulationTrace {
    pub fn periods(&self) -> usize {
        self.records.len()
    }

    /// Discounted cost of `consumer` over the recorded periods, relative to
    /// the first record.
    pub fn discounted_cost(&self, consumer: usize) -> DiscountedCost {
        let mut total = 0.0;
        let mut discomfort_part = 0.0;
        let mut weight = 1.0;
        let mut worst: f64 = 0.0;
        for record in &self.records {
            let stage = record.stage_costs[consumer];
            total += weight * stage;
            discomfort_part += weight * record.discomforts[consumer];
            worst = worst.max(stage);
            weight *= self.discount;
        }
        DiscountedCost {
            total,
            billing: total - discomfort_part,
            discomfort: discomfort_part,
            tail_bound: weight * worst / (1.0 - self.discount),
        }
    }

    /// Mean per-period stage cost of `consumer`, undiscounted.
    pub fn average_stage_cost(&self, consumer: usize) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.records.iter().map(|r| r.stage_costs[consumer]).sum();
        sum / self.records.len() as f64
    }
}

/// Picks the `shifter_count` consumers with the largest indices. Ties go to
/// the consumer scheduled least recently (never-scheduled first), then to
/// the lower id. The result is ascending by id.
pub fn select_active_set(
    indices: &[f64],
    shifter_count: usize,
    last_selected: &[Option<u64>],
) -> Vec<usize> {
    assert!(shifter_count <= indices.len());
    assert_eq!(indices.len(), last_selected.len());
    let mut order: Vec<usize> = (0..indices.len()).collect();
    order.sort_by(|&a, &b| {
        indices[b]
            .partial_cmp(&indices[a])
            .expect("indices are finite")
            .then_with(|| match (last_selected[a], last_selected[b]) {
                (None, None) => a.cmp(&b),
                (None, Some(_)) => std::cmp::Ordering::Less,
                (Some(_), None) => std::cmp::Ordering::Greater,
                (Some(ta), Some(tb)) => ta.cmp(&tb).then_with(|| a.cmp(&b)),
            })
    });
    let mut active = order[..shifter_count].to_vec();
    active.sort_unstable();
    active
}

/// Debits the scheduled consumers and renormalizes by the discount:
/// `g' = (g - (1 - discount) * scheduled) / discount`. Errors if any index
/// leaves `[0, cap]` by more than [`INDEX_TOL`], which means the discount is
/// too small to sustain the target frequencies.
///
/// Two discount conditions keep every trajectory inside the box. The floor
/// from [`exact_min_discount`](crate::exact_min_discount) protects the lower
/// edge: each scheduled index stays at least `1 - discount`. Caps below one
/// need `discount * cap >= m / (m + 1)` as well: an unscheduled index grows
/// by `1 / discount`, and only indices at or below `m / (m + 1)` can miss a
/// slot (anything larger must be among the `m` largest, or the sum would
/// exceed `m`), so that product bound stops an unscheduled index short of
/// its cap. Scheduled indices never overshoot a cap regardless of discount,
/// and an index at zero stays at zero and is never selected, so only the
/// caps of consumers who ever hold a positive index matter.
///
/// In exact arithmetic the update conserves the index sum whenever it equals
/// the number of scheduled consumers, which is the invariant the rotation
/// starts from and lives on. The division by the discount amplifies any
/// float rounding by `1/discount` per period, so after the bounds check the
/// result is rescaled to sum to `active.len()` exactly. The nudge is a
/// relative `1e-16` on well-formed states and keeps conservation at machine
/// precision over arbitrarily long horizons; without it the drift compounds
/// past usefulness within roughly `20 / (1 - discount)` periods.
pub fn update_indices(
    indices: &[f64],
    active: &[usize],
    discount: f64,
    caps: &[f64],
) -> Result<Vec<f64>, EngineError> {
    let mut next = indices.to_vec();
    for (consumer, value) in next.iter_mut().enumerate() {
        let scheduled = active.contains(&consumer);
        *value = (*value - if scheduled { 1.0 - discount } else { 0.0 }) / discount;
        let cap = caps[consumer];
        if *value < -INDEX_TOL || *value > cap + INDEX_TOL {
            return Err(EngineError::IndexOutOfBounds {
                consumer,
                value: *value,
                cap,
            });
        }
    }
    let target = active.len() as f64;
    let sum: f64 = next.iter().sum();
    if target > 0.0 && sum > 0.0 {
        let scale = target / sum;
        for value in &mut next {
            *value *= scale;
        }
    }
    Ok(next)
}

/// Prices a settled profile: returns the slot prices and whether the
/// peak-slot load breached the threshold.
pub fn settle_period(
    actions: &[&ConsumptionPattern],
    pricing: &PricingScheme,
) -> (Vec<f64>, bool) {
    let loads = slot_loads(actions);
    let breached = loads[pricing.peak_slot] > pricing.threshold + LOAD_EPS;
    let prices = slot_prices(&loads, pricing);
    (prices, breached)
}

/// One analytic incentive comparison for a consumer at the target costs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticIc {
    pub consumer: usize,
    /// Per-period cost of following forever at the target frequency.
    pub follow: f64,
    /// Per-period cost after triggering punishment.
    pub deviate: f64,
    pub gap: f64,
}

/// One simulated incentive comparison: a scheduled consumer at one period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcEntry {
    pub period: u64,
    pub consumer: usize,
    /// Discounted cost of complying from this period on (upper bound, tail
    /// included).
    pub follow: f64,
    /// Discounted cost of playing the desired pattern now and being punished
    /// forever after; the punishment tail is exact.
    pub deviate: f64,
    pub gap: f64,
}

/// Result of [`Engine::audit_ic`].
#[derive(Debug, Clone)]
pub struct IcAudit {
    pub analytic: Vec<AnalyticIc>,
    pub entries: Vec<IcEntry>,
    /// Periods simulated past the audit window to resolve follow costs.
    pub horizon: u64,
}

impl IcAudit {
    /// The entry with the smallest gap, if any deviation was audited.
    pub fn worst(&self) -> Option<&IcEntry> {
        self.entries
            .iter()
            .min_by(|a, b| a.gap.partial_cmp(&b.gap).expect("gaps are finite"))
    }

    /// Errors with the worst entry if any simulated gap is below `-tol`.
    pub fn require(&self, tol: f64) -> Result<(), EngineError> {
        match self.worst() {
            Some(entry) if entry.gap < -tol => Err(EngineError::NotIncentiveCompatible {
                consumer: entry.consumer,
                period: entry.period,
                follow: entry.follow,
                deviate: entry.deviate,
            }),
            _ => Ok(()),
        }
    }
}

/// A compiled scenario ready to simulate: per-consumer extreme costs, target
/// frequencies, and the two canonical actions (desired, minimum shift).
#[derive(Debug, Clone)]
pub struct Engine {
    population: Vec<ConsumerSpec>,
    pricing: PricingScheme,
    discount: f64,
    extremes: Vec<ExtremeCosts>,
    target: TargetCostVector,
    caps: Vec<f64>,
    desired: Vec<Arc<ConsumptionPattern>>,
    shifted: Vec<Arc<ConsumptionPattern>>,
}

impl Engine {
    pub fn new(scenario: &Scenario) -> Result<Engine, EngineError> {
        let extremes = population_extremes(&scenario.population, &scenario.pricing)?;
        let target = solve_target(&extremes, scenario.pricing.shifter_count)?;
        let caps: Vec<f64> = extremes.iter().map(|e| e.frequency_cap()).collect();
        let aggregate = crate::model::aggregate_desired(&scenario.population);
        let desired = scenario
            .population
            .iter()
            .map(|c| Arc::new(c.desired.clone()))
            .collect();
        let shifted = scenario
            .population
            .iter()
            .map(|c| Arc::new(min_shift_pattern(c, &scenario.pricing, &aggregate).pattern))
            .collect();
        Ok(Engine {
            population: scenario.population.clone(),
            pricing: scenario.pricing.clone(),
            discount: scenario.discount,
            extremes,
            target,
            caps,
            desired,
            shifted,
        })
    }

    pub fn consumers(&self) -> usize {
        self.population.len()
    }

    pub fn population(&self) -> &[ConsumerSpec] {
        &self.population
    }

    pub fn pricing(&self) -> &PricingScheme {
        &self.pricing
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn extremes(&self) -> &[ExtremeCosts] {
        &self.extremes
    }

    pub fn target(&self) -> &TargetCostVector {
        &self.target
    }

    /// Frequency cap `min(1, index cap)` per consumer.
    pub fn caps(&self) -> &[f64] {
        &self.caps
    }

    /// Fresh state with indices at the target frequencies.
    pub fn init_state(&self) -> EngineState {
        EngineState {
            game: GameState {
                period: 0,
                indices: self.target.indices.clone(),
                punished: false,
            },
            last_selected: vec![None; self.consumers()],
        }
    }

    /// Fresh state with custom starting indices. The sum must equal the
    /// shifter count and each index must sit inside its box.
    pub fn init_state_with(&self, indices: Vec<f64>) -> Result<EngineState, EngineError> {
        assert_eq!(indices.len(), self.consumers());
        let sum: f64 = indices.iter().sum();
        assert!(
            (sum - self.pricing.shifter_count as f64).abs() <= INDEX_TOL,
            "starting indices must sum to the shifter count, got {sum}"
        );
        for (consumer, &value) in indices.iter().enumerate() {
            let cap = self.caps[consumer];
            if value < -INDEX_TOL || value > cap + INDEX_TOL {
                return Err(EngineError::IndexOutOfBounds {
                    consumer,
                    value,
                    cap,
                });
            }
        }
        Ok(EngineState {
            game: GameState {
                period: 0,
                indices,
                punished: false,
            },
            last_selected: vec![None; self.consumers()],
        })
    }

    /// The pattern recommended to `consumer` given the period's active set.
    fn recommendation(&self, consumer: usize, active: &[usize], punished: bool) -> Arc<ConsumptionPattern> {
        if !punished && active.binary_search(&consumer).is_ok() {
            Arc::clone(&self.shifted[consumer])
        } else {
            Arc::clone(&self.desired[consumer])
        }
    }

    /// Advances the game one period and records what happened.
    pub fn step(
        &self,
        state: &mut EngineState,
        policy: &AgentPolicy,
    ) -> Result<PeriodRecord, EngineError> {
        let period = state.game.period;
        let punished = state.game.punished;
        let active = if punished {
            Vec::new()
        } else {
            select_active_set(
                &state.game.indices,
                self.pricing.shifter_count,
                &state.last_selected,
            )
        };

        let mut actions: Vec<Arc<ConsumptionPattern>> = (0..self.consumers())
            .map(|i| self.recommendation(i, &active, punished))
            .collect();
        match *policy {
            AgentPolicy::Compliant => {}
            AgentPolicy::OneShotDeviator { consumer, period: at } => {
                if at == period {
                    actions[consumer] = Arc::clone(&self.desired[consumer]);
                }
            }
            AgentPolicy::MyopicBestResponse { consumer } => {
                let recommended = self.stage_cost_of(&actions, consumer);
                let mut tempted = actions.clone();
                tempted[consumer] = Arc::clone(&self.desired[consumer]);
                if self.stage_cost_of(&tempted, consumer) < recommended {
                    actions = tempted;
                }
            }
        }

        let refs: Vec<&ConsumptionPattern> = actions.iter().map(Arc::as_ref).collect();
        let loads = slot_loads(&refs);
        let breached = loads[self.pricing.peak_slot] > self.pricing.threshold + LOAD_EPS;
        let prices = slot_prices(&loads, &self.pricing);

        let mut stage_costs = Vec::with_capacity(self.consumers());
        let mut discomforts = Vec::with_capacity(self.consumers());
        for (consumer, action) in actions.iter().enumerate() {
            let billing: f64 = action
                .iter()
                .zip(&prices)
                .map(|(load, price)| load * price)
                .sum();
            let pain = discomfort(action, &self.population[consumer]);
            stage_costs.push(billing + pain);
            discomforts.push(pain);
        }

        let deviators: Vec<usize> = (0..self.consumers())
            .filter(|&i| !Arc::ptr_eq(&actions[i], &self.recommendation(i, &active, punished)))
            .collect();
        let quiet_deviation = !deviators.is_empty() && !breached;

        if !punished {
            if breached {
                state.game.punished = true;
            } else {
                state.game.indices =
                    update_indices(&state.game.indices, &active, self.discount, &self.caps)?;
            }
            for &consumer in &active {
                state.last_selected[consumer] = Some(period);
            }
        }
        state.game.period = period + 1;

        Ok(PeriodRecord {
            period,
            active_set: active,
            punished,
            actions,
            slot_loads: loads,
            prices,
            breached,
            stage_costs,
            discomforts,
            deviators,
            quiet_deviation,
        })
    }

    fn stage_cost_of(&self, actions: &[Arc<ConsumptionPattern>], consumer: usize) -> f64 {
        let refs: Vec<&ConsumptionPattern> = actions.iter().map(Arc::as_ref).collect();
        crate::model::stage_cost(&refs, &self.pricing, &self.population[consumer], consumer)
    }

    /// Runs `periods` steps and collects the records.
    ///
    /// The index recursion divides by the discount every period, which would
    /// amplify float rounding by `1/discount` per period; [`update_indices`]
    /// counters this by rescaling the index sum onto its conserved value, so
    /// arbitrarily long horizons keep both the per-index bounds and the sum
    /// conservation at full precision.
    pub fn run(
        &self,
        state: &mut EngineState,
        periods: u64,
        policy: &AgentPolicy,
    ) -> Result<SimulationTrace, EngineError> {
        let mut records = Vec::with_capacity(periods as usize);
        for _ in 0..periods {
            records.push(self.step(state, policy)?);
        }
        Ok(SimulationTrace {
            records,
            discount: self.discount,
        })
    }

    /// Audits incentive compatibility over the first `window` periods.
    ///
    /// Analytically, following pays the per-period target cost forever and
    /// deviating pays the static-equilibrium cost forever, so the audit
    /// first reports those per consumer. It then cross-checks by simulation:
    /// one compliant run long enough that the unresolved tail is below
    /// [`AUDIT_RESOLUTION`] prices the follow branch from every window
    /// period, and for each consumer scheduled at a window period the
    /// deviation branch is actually played out (deviate, get punished) for a
    /// few periods, after which the punishment tail is summed exactly. The
    /// deviation branch simulation also verifies punishment is absorbing.
    pub fn audit_ic(&self, state: &EngineState, window: u64) -> Result<IcAudit, EngineError> {
        let delta = self.discount;
        let worst_stage: f64 = self
            .extremes
            .iter()
            .map(|e| e.shift_cost.max(e.ne_cost))
            .fold(0.0, f64::max);
        // Simulate far enough past the window that the follow-branch tail
        // bound resolves below AUDIT_RESOLUTION.
        let tail_target = AUDIT_RESOLUTION * (1.0 - delta) / worst_stage.max(1e-300);
        let extra = (tail_target.ln() / delta.ln()).ceil().max(1.0) as u64;
        let horizon = window + extra;

        let analytic = self
            .target
            .costs
            .iter()
            .zip(&self.extremes)
            .enumerate()
            .map(|(consumer, (&follow, extreme))| AnalyticIc {
                consumer,
                follow,
                deviate: extreme.ne_cost,
                gap: extreme.ne_cost - follow,
            })
            .collect();

        let mut base_state = state.clone();
        let compliant = self.run(&mut base_state, horizon, &AgentPolicy::Compliant)?;

        // Discounted suffix cost per consumer, computed backwards:
        // suffix[t] = stage[t] + delta * suffix[t + 1].
        let n = self.consumers();
        let mut suffix = vec![0.0; n];
        let mut suffixes = vec![vec![0.0; n]; compliant.records.len()];
        for (t, record) in compliant.records.iter().enumerate().rev() {
            for i in 0..n {
                suffix[i] = record.stage_costs[i] + delta * suffix[i];
            }
            suffixes[t].copy_from_slice(&suffix);
        }

        let mut entries = Vec::new();
        let mut window_state = state.clone();
        for tau in 0..window {
            if window_state.game.punished {
                break;
            }
            let record_active = select_active_set(
                &window_state.game.indices,
                self.pricing.shifter_count,
                &window_state.last_selected,
            );
            for &consumer in &record_active {
                let ne = self.extremes[consumer].ne_cost;
                let follow_tail =
                    delta.powi((horizon - tau) as i32) * self.extremes[consumer].shift_cost.max(ne)
                        / (1.0 - delta);
                let follow = suffixes[tau as usize][consumer] + follow_tail;

                // Play the deviation out to confirm the punishment path.
                let mut branch = window_state.clone();
                let policy = AgentPolicy::OneShotDeviator {
                    consumer,
                    period: tau,
                };
                let sim_periods = 8u64;
                let mut deviate = 0.0;
                let mut weight = 1.0;
                for k in 0..sim_periods {
                    let record = self.step(&mut branch, &policy)?;
                    if k == 0 {
                        if !record.breached || !record.deviators.contains(&consumer) {
                            return Err(EngineError::PunishmentEscaped { period: tau });
                        }
                    } else if !record.punished
                        || (record.stage_costs[consumer] - ne).abs() > 1e-9
                    {
                        return Err(EngineError::PunishmentEscaped {
                            period: tau + k,
                        });
                    }
                    deviate += weight * record.stage_costs[consumer];
                    weight *= delta;
                }
                deviate += weight * ne / (1.0 - delta);

                entries.push(IcEntry {
                    period: tau,
                    consumer,
                    follow,
                    deviate,
                    gap: deviate - follow,
                });
            }
            self.step(&mut window_state, &AgentPolicy::Compliant)?;
        }

        Ok(IcAudit {
            analytic,
            entries,
            horizon,
        })
    }
}
