//! Peak-shaving demand scheduling as a repeated game.
//!
//! Households face a two-level critical-peak tariff: a slot whose aggregate
//! load exceeds a threshold is billed at the peak price. Clearing the peak
//! needs only `m` of the `n` households to reschedule their shiftable load
//! each period, so the interesting question is who shifts, how often, and
//! what makes them keep doing it. This crate models the stage game
//! ([`model`]), maps the achievable long-run cost region ([`pareto`]), runs
//! the rotation mechanism that enforces a chosen cost target through a
//! price-triggered punishment ([`engine`]), and compares it against
//! stationary alternatives ([`baselines`], [`metrics`]). Scenario files and
//! table output live in [`scenario`] and [`report`].

pub mod baselines;
pub mod engine;
pub mod metrics;
pub mod model;
pub mod pareto;
pub mod report;
pub mod scenario;

pub use baselines::{run_baseline, BaselineError, BaselineResult, Mechanism};
pub use metrics::{
    compare, convergence_diag, fairness_report, ComparisonTable, FairnessReport, MetricsError,
};

pub use engine::{
    select_active_set, settle_period, update_indices, AgentPolicy, Engine, EngineError,
    EngineState, GameState, IcAudit, PeriodRecord, SimulationTrace,
};
pub use model::{
    classify, discomfort, price_at_slot, required_shifters, stage_cost, ConsumerClass,
    ConsumerSpec, ConsumptionPattern, ModelError, PricingScheme,
};
pub use pareto::{
    exact_min_discount, extreme_costs, min_discount, min_shift_pattern, pareto_membership,
    population_extremes, solve_target, ExtremeCosts, ParetoError, ParetoMembership,
    TargetCostVector,
};
pub use scenario::{
    compile, fingerprint, load_document, load_scenario, Scenario, ScenarioDocument, ScenarioError,
};
