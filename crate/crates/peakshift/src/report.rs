//! CSV tables and JSONL traces.
//!
//! Every table row ends with the scenario fingerprint so a saved file can
//! always be traced back to the exact inputs that produced it. Numbers are
//! written with six significant digits.

use std::io::{self, Write};

use serde_json::json;

use crate::engine::{IcAudit, SimulationTrace};
use crate::metrics::{ComparisonTable, FairnessReport};
use crate::pareto::{ExtremeCosts, TargetCostVector};

/// Formats with six significant digits, trailing zeros trimmed.
pub fn sig6(value: f64) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    let magnitude = value.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    let mut text = format!("{value:.decimals$}");
    if text.contains('.') {
        while text.ends_with('0') {
            text.pop();
        }
        if text.ends_with('.') {
            text.pop();
        }
    }
    text
}

fn optional(value: Option<f64>) -> String {
    value.map(sig6).unwrap_or_default()
}

/// One row per mechanism.
pub fn write_comparison_csv<W: Write>(
    writer: &mut W,
    table: &ComparisonTable,
) -> io::Result<()> {
    writeln!(
        writer,
        "mechanism,total_cost,total_discomfort,peak_load,par,simulated_total,sim_gap,scenario"
    )?;
    for row in &table.rows {
        writeln!(
            writer,
            "{},{},{},{},{},{},{},{}",
            row.mechanism,
            sig6(row.total_cost),
            sig6(row.total_discomfort),
            sig6(row.peak_load),
            sig6(row.par),
            optional(row.simulated_total),
            optional(row.sim_gap),
            table.fingerprint
        )?;
    }
    Ok(())
}

/// One row per consumer: the four extreme costs and the scheduling cap.
pub fn write_extremes_csv<W: Write>(
    writer: &mut W,
    extremes: &[ExtremeCosts],
    fingerprint: &str,
) -> io::Result<()> {
    writeln!(
        writer,
        "consumer,base_cost,shift_cost,ne_cost,cap_cost,shift_discomfort,frequency_cap,split_shift,scenario"
    )?;
    for (consumer, extreme) in extremes.iter().enumerate() {
        writeln!(
            writer,
            "{},{},{},{},{},{},{},{},{}",
            consumer,
            sig6(extreme.base_cost),
            sig6(extreme.shift_cost),
            sig6(extreme.ne_cost),
            sig6(extreme.cap_cost),
            sig6(extreme.shift_discomfort()),
            sig6(extreme.frequency_cap()),
            extreme.split_shift,
            fingerprint
        )?;
    }
    Ok(())
}

/// One row per consumer: target frequency, cost, and the discomfort-cap
/// check, plus the scenario-level discount bounds repeated on every row.
/// `discount_floor` is the closed-form lower-edge bound, `discount_floor_exact`
/// the sharp one for the actual caps, and `discount_upper_edge` the product
/// bound `m / ((m + 1) * min scheduled cap)` that keeps capped consumers
/// inside their caps while they wait to be scheduled. Consumers the target
/// never schedules hold a zero index forever, so their caps are excluded.
pub fn write_target_csv<W: Write>(
    writer: &mut W,
    target: &TargetCostVector,
    fairness: &FairnessReport,
    bounds: DiscountBounds,
) -> io::Result<()> {
    writeln!(
        writer,
        "consumer,frequency,target_cost,shift_discomfort,expected_discomfort,discomfort_cap,within_cap,discount_floor,discount_floor_exact,discount_upper_edge,scenario"
    )?;
    for row in &fairness.rows {
        writeln!(
            writer,
            "{},{},{},{},{},{},{},{},{},{},{}",
            row.consumer,
            sig6(target.indices[row.consumer]),
            sig6(target.costs[row.consumer]),
            sig6(row.shift_discomfort),
            sig6(row.expected_discomfort),
            sig6(row.discomfort_cap),
            row.within_cap,
            sig6(bounds.floor),
            sig6(bounds.floor_exact),
            sig6(bounds.upper_edge),
            fairness.fingerprint
        )?;
    }
    Ok(())
}

/// The discount-factor conditions a schedule needs, precomputed for output.
#[derive(Debug, Clone, Copy)]
pub struct DiscountBounds {
    /// Closed-form lower-edge bound `1 - 1/(n - m + 1)`.
    pub floor: f64,
    /// Sharp lower-edge bound for the actual frequency caps.
    pub floor_exact: f64,
    /// Upper-edge product bound `m / ((m + 1) * min scheduled cap)`; only
    /// binding when some scheduled consumer's cap is below one.
    pub upper_edge: f64,
}

/// Analytic rows (one per consumer, empty period) followed by simulated
/// rows (one per audited deviation).
pub fn write_ic_csv<W: Write>(
    writer: &mut W,
    audit: &IcAudit,
    fingerprint: &str,
) -> io::Result<()> {
    writeln!(writer, "kind,period,consumer,follow,deviate,gap,scenario")?;
    for row in &audit.analytic {
        writeln!(
            writer,
            "analytic,,{},{},{},{},{}",
            row.consumer,
            sig6(row.follow),
            sig6(row.deviate),
            sig6(row.gap),
            fingerprint
        )?;
    }
    for entry in &audit.entries {
        writeln!(
            writer,
            "simulated,{},{},{},{},{},{}",
            entry.period,
            entry.consumer,
            sig6(entry.follow),
            sig6(entry.deviate),
            sig6(entry.gap),
            fingerprint
        )?;
    }
    Ok(())
}

/// One JSON object per period. Full consumption patterns are omitted; the
/// per-slot aggregate loads and per-consumer costs carry the useful signal
/// at a fraction of the size.
pub fn write_trace_jsonl<W: Write>(
    writer: &mut W,
    trace: &SimulationTrace,
    fingerprint: &str,
) -> io::Result<()> {
    for record in &trace.records {
        let line = json!({
            "period": record.period,
            "active_set": record.active_set,
            "punished": record.punished,
            "breached": record.breached,
            "slot_loads": record.slot_loads,
            "prices": record.prices,
            "stage_costs": record.stage_costs,
            "discomforts": record.discomforts,
            "deviators": record.deviators,
            "scenario": fingerprint,
        });
        writeln!(writer, "{line}")?;
    }
    Ok(())
}
