//! Command-line front end: load a scenario file, run one of the analyses,
//! and write a CSV table or JSONL trace.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;

use peakshift::engine::{AgentPolicy, Engine};
use peakshift::metrics::{compare, convergence_diag, fairness_report};
use peakshift::pareto::{exact_min_discount, min_discount, population_extremes, solve_target};
use peakshift::report::{
    sig6, write_comparison_csv, write_extremes_csv, write_ic_csv, write_target_csv,
    write_trace_jsonl, DiscountBounds,
};
use peakshift::scenario::{compile, load_document, PopulationDoc, Scenario, ScenarioDocument};

#[derive(Parser)]
#[command(
    name = "peakshift",
    version,
    about = "Rotation-based peak-load scheduling under a critical-peak tariff"
)]
struct Cli {
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Override the scenario's simulation horizon.
    #[arg(long, global = true)]
    horizon: Option<u64>,
    /// Override the scenario's discount factor.
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Override the population generator seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout if omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the engine and write one JSONL record per period.
    Simulate {
        /// Consumer that plays its desired pattern once.
        #[arg(long, requires = "deviate_at")]
        deviator: Option<usize>,
        /// Period of that one-shot deviation.
        #[arg(long, requires = "deviator")]
        deviate_at: Option<u64>,
    },
    /// Write the per-consumer extreme costs and scheduling caps.
    Pareto,
    /// Write the target frequencies, costs, and discomfort-cap checks.
    SolveTarget,
    /// Price every mechanism; optionally cross-check the rotation row by
    /// simulation.
    Compare {
        /// Simulate the rotation mechanism for this many periods.
        #[arg(long)]
        sim_periods: Option<u64>,
    },
    /// Audit incentive compatibility over the first periods of the run.
    /// Exits non-zero if any simulated deviation beats compliance.
    AuditIc {
        /// Number of leading periods whose scheduled consumers are audited.
        #[arg(long, default_value_t = 200)]
        window: u64,
    },
    /// Re-price the mechanisms across population sizes and reduction goals.
    Sweep {
        /// Population sizes, comma separated; each is spread across the
        /// scenario's household types proportionally.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        /// Peak reduction goals, comma separated.
        #[arg(long, value_delimiter = ',')]
        goals: Vec<f64>,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();

    let path = cli
        .scenario
        .as_ref()
        .ok_or_else(|| anyhow!("--scenario <file> is required"))?;
    let mut doc = load_document(path)
        .with_context(|| format!("loading scenario {}", path.display()))?;
    apply_overrides(&mut doc, &cli)?;
    let scenario = compile(&doc).context("invalid scenario")?;

    let mut out: BufWriter<Box<dyn Write>> = BufWriter::new(match &cli.out {
        Some(path) => Box::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        ),
        None => Box::new(io::stdout()),
    });

    match cli.command {
        Command::Simulate {
            deviator,
            deviate_at,
        } => simulate(&scenario, deviator.zip(deviate_at), &mut out)?,
        Command::Pareto => {
            let extremes = population_extremes(&scenario.population, &scenario.pricing)?;
            write_extremes_csv(&mut out, &extremes, &scenario.fingerprint)?;
        }
        Command::SolveTarget => {
            let extremes = population_extremes(&scenario.population, &scenario.pricing)?;
            let target = solve_target(&extremes, scenario.pricing.shifter_count)?;
            let fairness = fairness_report(&scenario)?;
            let caps: Vec<f64> = extremes.iter().map(|e| e.frequency_cap()).collect();
            let m = scenario.pricing.shifter_count;
            // Households the target never schedules keep a zero index forever
            // and never face their caps, so the upper edge only binds over
            // the scheduled support.
            let min_cap = caps
                .iter()
                .zip(&target.indices)
                .filter(|&(_, &index)| index > 0.0)
                .map(|(&cap, _)| cap.min(1.0))
                .fold(f64::INFINITY, f64::min);
            let bounds = DiscountBounds {
                floor: min_discount(scenario.consumers(), m),
                floor_exact: exact_min_discount(&caps, m),
                upper_edge: m as f64 / ((m as f64 + 1.0) * min_cap),
            };
            write_target_csv(&mut out, &target, &fairness, bounds)?;
            if !fairness.all_within_caps {
                eprintln!("note: some consumers exceed their discomfort caps");
            }
        }
        Command::Compare { sim_periods } => {
            let table = compare(&scenario, sim_periods)?;
            write_comparison_csv(&mut out, &table)?;
        }
        Command::AuditIc { window } => {
            let engine = Engine::new(&scenario)?;
            let state = engine.init_state();
            let audit = engine.audit_ic(&state, window)?;
            write_ic_csv(&mut out, &audit, &scenario.fingerprint)?;
            out.flush()?;
            if let Some(worst) = audit.worst() {
                eprintln!(
                    "audited {} deviations over {} periods; worst gap {}",
                    audit.entries.len(),
                    window,
                    sig6(worst.gap)
                );
            }
            audit
                .require(1e-7)
                .map_err(|e| anyhow!("{e}"))
                .context("the recommendation is not incentive compatible")?;
        }
        Command::Sweep { sizes, goals } => sweep(&doc, sizes, goals, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn apply_overrides(doc: &mut ScenarioDocument, cli: &Cli) -> Result<()> {
    if let Some(horizon) = cli.horizon {
        eprintln!("note: horizon overridden to {horizon}");
        doc.horizon = horizon;
    }
    if let Some(delta) = cli.delta {
        eprintln!("note: discount overridden to {delta}");
        doc.discount = delta;
    }
    if let Some(seed) = cli.seed {
        match &mut doc.population {
            PopulationDoc::Generated(spec) => {
                eprintln!("note: generator seed overridden to {seed}");
                spec.seed = seed;
            }
            PopulationDoc::Explicit(_) => {
                bail!("--seed only applies to generated populations")
            }
        }
    }
    Ok(())
}

fn simulate(
    scenario: &Scenario,
    deviation: Option<(usize, u64)>,
    out: &mut impl Write,
) -> Result<()> {
    let engine = Engine::new(scenario)?;
    let mut state = engine.init_state();
    let policy = match deviation {
        Some((consumer, period)) => {
            if consumer >= scenario.consumers() {
                bail!("deviator {consumer} out of range");
            }
            AgentPolicy::OneShotDeviator { consumer, period }
        }
        None => AgentPolicy::Compliant,
    };
    let initial = state.game.indices.clone();
    let trace = engine.run(&mut state, scenario.horizon, &policy)?;
    write_trace_jsonl(out, &trace, &scenario.fingerprint)?;

    let breaches = trace.records.iter().filter(|r| r.breached).count();
    if breaches == 0 {
        let diag = convergence_diag(&trace.records, &initial, scenario.discount);
        eprintln!(
            "{} compliant periods; selection frequencies settled within {} of the targets",
            trace.periods(),
            sig6(diag.max_gap)
        );
    } else {
        eprintln!(
            "{} periods, {} at the peak price after the first breach",
            trace.periods(),
            breaches
        );
    }
    Ok(())
}

/// Largest-remainder split of `total` across the base counts' proportions.
fn scaled_counts(base: [usize; 3], total: usize) -> [usize; 3] {
    let base_total: usize = base.iter().sum();
    let mut counts = [0usize; 3];
    let mut remainders: Vec<(usize, f64)> = Vec::new();
    let mut assigned = 0;
    for (i, &b) in base.iter().enumerate() {
        let exact = total as f64 * b as f64 / base_total as f64;
        counts[i] = exact.floor() as usize;
        assigned += counts[i];
        remainders.push((i, exact - exact.floor()));
    }
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for &(i, _) in remainders.iter().take(total - assigned) {
        counts[i] += 1;
    }
    counts
}

fn sweep(
    doc: &ScenarioDocument,
    sizes: Vec<usize>,
    goals: Vec<f64>,
    out: &mut impl Write,
) -> Result<()> {
    let base = match &doc.population {
        PopulationDoc::Generated(spec) => [spec.counts.type1, spec.counts.type2, spec.counts.type3],
        PopulationDoc::Explicit(_) => bail!("sweep needs a generated population"),
    };
    if sizes.is_empty() && goals.is_empty() {
        bail!("nothing to sweep: pass --sizes and/or --goals");
    }
    if doc.par_goal.is_none() && !goals.is_empty() {
        bail!("--goals needs a scenario with par_goal");
    }

    let size_axis: Vec<Option<usize>> = if sizes.is_empty() {
        vec![None]
    } else {
        sizes.into_iter().map(Some).collect()
    };
    let goal_axis: Vec<Option<f64>> = if goals.is_empty() {
        vec![None]
    } else {
        goals.into_iter().map(Some).collect()
    };
    let points: Vec<(Option<usize>, Option<f64>)> = size_axis
        .iter()
        .flat_map(|&s| goal_axis.iter().map(move |&g| (s, g)))
        .collect();

    let tables: Vec<Result<(usize, f64, peakshift::metrics::ComparisonTable)>> = points
        .par_iter()
        .map(|&(size, goal)| {
            let mut point_doc = doc.clone();
            if let (Some(goal), Some(_)) = (goal, point_doc.par_goal) {
                point_doc.par_goal = Some(goal);
            }
            if let (Some(size), PopulationDoc::Generated(spec)) =
                (size, &mut point_doc.population)
            {
                let scaled = scaled_counts(base, size);
                spec.counts.type1 = scaled[0];
                spec.counts.type2 = scaled[1];
                spec.counts.type3 = scaled[2];
            }
            let scenario = compile(&point_doc)
                .with_context(|| format!("sweep point size={size:?} goal={goal:?}"))?;
            let table = compare(&scenario, None)?;
            Ok((scenario.consumers(), point_doc.par_goal.unwrap_or(0.0), table))
        })
        .collect();

    writeln!(
        out,
        "households,par_goal,mechanism,total_cost,total_discomfort,peak_load,par,scenario"
    )?;
    for table in tables {
        let (n, goal, table) = table?;
        for row in &table.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                n,
                sig6(goal),
                row.mechanism,
                sig6(row.total_cost),
                sig6(row.total_discomfort),
                sig6(row.peak_load),
                sig6(row.par),
                table.fingerprint
            )?;
        }
    }
    Ok(())
}
