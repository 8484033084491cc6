use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use stplan::io::{write_json, write_text};
use stplan::synth::{synth_trace, Preset, SynthConfig};
use stplan::{
    compare, parse_trace, plan_trace, read_plan, render_svg, run_baseline, simulate, write_plan, write_trace, Error,
    ErrorKind, PlanStats, PlannerOptions, SimOptions, SimReport,
};

/// Spatio-temporal memory planner and allocator simulator.
#[derive(Parser)]
#[command(name = "stplan", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic training trace.
    Gen {
        #[arg(long, default_value = "dense")]
        preset: Preset,
        #[arg(long)]
        layers: Option<u32>,
        #[arg(long)]
        microbatches: Option<u32>,
        /// Virtual-pipeline chunks (VPP presets only).
        #[arg(long)]
        chunks: Option<u32>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        transient_ratio: Option<f64>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Build a static plan and reuse map for a trace.
    Plan {
        trace: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Where to write planner statistics (default: <output stem>.stats.json).
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long)]
        no_fusion: bool,
        #[arg(long)]
        no_gap_insert: bool,
    },
    /// Replay a trace against a plan.
    Simulate {
        trace: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        no_reuse: bool,
        #[arg(short, long)]
        output: PathBuf,
        /// Optional JSONL replay log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Replay a trace through the caching-allocator baseline.
    Baseline {
        trace: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run planner and baseline on the same trace.
    Compare {
        trace: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        no_reuse: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Draw a plan as an address-versus-time SVG.
    Render {
        plan: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Serialize)]
struct StatsSidecar<'a> {
    #[serde(flatten)]
    stats: &'a PlanStats,
    fusion: bool,
    gap_insert: bool,
    wall_time_ms: f64,
}

fn stats_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().and_then(|s| s.to_str()).unwrap_or("plan");
    output.with_file_name(format!("{stem}.stats.json"))
}

fn table(rows: &[(&str, String)]) {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in rows {
        println!("{k:<width$}  {v}");
    }
}

fn report_rows(r: &SimReport) -> Vec<(&'static str, String)> {
    vec![
        ("M_a", r.m_a.to_string()),
        ("M_r", r.m_r.to_string()),
        ("efficiency", format!("{:.4}", r.efficiency)),
        ("fragmentation", format!("{:.4}", r.fragmentation)),
        ("fallback_count", r.fallback_count.to_string()),
        ("fallback_bytes_peak", r.fallback_bytes_peak.to_string()),
        ("reuse_hits", r.reuse_hits.to_string()),
        ("mismatch_count", r.mismatch_count.to_string()),
    ]
}

fn run(cli: Cli) -> stplan::Result<()> {
    match cli.command {
        Command::Gen {
            preset,
            layers,
            microbatches,
            chunks,
            seed,
            transient_ratio,
            output,
        } => {
            let mut cfg = SynthConfig::preset(preset).with_seed(seed);
            if let Some(l) = layers {
                cfg.num_layers = l;
            }
            if let Some(m) = microbatches {
                cfg.num_microbatches = m;
            }
            if let Some(c) = chunks {
                cfg.num_chunks = c;
            }
            if let Some(r) = transient_ratio {
                cfg.transient_ratio = r;
            }
            let trace = synth_trace(&cfg)?;
            write_trace(&trace, &output)?;
            table(&[
                ("preset", preset.to_string()),
                ("events", trace.events.len().to_string()),
                ("dynamic", trace.dynamic_events().count().to_string()),
                ("horizon", trace.horizon.to_string()),
                ("lower_bound", stplan::clique_lower_bound(&trace).to_string()),
            ]);
        }
        Command::Plan {
            trace,
            output,
            stats,
            no_fusion,
            no_gap_insert,
        } => {
            let trace = parse_trace(&trace)?;
            let opts = PlannerOptions {
                fusion: !no_fusion,
                gap_insert: !no_gap_insert,
                ..Default::default()
            };
            let start = Instant::now();
            let planned = plan_trace(&trace, opts)?;
            let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
            let report = stplan::planner::validate_blocks(planned.bundle.pool_size, &planned.bundle.decisions);
            if !report.is_valid() {
                return Err(Error::Invariant(format!(
                    "plan has {} conflicting pairs and {} out-of-pool decisions",
                    report.conflicts.len(),
                    report.out_of_pool.len()
                )));
            }
            write_plan(&planned.bundle, &output)?;
            let sidecar = StatsSidecar {
                stats: &planned.stats,
                fusion: opts.fusion,
                gap_insert: opts.gap_insert,
                wall_time_ms,
            };
            write_json(&sidecar, stats.unwrap_or_else(|| stats_path(&output)))?;
            let s = &planned.stats;
            table(&[
                ("static_events", s.static_events.to_string()),
                ("pool_size", s.pool_size.to_string()),
                ("lower_bound", s.lower_bound.to_string()),
                ("efficiency", format!("{:.4}", s.efficiency)),
                ("layers", s.layers.to_string()),
                (
                    "fusions",
                    format!("{} accepted, {} rejected", s.fusions_accepted, s.fusions_rejected),
                ),
                ("reuse_keys", planned.bundle.reuse.len().to_string()),
                ("wall_time_ms", format!("{wall_time_ms:.1}")),
            ]);
        }
        Command::Simulate {
            trace,
            plan,
            no_reuse,
            output,
            log,
        } => {
            let trace = parse_trace(&trace)?;
            let bundle = read_plan(&plan)?;
            let outcome = simulate(&trace, &bundle, SimOptions { reuse: !no_reuse })?;
            write_json(&outcome.report, &output)?;
            if let Some(path) = log {
                let mut text = String::new();
                for e in &outcome.log.entries {
                    text.push_str(&serde_json::to_string(e).expect("log entry serializes"));
                    text.push('\n');
                }
                write_text(path, &text)?;
            }
            table(&report_rows(&outcome.report));
        }
        Command::Baseline { trace, output } => {
            let trace = parse_trace(&trace)?;
            let outcome = run_baseline(&trace)?;
            write_json(&outcome.report, &output)?;
            table(&report_rows(&outcome.report));
        }
        Command::Compare {
            trace,
            plan,
            no_reuse,
            output,
        } => {
            let trace = parse_trace(&trace)?;
            let bundle = read_plan(&plan)?;
            let report = compare(&trace, &bundle, SimOptions { reuse: !no_reuse })?;
            write_json(&report, &output)?;
            println!("{:<22}{:>16}{:>16}", "", "planner", "baseline");
            for ((k, p), (_, b)) in report_rows(&report.planner)
                .into_iter()
                .zip(report_rows(&report.baseline))
            {
                println!("{k:<22}{p:>16}{b:>16}");
            }
            let reduction = report
                .fragmentation_reduction
                .map_or_else(|| "n/a".to_string(), |r| format!("{:.1}%", r * 100.0));
            table(&[
                ("fragmentation_reduction", reduction),
                (
                    "memory_saved",
                    format!(
                        "{} bytes ({:.1}%)",
                        report.memory_saved_bytes,
                        report.memory_saved_ratio * 100.0
                    ),
                ),
            ]);
        }
        Command::Render { plan, trace, output } => {
            let bundle = read_plan(&plan)?;
            let trace = trace.map(|t| parse_trace(&t)).transpose()?;
            write_text(&output, &render_svg(&bundle, trace.as_ref()))?;
            table(&[
                ("decisions", bundle.decisions.len().to_string()),
                ("output", output.display().to_string()),
            ]);
        }
    }
    Ok(())
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    eprintln!(
        "{}",
        serde_json::json!({ "error": { "kind": kind, "message": message } })
    );
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STPLAN_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("validation", e.to_string(), 1),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = match e.kind() {
                ErrorKind::Validation => ("validation", 1),
                ErrorKind::Io => ("io", 2),
                ErrorKind::Internal => ("internal", 3),
            };
            log::debug!("{e:?}");
            fail(kind, e.to_string(), code)
        }
    }
}
