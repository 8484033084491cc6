//! End-to-end helpers: plan a trace, compare the planner with the baseline.

use serde::Serialize;

use crate::baseline::run_baseline;
use crate::error::Result;
use crate::io::PlanBundle;
use crate::model::Trace;
use crate::planner::{synthesize_static_plan, PlanStats, PlannerOptions, StaticPlan};
use crate::reuse::derive_reuse_map;
use crate::sim::{simulate, SimOptions, SimReport};

#[derive(Debug, Clone)]
pub struct Planned {
    pub plan: StaticPlan,
    pub bundle: PlanBundle,
    pub stats: PlanStats,
}

/// Plans the static events and derives the reuse map for the dynamic ones.
pub fn plan_trace(trace: &Trace, opts: PlannerOptions) -> Result<Planned> {
    let (plan, stats) = synthesize_static_plan(trace, opts)?;
    let blocks = plan.blocks();
    let reuse = derive_reuse_map(&blocks, trace)?;
    let bundle = PlanBundle::new(&plan, reuse);
    Ok(Planned { plan, bundle, stats })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub planner: SimReport,
    pub baseline: SimReport,
    /// `1 - frag_planner / frag_baseline`; absent when the baseline has no
    /// fragmentation but the planner does.
    pub fragmentation_reduction: Option<f64>,
    /// Baseline reserved minus planner reserved (negative if the planner loses).
    pub memory_saved_bytes: i64,
    /// `memory_saved_bytes / baseline M_r`.
    pub memory_saved_ratio: f64,
}

pub fn compare_reports(planner: SimReport, baseline: SimReport) -> CompareReport {
    let fragmentation_reduction = if baseline.fragmentation > 0.0 {
        Some(1.0 - planner.fragmentation / baseline.fragmentation)
    } else if planner.fragmentation > 0.0 {
        None
    } else {
        Some(0.0)
    };
    let memory_saved_bytes = baseline.m_r as i64 - planner.m_r as i64;
    let memory_saved_ratio = if baseline.m_r == 0 {
        0.0
    } else {
        memory_saved_bytes as f64 / baseline.m_r as f64
    };
    CompareReport {
        planner,
        baseline,
        fragmentation_reduction,
        memory_saved_bytes,
        memory_saved_ratio,
    }
}

/// Simulates `trace` against `bundle` and against the baseline, in parallel.
pub fn compare(trace: &Trace, bundle: &PlanBundle, opts: SimOptions) -> Result<CompareReport> {
    let (planner, baseline) = std::thread::scope(|s| {
        let base = s.spawn(|| run_baseline(trace));
        let planner = simulate(trace, bundle, opts);
        (planner, base.join().expect("baseline thread panicked"))
    });
    Ok(compare_reports(planner?.report, baseline?.report))
}
