//! Spatio-temporal memory planning for training traces.
//!
//! Static requests are planned offline into a single pool; dynamic requests
//! reuse the pool's idle space at runtime; everything else falls back to a
//! caching allocator. The crate also ships a synthetic trace generator and a
//! baseline caching-allocator model to compare against.

pub mod baseline;
pub mod error;
pub mod interval;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod planner;
pub mod render;
pub mod reuse;
pub mod sim;
pub mod synth;

pub use baseline::{run_baseline, CachingAllocator};
pub use error::{Error, ErrorKind, Result};
pub use interval::{Interval, IntervalSet};
pub use io::{parse_trace, read_plan, write_plan, write_trace, PlanBundle, PlannedBlock, RawOpRecord};
pub use model::{clique_lower_bound, AllocationDecision, MemoryRequestEvent, PhaseId, PhaseKind, Trace};
pub use pipeline::{compare, compare_reports, plan_trace, CompareReport, Planned};
pub use planner::{synthesize_static_plan, validate_plan, PlanStats, PlannerOptions, StaticPlan};
pub use render::render_svg;
pub use reuse::{derive_reuse_map, LayerKey, ReuseMap};
pub use sim::{simulate, SimOptions, SimReport};
pub use synth::{synth_trace, Preset, SynthConfig};
