//! Domain types shared by every stage of the pipeline.
//!
//! Timestamps are logical: the index of a record in the profiler stream.
//! Lifespans are half-open `[t_s, t_e)`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::Interval;

pub const DEFAULT_ALIGNMENT: u64 = 512;

pub fn align_up(value: u64, alignment: u64) -> u64 {
    debug_assert!(alignment > 0);
    value.div_ceil(alignment) * alignment
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PhaseKind {
    Init,
    Forward,
    Backward,
    OptimizerStep,
}

/// One computation phase of a training iteration.
///
/// The derived `Ord` is only a stable key order. Iteration order comes from
/// the trace's phase schedule, see [`Trace::phase_positions`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhaseId {
    pub kind: PhaseKind,
    pub microbatch: u32,
    pub chunk: u32,
}

impl PhaseId {
    pub const INIT: PhaseId = PhaseId {
        kind: PhaseKind::Init,
        microbatch: 0,
        chunk: 0,
    };
    pub const OPT: PhaseId = PhaseId {
        kind: PhaseKind::OptimizerStep,
        microbatch: 0,
        chunk: 0,
    };

    pub fn forward(microbatch: u32, chunk: u32) -> Self {
        PhaseId {
            kind: PhaseKind::Forward,
            microbatch,
            chunk,
        }
    }

    pub fn backward(microbatch: u32, chunk: u32) -> Self {
        PhaseId {
            kind: PhaseKind::Backward,
            microbatch,
            chunk,
        }
    }
}

impl fmt::Display for PhaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.kind {
            PhaseKind::Init => return f.write_str("init"),
            PhaseKind::OptimizerStep => return f.write_str("opt"),
            PhaseKind::Forward => 'F',
            PhaseKind::Backward => 'B',
        };
        if self.chunk == 0 {
            write!(f, "{tag}:{}", self.microbatch)
        } else {
            write!(f, "{tag}:{}.{}", self.microbatch, self.chunk)
        }
    }
}

impl FromStr for PhaseId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "init" => return Ok(PhaseId::INIT),
            "opt" => return Ok(PhaseId::OPT),
            _ => {}
        }
        let bad = || format!("bad phase tag {s:?}");
        let (kind, rest) = match s.split_once(':') {
            Some(("F", rest)) => (PhaseKind::Forward, rest),
            Some(("B", rest)) => (PhaseKind::Backward, rest),
            _ => return Err(bad()),
        };
        let (mb, chunk) = match rest.split_once('.') {
            Some((mb, chunk)) => (mb, Some(chunk)),
            None => (rest, None),
        };
        let digits = |t: &str| -> Result<u32, String> {
            if t.is_empty() || !t.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            t.parse().map_err(|_| bad())
        };
        Ok(PhaseId {
            kind,
            microbatch: digits(mb)?,
            chunk: chunk.map(digits).transpose()?.unwrap_or(0),
        })
    }
}

impl Serialize for PhaseId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PhaseId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A paired alloc/free record.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MemoryRequestEvent {
    pub id: u64,
    pub size: u64,
    pub t_s: u64,
    pub t_e: u64,
    pub p_s: PhaseId,
    pub p_e: PhaseId,
    pub dynamic: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_s: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_e: Option<String>,
}

impl MemoryRequestEvent {
    pub fn lifespan(&self) -> (u64, u64) {
        (self.t_s, self.t_e)
    }

    pub fn live_at(&self, t: u64) -> bool {
        self.t_s <= t && t < self.t_e
    }

    pub fn overlaps_in_time(&self, t_s: u64, t_e: u64) -> bool {
        self.t_s < t_e && t_s < self.t_e
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhaseSpan {
    pub phase: PhaseId,
    pub start: u64,
    pub end: u64,
}

/// Execution span of one dynamic-layer instance.
///
/// Names are instance-qualified (`<module>@<phase>`), so the same module run
/// for different microbatches yields distinct entries.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpan {
    pub name: String,
    pub start: u64,
    pub end: u64,
}

pub fn layer_instance_name(module: &str, phase: PhaseId) -> String {
    format!("{module}@{phase}")
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub horizon: u64,
    pub events: Vec<MemoryRequestEvent>,
    pub phase_schedule: Vec<PhaseSpan>,
    pub layer_schedule: Vec<LayerSpan>,
}

impl Trace {
    pub fn static_events(&self) -> impl Iterator<Item = &MemoryRequestEvent> {
        self.events.iter().filter(|e| !e.dynamic)
    }

    pub fn dynamic_events(&self) -> impl Iterator<Item = &MemoryRequestEvent> {
        self.events.iter().filter(|e| e.dynamic)
    }

    /// Position of each phase in iteration order.
    pub fn phase_positions(&self) -> HashMap<PhaseId, usize> {
        self.phase_schedule
            .iter()
            .enumerate()
            .map(|(i, span)| (span.phase, i))
            .collect()
    }

    /// Phase whose span contains `ts`.
    pub fn phase_at(&self, ts: u64) -> Option<PhaseId> {
        let idx = self.phase_schedule.partition_point(|p| p.end <= ts);
        self.phase_schedule.get(idx).filter(|p| p.start <= ts).map(|p| p.phase)
    }

    pub fn last_phase(&self) -> Option<PhaseId> {
        self.phase_schedule.last().map(|p| p.phase)
    }

    pub fn layer_span(&self, name: &str) -> Option<&LayerSpan> {
        self.layer_schedule.iter().find(|l| l.name == name)
    }

    /// Checks every structural invariant of a trace.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidTrace(m));
        let mut prev_end = 0;
        for (i, span) in self.phase_schedule.iter().enumerate() {
            if span.start >= span.end || span.start < prev_end || span.end > self.horizon {
                return fail(format!(
                    "phase {} has bad span [{}, {})",
                    span.phase, span.start, span.end
                ));
            }
            if i > 0 && self.phase_schedule[..i].iter().any(|p| p.phase == span.phase) {
                return fail(format!("phase {} appears twice in schedule", span.phase));
            }
            prev_end = span.end;
        }
        let positions = self.phase_positions();
        let layers: HashSet<&str> = self.layer_schedule.iter().map(|l| l.name.as_str()).collect();
        let mut ids = HashSet::with_capacity(self.events.len());
        for e in &self.events {
            if !ids.insert(e.id) {
                return fail(format!("duplicate event id {}", e.id));
            }
            if e.size == 0 {
                return fail(format!("event {} has zero size", e.id));
            }
            if e.t_s >= e.t_e || e.t_e > self.horizon {
                return fail(format!("event {} has bad lifespan [{}, {})", e.id, e.t_s, e.t_e));
            }
            if self.phase_at(e.t_s) != Some(e.p_s) {
                return fail(format!("event {} alloc phase {} does not match schedule", e.id, e.p_s));
            }
            let free_phase = if e.t_e == self.horizon {
                self.last_phase()
            } else {
                self.phase_at(e.t_e)
            };
            if free_phase != Some(e.p_e) {
                return fail(format!("event {} free phase {} does not match schedule", e.id, e.p_e));
            }
            if positions[&e.p_s] > positions[&e.p_e] {
                return fail(format!("event {} frees before it allocates in phase order", e.id));
            }
            if e.dynamic {
                match (&e.l_s, &e.l_e) {
                    (Some(a), Some(b)) => {
                        for l in [a, b] {
                            if !layers.contains(l.as_str()) {
                                return fail(format!("event {} references unknown layer {l:?}", e.id));
                            }
                        }
                    }
                    _ => return fail(format!("dynamic event {} missing layer", e.id)),
                }
            } else if e.l_s.is_some() || e.l_e.is_some() {
                return fail(format!("static event {} carries layer names", e.id));
            }
        }
        Ok(())
    }
}

/// An event together with its planned base address.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AllocationDecision {
    #[serde(flatten)]
    pub event: MemoryRequestEvent,
    pub addr: u64,
}

impl AllocationDecision {
    pub fn range(&self) -> Interval {
        Interval::at(self.addr, self.event.size)
    }

    pub fn end_addr(&self) -> u64 {
        self.addr + self.event.size
    }
}

/// Peak of simultaneously live bytes over the given events.
pub fn peak_live_bytes<'a, I>(events: I) -> u64
where
    I: IntoIterator<Item = &'a MemoryRequestEvent>,
{
    let mut deltas: Vec<(u64, bool, u64)> = Vec::new();
    for e in events {
        // frees sort before allocs at the same timestamp (half-open lifespans)
        deltas.push((e.t_s, true, e.size));
        deltas.push((e.t_e, false, e.size));
    }
    deltas.sort_unstable();
    let (mut live, mut peak) = (0u64, 0u64);
    for (_, is_alloc, size) in deltas {
        if is_alloc {
            live += size;
            peak = peak.max(live);
        } else {
            live -= size;
        }
    }
    peak
}

/// Max over time of the bytes live in `trace`; the allocated-memory figure
/// no conflict-free placement can beat.
pub fn clique_lower_bound(trace: &Trace) -> u64 {
    peak_live_bytes(&trace.events)
}
