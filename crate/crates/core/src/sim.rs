//! Replay of a trace against a plan.
//!
//! Static requests take their planned address, matched by `(size, p_s)` in
//! plan order. Dynamic requests are placed best-fit into the free part of
//! their key's reusable space. Anything else goes to a caching allocator whose
//! segments live above the pool.

use std::collections::{HashMap, VecDeque};

use serde::Serialize;

use crate::baseline::CachingAllocator;
use crate::error::{Error, Result};
use crate::interval::{Interval, IntervalSet};
use crate::io::{PlanBundle, PlannedBlock};
use crate::model::{PhaseId, Trace};
use crate::reuse::{LayerKey, ReuseMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    /// Place dynamic requests into reusable pool space.
    pub reuse: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { reuse: true }
    }
}

/// Which allocator served a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Static,
    Dynamic,
    Fallback,
    /// Served by the stand-alone baseline allocator.
    Caching,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LogOp {
    Alloc,
    Free,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LogEntry {
    pub ts: u64,
    pub id: u64,
    pub op: LogOp,
    pub size: u64,
    pub addr: u64,
    pub route: Route,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EventLog {
    pub pool_size: u64,
    /// Bytes the caching allocator reserved (it never shrinks, so final = peak).
    pub caching_reserved: u64,
    pub entries: Vec<LogEntry>,
    pub mismatches: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    #[serde(rename = "M_a")]
    pub m_a: u64,
    #[serde(rename = "M_r")]
    pub m_r: u64,
    pub efficiency: f64,
    pub fragmentation: f64,
    pub pool_size: u64,
    pub fallback_reserved: u64,
    pub fallback_count: u64,
    pub fallback_bytes_peak: u64,
    pub reuse_hits: u64,
    pub mismatch_count: u64,
    pub static_hits: u64,
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub report: SimReport,
    pub log: EventLog,
}

/// Free pool addresses plus the intervals handed out from the pool.
#[derive(Debug, Clone)]
pub struct PoolState {
    pub pool_size: u64,
    pub free: IntervalSet,
    pub live: HashMap<u64, Interval>,
}

impl PoolState {
    pub fn new(pool_size: u64) -> Self {
        PoolState {
            pool_size,
            free: Interval::try_new(0, pool_size)
                .map(IntervalSet::single)
                .unwrap_or_default(),
            live: HashMap::new(),
        }
    }

    /// Takes `range` for `id` if every byte of it is free.
    pub fn claim(&mut self, id: u64, range: Interval) -> bool {
        if !self.free.covers(&range) {
            return false;
        }
        self.free.remove(range);
        self.live.insert(id, range);
        true
    }

    pub fn release(&mut self, id: u64) -> Option<Interval> {
        let range = self.live.remove(&id)?;
        self.free.insert(range);
        Some(range)
    }
}

/// Places a dynamic request best-fit inside `free ∩ reusable(key)`.
/// `None` means the caller must fall back.
pub fn dynamic_allocate(
    state: &mut PoolState,
    reuse: &ReuseMap,
    key: &LayerKey,
    id: u64,
    size: u64,
) -> Option<Interval> {
    let entry = reuse.get(key)?;
    let candidates = state.free.intersect(&entry.space);
    let slot = candidates.best_fit(size)?;
    let range = Interval::at(slot.lo, size);
    state.claim(id, range).then_some(range)
}

/// Alloc and free operations in replay order: by timestamp, frees first.
/// Events alive at the horizon are never freed.
pub fn op_order(trace: &Trace) -> Vec<(u64, bool, usize)> {
    let mut ops = Vec::with_capacity(trace.events.len() * 2);
    for (i, e) in trace.events.iter().enumerate() {
        ops.push((e.t_s, true, i));
        if e.t_e < trace.horizon {
            ops.push((e.t_e, false, i));
        }
    }
    ops.sort_unstable();
    ops
}

enum Location {
    Pool,
    Fallback,
}

pub fn simulate(trace: &Trace, bundle: &PlanBundle, opts: SimOptions) -> Result<SimOutcome> {
    let mut ordered: Vec<&PlannedBlock> = bundle.decisions.iter().collect();
    ordered.sort_by_key(|d| (d.t_s, d.id));
    let mut queues: HashMap<(u64, PhaseId), VecDeque<&PlannedBlock>> = HashMap::new();
    for d in ordered {
        queues.entry((d.size, d.p_s)).or_default().push_back(d);
    }

    let mut pool = PoolState::new(bundle.pool_size);
    let mut fallback = CachingAllocator::new(bundle.pool_size);
    let mut where_: HashMap<u64, Location> = HashMap::new();
    let mut log = EventLog {
        pool_size: bundle.pool_size,
        ..Default::default()
    };

    for (ts, is_alloc, idx) in op_order(trace) {
        let e = &trace.events[idx];
        let entry = |addr, op, route| LogEntry {
            ts,
            id: e.id,
            op,
            size: e.size,
            addr,
            route,
        };
        if !is_alloc {
            let (addr, route) = match where_.remove(&e.id) {
                Some(Location::Pool) => {
                    let range = pool
                        .release(e.id)
                        .ok_or_else(|| Error::Simulation(format!("pool lost track of id {}", e.id)))?;
                    (range.lo, if e.dynamic { Route::Dynamic } else { Route::Static })
                }
                Some(Location::Fallback) => (fallback.free(e.id)?, Route::Fallback),
                None => {
                    return Err(Error::Simulation(format!(
                        "free of unknown or already freed id {}",
                        e.id
                    )))
                }
            };
            log.entries.push(entry(addr, LogOp::Free, route));
            continue;
        }
        if where_.contains_key(&e.id) {
            return Err(Error::Simulation(format!("id {} allocated twice", e.id)));
        }

        let placed = if e.dynamic {
            match (opts.reuse, LayerKey::of(e)) {
                (true, Some(key)) => {
                    dynamic_allocate(&mut pool, &bundle.reuse, &key, e.id, e.size).map(|r| (r.lo, Route::Dynamic))
                }
                _ => None,
            }
        } else {
            let queue = queues.get_mut(&(e.size, e.p_s));
            match queue.as_ref().and_then(|q| q.front()).copied() {
                Some(d) => {
                    let range = Interval::at(d.addr, d.size);
                    if pool.claim(e.id, range) {
                        queue.unwrap().pop_front();
                        Some((d.addr, Route::Static))
                    } else if d.id == e.id {
                        return Err(Error::PlannedAddressOccupied { id: e.id, addr: d.addr });
                    } else {
                        // out of step with the plan: serve this one elsewhere
                        log.mismatches += 1;
                        None
                    }
                }
                None => {
                    log.mismatches += 1;
                    None
                }
            }
        };
        let (addr, route) = match placed {
            Some(p) => {
                where_.insert(e.id, Location::Pool);
                p
            }
            None => {
                let addr = fallback.allocate(e.id, e.size)?;
                where_.insert(e.id, Location::Fallback);
                (addr, Route::Fallback)
            }
        };
        log.entries.push(entry(addr, LogOp::Alloc, route));
    }
    log.caching_reserved = fallback.reserved();
    Ok(SimOutcome {
        report: compute_metrics(&log),
        log,
    })
}

/// Derives the report from a complete replay log.
pub fn compute_metrics(log: &EventLog) -> SimReport {
    let (mut live, mut peak) = (0u64, 0u64);
    let (mut fb_live, mut fb_peak) = (0u64, 0u64);
    let (mut fallback_count, mut reuse_hits, mut static_hits) = (0, 0, 0);
    for e in &log.entries {
        match e.op {
            LogOp::Alloc => {
                live += e.size;
                peak = peak.max(live);
                match e.route {
                    Route::Fallback => {
                        fallback_count += 1;
                        fb_live += e.size;
                        fb_peak = fb_peak.max(fb_live);
                    }
                    Route::Dynamic => reuse_hits += 1,
                    Route::Static => static_hits += 1,
                    Route::Caching => {}
                }
            }
            LogOp::Free => {
                live -= e.size;
                if e.route == Route::Fallback {
                    fb_live -= e.size;
                }
            }
        }
    }
    let m_r = log.pool_size + log.caching_reserved;
    let efficiency = if m_r == 0 { 1.0 } else { peak as f64 / m_r as f64 };
    SimReport {
        m_a: peak,
        m_r,
        efficiency,
        fragmentation: 1.0 - efficiency,
        pool_size: log.pool_size,
        fallback_reserved: log.caching_reserved,
        fallback_count,
        fallback_bytes_peak: fb_peak,
        reuse_hits,
        mismatch_count: log.mismatches,
        static_hits,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reuse::ReuseEntry;

    #[test]
    fn dynamic_best_fit_example() {
        let mut state = PoolState::new(100);
        state.claim(900, Interval::new(50, 80));
        assert_eq!(
            state.free,
            IntervalSet::from_intervals([Interval::new(0, 50), Interval::new(80, 100)])
        );
        let key = LayerKey::new("e", "e");
        let mut reuse = ReuseMap::default();
        reuse.entries.insert(
            key.clone(),
            ReuseEntry {
                window: None,
                space: IntervalSet::single(Interval::new(30, 90)),
            },
        );
        // enumeration oracle over every aligned start in the candidate set
        let cands = state.free.intersect(&reuse.entries[&key].space);
        assert_eq!(
            cands,
            IntervalSet::from_intervals([Interval::new(30, 50), Interval::new(80, 90)])
        );
        let oracle = |size: u64| {
            cands
                .iter()
                .filter(|c| c.len() >= size)
                .min_by_key(|c| (c.len(), c.lo))
                .map(|c| c.lo)
        };
        // [80, 90) is only 10 long, so 16 bytes land in [30, 50)
        assert_eq!(oracle(16), Some(30));
        assert_eq!(oracle(8), Some(80));
        let mut s8 = state.clone();
        assert_eq!(
            dynamic_allocate(&mut s8, &reuse, &key, 2, 8),
            Some(Interval::new(80, 88))
        );
        assert_eq!(
            dynamic_allocate(&mut state, &reuse, &key, 1, 16),
            Some(Interval::new(30, 46))
        );
        assert!(!state.free.overlaps(&Interval::new(30, 46)));
    }

    #[test]
    fn dynamic_fallback_cases() {
        let mut state = PoolState::new(100);
        let key = LayerKey::new("e", "e");
        let mut reuse = ReuseMap::default();
        reuse.entries.insert(
            key.clone(),
            ReuseEntry {
                window: None,
                space: IntervalSet::new(),
            },
        );
        assert_eq!(dynamic_allocate(&mut state, &reuse, &key, 1, 16), None);
        reuse.entries.get_mut(&key).unwrap().space = IntervalSet::single(Interval::new(0, 10));
        assert_eq!(dynamic_allocate(&mut state, &reuse, &key, 1, 16), None);
        assert_eq!(
            dynamic_allocate(&mut state, &reuse, &LayerKey::new("x", "y"), 1, 8),
            None
        );
    }

    fn entry(op: LogOp, size: u64, route: Route) -> LogEntry {
        LogEntry {
            ts: 0,
            id: 0,
            op,
            size,
            addr: 0,
            route,
        }
    }

    #[test]
    fn metrics_arithmetic() {
        let log = EventLog {
            pool_size: 100,
            caching_reserved: 0,
            entries: vec![
                entry(LogOp::Alloc, 60, Route::Static),
                entry(LogOp::Alloc, 30, Route::Static),
            ],
            mismatches: 0,
        };
        let r = compute_metrics(&log);
        assert_eq!((r.m_a, r.m_r), (90, 100));
        assert!((r.fragmentation - 0.10).abs() < 1e-12);

        let full = EventLog { pool_size: 90, ..log };
        assert_eq!(compute_metrics(&full).efficiency, 1.0);
        assert_eq!(compute_metrics(&EventLog::default()).efficiency, 1.0);
    }
}
