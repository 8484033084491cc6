//! Dynamic reusable space: for each group of dynamic requests sharing a
//! (malloc layer, free layer) pair, the pool addresses that no static
//! decision touches while that group can be alive.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::interval::{Interval, IntervalSet};
use crate::io::PlannedBlock;
use crate::model::{LayerSpan, MemoryRequestEvent, Trace};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LayerKey {
    pub l_s: String,
    pub l_e: String,
}

impl LayerKey {
    pub fn new(l_s: impl Into<String>, l_e: impl Into<String>) -> Self {
        LayerKey {
            l_s: l_s.into(),
            l_e: l_e.into(),
        }
    }

    pub fn of(event: &MemoryRequestEvent) -> Option<Self> {
        Some(LayerKey::new(event.l_s.clone()?, event.l_e.clone()?))
    }
}

impl fmt::Display for LayerKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.l_s, self.l_e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReuseEntry {
    /// Temporal range `[l_s.start, l_e.end)`; absent when loaded from a plan file.
    pub window: Option<(u64, u64)>,
    pub space: IntervalSet,
}

/// Keys with no reusable space are kept with an empty set, so "no reuse
/// possible" stays distinguishable from "unknown key".
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReuseMap {
    pub entries: BTreeMap<LayerKey, ReuseEntry>,
}

impl ReuseMap {
    pub fn get(&self, key: &LayerKey) -> Option<&ReuseEntry> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Partitions dynamic events by their (l_s, l_e) pair.
pub fn group_dynamic<'a, I>(events: I) -> Result<BTreeMap<LayerKey, Vec<&'a MemoryRequestEvent>>>
where
    I: IntoIterator<Item = &'a MemoryRequestEvent>,
{
    let mut groups: BTreeMap<LayerKey, Vec<&MemoryRequestEvent>> = BTreeMap::new();
    for e in events {
        let key =
            LayerKey::of(e).ok_or_else(|| Error::InvalidTrace(format!("dynamic event {} missing layer", e.id)))?;
        groups.entry(key).or_default().push(e);
    }
    Ok(groups)
}

/// Full address range `[min a, max(a + s))` spanned by the plan.
pub fn plan_extent(blocks: &[PlannedBlock]) -> IntervalSet {
    let lo = blocks.iter().map(|b| b.addr).min();
    let hi = blocks.iter().map(|b| b.addr + b.size).max();
    match (lo, hi) {
        (Some(lo), Some(hi)) if hi > lo => IntervalSet::single(Interval::new(lo, hi)),
        _ => IntervalSet::new(),
    }
}

pub fn temporal_range(key: &LayerKey, layer_schedule: &[LayerSpan]) -> Result<(u64, u64)> {
    let find = |name: &str| {
        layer_schedule
            .iter()
            .find(|l| l.name == name)
            .ok_or_else(|| Error::UnknownLayer(name.to_string()))
    };
    let a = find(&key.l_s)?;
    let b = find(&key.l_e)?;
    if a.start >= b.end {
        return Err(Error::InvalidTrace(format!(
            "layer {} starts after {} ends",
            a.name, b.name
        )));
    }
    Ok((a.start, b.end))
}

/// Addresses idle in the static plan during `window`.
pub fn reusable_space_in_window(blocks: &[PlannedBlock], window: (u64, u64)) -> IntervalSet {
    let (start, end) = window;
    let occupied: IntervalSet = blocks
        .iter()
        .filter(|b| b.t_s < end && start < b.t_e)
        .map(|b| Interval::at(b.addr, b.size))
        .collect();
    plan_extent(blocks).subtract(&occupied)
}

/// Computes the temporal range of `key` and its reusable space.
pub fn compute_reusable_space(
    blocks: &[PlannedBlock],
    key: &LayerKey,
    layer_schedule: &[LayerSpan],
) -> Result<((u64, u64), IntervalSet)> {
    let window = temporal_range(key, layer_schedule)?;
    Ok((window, reusable_space_in_window(blocks, window)))
}

/// Derives the reuse map for every dynamic group of `trace`.
pub fn derive_reuse_map(blocks: &[PlannedBlock], trace: &Trace) -> Result<ReuseMap> {
    let groups = group_dynamic(trace.dynamic_events())?;
    let extent = plan_extent(blocks);
    let mut by_start: Vec<&PlannedBlock> = blocks.iter().collect();
    by_start.sort_unstable_by_key(|b| (b.t_s, b.id));

    let mut entries = BTreeMap::new();
    for key in groups.into_keys() {
        let window @ (start, end) = temporal_range(&key, &trace.layer_schedule)?;
        let prefix = by_start.partition_point(|b| b.t_s < end);
        let occupied: IntervalSet = by_start[..prefix]
            .iter()
            .filter(|b| b.t_e > start)
            .map(|b| Interval::at(b.addr, b.size))
            .collect();
        entries.insert(
            key,
            ReuseEntry {
                window: Some(window),
                space: extent.subtract(&occupied),
            },
        );
    }
    Ok(ReuseMap { entries })
}
