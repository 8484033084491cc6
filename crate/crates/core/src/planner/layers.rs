//! Memory layers: fixed-height address bands time-shared by occupants whose
//! lifespans do not overlap.

use std::cmp::Reverse;
use std::collections::BTreeSet;

use serde::Serialize;

use crate::interval::{Interval, IntervalSet};

/// Something that occupies a layer: a packed block or a single event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Occupant {
    /// Index into the planner's item table.
    pub item: usize,
    pub size: u64,
    pub t_s: u64,
    pub t_e: u64,
    /// Tie-break key (smallest event id of the item).
    pub id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MemoryLayer {
    pub size: u64,
    /// Sorted by `t_s`, pairwise disjoint in time.
    pub occupants: Vec<Occupant>,
    pub end: u64,
}

impl MemoryLayer {
    fn new(size: u64) -> Self {
        MemoryLayer {
            size,
            occupants: Vec::new(),
            end: 0,
        }
    }

    fn append(&mut self, occ: Occupant) {
        debug_assert!(self.occupants.last().is_none_or(|o| o.t_e <= occ.t_s));
        self.end = occ.t_e;
        self.occupants.push(occ);
    }

    /// End of the occupant that finishes right before `t_s`, if the
    /// interval `[t_s, t_e)` is free in this layer.
    pub fn gap_for(&self, t_s: u64, t_e: u64) -> Option<Option<u64>> {
        let idx = self.occupants.partition_point(|o| o.t_s < t_s);
        if let Some(next) = self.occupants.get(idx) {
            if next.t_s < t_e {
                return None;
            }
        }
        match idx.checked_sub(1).map(|i| &self.occupants[i]) {
            Some(prev) if prev.t_e > t_s => None,
            Some(prev) => Some(Some(prev.t_e)),
            None => Some(None),
        }
    }

    /// Inserts an occupant into a gap previously found with [`gap_for`](Self::gap_for).
    pub fn insert(&mut self, occ: Occupant) {
        let idx = self.occupants.partition_point(|o| o.t_s < occ.t_s);
        self.occupants.insert(idx, occ);
        self.end = self.end.max(occ.t_e);
    }

    /// Unoccupied time spans within `[0, horizon)`.
    pub fn gaps(&self, horizon: u64) -> IntervalSet {
        let mut free = IntervalSet::new();
        if horizon > 0 {
            free.insert(Interval::new(0, horizon));
        }
        for o in &self.occupants {
            free.remove(Interval::new(o.t_s, o.t_e));
        }
        free
    }

    pub fn is_disjoint(&self) -> bool {
        self.occupants.windows(2).all(|w| w[0].t_e <= w[1].t_s)
    }
}

/// Builds layers for same-size items: each item, taken in `(t_s, id)`
/// order, joins the layer whose last occupant ends latest but no later than
/// the item starts (lifespans are half-open); otherwise it opens a new layer.
pub fn build_layers_for_size(size: u64, items: &[Occupant]) -> Vec<MemoryLayer> {
    let mut sorted: Vec<Occupant> = items.to_vec();
    sorted.sort_unstable_by_key(|o| (o.t_s, o.id));
    let mut layers: Vec<MemoryLayer> = Vec::new();
    // (end, Reverse(layer)) so that equal ends resolve to the lowest layer index
    let mut ends: BTreeSet<(u64, Reverse<usize>)> = BTreeSet::new();
    for occ in sorted {
        let found = ends.range(..=(occ.t_s, Reverse(0))).next_back().copied();
        let idx = match found {
            Some(key @ (_, Reverse(idx))) => {
                ends.remove(&key);
                idx
            }
            None => {
                layers.push(MemoryLayer::new(size));
                layers.len() - 1
            }
        };
        layers[idx].append(occ);
        ends.insert((occ.t_e, Reverse(idx)));
    }
    layers
}

/// Max number of simultaneously live items (sweep line).
pub fn max_overlap(items: &[Occupant]) -> usize {
    let mut points: Vec<(u64, i32)> = items.iter().flat_map(|o| [(o.t_s, 1), (o.t_e, -1)]).collect();
    // ends sort before starts at equal times
    points.sort_unstable();
    let (mut live, mut peak) = (0i32, 0i32);
    for (_, d) in points {
        live += d;
        peak = peak.max(live);
    }
    peak as usize
}
