//! Static allocation planning: phase grouping, fusion, size-class layering
//! and global assembly into one conflict-free pool.

mod fusion;
mod group;
mod layers;
mod validate;

use std::collections::BTreeMap;

use serde::Serialize;

pub use fusion::{fusion_sweep, try_fuse, try_fuse_recorded, weighted_tmp, FusionRecord, SweepOutcome};
pub use group::{compute_tmp, group_by_phase, pack_group, HomoPhaseGroup, LocalPlan};
pub use layers::{build_layers_for_size, max_overlap, MemoryLayer, Occupant};
pub use validate::{find_conflicts, validate_blocks, Rect, ValidationReport};

use crate::error::{Error, Result};
use crate::io::PlannedBlock;
use crate::model::{peak_live_bytes, AllocationDecision, MemoryRequestEvent, Trace, DEFAULT_ALIGNMENT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannerOptions {
    pub fusion: bool,
    pub gap_insert: bool,
    pub alignment: u64,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        PlannerOptions {
            fusion: true,
            gap_insert: true,
            alignment: DEFAULT_ALIGNMENT,
        }
    }
}

/// A memory layer together with its base address in the pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlacedLayer {
    pub base: u64,
    pub layer: MemoryLayer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticPlan {
    pub pool_size: u64,
    pub alignment: u64,
    /// Absolute decisions sorted by `(t_s, id)`.
    pub decisions: Vec<AllocationDecision>,
    /// Layers above the persistent block, in stacking order.
    pub layers: Vec<PlacedLayer>,
    pub persistent_size: u64,
}

impl StaticPlan {
    pub fn blocks(&self) -> Vec<PlannedBlock> {
        self.decisions
            .iter()
            .map(|d| PlannedBlock {
                id: d.event.id,
                addr: d.addr,
                size: d.event.size,
                t_s: d.event.t_s,
                t_e: d.event.t_e,
                p_s: d.event.p_s,
            })
            .collect()
    }

    /// Peak live static bytes over pool size (1.0 for an empty plan).
    pub fn efficiency(&self) -> f64 {
        if self.pool_size == 0 {
            return 1.0;
        }
        peak_live_bytes(self.decisions.iter().map(|d| &d.event)) as f64 / self.pool_size as f64
    }
}

pub fn validate_plan(plan: &StaticPlan) -> ValidationReport {
    validate_blocks(plan.pool_size, &plan.blocks())
}

/// Counters describing one planning run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PlanStats {
    pub static_events: usize,
    pub persistent_events: usize,
    pub persistent_bytes: u64,
    pub homophase_groups: usize,
    pub fusions_accepted: usize,
    pub fusions_rejected: usize,
    pub blocks: usize,
    pub residual_events: usize,
    pub size_classes: usize,
    pub gap_insertions: usize,
    pub layers: usize,
    pub pool_size: u64,
    pub lower_bound: u64,
    pub efficiency: f64,
    /// One entry per accepted fusion.
    #[serde(skip)]
    pub fusion_log: Vec<FusionRecord>,
}

/// What occupies a layer slot: a packed multi-event block or one event.
enum Item {
    Block(LocalPlan),
    Event(MemoryRequestEvent),
}

impl Item {
    fn occupant(&self, item: usize) -> Occupant {
        match self {
            Item::Block(p) => Occupant {
                item,
                size: p.height,
                t_s: p.t_s,
                t_e: p.t_e,
                id: p.first_id(),
            },
            Item::Event(e) => Occupant {
                item,
                size: e.size,
                t_s: e.t_s,
                t_e: e.t_e,
                id: e.id,
            },
        }
    }
}

/// Plans every static event of `trace` into a single pool.
pub fn synthesize_static_plan(trace: &Trace, opts: PlannerOptions) -> Result<(StaticPlan, PlanStats)> {
    if opts.alignment == 0 {
        return Err(Error::InvalidConfig("alignment must be positive".into()));
    }
    let mut stats = PlanStats::default();
    let mut persistent: Vec<&MemoryRequestEvent> = Vec::new();
    let mut scoped: Vec<&MemoryRequestEvent> = Vec::new();
    for e in trace.static_events() {
        if e.size == 0 || e.size % opts.alignment != 0 {
            return Err(Error::InvalidTrace(format!(
                "event {} size {} is not a positive multiple of {}",
                e.id, e.size, opts.alignment
            )));
        }
        if e.t_s >= e.t_e {
            return Err(Error::DegenerateLifespan { t_s: e.t_s, t_e: e.t_e });
        }
        if e.t_e >= trace.horizon {
            persistent.push(e);
        } else {
            scoped.push(e);
        }
    }
    stats.static_events = persistent.len() + scoped.len();
    stats.persistent_events = persistent.len();

    let mut decisions: Vec<AllocationDecision> = Vec::with_capacity(stats.static_events);
    persistent.sort_unstable_by_key(|e| (e.t_s, e.id));
    let mut top = 0;
    for e in persistent {
        decisions.push(AllocationDecision {
            event: e.clone(),
            addr: top,
        });
        top += e.size;
    }
    let persistent_size = top;
    stats.persistent_bytes = persistent_size;

    // phase groups, optionally fused
    let positions = trace.phase_positions();
    let groups = group_by_phase(scoped.iter().copied(), &positions);
    stats.homophase_groups = groups.len();
    let mut local: Vec<LocalPlan> = groups.iter().map(pack_group).collect::<Result<_>>()?;
    if opts.fusion {
        let pos = |p: &_| positions.get(p).copied().unwrap_or(usize::MAX);
        let outcome = fusion_sweep(local, pos);
        for r in &outcome.accepted {
            if r.fused_reserved >= r.larger_reserved + r.smaller_reserved || r.fused_tmp <= r.weighted_tmp {
                return Err(Error::Invariant("accepted fusion does not improve TMP".into()));
            }
        }
        stats.fusions_accepted = outcome.accepted.len();
        stats.fusions_rejected = outcome.rejected;
        stats.fusion_log = outcome.accepted;
        local = outcome.plans;
    }

    // tight multi-member plans stay blocks; everything else is laid out per event
    let mut items: Vec<Item> = Vec::new();
    for plan in local {
        if plan.decisions.len() >= 2 && plan.is_tight() {
            stats.blocks += 1;
            items.push(Item::Block(plan));
        } else {
            stats.residual_events += plan.decisions.len();
            items.extend(plan.decisions.into_iter().map(|d| Item::Event(d.event)));
        }
    }

    let mut by_size: BTreeMap<u64, Vec<Occupant>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        let occ = item.occupant(i);
        by_size.entry(occ.size).or_default().push(occ);
    }
    stats.size_classes = by_size.len();

    let mut built: Vec<MemoryLayer> = Vec::new();
    for (size, mut members) in by_size.into_iter().rev() {
        members.sort_unstable_by_key(|o| (o.t_s, o.id));
        let remainder = if opts.gap_insert && !built.is_empty() {
            let mut candidates: Vec<usize> = (0..built.len()).collect();
            candidates.sort_by_key(|&i| (built[i].size, i));
            let mut rest = Vec::new();
            for occ in members {
                match pick_gap(&built, &candidates, &occ) {
                    Some(idx) => {
                        built[idx].insert(occ);
                        stats.gap_insertions += 1;
                    }
                    None => rest.push(occ),
                }
            }
            rest
        } else {
            members
        };
        built.extend(build_layers_for_size(size, &remainder));
    }
    stats.layers = built.len();

    let mut layers = Vec::with_capacity(built.len());
    for layer in built {
        let base = top;
        for occ in &layer.occupants {
            match &items[occ.item] {
                Item::Block(plan) => decisions.extend(plan.decisions.iter().map(|d| AllocationDecision {
                    event: d.event.clone(),
                    addr: base + d.addr,
                })),
                Item::Event(e) => decisions.push(AllocationDecision {
                    event: e.clone(),
                    addr: base,
                }),
            }
        }
        top += layer.size;
        layers.push(PlacedLayer { base, layer });
    }
    decisions.sort_unstable_by_key(|d| (d.event.t_s, d.event.id));

    let plan = StaticPlan {
        pool_size: top,
        alignment: opts.alignment,
        decisions,
        layers,
        persistent_size,
    };
    stats.pool_size = plan.pool_size;
    stats.lower_bound = peak_live_bytes(plan.decisions.iter().map(|d| &d.event));
    stats.efficiency = plan.efficiency();
    log::debug!(
        "planned {} static events into {} bytes ({} layers, {} fusions)",
        stats.static_events,
        stats.pool_size,
        stats.layers,
        stats.fusions_accepted
    );
    Ok((plan, stats))
}

/// Chooses a larger layer whose timeline has room for `occ`: the smallest
/// such size wins, then the layer whose preceding occupant ends closest
/// before `occ.t_s`, then the lowest index.
fn pick_gap(built: &[MemoryLayer], by_size: &[usize], occ: &Occupant) -> Option<usize> {
    let mut best: Option<(u64, Option<u64>, usize)> = None;
    for &idx in by_size {
        let layer = &built[idx];
        if layer.size <= occ.size {
            continue;
        }
        if let Some((size, _, _)) = best {
            if layer.size > size {
                break;
            }
        }
        if let Some(prev_end) = layer.gap_for(occ.t_s, occ.t_e) {
            let better = match best {
                None => true,
                Some((_, best_end, _)) => prev_end > best_end,
            };
            if better {
                best = Some((layer.size, prev_end, idx));
            }
        }
    }
    best.map(|(_, _, idx)| idx)
}
