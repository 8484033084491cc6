use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::model::{peak_live_bytes, AllocationDecision, MemoryRequestEvent, PhaseId};

/// Static events sharing one (allocation phase, free phase) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HomoPhaseGroup {
    pub key: (PhaseId, PhaseId),
    pub members: Vec<MemoryRequestEvent>,
}

/// Partitions static events by `(p_s, p_e)`.
///
/// Groups come out in schedule order of their key (per `positions`); members
/// are sorted by `(t_s, id)`.
pub fn group_by_phase<'a, I>(events: I, positions: &HashMap<PhaseId, usize>) -> Vec<HomoPhaseGroup>
where
    I: IntoIterator<Item = &'a MemoryRequestEvent>,
{
    let pos = |p: &PhaseId| positions.get(p).copied().unwrap_or(usize::MAX);
    let mut groups: BTreeMap<(usize, usize, PhaseId, PhaseId), Vec<MemoryRequestEvent>> = BTreeMap::new();
    for e in events {
        groups
            .entry((pos(&e.p_s), pos(&e.p_e), e.p_s, e.p_e))
            .or_default()
            .push(e.clone());
    }
    groups
        .into_iter()
        .map(|((_, _, p_s, p_e), mut members)| {
            members.sort_unstable_by_key(|m| (m.t_s, m.id));
            HomoPhaseGroup {
                key: (p_s, p_e),
                members,
            }
        })
        .collect()
}

/// A packed group with group-relative addresses.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPlan {
    pub decisions: Vec<AllocationDecision>,
    pub height: u64,
    pub t_s: u64,
    pub t_e: u64,
    pub start_phase: PhaseId,
    pub end_phase: PhaseId,
    pub tmp: f64,
}

impl LocalPlan {
    /// Builds a plan from already-placed decisions, deriving bounds and TMP.
    pub fn from_decisions(
        mut decisions: Vec<AllocationDecision>,
        start_phase: PhaseId,
        end_phase: PhaseId,
    ) -> Result<Self> {
        decisions.sort_unstable_by_key(|d| (d.event.t_s, d.event.id));
        let height = decisions.iter().map(AllocationDecision::end_addr).max().unwrap_or(0);
        let t_s = decisions.iter().map(|d| d.event.t_s).min().unwrap_or(0);
        let t_e = decisions.iter().map(|d| d.event.t_e).max().unwrap_or(0);
        let mut plan = LocalPlan {
            decisions,
            height,
            t_s,
            t_e,
            start_phase,
            end_phase,
            tmp: 0.0,
        };
        plan.tmp = compute_tmp(&plan)?;
        Ok(plan)
    }

    pub fn empty(phase: PhaseId) -> Self {
        LocalPlan {
            decisions: Vec::new(),
            height: 0,
            t_s: 0,
            t_e: 0,
            start_phase: phase,
            end_phase: phase,
            tmp: 0.0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    pub fn duration(&self) -> u64 {
        self.t_e - self.t_s
    }

    /// Σ size × lifetime over the members.
    pub fn used_space_time(&self) -> u128 {
        self.decisions
            .iter()
            .map(|d| d.event.size as u128 * (d.event.t_e - d.event.t_s) as u128)
            .sum()
    }

    /// height × group duration.
    pub fn reserved_space_time(&self) -> u128 {
        self.height as u128 * self.duration() as u128
    }

    /// True when the block's height equals the bytes live at its busiest
    /// instant, i.e. packing it as one rectangle wastes no address at peak.
    pub fn is_tight(&self) -> bool {
        peak_live_bytes(self.decisions.iter().map(|d| &d.event)) == self.height
    }

    pub fn first_id(&self) -> u64 {
        self.decisions.iter().map(|d| d.event.id).min().unwrap_or(u64::MAX)
    }
}

/// Stacks members contiguously in allocation order.
pub fn pack_group(group: &HomoPhaseGroup) -> Result<LocalPlan> {
    if group.members.is_empty() {
        return Err(Error::Invariant("cannot pack an empty group".into()));
    }
    let mut members: Vec<&MemoryRequestEvent> = group.members.iter().collect();
    members.sort_unstable_by_key(|m| (m.t_s, m.id));
    let mut addr = 0;
    let decisions = members
        .into_iter()
        .map(|m| {
            let d = AllocationDecision { event: m.clone(), addr };
            addr += m.size;
            d
        })
        .collect();
    LocalPlan::from_decisions(decisions, group.key.0, group.key.1)
}

/// Time-memory product: used space-time over reserved space-time.
pub fn compute_tmp(plan: &LocalPlan) -> Result<f64> {
    if plan.t_e <= plan.t_s || plan.height == 0 {
        return Err(Error::DegenerateLifespan {
            t_s: plan.t_s,
            t_e: plan.t_e,
        });
    }
    Ok(plan.used_space_time() as f64 / plan.reserved_space_time() as f64)
}
