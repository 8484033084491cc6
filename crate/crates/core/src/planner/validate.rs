use std::collections::BTreeMap;

use serde::Serialize;

use crate::io::PlannedBlock;

/// Outcome of a plan audit. Empty lists mean the plan is valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    /// Id pairs `(earlier, later)` that are live together on overlapping addresses.
    pub conflicts: Vec<(u64, u64)>,
    /// Ids whose range leaves `[0, pool_size)`.
    pub out_of_pool: Vec<u64>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.conflicts.is_empty() && self.out_of_pool.is_empty()
    }
}

/// An address range occupied over a lifespan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub id: u64,
    pub addr: u64,
    pub size: u64,
    pub t_s: u64,
    pub t_e: u64,
}

impl From<&PlannedBlock> for Rect {
    fn from(b: &PlannedBlock) -> Self {
        Rect {
            id: b.id,
            addr: b.addr,
            size: b.size,
            t_s: b.t_s,
            t_e: b.t_e,
        }
    }
}

/// Checks every block against the pool bounds and against each other.
pub fn validate_blocks(pool_size: u64, blocks: &[PlannedBlock]) -> ValidationReport {
    let rects: Vec<Rect> = blocks.iter().map(Rect::from).collect();
    let mut out_of_pool: Vec<u64> = rects
        .iter()
        .filter(|r| r.addr.checked_add(r.size).is_none_or(|end| end > pool_size))
        .map(|r| r.id)
        .collect();
    out_of_pool.sort_unstable();
    ValidationReport {
        conflicts: find_conflicts(&rects),
        out_of_pool,
    }
}

/// All id pairs `(earlier, later)` live together on overlapping addresses.
///
/// Sweeps time in order, keeping live rectangles in an address-ordered index
/// and probing it for every newly started one.
pub fn find_conflicts(rects: &[Rect]) -> Vec<(u64, u64)> {
    let max_size = rects.iter().map(|r| r.size).max().unwrap_or(0);
    // (time, is_start, index): ends sort first at equal times
    let mut points: Vec<(u64, bool, usize)> = Vec::with_capacity(rects.len() * 2);
    for (i, r) in rects.iter().enumerate() {
        points.push((r.t_s, true, i));
        points.push((r.t_e, false, i));
    }
    points.sort_unstable();

    let mut conflicts = Vec::new();
    let mut live: BTreeMap<(u64, usize), u64> = BTreeMap::new();
    for (_, is_start, i) in points {
        let r = &rects[i];
        if !is_start {
            live.remove(&(r.addr, i));
            continue;
        }
        let from = r.addr.saturating_sub(max_size.saturating_sub(1));
        let end = r.addr.saturating_add(r.size);
        for (&(_, j), &other_end) in live.range((from, 0)..(end, 0)) {
            if other_end > r.addr {
                conflicts.push((rects[j].id, r.id));
            }
        }
        live.insert((r.addr, i), end);
    }
    conflicts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blk(id: u64, addr: u64, size: u64, t_s: u64, t_e: u64) -> PlannedBlock {
        PlannedBlock {
            id,
            addr,
            size,
            t_s,
            t_e,
            p_s: crate::model::PhaseId::INIT,
        }
    }

    #[test]
    fn examples() {
        let valid = [blk(1, 0, 64, 0, 5), blk(2, 0, 64, 5, 8), blk(3, 64, 64, 0, 8)];
        assert!(validate_blocks(128, &valid).is_valid());

        let clash = [blk(1, 0, 64, 0, 5), blk(2, 0, 64, 3, 8)];
        assert_eq!(validate_blocks(128, &clash).conflicts, vec![(1, 2)]);

        let adjacent = [blk(1, 0, 64, 0, 5), blk(2, 64, 64, 0, 5)];
        assert!(validate_blocks(128, &adjacent).is_valid());

        let outside = [blk(7, 64, 128, 0, 1)];
        assert_eq!(validate_blocks(128, &outside).out_of_pool, vec![7]);
    }

    proptest::proptest! {
        #[test]
        fn matches_pairwise_oracle(raw in proptest::collection::vec((0u64..10, 1u64..4, 0u64..10, 1u64..6), 0..25)) {
            let blocks: Vec<_> = raw.iter().enumerate()
                .map(|(i, &(a, s, t, d))| blk(i as u64, a * 8, s * 8, t, t + d)).collect();
            let mut expected = 0;
            for (i, x) in blocks.iter().enumerate() {
                for y in &blocks[i + 1..] {
                    let time = x.t_s < y.t_e && y.t_s < x.t_e;
                    let space = x.addr < y.addr + y.size && y.addr < x.addr + x.size;
                    expected += usize::from(time && space);
                }
            }
            proptest::prop_assert_eq!(validate_blocks(1 << 20, &blocks).conflicts.len(), expected);
        }
    }
}
