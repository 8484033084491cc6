//! Online caching-allocator model used as the comparison baseline and as the
//! runtime's fallback path.
//!
//! Free blocks are cached and served best-fit (smallest block that fits,
//! lowest address on ties); a block larger than the request is split. Freed
//! blocks merge with free neighbours of the same segment. On a miss a new
//! segment of `max(2 MiB, next_pow2(size))` is reserved; segments are never
//! returned, so reserved memory only grows.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::model::Trace;
use crate::sim::{compute_metrics, EventLog, LogEntry, LogOp, Route, SimOutcome};

pub const MIN_SEGMENT: u64 = 2 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub base: u64,
    pub size: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Block {
    size: u64,
    segment: usize,
}

#[derive(Debug, Clone, Default)]
pub struct CachingAllocator {
    base: u64,
    segments: Vec<Segment>,
    /// (size, addr) of free blocks, for best-fit lookup.
    free_by_size: BTreeSet<(u64, u64)>,
    /// addr -> free block, for merging.
    free_by_addr: BTreeMap<u64, Block>,
    live: HashMap<u64, (u64, Block)>,
    reserved: u64,
    allocated: u64,
}

pub fn segment_size(size: u64) -> u64 {
    size.checked_next_power_of_two().unwrap_or(size).max(MIN_SEGMENT)
}

impl CachingAllocator {
    /// An allocator whose segments are laid out from `base` upward.
    pub fn new(base: u64) -> Self {
        CachingAllocator {
            base,
            ..Default::default()
        }
    }

    pub fn reserved(&self) -> u64 {
        self.reserved
    }

    pub fn allocated(&self) -> u64 {
        self.allocated
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_live(&self, id: u64) -> bool {
        self.live.contains_key(&id)
    }

    fn take_free(&mut self, addr: u64, block: Block) {
        self.free_by_size.remove(&(block.size, addr));
        self.free_by_addr.remove(&addr);
    }

    fn put_free(&mut self, addr: u64, block: Block) {
        self.free_by_size.insert((block.size, addr));
        self.free_by_addr.insert(addr, block);
    }

    /// Serves `size` bytes for request `id` and returns the address.
    pub fn allocate(&mut self, id: u64, size: u64) -> Result<u64> {
        if size == 0 {
            return Err(Error::Simulation(format!("zero-size request {id}")));
        }
        if self.live.contains_key(&id) {
            return Err(Error::Simulation(format!("request {id} allocated twice")));
        }
        let (addr, block) = match self.free_by_size.range((size, 0)..).next().copied() {
            Some((_, addr)) => {
                let block = self.free_by_addr[&addr];
                self.take_free(addr, block);
                (addr, block)
            }
            None => {
                let seg_size = segment_size(size);
                let base = self.base + self.reserved;
                self.segments.push(Segment { base, size: seg_size });
                self.reserved += seg_size;
                (
                    base,
                    Block {
                        size: seg_size,
                        segment: self.segments.len() - 1,
                    },
                )
            }
        };
        if block.size > size {
            self.put_free(
                addr + size,
                Block {
                    size: block.size - size,
                    segment: block.segment,
                },
            );
        }
        self.live.insert(
            id,
            (
                addr,
                Block {
                    size,
                    segment: block.segment,
                },
            ),
        );
        self.allocated += size;
        Ok(addr)
    }

    /// Returns request `id`'s block to the cache, merging with free neighbours.
    pub fn free(&mut self, id: u64) -> Result<u64> {
        let (mut addr, mut block) = self
            .live
            .remove(&id)
            .ok_or_else(|| Error::Simulation(format!("free of unknown or already freed id {id}")))?;
        self.allocated -= block.size;
        let freed = addr;
        if let Some(next) = self.free_by_addr.get(&(addr + block.size)).copied() {
            if next.segment == block.segment {
                self.take_free(addr + block.size, next);
                block.size += next.size;
            }
        }
        if let Some((&prev_addr, &prev)) = self.free_by_addr.range(..addr).next_back() {
            if prev.segment == block.segment && prev_addr + prev.size == addr {
                self.take_free(prev_addr, prev);
                addr = prev_addr;
                block.size += prev.size;
            }
        }
        self.put_free(addr, block);
        Ok(freed)
    }
}

/// Replays `trace` through a caching allocator alone.
pub fn run_baseline(trace: &Trace) -> Result<SimOutcome> {
    let mut alloc = CachingAllocator::new(0);
    let mut entries = Vec::with_capacity(trace.events.len() * 2);
    for (ts, is_alloc, idx) in crate::sim::op_order(trace) {
        let e = &trace.events[idx];
        if is_alloc {
            let addr = alloc.allocate(e.id, e.size)?;
            entries.push(LogEntry {
                ts,
                id: e.id,
                op: LogOp::Alloc,
                size: e.size,
                addr,
                route: Route::Caching,
            });
        } else {
            let addr = alloc.free(e.id)?;
            entries.push(LogEntry {
                ts,
                id: e.id,
                op: LogOp::Free,
                size: e.size,
                addr,
                route: Route::Caching,
            });
        }
    }
    let log = EventLog {
        pool_size: 0,
        caching_reserved: alloc.reserved(),
        entries,
        mismatches: 0,
    };
    Ok(SimOutcome {
        report: compute_metrics(&log),
        log,
    })
}
